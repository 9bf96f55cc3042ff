//! Safe reinforcement learning: Lagrangian PPO with dual-advantage GAE, the
//! baseline agents and the two-timescale training loop.

mod agent;
mod dqn;
mod gae;
mod pg;
mod ppo;
mod train;

use std::fmt;
use std::str::FromStr;

pub use agent::{Agent, Decision, Episode, Transition, UpdateStats};
pub use dqn::DqnAgent;
pub use gae::{clipped_surrogate, combined_advantage, compute_gae, discounted_sum, lagrangian_update, normalize};
pub use pg::{ActorCriticAgent, ReinforceAgent};
pub use ppo::{PenaltyScale, PpoAgent, PpoVariant};
pub use train::{
    episode_seed, eval_seed, evaluate, make_env, run_episode, train_agent, train_method, train_method_with,
    CurveRow, EpisodeRun, EpochReport, EvalOutcome, Policy, TrainOutcome,
};

use crate::error::Error;
use crate::scenario::TrainConfig;

const STREAM_AGENT_INIT: u64 = 41;
const STREAM_AGENT_SAMPLE: u64 = 42;

/// Every recommendation method the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    OpSrl,
    PpoLag,
    Ppo,
    PpoPenalty,
    Dqn,
    Reinforce,
    ActorCritic,
    Greedy,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::OpSrl,
        Method::PpoLag,
        Method::Ppo,
        Method::PpoPenalty,
        Method::Dqn,
        Method::Reinforce,
        Method::ActorCritic,
        Method::Greedy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OpSrl => "opsrl",
            Method::PpoLag => "ppolag",
            Method::Ppo => "ppo",
            Method::PpoPenalty => "ppopenalty",
            Method::Dqn => "dqn",
            Method::Reinforce => "reinforce",
            Method::ActorCritic => "actorcritic",
            Method::Greedy => "greedy",
        }
    }

    /// Untrained agent for this method; `None` for the rule-based one.
    pub fn build_agent(self, obs_dim: usize, num_actions: usize, cfg: &TrainConfig, seed: u64) -> Option<Box<dyn Agent>> {
        let agent: Box<dyn Agent> = match self {
            Method::OpSrl | Method::PpoLag => {
                Box::new(PpoAgent::new(PpoVariant::Lagrangian, obs_dim, num_actions, cfg, seed))
            }
            Method::Ppo => Box::new(PpoAgent::new(PpoVariant::RewardOnly, obs_dim, num_actions, cfg, seed)),
            Method::PpoPenalty => Box::new(PpoAgent::new(PpoVariant::Penalty, obs_dim, num_actions, cfg, seed)),
            Method::Dqn => Box::new(DqnAgent::new(obs_dim, num_actions, cfg, seed)),
            Method::Reinforce => Box::new(ReinforceAgent::new(obs_dim, num_actions, cfg, seed)),
            Method::ActorCritic => Box::new(ActorCriticAgent::new(obs_dim, num_actions, cfg, seed)),
            Method::Greedy => return None,
        };
        Some(agent)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl serde::Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(
                    "method",
                    format!(
                        "unknown method {s:?}; expected one of {}",
                        Method::ALL.map(Method::as_str).join(", ")
                    ),
                )
            })
    }
}
