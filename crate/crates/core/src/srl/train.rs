use std::sync::Arc;
use std::time::Instant;

use super::agent::{Agent, Episode, Transition, UpdateStats};
use super::gae::discounted_sum;
use super::Method;
use crate::env::{ChargingEnv, Environment, EpisodeMetrics};
use crate::error::{Error, Result};
use crate::predictor::{AugmentedEnv, DemandPredictor};
use crate::scenario::{Scenario, TrainConfig};

/// Seed of the `episode`-th training episode of a run.
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    run_seed.wrapping_mul(1_000_003).wrapping_add(episode)
}

/// Seed of the evaluation episode of a run; disjoint from training seeds
/// for any realistic run length.
pub fn eval_seed(run_seed: u64) -> u64 {
    run_seed.wrapping_mul(1_000_003).wrapping_add(1 << 40)
}

/// Who picks the actions.
pub enum Policy<'a> {
    Agent(&'a mut dyn Agent),
    /// The environment's rule-based action.
    Greedy,
}

/// An episode together with the wall-clock time spent choosing actions.
#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub episode: Episode,
    pub decision_s: f64,
}

/// Plays one episode. With `learn` set, every transition is passed to the
/// agent's `observe` hook.
pub fn run_episode<E: Environment + ?Sized>(
    env: &mut E,
    mut policy: Policy<'_>,
    seed: u64,
    explore: bool,
    learn: bool,
    gamma: f64,
) -> Result<EpisodeRun> {
    let mut obs = env.reset(seed)?;
    let mut transitions = Vec::new();
    let mut decision_s = 0.0;
    loop {
        let start = Instant::now();
        let decision = match &mut policy {
            Policy::Agent(a) => a.act(&obs, explore)?,
            Policy::Greedy => {
                let action = env
                    .greedy_action()
                    .ok_or_else(|| Error::Simulation("environment has no greedy action".into()))?;
                super::Decision {
                    action,
                    log_prob: 0.0,
                    value_r: 0.0,
                    value_c: 0.0,
                }
            }
        };
        decision_s += start.elapsed().as_secs_f64();
        let step = env.step(decision.action)?;
        let tr = Transition {
            obs: std::mem::take(&mut obs),
            action: decision.action,
            log_prob: decision.log_prob,
            reward: step.reward,
            cost: step.cost,
            value_r: decision.value_r,
            value_c: decision.value_c,
            next_obs: step.observation,
            done: step.done,
        };
        if learn {
            if let Policy::Agent(a) = &mut policy {
                a.observe(&tr)?;
            }
        }
        obs = tr.next_obs.clone();
        transitions.push(tr);
        if step.done {
            break;
        }
    }
    let costs: Vec<f64> = transitions.iter().map(|t| t.cost).collect();
    Ok(EpisodeRun {
        episode: Episode {
            seed,
            reward_sum: transitions.iter().map(|t| t.reward).sum(),
            cost_sum: costs.iter().sum(),
            discounted_cost: discounted_sum(&costs, gamma),
            metrics: env.completed_metrics(),
            transitions,
        },
        decision_s,
    })
}

/// Per-epoch summary of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_cost: f64,
    /// Mean episode metrics, `None` when the environment reports none.
    pub mean_ttt_s: Option<f64>,
    pub mean_cvv: Option<f64>,
    pub mean_wct_s: Option<f64>,
    /// How often each action was chosen during the epoch.
    pub action_counts: Vec<usize>,
    pub stats: UpdateStats,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn summarize(epoch: usize, episodes: &[Episode], num_actions: usize, stats: UpdateStats) -> EpochReport {
    let mut action_counts = vec![0; num_actions];
    for t in episodes.iter().flat_map(|e| &e.transitions) {
        if let Some(c) = action_counts.get_mut(t.action) {
            *c += 1;
        }
    }
    let metrics: Vec<&EpisodeMetrics> = episodes.iter().filter_map(|e| e.metrics.as_ref()).collect();
    EpochReport {
        epoch,
        mean_reward: mean(episodes.iter().map(|e| e.reward_sum)).unwrap_or(0.0),
        mean_cost: mean(episodes.iter().map(|e| e.cost_sum)).unwrap_or(0.0),
        mean_ttt_s: mean(metrics.iter().map(|m| m.ttt_s as f64)),
        mean_cvv: mean(metrics.iter().map(|m| m.cvv)),
        mean_wct_s: mean(metrics.iter().filter(|m| m.wct_defined).map(|m| m.wct_s)),
        action_counts,
        stats,
    }
}

/// Collects `episodes_per_epoch` episodes per epoch and updates the agent
/// after each epoch. `on_epoch` sees the report and the environment.
pub fn train_agent<E: Environment>(
    env: &mut E,
    agent: &mut dyn Agent,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochReport, &E) -> Result<()>,
) -> Result<Vec<EpochReport>> {
    let per_epoch = cfg.episodes_per_epoch.max(1);
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let ctx = |e: Error| e.context(format!("seed {seed}, epoch {epoch}"));
        let mut episodes = Vec::with_capacity(per_epoch);
        for i in 0..per_epoch {
            let s = episode_seed(seed, (epoch * per_epoch + i) as u64);
            let run = run_episode(env, Policy::Agent(&mut *agent), s, true, true, cfg.gamma).map_err(ctx)?;
            episodes.push(run.episode);
        }
        let stats = agent.update(&episodes).map_err(ctx)?;
        let report = summarize(epoch, &episodes, env.num_actions(), stats);
        on_epoch(&report, env).map_err(ctx)?;
        reports.push(report);
    }
    Ok(reports)
}

/// One row of a training curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub mean_ttt_s: f64,
    pub mean_cvv: f64,
    pub mean_wct_s: f64,
    pub mean_reward: f64,
    pub lambda: f64,
    pub cost_return: f64,
    /// Last predictor train loss so far, if any.
    pub predictor_loss: Option<f64>,
    pub predictor_converged: bool,
    pub action_counts: Vec<usize>,
}

/// Result of training one method with one seed.
pub struct TrainOutcome {
    pub method: Method,
    pub seed: u64,
    /// `None` for the rule-based method.
    pub agent: Option<Box<dyn Agent>>,
    pub predictor: Option<DemandPredictor>,
    pub curve: Vec<CurveRow>,
}

/// Environment used by `method`: the forecast slot is filled only for the
/// predictor-assisted method.
pub fn make_env(method: Method, sc: &Arc<Scenario>, seed: u64, compliance: f64) -> Result<AugmentedEnv> {
    let mut inner = ChargingEnv::new(Arc::clone(sc));
    inner.set_compliance(compliance)?;
    Ok(if method == Method::OpSrl {
        AugmentedEnv::with_predictor(inner, seed)
    } else {
        AugmentedEnv::new(inner, None)
    })
}

/// Trains `method` on `sc` with the scenario's training settings.
pub fn train_method(method: Method, sc: &Arc<Scenario>, seed: u64, compliance: f64) -> Result<TrainOutcome> {
    train_method_with(method, sc, &sc.config.srl, seed, compliance)
}

/// Same as [`train_method`] with explicit training settings.
pub fn train_method_with(
    method: Method,
    sc: &Arc<Scenario>,
    cfg: &TrainConfig,
    seed: u64,
    compliance: f64,
) -> Result<TrainOutcome> {
    let mut env = make_env(method, sc, seed, compliance)?;
    let Some(mut agent) = method.build_agent(env.observation_dim(), env.num_actions(), cfg, seed) else {
        return Ok(TrainOutcome {
            method,
            seed,
            agent: None,
            predictor: None,
            curve: Vec::new(),
        });
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    train_agent(&mut env, agent.as_mut(), cfg, seed, |r, env| {
        let pred = env.predictor();
        curve.push(CurveRow {
            epoch: r.epoch,
            mean_ttt_s: r.mean_ttt_s.unwrap_or(f64::NAN),
            mean_cvv: r.mean_cvv.unwrap_or(f64::NAN),
            mean_wct_s: r.mean_wct_s.unwrap_or(0.0),
            mean_reward: r.mean_reward,
            lambda: r.stats.lambda,
            cost_return: r.stats.cost_return,
            predictor_loss: pred.and_then(|p| p.losses().last().copied()),
            predictor_converged: pred.is_some_and(DemandPredictor::is_converged),
            action_counts: r.action_counts.clone(),
        });
        Ok(())
    })?;
    let predictor = env.predictor_mut().map(|p| p.clone());
    Ok(TrainOutcome {
        method,
        seed,
        agent: Some(agent),
        predictor,
        curve,
    })
}

/// One deterministic evaluation episode.
pub struct EvalOutcome {
    pub metrics: EpisodeMetrics,
    pub episode: Episode,
    /// Mean wall-clock seconds per decision: policy forward pass plus
    /// demand forecast.
    pub decision_s: f64,
    pub wall_s: f64,
    /// The environment after the episode, for traces.
    pub env: AugmentedEnv,
}

/// Runs the evaluation episode of `seed`: greedy actions from the agent (or
/// the rule-based policy), predictor frozen.
pub fn evaluate(
    method: Method,
    agent: Option<&mut dyn Agent>,
    predictor: Option<DemandPredictor>,
    sc: &Arc<Scenario>,
    seed: u64,
    compliance: f64,
    record_events: bool,
) -> Result<EvalOutcome> {
    let start = Instant::now();
    let mut inner = ChargingEnv::new(Arc::clone(sc));
    inner.set_compliance(compliance)?;
    inner.set_record_events(record_events);
    let predictor = if method == Method::OpSrl {
        let mut p = match predictor {
            Some(p) => p,
            None => {
                let piles: Vec<usize> = sc.stations.iter().map(|s| s.piles).collect();
                DemandPredictor::new(&sc.config.predictor, &piles, seed)
            }
        };
        p.set_learning(false);
        Some(p)
    } else {
        None
    };
    let mut env = AugmentedEnv::new(inner, predictor);
    let policy = match agent {
        Some(a) => Policy::Agent(a),
        None if method == Method::Greedy => Policy::Greedy,
        None => return Err(Error::Simulation(format!("method {method} needs a trained agent"))),
    };
    let run = run_episode(&mut env, policy, eval_seed(seed), false, false, sc.config.srl.gamma)
        .map_err(|e| e.context(format!("evaluation, seed {seed}")))?;
    let metrics = run.episode.metrics.clone().ok_or(Error::EpisodeNotTerminal)?;
    let steps = run.episode.len().max(1) as f64;
    let decision_s = (run.decision_s + env.forecast_time().as_secs_f64()) / steps;
    Ok(EvalOutcome {
        metrics,
        episode: run.episode,
        decision_s,
        wall_s: start.elapsed().as_secs_f64(),
        env,
    })
}
