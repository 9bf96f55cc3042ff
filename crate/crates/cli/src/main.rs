use std::path::PathBuf;
use std::process::ExitCode;

use chargerec::harness::{self, ExperimentSpec, Mode, SweepAxis};
use chargerec::srl::Method;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chargerec", version, about = "EV charging recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train each method per seed, then evaluate it.
    Train(RunArgs),
    /// Evaluate saved checkpoints (greedy needs none).
    Eval(RunArgs),
    /// Train and evaluate over a range of values of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_axis)]
        sweep_axis: SweepAxis,
        /// Comma-separated values; controller interval is in minutes.
        #[arg(long, value_delimiter = ',', required = true)]
        sweep_values: Vec<f64>,
    },
    /// Aggregate run directories into plot-ready CSVs under `<dir>/report`.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_method)]
    method: Vec<Method>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of EV drivers who follow recommendations.
    #[arg(long, default_value_t = 1.0)]
    compliance: f64,
    /// Write per-step and per-event traces.
    #[arg(long)]
    trace: bool,
    /// Training output directory (or one method's run directory) holding checkpoints, for eval.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    /// Override the scenario's training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: chargerec::Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: chargerec::Error| e.to_string())
}

impl RunArgs {
    fn spec(self, mode: Mode) -> ExperimentSpec {
        ExperimentSpec {
            scenario: self.scenario,
            methods: self.method,
            seeds: self.seeds,
            mode,
            sweep: None,
            out: self.out,
            compliance: self.compliance,
            trace: self.trace,
            checkpoints: self.checkpoints,
            epochs: self.epochs,
        }
    }
}

fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train(a) => {
            harness::run(&a.spec(Mode::Train))?;
        }
        Command::Eval(a) => {
            harness::run(&a.spec(Mode::Eval))?;
        }
        Command::Sweep { run, sweep_axis, sweep_values } => {
            let mut spec = run.spec(Mode::Sweep);
            spec.sweep = Some((sweep_axis, sweep_values));
            harness::sweep(&spec)?;
        }
        Command::Report { out } => {
            let s = harness::report(&out)?;
            println!("report: runs={} out={}", s.runs.len(), s.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<chargerec::Error>())
                .map_or("internal", chargerec::Error::kind);
            let message = format!("{e}").replace('\n', " ");
            eprintln!("error: kind={kind} message={message:?}");
            ExitCode::FAILURE
        }
    }
}
