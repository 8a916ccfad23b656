use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pbdp::error::Error;
use pbdp::experiment::{self, ExperimentConfig, Side, Suite, SweepKind};

#[derive(Parser)]
#[command(name = "pbdp", version, about = "Polynomial birth-death point process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Moment-fit a PBDP to a model
    Fit(Common),
    /// Draw configurations from a model or its fit
    Sample {
        #[command(flatten)]
        common: Common,
        /// model, fitted or poisson
        #[arg(long, default_value = "model")]
        side: String,
    },
    /// Estimate d2 between a model (or config sides) and a PBDP
    D2(Common),
    /// Run invariant suites: chain, stein, palm, bounds or all
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Parameter sweep: bernoulli, runs or cp
    Sweep {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Model spec, inline JSON or a path
    #[arg(long)]
    model: Option<String>,
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// default, singletons, blocks:W or cells:K
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    u: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = Some(experiment::parse_model(m)?);
        }
        cfg.seed = self.seed.or(cfg.seed);
        cfg.reps = self.reps.or(cfg.reps);
        cfg.n_samples = self.n_samples.or(cfg.n_samples);
        cfg.out = self.out.clone().or(cfg.out);
        cfg.partition = self.partition.clone().or(cfg.partition);
        cfg.u = self.u.or(cfg.u);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<experiment::Output, Error> {
    match cli.command {
        Command::Fit(c) => experiment::cmd_fit(&c.config()?),
        Command::Sample { common, side } => {
            let mut cfg = common.config()?;
            match side.as_str() {
                "model" => {}
                "fitted" => cfg.left = Some(Side::Fitted),
                "poisson" => cfg.left = Some(Side::Poisson),
                other => return Err(Error::InvalidParameter(format!("unknown side '{other}'"))),
            }
            experiment::cmd_sample(&cfg)
        }
        Command::D2(c) => experiment::cmd_d2(&c.config()?),
        Command::Verify { suite, common } => experiment::cmd_verify(&common.config()?, suite.parse::<Suite>()?),
        Command::Sweep { kind, common } => experiment::cmd_sweep(&common.config()?, kind.parse::<SweepKind>()?),
    }
}

fn main() -> ExitCode {
    let result = run(Cli::parse()).and_then(|out| {
        print!("{}", out.commit()?);
        Ok(out.exit_code)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            println!("{}", experiment::error_json(&e));
            ExitCode::from(2)
        }
    }
}
