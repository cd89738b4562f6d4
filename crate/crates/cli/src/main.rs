use std::path::PathBuf;
use std::process::ExitCode;

use abelnet_cli::commands;
use abelnet_cli::config::{Overrides, RunConfig};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abelnet", version, about = "Adversarial training of deep belief networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator against a critic; writes metrics, checkpoints and a manifest.
    Train(Common),
    /// Draw samples from a checkpoint; writes PGM grids of samples and output probabilities.
    Sample(Common),
    /// Evaluate a checkpoint against the configured dataset.
    Eval(Common),
    /// Compare analytic gradients with central differences.
    Gradcheck(Common),
    /// Time layer-parallel gradients across worker counts.
    BenchParallel(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "ABELNET_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// js, wasserstein or mal.
    #[arg(long)]
    loss: Option<String>,
    /// sgd, rmsprop or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Checkpoint to resume from (train) or read (sample, eval).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
            loss: self.loss.clone(),
            optimizer: self.optimizer.clone(),
            iters: self.iters,
            batch: self.batch,
            clip: self.clip,
            checkpoint: self.checkpoint.clone(),
        };
        match &self.config {
            Some(path) => RunConfig::from_file(path, &overrides),
            None => RunConfig::from_text("", &overrides),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("error kind={kind} message=\"{}\"", one_line(message).replace('"', "'"));
    ExitCode::from(code)
}

fn report(checked: commands::Checked) -> bool {
    print!("{}", checked.table);
    checked.ok
}

fn run(cli: Cli) -> Result<bool> {
    let (common, verb) = match &cli.command {
        Command::Train(c) => (c, "train"),
        Command::Sample(c) => (c, "sample"),
        Command::Eval(c) => (c, "eval"),
        Command::Gradcheck(c) => (c, "gradcheck"),
        Command::BenchParallel(c) => (c, "bench-parallel"),
    };
    let cfg = common.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| -> Result<bool> {
        Ok(match verb {
            "train" => {
                commands::train(&cfg)?;
                true
            }
            "sample" => {
                commands::sample(&cfg)?;
                true
            }
            "eval" => {
                commands::eval(&cfg)?;
                true
            }
            "gradcheck" => report(commands::gradcheck(&cfg)?),
            _ => report(commands::bench(&cfg)?),
        })
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string(), 2),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => fail("check", "one or more checks failed", 1),
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<abelnet::Error>())
                .map_or("config", abelnet::Error::kind);
            fail(kind, &format!("{e:#}"), 1)
        }
    }
}
