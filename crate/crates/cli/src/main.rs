use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cnn_ucb::bench::{config_bounds, run_experiment_with, summarize, ExperimentConfig};
use cnn_ucb::data::{check_cifar_file, check_idx_file, IMAGE_MAGIC};
use cnn_ucb::net::{init_params, Activation, NetTopology, Spatial};
use cnn_ucb::theory::{construct_theta_star, random_instance, width_sweep, SweepConfig};
use cnn_ucb::{Error, Result};

#[derive(Parser)]
#[command(name = "cnn-ucb", version, about = "Convolutional neural UCB bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bandit experiment and write its round log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean and standard deviation of cumulative regret across repeats.
    Summarize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Summary CSV destination; the final-regret table goes to stdout.
        #[arg(long, default_value = "summary.csv")]
        out: PathBuf,
    },
    /// Finite-width checks.
    Theory {
        #[command(subcommand)]
        command: TheoryCommand,
    },
    /// Print every confidence-bound term for a configuration.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// Rounds observed so far.
        #[arg(long)]
        t: usize,
    },
    /// Dataset file validation.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Drift of gradients, kernel, output and weights against width.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
        widths: Vec<usize>,
        /// Training observations.
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        /// Gradient steps.
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Fixed learning rate; by default 0.05 / (m lambda + 1) per width.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interpolating displacement through initial gradients on a random instance.
    Lemma51 {
        #[arg(long, default_value_t = 10)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Validate IDX headers (magic and record count) or CIFAR-10 batch lengths.
    Check {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => run(&config, &out),
        Command::Summarize { files, out } => {
            let summary = summarize(&files)?;
            summary.write_csv(BufWriter::new(create(&out)?))?;
            summary.write_table(io::stdout().lock())
        }
        Command::Theory { command } => match command {
            TheoryCommand::Sweep {
                widths,
                rounds,
                k,
                eta,
                seed,
                out,
            } => sweep(widths, rounds, k, eta, seed, out),
            TheoryCommand::Lemma51 { t, seed } => interpolation(t, seed),
        },
        Command::Bounds { config, t } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = config_bounds(&cfg, t)?;
            let mut out = io::stdout().lock();
            for (label, value) in report.fields() {
                match value {
                    Some(v) => writeln!(out, "{label}: {v:e}")?,
                    None => writeln!(out, "{label}: n/a")?,
                }
            }
            Ok(())
        }
        Command::Dataset {
            command: DatasetCommand::Check { paths },
        } => check(&paths),
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let output = run_experiment_with(&cfg, out, |p| {
        eprintln!(
            "{} repeat {}: cumulative regret {:.3} in {:.1}s",
            p.algorithm.name(),
            p.repeat,
            p.cum_regret,
            p.seconds
        );
    })?;
    println!("{}", output.rounds.display());
    Ok(())
}

/// Base topology of the sweep: two layers, 3-wide kernels on a 9-pixel line.
fn sweep_base() -> Result<NetTopology> {
    NetTopology::new(2, 8, 3, 1, Spatial::Line(9), Activation::Sigmoid)
}

fn sweep(widths: Vec<usize>, rounds: usize, k: usize, eta: Option<f64>, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let cfg = SweepConfig {
        widths,
        train_rounds: rounds,
        k,
        eta,
        seed,
        ..SweepConfig::default()
    };
    let report = width_sweep(&sweep_base()?, &cfg).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Config(msg),
        other => other,
    })?;
    for r in &report.results {
        if let Some(it) = r.diverged {
            eprintln!("width {}: training diverged at iteration {it}", r.width);
        }
    }
    match out {
        Some(path) => report.write_csv(BufWriter::new(create(&path)?)),
        None => report.write_csv(io::stdout().lock()),
    }
}

fn interpolation(t: usize, seed: u64) -> Result<()> {
    // d = 10 * (5 * 2) + 10 * 40 = 500 parameters
    let topo = NetTopology::new(1, 10, 5, 2, Spatial::Line(40), Activation::Sigmoid)?;
    let (arms, f_star) = random_instance(&topo, t, seed)?;
    let params0 = init_params(&topo, seed.wrapping_add(1));
    let r = construct_theta_star(&topo, &arms, &f_star, &params0)?;
    let f_sq: f64 = f_star.iter().map(|v| v * v).sum();
    let mut out = io::stdout().lock();
    writeln!(out, "d: {}", topo.param_count())?;
    writeln!(out, "t: {t}")?;
    writeln!(out, "residual: {:e}", r.residual)?;
    writeln!(out, "displacement_norm_sq: {:e}", r.displacement_norm_sq())?;
    writeln!(out, "norm_sq: {:e}", r.norm_sq)?;
    writeln!(out, "identity_gap: {:e}", (r.displacement_norm_sq() - r.norm_sq).abs())?;
    writeln!(out, "lambda_1: {:e}", r.lambda_1)?;
    writeln!(out, "eigen_bound: {:e}", f_sq / r.lambda_1)?;
    writeln!(out, "s_bar: {:e}", r.s_bar(topo.channels()))?;
    Ok(())
}

fn check(paths: &[PathBuf]) -> Result<()> {
    let mut failed = None;
    for path in paths {
        let result = if path.extension().is_some_and(|e| e == "bin") {
            check_cifar_file(path).map(|n| format!("cifar-10 batch, N={n}"))
        } else {
            check_idx_file(path).map(|h| {
                let kind = if h.magic == IMAGE_MAGIC { "images" } else { "labels" };
                let dims: Vec<String> = h.dims.iter().map(|d| d.to_string()).collect();
                format!("idx {kind} 0x{:08x}, N={}, dims {}", h.magic, h.records(), dims.join("x"))
            })
        };
        match result {
            Ok(msg) => println!("{}: {msg}", path.display()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failed.get_or_insert(e);
            }
        }
    }
    failed.map_or(Ok(()), Err)
}
