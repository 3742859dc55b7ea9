use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, Dataset, ExperimentConfig};
use super::policy::{KernelUcbPolicy, LinUcbPolicy, NeuralUcbPolicy, Policy, RandomPolicy};
use crate::baselines::{default_alpha, FcTopology};
use crate::data::{load_cifar10, load_idx, ImageStream, LabeledImageSet, SyntheticTask};
use crate::error::{Error, Result};
use crate::net::{ArmContext, NetTopology, Spatial};
use crate::model::NeuralModel;
use crate::theory::logdet_report;
use crate::ucb::{theory_bounds, BoundInputs, BoundReport};

/// First line of every round log; bump the version when columns change.
pub const ROUNDS_HEADER: &str = "# cnn-ucb rounds v1";

/// One row of the round log. Rounds count from 1, arms from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub repeat: usize,
    pub algorithm: String,
    pub chosen_arm: usize,
    pub correct_arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub mean: f64,
    pub width: f64,
    pub psi1: f64,
    /// Empty unless timing is switched on.
    pub wallclock_ms: Option<f64>,
}

/// Files written by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rounds: PathBuf,
    pub config: PathBuf,
    pub logdet: Option<PathBuf>,
}

/// Completion notice for one (algorithm, repeat) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub algorithm: Algorithm,
    pub repeat: usize,
    pub cum_regret: f64,
    pub seconds: f64,
}

struct RoundData {
    arms: Vec<ArmContext>,
    /// Expected reward of every arm.
    expected: Vec<f64>,
    /// Reward each arm would return this round.
    observed: Vec<f64>,
    correct: usize,
}

impl RoundData {
    fn regret(&self, chosen: usize) -> f64 {
        self.expected[self.correct] - self.expected[chosen]
    }
}

enum Source {
    Images(LabeledImageSet),
    Synthetic,
}

impl Source {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.experiment.dataset {
            Dataset::Mnist | Dataset::Notmnist => {
                let (images, labels) = cfg.idx_paths()?;
                Source::Images(load_idx(images, labels)?)
            }
            Dataset::Cifar10 => Source::Images(load_cifar10(&cfg.cifar_paths()?)?),
            Dataset::Synthetic => Source::Synthetic,
        })
    }

    /// Rounds of one repeat, built on demand: image rounds are large.
    fn rounds<'a>(&'a self, cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn Iterator<Item = Result<RoundData>> + 'a>> {
        let n = cfg.experiment.rounds;
        match self {
            Source::Images(set) => {
                let stream = ImageStream::new(set, seed)?;
                Ok(Box::new((0..n).map(move |t| {
                    let r = stream.round(t)?;
                    let expected: Vec<f64> = (0..r.arms.len()).map(|a| r.reward(a)).collect();
                    Ok(RoundData {
                        observed: expected.clone(),
                        expected,
                        correct: r.correct,
                        arms: r.arms,
                    })
                })))
            }
            Source::Synthetic => {
                let s = &cfg.synthetic;
                let task = SyntheticTask::new(s.kind, s.dim, s.arms, s.noise, seed)?;
                let rounds: Vec<RoundData> = task
                    .stream(n)
                    .map(|r| RoundData {
                        correct: r.best_arm(),
                        arms: r.arms,
                        expected: r.f_star,
                        observed: r.rewards,
                    })
                    .collect();
                Ok(Box::new(rounds.into_iter().map(Ok)))
            }
        }
    }

    /// Arm shape as (input channels, layout).
    fn arm_shape(&self, cfg: &ExperimentConfig) -> (usize, Spatial) {
        match self {
            Source::Images(set) => (set.n_classes() * set.channels(), set.spatial()),
            Source::Synthetic => cfg.arm_shape(),
        }
    }
}

/// The convolutional network a config describes, on arms of the given shape.
pub fn cnn_topology(cfg: &ExperimentConfig, in_channels: usize, spatial: Spatial) -> Result<NetTopology> {
    let k = cfg.cnn.kernel;
    let patch = match spatial {
        Spatial::Line(_) => k,
        Spatial::Grid { .. } => k * k,
    };
    NetTopology::new(cfg.cnn.layers, cfg.cnn.channels, patch, in_channels, spatial, cfg.cnn.activation)
}

/// Bound terms for the configured convolutional model after `t` rounds,
/// with the run length as horizon.
pub fn config_bounds(cfg: &ExperimentConfig, t: usize) -> Result<BoundReport> {
    cfg.validate()?;
    let (c, spatial) = cfg.arm_shape();
    let shape = cnn_topology(cfg, c, spatial)?
        .theory_shape()
        .expect("convolutional models have a shape");
    let inputs = BoundInputs {
        constants: cfg.explore.constants,
        delta: cfg.explore.delta,
        s_bar: cfg.explore.s_bar,
        lambda: cfg.bandit.lambda,
        t,
        horizon: cfg.experiment.rounds,
    };
    theory_bounds(&shape, &inputs, None)
}

fn make_policy(
    algorithm: Algorithm,
    cfg: &ExperimentConfig,
    in_channels: usize,
    spatial: Spatial,
    seed: u64,
) -> Result<Box<dyn Policy>> {
    let store = cfg.experiment.store_init_features;
    let lambda = cfg.bandit.lambda;
    let alpha = cfg.linucb.alpha.unwrap_or_else(|| default_alpha(cfg.explore.delta));
    Ok(match algorithm {
        Algorithm::CnnUcb => {
            let topo = cnn_topology(cfg, in_channels, spatial)?;
            Box::new(NeuralUcbPolicy::new(topo, seed, cfg.explore, cfg.bandit.clone(), store)?)
        }
        Algorithm::FcUcb => {
            let topo = FcTopology::new(cfg.fc.depth, cfg.fc.width, in_channels * spatial.pixels(), cfg.fc.activation)?;
            Box::new(NeuralUcbPolicy::new(topo, seed, cfg.explore, cfg.bandit.clone(), store)?)
        }
        Algorithm::Linucb => Box::new(LinUcbPolicy::new(lambda, alpha)),
        Algorithm::Kernelucb => Box::new(KernelUcbPolicy::new(
            cfg.kernelucb.clone(),
            lambda,
            cfg.kernelucb.beta.unwrap_or(alpha),
        )),
        Algorithm::Random => Box::new(RandomPolicy::new(seed)),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::file(path, e))
}

/// [`run_experiment_with`] without progress reporting.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<RunOutput> {
    run_experiment_with(cfg, out_dir, |_| {})
}

/// Runs every algorithm on every repeat and writes `rounds.csv`, the
/// effective `config.toml` and, when initial features are stored,
/// `logdet.csv` into `out_dir`.
///
/// If a policy fails mid-run (training divergence, say) the rows so far are
/// flushed, a `# aborted` comment line records the failure and the error is
/// returned.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
    mut progress: impl FnMut(&Progress),
) -> Result<RunOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::file(&config_path, e))?;

    let source = Source::load(cfg)?;
    let (in_channels, spatial) = source.arm_shape(cfg);

    let rounds_path = out_dir.join("rounds.csv");
    let mut file = create(&rounds_path)?;
    writeln!(file, "{ROUNDS_HEADER}")?;
    let mut rows = csv::Writer::from_writer(file);

    let logdet_path = out_dir.join("logdet.csv");
    let mut logdet = if cfg.experiment.store_init_features {
        let mut w = csv::Writer::from_writer(create(&logdet_path)?);
        w.write_record(["algorithm", "repeat", "logdet_ratio", "d_bar", "bound_rhs", "holds"])?;
        Some(w)
    } else {
        None
    };

    for repeat in 0..cfg.experiment.repeats {
        let seed = cfg.experiment.seed.wrapping_add(repeat as u64);
        for &algorithm in &cfg.experiment.algorithms {
            let started = Instant::now();
            let result = make_policy(algorithm, cfg, in_channels, spatial, seed).and_then(|mut policy| {
                let rounds = source.rounds(cfg, seed)?;
                run_one(policy.as_mut(), algorithm, repeat, rounds, cfg, &mut rows).map(|c| (policy, c))
            });
            let (policy, cum_regret) = match result {
                Ok(v) => v,
                Err(e) => {
                    rows.flush()?;
                    let mut file = rows.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                    writeln!(file, "# aborted: {} repeat {repeat}: {e}", algorithm.name())?;
                    file.flush()?;
                    return Err(e);
                }
            };
            rows.flush()?;
            if let (Some(w), Some(art)) = (logdet.as_mut(), policy.artifacts()) {
                let r = logdet_report(&art)?;
                w.write_record([
                    algorithm.name().to_string(),
                    repeat.to_string(),
                    r.logdet_ratio.to_string(),
                    r.d_bar.to_string(),
                    r.bound_rhs.to_string(),
                    r.holds().to_string(),
                ])?;
                w.flush()?;
            }
            progress(&Progress {
                algorithm,
                repeat,
                cum_regret,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    rows.flush()?;
    Ok(RunOutput {
        rounds: rounds_path,
        config: config_path,
        logdet: logdet.map(|_| logdet_path),
    })
}

/// Plays one policy through one repeat; returns the final cumulative regret.
fn run_one<W: Write>(
    policy: &mut dyn Policy,
    algorithm: Algorithm,
    repeat: usize,
    rounds: impl Iterator<Item = Result<RoundData>>,
    cfg: &ExperimentConfig,
    out: &mut csv::Writer<W>,
) -> Result<f64> {
    let mut cum = 0.0;
    for (t, round) in rounds.enumerate() {
        let round = round?;
        let started = Instant::now();
        let choice = policy.choose(&round.arms)?;
        let reward = round.observed[choice.arm];
        policy.observe(&round.arms, choice.arm, reward)?;
        let regret = round.regret(choice.arm);
        cum += regret;
        out.serialize(RoundRecord {
            round: t + 1,
            repeat,
            algorithm: algorithm.name().to_string(),
            chosen_arm: choice.arm,
            correct_arm: round.correct,
            reward,
            regret,
            cum_regret: cum,
            mean: choice.score.mean,
            width: choice.score.width,
            psi1: choice.score.psi1,
            wallclock_ms: cfg
                .experiment
                .record_timing
                .then(|| started.elapsed().as_secs_f64() * 1e3),
        })?;
    }
    Ok(cum)
}

/// Reads a round log, skipping `#` comment lines.
pub fn read_rounds(path: impl AsRef<Path>) -> Result<Vec<RoundRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}
