//! Finite-width drift measurements: how far training moves gradients, the
//! kernel, the output and the weights away from initialisation, as the
//! channel count grows.

use std::io::Write;

use nalgebra::DMatrix;

use crate::data::{SyntheticKind, SyntheticTask};
use crate::error::{Error, Result};
use crate::model::{NeuralModel, TrainingHistory};
use crate::net::{init_params, network_gradient, param_distance, train_gd, value_and_gradient, ArmContext, NetTopology};
use crate::ucb::{drift_bounds, dual_ridge, TheoryConstants};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    pub train_rounds: usize,
    pub k: usize,
    /// Learning rate; `None` uses `eta_factor / (m lambda + 1)` at each width.
    pub eta: Option<f64>,
    pub eta_factor: f64,
    pub lambda: f64,
    pub seed: u64,
    pub probes: usize,
    pub task: SyntheticKind,
    pub noise_sigma: f64,
    pub constants: TheoryConstants,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 32, 128],
            train_rounds: 50,
            k: 50,
            eta: None,
            eta_factor: 0.05,
            lambda: 1.0,
            seed: 0,
            probes: 10,
            task: SyntheticKind::Cosine,
            noise_sigma: 0.0,
            constants: TheoryConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStat {
    pub statistic: String,
    pub median: f64,
    pub max: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthResult {
    pub width: usize,
    /// Iteration at which training diverged, if it did.
    pub diverged: Option<usize>,
    pub stats: Vec<SweepStat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub widths: Vec<usize>,
    pub results: Vec<WidthResult>,
}

impl SweepReport {
    pub fn stat(&self, width: usize, statistic: &str) -> Option<&SweepStat> {
        self.results
            .iter()
            .find(|r| r.width == width)?
            .stats
            .iter()
            .find(|s| s.statistic == statistic)
    }

    /// Medians of one statistic in width order; `None` if any width lacks it.
    pub fn medians(&self, statistic: &str) -> Option<Vec<f64>> {
        self.widths
            .iter()
            .map(|&w| self.stat(w, statistic).map(|s| s.median))
            .collect()
    }

    pub fn strictly_decreasing(&self, statistic: &str) -> bool {
        match self.medians(statistic) {
            Some(m) => m.windows(2).all(|w| w[1] < w[0]),
            None => false,
        }
    }

    /// CSV with columns `width,statistic,median,max,bound`; diverged widths
    /// get a single `diverged` row holding the iteration.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["width", "statistic", "median", "max", "bound"])?;
        for r in &self.results {
            if let Some(it) = r.diverged {
                w.write_record([r.width.to_string(), "diverged".into(), it.to_string(), it.to_string(), String::new()])?;
            }
            for s in &r.stats {
                w.write_record([
                    r.width.to_string(),
                    s.statistic.clone(),
                    s.median.to_string(),
                    s.max.to_string(),
                    s.bound.map(|b| b.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(statistic: impl Into<String>, values: &[f64], bound: Option<f64>) -> SweepStat {
    SweepStat {
        statistic: statistic.into(),
        median: median(values),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bound,
    }
}

/// One round of `task` reshaped to the topology's input: unit-norm contexts
/// with their noisy rewards.
fn contexts(task: &SyntheticTask, topology: &NetTopology) -> Result<(Vec<ArmContext>, Vec<f64>)> {
    let round = task.stream(1).next().expect("one round");
    let c = topology.in_channels();
    let p = topology.pixels();
    let arms = round
        .arms
        .iter()
        .map(|a| ArmContext::new(DMatrix::from_column_slice(c, p, a.as_slice()), topology.spatial()))
        .collect::<Result<Vec<_>>>()?;
    Ok((arms, round.rewards))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Trains one network per width on the same observations and measures drift
/// at the same probe arms.
pub fn width_sweep(base: &NetTopology, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.widths.is_empty() || cfg.widths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("widths must be non-empty and strictly increasing".into()));
    }
    if cfg.probes == 0 {
        return Err(Error::InvalidParameter("at least one probe arm is needed".into()));
    }
    let dim = base.in_channels() * base.pixels();
    let train_task = SyntheticTask::new(cfg.task, dim, cfg.train_rounds.max(1), cfg.noise_sigma, cfg.seed)?;
    let probe_task = SyntheticTask::new(cfg.task, dim, cfg.probes, 0.0, cfg.seed.wrapping_add(1))?;
    let (train_arms, train_rewards) = contexts(&train_task, base)?;
    let (train_arms, train_rewards) = (
        train_arms[..cfg.train_rounds].to_vec(),
        train_rewards[..cfg.train_rounds].to_vec(),
    );
    let (probes, _) = contexts(&probe_task, base)?;
    let history = TrainingHistory::from_pairs(train_arms.clone(), train_rewards.clone())?;

    let mut results = Vec::with_capacity(cfg.widths.len());
    for &m in &cfg.widths {
        let topology = base.with_channels(m)?;
        let params0 = init_params(&topology, cfg.seed);
        let eta = cfg.eta.unwrap_or(cfg.eta_factor / (m as f64 * cfg.lambda + 1.0));
        let params = match train_gd(&params0, &history, eta, cfg.k, &topology) {
            Ok(p) => p,
            Err(Error::Diverged { iteration }) => {
                results.push(WidthResult {
                    width: m,
                    diverged: Some(iteration),
                    stats: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let theta = params.flatten();
        let theta0 = params0.flatten();
        let delta: Vec<f64> = theta.iter().zip(&theta0).map(|(a, b)| a - b).collect();

        let mut grad_abs = Vec::new();
        let mut grad_rel = Vec::new();
        let mut kernel = Vec::new();
        let mut linear = Vec::new();
        for x in &probes {
            let (f0, g0) = value_and_gradient(x, &params0, &topology)?;
            let (ft, gt) = value_and_gradient(x, &params, &topology)?;
            let d = dist(&gt.flat, &g0.flat);
            grad_abs.push(d);
            grad_rel.push(d / g0.norm());
            kernel.push((dot(&gt.flat, &gt.flat) - dot(&g0.flat, &g0.flat)).abs());
            linear.push((ft - f0 - dot(&g0.flat, &delta)).abs());
        }

        let bounds = drift_bounds(
            &topology.theory_shape().expect("convolutional shape"),
            cfg.constants,
            cfg.train_rounds,
            cfg.lambda,
        );
        let mut stats = vec![
            summarize("grad_drift", &grad_abs, Some(bounds.grad_drift)),
            summarize("grad_drift_rel", &grad_rel, None),
            summarize("kernel_drift", &kernel, Some(bounds.kernel_drift)),
            summarize("linearization", &linear, Some(bounds.linearization)),
        ];
        let scale = (m as f64).sqrt();
        for (l, d) in param_distance(&params, &params0)?.iter().enumerate() {
            let v = scale * d;
            stats.push(summarize(format!("weight_drift_l{}", l + 1), &[v], Some(bounds.weight_drift)));
        }

        // theta_t - theta_0 against the ridge solution on initial features
        let feats = train_arms
            .iter()
            .map(|x| network_gradient(x, &params0, &topology).map(|g| g.flat.iter().map(|v| v / scale).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let ridge = if feats.is_empty() {
            vec![0.0; delta.len()]
        } else {
            dual_ridge(&feats, &train_rewards, cfg.lambda)?
        };
        let ridge_dist = delta
            .iter()
            .zip(&ridge)
            .map(|(a, r)| (a - r / scale).powi(2))
            .sum::<f64>()
            .sqrt();
        stats.push(summarize("ridge_distance", &[ridge_dist], Some(bounds.ridge_distance)));

        results.push(WidthResult {
            width: m,
            diverged: None,
            stats,
        });
    }
    Ok(SweepReport {
        widths: cfg.widths.clone(),
        results,
    })
}
