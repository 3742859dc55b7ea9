use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ArmContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// `(1 + <a, x>) / 2`
    Linear,
    /// `<a, x>^2`
    Quadratic,
    /// `(1 + cos(3 pi <a, x>)) / 2`
    Cosine,
}

impl SyntheticKind {
    pub fn reward(self, inner: f64) -> f64 {
        let v = match self {
            SyntheticKind::Linear => (1.0 + inner) / 2.0,
            SyntheticKind::Quadratic => inner * inner,
            SyntheticKind::Cosine => (1.0 + (3.0 * std::f64::consts::PI * inner).cos()) / 2.0,
        };
        v.clamp(0.0, 1.0)
    }
}

/// A reward function `f*` over unit-norm vectors with a hidden unit direction
/// `a`, observed with Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    kind: SyntheticKind,
    a: Vec<f64>,
    noise_sigma: f64,
    n_arms: usize,
    seed: u64,
}

impl SyntheticTask {
    /// Draws `a` uniformly on the unit sphere from `seed`.
    pub fn new(kind: SyntheticKind, arm_dim: usize, n_arms: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        if arm_dim == 0 || n_arms == 0 {
            return Err(Error::InvalidParameter("arm dimension and arm count must be positive".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma} must be non-negative")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = unit_vector(&mut rng, arm_dim);
        Ok(Self {
            kind,
            a,
            noise_sigma,
            n_arms,
            seed,
        })
    }

    pub fn with_direction(kind: SyntheticKind, a: Vec<f64>, n_arms: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        let mut task = Self::new(kind, a.len(), n_arms, noise_sigma, seed)?;
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        task.a = a.iter().map(|v| v / n).collect();
        Ok(task)
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    pub fn direction(&self) -> &[f64] {
        &self.a
    }

    pub fn arm_dim(&self) -> usize {
        self.a.len()
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn f_star(&self, x: &[f64]) -> f64 {
        let inner: f64 = self.a.iter().zip(x).map(|(a, b)| a * b).sum();
        self.kind.reward(inner)
    }

    /// `rounds` rounds of fresh arms; the stream is a pure function of the task.
    pub fn stream(&self, rounds: usize) -> SyntheticStream<'_> {
        // offset keeps the arm draws independent of the draw of `a`
        SyntheticStream {
            task: self,
            rng: ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15),
            remaining: rounds,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRound {
    pub arms: Vec<ArmContext>,
    pub f_star: Vec<f64>,
    /// Noisy reward each arm would yield this round.
    pub rewards: Vec<f64>,
}

impl SyntheticRound {
    pub fn best_arm(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.f_star.iter().enumerate() {
            if *v > self.f_star[best] {
                best = i;
            }
        }
        best
    }

    pub fn regret(&self, chosen: usize) -> f64 {
        self.f_star[self.best_arm()] - self.f_star[chosen]
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticStream<'a> {
    task: &'a SyntheticTask,
    rng: ChaCha8Rng,
    remaining: usize,
}

impl Iterator for SyntheticStream<'_> {
    type Item = SyntheticRound;

    fn next(&mut self) -> Option<SyntheticRound> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let d = self.task.arm_dim();
        let noise = Normal::new(0.0, self.task.noise_sigma).expect("sigma validated");
        let mut arms = Vec::with_capacity(self.task.n_arms);
        let mut f_star = Vec::with_capacity(self.task.n_arms);
        let mut rewards = Vec::with_capacity(self.task.n_arms);
        for _ in 0..self.task.n_arms {
            let x = unit_vector(&mut self.rng, d);
            let f = self.task.f_star(&x);
            let xi: f64 = noise.sample(&mut self.rng);
            arms.push(ArmContext::from_vector(&x));
            f_star.push(f);
            rewards.push(f + xi);
        }
        Some(SyntheticRound { arms, f_star, rewards })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_rewards_equal_f_star() {
        let task = SyntheticTask::new(SyntheticKind::Cosine, 5, 3, 0.0, 1).unwrap();
        for round in task.stream(20) {
            assert_eq!(round.f_star, round.rewards);
            for arm in &round.arms {
                assert!((arm.frobenius_norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_peaks_at_the_hidden_direction() {
        let task = SyntheticTask::new(SyntheticKind::Linear, 6, 2, 0.1, 9).unwrap();
        let a = task.direction().to_vec();
        assert!((task.f_star(&a) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!(task.f_star(&neg).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible() {
        let a = SyntheticTask::new(SyntheticKind::Quadratic, 4, 3, 0.05, 2).unwrap();
        let b = SyntheticTask::new(SyntheticKind::Quadratic, 4, 3, 0.05, 2).unwrap();
        assert_eq!(a.stream(10).collect::<Vec<_>>(), b.stream(10).collect::<Vec<_>>());
        let c = SyntheticTask::new(SyntheticKind::Quadratic, 4, 3, 0.05, 3).unwrap();
        assert_ne!(a.stream(1).collect::<Vec<_>>(), c.stream(1).collect::<Vec<_>>());
    }

    #[test]
    fn regret_is_gap_to_the_best_arm() {
        let round = SyntheticRound {
            arms: vec![],
            f_star: vec![0.2, 0.9, 0.5],
            rewards: vec![0.0; 3],
        };
        assert_eq!(round.best_arm(), 1);
        assert!((round.regret(2) - 0.4).abs() < 1e-15);
    }
}
