//! Seed derivation and pooled Monte-Carlo moments.
//!
//! Every stochastic routine takes a `u64` seed. Work is split into fixed
//! shards, each with its own ChaCha stream, so results do not depend on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

/// Number of trials per shard.
pub const SHARD: usize = 4096;

/// Generator for stream `stream` of the experiment seeded by `seed`.
pub fn derive(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, std_error: 0.0, trials: 0 }
    }

    /// Whether `value` lies within `z` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error + 1e-12
    }
}

/// Running sums for two paired observables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairedMoments {
    pub n: usize,
    sum_a: f64,
    sum_b: f64,
    sum_aa: f64,
    sum_bb: f64,
    sum_ab: f64,
}

impl PairedMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sum_a += a;
        self.sum_b += b;
        self.sum_aa += a * a;
        self.sum_bb += b * b;
        self.sum_ab += a * b;
    }

    pub fn merge(&mut self, other: &PairedMoments) {
        self.n += other.n;
        self.sum_a += other.sum_a;
        self.sum_b += other.sum_b;
        self.sum_aa += other.sum_aa;
        self.sum_bb += other.sum_bb;
        self.sum_ab += other.sum_ab;
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn mean_a(&self) -> f64 {
        self.sum_a / self.nf()
    }

    pub fn mean_b(&self) -> f64 {
        self.sum_b / self.nf()
    }

    /// Unbiased sample covariances (var a, var b, cov ab).
    pub fn covariances(&self) -> (f64, f64, f64) {
        if self.n < 2 {
            return (0.0, 0.0, 0.0);
        }
        let n = self.nf();
        let (ma, mb) = (self.mean_a(), self.mean_b());
        let va = ((self.sum_aa - n * ma * ma) / (n - 1.0)).max(0.0);
        let vb = ((self.sum_bb - n * mb * mb) / (n - 1.0)).max(0.0);
        let cab = (self.sum_ab - n * ma * mb) / (n - 1.0);
        (va, vb, cab)
    }

    pub fn estimate_a(&self) -> Estimate {
        let (va, _, _) = self.covariances();
        Estimate { mean: self.mean_a(), std_error: (va / self.nf()).sqrt(), trials: self.n }
    }

    pub fn estimate_b(&self) -> Estimate {
        let (_, vb, _) = self.covariances();
        Estimate { mean: self.mean_b(), std_error: (vb / self.nf()).sqrt(), trials: self.n }
    }

    /// Estimate of `a - c * b`.
    pub fn estimate_difference(&self, c: f64) -> Estimate {
        let (va, vb, cab) = self.covariances();
        let var = (va + c * c * vb - 2.0 * c * cab).max(0.0);
        Estimate {
            mean: self.mean_a() - c * self.mean_b(),
            std_error: (var / self.nf()).sqrt(),
            trials: self.n,
        }
    }

    /// Delta-method estimate of `E[a] / E[b]`.
    pub fn estimate_ratio(&self) -> Estimate {
        let mb = self.mean_b();
        let r = self.mean_a() / mb;
        let (va, vb, cab) = self.covariances();
        let var = ((va + r * r * vb - 2.0 * r * cab) / (mb * mb)).max(0.0);
        Estimate { mean: r, std_error: (var / self.nf()).sqrt(), trials: self.n }
    }
}

/// Runs `trials` paired observations in fixed shards and merges them in
/// shard order. `draw` produces one observation from the shard's generator.
pub fn paired_trials<F>(trials: usize, seed: u64, draw: F) -> PairedMoments
where
    F: Fn(&mut SimRng) -> (f64, f64) + Sync,
{
    let shards = trials.div_ceil(SHARD);
    let parts: Vec<PairedMoments> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = derive(seed, s as u64);
            let count = SHARD.min(trials - s * SHARD);
            let mut m = PairedMoments::default();
            for _ in 0..count {
                let (a, b) = draw(&mut rng);
                m.push(a, b);
            }
            m
        })
        .collect();
    let mut total = PairedMoments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Single-observable variant of [`paired_trials`].
pub fn trials<F>(trials: usize, seed: u64, draw: F) -> Estimate
where
    F: Fn(&mut SimRng) -> f64 + Sync,
{
    paired_trials(trials, seed, |rng| (draw(rng), 0.0)).estimate_a()
}
