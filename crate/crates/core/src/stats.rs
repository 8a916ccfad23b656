//! Seeded replicate streams and order-stable aggregation.
//!
//! Every replicate draws from its own ChaCha stream selected by
//! `(master seed, replicate index)`, so results do not depend on how
//! replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

/// Deterministic RNG for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run `reps` replicates in parallel; output order follows replicate index.
pub fn par_replicates<T, F>(seed: u64, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, usize) -> T + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            f(&mut rng, i)
        })
        .collect()
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sample mean with standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, stderr: 0.0, n };
        }
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0, n };
        }
        let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }

    /// True when `target` lies within `k` standard errors, with an absolute floor.
    pub fn agrees_with(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + floor
    }
}

/// Central moment of order `r` with a delta-method standard error.
pub fn central_moment_estimate(xs: &[f64], r: i32) -> MeanEstimate {
    let n = xs.len();
    if n < 2 {
        return MeanEstimate { mean: 0.0, stderr: 0.0, n };
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    let mom = |k: i32| compensated_sum(xs.iter().map(|x| (x - mean).powi(k))) / n as f64;
    let mu_r = mom(r);
    let mu_r1 = if r >= 2 { mom(r - 1) } else { 0.0 };
    // influence function of the plug-in central moment
    let infl: Vec<f64> = xs
        .iter()
        .map(|x| (x - mean).powi(r) - mu_r - r as f64 * mu_r1 * (x - mean))
        .collect();
    let spread = MeanEstimate::from_samples(&infl);
    let bias = if r == 2 { n as f64 / (n - 1) as f64 } else { 1.0 };
    MeanEstimate {
        mean: mu_r * bias,
        stderr: spread.stderr,
        n,
    }
}
