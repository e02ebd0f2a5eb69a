//! Brute-force reference computations.
//!
//! Nothing here shares code with the closed forms it is used to check: the
//! allocation oracle scans every split, the moment oracle enumerates every
//! sample, and the lemma and tail checkers evaluate both sides of each
//! inequality directly.

mod lemmas;
mod tails;

use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, ArmMoments};
use crate::bounds::ThreePointDist;
use crate::error::{Error, Result};

pub use lemmas::{
    default_grid, lemma_grid_check, lemma_point_check, LemmaId, LemmaParams, LemmaReport, LemmaStatus,
    PointOutcome,
};
pub use tails::{tail_bound_check, TailAssumption, TailReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    Log,
}

/// `points` values from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl GridSpec {
    pub fn linear(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points, scale: GridScale::Linear }
    }

    pub fn log(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points, scale: GridScale::Log }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo < self.hi) || self.points < 2 {
            return Err(Error::InvalidSpec(format!(
                "grid needs lo < hi and at least 2 points, got {self:?}"
            )));
        }
        if self.scale == GridScale::Log && self.lo <= 0.0 {
            return Err(Error::InvalidSpec("log grid needs lo > 0".into()));
        }
        let k = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let u = i as f64 / k;
                match (self.scale, i) {
                    (_, 0) => self.lo,
                    (_, i) if i == self.points - 1 => self.hi,
                    (GridScale::Linear, _) => self.lo + (self.hi - self.lo) * u,
                    (GridScale::Log, _) => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * u).exp(),
                }
            })
            .collect())
    }
}

/// Integer split minimizing `σ₁²/t₁ + σ₀²/t₀` by scanning `t₁ = 1..T−1`;
/// ties go to the larger `t₁`.
pub fn exhaustive_best_allocation(moments: &ArmMoments, horizon: u64) -> Result<Allocation> {
    if !(moments.sigma1 > 0.0 && moments.sigma0 > 0.0) {
        return Err(Error::OutOfRange("both sigmas must be positive".into()));
    }
    if !(2..=100_000).contains(&horizon) {
        return Err(Error::OutOfRange(format!("T must lie in 2..=100000, got {horizon}")));
    }
    let (v1, v0) = (moments.sigma1 * moments.sigma1, moments.sigma0 * moments.sigma0);
    let mut best = (f64::INFINITY, 0u64);
    for t1 in 1..horizon {
        let value = v1 / t1 as f64 + v0 / (horizon - t1) as f64;
        if value <= best.0 {
            best = (value, t1);
        }
    }
    Ok(Allocation::new(best.1, horizon - best.1))
}

/// Exact `(E[σ̂²], E[(σ̂²)²])` for `n` i.i.d. draws, summing over all `3ⁿ`
/// samples.
pub fn enumerate_sample_variance_moments(dist: &ThreePointDist, n: usize) -> Result<(f64, f64)> {
    if !(2..=8).contains(&n) {
        return Err(Error::OutOfRange(format!("n must lie in 2..=8, got {n}")));
    }
    let probs = dist.probs();
    let total = 3usize.pow(n as u32);
    let mut first = 0.0;
    let mut second = 0.0;
    let mut sample = vec![0.0; n];
    for code in 0..total {
        let mut c = code;
        let mut weight = 1.0;
        for slot in sample.iter_mut() {
            let k = c % 3;
            c /= 3;
            *slot = ThreePointDist::SUPPORT[k];
            weight *= probs[k];
        }
        if weight == 0.0 {
            continue;
        }
        let m = sample.iter().sum::<f64>() / n as f64;
        let s2 = sample.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1) as f64;
        first += weight * s2;
        second += weight * s2 * s2;
    }
    Ok((first, second))
}
