use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{three_point_kurtosis, three_point_moments, ThreePointDist};
use crate::error::{Error, Result};
use crate::montecarlo::{stream, StreamTag};

/// Which concentration bound for the sample variance to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailAssumption {
    /// `P(|σ̂² − σ²| ≥ δ) ≤ κσ⁴/(δ²n)`, needs `n ≥ 3`.
    Kurtosis,
    /// `P(|σ̂² − σ²| ≥ δ) ≤ 2exp(−δ²n/(8C⁴σ⁴))` with `|Y| ≤ Cσ`.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub assumption: TailAssumption,
    pub n: usize,
    pub delta: f64,
    pub mc_n: u64,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub se: f64,
    pub bound: f64,
    /// `empirical ≤ bound + 3·se`.
    pub pass: bool,
}

fn draw(probs: &[f64; 3], rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    if u < probs[0] {
        -1.0
    } else if u < probs[0] + probs[1] {
        0.0
    } else {
        1.0
    }
}

/// Monte Carlo estimate of `P(|σ̂² − σ²| ≥ δ)` for `n` draws from `dist`,
/// compared with the bound implied by `assumption`. Replicate `r` uses its
/// own stream, so the result does not depend on the thread count.
pub fn tail_bound_check(
    assumption: TailAssumption,
    dist: &ThreePointDist,
    n: usize,
    delta: f64,
    mc_n: u64,
    seed: u64,
) -> Result<TailReport> {
    let min_n = if assumption == TailAssumption::Kurtosis { 3 } else { 2 };
    if n < min_n {
        return Err(Error::TooFewObservations { got: n });
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::OutOfRange(format!("delta must be positive, got {delta}")));
    }
    if mc_n == 0 {
        return Err(Error::OutOfRange("mc_n must be positive".into()));
    }
    let var = three_point_moments(dist).variance;
    let bound = match assumption {
        TailAssumption::Kurtosis => three_point_kurtosis(dist)? * var * var / (delta * delta * n as f64),
        TailAssumption::Bounded => {
            if var == 0.0 {
                return Err(Error::ZeroVariance);
            }
            let probs = dist.probs();
            let reach = ThreePointDist::SUPPORT
                .iter()
                .zip(probs)
                .filter(|(_, p)| *p > 0.0)
                .map(|(y, _)| y.abs())
                .fold(0.0, f64::max);
            // C⁴σ⁴ = (reach/σ)⁴σ⁴ = reach⁴.
            2.0 * (-delta * delta * n as f64 / (8.0 * reach.powi(4))).exp()
        }
    };
    let probs = dist.probs();
    let hits: u64 = (0..mc_n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r, StreamTag::TreatedOutcomes);
            let sample: Vec<f64> = (0..n).map(|_| draw(&probs, &mut rng)).collect();
            let m = sample.iter().sum::<f64>() / n as f64;
            let s2 = sample.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1) as f64;
            u64::from((s2 - var).abs() >= delta)
        })
        .sum();
    let empirical = hits as f64 / mc_n as f64;
    let se = (empirical * (1.0 - empirical) / mc_n as f64).sqrt();
    Ok(TailReport {
        assumption,
        n,
        delta,
        mc_n,
        empirical,
        se,
        bound,
        pass: empirical <= bound + 3.0 * se,
    })
}
