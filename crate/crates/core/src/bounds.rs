//! Closed-form performance guarantees and the lower-bound instance.
//!
//! The high-probability bounds come as a pair: a competitive-ratio ceiling
//! and the probability with which it holds. At desk-scale horizons the
//! probability formula is often negative; such floors are reported as 0 and
//! flagged `vacuous`.
//!
//! ```
//! use neyman_core::bounds::{thm2_bound, thm4_bound};
//!
//! let r = thm2_bound(1_000_000, 0.1, 3.0, 3.0).unwrap();
//! assert!((r.ratio_bound - (1.0 + 10f64.powf(-2.4))).abs() < 1e-12);
//! assert!(r.vacuous);
//! assert_eq!(thm4_bound(4).unwrap(), 1.0 + 1.0 / 1920.0);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tuning::{cor1_threshold, cor2_threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSource {
    /// Half-half against the clairvoyant benchmark.
    Thm1,
    /// Two-stage, high probability.
    Thm2,
    /// M-stage, high probability.
    Thm3,
    /// Lower bound for any adaptive design.
    Thm4,
    /// Two-stage, in expectation, bounded outcomes.
    Cor1,
    /// M-stage, in expectation, bounded outcomes.
    Cor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub ratio_bound: f64,
    /// Clamped to `[0, 1]`. Expectation bounds report 1.
    pub probability_floor: f64,
    pub vacuous: bool,
    pub source: BoundSource,
}

impl BoundReport {
    fn with_raw_floor(source: BoundSource, ratio_bound: f64, raw_floor: f64) -> Self {
        Self {
            ratio_bound,
            probability_floor: raw_floor.clamp(0.0, 1.0),
            vacuous: raw_floor <= 0.0,
            source,
        }
    }
}

fn check_kappa(kappa1: f64, kappa0: f64) -> Result<()> {
    if !(kappa1 >= 1.0 && kappa0 >= 1.0 && kappa1.is_finite() && kappa0.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "kurtosis constants must be finite and >= 1, got ({kappa1}, {kappa0})"
        )));
    }
    Ok(())
}

/// Half-half is never worse than twice the clairvoyant value.
pub fn thm1_bound() -> BoundReport {
    BoundReport {
        ratio_bound: 2.0,
        probability_floor: 1.0,
        vacuous: false,
        source: BoundSource::Thm1,
    }
}

/// Two-stage design: ratio `1 + T^{-1/2+ε}` with probability at least
/// `1 − (κ₁+κ₀) T^{-ε}`. Needs `T ≥ 16`, `ε ∈ (0, 1/8)`.
pub fn thm2_bound(horizon: u64, eps: f64, kappa1: f64, kappa0: f64) -> Result<BoundReport> {
    if horizon < 16 {
        return Err(Error::OutOfRange(format!("T >= 16 required, got {horizon}")));
    }
    if !(eps > 0.0 && eps < 0.125) {
        return Err(Error::OutOfRange(format!("eps must lie in (0, 1/8), got {eps}")));
    }
    check_kappa(kappa1, kappa0)?;
    let t = horizon as f64;
    Ok(BoundReport::with_raw_floor(
        BoundSource::Thm2,
        1.0 + t.powf(-0.5 + eps),
        1.0 - (kappa1 + kappa0) * t.powf(-eps),
    ))
}

/// M-stage design under the geometric schedule: ratio
/// `1 + 4·15^{-1/M} T^{-(M-1)/M+ε}` with probability at least
/// `1 − (M−1)(κ₁+κ₀) T^{-ε}`. Needs `M ≥ 3`, `T ≥ 16`,
/// `ε ∈ (0, min(1/M, 1/100)]`.
pub fn thm3_bound(stages: usize, horizon: u64, eps: f64, kappa1: f64, kappa0: f64) -> Result<BoundReport> {
    if stages < 3 {
        return Err(Error::BadM { min: 3, got: stages });
    }
    if horizon < 16 {
        return Err(Error::OutOfRange(format!("T >= 16 required, got {horizon}")));
    }
    let mf = stages as f64;
    let eps_max = (1.0 / mf).min(0.01);
    if !(eps > 0.0 && eps <= eps_max) {
        return Err(Error::OutOfRange(format!("eps must lie in (0, {eps_max}], got {eps}")));
    }
    check_kappa(kappa1, kappa0)?;
    let t = horizon as f64;
    Ok(BoundReport::with_raw_floor(
        BoundSource::Thm3,
        1.0 + 4.0 * 15f64.powf(-1.0 / mf) * t.powf(-(mf - 1.0) / mf + eps),
        1.0 - (mf - 1.0) * (kappa1 + kappa0) * t.powf(-eps),
    ))
}

/// No adaptive design beats `1 + 1/(480 T)` on every instance.
pub fn thm4_bound(horizon: u64) -> Result<f64> {
    if horizon < 4 {
        return Err(Error::OutOfRange(format!("T >= 4 required, got {horizon}")));
    }
    Ok(1.0 + 1.0 / (480.0 * horizon as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corollary {
    Cor1,
    Cor2,
}

/// Expectation bounds for outcomes bounded by `C σ`:
///
/// * two-stage: `1 + 5 C² T^{-1/2} (log T)^{1/2}`;
/// * M-stage: `1 + 97 (1000/3)^{-1/M} C^{4(M-1)/M} T^{-(M-1)/M} (log T)^{(M-1)/M}`.
pub fn cor_bounds(which: Corollary, stages: usize, horizon: u64, c: f64) -> Result<BoundReport> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::OutOfRange(format!("C must be >= 1, got {c}")));
    }
    let t = horizon as f64;
    let (source, ratio_bound) = match which {
        Corollary::Cor1 => {
            let threshold = cor1_threshold(c);
            if t < threshold {
                return Err(Error::TooSmallT { t: horizon, threshold });
            }
            (BoundSource::Cor1, 1.0 + 5.0 * c * c * (t.ln() / t).sqrt())
        }
        Corollary::Cor2 => {
            if stages < 3 {
                return Err(Error::BadM { min: 3, got: stages });
            }
            let threshold = cor2_threshold(c);
            if t < threshold {
                return Err(Error::TooSmallT { t: horizon, threshold });
            }
            let mf = stages as f64;
            let k = (mf - 1.0) / mf;
            let value = 97.0 * (1000.0f64 / 3.0).powf(-1.0 / mf) * c.powf(4.0 * k) * t.powf(-k) * t.ln().powf(k);
            (BoundSource::Cor2, 1.0 + value)
        }
    };
    Ok(BoundReport {
        ratio_bound,
        probability_floor: 1.0,
        vacuous: false,
        source,
    })
}

/// A distribution on `{−1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointDist {
    pub p_neg: f64,
    pub p_zero: f64,
    pub p_pos: f64,
}

impl ThreePointDist {
    pub fn new(p_neg: f64, p_zero: f64, p_pos: f64) -> Result<Self> {
        let d = Self { p_neg, p_zero, p_pos };
        let ps = d.probs();
        if ps.iter().any(|p| !(*p >= 0.0 && p.is_finite())) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("{ps:?} is not a probability vector")));
        }
        Ok(d)
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        Self { p_neg: third, p_zero: third, p_pos: third }
    }

    /// `(p, 1 − 2p, p)`, variance `2p`.
    pub fn symmetric(p: f64) -> Result<Self> {
        Self::new(p, 1.0 - 2.0 * p, p)
    }

    pub fn probs(&self) -> [f64; 3] {
        [self.p_neg, self.p_zero, self.p_pos]
    }

    pub const SUPPORT: [f64; 3] = [-1.0, 0.0, 1.0];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// `E[(Y − EY)⁴] / σ⁴`; `None` for a point mass.
    pub kurtosis: Option<f64>,
}

/// Exact mean, variance and kurtosis.
pub fn three_point_moments(d: &ThreePointDist) -> Moments {
    let ps = d.probs();
    let mean: f64 = ps.iter().zip(ThreePointDist::SUPPORT).map(|(p, x)| p * x).sum();
    let central = |k: i32| -> f64 {
        ps.iter()
            .zip(ThreePointDist::SUPPORT)
            .map(|(p, x)| p * (x - mean).powi(k))
            .sum()
    };
    let variance = central(2);
    let kurtosis = (variance > 0.0).then(|| central(4) / (variance * variance));
    Moments { mean, variance, kurtosis }
}

/// Kurtosis, or `ZeroVariance` for a point mass.
pub fn three_point_kurtosis(d: &ThreePointDist) -> Result<f64> {
    three_point_moments(d).kurtosis.ok_or(Error::ZeroVariance)
}

/// `Σ aᵢ ln(aᵢ / bᵢ)` with `0 · ln(0/·) = 0`.
pub fn kl_three_point(a: &ThreePointDist, b: &ThreePointDist) -> Result<f64> {
    let mut kl = 0.0;
    for (pa, pb) in a.probs().into_iter().zip(b.probs()) {
        if pa == 0.0 {
            continue;
        }
        if pb == 0.0 {
            return Err(Error::InfiniteKl);
        }
        kl += pa * (pa / pb).ln();
    }
    Ok(kl.max(0.0))
}

/// The pair of hard-to-distinguish arms behind the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub nu: ThreePointDist,
    pub nu_prime: ThreePointDist,
    pub eps: f64,
}

/// `ε = 1/(3√T)`, `ν` uniform on `{−1, 0, 1}` and
/// `ν′ = (1/3 + ε/2, 1/3 − ε, 1/3 + ε/2)`.
pub fn lower_bound_instance(horizon: u64) -> Result<LowerBoundInstance> {
    if horizon < 4 {
        return Err(Error::OutOfRange(format!("T >= 4 required, got {horizon}")));
    }
    let eps = 1.0 / (3.0 * (horizon as f64).sqrt());
    let third = 1.0 / 3.0;
    Ok(LowerBoundInstance {
        nu: ThreePointDist::uniform(),
        nu_prime: ThreePointDist::new(third + eps / 2.0, third - eps, third + eps / 2.0)?,
        eps,
    })
}
