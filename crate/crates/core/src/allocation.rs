//! Closed-form allocation math.
//!
//! Everything here is a pure function of arm standard deviations and
//! subject counts. The objective throughout is the proxy mean squared error
//!
//! ```text
//! V(T(1), T(0)) = σ²(1) / T(1) + σ²(0) / T(0)
//! ```
//!
//! which is the variance of the difference-in-means estimator when the arm
//! sizes are fixed in advance. Its minimum over real splits of a horizon `T`
//! is `(σ(1) + σ(0))² / T`, attained by splitting proportionally to the
//! standard deviations (Neyman allocation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations of the treated (`sigma1`) and control (`sigma0`) arms.
///
/// Either value may be zero. A zero-sigma arm is where the half-half split
/// is worst in the competitive sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMoments {
    pub sigma1: f64,
    pub sigma0: f64,
}

impl ArmMoments {
    pub fn new(sigma1: f64, sigma0: f64) -> Result<Self> {
        if !(sigma1 >= 0.0 && sigma0 >= 0.0) || !sigma1.is_finite() || !sigma0.is_finite() {
            return Err(Error::OutOfRange(format!(
                "standard deviations must be finite and nonnegative, got ({sigma1}, {sigma0})"
            )));
        }
        Ok(Self { sigma1, sigma0 })
    }

    /// The same moments with the arms exchanged.
    pub fn swapped(self) -> Self {
        Self {
            sigma1: self.sigma0,
            sigma0: self.sigma1,
        }
    }

    /// `σ(1) / σ(0)`, `+∞` when only the control sigma is zero.
    pub fn ratio(&self) -> f64 {
        self.sigma1 / self.sigma0
    }
}

/// Integer treated/control counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub t1: u64,
    pub t0: u64,
}

impl Allocation {
    pub const fn new(t1: u64, t0: u64) -> Self {
        Self { t1, t0 }
    }

    pub const fn total(&self) -> u64 {
        self.t1 + self.t0
    }

    pub const fn swapped(self) -> Self {
        Self {
            t1: self.t0,
            t0: self.t1,
        }
    }
}

impl std::ops::Add for Allocation {
    type Output = Allocation;

    fn add(self, rhs: Allocation) -> Allocation {
        Allocation::new(self.t1 + rhs.t1, self.t0 + rhs.t0)
    }
}

impl std::ops::AddAssign for Allocation {
    fn add_assign(&mut self, rhs: Allocation) {
        self.t1 += rhs.t1;
        self.t0 += rhs.t0;
    }
}

/// Real-valued counts, before any rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealAllocation {
    pub t1: f64,
    pub t0: f64,
}

impl RealAllocation {
    pub fn total(&self) -> f64 {
        self.t1 + self.t0
    }
}

impl From<Allocation> for RealAllocation {
    fn from(a: Allocation) -> Self {
        RealAllocation {
            t1: a.t1 as f64,
            t0: a.t0 as f64,
        }
    }
}

/// Anything that can report per-arm counts as reals.
pub trait ArmCounts {
    fn counts(&self) -> (f64, f64);
}

impl ArmCounts for Allocation {
    fn counts(&self) -> (f64, f64) {
        (self.t1 as f64, self.t0 as f64)
    }
}

impl ArmCounts for RealAllocation {
    fn counts(&self) -> (f64, f64) {
        (self.t1, self.t0)
    }
}

fn arm_term(sigma: f64, count: f64) -> Result<f64> {
    if count > 0.0 {
        Ok(sigma * sigma / count)
    } else if sigma == 0.0 {
        // σ²/0 with σ = 0 is taken as its limit, 0.
        Ok(0.0)
    } else {
        Err(Error::InfiniteVariance)
    }
}

/// Proxy mean squared error `σ²(1)/T(1) + σ²(0)/T(0)`.
///
/// An arm with no subjects contributes zero when its sigma is zero and makes
/// the value infinite otherwise, reported as [`Error::InfiniteVariance`].
pub fn proxy_mse<A: ArmCounts>(alloc: &A, moments: &ArmMoments) -> Result<f64> {
    let (t1, t0) = alloc.counts();
    Ok(arm_term(moments.sigma1, t1)? + arm_term(moments.sigma0, t0)?)
}

/// Share of `horizon` going to each arm when splitting proportionally to
/// `weights`. Two zero weights split evenly (0/(0+0) is read as 1/2).
fn proportional_split(w1: f64, w0: f64, horizon: f64) -> RealAllocation {
    let sum = w1 + w0;
    if sum == 0.0 {
        return RealAllocation {
            t1: horizon / 2.0,
            t0: horizon / 2.0,
        };
    }
    RealAllocation {
        t1: w1 / sum * horizon,
        t0: w0 / sum * horizon,
    }
}

/// Neyman allocation for known standard deviations, in reals.
pub fn clairvoyant_allocation(moments: &ArmMoments, horizon: u64) -> RealAllocation {
    proportional_split(moments.sigma1, moments.sigma0, horizon as f64)
}

/// Integer version of [`clairvoyant_allocation`].
///
/// The proxy MSE is convex in `t1`, so the integer optimum over
/// `1..=T-1` is the floor or the ceiling of the real optimum; this picks
/// whichever of the two has the lower value (ties go to the larger `t1`).
/// Plain nearest-integer rounding can land on the worse neighbour.
pub fn clairvoyant_integer_allocation(moments: &ArmMoments, horizon: u64) -> Allocation {
    assert!(horizon >= 2, "integer allocation needs T >= 2");
    let real = clairvoyant_allocation(moments, horizon);
    let lo = (real.t1.floor() as u64).clamp(1, horizon - 1);
    let hi = (real.t1.ceil() as u64).clamp(1, horizon - 1);
    let value = |t1: u64| proxy_mse(&Allocation::new(t1, horizon - t1), moments).unwrap_or(f64::INFINITY);
    let t1 = if value(lo) < value(hi) { lo } else { hi };
    Allocation::new(t1, horizon - t1)
}

/// `(σ(1) + σ(0))² / T`, the clairvoyant benchmark value.
pub fn optimal_proxy_mse(moments: &ArmMoments, horizon: u64) -> f64 {
    let s = moments.sigma1 + moments.sigma0;
    s * s / horizon as f64
}

/// Realized proxy MSE divided by the clairvoyant optimum.
///
/// Returns `+∞` (not an error) when an arm with positive sigma received no
/// subjects. Fails with [`Error::ZeroBenchmark`] when both sigmas are zero.
pub fn competitive_ratio(alloc: &Allocation, moments: &ArmMoments, horizon: u64) -> Result<f64> {
    let best = optimal_proxy_mse(moments, horizon);
    if best == 0.0 {
        return Err(Error::ZeroBenchmark);
    }
    match proxy_mse(alloc, moments) {
        Ok(v) => Ok(v / best),
        Err(Error::InfiniteVariance) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Competitive ratio of the half-half split as a function of `ρ = σ(1)/σ(0)`:
/// `2(ρ² + 1)/(ρ + 1)²`. `ρ = +∞` evaluates to its limit 2.
pub fn half_half_ratio(rho: f64) -> f64 {
    assert!(rho >= 0.0, "rho must be nonnegative");
    if rho.is_infinite() {
        return 2.0;
    }
    2.0 * (rho * rho + 1.0) / ((rho + 1.0) * (rho + 1.0))
}

pub fn mean(sample: &[f64]) -> Option<f64> {
    if sample.is_empty() {
        None
    } else {
        Some(sample.iter().sum::<f64>() / sample.len() as f64)
    }
}

/// Unbiased sample variance (divisor `n - 1`), computed in two passes.
pub fn sample_variance(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewObservations { got: sample.len() });
    }
    let m = mean(sample).expect("nonempty");
    let ss: f64 = sample.iter().map(|y| (y - m) * (y - m)).sum();
    Ok(ss / (sample.len() - 1) as f64)
}

/// Plug-in Neyman split using estimated standard deviations.
pub fn plug_in_allocation(sigma_hat: &ArmMoments, horizon: u64) -> RealAllocation {
    proportional_split(sigma_hat.sigma1, sigma_hat.sigma0, horizon as f64)
}

/// `mean(treated) - mean(control)`.
pub fn difference_in_means(treated: &[f64], control: &[f64]) -> Result<f64> {
    let m1 = mean(treated).ok_or(Error::EmptyArm("treated"))?;
    let m0 = mean(control).ok_or(Error::EmptyArm("control"))?;
    Ok(m1 - m0)
}

/// Plug-in standard error `sqrt(σ̂²(1)/T(1) + σ̂²(0)/T(0))` of the
/// difference-in-means estimate. This ignores the adaptivity of the arm
/// sizes, so treat it as a rough guide rather than a calibrated interval.
pub fn plug_in_standard_error(treated: &[f64], control: &[f64]) -> Result<f64> {
    let v1 = sample_variance(treated)?;
    let v0 = sample_variance(control)?;
    Ok((v1 / treated.len() as f64 + v0 / control.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s1: f64, s0: f64) -> ArmMoments {
        ArmMoments::new(s1, s0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn proxy_mse_examples() {
        assert!(close(proxy_mse(&Allocation::new(50, 50), &m(1.0, 1.0)).unwrap(), 0.04, 1e-15));
        assert!(close(proxy_mse(&Allocation::new(60, 30), &m(2.0, 1.0)).unwrap(), 0.1, 1e-15));
        assert!(close(proxy_mse(&Allocation::new(10, 0), &m(1.0, 0.0)).unwrap(), 0.1, 1e-15));
    }

    #[test]
    fn proxy_mse_zero_count_positive_sigma() {
        assert_eq!(
            proxy_mse(&Allocation::new(10, 0), &m(1.0, 0.5)),
            Err(Error::InfiniteVariance)
        );
    }

    #[test]
    fn clairvoyant_examples() {
        let a = clairvoyant_allocation(&m(2.0, 1.0), 90);
        assert!(close(a.t1, 60.0, 1e-12) && close(a.t0, 30.0, 1e-12));
        assert!(close(proxy_mse(&a, &m(2.0, 1.0)).unwrap(), 0.1, 1e-12));
        let a = clairvoyant_allocation(&m(1.0, 1.0), 100);
        assert_eq!((a.t1, a.t0), (50.0, 50.0));
        let a = clairvoyant_allocation(&m(0.0, 0.0), 10);
        assert_eq!((a.t1, a.t0), (5.0, 5.0));
    }

    #[test]
    fn clairvoyant_matches_exhaustive_search_at_90() {
        let mom = m(2.0, 1.0);
        let best = (1..90u64)
            .min_by(|&a, &b| {
                let va = proxy_mse(&Allocation::new(a, 90 - a), &mom).unwrap();
                let vb = proxy_mse(&Allocation::new(b, 90 - b), &mom).unwrap();
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        assert_eq!(best, 60);
        assert_eq!(clairvoyant_integer_allocation(&mom, 90), Allocation::new(60, 30));
    }

    #[test]
    fn optimal_value_examples() {
        assert!(close(optimal_proxy_mse(&m(2.0, 1.0), 90), 0.1, 1e-15));
        assert_eq!(optimal_proxy_mse(&m(1.0, 0.0), 4), 0.25);
        let v = optimal_proxy_mse(&m(12256.0, 24850.0), 1000);
        assert!((v - 1_376_855.236).abs() < 1e-3);
    }

    #[test]
    fn competitive_ratio_examples() {
        assert_eq!(competitive_ratio(&Allocation::new(50, 50), &m(1.0, 1.0), 100).unwrap(), 1.0);
        assert!(close(
            competitive_ratio(&Allocation::new(50, 50), &m(1.0, 0.0), 100).unwrap(),
            2.0,
            1e-15
        ));
        assert!(close(
            competitive_ratio(&Allocation::new(60, 30), &m(2.0, 1.0), 90).unwrap(),
            1.0,
            1e-12
        ));
        assert_eq!(
            competitive_ratio(&Allocation::new(100, 0), &m(1.0, 1.0), 100).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            competitive_ratio(&Allocation::new(5, 5), &m(0.0, 0.0), 10),
            Err(Error::ZeroBenchmark)
        );
    }

    #[test]
    fn half_half_ratio_examples() {
        assert_eq!(half_half_ratio(1.0), 1.0);
        assert_eq!(half_half_ratio(0.0), 2.0);
        assert_eq!(half_half_ratio(f64::INFINITY), 2.0);
        let rho = 12256.0 / 24850.0;
        assert!((half_half_ratio(rho) - 1.1152).abs() < 5e-5);
    }

    #[test]
    fn sample_variance_examples() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(sample_variance(&[4.2; 7]).unwrap(), 0.0);
        assert_eq!(sample_variance(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(sample_variance(&[1.0]), Err(Error::TooFewObservations { got: 1 }));
    }

    #[test]
    fn plug_in_examples() {
        let a = plug_in_allocation(&m(3.0, 1.0), 100);
        assert_eq!((a.t1, a.t0), (75.0, 25.0));
        let a = plug_in_allocation(&m(0.0, 0.0), 8);
        assert_eq!((a.t1, a.t0), (4.0, 4.0));
        let a = plug_in_allocation(&m(5.0, 5.0), 7);
        assert_eq!((a.t1, a.t0), (3.5, 3.5));
    }

    #[test]
    fn difference_in_means_examples() {
        assert_eq!(difference_in_means(&[2.0, 4.0], &[1.0, 1.0]).unwrap(), 2.0);
        let x = [0.3, -1.2, 7.5];
        assert_eq!(difference_in_means(&x, &x).unwrap(), 0.0);
        assert_eq!(difference_in_means(&[], &x), Err(Error::EmptyArm("treated")));
        assert_eq!(difference_in_means(&x, &[]), Err(Error::EmptyArm("control")));
    }

    #[test]
    fn nearest_rounding_can_pick_the_worse_neighbour() {
        // Real optimum 7.5 rounds up to 8, but 7 is strictly better:
        // 9/8 + 1/2 = 1.625 against 9/7 + 1/3 = 1.6190...
        let mom = m(3.0, 1.0);
        assert_eq!(clairvoyant_allocation(&mom, 10).t1, 7.5);
        let best = clairvoyant_integer_allocation(&mom, 10);
        assert_eq!(best, Allocation::new(7, 3));
        let v = |t1: u64| proxy_mse(&Allocation::new(t1, 10 - t1), &mom).unwrap();
        assert!((v(8) - 1.625).abs() < 1e-15);
        assert!(v(7) < v(8));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ratio_at_least_one(s1 in 0.01f64..100.0, s0 in 0.01f64..100.0, t in 2u64..2000, frac in 0.0f64..1.0) {
                let t1 = ((t as f64 * frac) as u64).clamp(1, t - 1);
                let r = competitive_ratio(&Allocation::new(t1, t - t1), &m(s1, s0), t).unwrap();
                prop_assert!(r >= 1.0 - 1e-12);
            }

            #[test]
            fn arm_swap_symmetry(s1 in 0.0f64..50.0, s0 in 0.01f64..50.0, t1 in 1u64..500, t0 in 1u64..500) {
                let a = Allocation::new(t1, t0);
                let mom = m(s1, s0);
                let v = proxy_mse(&a, &mom).unwrap();
                let vs = proxy_mse(&a.swapped(), &mom.swapped()).unwrap();
                prop_assert!((v - vs).abs() <= 1e-12 * v.max(1e-300));
                let r = competitive_ratio(&a, &mom, t1 + t0).unwrap();
                let rs = competitive_ratio(&a.swapped(), &mom.swapped(), t1 + t0).unwrap();
                prop_assert!((r - rs).abs() <= 1e-12 * r);
            }

            #[test]
            fn splitting_across_stages_keeps_value(s1 in 0.1f64..10.0, s0 in 0.1f64..10.0,
                                                   parts in proptest::collection::vec((0u64..50, 0u64..50), 1..6)) {
                let total = parts.iter().fold(Allocation::default(), |acc, &(a, b)| acc + Allocation::new(a, b));
                prop_assume!(total.t1 > 0 && total.t0 > 0);
                let mom = m(s1, s0);
                let direct = proxy_mse(&Allocation::new(total.t1, total.t0), &mom).unwrap();
                let summed = proxy_mse(&total, &mom).unwrap();
                prop_assert_eq!(direct, summed);
            }
        }
    }
}
