use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::allocation::{mean, sample_variance, ArmMoments};
use crate::bounds::{three_point_moments, ThreePointDist};
use crate::data::{synthetic_table1, TABLE1_ROWS_PER_ARM};
use crate::designs::Arm;
use crate::error::{Error, Result};

/// A super-population of i.i.d. potential-outcome pairs.
///
/// Pairs are drawn with independent arms; only marginals matter to the
/// designs and the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Population {
    Gaussian {
        mu1: f64,
        sigma1: f64,
        mu0: f64,
        sigma0: f64,
    },
    /// Each arm on `{−scale, 0, +scale}`.
    ThreePoint {
        treated: ThreePointDist,
        control: ThreePointDist,
        scale1: f64,
        scale0: f64,
    },
    /// `Y(w) = σ(w) Z` with `Z = ±c` w.p. `1/(2c²)` each and 0 otherwise, so
    /// `Var Z = 1` and `|Y(w)| ≤ c σ(w)`.
    ScaledBounded { c: f64, sigma1: f64, sigma0: f64 },
    /// Resampling with replacement from fixed arrays.
    Empirical { treated: Vec<f64>, control: Vec<f64> },
}

impl Population {
    pub fn gaussian(mu1: f64, sigma1: f64, mu0: f64, sigma0: f64) -> Result<Self> {
        let p = Population::Gaussian { mu1, sigma1, mu0, sigma0 };
        p.validate()?;
        Ok(p)
    }

    pub fn scaled_bounded(c: f64, sigma1: f64, sigma0: f64) -> Result<Self> {
        let p = Population::ScaledBounded { c, sigma1, sigma0 };
        p.validate()?;
        Ok(p)
    }

    pub fn empirical(treated: Vec<f64>, control: Vec<f64>) -> Result<Self> {
        let p = Population::Empirical { treated, control };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        let finite_sd = |s: f64| s.is_finite() && s >= 0.0;
        match self {
            Population::Gaussian { mu1, sigma1, mu0, sigma0 } => {
                if !(mu1.is_finite() && mu0.is_finite() && finite_sd(*sigma1) && finite_sd(*sigma0)) {
                    return bad("gaussian needs finite means and nonnegative sigmas");
                }
            }
            Population::ThreePoint { treated, control, scale1, scale0 } => {
                ThreePointDist::new(treated.p_neg, treated.p_zero, treated.p_pos)?;
                ThreePointDist::new(control.p_neg, control.p_zero, control.p_pos)?;
                if !(finite_sd(*scale1) && finite_sd(*scale0)) {
                    return bad("three-point scales must be finite and nonnegative");
                }
            }
            Population::ScaledBounded { c, sigma1, sigma0 } => {
                if !(c.is_finite() && *c >= 1.0) {
                    return bad("bounded population needs c >= 1");
                }
                if !(finite_sd(*sigma1) && finite_sd(*sigma0)) {
                    return bad("bounded population needs nonnegative sigmas");
                }
            }
            Population::Empirical { treated, control } => {
                if treated.is_empty() {
                    return Err(Error::EmptyArm("treated"));
                }
                if control.is_empty() {
                    return Err(Error::EmptyArm("control"));
                }
                if treated.iter().chain(control).any(|v| !v.is_finite()) {
                    return bad("empirical arrays must be finite");
                }
            }
        }
        Ok(())
    }

    /// Standard deviations used as the ratio benchmark. Empirical
    /// populations report the arrays' sample standard deviations (divisor
    /// `n − 1`); the benchmark ratio is invariant to the common scale.
    pub fn true_moments(&self) -> ArmMoments {
        match self {
            Population::Gaussian { sigma1, sigma0, .. } | Population::ScaledBounded { sigma1, sigma0, .. } => {
                ArmMoments { sigma1: *sigma1, sigma0: *sigma0 }
            }
            Population::ThreePoint { treated, control, scale1, scale0 } => ArmMoments {
                sigma1: scale1 * three_point_moments(treated).variance.sqrt(),
                sigma0: scale0 * three_point_moments(control).variance.sqrt(),
            },
            Population::Empirical { treated, control } => ArmMoments {
                sigma1: plug_in_sd(treated),
                sigma0: plug_in_sd(control),
            },
        }
    }

    /// Exact variances of a single draw from each arm.
    pub fn draw_variances(&self) -> (f64, f64) {
        match self {
            Population::Empirical { treated, control } => (population_variance(treated), population_variance(control)),
            _ => {
                let m = self.true_moments();
                (m.sigma1 * m.sigma1, m.sigma0 * m.sigma0)
            }
        }
    }

    /// `E[Y(1) − Y(0)]`.
    pub fn true_tau(&self) -> f64 {
        match self {
            Population::Gaussian { mu1, mu0, .. } => mu1 - mu0,
            Population::ThreePoint { treated, control, scale1, scale0 } => {
                scale1 * three_point_moments(treated).mean - scale0 * three_point_moments(control).mean
            }
            Population::ScaledBounded { .. } => 0.0,
            Population::Empirical { treated, control } => {
                mean(treated).expect("validated") - mean(control).expect("validated")
            }
        }
    }

    /// `n` i.i.d. outcomes for one arm.
    pub fn draw<R: Rng + ?Sized>(&self, arm: Arm, n: usize, rng: &mut R) -> Vec<f64> {
        let treated = arm == Arm::Treated;
        match self {
            Population::Gaussian { mu1, sigma1, mu0, sigma0 } => {
                let (mu, sigma) = if treated { (*mu1, *sigma1) } else { (*mu0, *sigma0) };
                let normal = Normal::new(mu, sigma).expect("validated sigma");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            Population::ThreePoint { treated: d1, control: d0, scale1, scale0 } => {
                let (d, s) = if treated { (d1, *scale1) } else { (d0, *scale0) };
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if u < d.p_neg {
                            -s
                        } else if u < d.p_neg + d.p_zero {
                            0.0
                        } else {
                            s
                        }
                    })
                    .collect()
            }
            Population::ScaledBounded { c, sigma1, sigma0 } => {
                let sigma = if treated { *sigma1 } else { *sigma0 };
                let tail = 1.0 / (2.0 * c * c);
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if u < tail {
                            -c * sigma
                        } else if u < 2.0 * tail {
                            c * sigma
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            Population::Empirical { treated: a1, control: a0 } => {
                let a = if treated { a1 } else { a0 };
                (0..n).map(|_| a[rng.random_range(0..a.len())]).collect()
            }
        }
    }

    /// Short label for tables, e.g. `gaussian:rho=2`.
    pub fn label(&self) -> String {
        match self {
            Population::Gaussian { sigma1, sigma0, .. } => format!("gaussian:s1={sigma1},s0={sigma0}"),
            Population::ThreePoint { treated, control, .. } => {
                format!("threepoint:p1={},p0={}", treated.p_pos, control.p_pos)
            }
            Population::ScaledBounded { c, sigma1, sigma0 } => format!("bounded:c={c},s1={sigma1},s0={sigma0}"),
            Population::Empirical { treated, control } => {
                format!("empirical:n1={},n0={}", treated.len(), control.len())
            }
        }
    }
}

fn plug_in_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        0.0
    } else {
        sample_variance(values).expect("n >= 2").sqrt()
    }
}

fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values).expect("validated");
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// A population described by a short string.
///
/// * `gaussian:rho=2` (treated sd `rho`, control sd 1, zero means), or
///   `gaussian:s1=..,s0=..,m1=..,m0=..`;
/// * `threepoint:p=0.3` (both arms `(p, 1−2p, p)`), or `threepoint:p1=..,p0=..`;
/// * `bounded:c=2,rho=3` (or `s1=..,s0=..`);
/// * `table1` or `table1:n=40,seed=0`, a resampling population built from
///   the moment-matched synthetic clicks-per-million arrays.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationSpec(pub String);

impl PopulationSpec {
    pub fn build(&self) -> Result<Population> {
        let (kind, rest) = self.0.split_once(':').unwrap_or((self.0.as_str(), ""));
        let params = parse_params(rest)?;
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let known = |allowed: &[&str]| -> Result<()> {
            match params.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(Error::InvalidSpec(format!("unknown parameter {k:?} for {kind}"))),
                None => Ok(()),
            }
        };
        let pop = match kind {
            "gaussian" => {
                known(&["rho", "s1", "s0", "m1", "m0"])?;
                let rho = params.get("rho").copied();
                let s1 = params.get("s1").copied().or(rho).unwrap_or(1.0);
                Population::gaussian(get("m1", 0.0), s1, get("m0", 0.0), get("s0", 1.0))?
            }
            "threepoint" => {
                known(&["p", "p1", "p0"])?;
                let p = get("p", 1.0 / 3.0);
                Population::ThreePoint {
                    treated: ThreePointDist::symmetric(get("p1", p))?,
                    control: ThreePointDist::symmetric(get("p0", p))?,
                    scale1: 1.0,
                    scale0: 1.0,
                }
            }
            "bounded" => {
                known(&["c", "rho", "s1", "s0"])?;
                let rho = params.get("rho").copied();
                let s1 = params.get("s1").copied().or(rho).unwrap_or(1.0);
                Population::scaled_bounded(get("c", 1.0), s1, get("s0", 1.0))?
            }
            "table1" => {
                known(&["n", "seed"])?;
                let n = get("n", TABLE1_ROWS_PER_ARM as f64);
                let seed = get("seed", 0.0);
                if n.fract() != 0.0 || seed.fract() != 0.0 || n < 2.0 || seed < 0.0 {
                    return Err(Error::InvalidSpec("table1 needs integer n >= 2 and seed >= 0".into()));
                }
                let arrays = synthetic_table1(n as usize, seed as u64)?;
                Population::empirical(arrays.treated, arrays.control)?
            }
            other => return Err(Error::InvalidSpec(format!("unknown population kind {other:?}"))),
        };
        pop.validate()?;
        Ok(pop)
    }
}

impl fmt::Display for PopulationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PopulationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = PopulationSpec(s.to_string());
        spec.build()?;
        Ok(spec)
    }
}

fn parse_params(s: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got {part:?}")))?;
        let value = parse_number(v.trim())?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

/// A float or a fraction such as `1/3`.
fn parse_number(s: &str) -> Result<f64> {
    let bad = || Error::InvalidSpec(format!("not a number: {s:?}"));
    let v = match s.split_once('/') {
        Some((a, b)) => a.parse::<f64>().map_err(|_| bad())? / b.parse::<f64>().map_err(|_| bad())?,
        None => s.parse::<f64>().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}
