//! Tuning-parameter schedules and their feasibility predicates.
//!
//! An `M`-stage schedule is a list `β_1, ..., β_M` with `β_M = 1`. Stage `m`
//! ends once `β_m T^{m/M}` subjects have been assigned in total, so the
//! schedule is feasible when
//!
//! ```text
//! 1 < β_1 T^{1/M} < β_2 T^{2/M} < ... < β_{M-1} T^{(M-1)/M} < T.
//! ```
//!
//! The two-stage design is parameterized by a single `β`, whose boundary is
//! `β √T`. Schedules are plain reals here; rounding is owned by
//! [`crate::designs`]. `log` is the natural logarithm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    /// `β_m = 6 · 15^{-m/M}`.
    Thm3,
    /// Two-stage `β = 4 C² (log T)^{1/2}`.
    Cor1,
    /// `β_m = (400/3) C⁴ log T · ((1000/3) C⁴ log T)^{-m/M}`.
    Cor2,
    Custom,
}

/// A tuning schedule. Serializes as `{name, M, betas[], params{}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub name: ScheduleName,
    #[serde(rename = "M")]
    pub stages: usize,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Schedule {
    /// A custom schedule. `betas` must either have length `stages` with a
    /// trailing 1, or be a single `β` for a two-stage design.
    pub fn custom(stages: usize, betas: Vec<f64>) -> Result<Self> {
        let s = Schedule {
            name: ScheduleName::Custom,
            stages,
            betas,
            params: BTreeMap::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn two_stage(beta: f64) -> Result<Self> {
        Self::custom(2, vec![beta])
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 2 {
            return Err(Error::BadM { min: 2, got: self.stages });
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidSpec("betas must be positive and finite".into()));
        }
        let single = self.stages == 2 && self.betas.len() == 1;
        let full = self.betas.len() == self.stages && self.betas[self.stages - 1] == 1.0;
        if !(single || full) {
            return Err(Error::InvalidSpec(format!(
                "expected {} betas ending in 1 (or a single beta for M = 2), got {:?}",
                self.stages, self.betas
            )));
        }
        Ok(())
    }

    /// `β_m` for `m` in `1..stages`.
    pub fn beta(&self, m: usize) -> f64 {
        self.betas[m - 1]
    }

    /// Real cumulative boundary `β_m T^{m/M}` after stage `m`; `T` at `m = M`.
    pub fn boundary(&self, m: usize, horizon: u64) -> f64 {
        let t = horizon as f64;
        if m >= self.stages {
            return t;
        }
        self.beta(m) * t.powf(m as f64 / self.stages as f64)
    }
}

/// `β_m = 6 · 15^{-m/M}` for `m < M`, `β_M = 1`.
pub fn thm3_schedule(stages: usize) -> Result<Schedule> {
    if stages < 3 {
        return Err(Error::BadM { min: 3, got: stages });
    }
    let mf = stages as f64;
    let mut betas: Vec<f64> = (1..stages).map(|m| 6.0 * 15f64.powf(-(m as f64) / mf)).collect();
    betas.push(1.0);
    Ok(Schedule {
        name: ScheduleName::Thm3,
        stages,
        betas,
        params: BTreeMap::new(),
    })
}

/// Smallest horizon admitted by the two-stage expectation bound: `320^{5/4} C⁵`.
pub fn cor1_threshold(c: f64) -> f64 {
    320f64.powf(1.25) * c.powi(5)
}

/// Smallest horizon admitted by the multi-stage expectation bound:
/// `(5000/3)^{5/4} C⁵`.
pub fn cor2_threshold(c: f64) -> f64 {
    (5000.0f64 / 3.0).powf(1.25) * c.powi(5)
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::OutOfRange(format!("C must be >= 1, got {c}")));
    }
    Ok(())
}

/// `β = 4 C² (log T)^{1/2}`, admissible once `T ≥ 320^{5/4} C⁵`.
///
/// Also certifies `β √T ≤ T/2`, which the threshold guarantees.
pub fn cor1_beta(horizon: u64, c: f64) -> Result<f64> {
    check_c(c)?;
    let threshold = cor1_threshold(c);
    let t = horizon as f64;
    if t < threshold {
        return Err(Error::TooSmallT { t: horizon, threshold });
    }
    let beta = 4.0 * c * c * t.ln().sqrt();
    debug_assert!(beta * t.sqrt() <= t / 2.0);
    Ok(beta)
}

pub fn cor1_schedule(horizon: u64, c: f64) -> Result<Schedule> {
    let beta = cor1_beta(horizon, c)?;
    Ok(Schedule {
        name: ScheduleName::Cor1,
        stages: 2,
        betas: vec![beta],
        params: BTreeMap::from([("C".to_string(), c)]),
    })
}

/// The geometric schedule `β_m = (400/3) C⁴ log T · ((1000/3) C⁴ log T)^{-m/M}`.
pub fn cor2_schedule(stages: usize, horizon: u64, c: f64) -> Result<Schedule> {
    if stages < 3 {
        return Err(Error::BadM { min: 3, got: stages });
    }
    check_c(c)?;
    let threshold = cor2_threshold(c);
    let t = horizon as f64;
    if t < threshold {
        return Err(Error::TooSmallT { t: horizon, threshold });
    }
    let log_t = t.ln();
    let scale = 1000.0 / 3.0 * c.powi(4) * log_t;
    let mf = stages as f64;
    let mut betas: Vec<f64> = (1..stages)
        .map(|m| 400.0 / 3.0 * c.powi(4) * log_t * scale.powf(-(m as f64) / mf))
        .collect();
    betas.push(1.0);
    Ok(Schedule {
        name: ScheduleName::Cor2,
        stages,
        betas,
        params: BTreeMap::from([("C".to_string(), c)]),
    })
}

/// Which part of the feasibility chain broke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Human-readable link, e.g. `"b_1 < b_2"`.
    pub link: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub ok: bool,
    /// Real cumulative boundaries `β_m T^{m/M}`, `m = 1..M-1`.
    pub boundaries: Vec<f64>,
    pub violation: Option<Violation>,
}

/// Round half up, the rounding rule used for every stage boundary.
pub fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor().max(0.0) as u64
}

/// Checks the strict chain `1 < b_1 < ... < b_{M-1} < T` on reals, then the
/// rounded quantities the designs will actually use: the stage-1 per-arm
/// size `round(b_1 / 2)` must reach `min_arm_obs`, and the rounded balanced
/// boundaries `2 round(b_m / 2)` must be non-decreasing and stay within `T`.
pub fn feasibility_check(schedule: &Schedule, horizon: u64, min_arm_obs: u64) -> FeasibilityReport {
    let stages = schedule.stages;
    let boundaries: Vec<f64> = (1..stages).map(|m| schedule.boundary(m, horizon)).collect();
    let fail = |link: String, detail: String| FeasibilityReport {
        ok: false,
        boundaries: boundaries.clone(),
        violation: Some(Violation { link, detail }),
    };
    let t = horizon as f64;

    if !(1.0 < boundaries[0]) {
        return fail("1 < b_1".into(), format!("b_1 = {}", boundaries[0]));
    }
    for m in 1..boundaries.len() {
        if !(boundaries[m - 1] < boundaries[m]) {
            return fail(
                format!("b_{} < b_{}", m, m + 1),
                format!("b_{} = {}, b_{} = {}", m, boundaries[m - 1], m + 1, boundaries[m]),
            );
        }
    }
    let last = boundaries[boundaries.len() - 1];
    if !(last < t) {
        return fail(format!("b_{} < T", stages - 1), format!("b_{} = {last}, T = {horizon}", stages - 1));
    }

    let first_arm = round_half_up(boundaries[0] / 2.0);
    if first_arm < min_arm_obs {
        return fail(
            "round(b_1 / 2) >= min_arm_obs".into(),
            format!("stage-1 per-arm size {first_arm} < {min_arm_obs}"),
        );
    }
    let mut prev = 0;
    for (i, b) in boundaries.iter().enumerate() {
        let rounded = 2 * round_half_up(b / 2.0);
        if rounded < prev {
            return fail(
                format!("rounded b_{} <= rounded b_{}", i, i + 1),
                format!("{prev} > {rounded}"),
            );
        }
        if rounded > horizon {
            return fail(format!("rounded b_{} <= T", i + 1), format!("{rounded} > {horizon}"));
        }
        prev = rounded;
    }
    FeasibilityReport {
        ok: true,
        boundaries,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thm3_values() {
        let s = thm3_schedule(3).unwrap();
        assert!((s.betas[0] - 2.43288).abs() < 1e-4);
        assert!((s.betas[1] - 0.98648).abs() < 1e-4);
        assert_eq!(s.betas[2], 1.0);
        assert!((s.betas[1] / s.betas[0] - 15f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        let s10 = thm3_schedule(10).unwrap();
        assert!((s10.betas[8] - 6.0 * 15f64.powf(-0.9)).abs() < 1e-15);
        assert_eq!(thm3_schedule(2), Err(Error::BadM { min: 3, got: 2 }));
    }

    #[test]
    fn cor1_examples() {
        let t = 1u64 << 21;
        let beta = cor1_beta(t, 1.0).unwrap();
        assert!((beta - 4.0 * (21.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!(beta * (t as f64).sqrt() <= t as f64 / 2.0);
        assert!(matches!(cor1_beta(100, 1.0), Err(Error::TooSmallT { .. })));
        for c in [1.0, 1.5, 2.0, 3.0] {
            let t0 = cor1_threshold(c).ceil() as u64;
            for t in [t0, t0 * 3, t0 * 100] {
                let b = cor1_beta(t, c).unwrap();
                assert!(b * (t as f64).sqrt() / t as f64 <= 0.5);
            }
        }
    }

    #[test]
    fn cor2_examples() {
        let s = cor2_schedule(3, 20_000, 1.0).unwrap();
        let rep = feasibility_check(&s, 20_000, 2);
        assert!(rep.ok, "{rep:?}");
        assert!(matches!(cor2_schedule(3, 1000, 1.0), Err(Error::TooSmallT { .. })));
        // Geometric telescoping of the boundaries.
        let t = 50_000u64;
        let s = cor2_schedule(5, t, 1.2).unwrap();
        let expect = (t as f64 / (1000.0 / 3.0 * 1.2f64.powi(4) * (t as f64).ln())).powf(1.0 / 5.0);
        for m in 1..4 {
            let r = s.boundary(m + 1, t) / s.boundary(m, t);
            assert!((r - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasibility_check(&thm3_schedule(3).unwrap(), 16, 2).ok);
        let custom = Schedule::custom(3, vec![1.0, 1.0, 1.0]).unwrap();
        let rep = feasibility_check(&custom, 8, 2);
        assert!(!rep.ok);
        assert_eq!(rep.violation.unwrap().link, "round(b_1 / 2) >= min_arm_obs");
        assert!(feasibility_check(&thm3_schedule(5).unwrap(), 1_000_000, 2).ok);
        let rep = feasibility_check(&thm3_schedule(3).unwrap(), 8, 2);
        assert!(!rep.ok);
        assert_eq!(rep.violation.unwrap().link, "b_1 < b_2");
    }

    #[test]
    fn thm3_feasible_on_grid() {
        for m in 3..=10 {
            let s = thm3_schedule(m).unwrap();
            for t in [16u64, 100, 1000, 10_000, 1_000_000] {
                let rep = feasibility_check(&s, t, 2);
                assert!(rep.ok, "M={m} T={t}: {rep:?}");
            }
        }
    }

    #[test]
    fn thm3_geometric_growth() {
        for m in 3..=8 {
            let s = thm3_schedule(m).unwrap();
            let t = 123_456u64;
            let expect = (t as f64 / 15.0).powf(1.0 / m as f64);
            for l in 1..m - 1 {
                let r = s.boundary(l + 1, t) / s.boundary(l, t);
                assert!((r - expect).abs() < 1e-10 * expect);
            }
        }
    }

    #[test]
    fn schedule_json_shape() {
        let s = thm3_schedule(3).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["name"], "thm3");
        assert_eq!(v["M"], 3);
        assert_eq!(v["betas"].as_array().unwrap().len(), 3);
        let back: Schedule = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        assert!(Schedule::custom(3, vec![2.0, 1.0]).is_err());
        assert!(Schedule::custom(3, vec![2.0, 1.0, 0.5]).is_err());
        assert!(Schedule::custom(3, vec![2.0, -1.0, 1.0]).is_err());
        assert!(Schedule::two_stage(10.0).is_ok());
    }
}
