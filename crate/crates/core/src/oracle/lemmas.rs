//! Grid checks of the scalar inequalities behind the ratio guarantees.
//!
//! Every lemma is a predicate on a handful of named real parameters. A check
//! first tests the lemma's hypotheses at the point, then evaluates each side
//! of each inequality in plain `f64`. Violations within a relative `1e-12`
//! count as boundary-tight rather than as counterexamples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::error::{Error, Result};

const SLACK: f64 = 1e-12;

/// Named parameter values, e.g. `{"M": 3, "m": 1, "T": 16, "eps": 0.01}`.
pub type LemmaParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    /// `g(ρ) = ρ²/(G₁(ρ+1)²) + 1/(G₂(ρ+1)²)` falls then rises about `G₁/G₂`
    /// and stays below `max(1/G₁, 1/G₂)`.
    G,
    /// `h(r) = σ₁²/r + rσ₀²` falls then rises about `σ₁/σ₀`, is convex, and
    /// on the ζ-window is at most `σ₁σ₀(k + 1/k)` with `k = √((1−ζ)/(1+ζ))`.
    H,
    Trick1,
    Trick2,
    Trick3,
    Trick4,
    Trick5,
    Trick6,
    Trick7,
    /// `T ≥ 320^{5/4}C⁵ ⇒ T ≥ 64C⁴ log T`.
    Basic1,
    /// `T ≥ (5000/3)^{5/4}C⁵ ⇒ T ≥ (1000/3)C⁴ log T`.
    Basic2,
    Refined1,
    Refined2,
    Refined3,
    Refined4,
    Refined5,
    /// Third part of `Refined1` with right-hand side `x` instead of `1 + x`.
    Refined1AsPrinted,
    /// `Refined5` with the right-hand side `4·15^{−1/M}C^{2(M−1)/M}(log T/T)^{(M−1)/M}`.
    Refined5AsPrinted,
}

impl LemmaId {
    pub const ALL: [LemmaId; 18] = [
        LemmaId::G,
        LemmaId::H,
        LemmaId::Trick1,
        LemmaId::Trick2,
        LemmaId::Trick3,
        LemmaId::Trick4,
        LemmaId::Trick5,
        LemmaId::Trick6,
        LemmaId::Trick7,
        LemmaId::Basic1,
        LemmaId::Basic2,
        LemmaId::Refined1,
        LemmaId::Refined2,
        LemmaId::Refined3,
        LemmaId::Refined4,
        LemmaId::Refined5,
        LemmaId::Refined1AsPrinted,
        LemmaId::Refined5AsPrinted,
    ];

    /// Lemmas expected to hold everywhere on their hypotheses.
    pub fn is_sound(self) -> bool {
        !matches!(self, LemmaId::Refined1AsPrinted | LemmaId::Refined5AsPrinted)
    }

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::G => "g",
            LemmaId::H => "h",
            LemmaId::Trick1 => "trick1",
            LemmaId::Trick2 => "trick2",
            LemmaId::Trick3 => "trick3",
            LemmaId::Trick4 => "trick4",
            LemmaId::Trick5 => "trick5",
            LemmaId::Trick6 => "trick6",
            LemmaId::Trick7 => "trick7",
            LemmaId::Basic1 => "basic1",
            LemmaId::Basic2 => "basic2",
            LemmaId::Refined1 => "refined1",
            LemmaId::Refined2 => "refined2",
            LemmaId::Refined3 => "refined3",
            LemmaId::Refined4 => "refined4",
            LemmaId::Refined5 => "refined5",
            LemmaId::Refined1AsPrinted => "refined1-as-printed",
            LemmaId::Refined5AsPrinted => "refined5-as-printed",
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown lemma {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PointOutcome {
    Holds,
    BoundaryTight { lhs: f64, rhs: f64 },
    Counterexample { lhs: f64, rhs: f64 },
    PreconditionViolation { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaStatus {
    Pass,
    Counterexample,
    PreconditionViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: LemmaParams,
    pub outcome: PointOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: LemmaId,
    pub status: LemmaStatus,
    pub points: usize,
    pub checked: usize,
    pub boundary_tight: usize,
    pub precondition_violations: usize,
    /// First counterexample in grid order.
    pub counterexample: Option<Witness>,
    /// First point outside the hypotheses, in grid order.
    pub precondition: Option<Witness>,
}

/// One inequality `lhs ≤ rhs` (or `<` when strict).
struct Side {
    lhs: f64,
    rhs: f64,
    strict: bool,
}

fn le(lhs: f64, rhs: f64) -> Side {
    Side { lhs, rhs, strict: false }
}

fn lt(lhs: f64, rhs: f64) -> Side {
    Side { lhs, rhs, strict: true }
}

type Eval = std::result::Result<Vec<Side>, String>;

fn get(p: &LemmaParams, key: &str) -> std::result::Result<f64, String> {
    match p.get(key) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(format!("{key} = {v} is not finite")),
        None => Err(format!("missing parameter {key}")),
    }
}

fn require(cond: bool, reason: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(reason())
    }
}

fn integer(p: &LemmaParams, key: &str) -> std::result::Result<f64, String> {
    let v = get(p, key)?;
    require(v.fract() == 0.0, || format!("{key} = {v} must be an integer"))?;
    Ok(v)
}

/// `(M, m, T)` with `M ≥ 3`, `1 ≤ m ≤ M − 1`, `T ≥ 16`.
fn stage_params(p: &LemmaParams) -> std::result::Result<(f64, f64, f64), String> {
    let big_m = integer(p, "M")?;
    let m = integer(p, "m")?;
    let t = get(p, "T")?;
    require(big_m >= 3.0, || format!("M = {big_m} must be at least 3"))?;
    require((1.0..=big_m - 1.0).contains(&m), || format!("m = {m} must lie in 1..=M-1"))?;
    require(t >= 16.0, || format!("T = {t} must be at least 16"))?;
    Ok((big_m, m, t))
}

fn stage_eps(p: &LemmaParams, big_m: f64) -> std::result::Result<f64, String> {
    let eps = get(p, "eps")?;
    let cap = (1.0 / big_m).min(0.01);
    require(eps > 0.0 && eps <= cap, || format!("eps = {eps} must lie in (0, {cap}]"))?;
    Ok(eps)
}

/// `(C, T)` with `C ≥ 1` and `T ≥ k·C⁵`.
fn threshold_params(p: &LemmaParams, k: f64) -> std::result::Result<(f64, f64), String> {
    let c = get(p, "C")?;
    let t = get(p, "T")?;
    require(c >= 1.0, || format!("C = {c} must be at least 1"))?;
    let need = k * c.powi(5);
    require(t >= need, || format!("T = {t} is below {need}"))?;
    Ok((c, t))
}

fn small_threshold() -> f64 {
    320f64.powf(1.25)
}

fn large_threshold() -> f64 {
    (5000.0f64 / 3.0).powf(1.25)
}

/// `β_m = (400/3)C⁴ log T · ((1000/3)C⁴ log T)^{−m/M}`.
fn refined_beta(c: f64, t: f64, big_m: f64, m: f64) -> f64 {
    let l = t.ln();
    400.0 / 3.0 * c.powi(4) * l * (1000.0 / 3.0 * c.powi(4) * l).powf(-m / big_m)
}

fn refined_stage_params(p: &LemmaParams) -> std::result::Result<(f64, f64, f64, f64), String> {
    let big_m = integer(p, "M")?;
    require(big_m >= 3.0, || format!("M = {big_m} must be at least 3"))?;
    let (c, t) = threshold_params(p, large_threshold())?;
    let m = match p.get("m") {
        Some(_) => {
            let m = integer(p, "m")?;
            require((1.0..=big_m - 1.0).contains(&m), || format!("m = {m} must lie in 1..=M-1"))?;
            m
        }
        None => 1.0,
    };
    Ok((big_m, m, c, t))
}

fn g_fn(g1: f64, g2: f64, rho: f64) -> f64 {
    let d = (rho + 1.0) * (rho + 1.0);
    rho * rho / (g1 * d) + 1.0 / (g2 * d)
}

fn h_fn(s1: f64, s0: f64, r: f64) -> f64 {
    s1 * s1 / r + r * s0 * s0
}

/// `a ≤ b` on the falling side of `pivot`, `b ≤ a` on the rising side,
/// nothing for a pair that straddles it.
fn unimodal(x: f64, x_next: f64, pivot: f64, f: impl Fn(f64) -> f64) -> Option<Side> {
    if x_next <= pivot {
        Some(le(f(x_next), f(x)))
    } else if x >= pivot {
        Some(le(f(x), f(x_next)))
    } else {
        None
    }
}

fn evaluate(id: LemmaId, p: &LemmaParams) -> Eval {
    match id {
        LemmaId::G => {
            let (g1, g2) = (get(p, "G1")?, get(p, "G2")?);
            let (rho, next) = (get(p, "rho")?, get(p, "rho_next")?);
            require(g1 > 0.0 && g2 > 0.0, || "G1 and G2 must be positive".into())?;
            require(rho > 0.0 && next > rho, || "need 0 < rho < rho_next".into())?;
            let mut sides = vec![le(g_fn(g1, g2, rho), (1.0 / g1).max(1.0 / g2))];
            sides.extend(unimodal(rho, next, g1 / g2, |r| g_fn(g1, g2, r)));
            Ok(sides)
        }
        LemmaId::H => {
            let (s1, s0) = (get(p, "sigma1")?, get(p, "sigma0")?);
            let (r, next, zeta) = (get(p, "rho")?, get(p, "rho_next")?, get(p, "zeta")?);
            require(s1 > 0.0 && s0 > 0.0, || "sigma1 and sigma0 must be positive".into())?;
            require(r > 0.0 && next > r, || "need 0 < rho < rho_next".into())?;
            require(zeta > 0.0 && zeta < 1.0, || format!("zeta = {zeta} must lie in (0, 1)"))?;
            let h = |x: f64| h_fn(s1, s0, x);
            let pivot = s1 / s0;
            let mut sides = vec![le(h(0.5 * (r + next)), 0.5 * (h(r) + h(next)))];
            sides.extend(unimodal(r, next, pivot, h));
            let k = ((1.0 - zeta) / (1.0 + zeta)).sqrt();
            if r >= pivot * k && r <= pivot / k {
                sides.push(le(h(r), s1 * s0 * (k + 1.0 / k)));
            }
            Ok(sides)
        }
        LemmaId::Trick1 => {
            let (t, eps) = (get(p, "T")?, get(p, "eps")?);
            require(t >= 16.0, || format!("T = {t} must be at least 16"))?;
            require(eps > 0.0 && eps < 0.125, || format!("eps = {eps} must lie in (0, 1/8)"))?;
            let half = 0.5 * t.sqrt();
            let y = 2f64.sqrt() * t.powf(-0.25 + eps / 2.0);
            Ok(vec![lt((1.0 + y) / (1.0 - y), ((t - half) / half).powi(4))])
        }
        LemmaId::Trick2 | LemmaId::Trick3 => {
            let (big_m, m, t) = stage_params(p)?;
            let eps = stage_eps(p, big_m)?;
            let beta = 6.0 * 15f64.powf(-m / big_m);
            if id == LemmaId::Trick2 {
                let x = 2.0 / beta * t.powf(-m / big_m + eps);
                Ok(vec![le((1.0 - x).powf(-0.5), 1.0 + x)])
            } else {
                let y = 2f64.sqrt() * beta.powf(-0.5) * t.powf(-m / (2.0 * big_m) + eps / 2.0);
                Ok(vec![lt(0.5, ((1.0 - y) / (1.0 + y)).sqrt())])
            }
        }
        LemmaId::Trick4 => {
            let (big_m, m, t) = stage_params(p)?;
            let half = 0.5 * 6.0 * 15f64.powf(-m / big_m) * t.powf(m / big_m);
            Ok(vec![le(4.0, (t - half) / half)])
        }
        LemmaId::Trick5 => {
            let big_m = integer(p, "M")?;
            let t = get(p, "T")?;
            require(big_m >= 3.0, || format!("M = {big_m} must be at least 3"))?;
            require(t >= 16.0, || format!("T = {t} must be at least 16"))?;
            let half = 0.5 * 6.0 * 15f64.powf(-1.0 / big_m) * t.powf(1.0 / big_m);
            let rhs = 4.0 * 15f64.powf(-1.0 / big_m) * t.powf(-(big_m - 1.0) / big_m);
            Ok(vec![lt(half / (t - half), rhs)])
        }
        LemmaId::Trick6 | LemmaId::Trick7 => {
            let eps = get(p, "eps")?;
            require(eps > 0.0 && eps <= 1.0 / 6.0, || format!("eps = {eps} must lie in (0, 1/6]"))?;
            if id == LemmaId::Trick6 {
                let mid = 1.0 + 0.75 * eps - 9.0 * eps * eps / 64.0;
                Ok(vec![le((1.0 + 1.5 * eps).sqrt(), mid), lt(mid, 1.0 + 0.75 * eps)])
            } else {
                let lhs = 1.0 / (1.0 - 6.75 * eps * eps - 6.75 * eps.powi(3));
                Ok(vec![le(lhs, 1.0 + 13.5 * eps * eps)])
            }
        }
        LemmaId::Basic1 => {
            let (c, t) = threshold_params(p, small_threshold())?;
            Ok(vec![le(64.0 * c.powi(4) * t.ln(), t)])
        }
        LemmaId::Basic2 => {
            let (c, t) = threshold_params(p, large_threshold())?;
            Ok(vec![le(1000.0 / 3.0 * c.powi(4) * t.ln(), t)])
        }
        LemmaId::Refined1 | LemmaId::Refined1AsPrinted => {
            let (c, t) = threshold_params(p, small_threshold())?;
            let l = t.ln();
            let x = 4.0 * c * c * t.powf(-0.5) * l.sqrt();
            let lhs3 = (1.0 - x).powf(-0.5);
            if id == LemmaId::Refined1AsPrinted {
                return Ok(vec![le(lhs3, x)]);
            }
            let a = 2.0 * c * c * t.sqrt() * l.sqrt();
            let y = 2.0 * c * t.powf(-0.25) * l.powf(0.25);
            Ok(vec![
                le(x, 0.5),
                lt((1.0 + y) / (1.0 - y), ((t - a) / a).powi(4)),
                le(lhs3, 1.0 + x),
            ])
        }
        LemmaId::Refined2 | LemmaId::Refined3 | LemmaId::Refined4 => {
            let (big_m, m, c, t) = refined_stage_params(p)?;
            let beta = refined_beta(c, t, big_m, m);
            let l = t.ln();
            match id {
                LemmaId::Refined2 => {
                    let x = 48.0 * c.powi(4) / beta * t.powf(-m / big_m) * l;
                    Ok(vec![le((1.0 - x).powf(-0.5), 1.0 + x)])
                }
                LemmaId::Refined3 => {
                    let y = 48f64.sqrt() * c * c * beta.powf(-0.5) * t.powf(-m / (2.0 * big_m)) * l.sqrt();
                    Ok(vec![lt(0.5, ((1.0 - y) / (1.0 + y)).sqrt())])
                }
                _ => {
                    let half = 0.5 * beta * t.powf(m / big_m);
                    Ok(vec![le(4.0, (t - half) / half)])
                }
            }
        }
        LemmaId::Refined5 | LemmaId::Refined5AsPrinted => {
            let (big_m, _, c, t) = refined_stage_params(p)?;
            let half = 0.5 * refined_beta(c, t, big_m, 1.0) * t.powf(1.0 / big_m);
            let q = (big_m - 1.0) / big_m;
            let tail = t.powf(-q) * t.ln().powf(q);
            let rhs = if id == LemmaId::Refined5 {
                96.0 * (1000.0f64 / 3.0).powf(-1.0 / big_m) * c.powf(4.0 * q) * tail
            } else {
                4.0 * 15f64.powf(-1.0 / big_m) * c.powf(2.0 * q) * tail
            };
            Ok(vec![lt(half / (t - half), rhs)])
        }
    }
}

fn judge(side: &Side) -> PointOutcome {
    let (lhs, rhs) = (side.lhs, side.rhs);
    if lhs.is_nan() || rhs.is_nan() {
        return PointOutcome::Counterexample { lhs, rhs };
    }
    let ok = if side.strict { lhs < rhs } else { lhs <= rhs };
    if ok {
        return PointOutcome::Holds;
    }
    let tol = SLACK * lhs.abs().max(rhs.abs()).max(1.0);
    if lhs - rhs <= tol {
        PointOutcome::BoundaryTight { lhs, rhs }
    } else {
        PointOutcome::Counterexample { lhs, rhs }
    }
}

/// Checks one point. A multi-part lemma reports its worst part.
pub fn lemma_point_check(id: LemmaId, point: &LemmaParams) -> PointOutcome {
    let sides = match evaluate(id, point) {
        Ok(s) => s,
        Err(reason) => return PointOutcome::PreconditionViolation { reason },
    };
    let mut worst = PointOutcome::Holds;
    for side in &sides {
        match judge(side) {
            c @ PointOutcome::Counterexample { .. } => return c,
            t @ PointOutcome::BoundaryTight { .. } => worst = t,
            _ => {}
        }
    }
    worst
}

/// Checks every point (in parallel) and reports the first counterexample
/// and the first hypothesis violation in input order.
pub fn lemma_grid_check(id: LemmaId, points: &[LemmaParams]) -> LemmaReport {
    let outcomes: Vec<PointOutcome> = points.par_iter().map(|p| lemma_point_check(id, p)).collect();
    let mut report = LemmaReport {
        lemma: id,
        status: LemmaStatus::Pass,
        points: points.len(),
        checked: 0,
        boundary_tight: 0,
        precondition_violations: 0,
        counterexample: None,
        precondition: None,
    };
    for (point, outcome) in points.iter().zip(outcomes) {
        match outcome {
            PointOutcome::PreconditionViolation { .. } => {
                report.precondition_violations += 1;
                report.precondition.get_or_insert(Witness { point: point.clone(), outcome });
                continue;
            }
            PointOutcome::BoundaryTight { .. } => report.boundary_tight += 1,
            PointOutcome::Counterexample { .. } => {
                report.counterexample.get_or_insert(Witness { point: point.clone(), outcome });
            }
            PointOutcome::Holds => {}
        }
        report.checked += 1;
    }
    report.status = if report.counterexample.is_some() {
        LemmaStatus::Counterexample
    } else if report.precondition_violations > 0 {
        LemmaStatus::PreconditionViolation
    } else {
        LemmaStatus::Pass
    };
    report
}

fn point(pairs: &[(&str, f64)]) -> LemmaParams {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn grid(spec: GridSpec) -> Vec<f64> {
    spec.values().expect("built-in grids are valid")
}

/// `points` values in `(0, hi]`, evenly spaced.
fn open_low(hi: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|i| hi * i as f64 / points as f64).collect()
}

fn horizon_grid(points: usize) -> Vec<f64> {
    grid(GridSpec::log(16.0, 1e12, points))
}

fn stage_pairs(max_m: u32) -> Vec<(f64, f64)> {
    (3..=max_m)
        .flat_map(|big_m| (1..big_m).map(move |m| (big_m as f64, m as f64)))
        .collect()
}

/// `(C, T)` with `T` from the threshold up to `span` times it.
fn threshold_grid(k: f64, cs: &[f64], span: f64, t_points: usize) -> Vec<(f64, f64)> {
    let factors = grid(GridSpec::log(1.0, span, t_points));
    cs.iter()
        .flat_map(|&c| factors.iter().map(move |f| (c, k * c.powi(5) * f)))
        .collect()
}

/// Cross-product grid over each lemma's hypotheses, at least `10⁴` points.
pub fn default_grid(id: LemmaId) -> Vec<LemmaParams> {
    match id {
        LemmaId::G => {
            let gs = grid(GridSpec::log(1e-2, 1e2, 10));
            let rhos = grid(GridSpec::log(1e-3, 1e3, 101));
            let mut out = Vec::new();
            for &g1 in &gs {
                for &g2 in &gs {
                    for w in rhos.windows(2) {
                        out.push(point(&[("G1", g1), ("G2", g2), ("rho", w[0]), ("rho_next", w[1])]));
                    }
                }
            }
            out
        }
        LemmaId::H => {
            let sigmas = grid(GridSpec::log(0.1, 10.0, 5));
            let zetas: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
            let mut out = Vec::new();
            for &s1 in &sigmas {
                for &s0 in &sigmas {
                    for &zeta in &zetas {
                        let pivot = s1 / s0;
                        let k = ((1.0 - zeta) / (1.0 + zeta)).sqrt();
                        let mut rhos = grid(GridSpec::log(pivot * 1e-3, pivot * 1e3, 61));
                        // Window edges and interior, where the bound is tight.
                        rhos.extend(grid(GridSpec::linear(-1.0, 1.0, 20)).iter().map(|u| pivot * k.powf(*u)));
                        rhos.sort_by(f64::total_cmp);
                        for w in rhos.windows(2) {
                            out.push(point(&[
                                ("sigma1", s1),
                                ("sigma0", s0),
                                ("zeta", zeta),
                                ("rho", w[0]),
                                ("rho_next", w[1].max(w[0] * (1.0 + 1e-9))),
                            ]));
                        }
                    }
                }
            }
            out
        }
        LemmaId::Trick1 => {
            let eps = open_low(0.125, 101);
            let mut out = Vec::new();
            for &t in &horizon_grid(100) {
                for &e in &eps[..100] {
                    out.push(point(&[("T", t), ("eps", e)]));
                }
            }
            out
        }
        LemmaId::Trick2 | LemmaId::Trick3 => {
            let mut out = Vec::new();
            for (big_m, m) in stage_pairs(12) {
                let cap = (1.0 / big_m).min(0.01);
                for &t in &horizon_grid(100) {
                    for e in open_low(cap, 20) {
                        out.push(point(&[("M", big_m), ("m", m), ("T", t), ("eps", e)]));
                    }
                }
            }
            out
        }
        LemmaId::Trick4 => stage_pairs(12)
            .into_iter()
            .flat_map(|(big_m, m)| {
                horizon_grid(200).into_iter().map(move |t| point(&[("M", big_m), ("m", m), ("T", t)]))
            })
            .collect(),
        LemmaId::Trick5 => (3..=52)
            .flat_map(|big_m| horizon_grid(200).into_iter().map(move |t| point(&[("M", big_m as f64), ("T", t)])))
            .collect(),
        LemmaId::Trick6 | LemmaId::Trick7 => {
            open_low(1.0 / 6.0, 10_000).into_iter().map(|e| point(&[("eps", e)])).collect()
        }
        LemmaId::Basic1 | LemmaId::Refined1 | LemmaId::Refined1AsPrinted | LemmaId::Basic2 => {
            let k = if id == LemmaId::Basic2 { large_threshold() } else { small_threshold() };
            let cs = grid(GridSpec::log(1.0, 100.0, 100));
            threshold_grid(k, &cs, 1e8, 100)
                .into_iter()
                .map(|(c, t)| point(&[("C", c), ("T", t)]))
                .collect()
        }
        LemmaId::Refined2 | LemmaId::Refined3 | LemmaId::Refined4 => {
            let cs = grid(GridSpec::log(1.0, 10.0, 10));
            let ct = threshold_grid(large_threshold(), &cs, 1e6, 20);
            let mut out = Vec::new();
            for (big_m, m) in stage_pairs(12) {
                for &(c, t) in &ct {
                    out.push(point(&[("M", big_m), ("m", m), ("C", c), ("T", t)]));
                }
            }
            out
        }
        LemmaId::Refined5 | LemmaId::Refined5AsPrinted => {
            let cs = grid(GridSpec::log(1.0, 10.0, 10));
            let ct = threshold_grid(large_threshold(), &cs, 1e6, 20);
            let mut out = Vec::new();
            for big_m in 3..=52 {
                for &(c, t) in &ct {
                    out.push(point(&[("M", big_m as f64), ("C", c), ("T", t)]));
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_are_large_enough() {
        for id in LemmaId::ALL {
            assert!(default_grid(id).len() >= 10_000, "{id}: {}", default_grid(id).len());
        }
    }

    #[test]
    fn names_round_trip() {
        for id in LemmaId::ALL {
            assert_eq!(id.name().parse::<LemmaId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.name()));
        }
        assert!("trick8".parse::<LemmaId>().is_err());
    }

    #[test]
    fn out_of_hypothesis_point_is_not_a_counterexample() {
        let out = lemma_point_check(LemmaId::Trick6, &point(&[("eps", 5.0)]));
        assert!(matches!(out, PointOutcome::PreconditionViolation { .. }));
        let report = lemma_grid_check(LemmaId::Trick6, &[point(&[("eps", 5.0)]), point(&[("eps", 0.1)])]);
        assert_eq!(report.status, LemmaStatus::PreconditionViolation);
        assert_eq!((report.checked, report.precondition_violations), (1, 1));
        assert!(report.counterexample.is_none());
        assert!(matches!(
            lemma_point_check(LemmaId::Trick2, &point(&[("M", 3.0), ("m", 3.0), ("T", 100.0), ("eps", 0.01)])),
            PointOutcome::PreconditionViolation { .. }
        ));
        assert!(matches!(
            lemma_point_check(LemmaId::Basic1, &point(&[("C", 1.0)])),
            PointOutcome::PreconditionViolation { .. }
        ));
    }

    #[test]
    fn spot_values() {
        // At T = 16, ε → 1/8 the right side is 7⁴ = 2401.
        assert_eq!(lemma_point_check(LemmaId::Trick1, &point(&[("T", 16.0), ("eps", 0.1)])), PointOutcome::Holds);
        // The printed third part fails everywhere since (1−x)^{−1/2} > 1 > x.
        let t = 2.0 * small_threshold();
        assert!(matches!(
            lemma_point_check(LemmaId::Refined1AsPrinted, &point(&[("C", 1.0), ("T", t)])),
            PointOutcome::Counterexample { .. }
        ));
        // Window edges of h are equalities.
        let k = (0.5f64 / 1.5).sqrt();
        let edge = point(&[("sigma1", 2.0), ("sigma0", 1.0), ("zeta", 0.5), ("rho", 2.0 * k), ("rho_next", 2.0)]);
        assert!(matches!(
            lemma_point_check(LemmaId::H, &edge),
            PointOutcome::Holds | PointOutcome::BoundaryTight { .. }
        ));
    }

    #[test]
    fn judge_distinguishes_tight_from_false() {
        assert_eq!(judge(&le(1.0, 1.0)), PointOutcome::Holds);
        assert!(matches!(judge(&lt(1.0, 1.0)), PointOutcome::BoundaryTight { .. }));
        assert!(matches!(judge(&le(1.0 + 1e-13, 1.0)), PointOutcome::BoundaryTight { .. }));
        assert!(matches!(judge(&le(1.0 + 1e-9, 1.0)), PointOutcome::Counterexample { .. }));
        assert!(matches!(judge(&le(f64::NAN, 1.0)), PointOutcome::Counterexample { .. }));
    }
}
