//! Sequential design state machines.
//!
//! Three designs share one session type, [`DesignState`]:
//!
//! * **half-half**: a single completely randomized stage with `⌈T/2⌉`
//!   treated and `⌊T/2⌋` control subjects;
//! * **two-stage** adaptive Neyman allocation: a balanced pilot of
//!   `β/2 · √T` subjects per arm, followed by one plug-in Neyman stage;
//! * **M-stage** adaptive Neyman allocation: balanced stages until the
//!   running estimates show that one arm already has (or is about to have)
//!   its Neyman share, at which point that arm is frozen and the remaining
//!   subjects go to the other arm.
//!
//! A session emits one [`StageAllocation`] at a time and is advanced by
//! submitting the observed outcomes of that stage. Variances are always
//! re-estimated from all data collected so far.
//!
//! # Rounding
//!
//! The decision rules are stated on real numbers. Each stage's integer size
//! is the difference between a rounded (half up) cumulative target and what
//! has already been assigned, and the last stage takes whatever is left, so
//! the arm totals always add up to exactly `T`. If rounding would make a
//! stage size negative the arm is clamped to zero, the other arm's size is
//! reduced by the same amount, and the stage is flagged `clamped`.
//!
//! ```
//! use neyman_core::designs::{CaseLabel, DesignConfig, DesignState};
//!
//! let config = DesignConfig::two_stage(10_000, 1.0).unwrap();
//! let (mut state, first) = DesignState::start(config).unwrap();
//! assert_eq!((first.t1, first.t0), (50, 50));
//!
//! // Treated outcomes are three times as spread out as control outcomes.
//! let treated: Vec<f64> = (0..50).map(|i| 3.0 * (i % 2) as f64).collect();
//! let control: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
//! let second = state.submit(&treated, &control).unwrap().unwrap();
//! assert_eq!(second.case_label, CaseLabel::Plugin2Stage);
//! assert_eq!((second.t1, second.t0), (7450, 2450));
//! ```

mod spec;

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{difference_in_means, plug_in_allocation, sample_variance, Allocation, ArmMoments};
use crate::error::{Error, Result};
use crate::tuning::{feasibility_check, round_half_up, Schedule};

pub use spec::{simulation_preset, DesignSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

/// Which branch of the decision rule produced a stage.
///
/// `Case1`..`Case5` are the mid-experiment branches of the M-stage design
/// and `LastCase1`..`LastCase3` the branches taken before its final stage.
/// The two-stage design uses `Plugin2Stage` (both plug-in shares above the
/// pilot size), `AllControl` (treated share at or below it) and `AllTreated`
/// (control share at or below it). Stages emitted after an arm has been
/// frozen are labelled `AllTreated` / `AllControl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseLabel {
    Init,
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    LastCase1,
    LastCase2,
    LastCase3,
    Plugin2Stage,
    AllTreated,
    AllControl,
}

impl CaseLabel {
    /// The label the same decision gets when the two arms are exchanged.
    pub fn mirrored(self) -> Self {
        use CaseLabel::*;
        match self {
            Case1 => Case5,
            Case2 => Case4,
            Case4 => Case2,
            Case5 => Case1,
            LastCase1 => LastCase3,
            LastCase3 => LastCase1,
            AllTreated => AllControl,
            AllControl => AllTreated,
            other => other,
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Subjects to assign in one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAllocation {
    /// 1-based stage index.
    pub stage: usize,
    pub t1: u64,
    pub t0: u64,
    pub case_label: CaseLabel,
    /// Set when rounding forced a negative size to zero.
    #[serde(default)]
    pub clamped: bool,
}

impl StageAllocation {
    pub fn allocation(&self) -> Allocation {
        Allocation::new(self.t1, self.t0)
    }

    pub fn total(&self) -> u64 {
        self.t1 + self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    HalfHalf,
    TwoStage,
    MultiStage,
}

/// Validated design parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub kind: DesignKind,
    pub horizon: u64,
    /// Number of stages `M` (1 for half-half).
    pub stages: usize,
    /// Empty for half-half, `[β]` for two-stage, `β_1..β_M` otherwise.
    pub betas: Vec<f64>,
    pub min_arm_obs: u64,
}

pub const DEFAULT_MIN_ARM_OBS: u64 = 2;

impl DesignConfig {
    pub fn half_half(horizon: u64) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InfeasibleConfig(format!("T >= 2 required, got {horizon}")));
        }
        Ok(Self {
            kind: DesignKind::HalfHalf,
            horizon,
            stages: 1,
            betas: Vec::new(),
            min_arm_obs: DEFAULT_MIN_ARM_OBS,
        })
    }

    pub fn two_stage(horizon: u64, beta: f64) -> Result<Self> {
        Self::two_stage_with(horizon, beta, DEFAULT_MIN_ARM_OBS)
    }

    pub fn two_stage_with(horizon: u64, beta: f64, min_arm_obs: u64) -> Result<Self> {
        let config = Self {
            kind: DesignKind::TwoStage,
            horizon,
            stages: 2,
            betas: vec![beta],
            min_arm_obs,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn multi_stage(horizon: u64, schedule: &Schedule) -> Result<Self> {
        Self::multi_stage_with(horizon, schedule, DEFAULT_MIN_ARM_OBS)
    }

    pub fn multi_stage_with(horizon: u64, schedule: &Schedule, min_arm_obs: u64) -> Result<Self> {
        schedule.validate()?;
        if schedule.betas.len() != schedule.stages {
            return Err(Error::InvalidSpec(
                "an M-stage design needs the full beta_1..beta_M schedule".into(),
            ));
        }
        let config = Self {
            kind: DesignKind::MultiStage,
            horizon,
            stages: schedule.stages,
            betas: schedule.betas.clone(),
            min_arm_obs,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_min_arm_obs(mut self, min_arm_obs: u64) -> Result<Self> {
        self.min_arm_obs = min_arm_obs;
        self.validate()?;
        Ok(self)
    }

    /// The schedule view of the betas (two-stage and M-stage only).
    pub fn schedule(&self) -> Option<Schedule> {
        match self.kind {
            DesignKind::HalfHalf => None,
            _ => Some(Schedule {
                name: crate::tuning::ScheduleName::Custom,
                stages: self.stages,
                betas: self.betas.clone(),
                params: Default::default(),
            }),
        }
    }

    /// Checks the configuration against the feasibility chain.
    pub fn validate(&self) -> Result<()> {
        if self.min_arm_obs < 2 {
            return Err(Error::InfeasibleConfig("min_arm_obs must be at least 2".into()));
        }
        match self.kind {
            DesignKind::HalfHalf => {
                if self.horizon < 2 {
                    return Err(Error::InfeasibleConfig(format!("T >= 2 required, got {}", self.horizon)));
                }
                Ok(())
            }
            DesignKind::TwoStage => {
                let beta = self.betas[0];
                let t = self.horizon as f64;
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InfeasibleConfig(format!("beta must be positive, got {beta}")));
                }
                if !(beta * t.sqrt() < t) {
                    return Err(Error::InfeasibleConfig(format!(
                        "beta * sqrt(T) < T violated: {} >= {}",
                        beta * t.sqrt(),
                        t
                    )));
                }
                let pilot = round_half_up(beta / 2.0 * t.sqrt());
                if pilot < self.min_arm_obs {
                    return Err(Error::InfeasibleConfig(format!(
                        "round(beta/2 * sqrt(T)) >= min_arm_obs violated: {pilot} < {}",
                        self.min_arm_obs
                    )));
                }
                if 2 * pilot > self.horizon {
                    return Err(Error::InfeasibleConfig(format!(
                        "rounded pilot 2 * {pilot} exceeds T = {}",
                        self.horizon
                    )));
                }
                Ok(())
            }
            DesignKind::MultiStage => {
                let schedule = self.schedule().expect("multi-stage has a schedule");
                schedule.validate()?;
                let report = feasibility_check(&schedule, self.horizon, self.min_arm_obs);
                match report.violation {
                    None => Ok(()),
                    Some(v) => Err(Error::InfeasibleConfig(format!("{} violated: {}", v.link, v.detail))),
                }
            }
        }
    }

    /// Real cumulative boundary after stage `m` (`T` at `m = M`).
    fn boundary(&self, m: usize) -> f64 {
        let t = self.horizon as f64;
        if m >= self.stages {
            return t;
        }
        self.betas[m - 1] * t.powf(m as f64 / self.stages as f64)
    }

    /// Rounded cumulative boundary after stage `m`.
    fn rounded_boundary(&self, m: usize) -> u64 {
        if m >= self.stages {
            self.horizon
        } else {
            round_half_up(self.boundary(m)).min(self.horizon)
        }
    }

    /// Per-arm size of the balanced first stage.
    pub fn pilot_per_arm(&self) -> u64 {
        match self.kind {
            DesignKind::HalfHalf => self.horizon.div_ceil(2),
            DesignKind::TwoStage => round_half_up(self.betas[0] / 2.0 * (self.horizon as f64).sqrt()),
            DesignKind::MultiStage => round_half_up(self.boundary(1) / 2.0),
        }
    }
}

/// Variance estimates and plug-in shares computed after a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageEstimate {
    /// Stage whose data closed the estimate.
    pub stage: usize,
    pub sigma1_hat: f64,
    pub sigma0_hat: f64,
    /// Plug-in Neyman shares of the full horizon.
    pub share1: f64,
    pub share0: f64,
}

/// One experiment session. Single owner; advance it with [`DesignState::submit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    config: DesignConfig,
    obs1: Vec<f64>,
    obs0: Vec<f64>,
    /// Every emitted stage, in order. The last one is pending while
    /// `awaiting` is set.
    stages: Vec<StageAllocation>,
    cumulative: Allocation,
    frozen_arm: Option<Arm>,
    /// Remaining stages, computed eagerly once an arm is frozen.
    queued: VecDeque<StageAllocation>,
    estimates: Vec<StageEstimate>,
    awaiting: bool,
}

impl DesignState {
    /// Opens a session and returns it with the first stage.
    pub fn start(config: DesignConfig) -> Result<(Self, StageAllocation)> {
        config.validate()?;
        let first = match config.kind {
            DesignKind::HalfHalf => {
                let t1 = config.horizon.div_ceil(2);
                StageAllocation {
                    stage: 1,
                    t1,
                    t0: config.horizon - t1,
                    case_label: CaseLabel::Init,
                    clamped: false,
                }
            }
            DesignKind::TwoStage | DesignKind::MultiStage => {
                let n = config.pilot_per_arm();
                StageAllocation {
                    stage: 1,
                    t1: n,
                    t0: n,
                    case_label: CaseLabel::Init,
                    clamped: false,
                }
            }
        };
        let mut state = DesignState {
            config,
            obs1: Vec::new(),
            obs0: Vec::new(),
            stages: Vec::new(),
            cumulative: Allocation::default(),
            frozen_arm: None,
            queued: VecDeque::new(),
            estimates: Vec::new(),
            awaiting: false,
        };
        state.emit(first);
        Ok((state, first))
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    /// The stage waiting for observations, if any.
    pub fn pending(&self) -> Option<&StageAllocation> {
        if self.awaiting {
            self.stages.last()
        } else {
            None
        }
    }

    /// Number of stages emitted so far.
    pub fn stage(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[StageAllocation] {
        &self.stages
    }

    pub fn case_path(&self) -> Vec<CaseLabel> {
        self.stages.iter().map(|s| s.case_label).collect()
    }

    /// Totals over every emitted stage, including a pending one.
    pub fn cumulative(&self) -> Allocation {
        self.cumulative
    }

    pub fn frozen_arm(&self) -> Option<Arm> {
        self.frozen_arm
    }

    pub fn estimates(&self) -> &[StageEstimate] {
        &self.estimates
    }

    pub fn treated_observations(&self) -> &[f64] {
        &self.obs1
    }

    pub fn control_observations(&self) -> &[f64] {
        &self.obs0
    }

    pub fn is_complete(&self) -> bool {
        !self.awaiting && self.cumulative.total() == self.config.horizon
    }

    fn emit(&mut self, stage: StageAllocation) {
        self.cumulative += stage.allocation();
        self.stages.push(stage);
        self.awaiting = true;
    }

    /// Ingests the pending stage's outcomes and returns the next stage, or
    /// `None` once all `T` subjects have been observed.
    pub fn submit(&mut self, treated: &[f64], control: &[f64]) -> Result<Option<StageAllocation>> {
        let pending = *self
            .pending()
            .ok_or_else(|| Error::WrongStage("no stage is awaiting observations".into()))?;
        if treated.len() as u64 != pending.t1 || control.len() as u64 != pending.t0 {
            return Err(Error::CountMismatch {
                expected_t1: pending.t1,
                expected_t0: pending.t0,
                got_t1: treated.len() as u64,
                got_t0: control.len() as u64,
            });
        }
        if treated.iter().chain(control).any(|y| !y.is_finite()) {
            return Err(Error::OutOfRange("observations must be finite".into()));
        }
        // Decide before mutating so a failed estimate leaves the state intact.
        let m = pending.stage;
        let mut obs1 = self.obs1.clone();
        obs1.extend_from_slice(treated);
        let mut obs0 = self.obs0.clone();
        obs0.extend_from_slice(control);

        if self.cumulative.total() == self.config.horizon {
            self.obs1 = obs1;
            self.obs0 = obs0;
            self.awaiting = false;
            return Ok(None);
        }

        let next = if let Some(mut queued) = self.queued.front().copied() {
            queued.stage = m + 1;
            self.queued.pop_front();
            self.obs1 = obs1;
            self.obs0 = obs0;
            queued
        } else {
            let estimate = estimate(m, &obs1, &obs0, self.config.horizon)?;
            self.obs1 = obs1;
            self.obs0 = obs0;
            self.estimates.push(estimate);
            match self.config.kind {
                DesignKind::HalfHalf => unreachable!("half-half has a single stage"),
                DesignKind::TwoStage => self.decide_two_stage(&estimate),
                DesignKind::MultiStage => self.decide_multi_stage(m, &estimate),
            }
        };
        self.emit(next);
        Ok(Some(next))
    }

    /// Second-stage rule of the two-stage design.
    fn decide_two_stage(&mut self, est: &StageEstimate) -> StageAllocation {
        let horizon = self.config.horizon;
        let threshold = self.config.betas[0] / 2.0 * (horizon as f64).sqrt();
        let (label, target1) = if est.share1 > threshold && est.share0 > threshold {
            (CaseLabel::Plugin2Stage, round_half_up(est.share1).min(horizon))
        } else if est.share1 <= threshold {
            self.frozen_arm = Some(Arm::Treated);
            (CaseLabel::AllControl, self.cumulative.t1)
        } else {
            self.frozen_arm = Some(Arm::Control);
            (CaseLabel::AllTreated, horizon - self.cumulative.t0)
        };
        self.stage_to(2, label, target1, horizon - target1)
    }

    /// Mid-experiment and last-stage rules of the M-stage design, applied
    /// after stage `m`.
    fn decide_multi_stage(&mut self, m: usize, est: &StageEstimate) -> StageAllocation {
        let config = &self.config;
        let big_m = config.stages;
        let horizon = config.horizon;
        let lo = config.boundary(m) / 2.0;
        let (s1, s0) = (est.share1, est.share0);

        if m + 1 == big_m {
            return if s0 < lo {
                self.frozen_arm = Some(Arm::Control);
                self.stage_to(big_m, CaseLabel::LastCase1, horizon - self.cumulative.t0, self.cumulative.t0)
            } else if s1 >= lo {
                let target1 = round_half_up(s1).min(horizon);
                self.stage_to(big_m, CaseLabel::LastCase2, target1, horizon - target1)
            } else {
                self.frozen_arm = Some(Arm::Treated);
                self.stage_to(big_m, CaseLabel::LastCase3, self.cumulative.t1, horizon - self.cumulative.t1)
            };
        }

        let hi = config.boundary(m + 1) / 2.0;
        let next_total = config.rounded_boundary(m + 1);
        if s0 < lo {
            self.freeze(Arm::Control, m + 1, CaseLabel::Case1)
        } else if s0 < hi {
            let target0 = round_half_up(s0).min(next_total);
            let stage = self.stage_to(m + 1, CaseLabel::Case2, next_total - target0, target0);
            self.freeze_after(Arm::Control, stage)
        } else if s1 >= hi {
            let per_arm = round_half_up(hi);
            self.stage_to(m + 1, CaseLabel::Case3, per_arm, per_arm)
        } else if s1 >= lo {
            let target1 = round_half_up(s1).min(next_total);
            let stage = self.stage_to(m + 1, CaseLabel::Case4, target1, next_total - target1);
            self.freeze_after(Arm::Treated, stage)
        } else {
            self.freeze(Arm::Treated, m + 1, CaseLabel::Case5)
        }
    }

    /// Freezes `arm` starting at stage `from` (labelled `label`) and queues
    /// the rest of the schedule for the open arm.
    fn freeze(&mut self, arm: Arm, from: usize, label: CaseLabel) -> StageAllocation {
        self.frozen_arm = Some(arm);
        let mut schedule = self.frozen_schedule(arm, from, Allocation::default());
        let mut first = schedule.pop_front().expect("at least one remaining stage");
        first.case_label = label;
        self.queued = schedule;
        first
    }

    /// Freezes `arm` after `stage`, which has not been emitted yet.
    fn freeze_after(&mut self, arm: Arm, stage: StageAllocation) -> StageAllocation {
        self.frozen_arm = Some(arm);
        self.queued = self.frozen_schedule(arm, stage.stage + 1, stage.allocation());
        stage
    }

    /// Stages `from..=M` with the frozen arm at zero and the open arm
    /// filling up to the rounded cumulative boundaries. `extra` holds
    /// counts of a stage that is about to be emitted.
    fn frozen_schedule(&self, arm: Arm, from: usize, extra: Allocation) -> VecDeque<StageAllocation> {
        let counts = self.cumulative + extra;
        let (frozen, mut open) = match arm {
            Arm::Control => (counts.t0, counts.t1),
            Arm::Treated => (counts.t1, counts.t0),
        };
        let label = match arm {
            Arm::Control => CaseLabel::AllTreated,
            Arm::Treated => CaseLabel::AllControl,
        };
        let mut out = VecDeque::new();
        for l in from..=self.config.stages {
            let target = self.config.rounded_boundary(l).saturating_sub(frozen);
            let size = target.saturating_sub(open);
            let clamped = target < open;
            open += size;
            let (t1, t0) = match arm {
                Arm::Control => (size, 0),
                Arm::Treated => (0, size),
            };
            out.push_back(StageAllocation {
                stage: l,
                t1,
                t0,
                case_label: label,
                clamped,
            });
        }
        out
    }

    /// Builds the stage that moves cumulative counts to `(target1, target0)`,
    /// clamping a negative arm to zero while keeping the stage total.
    fn stage_to(&self, stage: usize, label: CaseLabel, target1: u64, target0: u64) -> StageAllocation {
        let d1 = target1 as i128 - self.cumulative.t1 as i128;
        let d0 = target0 as i128 - self.cumulative.t0 as i128;
        let (t1, t0, clamped) = if d1 < 0 {
            (0, (d0 + d1).max(0), true)
        } else if d0 < 0 {
            ((d1 + d0).max(0), 0, true)
        } else {
            (d1, d0, false)
        };
        StageAllocation {
            stage,
            t1: t1 as u64,
            t0: t0 as u64,
            case_label: label,
            clamped,
        }
    }

    /// Totals and the difference-in-means estimate of a completed session.
    pub fn finalize(&self) -> Result<(Allocation, f64)> {
        if !self.is_complete() {
            return Err(Error::IncompleteExperiment {
                assigned: self.obs1.len() as u64 + self.obs0.len() as u64,
                horizon: self.config.horizon,
            });
        }
        let tau_hat = difference_in_means(&self.obs1, &self.obs0)?;
        Ok((self.cumulative, tau_hat))
    }
}

/// Pooled variance estimates after stage `stage` and the plug-in shares.
fn estimate(stage: usize, obs1: &[f64], obs0: &[f64], horizon: u64) -> Result<StageEstimate> {
    let sigma1_hat = sample_variance(obs1)?.sqrt();
    let sigma0_hat = sample_variance(obs0)?.sqrt();
    let shares = plug_in_allocation(&ArmMoments { sigma1: sigma1_hat, sigma0: sigma0_hat }, horizon);
    Ok(StageEstimate {
        stage,
        sigma1_hat,
        sigma0_hat,
        share1: shares.t1,
        share0: shares.t0,
    })
}

/// Starts a two-stage session.
pub fn init_two_stage(config: DesignConfig) -> Result<(DesignState, StageAllocation)> {
    if config.kind != DesignKind::TwoStage {
        return Err(Error::WrongStage(format!("expected a two-stage config, got {:?}", config.kind)));
    }
    DesignState::start(config)
}

/// Feeds the pilot outcomes of a two-stage session and returns stage 2.
pub fn next_two_stage(state: &mut DesignState, treated: &[f64], control: &[f64]) -> Result<StageAllocation> {
    if state.config.kind != DesignKind::TwoStage || state.stage() != 1 {
        return Err(Error::WrongStage("next_two_stage expects a two-stage session at stage 1".into()));
    }
    state
        .submit(treated, control)?
        .ok_or_else(|| Error::WrongStage("two-stage session has no second stage".into()))
}

/// Starts an M-stage session.
pub fn init_multi_stage(config: DesignConfig) -> Result<(DesignState, StageAllocation)> {
    if config.kind != DesignKind::MultiStage {
        return Err(Error::WrongStage(format!("expected an M-stage config, got {:?}", config.kind)));
    }
    DesignState::start(config)
}

/// Feeds one stage of an M-stage session. Returns `None` after the last stage.
pub fn next_multi_stage(
    state: &mut DesignState,
    treated: &[f64],
    control: &[f64],
) -> Result<Option<StageAllocation>> {
    if state.config.kind != DesignKind::MultiStage {
        return Err(Error::WrongStage("next_multi_stage expects an M-stage session".into()));
    }
    state.submit(treated, control)
}

pub fn finalize(state: &DesignState) -> Result<(Allocation, f64)> {
    state.finalize()
}

/// A uniformly random order of `t1` ones (treated) and `t0` zeros.
pub fn randomize_stage<R: Rng + ?Sized>(alloc: &StageAllocation, rng: &mut R) -> Vec<u8> {
    let mut labels: Vec<u8> = std::iter::repeat_n(1u8, alloc.t1 as usize)
        .chain(std::iter::repeat_n(0u8, alloc.t0 as usize))
        .collect();
    labels.shuffle(rng);
    labels
}
