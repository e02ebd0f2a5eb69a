use serde::{Deserialize, Serialize};

use super::{DesignConfig, DEFAULT_MIN_ARM_OBS};
use crate::error::{Error, Result};
use crate::tuning::{cor1_schedule, cor2_schedule, thm3_schedule, Schedule};

/// JSON design description shared by the CLI and the HTTP service.
///
/// ```json
/// {"M": 3, "T": 1000, "schedule": "thm3"}
/// {"M": 2, "T": 10000, "beta": 1}
/// {"M": 4, "T": 1000, "betas": [30, 10, 3, 1]}
/// {"M": 3, "T": 20000, "schedule": "cor2", "C": 1}
/// ```
///
/// `M = 1` is the half-half design. `schedule` is one of `thm3`, `cor1`,
/// `cor2`, `preset` or `custom`; with `custom` (or no schedule at all) the
/// `betas` (or, for `M = 2`, `beta`) are taken verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(rename = "M")]
    pub stages: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_arm_obs: Option<u64>,
}

impl DesignSpec {
    pub fn new(stages: usize, horizon: u64) -> Self {
        Self {
            stages,
            horizon,
            beta: None,
            schedule: None,
            betas: None,
            c: None,
            min_arm_obs: None,
        }
    }

    pub fn with_schedule(mut self, name: &str) -> Self {
        self.schedule = Some(name.to_string());
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Self {
        self.betas = Some(betas);
        self
    }

    /// Resolves the schedule and validates feasibility.
    pub fn to_config(&self) -> Result<DesignConfig> {
        let min_obs = self.min_arm_obs.unwrap_or(DEFAULT_MIN_ARM_OBS);
        let t = self.horizon;
        match self.stages {
            0 => Err(Error::BadM { min: 1, got: 0 }),
            1 => DesignConfig::half_half(t)?.with_min_arm_obs(min_obs),
            m => {
                let schedule = self.resolve_schedule(m)?;
                if m == 2 {
                    DesignConfig::two_stage_with(t, schedule.betas[0], min_obs)
                } else {
                    DesignConfig::multi_stage_with(t, &schedule, min_obs)
                }
            }
        }
    }

    fn resolve_schedule(&self, m: usize) -> Result<Schedule> {
        let name = self.schedule.as_deref().unwrap_or("custom");
        let c = || self.c.ok_or_else(|| Error::InvalidSpec(format!("schedule {name} needs C")));
        match name {
            "thm3" => thm3_schedule(m),
            "cor1" if m == 2 => cor1_schedule(self.horizon, c()?),
            "cor1" => Err(Error::InvalidSpec("cor1 is a two-stage schedule (M = 2)".into())),
            "cor2" => cor2_schedule(m, self.horizon, c()?),
            "preset" => simulation_preset(m),
            "custom" => match (&self.betas, self.beta) {
                (Some(betas), _) => Schedule::custom(m, betas.clone()),
                (None, Some(beta)) if m == 2 => Schedule::two_stage(beta),
                _ => Err(Error::InvalidSpec("custom schedule needs betas (or beta for M = 2)".into())),
            },
            other => Err(Error::InvalidSpec(format!("unknown schedule {other:?}"))),
        }
    }
}

/// Tuning used by the desk-scale reproduction of the clicks-per-million
/// study: `β = 10` for two stages, then `(20, 5, 1)`, `(30, 10, 3, 1)` and
/// `(60, 20, 8, 3, 1)` for `M = 3, 4, 5`.
pub fn simulation_preset(stages: usize) -> Result<Schedule> {
    let betas = match stages {
        2 => vec![10.0],
        3 => vec![20.0, 5.0, 1.0],
        4 => vec![30.0, 10.0, 3.0, 1.0],
        5 => vec![60.0, 20.0, 8.0, 3.0, 1.0],
        got => return Err(Error::InvalidSpec(format!("no preset schedule for M = {got}"))),
    };
    Schedule::custom(stages, betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::DesignKind;

    fn parse(s: &str) -> Result<DesignConfig> {
        serde_json::from_str::<DesignSpec>(s).unwrap().to_config()
    }

    #[test]
    fn parses_the_documented_shapes() {
        let c = parse(r#"{"M": 2, "T": 10000, "beta": 1}"#).unwrap();
        assert_eq!(c.kind, DesignKind::TwoStage);
        assert_eq!(c.pilot_per_arm(), 50);
        assert_eq!(parse(r#"{"M": 3, "T": 16, "schedule": "thm3"}"#).unwrap().stages, 3);
        assert!(matches!(
            parse(r#"{"M": 3, "T": 8, "schedule": "thm3"}"#),
            Err(Error::InfeasibleConfig(_))
        ));
        assert_eq!(parse(r#"{"M": 1, "T": 10}"#).unwrap().kind, DesignKind::HalfHalf);
        let c = parse(r#"{"M": 4, "T": 1000, "betas": [30, 10, 3, 1]}"#).unwrap();
        assert_eq!(c.betas, vec![30.0, 10.0, 3.0, 1.0]);
        assert!(parse(r#"{"M": 3, "T": 20000, "schedule": "cor2", "C": 1}"#).is_ok());
        assert!(matches!(
            parse(r#"{"M": 3, "T": 20000, "schedule": "cor2"}"#),
            Err(Error::InvalidSpec(_))
        ));
        assert!(parse(r#"{"M": 2, "T": 3000000, "schedule": "cor1", "C": 1}"#).is_ok());
        assert!(serde_json::from_str::<DesignSpec>(r#"{"M": 2, "T": 10, "bogus": 1}"#).is_err());
    }

    #[test]
    fn presets_are_feasible_at_the_study_horizon() {
        for m in 2..=5 {
            let spec = DesignSpec::new(m, 1000).with_schedule("preset");
            spec.to_config().unwrap();
        }
        assert!(simulation_preset(6).is_err());
    }
}
