//! A/B experiment data: ingestion, summary statistics and bootstrap populations.
//!
//! Input is one row per experiment unit with aggregate counts:
//!
//! ```text
//! arm,impressions,clicks
//! treated,1000000,34176
//! control,2000000,0
//! ```
//!
//! Each row becomes one value, clicks per million impressions. Which arm is
//! called "treated" is a labelling convention of the source data.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::{mean, sample_variance};
use crate::designs::Arm;
use crate::error::{Error, Result};
use crate::montecarlo::Population;

/// One aggregate row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbRecord {
    pub arm: Arm,
    pub impressions: u64,
    pub clicks: u64,
}

impl AbRecord {
    /// Clicks per million impressions.
    pub fn per_million(&self) -> f64 {
        self.clicks as f64 * 1e6 / self.impressions as f64
    }
}

/// Per-arm value arrays; serializes as `{"treated": [...], "control": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmArrays {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    arm: String,
    impressions: String,
    clicks: String,
}

fn parse_row(raw: &RawRow, line: usize) -> Result<AbRecord> {
    let err = |message: String| Error::Parse { line, message };
    let arm = match raw.arm.trim().to_ascii_lowercase().as_str() {
        "treated" => Arm::Treated,
        "control" => Arm::Control,
        other => return Err(err(format!("unknown arm {other:?}"))),
    };
    let impressions: u64 = raw
        .impressions
        .trim()
        .parse()
        .map_err(|e| err(format!("impressions: {e}")))?;
    let clicks: u64 = raw.clicks.trim().parse().map_err(|e| err(format!("clicks: {e}")))?;
    if impressions == 0 {
        return Err(err("impressions must be positive".into()));
    }
    if clicks > impressions {
        return Err(err(format!("clicks ({clicks}) exceed impressions ({impressions})")));
    }
    Ok(AbRecord { arm, impressions, clicks })
}

/// Parses `arm,impressions,clicks` rows. Line numbers in errors are 1-based
/// and count the header.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<AbRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != ["arm", "impressions", "clicks"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header arm,impressions,clicks, got {}", names.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let raw: RawRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        out.push(parse_row(&raw, line)?);
    }
    Ok(out)
}

/// Reads rows and splits them into per-arm clicks-per-million arrays.
pub fn ingest_csv<R: Read>(reader: R) -> Result<ArmArrays> {
    let records = read_records(reader)?;
    let (mut treated, mut control) = (Vec::new(), Vec::new());
    for r in &records {
        match r.arm {
            Arm::Treated => treated.push(r.per_million()),
            Arm::Control => control.push(r.per_million()),
        }
    }
    if treated.is_empty() {
        return Err(Error::EmptyArm("treated"));
    }
    if control.is_empty() {
        return Err(Error::EmptyArm("control"));
    }
    Ok(ArmArrays { treated, control })
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<ArmArrays> {
    ingest_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Divisor `n − 1`; 0 for a single value.
    pub stdev: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Mean, standard deviation, min, median (midpoint for even lengths) and max.
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    let mean = mean(values).ok_or(Error::EmptyArm("values"))?;
    let stdev = if values.len() >= 2 { sample_variance(values)?.sqrt() } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(SummaryStats {
        mean,
        stdev,
        min: sorted[0],
        median,
        max: sorted[n - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub treated: SummaryStats,
    pub control: SummaryStats,
}

pub fn summarize_arms(arrays: &ArmArrays) -> Result<ArmSummary> {
    Ok(ArmSummary {
        treated: summarize(&arrays.treated).map_err(|_| Error::EmptyArm("treated"))?,
        control: summarize(&arrays.control).map_err(|_| Error::EmptyArm("control"))?,
    })
}

/// Resampling population: each draw picks a value of the arm's array
/// uniformly with replacement.
pub fn bootstrap_population(arrays: &ArmArrays) -> Result<Population> {
    Population::empirical(arrays.treated.clone(), arrays.control.clone())
}

/// Published clicks-per-million summary of the reference study, treated arm.
pub const TABLE1_TREATED: SummaryStats = SummaryStats {
    mean: 34176.0,
    stdev: 12256.0,
    min: 14732.0,
    median: 31358.0,
    max: 75752.0,
};

/// Published clicks-per-million summary of the reference study, control arm.
pub const TABLE1_CONTROL: SummaryStats = SummaryStats {
    mean: 53618.0,
    stdev: 24850.0,
    min: 20757.0,
    median: 48796.0,
    max: 162068.0,
};

/// Number of experiments per arm in the reference study.
pub const TABLE1_ROWS_PER_ARM: usize = 40;

fn matched_arm(n: usize, target: &SummaryStats, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let cv = target.stdev / target.mean;
    let dist = LogNormal::new(0.0, (1.0 + cv * cv).ln().sqrt()).expect("finite lognormal");
    loop {
        let raw: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
        let m = mean(&raw).expect("n >= 2");
        let s = sample_variance(&raw).expect("n >= 2").sqrt();
        if s == 0.0 {
            continue;
        }
        let out: Vec<f64> = raw.iter().map(|x| target.mean + target.stdev * (x - m) / s).collect();
        if out.iter().all(|v| *v > 0.0) {
            return out;
        }
    }
}

/// Lognormal draws shifted and scaled so that each arm's sample mean and
/// standard deviation equal the published reference values exactly.
/// Redraws an arm until every value is positive.
pub fn synthetic_table1(n_per_arm: usize, seed: u64) -> Result<ArmArrays> {
    if n_per_arm < 2 {
        return Err(Error::TooFewObservations { got: n_per_arm });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let treated = matched_arm(n_per_arm, &TABLE1_TREATED, &mut rng);
    let control = matched_arm(n_per_arm, &TABLE1_CONTROL, &mut rng);
    Ok(ArmArrays { treated, control })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ingest_examples() {
        let csv = "arm,impressions,clicks\ntreated,1000000,34176\ncontrol,2000000,0\nTreated,500000,10\n";
        let arrays = ingest_csv(csv.as_bytes()).unwrap();
        assert_eq!(arrays.treated, vec![34176.0, 20.0]);
        assert_eq!(arrays.control, vec![0.0]);
    }

    #[test]
    fn ingest_errors_carry_line_numbers() {
        let csv = "arm,impressions,clicks\ntreated,10,3\ncontrol,10,11\n";
        assert!(matches!(ingest_csv(csv.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let csv = "arm,impressions,clicks\ntreated,10,3\nplacebo,10,1\n";
        assert!(matches!(ingest_csv(csv.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let csv = "arm,impressions,clicks\ntreated,ten,3\n";
        assert!(matches!(ingest_csv(csv.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let csv = "arm,views,clicks\ntreated,10,3\n";
        assert!(matches!(ingest_csv(csv.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let csv = "arm,impressions,clicks\ntreated,10,3\n";
        assert_eq!(ingest_csv(csv.as_bytes()), Err(Error::EmptyArm("control")));
    }

    #[test]
    fn normalization_is_scale_consistent() {
        let a = ingest_csv("arm,impressions,clicks\ntreated,777,13\ncontrol,5,1\n".as_bytes()).unwrap();
        let b = ingest_csv("arm,impressions,clicks\ntreated,1554,26\ncontrol,10,2\n".as_bytes()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.stdev, s.min, s.median, s.max), (2.0, 1.0, 1.0, 2.0, 3.0));
        assert_eq!(summarize(&[5.0; 4]).unwrap().stdev, 0.0);
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn synthetic_generator_matches_moments_exactly() {
        for (n, seed) in [(2, 0), (40, 1), (40, 2), (1000, 3)] {
            let a = synthetic_table1(n, seed).unwrap();
            let s = summarize_arms(&a).unwrap();
            assert!(rel(s.treated.mean, 34176.0) < 1e-9);
            assert!(rel(s.treated.stdev, 12256.0) < 1e-9);
            assert!(rel(s.control.mean, 53618.0) < 1e-9);
            assert!(rel(s.control.stdev, 24850.0) < 1e-9);
            assert!(rel(s.treated.mean - s.control.mean, -19442.0) < 1e-9);
            assert!(a.treated.iter().chain(&a.control).all(|v| *v > 0.0));
        }
        assert_eq!(synthetic_table1(40, 5).unwrap(), synthetic_table1(40, 5).unwrap());
        assert!(synthetic_table1(1, 0).is_err());
    }

    #[test]
    fn arrays_round_trip_through_csv_and_json() {
        let arrays = synthetic_table1(40, 11).unwrap();
        let json = serde_json::to_string(&arrays).unwrap();
        let back: ArmArrays = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arrays);

        let mut csv = String::from("arm,impressions,clicks\n");
        for v in &arrays.treated {
            csv.push_str(&format!("treated,1000000,{}\n", v.round()));
        }
        for v in &arrays.control {
            csv.push_str(&format!("control,1000000,{}\n", v.round()));
        }
        let once = ingest_csv(csv.as_bytes()).unwrap();
        let mut again = String::from("arm,impressions,clicks\n");
        for v in &once.treated {
            again.push_str(&format!("treated,1000000,{v}\n"));
        }
        for v in &once.control {
            again.push_str(&format!("control,1000000,{v}\n"));
        }
        assert_eq!(ingest_csv(again.as_bytes()).unwrap(), once);
    }
}
