use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TrajectoryResult;
use crate::designs::CaseLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_trajectories: u64,
    /// Trajectories that ended in an error (degenerate estimation and the like).
    pub n_failed: u64,
    pub n_infinite_ratio: u64,
    /// Mean over finite ratios.
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub p50_ratio: f64,
    pub p95_ratio: f64,
    pub p99_ratio: f64,
    pub mean_tau_hat: f64,
    /// Divisor `n − 1`; 0 for a single trajectory.
    pub var_tau_hat: f64,
    pub se_mean_tau_hat: f64,
    /// Large-sample standard error of `var_tau_hat`, `√((m₄ − s⁴)/n)`.
    pub se_var_tau_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_violation_rate: Option<f64>,
    /// Counts keyed by `Init>Case3>LastCase2`-style paths.
    pub case_paths: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    index: u64,
    tau_hat: f64,
    ratio: f64,
    case_path: Vec<CaseLabel>,
}

/// Order-independent accumulator: merging is concatenation and the summary
/// is computed after sorting by trajectory index.
#[derive(Debug, Clone, Default)]
pub struct BatchAccumulator {
    records: Vec<Record>,
    failed: Vec<u64>,
}

impl BatchAccumulator {
    pub fn push(&mut self, index: u64, result: Result<TrajectoryResult>) {
        match result {
            Ok(r) => self.records.push(Record {
                index,
                tau_hat: r.tau_hat,
                ratio: r.proxy_ratio,
                case_path: r.case_path,
            }),
            Err(_) => self.failed.push(index),
        }
    }

    pub fn merge(mut self, mut other: Self) -> Self {
        self.records.append(&mut other.records);
        self.failed.append(&mut other.failed);
        self
    }

    pub fn finish(mut self) -> Batch {
        self.records.sort_by_key(|r| r.index);
        self.failed.sort_unstable();
        Batch {
            records: self.records,
            failed: self.failed,
        }
    }
}

/// Completed trajectories in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    records: Vec<Record>,
    failed: Vec<u64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ratio).collect()
    }

    pub fn tau_hats(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau_hat).collect()
    }

    pub fn bound_violation_rate(&self, bound: f64) -> f64 {
        bound_violation_rate(&self.ratios(), bound)
    }

    pub fn summary(&self, bound: Option<f64>) -> Result<BatchSummary> {
        if self.records.is_empty() {
            return Err(Error::InvalidSpec("batch has no completed trajectories".into()));
        }
        let n = self.records.len() as f64;
        let mut ratios = self.ratios();
        ratios.sort_by(f64::total_cmp);
        let finite: Vec<f64> = ratios.iter().copied().filter(|r| r.is_finite()).collect();
        let mean_ratio = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };

        let taus = self.tau_hats();
        let mean_tau = taus.iter().sum::<f64>() / n;
        let (var_tau, se_var) = if taus.len() >= 2 {
            let m2 = taus.iter().map(|t| (t - mean_tau).powi(2)).sum::<f64>();
            let m4 = taus.iter().map(|t| (t - mean_tau).powi(4)).sum::<f64>() / n;
            let var = m2 / (n - 1.0);
            (var, ((m4 - var * var).max(0.0) / n).sqrt())
        } else {
            (0.0, 0.0)
        };

        let mut case_paths = BTreeMap::new();
        for r in &self.records {
            let key = r.case_path.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(">");
            *case_paths.entry(key).or_insert(0) += 1;
        }

        Ok(BatchSummary {
            n_trajectories: self.records.len() as u64,
            n_failed: self.failed.len() as u64,
            n_infinite_ratio: (ratios.len() - finite.len()) as u64,
            mean_ratio,
            min_ratio: ratios[0],
            p50_ratio: quantile(&ratios, 0.50),
            p95_ratio: quantile(&ratios, 0.95),
            p99_ratio: quantile(&ratios, 0.99),
            mean_tau_hat: mean_tau,
            var_tau_hat: var_tau,
            se_mean_tau_hat: (var_tau / n).sqrt(),
            se_var_tau_hat: se_var,
            bound,
            bound_violation_rate: bound.map(|b| bound_violation_rate(&ratios, b)),
            case_paths,
        })
    }
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Fraction of ratios strictly above `bound`.
pub fn bound_violation_rate(ratios: &[f64], bound: f64) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().filter(|r| **r > bound).count() as f64 / ratios.len() as f64
}

/// One line of the flat comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub design: String,
    #[serde(rename = "M")]
    pub stages: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub pop: String,
    pub n: u64,
    pub var_tau_hat: f64,
    pub mean_ratio: f64,
    pub p95_ratio: f64,
}

/// Writes `design,M,T,pop,n,var_tau_hat,mean_ratio,p95_ratio` with a header.
pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
