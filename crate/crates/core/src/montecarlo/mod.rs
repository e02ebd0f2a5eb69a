//! Deterministic Monte Carlo evaluation of designs.
//!
//! Every trajectory `i` under master seed `s` first draws two arrays of `T`
//! potential outcomes, one per arm, from generator streams derived from
//! `(s, i)` (see [`rng`]). A design then reads its treated outcomes from the
//! front of the treated array and its control outcomes from the front of the
//! control array, so two designs run on the same index see the same
//! subjects. Results are merged in index order, which makes a batch
//! independent of the worker count.
//!
//! ```
//! use neyman_core::designs::DesignConfig;
//! use neyman_core::montecarlo::{run_batch, BatchOptions, Population};
//!
//! let design = DesignConfig::two_stage(1000, 2.0).unwrap();
//! let pop = Population::gaussian(0.0, 2.0, 0.0, 1.0).unwrap();
//! let summary = run_batch(&design, &pop, 7, 200, &BatchOptions::default()).unwrap();
//! assert_eq!(summary.n_trajectories, 200);
//! assert!(summary.min_ratio >= 1.0);
//! ```

mod population;
pub mod rng;
mod summary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{competitive_ratio, Allocation, ArmMoments};
use crate::designs::{Arm, CaseLabel, DesignConfig, DesignKind, DesignState};
use crate::error::{Error, Result};

pub use population::{Population, PopulationSpec};
pub use rng::{stream, StreamTag, RNG_SCHEME};
pub use summary::{
    bound_violation_rate, quantile, read_csv, write_csv, Batch, BatchAccumulator, BatchSummary, CsvRow,
};

/// One simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub index: u64,
    pub totals: Allocation,
    pub tau_hat: f64,
    /// Realized proxy MSE over the clairvoyant value; `+∞` if an arm with
    /// positive variance received nobody, 1 if both arms are constant.
    pub proxy_ratio: f64,
    pub case_path: Vec<CaseLabel>,
}

/// Potential outcomes of the `T` subjects of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeArrays {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

impl OutcomeArrays {
    pub fn draw(pop: &Population, horizon: u64, master_seed: u64, index: u64) -> Self {
        let n = horizon as usize;
        Self {
            treated: pop.draw(Arm::Treated, n, &mut stream(master_seed, index, StreamTag::TreatedOutcomes)),
            control: pop.draw(Arm::Control, n, &mut stream(master_seed, index, StreamTag::ControlOutcomes)),
        }
    }
}

/// Runs a design on pre-drawn outcomes, revealing only the assigned arm's
/// outcome for each subject.
pub fn run_on_arrays(
    design: &DesignConfig,
    arrays: &OutcomeArrays,
    truth: &ArmMoments,
    index: u64,
) -> Result<TrajectoryResult> {
    let horizon = design.horizon;
    if arrays.treated.len() as u64 != horizon || arrays.control.len() as u64 != horizon {
        return Err(Error::MismatchedHorizon(horizon, arrays.treated.len() as u64));
    }
    let (mut state, mut stage) = DesignState::start(design.clone())?;
    let (mut used1, mut used0) = (0usize, 0usize);
    loop {
        let (n1, n0) = (stage.t1 as usize, stage.t0 as usize);
        let t = &arrays.treated[used1..used1 + n1];
        let c = &arrays.control[used0..used0 + n0];
        used1 += n1;
        used0 += n0;
        match state.submit(t, c)? {
            Some(next) => stage = next,
            None => break,
        }
    }
    let (totals, tau_hat) = state.finalize()?;
    Ok(TrajectoryResult {
        index,
        totals,
        tau_hat,
        proxy_ratio: match competitive_ratio(&totals, truth, horizon) {
            // Both arms constant: every allocation attains the zero optimum.
            Err(Error::ZeroBenchmark) => 1.0,
            other => other?,
        },
        case_path: state.case_path(),
    })
}

/// Simulates trajectory `index` of the batch keyed by `master_seed`.
pub fn run_trajectory(
    design: &DesignConfig,
    pop: &Population,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryResult> {
    let arrays = OutcomeArrays::draw(pop, design.horizon, master_seed, index);
    run_on_arrays(design, &arrays, &pop.true_moments(), index)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Ratio ceiling whose exceedance rate is reported.
    #[serde(default)]
    pub bound: Option<f64>,
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one trajectory".into()));
    }
    if n > rng::MAX_INDEX {
        return Err(Error::InvalidSpec(format!("at most {} trajectories", rng::MAX_INDEX)));
    }
    Ok(())
}

/// Trajectories `0..n`, in index order.
pub fn run_batch_records(
    design: &DesignConfig,
    pop: &Population,
    master_seed: u64,
    n: u64,
    workers: Option<usize>,
) -> Result<Batch> {
    check_n(n)?;
    design.validate()?;
    pop.validate()?;
    let truth = pop.true_moments();
    with_pool(workers, || {
        (0..n)
            .into_par_iter()
            .fold(BatchAccumulator::default, |mut acc, i| {
                let arrays = OutcomeArrays::draw(pop, design.horizon, master_seed, i);
                acc.push(i, run_on_arrays(design, &arrays, &truth, i));
                acc
            })
            .reduce(BatchAccumulator::default, BatchAccumulator::merge)
            .finish()
    })
}

pub fn run_batch(
    design: &DesignConfig,
    pop: &Population,
    master_seed: u64,
    n: u64,
    opts: &BatchOptions,
) -> Result<BatchSummary> {
    run_batch_records(design, pop, master_seed, n, opts.workers)?.summary(opts.bound)
}

/// Short design name used in tables.
pub fn design_label(design: &DesignConfig) -> &'static str {
    match design.kind {
        DesignKind::HalfHalf => "halfhalf",
        DesignKind::TwoStage => "twostage",
        DesignKind::MultiStage => "mstage",
    }
}

/// Runs every design on the same outcome arrays per index.
pub fn compare_design_records(
    designs: &[DesignConfig],
    pop: &Population,
    master_seed: u64,
    n: u64,
    workers: Option<usize>,
) -> Result<Vec<Batch>> {
    check_n(n)?;
    let horizon = designs
        .first()
        .ok_or_else(|| Error::InvalidSpec("no designs to compare".into()))?
        .horizon;
    for d in designs {
        if d.horizon != horizon {
            return Err(Error::MismatchedHorizon(horizon, d.horizon));
        }
        d.validate()?;
    }
    pop.validate()?;
    let truth = pop.true_moments();
    let k = designs.len();
    with_pool(workers, || {
        (0..n)
            .into_par_iter()
            .fold(
                || vec![BatchAccumulator::default(); k],
                |mut accs, i| {
                    let arrays = OutcomeArrays::draw(pop, horizon, master_seed, i);
                    for (acc, d) in accs.iter_mut().zip(designs) {
                        acc.push(i, run_on_arrays(d, &arrays, &truth, i));
                    }
                    accs
                },
            )
            .reduce(
                || vec![BatchAccumulator::default(); k],
                |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
            )
            .into_iter()
            .map(BatchAccumulator::finish)
            .collect()
    })
}

/// A design's summary inside a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: String,
    #[serde(rename = "M")]
    pub stages: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub betas: Vec<f64>,
    pub summary: BatchSummary,
}

impl DesignSummary {
    pub fn csv_row(&self, pop: &str) -> CsvRow {
        CsvRow {
            design: self.design.clone(),
            stages: self.stages,
            horizon: self.horizon,
            pop: pop.to_string(),
            n: self.summary.n_trajectories,
            var_tau_hat: self.summary.var_tau_hat,
            mean_ratio: self.summary.mean_ratio,
            p95_ratio: self.summary.p95_ratio,
        }
    }
}

pub fn compare_designs(
    designs: &[DesignConfig],
    pop: &Population,
    master_seed: u64,
    n: u64,
    opts: &BatchOptions,
) -> Result<Vec<DesignSummary>> {
    let batches = compare_design_records(designs, pop, master_seed, n, opts.workers)?;
    designs
        .iter()
        .zip(batches)
        .map(|(d, b)| {
            Ok(DesignSummary {
                design: design_label(d).to_string(),
                stages: d.stages,
                horizon: d.horizon,
                betas: d.betas.clone(),
                summary: b.summary(opts.bound)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuning::thm3_schedule;

    fn gaussian(rho: f64) -> Population {
        Population::gaussian(0.0, rho, 0.0, 1.0).unwrap()
    }

    #[test]
    fn trajectory_is_reproducible() {
        let d = DesignConfig::multi_stage(1000, &thm3_schedule(3).unwrap()).unwrap();
        let a = run_trajectory(&d, &gaussian(2.0), 11, 5).unwrap();
        let b = run_trajectory(&d, &gaussian(2.0), 11, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.totals.total(), 1000);
        assert!(a.proxy_ratio >= 1.0);
        let c = run_trajectory(&d, &gaussian(2.0), 11, 6).unwrap();
        assert_ne!(a.tau_hat, c.tau_hat);
    }

    #[test]
    fn tiny_three_point_two_stage_completes() {
        let pop = PopulationSpec("threepoint:p=1/3".into()).build().unwrap();
        let d = DesignConfig::two_stage(16, 1.0).unwrap();
        for i in 0..200 {
            let r = run_trajectory(&d, &pop, 0, i).unwrap();
            assert_eq!(r.totals.total(), 16);
        }
    }

    #[test]
    fn batch_is_independent_of_workers() {
        let d = DesignConfig::two_stage(400, 2.0).unwrap();
        let pop = gaussian(3.0);
        let one = run_batch(&d, &pop, 3, 300, &BatchOptions { workers: Some(1), bound: Some(1.05) }).unwrap();
        let four = run_batch(&d, &pop, 3, 300, &BatchOptions { workers: Some(4), bound: Some(1.05) }).unwrap();
        let global = run_batch(&d, &pop, 3, 300, &BatchOptions { workers: None, bound: Some(1.05) }).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, global);
    }

    #[test]
    fn single_trajectory_batch_matches_trajectory() {
        let d = DesignConfig::two_stage(400, 2.0).unwrap();
        let pop = gaussian(3.0);
        let s = run_batch(&d, &pop, 9, 1, &BatchOptions::default()).unwrap();
        let r = run_trajectory(&d, &pop, 9, 0).unwrap();
        assert_eq!(s.mean_tau_hat, r.tau_hat);
        assert_eq!(s.mean_ratio, r.proxy_ratio);
        assert_eq!(s.p50_ratio, r.proxy_ratio);
    }

    #[test]
    fn identical_designs_compare_identically() {
        let d = DesignConfig::two_stage(400, 2.0).unwrap();
        let out = compare_designs(&[d.clone(), d], &gaussian(2.0), 1, 100, &BatchOptions::default()).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn comparison_rejects_mixed_horizons() {
        let a = DesignConfig::half_half(100).unwrap();
        let b = DesignConfig::half_half(200).unwrap();
        assert_eq!(
            compare_designs(&[a, b], &gaussian(1.0), 0, 10, &BatchOptions::default()),
            Err(Error::MismatchedHorizon(100, 200))
        );
    }

    #[test]
    fn comparison_matches_separate_batches() {
        let designs = vec![
            DesignConfig::half_half(500).unwrap(),
            DesignConfig::two_stage(500, 2.0).unwrap(),
            DesignConfig::multi_stage(500, &thm3_schedule(3).unwrap()).unwrap(),
        ];
        let pop = gaussian(4.0);
        let table = compare_designs(&designs, &pop, 21, 150, &BatchOptions::default()).unwrap();
        for (d, row) in designs.iter().zip(&table) {
            let alone = run_batch(d, &pop, 21, 150, &BatchOptions::default()).unwrap();
            assert_eq!(row.summary, alone);
        }
    }

    #[test]
    fn half_half_variance_matches_closed_form() {
        let pop = gaussian(2.0);
        let d = DesignConfig::half_half(200).unwrap();
        let s = run_batch(&d, &pop, 5, 20_000, &BatchOptions::default()).unwrap();
        let expect = 4.0 / 100.0 + 1.0 / 100.0;
        assert!((s.var_tau_hat - expect).abs() < 4.0 * s.se_var_tau_hat, "{} vs {expect}", s.var_tau_hat);
        assert!(s.mean_tau_hat.abs() < 4.0 * s.se_mean_tau_hat);
        assert_eq!(s.min_ratio, s.p99_ratio);
    }

    #[test]
    fn constant_arrays_give_exact_tau() {
        let pop = Population::empirical(vec![7.0], vec![2.0]).unwrap();
        let d = DesignConfig::multi_stage(1000, &thm3_schedule(4).unwrap()).unwrap();
        for i in 0..20 {
            let r = run_trajectory(&d, &pop, 0, i).unwrap();
            assert_eq!(r.tau_hat, 5.0);
        }
    }
}
