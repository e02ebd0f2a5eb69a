mod advise;

use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neyman_core::bounds::{
    cor_bounds, kl_three_point, lower_bound_instance, thm1_bound, thm2_bound, thm3_bound, thm4_bound,
    three_point_moments, BoundReport, Corollary,
};
use neyman_core::data::{ingest_path, summarize_arms, ArmSummary};
use neyman_core::designs::{DesignConfig, DesignSpec};
use neyman_core::montecarlo::{
    compare_designs, write_csv, BatchOptions, DesignSummary, PopulationSpec, RNG_SCHEME,
};
use neyman_core::oracle::{default_grid, lemma_grid_check, LemmaId, LemmaReport, LemmaStatus};
use serde::Serialize;

/// Exit 1: the request was well formed but the computation refused it.
/// Exit 2: the command line itself is wrong.
enum CliError {
    Usage(String),
    Domain(String),
}

impl From<neyman_core::Error> for CliError {
    fn from(e: neyman_core::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "neyman", version, about = "Adaptive Neyman allocation: design, simulate, bound")]
struct Cli {
    /// Master seed for every random draw. NEYMAN_SEED overrides it when set.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignName {
    Halfhalf,
    Twostage,
    Mstage,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    design: Option<DesignName>,
    /// Number of stages.
    #[arg(long = "M")]
    stages: Option<usize>,
    /// Horizon (total subjects).
    #[arg(long = "T")]
    horizon: u64,
    /// thm3, cor1, cor2, preset or custom.
    #[arg(long)]
    schedule: Option<String>,
    /// Two-stage pilot constant.
    #[arg(long)]
    beta: Option<f64>,
    /// Custom schedule constants, comma separated.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Outcome bound constant for the cor1 / cor2 schedules.
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    min_arm_obs: Option<u64>,
}

impl DesignArgs {
    fn spec(&self) -> CliResult<DesignSpec> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        let stages = match (self.design, self.stages) {
            (Some(DesignName::Halfhalf), None | Some(1)) => 1,
            (Some(DesignName::Twostage), None | Some(2)) => 2,
            (Some(DesignName::Mstage), Some(m)) if m >= 3 => m,
            (Some(DesignName::Mstage), None) => return usage("--design mstage needs --M (at least 3)"),
            (Some(d), Some(m)) => return usage(&format!("--design {d:?} does not take --M {m}")),
            (None, Some(m)) => m,
            (None, None) => return usage("give --design or --M"),
        };
        let mut spec = DesignSpec::new(stages, self.horizon);
        spec.schedule = self.schedule.clone();
        spec.beta = self.beta;
        spec.betas = self.betas.clone();
        spec.c = self.c;
        spec.min_arm_obs = self.min_arm_obs;
        Ok(spec)
    }

    fn config(&self) -> CliResult<DesignConfig> {
        Ok(self.spec()?.to_config()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo summary of one design.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Population, e.g. gaussian:rho=2, threepoint:p=0.3, bounded:c=2,rho=3, table1.
        #[arg(long, default_value = "gaussian:rho=1")]
        pop: String,
        /// Number of trajectories.
        #[arg(long, default_value_t = 1000)]
        n: u64,
        /// Report how often the competitive ratio exceeds this value.
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Several designs on shared outcomes, one CSV row each.
    Compare {
        #[arg(long = "T")]
        horizon: u64,
        /// Stage counts to compare; 1 is the half-half baseline.
        #[arg(long = "M", value_delimiter = ',', default_value = "1,2,3,4,5")]
        stages: Vec<usize>,
        #[arg(long, default_value = "preset")]
        schedule: String,
        /// Overrides the schedule's constant for M = 2.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long, default_value = "table1")]
        pop: String,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// High-probability ratio bounds as a function of M.
    Report {
        #[arg(long = "T")]
        horizon: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long, num_args = 2, default_values_t = [3.0, 3.0])]
        kappa: Vec<f64>,
        #[arg(long = "M", value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        stages: Vec<usize>,
    },
    /// One performance bound.
    Bounds {
        /// 1: half-half, 2: two-stage, 3: M-stage, 4: lower bound.
        #[arg(long, conflicts_with = "cor", required_unless_present = "cor")]
        thm: Option<u8>,
        /// 1: two-stage, 2: M-stage, both in expectation.
        #[arg(long)]
        cor: Option<u8>,
        #[arg(long = "M")]
        stages: Option<usize>,
        #[arg(long = "T")]
        horizon: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, num_args = 2)]
        kappa: Option<Vec<f64>>,
        #[arg(long = "C")]
        c: Option<f64>,
    },
    /// The hard instance pair behind the lower bound.
    Lowerbound {
        #[arg(long = "T")]
        horizon: u64,
    },
    /// Grid checks of the supporting inequalities.
    Lemmas {
        /// Every inequality expected to hold.
        #[arg(long, conflicts_with = "lemma", required_unless_present = "lemma")]
        all: bool,
        /// Specific checks by name, e.g. trick6 or refined5-as-printed.
        #[arg(long)]
        lemma: Vec<String>,
    },
    /// Turn an arm,impressions,clicks CSV into per-arm clicks-per-million arrays.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a live experiment over stdin/stdout.
    Advise {
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "neyman-data")]
        data_dir: PathBuf,
    },
}

fn schema(name: &str) -> String {
    format!("neyman.{name}.v1")
}

fn emit_json<T: Serialize>(value: &T) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn pick(format: Option<Format>, default: Format, allowed: &[Format], command: &str) -> CliResult<Format> {
    let f = format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(CliError::Usage(format!("{command} does not support --format {f:?}")))
    }
}

fn population(spec: &str) -> CliResult<neyman_core::montecarlo::Population> {
    Ok(PopulationSpec(spec.to_string()).build()?)
}

fn write_summary_table(rows: &[DesignSummary]) -> CliResult {
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<9} {:>2} {:>7} {:>8} {:>14} {:>14} {:>10} {:>10}",
        "design", "M", "T", "n", "mean_tau_hat", "var_tau_hat", "mean_ratio", "p95_ratio"
    )?;
    for r in rows {
        let s = &r.summary;
        writeln!(
            out,
            "{:<9} {:>2} {:>7} {:>8} {:>14.6} {:>14.6} {:>10.6} {:>10.6}",
            r.design, r.stages, r.horizon, s.n_trajectories, s.mean_tau_hat, s.var_tau_hat, s.mean_ratio, s.p95_ratio
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    schema: String,
    rng: &'a str,
    seed: u64,
    n: u64,
    pop: &'a str,
    population: String,
    #[serde(flatten)]
    result: &'a DesignSummary,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    schema: String,
    rng: &'a str,
    seed: u64,
    n: u64,
    pop: &'a str,
    results: &'a [DesignSummary],
}

#[derive(Serialize)]
struct BoundsOutput {
    schema: String,
    #[serde(flatten)]
    report: BoundReport,
    params: serde_json::Value,
}

#[derive(Serialize)]
struct ReportRow {
    #[serde(rename = "M")]
    stages: usize,
    #[serde(rename = "T")]
    horizon: u64,
    eps: f64,
    kappa1: f64,
    kappa0: f64,
    ratio_bound: f64,
    probability_floor: f64,
    vacuous: bool,
}

#[derive(Serialize)]
struct LowerboundOutput {
    schema: String,
    #[serde(rename = "T")]
    horizon: u64,
    eps: f64,
    nu: [f64; 3],
    nu_prime: [f64; 3],
    variance_nu: f64,
    variance_nu_prime: f64,
    kl_nu_nu_prime: f64,
    kl_nu_prime_nu: f64,
    kl_cap: f64,
    ratio_lower_bound: f64,
}

#[derive(Serialize)]
struct LemmaRow {
    #[serde(flatten)]
    report: LemmaReport,
    expected: LemmaStatus,
    ok: bool,
}

#[derive(Serialize)]
struct IngestOutput {
    schema: String,
    treated: Vec<f64>,
    control: Vec<f64>,
    summary: ArmSummary,
}

fn run(cli: Cli) -> CliResult {
    let seed = match std::env::var("NEYMAN_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("NEYMAN_SEED must be an unsigned integer, got {v:?}")))?,
        Err(_) => cli.seed,
    };
    match cli.command {
        Command::Simulate { design, pop, n, bound, workers } => {
            let format = pick(cli.format, Format::Json, &[Format::Json, Format::Csv, Format::Table], "simulate")?;
            let config = design.config()?;
            let population = population(&pop)?;
            let opts = BatchOptions { workers, bound };
            let result = compare_designs(&[config], &population, seed, n, &opts)?.remove(0);
            match format {
                Format::Json => emit_json(&SimulateOutput {
                    schema: schema("simulate"),
                    rng: RNG_SCHEME,
                    seed,
                    n,
                    pop: &pop,
                    population: population.label(),
                    result: &result,
                }),
                Format::Csv => Ok(write_csv(&[result.csv_row(&pop)], io::stdout().lock())?),
                Format::Table => write_summary_table(&[result]),
            }
        }
        Command::Compare { horizon, stages, schedule, beta, c, pop, n, workers } => {
            let format = pick(cli.format, Format::Csv, &[Format::Json, Format::Csv, Format::Table], "compare")?;
            if stages.is_empty() {
                return Err(CliError::Usage("--M needs at least one value".into()));
            }
            let configs = stages
                .iter()
                .map(|&m| {
                    let mut spec = DesignSpec::new(m, horizon);
                    spec.c = c;
                    match (m, beta) {
                        (1, _) => {}
                        (2, Some(b)) => spec.beta = Some(b),
                        _ => spec.schedule = Some(schedule.clone()),
                    }
                    spec.to_config()
                })
                .collect::<neyman_core::Result<Vec<_>>>()?;
            let population = population(&pop)?;
            let results = compare_designs(&configs, &population, seed, n, &BatchOptions { workers, bound: None })?;
            match format {
                Format::Csv => {
                    let rows: Vec<_> = results.iter().map(|r| r.csv_row(&pop)).collect();
                    Ok(write_csv(&rows, io::stdout().lock())?)
                }
                Format::Json => emit_json(&CompareOutput {
                    schema: schema("compare"),
                    rng: RNG_SCHEME,
                    seed,
                    n,
                    pop: &pop,
                    results: &results,
                }),
                Format::Table => write_summary_table(&results),
            }
        }
        Command::Report { horizon, eps, kappa, stages } => {
            let format = pick(cli.format, Format::Csv, &[Format::Json, Format::Csv], "report")?;
            let (k1, k0) = (kappa[0], kappa[1]);
            let rows = stages
                .iter()
                .map(|&m| {
                    let r = match m {
                        2 => thm2_bound(horizon, eps, k1, k0)?,
                        _ => thm3_bound(m, horizon, eps, k1, k0)?,
                    };
                    Ok(ReportRow {
                        stages: m,
                        horizon,
                        eps,
                        kappa1: k1,
                        kappa0: k0,
                        ratio_bound: r.ratio_bound,
                        probability_floor: r.probability_floor,
                        vacuous: r.vacuous,
                    })
                })
                .collect::<neyman_core::Result<Vec<_>>>()?;
            match format {
                Format::Json => emit_json(&serde_json::json!({ "schema": schema("report"), "rows": rows })),
                _ => {
                    let mut w = csv::Writer::from_writer(io::stdout().lock());
                    for row in &rows {
                        w.serialize(row).map_err(|e| CliError::Domain(e.to_string()))?;
                    }
                    Ok(w.flush()?)
                }
            }
        }
        Command::Bounds { thm, cor, stages, horizon, eps, kappa, c } => {
            let format = pick(cli.format, Format::Json, &[Format::Json, Format::Table], "bounds")?;
            let need_t = || horizon.ok_or_else(|| CliError::Usage("this bound needs --T".into()));
            let need_eps = || eps.ok_or_else(|| CliError::Usage("this bound needs --eps".into()));
            let need_m = || stages.ok_or_else(|| CliError::Usage("this bound needs --M".into()));
            let need_c = || c.ok_or_else(|| CliError::Usage("this bound needs --C".into()));
            let (k1, k0) = match &kappa {
                Some(k) => (k[0], k[1]),
                None => (3.0, 3.0),
            };
            let report = match (thm, cor) {
                (Some(1), _) => thm1_bound(),
                (Some(2), _) => thm2_bound(need_t()?, need_eps()?, k1, k0)?,
                (Some(3), _) => thm3_bound(need_m()?, need_t()?, need_eps()?, k1, k0)?,
                (Some(4), _) => BoundReport {
                    ratio_bound: thm4_bound(need_t()?)?,
                    probability_floor: 1.0,
                    vacuous: false,
                    source: neyman_core::bounds::BoundSource::Thm4,
                },
                (None, Some(1)) => cor_bounds(Corollary::Cor1, 2, need_t()?, need_c()?)?,
                (None, Some(2)) => cor_bounds(Corollary::Cor2, need_m()?, need_t()?, need_c()?)?,
                _ => return Err(CliError::Usage("--thm takes 1..=4 and --cor takes 1 or 2".into())),
            };
            let params = serde_json::json!({ "M": stages, "T": horizon, "eps": eps, "kappa": [k1, k0], "C": c });
            match format {
                Format::Table => {
                    let mut out = io::stdout().lock();
                    writeln!(out, "source {:?}", report.source)?;
                    writeln!(out, "ratio_bound {}", report.ratio_bound)?;
                    writeln!(out, "probability_floor {}", report.probability_floor)?;
                    writeln!(out, "vacuous {}", report.vacuous)?;
                    Ok(())
                }
                _ => emit_json(&BoundsOutput { schema: schema("bounds"), report, params }),
            }
        }
        Command::Lowerbound { horizon } => {
            pick(cli.format, Format::Json, &[Format::Json], "lowerbound")?;
            let inst = lower_bound_instance(horizon)?;
            emit_json(&LowerboundOutput {
                schema: schema("lowerbound"),
                horizon,
                eps: inst.eps,
                nu: inst.nu.probs(),
                nu_prime: inst.nu_prime.probs(),
                variance_nu: three_point_moments(&inst.nu).variance,
                variance_nu_prime: three_point_moments(&inst.nu_prime).variance,
                kl_nu_nu_prime: kl_three_point(&inst.nu, &inst.nu_prime)?,
                kl_nu_prime_nu: kl_three_point(&inst.nu_prime, &inst.nu)?,
                kl_cap: 1.0 / (2.0 * horizon as f64),
                ratio_lower_bound: thm4_bound(horizon)?,
            })
        }
        Command::Lemmas { all, lemma } => {
            let format = pick(cli.format, Format::Json, &[Format::Json, Format::Table], "lemmas")?;
            let ids: Vec<LemmaId> = if all {
                LemmaId::ALL.into_iter().filter(|id| id.is_sound()).collect()
            } else {
                lemma
                    .iter()
                    .map(|s| s.parse::<LemmaId>().map_err(|e| CliError::Usage(e.to_string())))
                    .collect::<CliResult<_>>()?
            };
            let rows: Vec<LemmaRow> = ids
                .into_iter()
                .map(|id| {
                    let report = lemma_grid_check(id, &default_grid(id));
                    let expected = if id.is_sound() { LemmaStatus::Pass } else { LemmaStatus::Counterexample };
                    LemmaRow { ok: report.status == expected, report, expected }
                })
                .collect();
            let all_ok = rows.iter().all(|r| r.ok);
            match format {
                Format::Table => {
                    let mut out = io::stdout().lock();
                    for r in &rows {
                        let name = |s: LemmaStatus| serde_json::to_value(s).unwrap_or_default();
                        writeln!(
                            out,
                            "{:<20} {:<24} expected={:<16} points={} tight={}",
                            r.report.lemma.name(),
                            name(r.report.status).as_str().unwrap_or("?"),
                            name(r.expected).as_str().unwrap_or("?"),
                            r.report.points,
                            r.report.boundary_tight
                        )?;
                    }
                }
                _ => emit_json(&serde_json::json!({ "schema": schema("lemmas"), "rows": rows }))?,
            }
            if all_ok {
                Ok(())
            } else {
                Err(CliError::Domain("some checks did not match their expected status".into()))
            }
        }
        Command::Ingest { input } => {
            pick(cli.format, Format::Json, &[Format::Json], "ingest")?;
            let arrays = ingest_path(&input)?;
            let summary = summarize_arms(&arrays)?;
            emit_json(&IngestOutput {
                schema: schema("ingest"),
                treated: arrays.treated,
                control: arrays.control,
                summary,
            })
        }
        Command::Advise { design } => {
            let config = design.config()?;
            let stdin = io::stdin().lock();
            let mut stdout = io::stdout().lock();
            match advise::run(config, stdin, &mut stdout) {
                Ok(_) => Ok(()),
                Err(advise::AdviseError::Io(e)) => Err(e.into()),
                Err(advise::AdviseError::Domain(e)) => Err(e.into()),
                Err(advise::AdviseError::Eof { stage }) => {
                    Err(CliError::Domain(format!("input ended while stage {stage} was pending")))
                }
            }
        }
        Command::Serve { port, host, data_dir } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Usage(format!("bad address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            Ok(rt.block_on(neyman_service::serve(addr, data_dir))?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
