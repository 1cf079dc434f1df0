//! Randomized benchmark: sample scenarios in three data-rate regimes, run
//! the SDR scheme with and without compression (plus the exact oracle on
//! small instances), and emit one CSV row per run.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cap, CostBreakdown, Device, Instance, Task};
use crate::oracle::{assignment_count, solve_exact, OracleLimits};
use crate::par::{map_indexed, Execution};
use crate::rounding::{run_algorithm1, RoundingOptions};
use crate::sdp::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRange {
    Low,
    Mid,
    High,
}

impl RateRange {
    pub const ALL: [RateRange; 3] = [RateRange::Low, RateRange::Mid, RateRange::High];

    /// Uplink/downlink rate bounds in bits/s.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            RateRange::Low => (5e5, 1e6),
            RateRange::Mid => (1e6, 2e6),
            RateRange::High => (2e6, 1e7),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RateRange::Low => "low",
            RateRange::Mid => "mid",
            RateRange::High => "high",
        }
    }
}

impl FromStr for RateRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(RateRange::Low),
            "mid" => Ok(RateRange::Mid),
            "high" => Ok(RateRange::High),
            _ => Err(Error::invalid("rate_range", format!("unknown range {s:?} (low|mid|high)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SdrCompress,
    SdrNocompress,
    Oracle,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::SdrCompress => "sdr_compress",
            Scheme::SdrNocompress => "sdr_nocompress",
            Scheme::Oracle => "oracle",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdr_compress" => Ok(Scheme::SdrCompress),
            "sdr_nocompress" => Ok(Scheme::SdrNocompress),
            "oracle" => Ok(Scheme::Oracle),
            _ => Err(Error::invalid("scheme", format!("unknown scheme {s:?}"))),
        }
    }
}

/// Fixed device radio/CPU parameters; J^C and E^C are drawn per realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTemplate {
    pub r0: f64,
    pub p_comp: f64,
    pub p_tx: f64,
    pub p_rx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceTemplate {
    pub device: DeviceTemplate,
    /// CPU rate of each CAP, cycles/s.
    pub cap_rates: Vec<f64>,
    /// Input size per task, bits.
    pub alpha: f64,
    /// Output size as a fraction of the input size.
    pub beta_fraction: f64,
    /// Cycles per input bit.
    pub kappa: f64,
    pub jc_range: [f64; 2],
    pub ec_range: [f64; 2],
    pub lambda_t: f64,
    pub lambda_e: f64,
}

pub fn default_instance_template() -> InstanceTemplate {
    InstanceTemplate {
        device: DeviceTemplate {
            r0: 4e8,
            p_comp: 0.8,
            p_tx: 1.258,
            p_rx: 1.181,
        },
        cap_rates: vec![2e9, 2.2e9],
        alpha: 4e6,
        beta_fraction: 0.2,
        kappa: 330.0,
        jc_range: [200.0, 500.0],
        ec_range: [1e-10, 2e-10],
        lambda_t: 0.5,
        lambda_e: 0.5,
    }
}

impl InstanceTemplate {
    pub fn task(&self) -> Task {
        Task {
            alpha: self.alpha,
            beta: self.beta_fraction * self.alpha,
            omega: self.kappa * self.alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        for (field, r) in [("template.jc_range", self.jc_range), ("template.ec_range", self.ec_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] >= 0.0 && r[0] <= r[1]) {
                return Err(Error::invalid(field, "need 0 <= lo <= hi"));
            }
        }
        if self.cap_rates.is_empty() {
            return Err(Error::invalid("template.cap_rates", "at least one CAP required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundingConfig {
    pub l: usize,
    pub refine_gamma: bool,
    pub include_column_candidate: bool,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self {
            l: 100,
            refine_gamma: true,
            include_column_candidate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub rate_ranges: Vec<RateRange>,
    pub n_min: usize,
    pub n_max: usize,
    pub realizations: usize,
    pub seed: u64,
    pub template: InstanceTemplate,
    pub rounding: RoundingConfig,
    /// Run the oracle whenever (M+1)^N ≤ `oracle_limit`.
    pub oracle: bool,
    pub oracle_limit: u64,
    /// Fill `wall_ms`; off by default so reruns give identical CSV bytes.
    pub record_timing: bool,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rate_ranges: RateRange::ALL.to_vec(),
            n_min: 1,
            n_max: 10,
            realizations: 50,
            seed: 0,
            template: default_instance_template(),
            rounding: RoundingConfig::default(),
            oracle: true,
            oracle_limit: OracleLimits::default().max_assignments,
            record_timing: false,
            execution: Execution::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be >= 1"));
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::invalid("n_min", "need 1 <= n_min <= n_max"));
        }
        if self.rate_ranges.is_empty() {
            return Err(Error::invalid("rate_ranges", "must not be empty"));
        }
        if self.rounding.l == 0 {
            return Err(Error::invalid("rounding.l", "must be >= 1"));
        }
        self.template.validate()
    }

    fn rounding_options(&self, seed: u64, pin_gamma_zero: bool) -> RoundingOptions {
        RoundingOptions {
            l: self.rounding.l,
            seed,
            refine_gamma: self.rounding.refine_gamma,
            include_column_candidate: self.rounding.include_column_candidate,
            pin_gamma_zero,
            solver: SolverOptions::default(),
            execution: Execution::Sequential,
            ..RoundingOptions::default()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one (range, n, realization) job, independent of run order.
pub fn job_seed(seed: u64, range: RateRange, n_tasks: usize, realization: usize) -> u64 {
    [range as u64, n_tasks as u64, realization as u64]
        .iter()
        .fold(splitmix64(seed), |acc, &v| splitmix64(acc ^ v))
}

/// Random scenario: per-CAP uplink/downlink rates drawn independently and
/// uniformly from `range`, J^C and E^C uniform in the template ranges.
pub fn sample_realization(
    template: &InstanceTemplate,
    range: RateRange,
    n_tasks: usize,
    rng: &mut impl Rng,
) -> Instance {
    let (lo, hi) = range.bounds();
    let uniform = |rng: &mut dyn rand::RngCore, r: [f64; 2]| {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..=r[1])
        }
    };
    let jc = uniform(rng, template.jc_range);
    let ec = uniform(rng, template.ec_range);
    let caps = template
        .cap_rates
        .iter()
        .map(|&r| Cap {
            r,
            c_ul: rng.random_range(lo..=hi),
            c_dl: rng.random_range(lo..=hi),
        })
        .collect();
    Instance {
        device: Device {
            r0: template.device.r0,
            p_comp: template.device.p_comp,
            p_tx: template.device.p_tx,
            p_rx: template.device.p_rx,
            jc,
            ec,
        },
        caps,
        tasks: vec![template.task(); n_tasks],
        lambda_t: template.lambda_t,
        lambda_e: template.lambda_e,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rate_range: RateRange,
    pub n_tasks: usize,
    pub realization: usize,
    pub scheme: Scheme,
    pub psi: f64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub gamma: f64,
    pub sdr_lower_bound: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub status: String,
}

impl ResultRow {
    fn key(&self) -> (RateRange, usize, usize, Scheme) {
        (self.rate_range, self.n_tasks, self.realization, self.scheme)
    }
}

struct Job {
    range: RateRange,
    n_tasks: usize,
    realization: usize,
}

fn failed_row(job: &Job, scheme: Scheme, status: String) -> ResultRow {
    ResultRow {
        rate_range: job.range,
        n_tasks: job.n_tasks,
        realization: job.realization,
        scheme,
        psi: f64::NAN,
        latency_s: f64::NAN,
        energy_j: f64::NAN,
        gamma: f64::NAN,
        sdr_lower_bound: None,
        iterations: None,
        wall_ms: None,
        status,
    }
}

fn cost_row(job: &Job, scheme: Scheme, b: &CostBreakdown, gamma: f64) -> ResultRow {
    ResultRow {
        psi: b.psi,
        latency_s: b.latency,
        energy_j: b.energy,
        gamma,
        status: "optimal".into(),
        ..failed_row(job, scheme, String::new())
    }
}

fn run_job(cfg: &ExperimentConfig, job: &Job) -> Vec<ResultRow> {
    let seed = job_seed(cfg.seed, job.range, job.n_tasks, job.realization);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = sample_realization(&cfg.template, job.range, job.n_tasks, &mut rng);
    let timed = |start: Instant| cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3);

    let mut rows = Vec::with_capacity(3);
    for (scheme, pin) in [(Scheme::SdrCompress, false), (Scheme::SdrNocompress, true)] {
        let start = Instant::now();
        let row = match run_algorithm1(&inst, &cfg.rounding_options(seed, pin)) {
            Ok(rep) => ResultRow {
                sdr_lower_bound: Some(rep.sdr_lower_bound),
                iterations: Some(rep.solver_iterations),
                wall_ms: timed(start),
                status: rep.solver_status.to_string(),
                ..cost_row(job, scheme, &rep.breakdown, rep.gamma)
            },
            Err(e) => failed_row(job, scheme, format!("error: {e}")),
        };
        rows.push(row);
    }

    let small = assignment_count(&inst).is_some_and(|c| c <= cfg.oracle_limit);
    if cfg.oracle && small {
        let start = Instant::now();
        let limits = OracleLimits {
            max_assignments: cfg.oracle_limit,
            execution: Execution::Sequential,
            keep_trace: false,
        };
        let row = match solve_exact(&inst, &limits) {
            Ok(r) => {
                let b = crate::model::objective(&inst, &r.best);
                ResultRow {
                    wall_ms: timed(start),
                    ..cost_row(job, Scheme::Oracle, &b, r.best.gamma)
                }
            }
            Err(e) => failed_row(job, Scheme::Oracle, format!("error: {e}")),
        };
        rows.push(row);
    }
    rows
}

/// Run every (range, n, realization) job. Rows come back sorted by
/// (range, n, realization, scheme) regardless of execution strategy.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &range in &cfg.rate_ranges {
        for n_tasks in cfg.n_min..=cfg.n_max {
            for realization in 0..cfg.realizations {
                jobs.push(Job {
                    range,
                    n_tasks,
                    realization,
                });
            }
        }
    }
    let mut rows: Vec<ResultRow> = map_indexed(cfg.execution, jobs.len(), |j| run_job(cfg, &jobs[j]))
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(ResultRow::key);
    rows.dedup_by_key(|r| r.key());
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "rate_range,n_tasks,realization,scheme,psi,latency_s,energy_j,gamma,sdr_lower_bound,iterations,wall_ms,status";

/// CSV with shortest round-trip float formatting; absent values are empty.
pub fn to_csv(rows: &[ResultRow]) -> String {
    fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.rate_range.as_str(),
            r.n_tasks,
            r.realization,
            r.scheme.as_str(),
            r.psi,
            r.latency_s,
            r.energy_j,
            r.gamma,
            opt(&r.sdr_lower_bound),
            opt(&r.iterations),
            opt(&r.wall_ms),
            r.status.replace(',', ";"),
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::invalid("csv header", format!("expected {CSV_HEADER:?}"))),
    }
    let num = |field: &'static str, s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::invalid(field, format!("not a number: {s:?}")))
    };
    let count = |field: &'static str, s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::invalid(field, format!("not an integer: {s:?}")))
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(Error::invalid("csv row", format!("expected 12 fields, got {}", f.len())));
            }
            Ok(ResultRow {
                rate_range: f[0].parse()?,
                n_tasks: count("n_tasks", f[1])?,
                realization: count("realization", f[2])?,
                scheme: f[3].parse()?,
                psi: num("psi", f[4])?,
                latency_s: num("latency_s", f[5])?,
                energy_j: num("energy_j", f[6])?,
                gamma: num("gamma", f[7])?,
                sdr_lower_bound: (!f[8].is_empty()).then(|| num("sdr_lower_bound", f[8])).transpose()?,
                iterations: (!f[9].is_empty()).then(|| count("iterations", f[9])).transpose()?,
                wall_ms: (!f[10].is_empty()).then(|| num("wall_ms", f[10])).transpose()?,
                status: f[11].to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub rate_range: RateRange,
    pub n_tasks: usize,
    pub scheme: Scheme,
    pub count: usize,
    pub psi_mean: f64,
    pub psi_std: f64,
    pub latency_mean: f64,
    pub energy_mean: f64,
    pub gamma_mean: f64,
    /// Mean of psi / psi(oracle) over realizations with an oracle row.
    pub oracle_ratio_mean: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Means and sample standard deviations per (range, n, scheme). Rows with
/// a non-finite psi (solver errors) are skipped.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(RateRange, usize, Scheme), Vec<&ResultRow>> = BTreeMap::new();
    let mut oracle: BTreeMap<(RateRange, usize, usize), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.psi.is_finite()) {
        groups.entry((r.rate_range, r.n_tasks, r.scheme)).or_default().push(r);
        if r.scheme == Scheme::Oracle {
            oracle.insert((r.rate_range, r.n_tasks, r.realization), r.psi);
        }
    }
    groups
        .into_iter()
        .map(|((rate_range, n_tasks, scheme), g)| {
            let col = |f: fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (psi_mean, psi_std) = mean_std(&col(|r| r.psi));
            let ratios: Vec<f64> = g
                .iter()
                .filter_map(|r| oracle.get(&(r.rate_range, r.n_tasks, r.realization)).map(|o| r.psi / o))
                .collect();
            AggregateRow {
                rate_range,
                n_tasks,
                scheme,
                count: g.len(),
                psi_mean,
                psi_std,
                latency_mean: mean_std(&col(|r| r.latency_s)).0,
                energy_mean: mean_std(&col(|r| r.energy_j)).0,
                gamma_mean: mean_std(&col(|r| r.gamma)).0,
                oracle_ratio_mean: (!ratios.is_empty()).then(|| mean_std(&ratios).0),
            }
        })
        .collect()
}

/// Per (range, n): how many realizations had the compressing scheme cost
/// more than the non-compressing one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceEntry {
    pub rate_range: RateRange,
    pub n_tasks: usize,
    pub realizations: usize,
    pub compress_worse: usize,
}

pub fn baseline_dominance(rows: &[ResultRow]) -> Vec<DominanceEntry> {
    use std::collections::BTreeMap;
    let mut pairs: BTreeMap<(RateRange, usize, usize), [Option<f64>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = match r.scheme {
            Scheme::SdrCompress => 0,
            Scheme::SdrNocompress => 1,
            Scheme::Oracle => continue,
        };
        pairs.entry((r.rate_range, r.n_tasks, r.realization)).or_default()[slot] = Some(r.psi);
    }
    let mut out: BTreeMap<(RateRange, usize), DominanceEntry> = BTreeMap::new();
    for ((range, n, _), p) in pairs {
        if let [Some(c), Some(b)] = p {
            let e = out.entry((range, n)).or_insert(DominanceEntry {
                rate_range: range,
                n_tasks: n,
                realizations: 0,
                compress_worse: 0,
            });
            e.realizations += 1;
            e.compress_worse += usize::from(c > b);
        }
    }
    out.into_values().collect()
}

/// Companion matplotlib script plotting mean psi per scheme against N for
/// each rate range from the CSV at `csv_path`.
pub fn plot_script(csv_path: &str) -> String {
    format!(
        r#"import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv({csv_path:?})
df = df[df["scheme"] != "oracle"]
means = df.groupby(["rate_range", "scheme", "n_tasks"])["psi"].mean().reset_index()
fig, ax = plt.subplots()
for (rng, scheme), g in means.groupby(["rate_range", "scheme"]):
    ax.plot(g["n_tasks"], g["psi"], marker="o", label=f"{{rng}} / {{scheme}}")
ax.set_xlabel("number of tasks")
ax.set_ylabel("mean weighted cost")
ax.legend()
fig.savefig({png:?}, dpi=150)
"#,
        png = format!("{}.png", csv_path.trim_end_matches(".csv")),
    )
}
