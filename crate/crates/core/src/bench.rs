//! Synthetic instances and the benchmark runner.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::builder::{post_process, Audit, BuildOptions, EngineChoice};
use crate::cut::ThetaRule;
use crate::error::{Error, Result};
use crate::geometry::{cost_l2sq, Clustering, Dataset};
use crate::kmeans::{kmeanspp_lloyd, SeedConfig};
use crate::lowerbound::{lb_instance, lb_parameters};
use crate::oracle::{
    optimal_explainable_dp_with, optimal_unconstrained_bruteforce, DpLimits, BRUTE_MAX_K,
    BRUTE_MAX_POINTS,
};
use crate::subproblem::Mode;

/// `k` centers uniform in `[0, 100]^d`; point `i` is drawn around center
/// `i mod k` with isotropic Gaussian noise of standard deviation `spread`.
pub fn gaussian_mixture(n: usize, k: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::InvalidParameters(
            "n, k and d must be positive".into(),
        ));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::InvalidParameters(format!("bad spread {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..=100.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).expect("finite, non-negative spread");
    let rows = (0..n)
        .map(|i| {
            centers[i % k]
                .iter()
                .map(|&c| c + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    Dataset::from_rows(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// CSV file; relative paths resolve against the config's directory.
    File {
        path: PathBuf,
        k: usize,
        #[serde(default)]
        skip_header: bool,
        #[serde(default)]
        name: Option<String>,
    },
    /// `repeat` instances with seeds `seed, seed + 1, …`.
    Gaussian {
        n: usize,
        k: usize,
        d: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        repeat: usize,
    },
    /// Lower-bound instance; `p` and `b` default to the automatic choice.
    Lb {
        k: usize,
        d: usize,
        #[serde(default)]
        p: Option<u32>,
        #[serde(default)]
        b: Option<u32>,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Against {
    #[default]
    Ref,
    Brute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Seed for the reference clustering of file instances.
    pub seed: u64,
    pub engines: Vec<Mode>,
    pub dp: bool,
    pub brute: bool,
    pub dp_limits: DpLimits,
    pub against: Against,
    pub theta_rule: ThetaRule,
    pub restarts: usize,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    /// Collect per-cut diagnostics as JSON lines.
    pub trace: bool,
    pub instances: Vec<InstanceSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            engines: vec![Mode::TwoD, Mode::HighDim],
            dp: false,
            brute: false,
            dp_limits: DpLimits::default(),
            against: Against::Ref,
            theta_rule: ThetaRule::First,
            restarts: SeedConfig::default().restarts,
            out: None,
            summary: None,
            trace: false,
            instances: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Parses by extension (`.json`, anything else as TOML) and resolves
    /// relative instance paths against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn expand(&self) -> Result<Vec<Job>> {
        let mut jobs = Vec::new();
        for spec in &self.instances {
            match spec {
                InstanceSpec::File {
                    path,
                    k,
                    skip_header,
                    name,
                } => {
                    let id = name.clone().unwrap_or_else(|| {
                        path.file_stem()
                            .map_or("file".into(), |s| s.to_string_lossy().into_owned())
                    });
                    jobs.push(Job {
                        id,
                        source: JobSource::File {
                            path: self.base_dir.join(path),
                            skip_header: *skip_header,
                        },
                        k: *k,
                        seed: self.seed,
                    });
                }
                &InstanceSpec::Gaussian {
                    n,
                    k,
                    d,
                    spread,
                    seed,
                    repeat,
                } => {
                    for r in 0..repeat as u64 {
                        let seed = seed + r;
                        jobs.push(Job {
                            id: format!("gauss-n{n}-k{k}-d{d}-s{spread}-seed{seed}"),
                            source: JobSource::Gaussian { n, d, spread },
                            k,
                            seed,
                        });
                    }
                }
                &InstanceSpec::Lb { k, d, p, b } => {
                    let (p, b) = match (p, b) {
                        (Some(p), Some(b)) => (p, b),
                        (None, None) => lb_parameters(k, d)?,
                        _ => {
                            return Err(Error::InvalidParameters(
                                "lb instance needs both p and b, or neither".into(),
                            ))
                        }
                    };
                    jobs.push(Job {
                        id: format!("lb-k{k}-d{d}-p{p}-b{b}"),
                        source: JobSource::Lb { d, p, b },
                        k,
                        seed: self.seed,
                    });
                }
            }
        }
        Ok(jobs)
    }
}

#[derive(Clone, Debug)]
enum JobSource {
    File { path: PathBuf, skip_header: bool },
    Gaussian { n: usize, d: usize, spread: f64 },
    Lb { d: usize, p: u32, b: u32 },
}

#[derive(Clone, Debug)]
struct Job {
    id: String,
    source: JobSource,
    k: usize,
    seed: u64,
}

/// Algorithm cost over the chosen baseline. `0/0` counts as 1; a positive
/// cost over a zero baseline has no finite ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Value(f64),
    InfOrZero,
}

impl Ratio {
    pub fn new(cost: f64, baseline: f64) -> Self {
        if baseline > 0.0 {
            Ratio::Value(cost / baseline)
        } else if cost == 0.0 {
            Ratio::Value(1.0)
        } else {
            Ratio::InfOrZero
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::InfOrZero => None,
        }
    }
}

const INF_OR_ZERO: &str = "inf-or-zero";

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:?}"),
            Ratio::InfOrZero => f.write_str(INF_OR_ZERO),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::InfOrZero => s.serialize_str(INF_OR_ZERO),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == INF_OR_ZERO {
            return Ok(Ratio::InfOrZero);
        }
        s.parse()
            .map(Ratio::Value)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub cost_ref: f64,
    pub cost_2d: Option<f64>,
    pub cost_hd: Option<f64>,
    pub cost_dp: Option<f64>,
    pub cost_brute: Option<f64>,
    pub ratio_2d: Option<Ratio>,
    pub ratio_hd: Option<Ratio>,
    pub invariant_failures: usize,
}

pub const CSV_HEADER: &str =
    "instance,n,k,d,cost_ref,cost_2d,cost_hd,cost_dp,cost_brute,ratio_2d,ratio_hd,invariant_failures";

pub fn write_rows<W: Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<BenchRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RatioStats {
    pub count: usize,
    pub max: Option<f64>,
    pub median: Option<f64>,
    /// Rows whose ratio is undefined (positive cost over a zero baseline).
    pub inf_or_zero: usize,
}

impl RatioStats {
    fn of<'a>(ratios: impl Iterator<Item = &'a Ratio>) -> Self {
        let mut vals = Vec::new();
        let mut undefined = 0;
        for r in ratios {
            match r {
                Ratio::Value(v) => vals.push(*v),
                Ratio::InfOrZero => undefined += 1,
            }
        }
        vals.sort_by(f64::total_cmp);
        let median = match vals.len() {
            0 => None,
            n if n % 2 == 1 => Some(vals[n / 2]),
            n => Some((vals[n / 2 - 1] + vals[n / 2]) / 2.0),
        };
        Self {
            count: vals.len(),
            max: vals.last().copied(),
            median,
            inf_or_zero: undefined,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub rows: usize,
    pub against: Against,
    pub ratio_2d: RatioStats,
    pub ratio_hd: RatioStats,
    pub invariant_checks: usize,
    pub invariant_failures: usize,
    /// `instance: message` for every failed check.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Summary,
    /// Per-cut diagnostics as JSON lines, when tracing is on.
    pub trace: Vec<String>,
}

struct RowResult {
    row: BenchRow,
    checks: usize,
    failures: Vec<String>,
    trace: Vec<String>,
}

fn load(job: &Job, cfg: &BenchConfig) -> Result<(Dataset, Clustering)> {
    let seeds = SeedConfig {
        rng_seed: job.seed,
        restarts: cfg.restarts,
        ..SeedConfig::default()
    };
    match &job.source {
        JobSource::File { path, skip_header } => {
            let file = std::fs::File::open(path)?;
            let ds = Dataset::read_csv(std::io::BufReader::new(file), *skip_header)?;
            let cl = kmeanspp_lloyd(&ds, job.k, &seeds)?;
            Ok((ds, cl))
        }
        &JobSource::Gaussian { n, d, spread } => {
            let ds = gaussian_mixture(n, job.k, d, spread, job.seed)?;
            let cl = kmeanspp_lloyd(&ds, job.k, &seeds)?;
            Ok((ds, cl))
        }
        &JobSource::Lb { d, p, b } => {
            let lb = lb_instance(job.k, d, p, b)?;
            Ok((lb.dataset, lb.reference))
        }
    }
}

fn within(a: f64, b: f64) -> bool {
    a <= b + 1e-9 * b.abs().max(a.abs())
}

fn run_job(job: &Job, cfg: &BenchConfig) -> Result<RowResult> {
    let (ds, cl) = load(job, cfg)?;
    let (n, d, k) = (ds.len(), ds.dim(), cl.k());
    let cost_ref = cost_l2sq(&ds, &cl)?;
    let mut audit = Audit::default();
    let mut trace = Vec::new();

    let cost_brute = if cfg.brute {
        Some(optimal_unconstrained_bruteforce(&ds, job.k)?)
    } else {
        None
    };
    let cost_dp = if cfg.dp {
        Some(optimal_explainable_dp_with(&ds, job.k, &cfg.dp_limits)?.cost)
    } else {
        None
    };
    let baseline = match cfg.against {
        Against::Ref => cost_ref,
        Against::Brute => cost_brute.ok_or_else(|| {
            Error::InvalidParameters(
                "ratios against brute force need the brute-force oracle enabled".into(),
            )
        })?,
    };

    let options = BuildOptions {
        theta_rule: cfg.theta_rule,
        audit: true,
        trace: cfg.trace,
    };
    let mut costs = [None, None];
    for (slot, mode) in [Mode::TwoD, Mode::HighDim].into_iter().enumerate() {
        if !cfg.engines.contains(&mode) || (mode == Mode::TwoD && d != 2) {
            continue;
        }
        let engine = match mode {
            Mode::TwoD => EngineChoice::TwoD,
            Mode::HighDim => EngineChoice::HighDim,
        };
        let out = post_process(&ds, &cl, engine, &options)?;
        audit.checks += out.audit.checks;
        audit
            .failures
            .extend(out.audit.failures.iter().map(|f| format!("[{mode:?}] {f}")));
        audit.check(out.tree.leaf_count() <= k, || {
            format!(
                "{mode:?} tree has {} leaves for k = {k}",
                out.tree.leaf_count()
            )
        });
        if cost_ref == 0.0 {
            audit.check(out.cost == 0.0, || {
                format!("{mode:?} cost {} on a zero-cost reference", out.cost)
            });
        }
        if let Some(dp) = cost_dp {
            audit.check(within(dp, out.cost), || {
                format!(
                    "{mode:?} cost {} below the explainable optimum {dp}",
                    out.cost
                )
            });
        }
        for rec in &out.trace {
            trace.push(serde_json::to_string(&serde_json::json!({
                "instance": job.id,
                "engine": mode,
                "cut": rec,
            }))?);
        }
        costs[slot] = Some(out.cost);
    }
    if let (Some(brute), Some(dp)) = (cost_brute, cost_dp) {
        audit.check(within(brute, dp), || {
            format!("unconstrained optimum {brute} above explainable optimum {dp}")
        });
    }
    if let Some(brute) = cost_brute {
        audit.check(within(brute, cost_ref), || {
            format!("unconstrained optimum {brute} above reference cost {cost_ref}")
        });
    }
    let row = BenchRow {
        instance: job.id.clone(),
        n,
        k: job.k,
        d,
        cost_ref,
        cost_2d: costs[0],
        cost_hd: costs[1],
        cost_dp,
        cost_brute,
        ratio_2d: costs[0].map(|c| Ratio::new(c, baseline)),
        ratio_hd: costs[1].map(|c| Ratio::new(c, baseline)),
        invariant_failures: audit.failures.len(),
    };
    Ok(RowResult {
        row,
        checks: audit.checks,
        failures: audit
            .failures
            .into_iter()
            .map(|f| format!("{}: {f}", job.id))
            .collect(),
        trace,
    })
}

fn check_limits(job: &Job, cfg: &BenchConfig, n: Option<usize>, d: Option<usize>) -> Result<()> {
    let too_big = |what: &str| {
        Err(Error::LimitExceeded(format!(
            "{}: {what} oracle limits exceeded (n = {n:?}, d = {d:?}, k = {})",
            job.id, job.k
        )))
    };
    if cfg.brute && (job.k > BRUTE_MAX_K || n.is_some_and(|n| n > BRUTE_MAX_POINTS)) {
        return too_big("brute-force");
    }
    let l = &cfg.dp_limits;
    if cfg.dp
        && (job.k > l.max_k
            || n.is_some_and(|n| n > l.max_points)
            || d.is_some_and(|d| d > l.max_dim))
    {
        return too_big("DP");
    }
    Ok(())
}

/// Runs every instance (in parallel) and returns rows in config order.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.against == Against::Brute && !cfg.brute {
        return Err(Error::InvalidParameters(
            "`against = \"brute\"` needs `brute = true`".into(),
        ));
    }
    let jobs = cfg.expand()?;
    // reject oversized oracle runs before doing any work
    for job in &jobs {
        match &job.source {
            JobSource::Gaussian { n, d, .. } => check_limits(job, cfg, Some(*n), Some(*d))?,
            JobSource::Lb { d, p, b } => {
                let size = (*b as usize).pow(*p);
                check_limits(
                    job,
                    cfg,
                    Some(2 * *p as usize * size + job.k.saturating_sub(size)),
                    Some(*d),
                )?
            }
            JobSource::File { .. } => check_limits(job, cfg, None, None)?,
        }
    }
    let results: Vec<RowResult> = jobs
        .par_iter()
        .map(|job| run_job(job, cfg))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut trace = Vec::new();
    let mut failures = Vec::new();
    let mut checks = 0;
    for r in results {
        checks += r.checks;
        failures.extend(r.failures);
        trace.extend(r.trace);
        rows.push(r.row);
    }
    let summary = Summary {
        rows: rows.len(),
        against: cfg.against,
        ratio_2d: RatioStats::of(rows.iter().filter_map(|r| r.ratio_2d.as_ref())),
        ratio_hd: RatioStats::of(rows.iter().filter_map(|r| r.ratio_hd.as_ref())),
        invariant_checks: checks,
        invariant_failures: failures.len(),
        failures,
    };
    Ok(BenchReport {
        rows,
        summary,
        trace,
    })
}
