use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use explainable_kmeans::bench::{run_bench, write_rows, BenchConfig};
use explainable_kmeans::lowerbound::{lb_instance, lb_parameters};
use explainable_kmeans::oracle::{optimal_explainable_dp_with, DpLimits};
use explainable_kmeans::{
    cost_l2sq, kmeanspp_lloyd, post_process, verify_explainable, BuildOptions, Clustering, Dataset,
    EngineChoice, Mode, SeedConfig, Subproblem, ThetaRule, ThresholdTree,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "xkm",
    version,
    about = "Explainable k-means via threshold trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a clustering into one induced by a threshold tree.
    Explain(ExplainArgs),
    /// Optimal explainable clustering of a small instance.
    Exact(ExactArgs),
    /// Write a lower-bound instance and its reference clustering.
    GenLb(GenLbArgs),
    /// Run a benchmark described by a TOML or JSON config.
    Bench(BenchArgs),
    /// Check a tree against a clustering and dump the initial subproblem.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "2d")]
    TwoD,
    Hd,
    Auto,
}

impl From<ModeArg> for EngineChoice {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TwoD => EngineChoice::TwoD,
            ModeArg::Hd => EngineChoice::HighDim,
            ModeArg::Auto => EngineChoice::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ThetaRuleArg {
    First,
    MinLhs,
}

impl From<ThetaRuleArg> for ThetaRule {
    fn from(r: ThetaRuleArg) -> Self {
        match r {
            ThetaRuleArg::First => ThetaRule::First,
            ThetaRuleArg::MinLhs => ThetaRule::MinLhs,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// CSV with one point per row.
    #[arg(long)]
    input: PathBuf,
    /// Treat the first CSV row as a header.
    #[arg(long)]
    skip_header: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        let file =
            File::open(&self.input).with_context(|| format!("opening {}", self.input.display()))?;
        Dataset::read_csv(BufReader::new(file), self.skip_header)
            .with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of clusters; may be omitted when --clustering is given.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference clustering as JSON; k-means++/Lloyd runs when omitted.
    #[arg(long)]
    clustering: Option<PathBuf>,
    #[arg(long)]
    out_tree: Option<PathBuf>,
    /// Writes `point,cluster` rows.
    #[arg(long)]
    out_assign: Option<PathBuf>,
    /// JSON-lines file for per-cut diagnostics, or `off`.
    #[arg(long, default_value = "off")]
    trace: String,
    #[arg(long, value_enum, default_value = "first")]
    theta_rule: ThetaRuleArg,
    /// Check every invariant while building and fail if any is violated.
    #[arg(long)]
    audit: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out_tree: Option<PathBuf>,
    /// Raise the DP size limits.
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    max_k: Option<usize>,
}

#[derive(Args)]
struct GenLbArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, requires = "b", conflicts_with = "auto_params")]
    p: Option<u32>,
    #[arg(long, requires = "p", conflicts_with = "auto_params")]
    b: Option<u32>,
    #[arg(long, required_unless_present = "p")]
    auto_params: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_ref: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV rows; defaults to the config's `out`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// JSON-lines file for per-cut diagnostics.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    clustering: PathBuf,
    /// `point,cluster` CSV (as written by `explain`) replacing the
    /// clustering's assignment; centroids are kept.
    #[arg(long)]
    assign: Option<PathBuf>,
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Write the initial subproblem as JSON.
    #[arg(long)]
    dump_subproblem: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_clustering(path: &Path) -> Result<Clustering> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Clustering::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_assignment(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut assignment = vec![None; n];
    for (line, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let (i, c) = row.split_once(',').with_context(|| {
            format!("{}:{}: expected `point,cluster`", path.display(), line + 1)
        })?;
        let i: usize = i.trim().parse()?;
        ensure!(
            i < n,
            "{}:{}: point {i} out of range",
            path.display(),
            line + 1
        );
        assignment[i] = Some(c.trim().parse()?);
    }
    assignment
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.with_context(|| format!("point {i} has no cluster in {}", path.display())))
        .collect()
}

fn write_assignment(path: &Path, assignment: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "point,cluster")?;
    for (i, c) in assignment.iter().enumerate() {
        writeln!(w, "{i},{c}")?;
    }
    w.flush()?;
    Ok(())
}

/// `printf("%.{sig}g")`.
fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= sig as i32 {
        format!(
            "{}e{}{:02}",
            trim(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        trim(&format!("{:.*}", (sig as i32 - 1 - exp) as usize, v))
    }
}

fn explain(args: ExplainArgs) -> Result<()> {
    let ds = args.input.load()?;
    let clustering = match &args.clustering {
        Some(path) => {
            let cl = read_clustering(path)?;
            if let Some(k) = args.k {
                ensure!(
                    k == cl.k(),
                    "--k {k} disagrees with the clustering's {} centroids",
                    cl.k()
                );
            }
            cl
        }
        None => {
            let Some(k) = args.k else {
                bail!("either --k or --clustering is required")
            };
            let cfg = SeedConfig {
                rng_seed: args.seed,
                ..SeedConfig::default()
            };
            kmeanspp_lloyd(&ds, k, &cfg)?
        }
    };
    let trace_path = (args.trace != "off").then(|| PathBuf::from(&args.trace));
    let options = BuildOptions {
        theta_rule: args.theta_rule.into(),
        audit: args.audit,
        trace: trace_path.is_some(),
    };
    let out = post_process(&ds, &clustering, args.mode.into(), &options)?;
    if args.audit && !out.audit.ok() {
        for f in &out.audit.failures {
            log::error!("audit: {f}");
        }
        bail!(
            "{} of {} invariant checks failed",
            out.audit.failures.len(),
            out.audit.checks
        );
    }
    if let Some(path) = &trace_path {
        let mut w = create(path)?;
        for rec in &out.trace {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.out_tree {
        write_text(path, &out.tree.to_json_pretty()?)?;
    }
    if let Some(path) = &args.out_assign {
        write_assignment(path, out.clustering.assignment())?;
    }
    let cost_ref = cost_l2sq(&ds, &clustering)?;
    let report = json!({
        "n": ds.len(),
        "d": ds.dim(),
        "k": clustering.k(),
        "mode": out.mode,
        "leaves": out.tree.leaf_count(),
        "depth": out.tree.depth(),
        "cost_ref": cost_ref,
        "cost": out.cost,
        "ratio": if cost_ref > 0.0 { json!(out.cost / cost_ref) } else { json!(null) },
        "linf_cost": out.linf_cost,
        "A": out.initial_potential,
        "audit_checks": out.audit.checks,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn exact(args: ExactArgs) -> Result<()> {
    let ds = args.input.load()?;
    let defaults = DpLimits::default();
    let limits = DpLimits {
        max_points: args.max_points.unwrap_or(defaults.max_points),
        max_dim: args.max_dim.unwrap_or(defaults.max_dim),
        max_k: args.max_k.unwrap_or(defaults.max_k),
    };
    let opt = optimal_explainable_dp_with(&ds, args.k, &limits)?;
    if let Some(path) = &args.out_tree {
        write_text(path, &opt.tree.to_json_pretty()?)?;
    }
    println!("{}", format_sig(opt.cost, 12));
    Ok(())
}

fn gen_lb(args: GenLbArgs) -> Result<()> {
    let (p, b) = match (args.p, args.b) {
        (Some(p), Some(b)) => (p, b),
        _ => lb_parameters(args.k, args.d)?,
    };
    let lb = lb_instance::<f64>(args.k, args.d, p, b)?;
    lb.dataset.write_csv(create(&args.out)?)?;
    write_text(&args.out_ref, &lb.reference.to_json()?)?;
    let report = json!({
        "k": args.k,
        "d": args.d,
        "p": p,
        "b": b,
        "n": lb.dataset.len(),
        "reference_cost": lb.reference_cost,
        "grid": lb.certificate,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let cfg = BenchConfig::from_path(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let report = run_bench(&cfg)?;
    match args.out.as_ref().or(cfg.out.as_ref()) {
        Some(path) => write_rows(create(path)?, &report.rows)?,
        None => write_rows(std::io::stdout().lock(), &report.rows)?,
    }
    if let Some(path) = args.summary.as_ref().or(cfg.summary.as_ref()) {
        write_text(path, &serde_json::to_string_pretty(&report.summary)?)?;
    }
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        for line in &report.trace {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    if report.summary.invariant_failures > 0 {
        for f in &report.summary.failures {
            log::error!("{f}");
        }
        bail!(
            "{} of {} invariant checks failed",
            report.summary.invariant_failures,
            report.summary.invariant_checks
        );
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let ds = args.input.load()?;
    let mut cl = read_clustering(&args.clustering)?;
    cl.check_against(&ds)?;
    let reference = cl.clone();
    if let Some(path) = &args.assign {
        cl = Clustering::new(cl.centroids().to_vec(), read_assignment(path, ds.len())?)?;
    }
    let explainability = match &args.tree {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let tree: ThresholdTree = ThresholdTree::from_json(&text)?;
            Some(verify_explainable(&ds, &cl, &tree))
        }
        None => None,
    };
    // the initial subproblem always comes from the reference assignment
    let validity = if reference.k() >= 2 {
        let mode: Mode = EngineChoice::from(args.mode).resolve(ds.dim());
        let sub = Subproblem::initial(&ds, &reference, mode)?;
        if let Some(path) = &args.dump_subproblem {
            write_text(path, &serde_json::to_string_pretty(&sub.dump())?)?;
        }
        Some(sub.check_valid())
    } else {
        None
    };
    let ok = explainability.as_ref().is_none_or(|r| r.ok) && validity.as_ref().is_none_or(|r| r.ok);
    let report = json!({
        "ok": ok,
        "cost": cost_l2sq(&ds, &cl)?,
        "explainability": explainability,
        "initial_subproblem": validity,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    ensure!(ok, "verification failed");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Explain(a) => explain(a),
        Command::Exact(a) => exact(a),
        Command::GenLb(a) => gen_lb(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
    }
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.5, 12), "0.5");
        assert_eq!(format_sig(16.0, 12), "16");
        assert_eq!(format_sig(20.02962962962963, 12), "20.0296296296");
        assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_sig(1.5e-7, 12), "1.5e-07");
        assert_eq!(format_sig(1234567890123456.0, 12), "1.23456789012e+15");
        assert_eq!(format_sig(0.0, 12), "0");
    }
}
