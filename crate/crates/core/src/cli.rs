//! The `otclean` command line.
//!
//! Exit codes: 0 on success, 1 on any input or validation error, 2 when a
//! solver stopped before converging (its artifacts are still written).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cost::{build_cost_matrix_with_reference, CostKind, CostMatrix, CostSpec};
use crate::dist::{cmi, Attribute, Distribution, Schema};
use crate::error::{Error, Result};
use crate::fastotclean::{fast_otclean, CleanerConfig, TraceRecord};
use crate::io::{read_constraint, read_domains, Dataset};
use crate::ot::{transport_cost, TransportPlan};
use crate::qclp::{build_qclp, solve_qclp_alternating};
use crate::repair::{apply_cleaner_indices, cleaner_from_plan, distortion, rod};
use crate::unsaturated::{build_coupling_greedy, lift_product, repair_unsaturated, Lift, SplitSchema};

#[derive(Parser, Debug)]
#[command(name = "otclean", version, about = "Repair categorical data so that conditional independences hold")]
struct Cli {
    /// Worker threads (defaults to OTCLEAN_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a repair plan and a repaired dataset.
    Repair(RepairArgs),
    /// Report the constraint violation and optionally ROD.
    Metrics(MetricsArgs),
    /// Resample a dataset through a saved plan.
    Apply(ApplyArgs),
    /// Earth mover distance between two datasets.
    Distortion(DistortionArgs),
    /// Lift a plan over the constrained attributes to the full schema.
    Lift(LiftArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON object of ordered labels per attribute.
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Bin numeric columns into this many equal-width bins.
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args, Debug)]
struct CostArgs {
    /// hamming, euclidean, or the path of a headerless cost matrix CSV.
    #[arg(long)]
    cost: Option<String>,
    /// Attributes the repair may not change (comma separated).
    #[arg(long, value_delimiter = ',')]
    freeze: Vec<String>,
}

#[derive(Args, Debug)]
struct RepairArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON file {"x": [...], "y": [...], "z": [...]}.
    #[arg(long)]
    constraint: PathBuf,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cost: CostArgs,
    #[arg(long, value_enum)]
    backend: Option<BackendName>,
    /// product or greedy.
    #[arg(long)]
    lift: Option<Lift>,
    /// Seed for sampling the repaired dataset.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving plan.json, target.json, cleaner.json,
    /// repaired.csv and trace.jsonl.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Input CSV with a header row.
    #[arg(long, required_unless_present = "target")]
    data: Option<PathBuf>,
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    /// Evaluate a target written by `repair` instead of a dataset.
    #[arg(long, conflicts_with = "data")]
    target: Option<PathBuf>,
    #[arg(long)]
    constraint: Option<PathBuf>,
    #[arg(long)]
    yhat: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long, value_delimiter = ',')]
    a: Vec<String>,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DistortionArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Second CSV with the same header.
    #[arg(long)]
    other: PathBuf,
    #[command(flatten)]
    cost: CostArgs,
}

#[derive(Args, Debug)]
struct LiftArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    constraint: PathBuf,
    /// Plan over the constrained attributes.
    #[arg(long)]
    plan: PathBuf,
    /// product or greedy.
    #[arg(long, default_value = "product")]
    lift: Lift,
    /// Output plan JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Contents of the `--config` file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cost: CostSpec,
    #[serde(flatten)]
    pub cleaner: CleanerConfig,
    pub lift: Lift,
    pub seed: u64,
    pub backend: BackendName,
    /// Linearized steps for the QCLP backend.
    pub qclp_steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendName {
    #[default]
    Fast,
    Qclp,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cost: CostSpec::hamming(),
            cleaner: CleanerConfig::default(),
            lift: Lift::Product,
            seed: 0,
            backend: BackendName::Fast,
            qclp_steps: 50,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.cleaner.validate()?;
        if self.qclp_steps == 0 {
            return Err(Error::Validation("qclp_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Self-describing target distribution as written by `repair`.
#[derive(Serialize, Deserialize)]
struct TargetJson {
    schema_hash: String,
    attributes: Vec<Attribute>,
    converged: bool,
    cost: f64,
    mass: Vec<f64>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("OTCLEAN_THREADS").ok().and_then(|v| v.parse().ok()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("warning: solver did not converge; artifacts were written with converged=false");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// `Ok(false)` signals non-convergence.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Repair(a) => repair(a),
        Command::Metrics(a) => metrics(a).map(|_| true),
        Command::Apply(a) => apply(a).map(|_| true),
        Command::Distortion(a) => distortion_cmd(a).map(|_| true),
        Command::Lift(a) => lift(a).map(|_| true),
    }
}

fn load(args: &DataArgs) -> Result<(Dataset, Schema)> {
    let mut data = Dataset::read(&args.data)?;
    if let Some(k) = args.bins {
        data.bin_numeric(k)?;
    }
    let domains = args.domains.as_ref().map(read_domains).transpose()?;
    let schema = data.infer_schema(domains.as_ref())?;
    Ok((data, schema))
}

fn cost_spec(args: &CostArgs, base: &CostSpec) -> CostSpec {
    let mut spec = match args.cost.as_deref() {
        None => base.clone(),
        Some("hamming") => CostSpec::hamming(),
        Some("euclidean") => CostSpec::euclidean(),
        Some(path) => CostSpec::external(path),
    };
    if !args.freeze.is_empty() {
        spec = spec.with_frozen(args.freeze.iter().cloned());
    }
    spec
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn target_json(q: &Distribution, converged: bool, cost: f64) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TargetJson {
        schema_hash: q.schema().fingerprint(),
        attributes: q.schema().attributes().to_vec(),
        converged,
        cost,
        mass: q.mass().to_vec(),
    })?)
}

fn read_target(path: &Path) -> Result<Distribution> {
    let doc: TargetJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let schema = Schema::new(doc.attributes)?;
    if schema.fingerprint() != doc.schema_hash {
        return Err(Error::Validation("target schema hash does not match its attributes".into()));
    }
    Distribution::new(schema, doc.mass)
}

fn repair(a: RepairArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str::<RunConfig>(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    cfg.cost = cost_spec(&a.cost, &cfg.cost);
    if let Some(b) = a.backend {
        cfg.backend = b;
    }
    if let Some(l) = a.lift {
        cfg.lift = l;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    let (data, schema) = load(&a.data)?;
    let sigma = read_constraint(&a.constraint)?;
    sigma.validate(&schema)?;
    let indices = data.encode(&schema)?;
    let p = Distribution::from_indices(&indices, schema.clone())?;
    let saturated = sigma.is_saturated(&schema);

    let (plan, converged, cost, trace) = match cfg.backend {
        BackendName::Fast if saturated => {
            let c = build_cost_matrix_with_reference(&schema, &cfg.cost, Some(&p))?;
            let res = fast_otclean(&p, &c, &sigma, &cfg.cleaner)?;
            let cost = transport_cost(&res.plan, &c)?;
            (res.plan, res.converged, cost, res.trace)
        }
        BackendName::Fast => {
            if matches!(cfg.cost.kind, CostKind::ExternalMatrix { .. }) {
                return Err(Error::Validation(
                    "unsaturated constraints need a separable cost; external matrices are not supported".into(),
                ));
            }
            let split = SplitSchema::new(&schema, &sigma)?;
            let p_u = p.marginalize(&split.u.names())?;
            let c_u = build_cost_matrix_with_reference(&split.u, &cfg.cost, Some(&p_u))?;
            let res = repair_unsaturated(&p, &sigma, &c_u, &cfg.cleaner, cfg.lift)?;
            let cost = transport_cost(&res.plan_u, &c_u)?;
            (res.plan, res.inner.converged, cost, res.inner.trace)
        }
        BackendName::Qclp => {
            let c = build_cost_matrix_with_reference(&schema, &cfg.cost, Some(&p))?;
            let prog = build_qclp(&p, &c, &sigma)?;
            let init = crate::ci_project::project_to_ci_with(&p, &sigma, &cfg.cleaner.nmf)?.q;
            let res = solve_qclp_alternating(&prog, &init, cfg.qclp_steps, cfg.cleaner.outer_tol)?;
            let trace = res
                .costs
                .iter()
                .zip(&res.residuals)
                .enumerate()
                .map(|(k, (&c, &r))| TraceRecord {
                    iter: k + 1,
                    objective: c,
                    cost: c,
                    delta_sigma: r,
                    sinkhorn_iters: 0,
                })
                .collect();
            let cost = transport_cost(&res.plan, &c)?;
            (res.plan, res.converged, cost, trace)
        }
    };

    let target = plan.target()?;
    let cleaner = cleaner_from_plan(&plan)?;
    let repaired = apply_cleaner_indices(&indices, &cleaner, cfg.seed)?;
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("plan.json"), &plan.to_json()?)?;
    write_json(&a.out.join("target.json"), &target_json(&target, converged, cost)?)?;
    write_json(&a.out.join("cleaner.json"), &cleaner.to_json()?)?;
    Dataset::from_indices(&schema, &repaired).write(a.out.join("repaired.csv"))?;
    let mut trace_file = std::fs::File::create(a.out.join("trace.jsonl"))?;
    for r in &trace {
        serde_json::to_writer(&mut trace_file, r)?;
        std::io::Write::write_all(&mut trace_file, b"\n")?;
    }
    let summary = serde_json::json!({
        "converged": converged,
        "cost": cost,
        "cmi_input": cmi(&p, &sigma)?,
        "cmi_target": cmi(&target, &sigma)?,
        "iterations": trace.len(),
    });
    println!("{summary}");
    Ok(converged)
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let dist = match (&a.target, &a.data) {
        (Some(t), _) => read_target(t)?,
        (None, Some(d)) => {
            let (data, schema) = load(&DataArgs {
                data: d.clone(),
                domains: a.domains.clone(),
                bins: a.bins,
            })?;
            data.empirical(&schema)?
        }
        (None, None) => return Err(Error::Validation("pass --data or --target".into())),
    };
    let mut out = serde_json::Map::new();
    if let Some(c) = &a.constraint {
        let sigma = read_constraint(c)?;
        out.insert("cmi".into(), cmi(&dist, &sigma)?.into());
    }
    match (&a.yhat, &a.s) {
        (Some(y), Some(s)) => {
            let (r, l) = rod(&dist, y, s, &a.a)?;
            out.insert("rod".into(), r.into());
            out.insert("log_rod".into(), l.into());
        }
        (None, None) if a.a.is_empty() => {}
        _ => return Err(Error::Validation("ROD needs both --yhat and --s".into())),
    }
    if out.is_empty() {
        return Err(Error::Validation("nothing to report: pass --constraint or --yhat/--s".into()));
    }
    println!("{}", serde_json::Value::Object(out));
    Ok(())
}

fn apply(a: ApplyArgs) -> Result<()> {
    let (data, schema) = load(&a.data)?;
    let plan = TransportPlan::from_json(&std::fs::read_to_string(&a.plan)?, schema.clone(), schema.clone())?;
    let cleaner = cleaner_from_plan(&plan)?;
    let out = Dataset::from_indices(&schema, &apply_cleaner_indices(&data.encode(&schema)?, &cleaner, a.seed)?);
    match &a.out {
        Some(path) => out.write(path),
        None => out.write_to(std::io::stdout().lock()),
    }
}

fn distortion_cmd(a: DistortionArgs) -> Result<()> {
    let mut first = Dataset::read(&a.data.data)?;
    let mut second = Dataset::read(&a.other)?;
    if first.header != second.header {
        return Err(Error::Validation("the two CSVs have different headers".into()));
    }
    let split = first.rows.len();
    first.rows.append(&mut second.rows);
    if let Some(k) = a.data.bins {
        first.bin_numeric(k)?;
    }
    let domains = a.data.domains.as_ref().map(read_domains).transpose()?;
    let schema = first.infer_schema(domains.as_ref())?;
    let idx = first.encode(&schema)?;
    let p = Distribution::from_indices(&idx[..split], schema.clone())?;
    let q = Distribution::from_indices(&idx[split..], schema.clone())?;
    let spec = cost_spec(&a.cost, &CostSpec::hamming());
    let c: CostMatrix = build_cost_matrix_with_reference(&schema, &spec, Some(&p))?;
    println!("{}", serde_json::json!({ "distortion": distortion(&p, &q, &c)? }));
    Ok(())
}

fn lift(a: LiftArgs) -> Result<()> {
    let (data, schema) = load(&a.data)?;
    let sigma = read_constraint(&a.constraint)?;
    let split = SplitSchema::new(&schema, &sigma)?;
    let p = data.empirical(&schema)?;
    let plan_u = TransportPlan::from_json(&std::fs::read_to_string(&a.plan)?, split.u.clone(), split.u.clone())?;
    let plan = match a.lift {
        Lift::Product => lift_product(&p, &plan_u, &split)?,
        Lift::Greedy => build_coupling_greedy(&p, &plan_u, &split)?,
    };
    match &a.out {
        Some(path) => write_json(path, &plan.to_json()?),
        None => {
            println!("{}", plan.to_json()?);
            Ok(())
        }
    }
}
