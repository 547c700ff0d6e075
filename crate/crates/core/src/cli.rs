//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code: 0 on success, 1 when a certificate
//! fails, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::bounds::gordon_bound;
use crate::bounds::order_stat_bound;
use crate::chaos2::{
    delta_mc, fourth_moment_experiment, matched_gaussian, proposition_quantities, rank_one_spec, write_family_csv,
    QuadraticFormMatrixSpec,
};
use crate::covlab::{gamma_discrepancy, GaussianMatrixSpec, GaussianSampler, MatrixSampler, MatrixShape, SeedSpec};
use crate::error::{domain, Error, Result};
use crate::leadlag::{convergence_experiment, write_convergence_csv, LeadLagConfig};
use crate::montecarlo::certify::{self, CertificateReport, Thresholds, DEFAULT_THRESHOLDS};
use crate::montecarlo::minmax_sample;

#[derive(Parser, Debug)]
#[command(name = "minmax", version, about = "Comparison bounds and Monte Carlo certificates for min-max statistics")]
struct Cli {
    /// Root seed; falls back to MINMAX_SEED, then 0.
    #[arg(long, global = true, env = "MINMAX_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Threshold file replacing the shipped defaults.
    #[arg(long, global = true)]
    thresholds: Option<PathBuf>,

    /// Override one threshold, e.g. `--set sigma_margin=5` (repeatable).
    #[arg(long = "set", global = true, value_name = "NAME=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a closed-form comparison bound.
    Bound(BoundArgs),
    /// Run a Monte Carlo certificate suite.
    Certify(CertifyArgs),
    /// Fourth-moment scaling table of a second-chaos family.
    Chaos(ChaosArgs),
    /// Kolmogorov-distance convergence table of the lead-lag statistic.
    Leadlag(LeadlagArgs),
    /// Draw min-max values (or whole matrices) from a law.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
#[command(disable_help_flag = true)]
struct BoundArgs {
    #[arg(long, action = ArgAction::Help)]
    help: Option<bool>,
    /// Min-sum-top-k bound for n × m matrices.
    #[arg(long, group = "kind")]
    gordon: bool,
    /// Single-row maximum bound (n = k = 1).
    #[arg(long, group = "kind")]
    chatterjee: bool,
    /// Order-statistic bound for d-vectors.
    #[arg(long = "order-stat", group = "kind")]
    order_stat: bool,
    #[arg(short = 'n')]
    n: Option<usize>,
    #[arg(short = 'm')]
    m: Option<usize>,
    #[arg(short = 'k')]
    k: Option<usize>,
    #[arg(short = 'd')]
    d: Option<usize>,
    #[arg(short = 'h')]
    h: Option<usize>,
    /// Increment discrepancy; computed from --spec-x/--spec-y when absent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "spec-x", requires = "spec_y")]
    spec_x: Option<PathBuf>,
    #[arg(long = "spec-y", requires = "spec_x")]
    spec_y: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    Gordon,
    Order,
    Monotone,
    Anticoncentration,
    Softmax,
    Sharpness,
    FourthMoment,
    Leadlag,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    suite: Suite,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    specs: Option<usize>,
    #[arg(long = "max-n")]
    max_n: Option<usize>,
    #[arg(long = "max-m")]
    max_m: Option<usize>,
    #[arg(long = "max-d")]
    max_d: Option<usize>,
    #[arg(long = "max-dim")]
    max_dim: Option<usize>,
    #[arg(long = "sigma-floor")]
    sigma_floor: Option<f64>,
    /// Comma-separated ε values.
    #[arg(long)]
    eps: Option<String>,
    /// Comma-separated row counts (sharpness) or resolutions (leadlag).
    #[arg(long = "Ns", alias = "ns")]
    ns: Option<String>,
    #[arg(short = 'm', long = "m")]
    m: Option<usize>,
    #[arg(short = 'k', long = "k")]
    k: Option<usize>,
    /// Second-chaos spec for the fourth-moment suite.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Lead-lag configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "family-steps")]
    family_steps: Option<usize>,
    #[arg(long = "mix-dim")]
    mix_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct ChaosArgs {
    /// Second-chaos spec; defaults to rank-one forms on a 2 × 8 matrix.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long = "family-steps", default_value_t = 6)]
    family_steps: usize,
    /// Mixing dimension r of the family.
    #[arg(long = "mix-dim", default_value_t = 32)]
    mix_dim: usize,
    #[arg(long, default_value_t = 20_000)]
    reps: usize,
    /// Emit the exact moment report and a Δ estimate instead of the table.
    #[arg(long)]
    moments: bool,
}

#[derive(Args, Debug)]
struct LeadlagArgs {
    /// Configuration file; defaults to T = 1, b = 0.1, w = 0.15, m = 8.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated ascending resolutions.
    #[arg(long = "Ns", alias = "ns", required = true)]
    ns: String,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SampleKind {
    Minmax,
    Matrices,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Gaussian matrix spec (or second-chaos spec with --chaos).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    chaos: bool,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = SampleKind::Minmax)]
    what: SampleKind,
}

/// Outcome of a command: primary output, whether every check passed, and
/// for table commands a separate run record (config + seed).
struct Outcome {
    body: Vec<u8>,
    passed: bool,
    record: Option<Value>,
}

impl Outcome {
    fn ok(body: Vec<u8>) -> Self {
        Self { body, passed: true, record: None }
    }

    fn table(body: Vec<u8>, record: Value) -> Self {
        Self { body, passed: true, record: Some(record) }
    }
}

struct Context {
    seed: SeedSpec,
    root: u64,
    thresholds: Thresholds,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(passed) => {
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let root = cli.seed.unwrap_or(0);
    let ctx = Context { seed: SeedSpec::new(root, 0), root, thresholds: load_thresholds(cli)? };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            if t == 0 {
                return domain("--threads must be positive");
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Error::Resource(e.to_string()))?
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Bound(a) => cmd_bound(a, &ctx),
        Command::Certify(a) => cmd_certify(a, &ctx),
        Command::Chaos(a) => cmd_chaos(a, &ctx),
        Command::Leadlag(a) => cmd_leadlag(a, &ctx),
        Command::Sample(a) => cmd_sample(a, &ctx),
    })?;
    emit(cli.out.as_deref(), &outcome.body)?;
    if let Some(record) = &outcome.record {
        // Tables stay pure CSV; the record goes beside them.
        match &cli.out {
            Some(path) => {
                let mut side = path.clone().into_os_string();
                side.push(".run.json");
                emit(Some(Path::new(&side)), &json_bytes(record)?)?;
            }
            None => eprintln!("{}", serde_json::to_string(record)?),
        }
    }
    Ok(outcome.passed)
}

fn emit(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(body)?;
            f.flush()?;
        }
        None => {
            let mut s = io::stdout().lock();
            s.write_all(body)?;
            s.flush()?;
        }
    }
    Ok(())
}

fn load_thresholds(cli: &Cli) -> Result<Thresholds> {
    let text = match &cli.thresholds {
        Some(p) => std::fs::read_to_string(p)?,
        None => DEFAULT_THRESHOLDS.to_string(),
    };
    let mut value: Value = serde_json::from_str(&text)?;
    for item in &cli.overrides {
        let Some((name, raw)) = item.split_once('=') else {
            return domain(format!("--set expects NAME=VALUE, got {item:?}"));
        };
        let slot = value
            .get_mut(name.trim())
            .ok_or_else(|| Error::Domain(format!("unknown threshold {name:?}")))?;
        *slot = serde_json::from_str(raw.trim()).map_err(|_| Error::Domain(format!("bad value for {name}: {raw:?}")))?;
    }
    Ok(serde_json::from_value(value)?)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return domain(format!("{what} list is empty"));
    }
    items
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Domain(format!("cannot parse {s:?} in {what} list"))))
        .collect()
}

fn json_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Domain(format!("missing {flag}")))
}

fn cmd_bound(a: &BoundArgs, ctx: &Context) -> Result<Outcome> {
    let from_specs = match (&a.spec_x, &a.spec_y) {
        (Some(x), Some(y)) => {
            let (x, y) = (GaussianMatrixSpec::load(x)?, GaussianMatrixSpec::load(y)?);
            Some((x.shape(), gamma_discrepancy(&x, &y)?))
        }
        _ => None,
    };
    let gamma = match (a.gamma, &from_specs) {
        (Some(g), _) => g,
        (None, Some((_, g))) => *g,
        (None, None) => return domain("give --gamma or both --spec-x and --spec-y"),
    };
    let shape = from_specs.map(|(s, _)| s);
    let (kind, config, report) = if a.gordon {
        let n = a.n.or(shape.map(|s| s.n));
        let m = a.m.or(shape.map(|s| s.m));
        let (n, m, k) = (need(n, "-n")?, need(m, "-m")?, a.k.unwrap_or(1));
        ("gordon", json!({"n": n, "m": m, "k": k, "gamma": gamma}), gordon_bound(n, m, k, gamma)?)
    } else if a.chatterjee {
        let m = need(a.m.or(shape.map(|s| s.m)), "-m")?;
        let mut r = gordon_bound(1, m, 1, gamma)?;
        r.components.insert("classical".into(), (gamma * (m as f64).ln()).sqrt());
        ("chatterjee", json!({"n": 1, "m": m, "k": 1, "gamma": gamma}), r)
    } else if a.order_stat {
        let (d, h) = (need(a.d, "-d")?, need(a.h, "-h")?);
        ("order-stat", json!({"d": d, "h": h, "gamma": gamma}), order_stat_bound(d, h, gamma)?)
    } else {
        return domain("choose one of --gordon, --chatterjee, --order-stat");
    };
    let mut config = config;
    if let (Some(x), Some(y)) = (&a.spec_x, &a.spec_y) {
        config["spec_x"] = json!(x);
        config["spec_y"] = json!(y);
    }
    let v = json!({
        "command": "bound",
        "kind": kind,
        "seed": ctx.root,
        "config": config,
        "report": serde_json::to_value(&report)?,
    });
    Ok(Outcome::ok(json_bytes(&v)?))
}

fn default_chaos_base(ctx: &Context) -> Result<QuadraticFormMatrixSpec> {
    rank_one_spec(MatrixShape::new(2, 8)?, 4, &ctx.seed.child(1 << 32))
}

fn default_leadlag() -> LeadLagConfig {
    LeadLagConfig::new(1.0, 0.1, 0.15, 50, 8)
}

fn cmd_certify(a: &CertifyArgs, ctx: &Context) -> Result<Outcome> {
    let thr = &ctx.thresholds;
    let seed = &ctx.seed;
    let (config, report): (Value, CertificateReport) = match a.suite {
        Suite::Gordon => {
            let (pairs, reps) = (a.pairs.unwrap_or(50), a.reps.unwrap_or(200_000));
            let (max_n, max_m) = (a.max_n.unwrap_or(8), a.max_m.unwrap_or(8));
            let c = json!({"pairs": pairs, "reps": reps, "max_n": max_n, "max_m": max_m});
            (c, certify::certify_gordon(pairs, reps, max_n, max_m, seed, thr)?)
        }
        Suite::Monotone => {
            let (pairs, reps) = (a.pairs.unwrap_or(20), a.reps.unwrap_or(200_000));
            (json!({"pairs": pairs, "reps": reps}), certify::certify_monotone(pairs, reps, seed, thr)?)
        }
        Suite::Order => {
            let (pairs, reps, max_d) = (a.pairs.unwrap_or(50), a.reps.unwrap_or(200_000), a.max_d.unwrap_or(8));
            let c = json!({"pairs": pairs, "reps": reps, "max_d": max_d});
            (c, certify::certify_order(pairs, reps, max_d, seed, thr)?)
        }
        Suite::Anticoncentration => {
            let specs = a.specs.unwrap_or(10);
            let reps = a.reps.unwrap_or(1_000_000);
            let (max_n, max_m) = (a.max_n.unwrap_or(4), a.max_m.unwrap_or(16));
            let floor = a.sigma_floor.unwrap_or(0.5);
            let eps: Vec<f64> = parse_list(a.eps.as_deref().unwrap_or("0.02,0.05,0.1"), "eps")?;
            let c = json!({"specs": specs, "reps": reps, "max_n": max_n, "max_m": max_m, "sigma_floor": floor, "eps": eps});
            (c, certify::certify_anticoncentration(specs, reps, max_n, max_m, floor, &eps, seed, thr)?)
        }
        Suite::Softmax => {
            let (trials, max_dim) = (a.trials.unwrap_or(1000), a.max_dim.unwrap_or(10));
            (json!({"trials": trials, "max_dim": max_dim}), certify::certify_softmax(trials, max_dim, seed, thr)?)
        }
        Suite::Sharpness => {
            let ns: Vec<usize> = parse_list(a.ns.as_deref().unwrap_or("16,64,256,1024"), "Ns")?;
            let (m, k, reps) = (a.m.unwrap_or(2), a.k.unwrap_or(1), a.reps.unwrap_or(10_000));
            let c = json!({"Ns": ns, "m": m, "k": k, "reps": reps});
            (c, certify::certify_sharpness(&ns, m, k, reps, seed, thr)?)
        }
        Suite::FourthMoment => {
            let base = match &a.spec {
                Some(p) => QuadraticFormMatrixSpec::load(p)?,
                None => default_chaos_base(ctx)?,
            };
            let steps = a.family_steps.unwrap_or(6);
            let r = a.mix_dim.unwrap_or(32);
            let reps = a.reps.unwrap_or(20_000);
            let rows = fourth_moment_experiment(&base, steps, r, reps, seed)?;
            let c = json!({"spec": a.spec, "family_steps": steps, "mix_dim": r, "reps": reps, "rows": rows});
            (c, certify::certify_fourth_moment(&rows, reps, seed, thr)?)
        }
        Suite::Leadlag => {
            let cfg = match &a.config {
                Some(p) => LeadLagConfig::load(p)?,
                None => default_leadlag(),
            };
            let ns: Vec<usize> = parse_list(a.ns.as_deref().unwrap_or("50,100,200,400"), "Ns")?;
            let reps = a.reps.unwrap_or(10_000);
            let rows = convergence_experiment(&cfg, &ns, reps, seed)?;
            let c = json!({"leadlag": cfg, "Ns": ns, "reps": reps, "rows": rows});
            (c, certify::certify_leadlag(&rows, seed, thr)?)
        }
    };
    let suite = a.suite.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let v = json!({
        "command": "certify",
        "suite": suite,
        "seed": ctx.root,
        "config": config,
        "thresholds": thr,
        "report": serde_json::to_value(&report)?,
    });
    if !report.passed {
        for f in &report.failures {
            eprintln!("certificate failure: {f}");
        }
    }
    Ok(Outcome { body: json_bytes(&v)?, passed: report.passed, record: None })
}

fn cmd_chaos(a: &ChaosArgs, ctx: &Context) -> Result<Outcome> {
    let base = match &a.spec {
        Some(p) => QuadraticFormMatrixSpec::load(p)?,
        None => default_chaos_base(ctx)?,
    };
    if a.moments {
        let target = matched_gaussian(&base)?;
        let report = proposition_quantities(&base, target.cov(), 2)?;
        let delta = delta_mc(&base, target.cov(), a.reps, &ctx.seed)?;
        let v = json!({
            "command": "chaos",
            "seed": ctx.root,
            "config": {"spec": a.spec, "reps": a.reps, "moments": true},
            "report": serde_json::to_value(&report)?,
            "delta": serde_json::to_value(delta)?,
        });
        return Ok(Outcome::ok(json_bytes(&v)?));
    }
    let rows = fourth_moment_experiment(&base, a.family_steps, a.mix_dim, a.reps, &ctx.seed)?;
    let mut body = Vec::new();
    write_family_csv(&rows, &mut body)?;
    let record = json!({
        "command": "chaos",
        "seed": ctx.root,
        "config": {"spec": a.spec, "family_steps": a.family_steps, "mix_dim": a.mix_dim, "reps": a.reps},
    });
    Ok(Outcome::table(body, record))
}

fn cmd_leadlag(a: &LeadlagArgs, ctx: &Context) -> Result<Outcome> {
    let ns: Vec<usize> = parse_list(&a.ns, "Ns")?;
    let cfg = match &a.config {
        Some(p) => LeadLagConfig::load(p)?,
        None => default_leadlag(),
    };
    let rows = convergence_experiment(&cfg, &ns, a.reps, &ctx.seed)?;
    let mut body = Vec::new();
    write_convergence_csv(&rows, &mut body)?;
    let record = json!({
        "command": "leadlag",
        "seed": ctx.root,
        "config": {"leadlag": cfg, "Ns": ns, "reps": a.reps},
    });
    Ok(Outcome::table(body, record))
}

fn sample_body<S: MatrixSampler>(sampler: &S, a: &SampleArgs, ctx: &Context) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    match a.what {
        SampleKind::Minmax => minmax_sample(sampler, a.reps, &ctx.seed)?.write_csv_to(&mut body)?,
        SampleKind::Matrices => {
            if a.reps == 0 {
                return domain("reps must be positive");
            }
            let shape = sampler.shape();
            let mut w = csv::Writer::from_writer(&mut body);
            let header: Vec<String> =
                (0..shape.len()).map(|e| shape.pair(e)).map(|(i, j)| format!("x_{i}_{j}")).collect();
            w.write_record(&header)?;
            for row in sampler.draw_statistics(a.reps, &ctx.seed, |x| x.to_vec()) {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
        }
    }
    Ok(body)
}

fn cmd_sample(a: &SampleArgs, ctx: &Context) -> Result<Outcome> {
    let body = if a.chaos {
        sample_body(&QuadraticFormMatrixSpec::load(&a.spec)?, a, ctx)?
    } else {
        sample_body(&GaussianSampler::new(&GaussianMatrixSpec::load(&a.spec)?), a, ctx)?
    };
    let what = a.what.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let record = json!({
        "command": "sample",
        "seed": ctx.root,
        "config": {"spec": a.spec, "chaos": a.chaos, "reps": a.reps, "what": what},
    });
    Ok(Outcome::table(body, record))
}
