//! Numerical certificates: each runner draws its cases from a seed, checks
//! one inequality per case against an explicit Monte Carlo margin, and
//! records every number that went into the verdict.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    accumulate, estimate_min_sum_topk, ks_noise, levy_concentration, loglog_slope, minmax_sample, random_spec,
    random_spec_pair, sharpness_columns_spec, spearman,
};
use crate::bounds::{comparison_condition, gordon_bound, order_stat_bound};
use crate::chaos2::FamilyRow;
use crate::covlab::{gamma_discrepancy, GaussianMatrixSpec, GaussianSampler, LabRng, MatrixShape, SeedSpec};
use crate::error::{domain, Result};
use crate::leadlag::ConvergenceRow;
use crate::softminmax::{
    f_value, gradient, hessian, hessian_abs_offdiag_sum, min_sum_topk, sandwich_gaps, SmoothParams,
};

/// Pass/fail policy. The shipped defaults live in `defaults/thresholds.json`
/// at the crate root; every field can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub version: u32,
    /// Standard errors of slack allowed on expectation comparisons.
    pub sigma_margin: f64,
    /// KS-noise units of slack on the anti-concentration ratio.
    pub anticoncentration_noise_units: f64,
    /// Largest relative spread `(max - min)/max` of `levy(ε)/ε` across ε.
    pub eps_stability: f64,
    pub sharpness_low: f64,
    pub sharpness_high: f64,
    /// KS-noise units tolerated against monotone decrease.
    pub trend_noise_units: f64,
    /// Required drop (KS-noise units) from first to last point...
    pub trend_drop_units: f64,
    /// ...when the first point exceeds this many noise units.
    pub trend_signal_units: f64,
    /// Lower limit on the log-log slope of KS against the fourth cumulant.
    pub slope_floor: f64,
    pub row_sum_tol: f64,
    pub sign_slack: f64,
    pub abs_sum_slack: f64,
    pub gradient_fd_tol: f64,
    pub hessian_fd_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_THRESHOLDS).expect("shipped thresholds parse")
    }
}

pub const DEFAULT_THRESHOLDS: &str = include_str!("../../defaults/thresholds.json");

impl Thresholds {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub suite: String,
    pub seed: SeedSpec,
    pub passed: bool,
    pub cases: Vec<serde_json::Value>,
    pub failures: Vec<String>,
    pub summary: BTreeMap<String, f64>,
}

impl CertificateReport {
    fn new(suite: &str, seed: &SeedSpec) -> Self {
        Self {
            suite: suite.to_string(),
            seed: *seed,
            passed: true,
            cases: Vec::new(),
            failures: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    fn record<T: Serialize>(&mut self, case: &T, ok: bool, why: impl FnOnce() -> String) -> Result<()> {
        self.cases.push(serde_json::to_value(case)?);
        if !ok {
            self.passed = false;
            self.failures.push(why());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return domain(format!("{name} must be positive"));
    }
    Ok(())
}

#[derive(Serialize)]
struct ExpectationCase {
    case: usize,
    n: usize,
    m: usize,
    k: usize,
    gamma: f64,
    bound: f64,
    mean_x: f64,
    mean_y: f64,
    stderr_x: f64,
    stderr_y: f64,
    gap: f64,
    margin: f64,
}

/// Random equal-mean pairs: `|E_X - E_Y| ≤ gordon_bound + σ·(se_X + se_Y)`.
pub fn certify_gordon(
    pairs: usize,
    reps: usize,
    max_n: usize,
    max_m: usize,
    seed: &SeedSpec,
    thr: &Thresholds,
) -> Result<CertificateReport> {
    positive("pairs", pairs)?;
    positive("reps", reps)?;
    positive("max_n", max_n)?;
    positive("max_m", max_m)?;
    let mut report = CertificateReport::new("gordon", seed);
    for case in 0..pairs {
        let cs = seed.child(case as u64);
        let mut rng = cs.child(0).rng();
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        let k = rng.random_range(1..=m);
        let (x, y) = random_spec_pair(MatrixShape::new(n, m)?, &mut rng)?;
        let gamma = gamma_discrepancy(&x, &y)?;
        let bound = gordon_bound(n, m, k, gamma)?.value;
        let ex = estimate_min_sum_topk(&x, k, reps, &cs.child(1))?;
        let ey = estimate_min_sum_topk(&y, k, reps, &cs.child(2))?;
        let gap = (ex.mean - ey.mean).abs();
        let margin = thr.sigma_margin * (ex.stderr + ey.stderr);
        let c = ExpectationCase {
            case,
            n,
            m,
            k,
            gamma,
            bound,
            mean_x: ex.mean,
            mean_y: ey.mean,
            stderr_x: ex.stderr,
            stderr_y: ey.stderr,
            gap,
            margin,
        };
        report.record(&c, gap <= bound + margin, || {
            format!("case {case} ({n}x{m}, k={k}): gap {gap:.6} > bound {bound:.6} + margin {margin:.6}")
        })?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct MonotoneCase {
    case: usize,
    construction: &'static str,
    n: usize,
    m: usize,
    k: usize,
    parameter: f64,
    condition_holds: bool,
    mean_x: f64,
    mean_y: f64,
    stderr_x: f64,
    stderr_y: f64,
    margin: f64,
}

/// `X = Y + independent per-row shocks` of variance `tau2`: same-row
/// increments unchanged, cross-row increments larger.
pub fn row_shock_pair(y: &GaussianMatrixSpec, tau2: f64) -> Result<GaussianMatrixSpec> {
    let m = y.shape().m;
    let nm = y.shape().len();
    let cov = y.cov() + DMatrix::from_fn(nm, nm, |a, b| if a / m == b / m { tau2 } else { 0.0 });
    GaussianMatrixSpec::new(y.shape(), y.mean().to_vec(), cov)
}

/// Equicorrelated rows (`rho` within a row, independent rows, variance `v`).
pub fn within_row_spec(shape: MatrixShape, mean: Vec<f64>, v: f64, rho: f64) -> Result<GaussianMatrixSpec> {
    let m = shape.m;
    let nm = shape.len();
    let cov = DMatrix::from_fn(nm, nm, |a, b| {
        if a == b {
            v
        } else if a / m == b / m {
            rho * v
        } else {
            0.0
        }
    });
    GaussianMatrixSpec::new(shape, mean, cov)
}

/// Pairs built to satisfy the sign conditions of the monotone comparison;
/// checks `E_X ≤ E_Y + σ·√(se_X² + se_Y²)`.
pub fn certify_monotone(pairs: usize, reps: usize, seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    positive("pairs", pairs)?;
    positive("reps", reps)?;
    let mut report = CertificateReport::new("monotone", seed);
    for case in 0..pairs {
        let cs = seed.child(case as u64);
        let mut rng = cs.child(0).rng();
        let n = rng.random_range(1..=8usize);
        let m = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=m);
        let shape = MatrixShape::new(n, m)?;
        let (construction, parameter, x, y) = if case % 2 == 0 {
            let y = random_spec(shape, &mut rng)?;
            let tau2 = rng.random_range(0.1..1.0);
            ("row_shocks", tau2, row_shock_pair(&y, tau2)?, y)
        } else {
            let v = rng.random_range(0.5..2.0);
            let rho = rng.random_range(0.0..0.9);
            let mean: Vec<f64> = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = within_row_spec(shape, mean.clone(), v, 0.0)?;
            ("within_row_correlation", rho, within_row_spec(shape, mean, v, rho)?, y)
        };
        let holds = comparison_condition(&x, &y)?.holds;
        let ex = estimate_min_sum_topk(&x, k, reps, &cs.child(1))?;
        let ey = estimate_min_sum_topk(&y, k, reps, &cs.child(2))?;
        let margin = thr.sigma_margin * (ex.stderr.powi(2) + ey.stderr.powi(2)).sqrt();
        let c = MonotoneCase {
            case,
            construction,
            n,
            m,
            k,
            parameter,
            condition_holds: holds,
            mean_x: ex.mean,
            mean_y: ey.mean,
            stderr_x: ex.stderr,
            stderr_y: ey.stderr,
            margin,
        };
        report.record(&c, holds && ex.mean <= ey.mean + margin, || {
            format!(
                "case {case} ({construction}): condition {holds}, E_X {:.6} vs E_Y {:.6} + {margin:.6}",
                ex.mean, ey.mean
            )
        })?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct OrderCase {
    case: usize,
    d: usize,
    h: usize,
    gamma: f64,
    bound: f64,
    mean_w: f64,
    mean_z: f64,
    gap: f64,
    margin: f64,
}

/// Random equal-mean vector pairs, every order `h`: the `h`-th smallest
/// entry (estimated by sorting) moves by at most `order_stat_bound + margin`.
pub fn certify_order(pairs: usize, reps: usize, max_d: usize, seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    positive("pairs", pairs)?;
    positive("reps", reps)?;
    positive("max_d", max_d)?;
    let mut report = CertificateReport::new("order", seed);
    let sorted = |x: &[f64], out: &mut [f64]| {
        out.copy_from_slice(x);
        out.sort_by(f64::total_cmp);
    };
    for case in 0..pairs {
        let cs = seed.child(case as u64);
        let mut rng = cs.child(0).rng();
        let d = rng.random_range(1..=max_d);
        let (w, z) = random_spec_pair(MatrixShape::new(1, d)?, &mut rng)?;
        let gamma = gamma_discrepancy(&w, &z)?;
        let sw = accumulate(&GaussianSampler::new(&w), reps, &cs.child(1), d, sorted);
        let sz = accumulate(&GaussianSampler::new(&z), reps, &cs.child(2), d, sorted);
        for h in 1..=d {
            let bound = order_stat_bound(d, h, gamma)?.value;
            let (a, b) = (sw[h - 1], sz[h - 1]);
            let gap = (a.mean - b.mean).abs();
            let margin = thr.sigma_margin * (a.stderr + b.stderr);
            let c = OrderCase {
                case,
                d,
                h,
                gamma,
                bound,
                mean_w: a.mean,
                mean_z: b.mean,
                gap,
                margin,
            };
            report.record(&c, gap <= bound + margin, || {
                format!("case {case} (d={d}, h={h}): gap {gap:.6} > {bound:.6} + {margin:.6}")
            })?;
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct AntiCase {
    case: usize,
    n: usize,
    m: usize,
    sigma_min: f64,
    bound: f64,
    eps: Vec<f64>,
    ratio: Vec<f64>,
    spread: f64,
    slack: f64,
}

/// Random laws with `σ_min ≥ sigma_floor`: `levy(ε)/ε` under the
/// `2√2 (n/σ_min)(√2 + √log m)` density bound, and roughly ε-flat.
#[allow(clippy::too_many_arguments)]
pub fn certify_anticoncentration(
    specs: usize,
    reps: usize,
    max_n: usize,
    max_m: usize,
    sigma_floor: f64,
    eps: &[f64],
    seed: &SeedSpec,
    thr: &Thresholds,
) -> Result<CertificateReport> {
    positive("specs", specs)?;
    positive("reps", reps)?;
    if eps.is_empty() || eps.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return domain("eps list must be nonempty and positive");
    }
    let mut report = CertificateReport::new("anticoncentration", seed);
    let slack = thr.anticoncentration_noise_units * ks_noise(reps);
    for case in 0..specs {
        let cs = seed.child(case as u64);
        let mut rng = cs.child(0).rng();
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        let spec = draw_with_floor(MatrixShape::new(n, m)?, sigma_floor, &mut rng)?;
        let sigma_min = spec.sigma_min();
        let bound = 2.0 * 2f64.sqrt() * (n as f64 / sigma_min) * (2f64.sqrt() + (m as f64).ln().sqrt());
        let sample = minmax_sample(&GaussianSampler::new(&spec), reps, &cs.child(1))?;
        let ratio = eps
            .iter()
            .map(|e| levy_concentration(&sample, *e).map(|l| l / e))
            .collect::<Result<Vec<f64>>>()?;
        let hi = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = (hi - lo) / hi;
        let ok = hi <= bound + slack && spread <= thr.eps_stability;
        let c = AntiCase {
            case,
            n,
            m,
            sigma_min,
            bound,
            eps: eps.to_vec(),
            ratio,
            spread,
            slack,
        };
        report.record(&c, ok, || {
            format!("case {case} ({n}x{m}): max ratio {hi:.4} vs bound {bound:.4}, spread {spread:.3}")
        })?;
    }
    Ok(report)
}

fn draw_with_floor(shape: MatrixShape, floor: f64, rng: &mut LabRng) -> Result<GaussianMatrixSpec> {
    for _ in 0..1000 {
        let spec = random_spec(shape, rng)?;
        if spec.sigma_min() >= floor {
            return Ok(spec);
        }
    }
    domain(format!("no random law with sigma_min ≥ {floor} in 1000 draws"))
}

#[derive(Serialize)]
struct SharpnessCase {
    n: usize,
    m: usize,
    k: usize,
    mean: f64,
    stderr: f64,
    normalized_gap: f64,
}

/// Duplicated-column law against `Y ≡ 0`: `|E_X| / (k √(2 log n))` must sit
/// inside `[sharpness_low, sharpness_high]`.
pub fn certify_sharpness(ns: &[usize], m: usize, k: usize, reps: usize, seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    positive("reps", reps)?;
    if ns.is_empty() || ns.iter().any(|n| *n < 2) {
        return domain("sharpness needs row counts n ≥ 2");
    }
    let mut report = CertificateReport::new("sharpness", seed);
    for (idx, &n) in ns.iter().enumerate() {
        let spec = sharpness_columns_spec(n, m)?;
        let est = estimate_min_sum_topk(&spec, k, reps, &seed.child(idx as u64))?;
        let norm = est.mean.abs() / (k as f64 * (2.0 * (n as f64).ln()).sqrt());
        let c = SharpnessCase {
            n,
            m,
            k,
            mean: est.mean,
            stderr: est.stderr,
            normalized_gap: norm,
        };
        let ok = (thr.sharpness_low..=thr.sharpness_high).contains(&norm);
        report.record(&c, ok, || format!("n = {n}: normalized gap {norm:.4} outside range"))?;
    }
    Ok(report)
}

#[derive(Serialize, Default)]
struct SoftmaxCase {
    trial: usize,
    n: usize,
    m: usize,
    k: usize,
    beta: f64,
    delta: f64,
    sandwich_lower: f64,
    sandwich_upper: f64,
    max_row_sum: f64,
    max_sign_violation: f64,
    abs_sum: f64,
    abs_bound: f64,
    gradient_fd_err: f64,
    hessian_fd_err: f64,
}

fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

fn fd_gradient_of(x: &DMatrix<f64>, f: impl Fn(&DMatrix<f64>) -> Result<f64>) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut y = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let h = fd_step(x[(i, j)]);
            y[(i, j)] = x[(i, j)] + h;
            let up = f(&y)?;
            y[(i, j)] = x[(i, j)] - h;
            let dn = f(&y)?;
            y[(i, j)] = x[(i, j)];
            g[(i, j)] = (up - dn) / (2.0 * h);
        }
    }
    Ok(g)
}

fn fd_hessian(x: &DMatrix<f64>, params: &SmoothParams) -> Result<DMatrix<f64>> {
    let (n, m) = x.shape();
    let nm = n * m;
    let mut h = DMatrix::zeros(nm, nm);
    let mut y = x.clone();
    for c in 0..nm {
        let (i, j) = (c / m, c % m);
        let step = fd_step(x[(i, j)]);
        y[(i, j)] = x[(i, j)] + step;
        let up = gradient(&y, params)?;
        y[(i, j)] = x[(i, j)] - step;
        let dn = gradient(&y, params)?;
        y[(i, j)] = x[(i, j)];
        for r in 0..nm {
            h[(r, c)] = (up[(r / m, r % m)] - dn[(r / m, r % m)]) / (2.0 * step);
        }
    }
    Ok(h)
}

/// Random `(x, β, δ, k)` with `n, m ≤ max_dim`: the surrogate sandwich,
/// zero Hessian row sums, Hessian sign pattern, off-diagonal mass bound, and
/// agreement of the analytic derivatives with central differences.
pub fn certify_softmax(trials: usize, max_dim: usize, seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    positive("trials", trials)?;
    positive("max_dim", max_dim)?;
    let mut report = CertificateReport::new("softmax", seed);
    let mut rng = seed.rng();
    let mut worst = BTreeMap::<&str, f64>::new();
    for trial in 0..trials {
        let n = rng.random_range(1..=max_dim);
        let m = rng.random_range(1..=max_dim);
        let k = rng.random_range(1..=m);
        let beta = 10f64.powf(rng.random_range(-1.0..0.9));
        let delta = 10f64.powf(rng.random_range(-1.0..0.7));
        let params = SmoothParams::new(beta, delta, k)?;
        let x = DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0));
        let mut c = SoftmaxCase {
            trial,
            n,
            m,
            k,
            beta,
            delta,
            ..Default::default()
        };
        let mut bad = Vec::new();

        let f = f_value(&x, &params)?;
        let t = min_sum_topk(&x, k)?;
        let (lo, hi) = sandwich_gaps(&params, n, m);
        let mag = k as f64 * x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let slack = 16.0 * m as f64 * f64::EPSILON * (1.0 + mag + lo + hi);
        c.sandwich_lower = (f - lo) - t;
        c.sandwich_upper = t - (f + hi);
        if c.sandwich_lower > slack || c.sandwich_upper > slack {
            bad.push("sandwich");
        }

        let h = hessian(&x, &params)?;
        for r in 0..n * m {
            c.max_row_sum = c.max_row_sum.max(h.row(r).sum().abs());
            for col in 0..n * m {
                let v = h[(r, col)];
                let violation = if r / m != col / m {
                    -v
                } else if r != col {
                    v
                } else {
                    f64::NEG_INFINITY
                };
                c.max_sign_violation = c.max_sign_violation.max(violation);
            }
        }
        if c.max_row_sum > thr.row_sum_tol {
            bad.push("row sums");
        }
        if c.max_sign_violation > thr.sign_slack {
            bad.push("signs");
        }
        let abs = hessian_abs_offdiag_sum(&x, &params)?;
        c.abs_sum = abs.sum;
        c.abs_bound = abs.bound;
        if abs.sum > abs.bound + thr.abs_sum_slack {
            bad.push("abs-sum bound");
        }

        let g = gradient(&x, &params)?;
        let fd = fd_gradient_of(&x, |y| f_value(y, &params))?;
        c.gradient_fd_err = (g - fd).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if c.gradient_fd_err > thr.gradient_fd_tol {
            bad.push("gradient fd");
        }
        let hfd = fd_hessian(&x, &params)?;
        c.hessian_fd_err = (&h - hfd).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if c.hessian_fd_err > thr.hessian_fd_tol {
            bad.push("hessian fd");
        }

        for (key, v) in [
            ("max_sandwich_excess", c.sandwich_lower.max(c.sandwich_upper)),
            ("max_row_sum", c.max_row_sum),
            ("max_sign_violation", c.max_sign_violation),
            ("max_abs_sum_excess", c.abs_sum - c.abs_bound),
            ("max_gradient_fd_err", c.gradient_fd_err),
            ("max_hessian_fd_err", c.hessian_fd_err),
        ] {
            let e = worst.entry(key).or_insert(f64::NEG_INFINITY);
            *e = e.max(v);
        }
        let ok = bad.is_empty();
        report.record(&c, ok, || format!("trial {trial} ({n}x{m}, k={k}, beta={beta:.3}, delta={delta:.3}): {}", bad.join(", ")))?;
    }
    report.summary = worst.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok(report)
}

#[derive(Serialize)]
struct TrendStep {
    from: usize,
    to: usize,
    rise: f64,
    allowed: f64,
}

fn nonincreasing_steps(report: &mut CertificateReport, ks: &[f64], allowed: f64) -> Result<()> {
    for (k, p) in ks.windows(2).enumerate() {
        let step = TrendStep { from: k, to: k + 1, rise: p[1] - p[0], allowed };
        let ok = step.rise <= allowed;
        report.record(&step, ok, || format!("ks rises by {:.4} from row {k} to row {} (allowed {allowed:.4})", p[1] - p[0], k + 1))?;
    }
    Ok(())
}

/// Fourth-moment family table: the fourth cumulant spans at least a decade,
/// KS is nonincreasing along the family up to `trend_noise_units`, and the
/// log-log slope of KS against the largest cumulant is at least `slope_floor`.
pub fn certify_fourth_moment(rows: &[FamilyRow], reps: usize, seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    positive("reps", reps)?;
    if rows.len() < 2 {
        return domain("the trend needs at least two rows");
    }
    let mut report = CertificateReport::new("fourth-moment", seed);
    let noise = ks_noise(reps);
    let kappa: Vec<f64> = rows.iter().map(|r| r.kappa4_max).collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
    nonincreasing_steps(&mut report, &ks, thr.trend_noise_units * noise)?;
    let hi = kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let decades = (hi / lo).log10();
    let slope = loglog_slope(&kappa, &ks).unwrap_or(f64::NAN);
    report.summary.insert("kappa4_decades".into(), decades);
    report.summary.insert("slope".into(), slope);
    report.summary.insert("slope_floor".into(), thr.slope_floor);
    report.summary.insert("ks_noise".into(), noise);
    if decades.is_nan() || decades < 1.0 {
        report.passed = false;
        report.failures.push(format!("fourth cumulant spans only {decades:.3} decades"));
    }
    if slope.is_nan() || slope < thr.slope_floor {
        report.passed = false;
        report.failures.push(format!("log-log slope {slope:.4} below {:.4}", thr.slope_floor));
    }
    Ok(report)
}

/// Lead-lag convergence table: Spearman correlation between `N` and KS is
/// at most 0, KS is nonincreasing up to `trend_noise_units`, and when the
/// first KS exceeds `trend_signal_units` noise units the last one sits at
/// least `trend_drop_units` below it.
pub fn certify_leadlag(rows: &[ConvergenceRow], seed: &SeedSpec, thr: &Thresholds) -> Result<CertificateReport> {
    if rows.len() < 2 {
        return domain("the trend needs at least two rows");
    }
    let reps = rows[0].reps;
    positive("reps", reps)?;
    let mut report = CertificateReport::new("leadlag", seed);
    let noise = ks_noise(reps);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
    nonincreasing_steps(&mut report, &ks, thr.trend_noise_units * noise)?;
    let rho = spearman(&ns, &ks)?;
    let (first, last) = (ks[0], ks[ks.len() - 1]);
    let signal = first > thr.trend_signal_units * noise;
    report.summary.insert("spearman".into(), rho);
    report.summary.insert("ks_noise".into(), noise);
    report.summary.insert("drop_noise_units".into(), (first - last) / noise);
    if rho > 0.0 {
        report.passed = false;
        report.failures.push(format!("Spearman correlation {rho:.3} is positive"));
    }
    if signal && last > first - thr.trend_drop_units * noise {
        report.passed = false;
        report.failures.push(format!("ks falls only from {first:.4} to {last:.4}"));
    }
    Ok(report)
}
