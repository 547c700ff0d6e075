//! Random matrices in the second Wiener chaos.
//!
//! Entry `(i1, i2)` is the centered quadratic form `ξᵀ A ξ − E ξᵀ A ξ` of a
//! Gaussian vector `ξ ~ N(0, S)`. Writing `ξ = S^{1/2} η` with `η` standard
//! turns it into `ηᵀ B η − tr B` with `B = S^{1/2} A S^{1/2}`, and everything
//! below (cumulants, the inner product `⟨DF_a, −DL⁻¹F_b⟩ = 2ηᵀB_aB_bη`) is
//! phrased in terms of `B`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covlab::{cholesky_psd, run_blocks, GaussianMatrixSpec, GaussianSampler, LabRng, MatrixSampler, MatrixShape, SeedSpec};
use crate::error::{domain, Error, Result};
use crate::montecarlo::{ks_distance, minmax_sample, Accumulator, SampleStats};

/// Asymmetry above this is reported when a coefficient matrix is loaded.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// Upper-triangular CSR form of a symmetric matrix with the off-diagonal
/// entries doubled, so `ηᵀMη = Σ_i η_i Σ_{j ≥ i} v_ij η_j`.
#[derive(Debug, Clone)]
struct UpperForm {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl UpperForm {
    fn new(b: &DMatrix<f64>) -> Self {
        let d = b.nrows();
        let mut row_ptr = Vec::with_capacity(d + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..d {
            for j in i..d {
                let v = b[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(if i == j { v } else { 2.0 * v });
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    #[inline]
    fn eval(&self, eta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, e) in eta.iter().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            if span.is_empty() {
                continue;
            }
            let inner: f64 = self.cols[span.clone()].iter().zip(&self.vals[span]).map(|(&j, v)| v * eta[j]).sum();
            total += e * inner;
        }
        total
    }
}

fn symmetrize(a: &mut DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            worst = worst.max((x - y).abs());
            let s = 0.5 * (x + y);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    worst
}

fn psd_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
    symmetrize(&mut r);
    r
}

/// Law of an `n × m` matrix of centered Gaussian quadratic forms.
#[derive(Debug, Clone)]
pub struct QuadraticFormMatrixSpec {
    shape: MatrixShape,
    d: usize,
    s: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    forms: Vec<UpperForm>,
    traces: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    d: usize,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    a: BTreeMap<String, Vec<Vec<f64>>>,
}

fn nested_to_matrix(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            expected: format!("{d}x{d} {what}"),
            got: format!("{} rows", rows.len()),
        });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_nested(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

fn parse_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Domain(format!("entry key must look like \"i1,i2\", got {key:?}"));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl QuadraticFormMatrixSpec {
    /// `a` holds one `d × d` coefficient matrix per entry in flat row-major
    /// order; `s = None` means `S = I`. Coefficients are symmetrized (with a
    /// warning when they were noticeably asymmetric) and `S` must be PSD.
    pub fn new(shape: MatrixShape, s: Option<DMatrix<f64>>, a: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficient matrices", shape.len()),
                got: a.len().to_string(),
            });
        }
        let d = a[0].nrows();
        if d == 0 {
            return domain("latent dimension d must be positive");
        }
        let mut a = a;
        for (e, m) in a.iter_mut().enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::ShapeMismatch {
                    expected: format!("{d}x{d} coefficients"),
                    got: format!("{}x{} at entry {e}", m.nrows(), m.ncols()),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return domain(format!("coefficients of entry {e} are not finite"));
            }
            let asym = symmetrize(m);
            if asym > ASYMMETRY_WARN {
                log::warn!("coefficient matrix of entry {e} was asymmetric by {asym:e}; symmetrized");
            }
        }
        let (s, b) = match s {
            None => (DMatrix::identity(d, d), a.clone()),
            Some(mut s) => {
                if s.nrows() != d || s.ncols() != d {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{d}x{d} base covariance"),
                        got: format!("{}x{}", s.nrows(), s.ncols()),
                    });
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return domain("base covariance is not finite");
                }
                let asym = symmetrize(&mut s);
                if asym > ASYMMETRY_WARN {
                    log::warn!("base covariance was asymmetric by {asym:e}; symmetrized");
                }
                cholesky_psd(&s)?;
                let b = if s == DMatrix::identity(d, d) {
                    a.clone()
                } else {
                    let r = psd_sqrt(&s);
                    a.iter()
                        .map(|m| {
                            let mut b = &r * m * &r;
                            symmetrize(&mut b);
                            b
                        })
                        .collect()
                };
                (s, b)
            }
        };
        let forms = b.iter().map(UpperForm::new).collect();
        let traces = b.iter().map(|m| m.trace()).collect();
        Ok(Self { shape, d, s, a, b, forms, traces })
    }

    /// Reads `{"n", "m", "d", "S", "A": {"i1,i2": [[…]]}}`. Keys are zero-based;
    /// `n`, `m` default to one past the largest key, `S` to the identity, and
    /// entries without a key are zero.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text)?;
        let mut entries = BTreeMap::new();
        for (key, rows) in &raw.a {
            let ij = parse_key(key)?;
            if entries.insert(ij, nested_to_matrix(rows, raw.d, "coefficients")?).is_some() {
                return domain(format!("entry {key:?} given twice"));
            }
        }
        let n = raw.n.unwrap_or_else(|| entries.keys().map(|k| k.0 + 1).max().unwrap_or(1));
        let m = raw.m.unwrap_or_else(|| entries.keys().map(|k| k.1 + 1).max().unwrap_or(1));
        let shape = MatrixShape::new(n, m)?;
        if let Some(&(i, j)) = entries.keys().find(|(i, j)| *i >= n || *j >= m) {
            return domain(format!("entry ({i},{j}) outside the {shape} shape"));
        }
        let a = (0..shape.len())
            .map(|e| entries.remove(&shape.pair(e)).unwrap_or_else(|| DMatrix::zeros(raw.d, raw.d)))
            .collect();
        let s = raw.s.as_deref().map(|rows| nested_to_matrix(rows, raw.d, "base covariance")).transpose()?;
        Self::new(shape, s, a)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = SpecJson {
            n: Some(self.shape.n),
            m: Some(self.shape.m),
            d: self.d,
            s: Some(matrix_to_nested(&self.s)),
            a: (0..self.shape.len())
                .map(|e| {
                    let (i, j) = self.shape.pair(e);
                    (format!("{i},{j}"), matrix_to_nested(&self.a[e]))
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn shape(&self) -> MatrixShape {
        self.shape
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn base_cov(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn coefficients(&self, entry: usize) -> &DMatrix<f64> {
        &self.a[entry]
    }

    /// `B = S^{1/2} A S^{1/2}` for a flat entry index.
    pub fn b(&self, entry: usize) -> &DMatrix<f64> {
        &self.b[entry]
    }

    /// Multiplies every coefficient matrix by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let s = (self.s != DMatrix::identity(self.d, self.d)).then(|| self.s.clone());
        Self::new(self.shape, s, self.a.iter().map(|m| m * c).collect())
    }

    fn check_entry(&self, entry: usize) -> Result<()> {
        if entry >= self.shape.len() {
            return domain(format!("entry {entry} outside the {} shape", self.shape));
        }
        Ok(())
    }
}

fn standard_normals(rng: &mut LabRng, d: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..d).map(|_| -> f64 { StandardNormal.sample(rng) }));
}

impl MatrixSampler for QuadraticFormMatrixSpec {
    fn shape(&self) -> MatrixShape {
        self.shape
    }

    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        standard_normals(rng, self.d, scratch);
        for ((o, form), tr) in out.iter_mut().zip(&self.forms).zip(&self.traces) {
            *o = form.eval(scratch) - tr;
        }
    }
}

/// `reps` draws of the chaos matrix, deterministic given `seed`.
pub fn chaos_sample(spec: &QuadraticFormMatrixSpec, reps: usize, seed: &SeedSpec) -> Result<Vec<DMatrix<f64>>> {
    let shape = spec.shape;
    Ok(spec.draw_statistics(reps, seed, |x| DMatrix::from_row_slice(shape.n, shape.m, x)))
}

/// `Cov(F_a, F_b) = 2 tr(B_a B_b)`.
pub fn covariance_exact(spec: &QuadraticFormMatrixSpec) -> DMatrix<f64> {
    let nm = spec.shape.len();
    let mut cov = DMatrix::zeros(nm, nm);
    for a in 0..nm {
        for b in a..nm {
            // both symmetric, so the trace is the Frobenius inner product
            let v = 2.0 * spec.b[a].dot(&spec.b[b]);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// `E F⁴ − 3 (E F²)² = 48 tr(B⁴)` for one flat entry.
pub fn fourth_cumulant_exact(spec: &QuadraticFormMatrixSpec, entry: usize) -> Result<f64> {
    spec.check_entry(entry)?;
    let b = &spec.b[entry];
    let b2 = b * b;
    Ok(48.0 * b2.norm_squared())
}

fn check_cov(spec: &QuadraticFormMatrixSpec, cov: &DMatrix<f64>) -> Result<()> {
    let nm = spec.shape.len();
    if cov.nrows() != nm || cov.ncols() != nm {
        return Err(Error::ShapeMismatch {
            expected: format!("{nm}x{nm} covariance"),
            got: format!("{}x{}", cov.nrows(), cov.ncols()),
        });
    }
    Ok(())
}

/// Forms `2 sym(B_a B_b)` for all `a ≤ b`.
fn product_forms(spec: &QuadraticFormMatrixSpec) -> Vec<(usize, usize, UpperForm)> {
    let nm = spec.shape.len();
    let mut out = Vec::with_capacity(nm * (nm + 1) / 2);
    for a in 0..nm {
        for b in a..nm {
            let p = &spec.b[a] * &spec.b[b];
            let sym = &p + p.transpose();
            out.push((a, b, UpperForm::new(&sym)));
        }
    }
    out
}

/// Monte Carlo estimate of `Δ = E max_{a,b} |2ηᵀB_aB_bη − σ_ab|`.
pub fn delta_mc(spec: &QuadraticFormMatrixSpec, gaussian_cov: &DMatrix<f64>, reps: usize, seed: &SeedSpec) -> Result<SampleStats> {
    check_cov(spec, gaussian_cov)?;
    if reps == 0 {
        return domain("reps must be positive");
    }
    let forms = product_forms(spec);
    let d = spec.d;
    let parts = run_blocks(reps, seed, |rng, range| {
        let mut eta = Vec::with_capacity(d);
        let mut acc = Accumulator::default();
        for _ in range {
            standard_normals(rng, d, &mut eta);
            let worst = forms
                .iter()
                .map(|(a, b, f)| (f.eval(&eta) - gaussian_cov[(*a, *b)]).abs())
                .fold(0.0, f64::max);
            acc.push(worst);
        }
        acc
    });
    let mut total = Accumulator::default();
    parts.iter().for_each(|p| total.merge(p));
    Ok(total.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityEntry {
    pub a: usize,
    pub b: usize,
    pub exact: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Compares the Monte Carlo mean of `2ηᵀB_aB_bη` with `2 tr(B_a B_b)` for
/// every pair `a ≤ b`.
pub fn duality_check(spec: &QuadraticFormMatrixSpec, reps: usize, seed: &SeedSpec) -> Result<Vec<DualityEntry>> {
    if reps == 0 {
        return domain("reps must be positive");
    }
    let forms = product_forms(spec);
    let exact = covariance_exact(spec);
    let d = spec.d;
    let parts = run_blocks(reps, seed, |rng, range| {
        let mut eta = Vec::with_capacity(d);
        let mut accs = vec![Accumulator::default(); forms.len()];
        for _ in range {
            standard_normals(rng, d, &mut eta);
            for (acc, (_, _, f)) in accs.iter_mut().zip(&forms) {
                acc.push(f.eval(&eta));
            }
        }
        accs
    });
    let mut total = vec![Accumulator::default(); forms.len()];
    for part in &parts {
        total.iter_mut().zip(part).for_each(|(t, p)| t.merge(p));
    }
    Ok(forms
        .iter()
        .zip(&total)
        .map(|((a, b, _), acc)| {
            let s = acc.finish();
            DualityEntry { a: *a, b: *b, exact: exact[(*a, *b)], mean: s.mean, stderr: s.stderr }
        })
        .collect())
}

/// Exact second and fourth moments of a chaos matrix and the aggregates
/// `A`, `B` that drive its Kolmogorov distance to the Gaussian target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosMomentReport {
    pub n: usize,
    pub m: usize,
    pub q: u32,
    pub cov: Vec<Vec<f64>>,
    pub kappa4: Vec<f64>,
    pub max_cov_gap: f64,
    pub max_kappa4: f64,
    /// Smallest target standard deviation; the distance bound assumes it
    /// stays away from zero.
    pub sigma_min: f64,
    pub a_quantity: f64,
    pub b_quantity: f64,
    /// `A^{1/3} + B^{1/6}`.
    pub shape_value: f64,
}

impl ChaosMomentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `(A, B)` from the largest covariance gap and the largest fourth cumulant:
/// `A = gap·n²·ln m·ln nm`, `B = κ₄·n⁴·(ln m)²·(ln nm)^{2q}`.
pub fn proposition_aggregates(shape: MatrixShape, max_cov_gap: f64, max_kappa4: f64, q: u32) -> Result<(f64, f64)> {
    if q < 2 {
        return domain(format!("chaos order must be at least 2, got {q}"));
    }
    if shape.m < 2 {
        return domain("ln m vanishes for m = 1; use m ≥ 2");
    }
    if !(max_cov_gap >= 0.0 && max_kappa4 >= 0.0) {
        return domain("moment inputs must be nonnegative");
    }
    let n = shape.n as f64;
    let lm = (shape.m as f64).ln();
    let lnm = (shape.len() as f64).ln();
    let a = max_cov_gap * n * n * lm * lnm;
    let b = max_kappa4 * n.powi(4) * lm * lm * lnm.powi(2 * q as i32);
    Ok((a, b))
}

/// `A^{1/3} + B^{1/6}` without the unknown constant.
pub fn proposition_shape(a: f64, b: f64) -> f64 {
    a.cbrt() + b.powf(1.0 / 6.0)
}

/// Exact moments of a second-chaos spec against a target covariance.
pub fn proposition_quantities(spec: &QuadraticFormMatrixSpec, gaussian_cov: &DMatrix<f64>, q: u32) -> Result<ChaosMomentReport> {
    check_cov(spec, gaussian_cov)?;
    let cov = covariance_exact(spec);
    let kappa4 = (0..spec.shape.len()).map(|e| fourth_cumulant_exact(spec, e)).collect::<Result<Vec<_>>>()?;
    proposition_quantities_from_moments(spec.shape, &cov, &kappa4, gaussian_cov, q)
}

/// Same aggregates from moments supplied by the caller (any chaos order).
pub fn proposition_quantities_from_moments(
    shape: MatrixShape,
    cov: &DMatrix<f64>,
    kappa4: &[f64],
    gaussian_cov: &DMatrix<f64>,
    q: u32,
) -> Result<ChaosMomentReport> {
    let nm = shape.len();
    if cov.shape() != (nm, nm) || gaussian_cov.shape() != (nm, nm) || kappa4.len() != nm {
        return Err(Error::ShapeMismatch {
            expected: format!("{nm}x{nm} covariances and {nm} cumulants"),
            got: format!("{:?}, {:?}, {}", cov.shape(), gaussian_cov.shape(), kappa4.len()),
        });
    }
    let max_cov_gap = cov.iter().zip(gaussian_cov.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_kappa4 = kappa4.iter().copied().fold(0.0, f64::max);
    let (a, b) = proposition_aggregates(shape, max_cov_gap, max_kappa4, q)?;
    let sigma_min = (0..nm).map(|i| gaussian_cov[(i, i)].max(0.0).sqrt()).fold(f64::INFINITY, f64::min);
    Ok(ChaosMomentReport {
        n: shape.n,
        m: shape.m,
        q,
        cov: matrix_to_nested(cov),
        kappa4: kappa4.to_vec(),
        max_cov_gap,
        max_kappa4,
        sigma_min,
        a_quantity: a,
        b_quantity: b,
        shape_value: proposition_shape(a, b),
    })
}

/// Centered Gaussian matrix with the chaos covariance.
pub fn matched_gaussian(spec: &QuadraticFormMatrixSpec) -> Result<GaussianMatrixSpec> {
    GaussianMatrixSpec::new(spec.shape, vec![0.0; spec.shape.len()], covariance_exact(spec))
}

/// Diagonal of the mixing matrix `D(t)`: the straight line from `e₁` to the
/// balanced vector `1/√r`, renormalized to unit Frobenius norm so that
/// `tr D² = 1` along the whole path while `tr D⁴` falls from 1 to `1/r`.
pub fn mixing_diagonal(t: f64, r: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return domain(format!("family parameter must lie in [0, 1], got {t}"));
    }
    if r == 0 {
        return domain("mixing dimension must be positive");
    }
    let flat = t / (r as f64).sqrt();
    let mut diag = vec![flat; r];
    diag[0] += 1.0 - t;
    let norm = diag.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(diag.into_iter().map(|v| v / norm).collect())
}

/// Member `t` of the fourth-moment family: `B_a(t) = B_a ⊗ D(t)` on
/// `ℝ^{d·r}` with `S = I`. Covariances do not depend on `t`; every fourth
/// cumulant is multiplied by `tr D(t)⁴`.
pub fn balanced_family(spec: &QuadraticFormMatrixSpec, t: f64, r: usize) -> Result<QuadraticFormMatrixSpec> {
    let diag = mixing_diagonal(t, r)?;
    let d = spec.d;
    let a = spec
        .b
        .iter()
        .map(|b| {
            let mut k = DMatrix::zeros(d * r, d * r);
            for i in 0..d {
                for j in 0..d {
                    for (s, w) in diag.iter().enumerate() {
                        k[(i * r + s, j * r + s)] = b[(i, j)] * w;
                    }
                }
            }
            k
        })
        .collect();
    QuadraticFormMatrixSpec::new(spec.shape, None, a)
}

/// One row of the fourth-moment scaling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub t: f64,
    pub kappa4_max: f64,
    pub ks: f64,
    pub shape: f64,
}

/// Walks `steps` equispaced members of [`balanced_family`] and records the
/// KS distance between min-max samples of the chaos matrix and of its
/// matched Gaussian.
pub fn fourth_moment_experiment(
    spec: &QuadraticFormMatrixSpec,
    steps: usize,
    r: usize,
    reps: usize,
    seed: &SeedSpec,
) -> Result<Vec<FamilyRow>> {
    if steps < 2 {
        return domain("the family needs at least two steps");
    }
    if reps == 0 {
        return domain("reps must be positive");
    }
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let member = balanced_family(spec, t, r)?;
            let target = matched_gaussian(&member)?;
            let report = proposition_quantities(&member, target.cov(), 2)?;
            let step_seed = seed.child(i as u64);
            let chaos = minmax_sample(&member, reps, &step_seed.child(0))?;
            let gauss = minmax_sample(&GaussianSampler::new(&target), reps, &step_seed.child(1))?;
            log::info!("family step {i}: t = {t}, max kappa4 = {:e}", report.max_kappa4);
            Ok(FamilyRow { t, kappa4_max: report.max_kappa4, ks: ks_distance(&chaos, &gauss), shape: report.shape_value })
        })
        .collect()
}

/// Writes the table with header `t,kappa4_max,ks,shape`.
pub fn write_family_csv(rows: &[FamilyRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `n × m` spec of rank-one forms `(u_aᵀη)² − 1` with independent uniform
/// unit vectors `u_a ∈ ℝᵈ`: every entry is a centered `χ²₁`.
pub fn rank_one_spec(shape: MatrixShape, d: usize, seed: &SeedSpec) -> Result<QuadraticFormMatrixSpec> {
    if d == 0 {
        return domain("latent dimension d must be positive");
    }
    let mut rng = seed.rng();
    let a = (0..shape.len())
        .map(|_| {
            let mut u = Vec::with_capacity(d);
            standard_normals(&mut rng, d, &mut u);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u = nalgebra::DVector::from_iterator(d, u.into_iter().map(|v| v / norm));
            &u * u.transpose()
        })
        .collect();
    QuadraticFormMatrixSpec::new(shape, None, a)
}
