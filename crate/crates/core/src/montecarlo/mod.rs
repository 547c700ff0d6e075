//! Monte Carlo estimators, empirical distances, and the sharpness
//! constructions used to certify the comparison bounds numerically.

pub mod certify;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covlab::{run_blocks, GaussianMatrixSpec, GaussianSampler, LabRng, MatrixSampler, MatrixShape, SeedSpec};
use crate::error::{domain, Result};
use crate::softminmax::min_sum_topk_flat;

/// Finalized summary of a scalar Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over `√count`; NaN when `count < 2`.
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        values.iter().for_each(|v| acc.push(*v));
        acc.finish()
    }
}

/// Welford accumulator; `merge` is Chan's pairwise update, so merging
/// per-block partials in a fixed order is bit-reproducible.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn finish(&self) -> SampleStats {
        let stderr = if self.count >= 2 {
            (self.m2.max(0.0) / (self.count - 1) as f64 / self.count as f64).sqrt()
        } else {
            f64::NAN
        };
        SampleStats {
            count: self.count,
            mean: self.mean,
            stderr,
            min: self.min,
            max: self.max,
        }
    }
}

/// Sorted sample of a scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    pub seed: Option<SeedSpec>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>, seed: Option<SeedSpec>) -> Result<Self> {
        if values.is_empty() {
            return domain("empirical sample must be nonempty");
        }
        if values.iter().any(|v| v.is_nan()) {
            return domain("empirical sample contains NaN");
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, seed })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stats(&self) -> SampleStats {
        SampleStats::from_values(&self.values)
    }

    /// Applies a strictly increasing map; order is preserved.
    pub fn map_increasing(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|v| f(*v)).collect(),
            seed: self.seed,
        }
    }

    /// Single-column CSV with a `value` header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["value"])?;
        for v in &self.values {
            w.write_record([v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value"])?;
        for v in &self.values {
            w.write_record([v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `stat` on `reps` draws and accumulates `width` scalar outputs per
/// draw. Blocks accumulate independently and merge in block order.
pub fn accumulate<S, F>(sampler: &S, reps: usize, seed: &SeedSpec, width: usize, stat: F) -> Vec<SampleStats>
where
    S: MatrixSampler,
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let nm = sampler.shape().len();
    let parts = run_blocks(reps, seed, |rng, range| {
        let mut scratch = Vec::new();
        let mut buf = vec![0.0; nm];
        let mut out = vec![0.0; width];
        let mut accs = vec![Accumulator::default(); width];
        for _ in range {
            sampler.draw(rng, &mut scratch, &mut buf);
            stat(&buf, &mut out);
            for (a, v) in accs.iter_mut().zip(&out) {
                a.push(*v);
            }
        }
        accs
    });
    let mut total = vec![Accumulator::default(); width];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(Accumulator::finish).collect()
}

/// Monte Carlo mean of a scalar statistic of the sampled matrix.
pub fn estimate_statistic<S, F>(sampler: &S, reps: usize, seed: &SeedSpec, stat: F) -> Result<SampleStats>
where
    S: MatrixSampler,
    F: Fn(&[f64]) -> f64 + Sync,
{
    if reps == 0 {
        return domain("reps must be positive");
    }
    Ok(accumulate(sampler, reps, seed, 1, |x, out| out[0] = stat(x))[0])
}

/// `E min_i Σ top-k(X_i)` by Monte Carlo.
pub fn estimate_min_sum_topk(spec: &GaussianMatrixSpec, k: usize, reps: usize, seed: &SeedSpec) -> Result<SampleStats> {
    let m = spec.shape().m;
    if k == 0 || k > m {
        return domain(format!("k must lie in 1..={m}, got {k}"));
    }
    let sampler = GaussianSampler::new(spec);
    estimate_statistic(&sampler, reps, seed, |x| min_sum_topk_flat(x, m, k).expect("validated k"))
}

/// Sorted sample of `min_i max_j X_{ij}`.
pub fn minmax_sample<S: MatrixSampler>(sampler: &S, reps: usize, seed: &SeedSpec) -> Result<EmpiricalSample> {
    if reps == 0 {
        return domain("reps must be positive");
    }
    let m = sampler.shape().m;
    let values = sampler.draw_statistics(reps, seed, |x| min_max_flat(x, m));
    EmpiricalSample::new(values, Some(*seed))
}

/// `min_i max_j` of a row-major buffer.
#[inline]
pub fn min_max_flat(x: &[f64], m: usize) -> f64 {
    x.chunks_exact(m)
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Exact two-sample Kolmogorov-Smirnov statistic. All copies of a tied
/// value are absorbed before the gap between the two step functions is
/// measured.
pub fn ks_distance(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (x, y) = (a.values(), b.values());
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0_f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] == t {
            i += 1;
        }
        while j < y.len() && y[j] == t {
            j += 1;
        }
        best = best.max((i as f64 / nx - j as f64 / ny).abs());
    }
    // once one sample is exhausted the gap only shrinks towards 0
    best
}

/// Conventional two-sample KS noise level `1.36 / √reps` at sample size `reps`.
pub fn ks_noise(reps: usize) -> f64 {
    1.36 / (reps as f64).sqrt()
}

/// `sup_x` of the empirical `P(|Y - x| ≤ eps)`: the largest fraction of the
/// sample inside a closed window of width `2 eps`.
pub fn levy_concentration(sample: &EmpiricalSample, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return domain(format!("eps must be positive, got {eps}"));
    }
    let v = sample.values();
    let mut best = 0usize;
    let mut r = 0usize;
    for l in 0..v.len() {
        if r < l {
            r = l;
        }
        let hi = v[l] + 2.0 * eps;
        while r + 1 < v.len() && v[r + 1] <= hi {
            r += 1;
        }
        best = best.max(r + 1 - l);
    }
    Ok(best as f64 / v.len() as f64)
}

/// `m` identical columns, each equal to one standard `n`-vector:
/// `min_i Σ top-k(X_i) = k · min_i X'_i`.
pub fn sharpness_columns_spec(n: usize, m: usize) -> Result<GaussianMatrixSpec> {
    let shape = MatrixShape::new(n, m)?;
    let nm = shape.len();
    let cov = DMatrix::from_fn(nm, nm, |a, b| if a / m == b / m { 1.0 } else { 0.0 });
    GaussianMatrixSpec::new(shape, vec![0.0; nm], cov)
}

/// `n` identical rows, each `k` copies (column blocks `c·(m/k) .. (c+1)(m/k)`)
/// of one standard `(m/k)`-vector: `min_i Σ top-k(X_i) = k · max_j X̃_j`.
pub fn sharpness_rows_spec(n: usize, m: usize, k: usize) -> Result<GaussianMatrixSpec> {
    let shape = MatrixShape::new(n, m)?;
    if k == 0 || k > m || !m.is_multiple_of(k) {
        return domain(format!("m = {m} must be a positive multiple of k = {k}"));
    }
    let r = m / k;
    let nm = shape.len();
    let cov = DMatrix::from_fn(nm, nm, |a, b| if (a % m) % r == (b % m) % r { 1.0 } else { 0.0 });
    GaussianMatrixSpec::new(shape, vec![0.0; nm], cov)
}

/// Default tie tolerance of [`assumption_a_check`].
pub const TIE_TOL: f64 = 1e-9;

/// Whether the min-max is attained at a single entry in every one of `reps`
/// draws: no second entry of the arg-min row within `tol` of its maximum,
/// and no other row maximum within `tol` of the min-max.
pub fn assumption_a_check<S: MatrixSampler>(sampler: &S, reps: usize, seed: &SeedSpec, tol: f64) -> Result<bool> {
    if reps == 0 {
        return domain("reps must be positive");
    }
    let m = sampler.shape().m;
    let ok = sampler.draw_statistics(reps, seed, |x| unique_min_max(x, m, tol));
    Ok(ok.into_iter().all(|b| b))
}

fn unique_min_max(x: &[f64], m: usize, tol: f64) -> bool {
    let maxima: Vec<f64> = x
        .chunks_exact(m)
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (row, mm) = maxima
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let near_in_row = x[row * m..(row + 1) * m].iter().filter(|v| (**v - mm).abs() <= tol).count();
    let near_rows = maxima.iter().filter(|v| (**v - mm).abs() <= tol).count();
    near_in_row == 1 && near_rows == 1
}

/// Random law for certificates: covariance `GᵀG/(nm) + λI` with `G` an
/// `nm × nm` standard Gaussian matrix and `λ ~ U[0.1, 1]`; mean iid `N(0,1)`.
pub fn random_spec(shape: MatrixShape, rng: &mut LabRng) -> Result<GaussianMatrixSpec> {
    let nm = shape.len();
    let g = DMatrix::from_fn(nm, nm, |_, _| -> f64 { StandardNormal.sample(rng) });
    let lambda = rng.random_range(0.1..1.0);
    let cov = (g.transpose() * &g) / nm as f64 + DMatrix::identity(nm, nm) * lambda;
    let mean: Vec<f64> = (0..nm).map(|_| -> f64 { StandardNormal.sample(rng) }).collect();
    GaussianMatrixSpec::new(shape, mean, cov)
}

/// Two independent random laws sharing one mean vector.
pub fn random_spec_pair(shape: MatrixShape, rng: &mut LabRng) -> Result<(GaussianMatrixSpec, GaussianMatrixSpec)> {
    let x = random_spec(shape, rng)?;
    let y = random_spec(shape, rng)?.with_mean(x.mean().to_vec())?;
    Ok((x, y))
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for t in i..=j {
            r[idx[t]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return domain("spearman needs two equal-length samples of size ≥ 2");
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return domain("slope needs two equal-length samples of size ≥ 2");
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return domain("log-log slope needs positive finite values");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return domain("log-log slope needs at least two distinct x values");
    }
    Ok(sxy / sxx)
}
