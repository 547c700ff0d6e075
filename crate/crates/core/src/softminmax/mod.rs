//! The smooth surrogate of the min-sum-of-top-k statistic.
//!
//! For `x ∈ R^{n×m}`, `β, δ > 0` and `k ≤ m`,
//!
//! ```text
//! S_i(x) = Σ_{|L| = k} exp(β Σ_{l ∈ L} x_{i,l}) = e_k(exp(β x_{i,·}))
//! f(x)   = -(1/(βδ)) · log Σ_i S_i(x)^{-δ}
//! ```
//!
//! `f` sits within `log C(m,k)/β` below and `log n/(βδ)` above
//! [`min_sum_topk`]. Every quantity here is evaluated from log-domain
//! elementary symmetric polynomial tables (see [`esym`]) and exponentiated
//! only at the end.

pub mod esym;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::covlab::MatrixShape;
use crate::error::{domain, Result};

pub use esym::{log_esym, LogEsymTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub beta: f64,
    pub delta: f64,
    pub k: usize,
}

impl SmoothParams {
    pub fn new(beta: f64, delta: f64, k: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return domain(format!("beta must be positive and finite, got {beta}"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return domain(format!("delta must be positive and finite, got {delta}"));
        }
        if k == 0 {
            return domain("k must be at least 1");
        }
        Ok(Self { beta, delta, k })
    }

    /// Checks the parameters against an `n × m` argument.
    pub fn check_for(&self, n: usize, m: usize) -> Result<()> {
        Self::new(self.beta, self.delta, self.k)?;
        if n == 0 || m == 0 {
            return domain(format!("empty {n}x{m} matrix"));
        }
        if self.k > m {
            return domain(format!("k = {} exceeds m = {m}", self.k));
        }
        Ok(())
    }
}

fn check_input(x: &DMatrix<f64>, params: &SmoothParams) -> Result<()> {
    params.check_for(x.nrows(), x.ncols())?;
    if x.iter().any(|v| !v.is_finite()) {
        return domain("matrix has non-finite entries");
    }
    Ok(())
}

/// Shifted log-weights `β (x_{i,·} - max)` of one row and the shift `β max`.
fn row_logy(x: &DMatrix<f64>, i: usize, beta: f64) -> (Vec<f64>, f64) {
    let row = x.row(i);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (row.iter().map(|v| beta * (v - hi)).collect(), beta * hi)
}

/// `log S_i` for every row.
fn log_partitions(x: &DMatrix<f64>, params: &SmoothParams) -> Vec<f64> {
    let k = params.k;
    (0..x.nrows())
        .map(|i| {
            let (logy, shift) = row_logy(x, i, params.beta);
            esym::levels(&logy, k)[k] + k as f64 * shift
        })
        .collect()
}

/// `f_k^{β,δ}(x)`.
pub fn f_value(x: &DMatrix<f64>, params: &SmoothParams) -> Result<f64> {
    check_input(x, params)?;
    let logs = log_partitions(x, params);
    let d = params.delta;
    Ok(-esym::lse(logs.iter().map(|l| -d * l)) / (params.beta * d))
}

/// Minimum over rows of the sum of the `k` largest entries.
pub fn min_sum_topk(x: &DMatrix<f64>, k: usize) -> Result<f64> {
    let (n, m) = x.shape();
    if n == 0 || m == 0 {
        return domain(format!("empty {n}x{m} matrix"));
    }
    let mut row = vec![0.0; m];
    let mut best = f64::INFINITY;
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        best = best.min(row_topk(&mut row, k)?);
    }
    Ok(best)
}

/// [`min_sum_topk`] on a row-major buffer with `m` columns.
pub fn min_sum_topk_flat(values: &[f64], m: usize, k: usize) -> Result<f64> {
    if m == 0 || values.is_empty() || !values.len().is_multiple_of(m) {
        return domain(format!("buffer of length {} is not a whole number of rows of {m}", values.len()));
    }
    let mut row = vec![0.0; m];
    let mut best = f64::INFINITY;
    for chunk in values.chunks_exact(m) {
        row.copy_from_slice(chunk);
        best = best.min(row_topk(&mut row, k)?);
    }
    Ok(best)
}

/// Sum of the `k` largest entries; reorders `row`.
fn row_topk(row: &mut [f64], k: usize) -> Result<f64> {
    let m = row.len();
    if k == 0 || k > m {
        return domain(format!("k = {k} outside 1..={m}"));
    }
    if k == 1 {
        return Ok(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    if k < m {
        row.select_nth_unstable_by(m - k, |a, b| a.total_cmp(b));
    }
    Ok(row[m - k..].iter().sum())
}

/// Subset weights of the surrogate at a fixed point.
#[derive(Debug, Clone)]
pub struct SubsetWeightTable {
    pub shape: MatrixShape,
    pub k: usize,
    /// `singles[(i, a)] = p_i^a`: the weight of the `k`-subsets of row `i`
    /// that contain column `a`.
    pub singles: DMatrix<f64>,
    /// `pairs[i][(a, b)] = p_i^{a,b}`; the diagonal repeats `p_i^a`.
    pub pairs: Vec<DMatrix<f64>>,
    /// `cov[i][(a, b)] = p_i^{a,b} - p_i^a p_i^b`, the covariance of the
    /// membership indicators. Weights near one make the direct difference
    /// cancel, so those entries use the complements `1 - p` instead.
    pub cov: Vec<DMatrix<f64>>,
    /// `q_i = Σ_l (S_i / S_l)^δ ≥ 1`; may overflow to `+inf` for rows that
    /// carry no weight at large `β`. Use `inv_q` in arithmetic.
    pub q: Vec<f64>,
    /// `1/q_i`, computed directly (sums to one).
    pub inv_q: Vec<f64>,
    /// `log S_i`.
    pub log_partition: Vec<f64>,
}

impl SubsetWeightTable {
    /// Gradient entry `p_i^a / q_i`.
    #[inline]
    pub fn grad(&self, i: usize, a: usize) -> f64 {
        self.singles[(i, a)] * self.inv_q[i]
    }

    /// Debug dump for fixtures.
    pub fn to_json(&self) -> String {
        let mat = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        json!({
            "n": self.shape.n,
            "m": self.shape.m,
            "k": self.k,
            "singles": mat(&self.singles),
            "pairs": self.pairs.iter().map(mat).collect::<Vec<_>>(),
            "cov": self.cov.iter().map(mat).collect::<Vec<_>>(),
            "q": self.q,
            "inv_q": self.inv_q,
            "log_partition": self.log_partition,
        })
        .to_string()
    }
}

/// `p`, `q` and `1/q` at `x`.
pub fn weight_tables(x: &DMatrix<f64>, params: &SmoothParams) -> Result<SubsetWeightTable> {
    check_input(x, params)?;
    let (n, m) = x.shape();
    let k = params.k;
    let mut singles = DMatrix::zeros(n, m);
    let mut pairs = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    let mut log_partition = Vec::with_capacity(n);
    for i in 0..n {
        let (logy, shift) = row_logy(x, i, params.beta);
        let table = log_esym(&logy, k)?;
        let lk = table.levels[k];
        log_partition.push(lk + k as f64 * shift);
        let mut pr = DMatrix::zeros(m, m);
        let mut cv = DMatrix::zeros(m, m);
        // 1 - p^a: weight of the subsets avoiding a
        let out: Vec<f64> = (0..m).map(|a| (table.drop_one[a][k] - lk).exp().min(1.0)).collect();
        for a in 0..m {
            let pa = (logy[a] + table.drop_one[a][k - 1] - lk).exp().min(1.0);
            singles[(i, a)] = pa;
            pr[(a, a)] = pa;
            cv[(a, a)] = pa * out[a];
        }
        for a in 0..m {
            for b in (a + 1)..m {
                let (pa, pb) = (singles[(i, a)], singles[(i, b)]);
                // p^{a,b} ≤ min(p^a, p^b) exactly; clamp away log-domain roundoff
                let v = (logy[a] + logy[b] + table.drop_two[(a, b)] - lk).exp().min(pa.min(pb));
                pr[(a, b)] = v;
                pr[(b, a)] = v;
                let c = if pa * pb <= out[a] * out[b] {
                    v - pa * pb
                } else {
                    (table.drop_two_top[(a, b)] - lk).exp() - out[a] * out[b]
                };
                cv[(a, b)] = c;
                cv[(b, a)] = c;
            }
        }
        pairs.push(pr);
        covs.push(cv);
    }
    let d = params.delta;
    let norm = esym::lse(log_partition.iter().map(|l| -d * l));
    let log_q: Vec<f64> = log_partition.iter().map(|l| d * l + norm).collect();
    Ok(SubsetWeightTable {
        shape: MatrixShape::new(n, m)?,
        k,
        singles,
        pairs,
        cov: covs,
        q: log_q.iter().map(|v| v.exp()).collect(),
        inv_q: log_q.iter().map(|v| (-v).exp()).collect(),
        log_partition,
    })
}

/// `∂f/∂x_{i,a} = p_i^a / q_i`.
pub fn gradient(x: &DMatrix<f64>, params: &SmoothParams) -> Result<DMatrix<f64>> {
    let w = weight_tables(x, params)?;
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, a| w.grad(i, a)))
}

fn hessian_from(w: &SubsetWeightTable, params: &SmoothParams) -> DMatrix<f64> {
    let MatrixShape { n, m } = w.shape;
    let nm = n * m;
    let (beta, delta) = (params.beta, params.delta);
    let g: Vec<f64> = (0..nm).map(|r| w.grad(r / m, r % m)).collect();
    // 1 - 1/q_i summed from the other rows: a dominant row has 1/q_i ≈ 1
    // and the subtraction would cancel.
    let rest: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|l| *l != i).map(|l| w.inv_q[l]).sum())
        .collect();
    DMatrix::from_fn(nm, nm, |r, c| {
        let (i, a) = (r / m, r % m);
        let (j, b) = (c / m, c % m);
        let h = if i == j {
            let (pa, pb) = (w.singles[(i, a)], w.singles[(i, b)]);
            w.inv_q[i] * (w.cov[i][(a, b)] - delta * rest[i] * (pa * pb))
        } else {
            delta * (g[r] * g[c])
        };
        beta * h
    })
}

/// Hessian of `f`, indexed by flat row-major entries `i·m + a`.
pub fn hessian(x: &DMatrix<f64>, params: &SmoothParams) -> Result<DMatrix<f64>> {
    let w = weight_tables(x, params)?;
    Ok(hessian_from(&w, params))
}

/// Closed-form bound `β (k/m)(m - k + a_n (2m - 1) k δ)`, `a_n = 1 - 1/n`, on
/// the absolute off-diagonal Hessian mass.
pub fn hessian_offdiag_bound(params: &SmoothParams, n: usize, m: usize) -> f64 {
    let (k, mf) = (params.k as f64, m as f64);
    let a_n = 1.0 - 1.0 / n as f64;
    params.beta * (k / mf) * (mf - k + a_n * (2.0 * mf - 1.0) * k * params.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsSumReport {
    pub sum: f64,
    pub bound: f64,
}

/// `Σ_{(i,a) ≠ (j,b)} |∂²f / ∂x_{i,a} ∂x_{j,b}|` with its closed-form bound.
pub fn hessian_abs_offdiag_sum(x: &DMatrix<f64>, params: &SmoothParams) -> Result<AbsSumReport> {
    let h = hessian(x, params)?;
    let mut sum = 0.0;
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            if r != c {
                sum += h[(r, c)].abs();
            }
        }
    }
    Ok(AbsSumReport {
        sum,
        bound: hessian_offdiag_bound(params, x.nrows(), x.ncols()),
    })
}

/// Hessian of `g ∘ f` given `g'(f(x))` and `g''(f(x))`.
pub fn composed_hessian(x: &DMatrix<f64>, params: &SmoothParams, g1: f64, g2: f64) -> Result<DMatrix<f64>> {
    let w = weight_tables(x, params)?;
    let m = x.ncols();
    let nm = x.len();
    let g: Vec<f64> = (0..nm).map(|r| w.grad(r / m, r % m)).collect();
    let mut h = hessian_from(&w, params);
    for r in 0..nm {
        for c in 0..nm {
            h[(r, c)] = g2 * g[r] * g[c] + g1 * h[(r, c)];
        }
    }
    Ok(h)
}

/// The stated bound `k² ‖g''‖ + 2βk(1 + δk) ‖g'‖` on the full absolute
/// Hessian mass of `g ∘ f`, diagonal included.
pub fn composed_hessian_bound(params: &SmoothParams, g1_sup: f64, g2_sup: f64) -> f64 {
    let k = params.k as f64;
    k * k * g2_sup + 2.0 * params.beta * k * (1.0 + params.delta * k) * g1_sup
}

/// `Σ |H|` over all entries of `g ∘ f`, with the stated bound evaluated at
/// `|g'(f)|`, `|g''(f)|`.
pub fn composed_hessian_abs_sum(x: &DMatrix<f64>, params: &SmoothParams, g1: f64, g2: f64) -> Result<AbsSumReport> {
    let h = composed_hessian(x, params, g1, g2)?;
    Ok(AbsSumReport {
        sum: h.iter().map(|v| v.abs()).sum(),
        bound: composed_hessian_bound(params, g1.abs(), g2.abs()),
    })
}

/// `(1/β) log C(m,k)` and `(1/(βδ)) log n`: the lower and upper sandwich gaps.
pub fn sandwich_gaps(params: &SmoothParams, n: usize, m: usize) -> (f64, f64) {
    let lc = statrs::function::factorial::ln_binomial(m as u64, params.k as u64);
    (lc / params.beta, (n as f64).ln() / (params.beta * params.delta))
}
