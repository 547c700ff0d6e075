//! Elementary symmetric polynomials of positive weights, carried in log
//! domain.
//!
//! With `y_l = exp(logy_l)`, `e_j(y) = Σ_{|L| = j} Π_{l ∈ L} y_l`. The
//! recurrence `e_j^{(t)} = e_j^{(t-1)} + y_t e_{j-1}^{(t-1)}` only ever adds
//! positive terms, so it is evaluated with a two-term log-sum-exp and never
//! subtracts. Leave-out tables come from prefix/suffix convolutions rather
//! than division.

use nalgebra::DMatrix;

use crate::error::{domain, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

#[inline]
pub(crate) fn lse2(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(v)` over a slice; `-inf` for an empty or all-`-inf` input.
pub(crate) fn lse(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let hi = values.clone().into_iter().fold(NEG_INF, f64::max);
    if hi == NEG_INF {
        return NEG_INF;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + values.into_iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
}

/// One step of the DP: fold weight `logy` into `levels` in place.
#[inline]
fn absorb(levels: &mut [f64], logy: f64) {
    for j in (1..levels.len()).rev() {
        levels[j] = lse2(levels[j], logy + levels[j - 1]);
    }
}

fn empty_levels(k: usize) -> Vec<f64> {
    let mut v = vec![NEG_INF; k + 1];
    v[0] = 0.0;
    v
}

/// `log e_j` for `j = 0..=k`.
pub(crate) fn levels(logy: &[f64], k: usize) -> Vec<f64> {
    let mut lv = empty_levels(k);
    for &ly in logy {
        absorb(&mut lv, ly);
    }
    lv
}

/// Prefix tables `pre[t][j] = log e_j(y_0..y_{t-1})` and suffix tables
/// `suf[t][j] = log e_j(y_t..y_{m-1})`, each with `m + 1` rows.
fn prefix_suffix(logy: &[f64], k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = logy.len();
    let mut pre = Vec::with_capacity(m + 1);
    let mut cur = empty_levels(k);
    pre.push(cur.clone());
    for &ly in logy {
        absorb(&mut cur, ly);
        pre.push(cur.clone());
    }
    let mut suf = vec![Vec::new(); m + 1];
    let mut cur = empty_levels(k);
    suf[m] = cur.clone();
    for t in (0..m).rev() {
        absorb(&mut cur, logy[t]);
        suf[t] = cur.clone();
    }
    (pre, suf)
}

/// `log e_j(y without index a)` from prefix/suffix tables.
#[inline]
fn convolve(pre: &[f64], suf: &[f64], j: usize) -> f64 {
    lse((0..=j).map(|r| pre[r] + suf[j - r]))
}

/// `drop[a][j] = log e_j(y without a)` for every `a` and `j = 0..=k`.
pub(crate) fn drop_one(logy: &[f64], k: usize) -> Vec<Vec<f64>> {
    let (pre, suf) = prefix_suffix(logy, k);
    (0..logy.len())
        .map(|a| (0..=k).map(|j| convolve(&pre[a], &suf[a + 1], j)).collect())
        .collect()
}

/// `log e_{k-2}` and `log e_k` of `y` without `a` and `b`, for `a != b`;
/// diagonals (and the low table when `k < 2`) are `-inf`. Runs the
/// prefix/suffix pass once per removed index.
pub(crate) fn drop_two(logy: &[f64], k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = logy.len();
    let mut low = DMatrix::from_element(m, m, NEG_INF);
    let mut top = DMatrix::from_element(m, m, NEG_INF);
    let mut reduced = Vec::with_capacity(m.saturating_sub(1));
    for a in 0..m {
        reduced.clear();
        reduced.extend(logy.iter().enumerate().filter(|(i, _)| *i != a).map(|(_, v)| *v));
        let (pre, suf) = prefix_suffix(&reduced, k);
        for (pos, b) in (0..m).filter(|b| *b != a).enumerate() {
            if k >= 2 {
                low[(a, b)] = convolve(&pre[pos], &suf[pos + 1], k - 2);
            }
            top[(a, b)] = convolve(&pre[pos], &suf[pos + 1], k);
        }
    }
    (low, top)
}

/// Log-domain elementary symmetric polynomial tables for one weight vector.
#[derive(Debug, Clone)]
pub struct LogEsymTable {
    pub k: usize,
    /// `log e_j(y)` for `j = 0..=k`.
    pub levels: Vec<f64>,
    /// `drop_one[a][j] = log e_j(y without a)`, `j = 0..=k`.
    pub drop_one: Vec<Vec<f64>>,
    /// `drop_two[(a, b)] = log e_{k-2}(y without a, b)` for `a != b`
    /// (`-inf` on the diagonal and whenever `k < 2`).
    pub drop_two: DMatrix<f64>,
    /// `drop_two_top[(a, b)] = log e_k(y without a, b)`; complements of
    /// the pair weights.
    pub drop_two_top: DMatrix<f64>,
}

/// Elementary symmetric polynomial tables of `y = exp(logy)` up to degree `k`.
pub fn log_esym(logy: &[f64], k: usize) -> Result<LogEsymTable> {
    if k > logy.len() {
        return domain(format!("degree {k} exceeds vector length {}", logy.len()));
    }
    if logy.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return domain("log-weights must be finite or -inf");
    }
    let (drop_two, drop_two_top) = drop_two(logy, k);
    Ok(LogEsymTable {
        k,
        levels: levels(logy, k),
        drop_one: drop_one(logy, k),
        drop_two,
        drop_two_top,
    })
}
