//! Closed-form comparison bounds and the order-statistic lift.
//!
//! All bounds are returned as [`BoundReport`]s: the value plus the named
//! summands it is built from, so the CLI can show where the mass sits.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::factorial::ln_binomial;

use crate::covlab::{increment_variance, GaussianMatrixSpec, MatrixShape};
use crate::error::{domain, Error, Result};
use crate::softminmax::SmoothParams;

/// Cap on `β` when the optimizer runs off to infinity (`k = m`).
pub const BETA_CAP: f64 = 1e6;

/// Default cap on the number of rows of an order-statistic lift.
pub const LIFT_ROW_CAP: u64 = 1_000_000;

/// Dense covariance entries a lift may allocate (`(rows·h)²`), about 2 GiB.
const LIFT_COV_ENTRY_CAP: u128 = 1 << 28;

/// Tolerance of the entrywise comparison in [`comparison_condition`],
/// relative to the largest increment variance involved.
pub const COMPARISON_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub value: f64,
    pub components: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_used: Option<SmoothParams>,
}

impl BoundReport {
    fn new(value: f64, components: &[(&str, f64)]) -> Self {
        Self {
            value,
            components: components.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            params_used: None,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `log C(m, k)` via log-gamma.
pub fn ln_choose(m: usize, k: usize) -> f64 {
    if k == 0 || k == m {
        return 0.0;
    }
    ln_binomial(m as u64, k as u64)
}

fn check_nmk(n: usize, m: usize, k: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return domain(format!("n and m must be positive, got n={n} m={m}"));
    }
    if k == 0 || k > m {
        return domain(format!("k must lie in 1..={m}, got {k}"));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return domain(format!("gamma must be a nonnegative real, got {gamma}"));
    }
    Ok(())
}

/// Bound on `|E min_i Σ top-k(X_i) - E min_i Σ top-k(Y_i)|` for Gaussian
/// matrices whose increment variances differ by at most `gamma`:
///
/// `√(γk) [√(k a_n (2 - 1/m) log n) + √((1 - k/m) log C(m,k))]`, `a_n = 1 - 1/n`.
///
/// Components: `rows` and `columns` (the two summands, each including the
/// `√(γk)` prefactor). `params_used` carries the optimal smoothing when
/// `γ > 0`.
pub fn gordon_bound(n: usize, m: usize, k: usize, gamma: f64) -> Result<BoundReport> {
    check_nmk(n, m, k)?;
    check_gamma(gamma)?;
    let (nf, mf, kf) = (n as f64, m as f64, k as f64);
    let a_n = 1.0 - 1.0 / nf;
    let pre = (gamma * kf).sqrt();
    let rows = pre * (kf * a_n * (2.0 - 1.0 / mf) * nf.ln()).sqrt();
    let columns = pre * ((1.0 - kf / mf) * ln_choose(m, k)).sqrt();
    let mut report = BoundReport::new(rows + columns, &[("rows", rows), ("columns", columns)]);
    if gamma > 0.0 {
        report.params_used = Some(optimal_smooth_params(n, m, k, gamma)?);
    }
    Ok(report)
}

/// The smoothing `(β, δ)` that minimizes the pre-optimization bound
/// [`smoothing_objective`].
///
/// Degenerate branches: `n = 1` fixes `δ = 1` (the row soft-min is trivial);
/// `k = m` caps `β` at [`BETA_CAP`] and takes the `δ` that minimizes the
/// objective at that `β`, which attains the bound for any `β`.
pub fn optimal_smooth_params(n: usize, m: usize, k: usize, gamma: f64) -> Result<SmoothParams> {
    check_nmk(n, m, k)?;
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Err(Error::Degenerate("gamma = 0: the bound is 0 and no smoothing is needed".into()));
    }
    let (nf, mf, kf) = (n as f64, m as f64, k as f64);
    let a_n = 1.0 - 1.0 / nf;
    let lc = ln_choose(m, k);
    let beta = if k < m {
        2.0 * (mf * lc / ((mf - kf) * kf * gamma)).sqrt()
    } else {
        BETA_CAP
    };
    let delta = if n == 1 {
        1.0
    } else if k < m {
        ((mf - kf) * nf.ln() / (kf * a_n * (2.0 * mf - 1.0) * lc)).sqrt()
    } else {
        let slope = a_n * (2.0 * mf - 1.0) * kf * kf * gamma / (4.0 * mf);
        (nf.ln() / slope).sqrt() / beta
    };
    SmoothParams::new(beta, delta, k)
}

/// `(βk/(4m))(m - k + a_n(2m - 1)kδ)γ + log n/(βδ) + log C(m,k)/β`.
pub fn smoothing_objective(n: usize, m: usize, params: &SmoothParams, gamma: f64) -> f64 {
    let (nf, mf, kf) = (n as f64, m as f64, params.k as f64);
    let (beta, delta) = (params.beta, params.delta);
    let a_n = 1.0 - 1.0 / nf;
    beta * kf / (4.0 * mf) * (mf - kf + a_n * (2.0 * mf - 1.0) * kf * delta) * gamma
        + nf.ln() / (beta * delta)
        + ln_choose(m, params.k) / beta
}

/// Bound for the `h`-th order statistic of a `d`-vector:
/// `√γ (√(2 log C(d,h)) + √(log h))`.
///
/// Components: `binomial` and `log_h` sum to the value; `explicit` is the
/// weaker closed form `√γ (√(2h(1 + log(d/h))) + √(log h))`, reported for
/// comparison only.
pub fn order_stat_bound(d: usize, h: usize, gamma: f64) -> Result<BoundReport> {
    if h == 0 || h > d {
        return domain(format!("h must lie in 1..={d}, got {h}"));
    }
    check_gamma(gamma)?;
    let (df, hf) = (d as f64, h as f64);
    let sg = gamma.sqrt();
    let binomial = sg * (2.0 * ln_choose(d, h)).sqrt();
    let log_h = sg * hf.ln().sqrt();
    let explicit = sg * ((2.0 * hf * (1.0 + (df / hf).ln())).sqrt() + hf.ln().sqrt());
    Ok(BoundReport::new(
        binomial + log_h,
        &[("binomial", binomial), ("log_h", log_h), ("explicit", explicit)],
    ))
}

/// All `h`-subsets of `0..d` in lexicographic order.
pub fn h_subsets(d: usize, h: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if h > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..h).collect();
    loop {
        out.push(cur.clone());
        // rightmost position that can still advance
        let Some(pos) = (0..h).rev().find(|&i| cur[i] < d - h + i) else {
            return out;
        };
        cur[pos] += 1;
        for i in (pos + 1)..h {
            cur[i] = cur[i - 1] + 1;
        }
    }
}

fn lift_rows(d: usize, h: usize, cap: u64) -> Result<u64> {
    if h == 0 || h > d {
        return domain(format!("h must lie in 1..={d}, got {h}"));
    }
    let rows = ln_choose(d, h).exp().round();
    if rows > cap as f64 {
        return Err(Error::Resource(format!(
            "lift of a {d}-vector at h = {h} needs C({d},{h}) ≈ {rows:.3e} rows, cap is {cap}"
        )));
    }
    Ok(rows as u64)
}

/// The `C(d,h) × h` matrix whose rows are the coordinates of `x` on each
/// `h`-subset. Its min-max equals the `h`-th smallest entry of `x`.
pub fn lift_vector(x: &[f64], h: usize) -> Result<DMatrix<f64>> {
    let rows = lift_rows(x.len(), h, LIFT_ROW_CAP)? as usize;
    let subs = h_subsets(x.len(), h);
    debug_assert_eq!(subs.len(), rows);
    Ok(DMatrix::from_fn(rows, h, |r, c| x[subs[r][c]]))
}

/// Pulls a `1 × d` Gaussian law back along the lift index map.
pub fn order_stat_lift(spec: &GaussianMatrixSpec, h: usize) -> Result<GaussianMatrixSpec> {
    order_stat_lift_capped(spec, h, LIFT_ROW_CAP)
}

pub fn order_stat_lift_capped(spec: &GaussianMatrixSpec, h: usize, row_cap: u64) -> Result<GaussianMatrixSpec> {
    let shape = spec.shape();
    if shape.n != 1 {
        return Err(Error::ShapeMismatch {
            expected: "a single-row (vector) law".into(),
            got: shape.to_string(),
        });
    }
    let d = shape.m;
    let rows = lift_rows(d, h, row_cap)?;
    let dim = rows as u128 * h as u128;
    if dim * dim > LIFT_COV_ENTRY_CAP {
        return Err(Error::Resource(format!(
            "lifted covariance would have {dim}² dense entries"
        )));
    }
    let index: Vec<usize> = h_subsets(d, h).into_iter().flatten().collect();
    let mean: Vec<f64> = index.iter().map(|&c| spec.mean()[c]).collect();
    let cov = spec.cov();
    let lifted = DMatrix::from_fn(index.len(), index.len(), |a, b| cov[(index[a], index[b])]);
    GaussianMatrixSpec::new(MatrixShape::new(rows as usize, h)?, mean, lifted)
}

/// A pair of flat entries where the monotone-comparison hypothesis fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonViolation {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub same_row: bool,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonOutcome {
    pub holds: bool,
    pub witness: Option<ComparisonViolation>,
}

/// Checks `γ^X ≤ γ^Y` on same-row pairs and `γ^X ≥ γ^Y` on cross-row pairs,
/// scanning pairs `a < b` in flat order and stopping at the first failure.
/// Under this condition `E min max X ≤ E min max Y`-type comparisons hold.
pub fn comparison_condition(x: &GaussianMatrixSpec, y: &GaussianMatrixSpec) -> Result<ComparisonOutcome> {
    let shape = x.shape();
    shape.check_same(&y.shape())?;
    let nm = shape.len();
    for a in 0..nm {
        for b in (a + 1)..nm {
            let gx = increment_variance(x, a, b)?;
            let gy = increment_variance(y, a, b)?;
            let tol = COMPARISON_TOL * (1.0 + gx.max(gy));
            let same_row = a / shape.m == b / shape.m;
            let bad = if same_row { gx > gy + tol } else { gx + tol < gy };
            if bad {
                return Ok(ComparisonOutcome {
                    holds: false,
                    witness: Some(ComparisonViolation {
                        a: shape.pair(a),
                        b: shape.pair(b),
                        same_row,
                        gamma_x: gx,
                        gamma_y: gy,
                    }),
                });
            }
        }
    }
    Ok(ComparisonOutcome { holds: true, witness: None })
}

fn check_delta_hat(delta_hat: f64) -> Result<()> {
    if !(delta_hat.is_finite() && delta_hat >= 0.0) {
        return domain(format!("Delta must be a nonnegative real, got {delta_hat}"));
    }
    Ok(())
}

/// Shape value (constants dropped) of the general Kolmogorov-distance bound:
/// `max(1, α², log p, log(1/Δ))^{1/3} n^{2/3} (log nm)^{1/3} Δ^{1/3}` with
/// `p = n / log(nm)`.
pub fn theorem3a_bound(delta_hat: f64, alpha_nm: f64, n: usize, m: usize) -> Result<BoundReport> {
    check_delta_hat(delta_hat)?;
    if !alpha_nm.is_finite() {
        return domain("alpha must be finite");
    }
    if n == 0 || m == 0 || n * m < 2 {
        return domain(format!("need n·m ≥ 2, got n={n} m={m}"));
    }
    let nf = n as f64;
    let log_nm = (nf * m as f64).ln();
    let log_p = (nf / log_nm).ln();
    let log_inv_delta = if delta_hat > 0.0 { -delta_hat.ln() } else { f64::INFINITY };
    let max_term = 1f64.max(alpha_nm * alpha_nm).max(log_p).max(log_inv_delta);
    let scale = nf.powf(2.0 / 3.0) * log_nm.cbrt();
    let value = if delta_hat == 0.0 { 0.0 } else { max_term.cbrt() * scale * delta_hat.cbrt() };
    Ok(BoundReport::new(
        value,
        &[
            ("max_term", max_term),
            ("dimension_factor", scale),
            ("delta_factor", delta_hat.cbrt()),
        ],
    ))
}

/// Shape value (constants dropped) of the bound under a uniform lower
/// variance bound: `n^{2/3} (log m)^{1/3} (log nm)^{1/3} Δ^{1/3}`.
pub fn theorem3b_bound(delta_hat: f64, n: usize, m: usize) -> Result<BoundReport> {
    check_delta_hat(delta_hat)?;
    if n == 0 || m == 0 {
        return domain(format!("n and m must be positive, got n={n} m={m}"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let scale = nf.powf(2.0 / 3.0) * mf.ln().cbrt() * (nf * mf).ln().cbrt();
    let value = scale * delta_hat.cbrt();
    Ok(BoundReport::new(
        value,
        &[("dimension_factor", scale), ("delta_factor", delta_hat.cbrt())],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(h_subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(h_subsets(4, 4), vec![vec![0, 1, 2, 3]]);
        assert_eq!(h_subsets(5, 1).len(), 5);
        assert_eq!(h_subsets(10, 4).len(), 210);
    }

    #[test]
    fn lift_example() {
        let l = lift_vector(&[5.0, 1.0, 3.0], 2).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 5.0, 3.0, 1.0, 3.0]));
    }

    #[test]
    fn lift_cap_is_enforced() {
        let spec = GaussianMatrixSpec::iid(MatrixShape::new(1, 40).unwrap(), 1.0).unwrap();
        assert!(matches!(order_stat_lift(&spec, 20), Err(Error::Resource(_))));
        assert!(matches!(order_stat_lift_capped(&spec, 2, 10), Err(Error::Resource(_))));
    }

    #[test]
    fn degenerate_params() {
        assert!(matches!(optimal_smooth_params(3, 4, 2, 0.0), Err(Error::Degenerate(_))));
        let p = optimal_smooth_params(4, 3, 3, 1.0).unwrap();
        assert_eq!(p.beta, BETA_CAP);
        let obj = smoothing_objective(4, 3, &p, 1.0);
        let g = gordon_bound(4, 3, 3, 1.0).unwrap().value;
        assert!((obj - g).abs() <= 1e-9 * g);
    }
}
