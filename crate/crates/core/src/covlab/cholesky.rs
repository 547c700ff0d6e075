//! Pivoted Cholesky factorization of positive semidefinite matrices.
//!
//! Symmetric pivoting picks the largest remaining Schur-complement diagonal at
//! every step, so rank-deficient covariances factor cleanly: the loop stops as
//! soon as the remaining diagonal is numerically zero and the rank is recorded.
//! Inputs that are indefinite at the first attempt are retried with a small
//! diagonal shift from a fixed ladder before giving up.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative PSD tolerance: the most negative admissible pivot is
/// `-PSD_EPS * trace(cov)`.
pub const PSD_EPS: f64 = 1e-10;

/// Jitter ladder, in units of `trace(cov) / dim`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Result of [`cholesky_psd`].
///
/// `lower` is lower triangular in pivoted order: with `P` the permutation
/// matrix sending pivot position `i` to original index `perm[i]`,
/// `P · lower · lowerᵀ · Pᵀ` reproduces the (jittered) input.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    pub perm: Vec<usize>,
    pub rank: usize,
    /// Diagonal shift actually added, in absolute units.
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// The `dim × rank` factor `F` in the original index order, `F Fᵀ = cov`.
    pub fn unpivoted(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut f = DMatrix::zeros(dim, self.rank);
        for (pos, &orig) in self.perm.iter().enumerate() {
            for c in 0..self.rank.min(pos + 1) {
                f[(orig, c)] = self.lower[(pos, c)];
            }
        }
        f
    }

    /// `F Fᵀ` in the original index order.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let f = self.unpivoted();
        &f * f.transpose()
    }
}

struct Attempt {
    lower: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

/// Pivoted Cholesky with diagonal jitter escalation.
///
/// The first ladder step that factors without a pivot below
/// `-PSD_EPS * trace` wins. If none does, the most negative pivot of the
/// unjittered attempt is reported.
pub fn cholesky_psd(cov: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let dim = cov.nrows();
    if cov.ncols() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("square matrix with {dim} rows"),
            got: format!("{}x{}", cov.nrows(), cov.ncols()),
        });
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("covariance has non-finite entries".into()));
    }
    if dim == 0 {
        return Ok(CholeskyFactor {
            lower: DMatrix::zeros(0, 0),
            perm: Vec::new(),
            rank: 0,
            jitter: 0.0,
        });
    }
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            a[i * dim + j] = 0.5 * (cov[(i, j)] + cov[(j, i)]);
        }
    }
    let trace: f64 = (0..dim).map(|i| a[i * dim + i]).sum();
    let unit = trace.abs() / dim as f64;

    let mut first_failure = None;
    for &lambda in JITTER_LADDER.iter() {
        let shift = lambda * unit;
        match factor_once(&a, dim, shift) {
            Ok(att) => {
                let lower = DMatrix::from_row_slice(dim, dim, &att.lower);
                return Ok(CholeskyFactor {
                    lower,
                    perm: att.perm,
                    rank: att.rank,
                    jitter: shift,
                });
            }
            Err(pivot) => {
                if first_failure.is_none() {
                    first_failure = Some(pivot);
                }
            }
        }
    }
    Err(Error::NotPsd {
        pivot: first_failure.unwrap_or(f64::NAN),
    })
}

/// One factorization pass on `a + shift·I`. On failure returns the most
/// negative pivot encountered.
fn factor_once(a: &[f64], dim: usize, shift: f64) -> std::result::Result<Attempt, f64> {
    let entry = |i: usize, j: usize| a[i * dim + j] + if i == j { shift } else { 0.0 };
    let trace: f64 = (0..dim).map(|i| entry(i, i)).sum();
    let psd_tol = PSD_EPS * trace.abs().max(f64::MIN_POSITIVE);
    let max_diag = (0..dim).map(|i| entry(i, i)).fold(0.0_f64, f64::max);
    let zero_tol = (dim as f64) * f64::EPSILON * max_diag;

    let mut perm: Vec<usize> = (0..dim).collect();
    let mut diag: Vec<f64> = (0..dim).map(|i| entry(i, i)).collect();
    let mut l = vec![0.0; dim * dim];
    let mut rank = dim;

    for j in 0..dim {
        let (p, dmax) = (j..dim)
            .map(|i| (i, diag[i]))
            .fold((j, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if dmax < -psd_tol {
            return Err(dmax);
        }
        if dmax <= zero_tol {
            rank = j;
            break;
        }
        if p != j {
            perm.swap(j, p);
            diag.swap(j, p);
            for c in 0..j {
                l.swap(j * dim + c, p * dim + c);
            }
        }
        let pivot = dmax.sqrt();
        l[j * dim + j] = pivot;
        let pj = perm[j];
        for i in (j + 1)..dim {
            let dot: f64 = (0..j).map(|c| l[i * dim + c] * l[j * dim + c]).sum();
            let v = (entry(perm[i], pj) - dot) / pivot;
            l[i * dim + j] = v;
            diag[i] -= v * v;
        }
    }

    if rank < dim {
        // The trailing Schur complement must vanish within tolerance; a zero
        // diagonal with a nonzero off-diagonal entry is an indefinite 2×2 minor.
        let mut worst = 0.0_f64;
        for i in rank..dim {
            if diag[i] < -psd_tol {
                worst = worst.min(diag[i]);
            }
            for k in (i + 1)..dim {
                let dot: f64 = (0..rank).map(|c| l[i * dim + c] * l[k * dim + c]).sum();
                let s = entry(perm[i], perm[k]) - dot;
                if s.abs() > psd_tol {
                    let mid = 0.5 * (diag[i] + diag[k]);
                    let half = 0.5 * (diag[i] - diag[k]);
                    let eig = mid - (half * half + s * s).sqrt();
                    worst = worst.min(eig);
                }
            }
        }
        if worst < 0.0 {
            return Err(worst);
        }
        for i in rank..dim {
            for c in rank..=i {
                l[i * dim + c] = 0.0;
            }
        }
    }
    Ok(Attempt { lower: l, perm, rank })
}
