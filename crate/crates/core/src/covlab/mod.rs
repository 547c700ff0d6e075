//! Gaussian random matrices: shapes, laws, PSD validation and sampling.
//!
//! Entries of an `n × m` matrix are addressed by the flat row-major index
//! `idx(i1, i2) = i1 · m + i2` (zero-based). Every module shares this map;
//! covariances are `nm × nm` matrices in the same order.

mod cholesky;
mod rng;
mod sampler;

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use cholesky::{cholesky_psd, CholeskyFactor, JITTER_LADDER, PSD_EPS};
pub use rng::{collect_reps, run_blocks, LabRng, SeedSpec, BLOCK_REPS};
pub use sampler::{sample, GaussianSampler, MatrixSampler};

/// Increment variances in `[-NEG_CLAMP, 0)` are roundoff and clamp to zero.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixShape {
    pub n: usize,
    pub m: usize,
}

impl MatrixShape {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return domain(format!("matrix shape must be positive, got {n}x{m}"));
        }
        Ok(Self { n, m })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i1: usize, i2: usize) -> usize {
        debug_assert!(i1 < self.n && i2 < self.m);
        i1 * self.m + i2
    }

    #[inline]
    pub fn pair(&self, flat: usize) -> (usize, usize) {
        (flat / self.m, flat % self.m)
    }

    pub(crate) fn check_same(&self, other: &MatrixShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.n, self.m),
                got: format!("{}x{}", other.n, other.m),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for MatrixShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n, self.m)
    }
}

/// Law of a Gaussian random matrix: entry means and the full entry
/// covariance, validated PSD at construction.
#[derive(Debug, Clone)]
pub struct GaussianMatrixSpec {
    shape: MatrixShape,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    factor: Arc<CholeskyFactor>,
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    n: usize,
    m: usize,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl GaussianMatrixSpec {
    /// Validates and stores a law. `cov` must be symmetric up to
    /// `1e-12 · (1 + max|cov|)`; it is then stored exactly symmetric.
    pub fn new(shape: MatrixShape, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let nm = shape.len();
        if mean.len() != nm {
            return Err(Error::ShapeMismatch {
                expected: format!("mean of length {nm}"),
                got: format!("length {}", mean.len()),
            });
        }
        if cov.nrows() != nm || cov.ncols() != nm {
            return Err(Error::ShapeMismatch {
                expected: format!("{nm}x{nm} covariance"),
                got: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return domain("mean and covariance must be finite");
        }
        let scale = cov.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut sym = cov;
        for i in 0..nm {
            if sym[(i, i)] < 0.0 {
                return domain(format!("negative variance at entry {i}"));
            }
            for j in (i + 1)..nm {
                let (a, b) = (sym[(i, j)], sym[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + scale) {
                    return domain(format!("covariance not symmetric at ({i},{j})"));
                }
                let s = 0.5 * (a + b);
                sym[(i, j)] = s;
                sym[(j, i)] = s;
            }
        }
        let factor = cholesky_psd(&sym)?;
        Ok(Self {
            shape,
            mean,
            cov: sym,
            factor: Arc::new(factor),
        })
    }

    /// Independent entries with common variance.
    pub fn iid(shape: MatrixShape, variance: f64) -> Result<Self> {
        let nm = shape.len();
        Self::new(shape, vec![0.0; nm], DMatrix::identity(nm, nm) * variance)
    }

    /// Degenerate law concentrated at `mean`.
    pub fn constant(shape: MatrixShape, mean: Vec<f64>) -> Result<Self> {
        let nm = shape.len();
        Self::new(shape, mean, DMatrix::zeros(nm, nm))
    }

    pub fn shape(&self) -> MatrixShape {
        self.shape
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Same covariance, new mean.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("mean of length {}", self.shape.len()),
                got: format!("length {}", mean.len()),
            });
        }
        Ok(Self {
            mean,
            ..self.clone()
        })
    }

    /// Standard deviations of all entries.
    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.shape.len()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }

    /// Smallest entry standard deviation.
    pub fn sigma_min(&self) -> f64 {
        self.std_devs().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Largest entry standard deviation.
    pub fn sigma_max(&self) -> f64 {
        self.std_devs().into_iter().fold(0.0, f64::max)
    }

    /// Per-row minimum standard deviation.
    pub fn row_sigma_min(&self) -> Vec<f64> {
        let sd = self.std_devs();
        sd.chunks(self.shape.m)
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let nm = self.shape.len();
        let doc = SpecJson {
            n: self.shape.n,
            m: self.shape.m,
            mean: self.mean.clone(),
            cov: (0..nm).map(|i| (0..nm).map(|j| self.cov[(i, j)]).collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecJson = serde_json::from_str(text)?;
        let shape = MatrixShape::new(doc.n, doc.m)?;
        let nm = shape.len();
        if doc.cov.len() != nm || doc.cov.iter().any(|r| r.len() != nm) {
            return Err(Error::ShapeMismatch {
                expected: format!("{nm}x{nm} covariance"),
                got: "ragged or mis-sized cov array".into(),
            });
        }
        let cov = DMatrix::from_fn(nm, nm, |i, j| doc.cov[i][j]);
        Self::new(shape, doc.mean, cov)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_entry(spec: &GaussianMatrixSpec, a: usize) -> Result<()> {
    if a >= spec.shape.len() {
        return domain(format!(
            "entry index {a} out of range for {} matrix",
            spec.shape
        ));
    }
    Ok(())
}

fn increment_from_cov(cov: &DMatrix<f64>, a: usize, b: usize) -> Result<f64> {
    // canonical order keeps the result bitwise symmetric in (a, b)
    let (a, b) = (a.min(b), a.max(b));
    let v = cov[(a, a)] - 2.0 * cov[(a, b)] + cov[(b, b)];
    if v >= 0.0 {
        Ok(v)
    } else if v >= -NEG_CLAMP {
        Ok(0.0)
    } else {
        domain(format!(
            "increment variance {v:e} at ({a},{b}) is negative beyond roundoff"
        ))
    }
}

/// `E((X_a - X_b)^2)` for the centered parts of entries `a` and `b`.
pub fn increment_variance(spec: &GaussianMatrixSpec, a: usize, b: usize) -> Result<f64> {
    check_entry(spec, a)?;
    check_entry(spec, b)?;
    increment_from_cov(&spec.cov, a, b)
}

/// Largest absolute gap between the increment variances of two laws.
pub fn gamma_discrepancy(x: &GaussianMatrixSpec, y: &GaussianMatrixSpec) -> Result<f64> {
    x.shape.check_same(&y.shape)?;
    let nm = x.shape.len();
    let mut gamma = 0.0_f64;
    for a in 0..nm {
        for b in (a + 1)..nm {
            let gx = increment_from_cov(&x.cov, a, b)?;
            let gy = increment_from_cov(&y.cov, a, b)?;
            gamma = gamma.max((gx - gy).abs());
        }
    }
    Ok(gamma)
}
