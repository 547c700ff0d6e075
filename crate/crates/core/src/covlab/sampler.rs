use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::rng::{collect_reps, LabRng, SeedSpec};
use super::{GaussianMatrixSpec, MatrixShape};
use crate::error::Result;

/// Anything that draws random `n × m` matrices into a row-major buffer.
pub trait MatrixSampler: Sync {
    fn shape(&self) -> MatrixShape;

    /// Writes one draw into `out` (length `nm`, row-major). `scratch` is a
    /// reusable work buffer owned by the caller.
    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]);

    /// Draws `reps` matrices and reduces each one with `stat`, in
    /// replication order.
    fn draw_statistics<T, F>(&self, reps: usize, seed: &SeedSpec, stat: F) -> Vec<T>
    where
        Self: Sized,
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let nm = self.shape().len();
        super::run_blocks(reps, seed, |rng, range| {
            let mut scratch = Vec::new();
            let mut buf = vec![0.0; nm];
            range
                .map(|_| {
                    self.draw(rng, &mut scratch, &mut buf);
                    stat(&buf)
                })
                .collect::<Vec<T>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

enum FactorRows {
    Dense { rank: usize, values: Vec<f64> },
    Sparse { row_ptr: Vec<usize>, cols: Vec<usize>, values: Vec<f64> },
}

/// Draws `mean + F z` with `F` the unpivoted Cholesky factor restricted to
/// its rank. Factors that are mostly zero are stored row-compressed.
pub struct GaussianSampler {
    shape: MatrixShape,
    mean: Vec<f64>,
    rank: usize,
    rows: FactorRows,
}

impl GaussianSampler {
    pub fn new(spec: &GaussianMatrixSpec) -> Self {
        let f = spec.factor().unpivoted();
        let (nm, rank) = (f.nrows(), f.ncols());
        let nnz = f.iter().filter(|v| **v != 0.0).count();
        let rows = if rank > 0 && nnz * 4 < nm * rank {
            let mut row_ptr = Vec::with_capacity(nm + 1);
            let mut cols = Vec::with_capacity(nnz);
            let mut values = Vec::with_capacity(nnz);
            row_ptr.push(0);
            for i in 0..nm {
                for c in 0..rank {
                    let v = f[(i, c)];
                    if v != 0.0 {
                        cols.push(c);
                        values.push(v);
                    }
                }
                row_ptr.push(cols.len());
            }
            FactorRows::Sparse { row_ptr, cols, values }
        } else {
            let mut values = Vec::with_capacity(nm * rank);
            for i in 0..nm {
                for c in 0..rank {
                    values.push(f[(i, c)]);
                }
            }
            FactorRows::Dense { rank, values }
        };
        Self {
            shape: spec.shape(),
            mean: spec.mean().to_vec(),
            rank,
            rows,
        }
    }
}

impl MatrixSampler for GaussianSampler {
    fn shape(&self) -> MatrixShape {
        self.shape
    }

    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.extend((0..self.rank).map(|_| -> f64 { StandardNormal.sample(rng) }));
        let z = scratch.as_slice();
        match &self.rows {
            FactorRows::Dense { rank, values } => {
                if *rank == 0 {
                    out.copy_from_slice(&self.mean);
                    return;
                }
                for ((o, mu), row) in out.iter_mut().zip(&self.mean).zip(values.chunks_exact(*rank)) {
                    *o = mu + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            FactorRows::Sparse { row_ptr, cols, values } => {
                for (i, (o, mu)) in out.iter_mut().zip(&self.mean).enumerate() {
                    let span = row_ptr[i]..row_ptr[i + 1];
                    *o = mu
                        + cols[span.clone()]
                            .iter()
                            .zip(&values[span])
                            .map(|(&c, v)| v * z[c])
                            .sum::<f64>();
                }
            }
        }
    }
}

/// `reps` independent draws of the law, deterministic given `seed`.
pub fn sample(spec: &GaussianMatrixSpec, seed: &SeedSpec, reps: usize) -> Result<Vec<DMatrix<f64>>> {
    let sampler = GaussianSampler::new(spec);
    let shape = spec.shape();
    Ok(collect_reps(reps, seed, |rng| {
        let mut scratch = Vec::new();
        let mut buf = vec![0.0; shape.len()];
        sampler.draw(rng, &mut scratch, &mut buf);
        DMatrix::from_row_slice(shape.n, shape.m, &buf)
    }))
}
