//! Lead-lag statistics of asynchronously observed Brownian paths.
//!
//! `Z = (B₁, B₂, B̃₁, B̃₂)` is a 4-dimensional Brownian motion on the real line
//! with increment correlation `corr`. `B` is observed on the grid
//! `{iT/(bN)}`, the lagged process `W^θ(t) = B̃(t − θ)` on `{jT/(wN)}`, and
//!
//! ```text
//! U_c(θ) = Σ_{i,j} ΔB_c(i) · ΔW^θ_c(j) · 1{I_i ∩ J_j ≠ ∅}
//! ```
//!
//! with `I_i = ((i−1)T/(bN), iT/(bN)]` and `J_j = ((j−1)T/(wN), jT/(wN)]`.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covlab::{cholesky_psd, GaussianMatrixSpec, GaussianSampler, LabRng, MatrixSampler, MatrixShape, SeedSpec};
use crate::error::{domain, Error, Result};
use crate::montecarlo::{accumulate, ks_distance, minmax_sample};

fn default_t() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_moment_reps() -> usize {
    100_000
}

fn identity4() -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    c
}

/// Experiment configuration. Coordinates of `corr` are ordered
/// `(B₁, B₂, B̃₁, B̃₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadLagConfig {
    #[serde(rename = "T", default = "default_t")]
    pub horizon: f64,
    pub b: f64,
    pub w: f64,
    #[serde(rename = "N")]
    pub resolution: usize,
    /// Number of lags used when `theta_grid` is absent.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(default = "identity4")]
    pub corr: [[f64; 4]; 4],
    /// Requires `B_c` and `B̃_c` to be independent (`corr[0][2] = corr[1][3] = 0`).
    #[serde(default = "default_true")]
    pub null_structure: bool,
    /// Replications used to estimate the matched column covariances.
    #[serde(default = "default_moment_reps")]
    pub moment_reps: usize,
}

impl LeadLagConfig {
    /// Null-structure configuration with `m` equispaced lags.
    pub fn new(horizon: f64, b: f64, w: f64, resolution: usize, m: usize) -> Self {
        Self {
            horizon,
            b,
            w,
            resolution,
            m: Some(m),
            theta_grid: None,
            corr: identity4(),
            null_structure: true,
            moment_reps: default_moment_reps(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_resolution(&self, resolution: usize) -> Self {
        Self { resolution, ..self.clone() }
    }

    /// `⌊bN⌋`, the number of `B` intervals.
    pub fn b_intervals(&self) -> usize {
        (self.b * self.resolution as f64).floor() as usize
    }

    /// `⌊wN⌋`, the number of `W` intervals.
    pub fn w_intervals(&self) -> usize {
        (self.w * self.resolution as f64).floor() as usize
    }

    /// The lag grid: explicit, or `m` equispaced lags in `[−T/4, T/4]`.
    pub fn thetas(&self) -> Result<Vec<f64>> {
        match (&self.theta_grid, self.m) {
            (Some(g), Some(m)) if g.len() != m => domain(format!("theta_grid has {} lags but m = {m}", g.len())),
            (Some(g), _) => Ok(g.clone()),
            (None, Some(m)) if m >= 2 => {
                let q = self.horizon / 4.0;
                Ok((0..m).map(|k| -q + 2.0 * q * k as f64 / (m - 1) as f64).collect())
            }
            (None, Some(m)) => domain(format!("need at least two lags, got m = {m}")),
            (None, None) => domain("give either m or theta_grid"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon T must be positive, got {}", self.horizon));
        }
        if !(self.b > 0.0 && self.b.is_finite() && self.w > 0.0 && self.w.is_finite()) {
            return domain(format!("grid densities must be positive, got b = {}, w = {}", self.b, self.w));
        }
        if self.b_intervals() == 0 || self.w_intervals() == 0 {
            return domain(format!(
                "grids are empty at N = {}: need bN ≥ 1 and wN ≥ 1 (b = {}, w = {})",
                self.resolution, self.b, self.w
            ));
        }
        if self.b_intervals() > u32::MAX as usize || self.w_intervals() > u32::MAX as usize {
            return Err(Error::Resource("grids above 2^32 intervals".into()));
        }
        let thetas = self.thetas()?;
        if thetas.len() < 2 {
            return domain("need at least two lags");
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return domain("lags must be finite");
        }
        let c = &self.corr;
        #[allow(clippy::needless_range_loop)]
        for i in 0..4 {
            if (c[i][i] - 1.0).abs() > 1e-12 {
                return domain(format!("corr must have unit diagonal, got corr[{i}][{i}] = {}", c[i][i]));
            }
            for j in 0..4 {
                if !c[i][j].is_finite() || (c[i][j] - c[j][i]).abs() > 1e-12 {
                    return domain(format!("corr must be symmetric at ({i},{j})"));
                }
            }
        }
        if self.null_structure && (c[0][2] != 0.0 || c[1][3] != 0.0) {
            return domain("null structure requires corr[0][2] = corr[1][3] = 0; set null_structure = false to allow lead-lag correlation");
        }
        cholesky_psd(&self.corr_matrix())?;
        if self.moment_reps == 0 {
            return domain("moment_reps must be positive");
        }
        Ok(())
    }

    fn corr_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| 0.5 * (self.corr[i][j] + self.corr[j][i]))
    }
}

/// Exact sign of `i·x − j·y` for positive finite `x`, `y` and `i, j < 2³²`.
fn cmp_scaled(i: u64, x: f64, j: u64, y: f64) -> Ordering {
    match (i, j) {
        (0, 0) => return Ordering::Equal,
        (0, _) => return Ordering::Less,
        (_, 0) => return Ordering::Greater,
        _ => {}
    }
    let (mx, ex) = decode(x);
    let (my, ey) = decode(y);
    let (mut a, mut b) = (i as u128 * mx as u128, j as u128 * my as u128);
    let gap = ex - ey;
    if gap > 40 {
        return Ordering::Greater;
    }
    if gap < -40 {
        return Ordering::Less;
    }
    if gap >= 0 {
        a <<= gap;
    } else {
        b <<= -gap;
    }
    a.cmp(&b)
}

/// `x = mantissa · 2^exp` with a normalized 53-bit mantissa.
fn decode(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        // subnormal: renormalize
        let shift = frac.leading_zeros() as i32 - 11;
        (frac << shift, -1074 - shift)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// `I_i ∩ J_j ≠ ∅` (1-based) for densities `b`, `w`: `(i−1)w < jb` and
/// `(j−1)b < iw`, compared exactly.
pub fn intervals_overlap(i: usize, j: usize, b: f64, w: f64) -> bool {
    let (i, j) = (i as u64, j as u64);
    cmp_scaled(i - 1, w, j, b) == Ordering::Less && cmp_scaled(j - 1, b, i, w) == Ordering::Less
}

/// All overlapping `(i, j)` pairs (1-based) in lexicographic order, by a
/// merge of the two interval partitions.
pub fn overlap_pairs(nb: usize, nw: usize, b: f64, w: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(nb + nw);
    let (mut i, mut j) = (1, 1);
    while i <= nb && j <= nw {
        debug_assert!(intervals_overlap(i, j, b, w));
        out.push((i, j));
        // right ends i/b and j/w: compare i·w with j·b
        match cmp_scaled(i as u64, w, j as u64, b) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Precomputed simulation layout shared by all replications of a config.
#[derive(Debug, Clone)]
struct Plan {
    resolution: usize,
    b: f64,
    w: f64,
    thetas: Vec<f64>,
    times_b: Vec<f64>,
    times_w: Vec<f64>,
    /// Sorted union of `times_b`, every `times_w − θ`, and 0.
    union: Vec<f64>,
    sqrt_dt: Vec<f64>,
    zero_at: usize,
    idx_b: Vec<usize>,
    /// `idx_w[θ][j]`: union index of `times_w[j] − θ`.
    idx_w: Vec<Vec<usize>>,
    /// Lower factor of `corr`, `4 × rank`, row-major.
    factor: Vec<f64>,
    rank: usize,
    pairs: Vec<(usize, usize)>,
}

impl Plan {
    fn new(cfg: &LeadLagConfig) -> Result<Self> {
        cfg.validate()?;
        let thetas = cfg.thetas()?;
        let (nb, nw) = (cfg.b_intervals(), cfg.w_intervals());
        let n = cfg.resolution as f64;
        let step_b = cfg.horizon / (cfg.b * n);
        let step_w = cfg.horizon / (cfg.w * n);
        let times_b: Vec<f64> = (0..=nb).map(|i| i as f64 * step_b).collect();
        let times_w: Vec<f64> = (0..=nw).map(|j| j as f64 * step_w).collect();
        let mut union = times_b.clone();
        union.push(0.0);
        for th in &thetas {
            union.extend(times_w.iter().map(|t| t - th));
        }
        union.sort_by(f64::total_cmp);
        union.dedup();
        let find = |t: f64| union.binary_search_by(|u| u.total_cmp(&t)).expect("time on the union grid");
        let idx_b = times_b.iter().map(|t| find(*t)).collect();
        let idx_w = thetas.iter().map(|th| times_w.iter().map(|t| find(t - th)).collect()).collect();
        let sqrt_dt = union.windows(2).map(|p| (p[1] - p[0]).sqrt()).collect();
        let f = cholesky_psd(&cfg.corr_matrix())?.unpivoted();
        let rank = f.ncols();
        let factor = (0..4).flat_map(|r| (0..rank).map(move |c| (r, c))).map(|(r, c)| f[(r, c)]).collect();
        Ok(Self {
            resolution: cfg.resolution,
            b: cfg.b,
            w: cfg.w,
            zero_at: find(0.0),
            thetas,
            times_b,
            times_w,
            union,
            sqrt_dt,
            idx_b,
            idx_w,
            factor,
            rank,
            pairs: overlap_pairs(nb, nw, cfg.b, cfg.w),
        })
    }

    /// Fills `paths[c * len + k]` with coordinate `c` at union time `k`,
    /// pinned to zero at time 0.
    fn simulate(&self, rng: &mut LabRng, paths: &mut Vec<f64>) {
        let len = self.union.len();
        paths.clear();
        paths.resize(4 * len, 0.0);
        let mut z = [0.0; 4];
        for (k, s) in self.sqrt_dt.iter().enumerate() {
            for v in z.iter_mut().take(self.rank) {
                *v = StandardNormal.sample(rng);
            }
            for c in 0..4 {
                let row = &self.factor[c * self.rank..(c + 1) * self.rank];
                let dz: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                paths[c * len + k + 1] = paths[c * len + k] + s * dz;
            }
        }
        for c in 0..4 {
            let origin = paths[c * len + self.zero_at];
            paths[c * len..(c + 1) * len].iter_mut().for_each(|v| *v -= origin);
        }
    }

    /// `U_c(θ_t)` for `c ∈ {0, 1}` from simulated paths.
    fn u(&self, paths: &[f64], t: usize, c: usize) -> f64 {
        let len = self.union.len();
        let bp = &paths[c * len..(c + 1) * len];
        let wp = &paths[(c + 2) * len..(c + 3) * len];
        let (ib, iw) = (&self.idx_b, &self.idx_w[t]);
        self.pairs
            .iter()
            .map(|&(i, j)| (bp[ib[i]] - bp[ib[i - 1]]) * (wp[iw[j]] - wp[iw[j - 1]]))
            .sum()
    }
}

/// One simulated replication, restricted to the observation grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GridObservation {
    pub resolution: usize,
    pub b: f64,
    pub w: f64,
    pub thetas: Vec<f64>,
    /// `𝒯_B`, `⌊bN⌋ + 1` times.
    pub times_b: Vec<f64>,
    /// `𝒯_W`, `⌊wN⌋ + 1` times (before the lag shift).
    pub times_w: Vec<f64>,
    /// `B_c` on `𝒯_B`, `c = 0, 1`.
    pub b_paths: [Vec<f64>; 2],
    /// `w_paths[θ][c]`: `W^θ_c = B̃_c(· − θ)` on `𝒯_W`.
    pub w_paths: Vec<[Vec<f64>; 2]>,
}

impl GridObservation {
    pub fn b_increments(&self, c: usize) -> Vec<f64> {
        self.b_paths[c].windows(2).map(|p| p[1] - p[0]).collect()
    }

    pub fn w_increments(&self, theta_index: usize, c: usize) -> Vec<f64> {
        self.w_paths[theta_index][c].windows(2).map(|p| p[1] - p[0]).collect()
    }
}

/// Simulates one replication of all four paths.
pub fn simulate_paths(cfg: &LeadLagConfig, seed: &SeedSpec) -> Result<GridObservation> {
    let plan = Plan::new(cfg)?;
    let mut paths = Vec::new();
    plan.simulate(&mut seed.rng(), &mut paths);
    let len = plan.union.len();
    let pick = |c: usize, idx: &[usize]| idx.iter().map(|&k| paths[c * len + k]).collect::<Vec<f64>>();
    Ok(GridObservation {
        resolution: plan.resolution,
        b: plan.b,
        w: plan.w,
        b_paths: [pick(0, &plan.idx_b), pick(1, &plan.idx_b)],
        w_paths: plan.idx_w.iter().map(|iw| [pick(2, iw), pick(3, iw)]).collect(),
        thetas: plan.thetas,
        times_b: plan.times_b,
        times_w: plan.times_w,
    })
}

/// `U_coordinate(θ)` for `coordinate ∈ {1, 2}`; `theta` must be one of the
/// simulated lags (compared exactly).
pub fn u_statistic(obs: &GridObservation, theta: f64, coordinate: usize) -> Result<f64> {
    if !(1..=2).contains(&coordinate) {
        return domain(format!("coordinate must be 1 or 2, got {coordinate}"));
    }
    let Some(t) = obs.thetas.iter().position(|th| *th == theta) else {
        return domain(format!("lag {theta} was not simulated"));
    };
    let c = coordinate - 1;
    let db = obs.b_increments(c);
    let dw = obs.w_increments(t, c);
    Ok(overlap_pairs(db.len(), dw.len(), obs.b, obs.w)
        .into_iter()
        .map(|(i, j)| db[i - 1] * dw[j - 1])
        .sum())
}

/// Sampler of the `2 × m` matrix `√N |U_i(θ)|`.
pub struct LeadLagSampler {
    plan: Plan,
}

impl LeadLagSampler {
    pub fn new(cfg: &LeadLagConfig) -> Result<Self> {
        Ok(Self { plan: Plan::new(cfg)? })
    }

    /// Signed values `√N U_i(θ)` in row-major `2 × m` order.
    fn draw_signed(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        self.plan.simulate(rng, scratch);
        let m = self.plan.thetas.len();
        let scale = (self.plan.resolution as f64).sqrt();
        for c in 0..2 {
            for t in 0..m {
                out[c * m + t] = scale * self.plan.u(scratch, t, c);
            }
        }
    }
}

impl MatrixSampler for LeadLagSampler {
    fn shape(&self) -> MatrixShape {
        MatrixShape { n: 2, m: self.plan.thetas.len() }
    }

    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        self.draw_signed(rng, scratch, out);
        out.iter_mut().for_each(|v| *v = v.abs());
    }
}

struct SignedSampler<'a>(&'a LeadLagSampler);

impl MatrixSampler for SignedSampler<'_> {
    fn shape(&self) -> MatrixShape {
        self.0.shape()
    }

    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        self.0.draw_signed(rng, scratch, out);
    }
}

/// `reps` draws of `F^N = (√N |U_i(θ)|)`.
pub fn f_matrix_sample(cfg: &LeadLagConfig, reps: usize, seed: &SeedSpec) -> Result<Vec<DMatrix<f64>>> {
    let sampler = LeadLagSampler::new(cfg)?;
    let m = sampler.shape().m;
    Ok(sampler.draw_statistics(reps, seed, |x| DMatrix::from_row_slice(2, m, x)))
}

/// Entrywise absolute value of another sampler.
pub struct AbsSampler<S>(pub S);

impl<S: MatrixSampler> MatrixSampler for AbsSampler<S> {
    fn shape(&self) -> MatrixShape {
        self.0.shape()
    }

    fn draw(&self, rng: &mut LabRng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        self.0.draw(rng, scratch, out);
        out.iter_mut().for_each(|v| *v = v.abs());
    }
}

/// Column-matched Gaussian target: independent centered columns, column
/// `θ` with the Monte Carlo covariance of `√N (U₁(θ), U₂(θ))`.
#[derive(Debug, Clone)]
pub struct MatchedColumns {
    /// `covs[θ]` as `[[c11, c12], [c12, c22]]`.
    pub covs: Vec<[[f64; 2]; 2]>,
    /// Standard errors of the entries of `covs`.
    pub stderrs: Vec<[[f64; 2]; 2]>,
    pub spec: GaussianMatrixSpec,
}

impl MatchedColumns {
    /// Sampler of `|X|^N`.
    pub fn sampler(&self) -> AbsSampler<GaussianSampler> {
        AbsSampler(GaussianSampler::new(&self.spec))
    }
}

pub fn matched_gaussian_columns(cfg: &LeadLagConfig, moment_reps: usize, seed: &SeedSpec) -> Result<MatchedColumns> {
    if moment_reps < 2 {
        return domain("moment_reps must be at least 2");
    }
    let sampler = LeadLagSampler::new(cfg)?;
    let m = sampler.shape().m;
    // first and second moments of each column: U1, U2, U1², U1U2, U2²
    let stats = accumulate(&SignedSampler(&sampler), moment_reps, seed, 5 * m, |x, out| {
        for t in 0..m {
            let (u1, u2) = (x[t], x[m + t]);
            out[5 * t..5 * t + 5].copy_from_slice(&[u1, u2, u1 * u1, u1 * u2, u2 * u2]);
        }
    });
    let mut covs = Vec::with_capacity(m);
    let mut stderrs = Vec::with_capacity(m);
    let nm = 2 * m;
    let mut cov = DMatrix::zeros(nm, nm);
    let unbias = moment_reps as f64 / (moment_reps - 1) as f64;
    for t in 0..m {
        let s = &stats[5 * t..5 * t + 5];
        let (m1, m2) = (s[0].mean, s[1].mean);
        let c11 = (s[2].mean - m1 * m1) * unbias;
        let c12 = (s[3].mean - m1 * m2) * unbias;
        let c22 = (s[4].mean - m2 * m2) * unbias;
        covs.push([[c11, c12], [c12, c22]]);
        stderrs.push([[s[2].stderr, s[3].stderr], [s[3].stderr, s[4].stderr]]);
        let (i1, i2) = (t, m + t);
        cov[(i1, i1)] = c11;
        cov[(i2, i2)] = c22;
        cov[(i1, i2)] = c12;
        cov[(i2, i1)] = c12;
    }
    let spec = GaussianMatrixSpec::new(MatrixShape::new(2, m)?, vec![0.0; nm], cov)?;
    Ok(MatchedColumns { covs, stderrs, spec })
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub ks: f64,
    /// `ln⁶ m / N`.
    pub shape: f64,
    pub seed: u64,
}

/// For each resolution, KS distance between the min-max samples of `F^N`
/// and of the column-matched `|X|^N`. Matching uses `cfg.moment_reps`
/// replications on a stream separate from the KS samples.
pub fn convergence_experiment(cfg: &LeadLagConfig, ns: &[usize], reps: usize, seed: &SeedSpec) -> Result<Vec<ConvergenceRow>> {
    if ns.is_empty() {
        return domain("resolution list is empty");
    }
    if ns.windows(2).any(|p| p[0] >= p[1]) {
        return domain("resolutions must be strictly ascending");
    }
    if reps == 0 {
        return domain("reps must be positive");
    }
    ns.iter()
        .enumerate()
        .map(|(k, &n)| {
            let c = cfg.with_resolution(n);
            let sampler = LeadLagSampler::new(&c)?;
            let m = sampler.shape().m;
            let s = seed.child(k as u64);
            let matched = matched_gaussian_columns(&c, c.moment_reps, &s.child(0))?;
            let f = minmax_sample(&sampler, reps, &s.child(1))?;
            let x = minmax_sample(&matched.sampler(), reps, &s.child(2))?;
            let ks = ks_distance(&f, &x);
            log::info!("N = {n}: ks = {ks}");
            Ok(ConvergenceRow { n, m, reps, ks, shape: (m as f64).ln().powi(6) / n as f64, seed: seed.root })
        })
        .collect()
}

/// Writes the table with header `N,m,reps,ks,shape,seed`.
pub fn write_convergence_csv(rows: &[ConvergenceRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
