//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// All `k`-subsets of `0..m` as bitmasks.
pub fn subsets(m: usize, k: usize) -> Vec<u32> {
    (0u32..(1 << m)).filter(|s| s.count_ones() as usize == k).collect()
}

/// Exp-domain evaluation of the surrogate and its weights by enumerating
/// every `k`-subset. Only sensible for moderate `β · |x|`.
pub struct BruteSurrogate {
    pub f: f64,
    pub p: DMatrix<f64>,
    /// `pp[i][(a, b)]`.
    pub pp: Vec<DMatrix<f64>>,
    pub q: Vec<f64>,
    /// `q_i - 1 = Σ_{l≠i} (S_i/S_l)^δ`, summed without cancellation.
    pub q_rest: Vec<f64>,
    /// Centered second pass: `Σ_L π_L (1_a − p_a)(1_b − p_b)`, free of the
    /// cancellation in `pp − p p` when weights are near one.
    pub cov: Vec<DMatrix<f64>>,
}

pub fn brute_surrogate(x: &DMatrix<f64>, beta: f64, delta: f64, k: usize) -> BruteSurrogate {
    let (n, m) = x.shape();
    let subs = subsets(m, k);
    let mut s = vec![0.0; n];
    let mut p = DMatrix::zeros(n, m);
    let mut pp = vec![DMatrix::zeros(m, m); n];
    for i in 0..n {
        for &l in &subs {
            let w = (beta * (0..m).filter(|j| l & (1 << j) != 0).map(|j| x[(i, j)]).sum::<f64>()).exp();
            s[i] += w;
            for a in 0..m {
                if l & (1 << a) == 0 {
                    continue;
                }
                p[(i, a)] += w;
                for b in 0..m {
                    if l & (1 << b) != 0 {
                        pp[i][(a, b)] += w;
                    }
                }
            }
        }
        for a in 0..m {
            p[(i, a)] /= s[i];
            for b in 0..m {
                pp[i][(a, b)] /= s[i];
            }
        }
    }
    let mut cov = vec![DMatrix::zeros(m, m); n];
    for i in 0..n {
        for &l in &subs {
            let pi = (beta * (0..m).filter(|j| l & (1 << j) != 0).map(|j| x[(i, j)]).sum::<f64>()).exp() / s[i];
            let dev: Vec<f64> = (0..m).map(|a| if l & (1 << a) != 0 { 1.0 } else { 0.0 } - p[(i, a)]).collect();
            for a in 0..m {
                for b in 0..m {
                    cov[i][(a, b)] += pi * dev[a] * dev[b];
                }
            }
        }
    }
    let total: f64 = s.iter().map(|v| v.powf(-delta)).sum();
    let f = -total.ln() / (beta * delta);
    let q = (0..n)
        .map(|i| (0..n).map(|l| (s[i] / s[l]).powf(delta)).sum())
        .collect();
    let q_rest = (0..n)
        .map(|i| (0..n).filter(|l| *l != i).map(|l| (s[i] / s[l]).powf(delta)).sum())
        .collect();
    BruteSurrogate { f, p, pp, q, q_rest, cov }
}

/// Central finite-difference gradient of a scalar function on matrices,
/// step `h = 1e-5 (1 + |x|)`.
pub fn fd_gradient(x: &DMatrix<f64>, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let h = 1e-5 * (1.0 + x[(i, j)].abs());
            let mut up = x.clone();
            let mut dn = x.clone();
            up[(i, j)] += h;
            dn[(i, j)] -= h;
            g[(i, j)] = (f(&up) - f(&dn)) / (2.0 * h);
        }
    }
    g
}

/// Two-sample Kolmogorov-Smirnov statistic by brute force over all
/// candidate thresholds.
pub fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for &t in a.iter().chain(b) {
        let fa = a.iter().filter(|v| **v <= t).count() as f64 / a.len() as f64;
        let fb = b.iter().filter(|v| **v <= t).count() as f64 / b.len() as f64;
        best = best.max((fa - fb).abs());
    }
    best
}

/// Standard normal CDF via a high-accuracy erfc series (Abramowitz-Stegun
/// 7.1.26 is too coarse, so use the continued fraction / series split).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        // Maclaurin series of erf
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz continued fraction
        let mut f = x;
        let tiny = 1e-300;
        let mut c = x;
        let mut d = 0.0;
        for i in 1..200 {
            let an = i as f64 / 2.0;
            d = x + an * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + an / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
    }
}

/// `log C(n, k)` by direct summation.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Draws `ξ ~ N(0, S)` through the Cholesky factor of a positive definite
/// `S` and hands `ξᵀA_eξ − tr(A_e S)` for every `e` to `visit`.
pub fn for_each_quadratic_draw(s: &DMatrix<f64>, a: &[DMatrix<f64>], reps: usize, seed: u64, mut visit: impl FnMut(&[f64])) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let d = s.nrows();
    let l = s.clone().cholesky().expect("positive definite base covariance").l();
    let centers: Vec<f64> = a.iter().map(|m| (m * s).trace()).collect();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut z = nalgebra::DVector::zeros(d);
    let mut out = vec![0.0; a.len()];
    for _ in 0..reps {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let xi = &l * &z;
        for ((o, m), c) in out.iter_mut().zip(a).zip(&centers) {
            *o = xi.dot(&(m * &xi)) - c;
        }
        visit(&out);
    }
}

/// Mean and standard error of a stream of values (Welford).
#[derive(Default)]
pub struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stderr(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Gradient and Hessian (flat row-major `i·m + a`) from the enumerated
/// weights: `∂f/∂x_ia = p_ia / q_i` and the product rule on top of it.
pub fn brute_derivatives(b: &BruteSurrogate, beta: f64, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = b.p.shape();
    let w: Vec<f64> = b.q.iter().map(|q| 1.0 / q).collect();
    let grad = DMatrix::from_fn(n, m, |i, a| w[i] * b.p[(i, a)]);
    let hess = DMatrix::from_fn(n * m, n * m, |r, c| {
        let (i, a, j, bb) = (r / m, r % m, c / m, c % m);
        // w_j − [i = j], the diagonal case without cancellation
        let shift = if i == j { -b.q_rest[j] / b.q[j] } else { w[j] };
        let mut h = b.p[(i, a)] * delta * beta * w[i] * b.p[(j, bb)] * shift;
        if i == j {
            h += w[i] * beta * b.cov[i][(a, bb)];
        }
        h
    });
    (grad, hess)
}
