mod common;

use common::{brute_derivatives, brute_surrogate, fd_gradient, ln_choose, max_abs};
use minmax_core::softminmax::{
    composed_hessian_abs_sum, f_value, gradient, hessian, hessian_abs_offdiag_sum, hessian_offdiag_bound,
    min_sum_topk, sandwich_gaps, weight_tables, SmoothParams,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(beta: f64, delta: f64, k: usize) -> SmoothParams {
    SmoothParams::new(beta, delta, k).unwrap()
}

fn random_x(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn constant_matrix_closed_form() {
    for &(n, m, k) in &[(1usize, 1usize, 1usize), (3, 4, 2), (5, 6, 6), (2, 7, 3)] {
        for &(beta, delta) in &[(0.5, 2.0), (3.0, 0.25), (40.0, 1.0)] {
            let c = -0.8;
            let x = DMatrix::from_element(n, m, c);
            let f = f_value(&x, &params(beta, delta, k)).unwrap();
            let expect = k as f64 * c + ln_choose(m as u64, k as u64) / beta - (n as f64).ln() / (beta * delta);
            assert!((f - expect).abs() < 1e-12 * (1.0 + expect.abs()), "{n} {m} {k}: {f} vs {expect}");
        }
    }
}

#[test]
fn matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..60 {
        let n = 1 + trial % 3;
        let m = 1 + (trial * 7) % 8;
        let k = 1 + trial % m;
        let beta = rng.random_range(0.2..3.0);
        let delta = rng.random_range(0.2..3.0);
        let x = random_x(&mut rng, n, m, 2.0);
        let prm = params(beta, delta, k);
        let b = brute_surrogate(&x, beta, delta, k);
        let f = f_value(&x, &prm).unwrap();
        assert!((f - b.f).abs() <= 1e-8 * (1.0 + b.f.abs()), "f {f} vs {}", b.f);
        let w = weight_tables(&x, &prm).unwrap();
        for i in 0..n {
            assert!((w.q[i] - b.q[i]).abs() <= 1e-8 * b.q[i]);
            for a in 0..m {
                assert!((w.singles[(i, a)] - b.p[(i, a)]).abs() <= 1e-8 * (1e-12 + b.p[(i, a)]));
                for c in 0..m {
                    let (got, want) = (w.pairs[i][(a, c)], b.pp[i][(a, c)]);
                    assert!((got - want).abs() <= 1e-8 * want.max(1e-300) + 1e-300, "pair {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn hessian_matches_enumeration_entrywise() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut cases: Vec<(DMatrix<f64>, SmoothParams)> = (0..60)
        .map(|t| {
            let (n, m) = (1 + t % 4, 1 + (t * 5) % 10);
            let k = 1 + (t * 3) % m;
            let prm = params(rng.random_range(0.2..3.0), rng.random_range(0.2..3.0), k);
            (random_x(&mut rng, n, m, 2.0), prm)
        })
        .collect();
    // one dominant row, weights near one: both cancellation regimes
    let mut x = DMatrix::from_element(2, 6, 0.0);
    x.row_mut(1).fill(-3.0);
    x[(0, 0)] = 2.0;
    cases.push((x.clone(), params(2.5, 2.0, 5)));
    cases.push((x, params(2.5, 2.0, 6)));
    for (x, prm) in cases {
        let b = brute_surrogate(&x, prm.beta, prm.delta, prm.k);
        let (_, bh) = brute_derivatives(&b, prm.beta, prm.delta);
        let h = hessian(&x, &prm).unwrap();
        let whole = bh.amax().max(f64::MIN_POSITIVE);
        for (got, want) in h.iter().zip(bh.iter()) {
            let scale = if *want == 0.0 { whole } else { want.abs() };
            assert!((got - want).abs() <= 1e-9 * scale, "{got} vs {want}");
        }
    }
}

#[test]
fn oracle_example_two_by_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_x(&mut rng, 2, 3, 1.0);
    let b = brute_surrogate(&x, 1.0, 1.0, 2);
    let f = f_value(&x, &params(1.0, 1.0, 2)).unwrap();
    assert!((f - b.f).abs() <= 1e-10 * b.f.abs());
}

#[test]
fn weight_sum_identities_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_x(&mut rng, 2, 5, 2.0);
    let w = weight_tables(&x, &params(1.1, 0.9, 2)).unwrap();
    for i in 0..2 {
        let s: f64 = w.singles.row(i).iter().sum();
        assert!((s - 2.0).abs() <= 1e-10);
    }
    assert!((w.inv_q.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let prm = params(1.3, 0.7, 2);
    for _ in 0..10 {
        let x = random_x(&mut rng, 2, 4, 1.5);
        let g = gradient(&x, &prm).unwrap();
        let fd = fd_gradient(&x, |y| f_value(y, &prm).unwrap());
        assert!(max_abs(&(g - fd)) <= 1e-7);
    }
}

#[test]
fn hessian_matches_finite_differences_of_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for &(n, m, k) in &[(2usize, 3usize, 1usize), (2, 4, 2), (3, 3, 2), (1, 5, 3)] {
        let prm = params(rng.random_range(0.5..2.0), rng.random_range(0.3..1.5), k);
        let x = random_x(&mut rng, n, m, 1.0);
        let h = hessian(&x, &prm).unwrap();
        for col in 0..n * m {
            let (j, b) = (col / m, col % m);
            let fd = fd_gradient(&x, |y| gradient(y, &prm).unwrap()[(j, b)]);
            for row in 0..n * m {
                let diff = (h[(row, col)] - fd[(row / m, row % m)]).abs();
                assert!(diff <= 1e-6, "({row},{col}) {} vs {}", h[(row, col)], fd[(row / m, row % m)]);
            }
        }
    }
}

#[test]
fn symmetric_point_offdiag_sum_closed_form() {
    // at x = 0: g = k/(mn), w = 1/n, p = k/m, p^{ab} = k(k-1)/(m(m-1)) off the diagonal
    let (n, m, k) = (3usize, 5usize, 2usize);
    let (beta, delta) = (1.4, 0.6);
    let prm = params(beta, delta, k);
    let (nf, mf, kf) = (n as f64, m as f64, k as f64);
    let g = kf / (mf * nf);
    let pab = kf * (kf - 1.0) / (mf * (mf - 1.0));
    let pa = kf / mf;
    let same_row = beta * (delta * g * g + (-(1.0 + delta) * pa * pa + pab) / nf);
    let cross_row = beta * delta * g * g;
    let expect = nf * mf * (mf - 1.0) * same_row.abs() + nf * (nf - 1.0) * mf * mf * cross_row.abs();
    let r = hessian_abs_offdiag_sum(&DMatrix::zeros(n, m), &prm).unwrap();
    assert!((r.sum - expect).abs() <= 1e-12 * expect);
    let h = hessian(&DMatrix::zeros(n, m), &prm).unwrap();
    assert!((h[(0, 1)] - same_row).abs() < 1e-14);
    assert!((h[(0, m)] - cross_row).abs() < 1e-14);
    // the bound is attained at the symmetric point
    assert!((r.sum - r.bound).abs() <= 1e-12 * r.bound);
}

#[test]
fn offdiag_bound_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let prm = params(rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), 2);
        let x = random_x(&mut rng, 3, 4, 2.0);
        let r = hessian_abs_offdiag_sum(&x, &prm).unwrap();
        assert!(r.sum <= r.bound * (1.0 + 1e-12));
        assert_eq!(r.bound, hessian_offdiag_bound(&prm, 3, 4));
    }
}

#[test]
fn beta_ladder_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_x(&mut rng, 4, 6, 1.0);
    let t = min_sum_topk(&x, 3).unwrap();
    let mut prev = f64::INFINITY;
    for beta in [1.0, 10.0, 100.0, 1000.0] {
        let prm = params(beta, 0.5, 3);
        let gap = (f_value(&x, &prm).unwrap() - t).abs();
        let (lo, hi) = sandwich_gaps(&prm, 4, 6);
        assert!(gap <= lo + hi + 1e-12);
        assert!(lo + hi < prev);
        prev = lo + hi;
    }
    assert!(prev < 0.02);
}

fn arb_case() -> impl Strategy<Value = (DMatrix<f64>, SmoothParams)> {
    (1usize..5, 1usize..7, 0.05f64..50.0, 0.05f64..5.0, any::<u64>(), 0.1f64..20.0).prop_flat_map(
        |(n, m, beta, delta, seed, scale)| {
            (1..=m).prop_map(move |k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (random_x(&mut rng, n, m, scale), params(beta, delta, k))
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sandwich_holds((x, prm) in arb_case()) {
        let (n, m) = x.shape();
        let f = f_value(&x, &prm).unwrap();
        let t = min_sum_topk(&x, prm.k).unwrap();
        let (lo, hi) = sandwich_gaps(&prm, n, m);
        // log-domain roundoff grows with the partition magnitude k·max|x|
        let mag = prm.k as f64 * max_abs(&x);
        let slack = 16.0 * m as f64 * f64::EPSILON * (1.0 + mag + lo + hi);
        prop_assert!(f - lo <= t + slack, "lower: f={f} lo={lo} t={t}");
        prop_assert!(t <= f + hi + slack, "upper: f={f} hi={hi} t={t}");
    }

    #[test]
    fn gradient_is_a_probability_mass((x, prm) in arb_case()) {
        let g = gradient(&x, &prm).unwrap();
        prop_assert!(g.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((g.sum() - prm.k as f64).abs() <= 1e-10 * prm.k as f64);
    }

    #[test]
    fn weight_identities((x, prm) in arb_case()) {
        let w = weight_tables(&x, &prm).unwrap();
        let (n, m) = x.shape();
        let k = prm.k as f64;
        for i in 0..n {
            prop_assert!((w.singles.row(i).sum() - k).abs() <= 1e-10 * k);
            for a in 0..m {
                let pa = w.singles[(i, a)];
                prop_assert!((0.0..=1.0).contains(&pa));
                let off: f64 = (0..m).filter(|b| *b != a).map(|b| w.pairs[i][(a, b)]).sum();
                prop_assert!((off - (k - 1.0) * pa).abs() <= 1e-10 * k);
                for b in 0..m {
                    let pab = w.pairs[i][(a, b)];
                    prop_assert!(pab >= 0.0 && pab <= pa.min(w.singles[(i, b)]) * (1.0 + 1e-12) + 1e-300);
                }
            }
            prop_assert!(w.q[i] >= 1.0 - 1e-12);
        }
        prop_assert!((w.inv_q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn hessian_structure((x, prm) in arb_case()) {
        let h = hessian(&x, &prm).unwrap();
        let m = x.ncols();
        let scale = prm.beta * (1.0 + prm.delta);
        let tol = 64.0 * f64::EPSILON * m as f64 * scale * (1.0 + prm.beta * max_abs(&x));
        for r in 0..h.nrows() {
            prop_assert!(h.row(r).sum().abs() <= 1e-10 * scale, "row sum {}", h.row(r).sum());
            for c in 0..h.ncols() {
                prop_assert_eq!(h[(r, c)], h[(c, r)]);
                if r / m != c / m {
                    prop_assert!(h[(r, c)] >= 0.0);
                } else if r != c {
                    prop_assert!(h[(r, c)] <= tol, "same-row entry {}", h[(r, c)]);
                }
            }
        }
        let rep = hessian_abs_offdiag_sum(&x, &prm).unwrap();
        prop_assert!(rep.sum <= rep.bound * (1.0 + 1e-10) + (h.len() as f64) * tol, "{} > {}", rep.sum, rep.bound);
    }

    #[test]
    fn shift_covariance((x, prm) in arb_case(), c in -50.0f64..50.0) {
        let shifted = x.map(|v| v + c);
        let k = prm.k as f64;
        let f0 = f_value(&x, &prm).unwrap();
        let f1 = f_value(&shifted, &prm).unwrap();
        prop_assert!((f1 - f0 - k * c).abs() <= 1e-10 * (1.0 + f0.abs() + (k * c).abs()));
        let t0 = min_sum_topk(&x, prm.k).unwrap();
        let t1 = min_sum_topk(&shifted, prm.k).unwrap();
        prop_assert!((t1 - t0 - k * c).abs() <= 1e-10 * (1.0 + t0.abs() + (k * c).abs()));
    }
}

#[test]
fn composition_bound_against_its_statement() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0_f64;
    for trial in 0..400 {
        let n = rng.random_range(1..5);
        let m = rng.random_range(1..7);
        let k = rng.random_range(1..=m);
        let prm = params(rng.random_range(0.1..5.0), 10f64.powf(rng.random_range(-2.0..2.0)), k);
        // every fourth case at the symmetric point, where the Hessian mass peaks
        let x = if trial % 4 == 0 { DMatrix::zeros(n, m) } else { random_x(&mut rng, n, m, 2.0) };
        let (g1, g2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = composed_hessian_abs_sum(&x, &prm, g1, g2).unwrap();
        worst = worst.max(r.sum / r.bound);
        assert!(r.sum <= r.bound * (1.0 + 1e-12), "n={n} m={m} {prm:?}: {} > {}", r.sum, r.bound);
    }
    println!("worst composed-hessian ratio sum/bound = {worst:.4}");
}
