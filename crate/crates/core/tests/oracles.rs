//! Closed-form quantities checked against independent computations: exact
//! rational arithmetic for the binomial law, quadrature for the ℓp-ball scale.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use lclab::distributions::{binomial_moment, binomial_tail, orderstat_median_exact, orderstat_tail_exact, sample, DistributionSpec};
use lclab::isotropy::lp_ball_isotropic_scale;
use lclab::stats::lr_norm;

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn choose(n: u64, k: u64) -> BigRational {
    let mut c = BigRational::one();
    for i in 0..k {
        c *= rat((n - i) as i64, (i + 1) as i64);
    }
    c
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

fn exact_pmf(n: u64, q: &BigRational, j: u64) -> BigRational {
    choose(n, j) * pow(q, j) * pow(&(BigRational::one() - q), n - j)
}

fn to_f64(x: &BigRational) -> f64 {
    // scale to keep precision for tiny values
    let mut v = x.clone();
    let mut shift = 0i32;
    let tiny = rat(1, 1 << 40);
    while !v.is_zero() && v < tiny {
        v *= BigRational::from_integer(BigInt::from(1u64 << 40));
        shift += 40;
    }
    v.to_f64().unwrap() * 2f64.powi(-shift)
}

#[test]
fn binomial_tail_matches_rational_arithmetic() {
    let qs = [(1, 3), (1, 7), (1, 2), (3, 10), (1, 1000), (99, 100)];
    for &n in &[1u64, 5, 17, 40, 64] {
        for &(a, b) in &qs {
            let q = rat(a, b);
            let qf = a as f64 / b as f64;
            let mut tail = BigRational::zero();
            for k in (0..=n).rev() {
                tail += exact_pmf(n, &q, k);
                let want = to_f64(&tail);
                let got = binomial_tail(n, qf, k as i64).unwrap();
                let err = (got - want).abs() / want.max(f64::MIN_POSITIVE);
                assert!(err <= 1e-12, "n={n} q={a}/{b} k={k}: {got} vs {want} (rel {err:e})");
            }
        }
    }
}

#[test]
fn binomial_moments_match_rational_arithmetic() {
    for &n in &[1u64, 6, 20, 50] {
        for &(a, b) in &[(1i64, 4i64), (2, 3), (1, 50)] {
            let q = rat(a, b);
            for p in 1..=5u32 {
                let mut m = BigRational::zero();
                for j in 0..=n {
                    m += exact_pmf(n, &q, j) * pow(&BigRational::from_integer(BigInt::from(j)), p as u64);
                }
                let want = to_f64(&m);
                let got = binomial_moment(n, a as f64 / b as f64, p).unwrap();
                assert!((got - want).abs() <= 1e-12 * want, "n={n} p={p}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn median_solves_half_tail() {
    for &n in &[8u64, 64, 1024] {
        let mut k = 1;
        while k <= n {
            let med = orderstat_median_exact(n, k).unwrap();
            let tail = orderstat_tail_exact(n, k, med).unwrap();
            assert!((tail - 0.5).abs() < 1e-9, "n={n} k={k}: tail {tail}");
            k *= 4;
        }
    }
}

/// E x₁² for the uniform law on the unit ℓp ball, from the marginal density
/// ∝ (1 − |x|ᵖ)^{(n−1)/p}, by composite Simpson on [0, 1].
fn quadrature_second_moment(p: f64, n: usize) -> f64 {
    let m = 200_000;
    let h = 1.0 / m as f64;
    let e = (n as f64 - 1.0) / p;
    let f = |x: f64, w: f64| w * (1.0 - x.powf(p)).max(0.0).powf(e);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=m {
        let x = i as f64 * h;
        let c = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        num += c * f(x, x * x);
        den += c * f(x, 1.0);
    }
    num / den
}

#[test]
fn lp_scale_matches_quadrature() {
    for &p in &[1.0, 1.5, 2.0, 3.0, 8.0] {
        for &n in &[1usize, 2, 5, 16, 64] {
            let s = lp_ball_isotropic_scale(p, n).unwrap();
            let want = quadrature_second_moment(p, n);
            let got = 1.0 / (s * s);
            assert!((got - want).abs() <= 1e-6 * want, "p={p} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn lp_ball_samples_stay_in_the_ball() {
    for &p in &[1.0, 2.5] {
        let n = 12;
        let scale = lp_ball_isotropic_scale(p, n).unwrap();
        let batch = sample(&DistributionSpec::lp_ball(p, n).unwrap(), 5000, 3).unwrap();
        for row in batch.rows() {
            let r: Vec<f64> = row.iter().map(|x| x / scale).collect();
            assert!(lr_norm(&r, p).unwrap() <= 1.0 + 1e-12);
        }
    }
}
