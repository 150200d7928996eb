//! Exact reference values for iid coordinates.
//!
//! For iid coordinates every order-statistic tail and every moment of the
//! exceedance count reduces to the binomial law, which we evaluate to near
//! machine precision with Loader's saddle-point form of the pmf.

use std::f64::consts::{LN_2, PI, SQRT_2};

use crate::error::{invalid, Result};

/// P(|X₁| ≥ t) = exp(−√2·t) for the variance-one symmetric exponential.
pub fn exponential_tail_exact(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("tail threshold must be ≥ 0, got {t}")));
    }
    Ok((-SQRT_2 * t).exp())
}

/// P(X₁ ≥ t) for the variance-one symmetric exponential, any real t.
pub fn exponential_one_sided_tail(t: f64) -> f64 {
    if t >= 0.0 {
        0.5 * (-SQRT_2 * t).exp()
    } else {
        1.0 - 0.5 * (SQRT_2 * t).exp()
    }
}

/// log(n!) − log(√(2πn)(n/e)ⁿ), exact for n ≤ 15.
#[allow(clippy::excessive_precision)]
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_094,
    0.027_677_925_684_998_339_149,
    0.020_790_672_103_765_093_112,
    0.016_644_691_189_821_192_163,
    0.013_876_128_823_070_747_999,
    0.011_896_709_945_891_770_095,
    0.010_411_265_261_972_096_497,
    0.009_255_462_182_712_732_917_7,
    0.008_330_563_433_362_871_256_5,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_865_7,
    0.006_408_994_188_004_207_068_4,
    0.005_951_370_112_758_847_735_6,
    0.005_554_733_551_962_801_371,
];

fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return STIRLERR_SMALL[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term x·log(x/np) + np − x without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// log P(Bin(n, q) = x).
fn log_binomial_pmf(x: u64, n: u64, q: f64) -> f64 {
    let r = 1.0 - q;
    if q == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if r == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 0.0;
        }
        return if q < 0.1 { -bd0(nf, nf * r) - nf * q } else { nf * r.ln() };
    }
    if x == n {
        return if r < 0.1 { -bd0(nf, nf * q) - nf * r } else { nf * q.ln() };
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * q) - bd0(nf - xf, nf * r);
    let lf = (2.0 * PI).ln() + xf.ln() + (-xf / nf).ln_1p();
    lc - 0.5 * lf
}

fn check_prob(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("probability must lie in [0, 1], got {q}")));
    }
    Ok(())
}

/// P(Bin(n, q) = x).
pub fn binomial_pmf(n: u64, q: f64, x: u64) -> Result<f64> {
    check_prob(q)?;
    if x > n {
        return Ok(0.0);
    }
    Ok(log_binomial_pmf(x, n, q).exp())
}

/// P(Bin(n, q) ≥ k), summed in log space over the upper tail.
///
/// k ≤ 0 gives 1 and k > n gives 0.
pub fn binomial_tail(n: u64, q: f64, k: i64) -> Result<f64> {
    check_prob(q)?;
    if k <= 0 {
        return Ok(1.0);
    }
    let k = k as u64;
    if k > n {
        return Ok(0.0);
    }
    let logs: Vec<f64> = (k..=n).map(|x| log_binomial_pmf(x, n, q)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

/// E[Bin(n, q)^p] from the factorial-moment expansion
/// E Kᵖ = Σⱼ S(p, j)·n(n−1)…(n−j+1)·qʲ, all terms nonnegative.
pub fn binomial_moment(n: u64, q: f64, p: u32) -> Result<f64> {
    check_prob(q)?;
    if p == 0 {
        return Err(invalid("moment order must be at least 1"));
    }
    let p = p as usize;
    // Stirling numbers of the second kind, row p
    let mut row = vec![0.0f64; p + 1];
    row[0] = 1.0;
    for m in 1..=p {
        for j in (1..=m).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    let mut total = 0.0;
    let mut falling = 1.0;
    let mut qpow = 1.0;
    for (j, s) in row.iter().enumerate().skip(1) {
        if j as u64 > n {
            break;
        }
        falling *= (n - (j as u64 - 1)) as f64;
        qpow *= q;
        total += s * falling * qpow;
    }
    Ok(total)
}

/// P(X_k* ≥ t) for iid variance-one symmetric exponential coordinates.
pub fn orderstat_tail_exact(n: u64, k: u64, t: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    binomial_tail(n, exponential_tail_exact(t.max(0.0))?, k as i64)
}

/// Median of X_k* for iid variance-one symmetric exponential coordinates,
/// found by bisection on the exact tail.
pub fn orderstat_median_exact(n: u64, k: u64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    let mut lo = 0.0;
    // P(X_1* ≥ t) ≤ n·e^{−√2 t} ≤ 1/2 here
    let mut hi = ((2 * n) as f64).ln() / SQRT_2 + LN_2;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if orderstat_tail_exact(n, k, mid)? >= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_moment(n: u32, q: f64, p: i32) -> f64 {
        (0u32..(1 << n))
            .map(|mask| {
                let k = mask.count_ones();
                q.powi(k as i32) * (1.0 - q).powi((n - k) as i32) * (k as f64).powi(p)
            })
            .sum()
    }

    #[test]
    fn tail_examples() {
        assert_eq!(exponential_tail_exact(0.0).unwrap(), 1.0);
        assert!((exponential_tail_exact(SQRT_2).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert!(exponential_tail_exact(-0.1).is_err());
        assert!((exponential_one_sided_tail(0.0) - 0.5).abs() < 1e-16);
        assert!((exponential_one_sided_tail(-1.0) + exponential_one_sided_tail(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_tail_examples() {
        assert!((binomial_tail(4, 0.5, 2).unwrap() - 11.0 / 16.0).abs() < 1e-15);
        assert_eq!(binomial_tail(10, 0.0, 1).unwrap(), 0.0);
        assert_eq!(binomial_tail(10, 1.0, 10).unwrap(), 1.0);
        assert_eq!(binomial_tail(10, 0.3, 11).unwrap(), 0.0);
        assert_eq!(binomial_tail(10, 0.3, 0).unwrap(), 1.0);
        assert_eq!(binomial_tail(10, 0.3, -4).unwrap(), 1.0);
        assert!(binomial_tail(10, 1.3, 2).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        for &(n, q) in &[(1u64, 0.3), (17, 0.01), (400, 0.5), (9999, 0.9)] {
            let s: f64 = (0..=n).map(|x| binomial_pmf(n, q, x).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} q={q} sum={s}");
        }
    }

    #[test]
    fn moment_examples() {
        assert!((binomial_moment(5, 0.2, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((binomial_moment(2, 0.5, 2).unwrap() - 1.5).abs() < 1e-15);
        assert!((binomial_moment(3, 1.0, 3).unwrap() - 27.0).abs() < 1e-12);
        assert!(binomial_moment(3, 0.5, 0).is_err());
    }

    #[test]
    fn moment_matches_enumeration() {
        for n in 1..=10u32 {
            for p in 1..=4u32 {
                for &q in &[0.0, 0.25, 0.5, 1.0] {
                    let exact = binomial_moment(n as u64, q, p).unwrap();
                    let brute = brute_force_moment(n, q, p as i32);
                    assert!((exact - brute).abs() <= 1e-12 * brute.max(1.0), "n={n} p={p} q={q}");
                }
            }
        }
    }

    #[test]
    fn median_of_single_coordinate() {
        let m = orderstat_median_exact(1, 1).unwrap();
        assert!((m - LN_2 / SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn medians_decrease_in_k() {
        let meds: Vec<f64> = (1..=16).map(|k| orderstat_median_exact(16, k).unwrap()).collect();
        assert!(meds.windows(2).all(|w| w[0] > w[1]));
    }
}
