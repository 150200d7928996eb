//! Counting functions with bounded level sets, and the dyadic sums that
//! appear when tail bounds are integrated against order statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest search space `combf_enumerate` will walk.
pub const ENUMERATION_LIMIT: u64 = 100_000_000;

/// Positive integers l₀ ≥ l₁ ≥ … ≥ l_s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct LevelSequence(Vec<u64>);

impl LevelSequence {
    pub fn new(levels: Vec<u64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("level sequence needs at least l₀"));
        }
        if levels.contains(&0) {
            return Err(invalid(format!("levels must be positive: {levels:?}")));
        }
        if levels.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid(format!("levels must be nonincreasing: {levels:?}")));
        }
        Ok(LevelSequence(levels))
    }

    pub fn levels(&self) -> &[u64] {
        &self.0
    }

    /// s, the number of levels after l₀.
    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    /// Every valid sequence with l₀ ≤ `max_l0` and s ≤ `max_s`.
    pub fn all_up_to(max_l0: u64, max_s: usize) -> Vec<LevelSequence> {
        fn extend(prefix: &mut Vec<u64>, max_s: usize, out: &mut Vec<LevelSequence>) {
            out.push(LevelSequence(prefix.clone()));
            if prefix.len() > max_s {
                return;
            }
            let last = *prefix.last().expect("nonempty");
            for l in 1..=last {
                prefix.push(l);
                extend(prefix, max_s, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        for l0 in 1..=max_l0 {
            extend(&mut vec![l0], max_s, &mut out);
        }
        out
    }
}

impl TryFrom<Vec<u64>> for LevelSequence {
    type Error = Error;

    fn try_from(v: Vec<u64>) -> Result<Self> {
        LevelSequence::new(v)
    }
}

impl From<LevelSequence> for Vec<u64> {
    fn from(s: LevelSequence) -> Self {
        s.0
    }
}

/// ∏_{i=1}^{s} (e·l_{i−1}/l_i)^{l_i}; 1 when s = 0.
pub fn combf_bound(seq: &LevelSequence) -> f64 {
    combf_log_bound(seq).exp()
}

pub fn combf_log_bound(seq: &LevelSequence) -> f64 {
    seq.0
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0] as f64, w[1] as f64);
            cur * (1.0 + (prev / cur).ln())
        })
        .sum()
}

/// (s+1)^{l₀}, the number of functions {1,…,l₀} → {0,…,s}; saturates.
pub fn search_space(seq: &LevelSequence) -> u64 {
    let base = seq.0.len() as u64;
    let mut size: u64 = 1;
    for _ in 0..seq.0[0] {
        size = size.saturating_mul(base);
    }
    size
}

/// Exact number of f: {1,…,l₀} → {0,…,s} with #{r : f(r) ≥ i} ≤ lᵢ for all i.
///
/// Such f correspond one-to-one with chains A₁ ⊇ A₂ ⊇ … ⊇ A_s of subsets of
/// {1,…,l₀} with |Aᵢ| ≤ lᵢ, via Aᵢ = {r : f(r) ≥ i}. The chains are walked
/// explicitly, in parallel over A₁.
pub fn combf_enumerate(seq: &LevelSequence) -> Result<u64> {
    let size = search_space(seq);
    if size > ENUMERATION_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let levels = seq.levels();
    let l0 = levels[0] as u32;
    if levels.len() == 1 {
        return Ok(1);
    }
    let full: u64 = if l0 == 64 { u64::MAX } else { (1u64 << l0) - 1 };
    let top: Vec<u64> = submasks(full).filter(|m| m.count_ones() as u64 <= levels[1]).collect();
    Ok(top.par_iter().map(|&a1| count_chains(a1, &levels[2..])).sum())
}

fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    // descending order over all submasks, ending with 0
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

fn count_chains(parent: u64, rest: &[u64]) -> u64 {
    match rest.split_first() {
        None => 1,
        Some((&cap, tail)) => submasks(parent)
            .filter(|m| m.count_ones() as u64 <= cap)
            .map(|m| count_chains(m, tail))
            .sum(),
    }
}

/// Outcome of checking count ≤ bound on every small sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombfReport {
    pub cases: usize,
    pub failures: Vec<(Vec<u64>, u64, f64)>,
}

impl CombfReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Exhaustive check of the counting bound for l₀ ≤ `max_l0`, s ≤ `max_s`.
pub fn combf_check_all(max_l0: u64, max_s: usize) -> Result<CombfReport> {
    // refuse up front rather than after enumerating the smaller cases
    let largest = LevelSequence::new(vec![max_l0.max(1); max_s + 1])?;
    let size = search_space(&largest);
    if size > ENUMERATION_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let seqs = LevelSequence::all_up_to(max_l0, max_s);
    let mut failures = Vec::new();
    for seq in &seqs {
        let count = combf_enumerate(seq)?;
        let bound = combf_bound(seq);
        if count as f64 > bound {
            failures.push((seq.levels().to_vec(), count, bound));
        }
    }
    Ok(CombfReport {
        cases: seqs.len(),
        failures,
    })
}

/// Σ_{k=0}^{s} 2ᵏ·logʳ(en·2⁻ᵏ), s = ⌊log₂ n⌋.
pub fn dyadic_log_sum(n: u64, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(r >= 1.0) {
        return Err(invalid(format!("r must be at least 1, got {r}")));
    }
    let s = 63 - n.leading_zeros();
    let nf = n as f64;
    Ok((0..=s)
        .map(|k| {
            let w = 2f64.powi(k as i32);
            w * (1.0 + (nf / w).ln()).powf(r)
        })
        .sum())
}

/// Smallest C with `dyadic_log_sum(n, r)` ≤ (Cr)ʳ·n.
pub fn dyadic_log_constant(n: u64, r: f64) -> Result<f64> {
    let v = dyadic_log_sum(n, r)?;
    Ok((v / n as f64).powf(1.0 / r) / r)
}

/// Σ_{k=0}^{s} 2^{k(2−r)/2}, r > 2.
pub fn dyadic_tk_sum(r: f64, s: u64) -> Result<f64> {
    if !(r > 2.0) {
        return Err(invalid(format!("r must exceed 2, got {r}")));
    }
    let q = 2f64.powf((2.0 - r) / 2.0);
    let mut acc = 0.0;
    let mut term = 1.0;
    for _ in 0..=s {
        acc += term;
        term *= q;
        if term == 0.0 {
            break;
        }
    }
    Ok(acc)
}

/// (1 − 2^{(2−r)/2})⁻¹, the infinite geometric sum.
pub fn dyadic_tk_limit(r: f64) -> Result<f64> {
    if !(r > 2.0) {
        return Err(invalid(format!("r must exceed 2, got {r}")));
    }
    Ok(1.0 / (1.0 - 2f64.powf((2.0 - r) / 2.0)))
}

/// Smallest C with `dyadic_tk_sum(r, s)` ≤ C·r/(r−2).
pub fn dyadic_tk_constant(r: f64, s: u64) -> Result<f64> {
    Ok(dyadic_tk_sum(r, s)? * (r - 2.0) / r)
}

/// log of ∏_{r=j+1}^{r₁} (2e)^{l_r} with l_r = 2^{j−r}·l.
pub fn halving_levels_log_product(l: f64, j: u32, r1: u32) -> f64 {
    let per = 1.0 + 2f64.ln();
    ((j + 1)..=r1).map(|r| l * 2f64.powi(j as i32 - r as i32) * per).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Iterates every function {1..l₀} → {0..s} directly.
    fn brute_force(levels: &[u64]) -> u64 {
        let l0 = levels[0] as usize;
        let s = levels.len() - 1;
        let mut f = vec![0usize; l0];
        let mut count = 0;
        loop {
            let ok = (1..=s).all(|i| f.iter().filter(|&&v| v >= i).count() as u64 <= levels[i]);
            if ok {
                count += 1;
            }
            let mut pos = 0;
            loop {
                if pos == l0 {
                    return count;
                }
                f[pos] += 1;
                if f[pos] <= s {
                    break;
                }
                f[pos] = 0;
                pos += 1;
            }
        }
    }

    fn seq(v: &[u64]) -> LevelSequence {
        LevelSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bound_examples() {
        assert_eq!(combf_bound(&seq(&[5])), 1.0);
        assert!((combf_bound(&seq(&[2, 1])) - 2.0 * std::f64::consts::E).abs() < 1e-12);
        let b = combf_bound(&seq(&[3, 2, 1]));
        let e = std::f64::consts::E;
        assert!((b - (1.5 * e).powi(2) * 2.0 * e).abs() < 1e-9);
        assert!((b - 90.4).abs() < 0.1);
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(combf_enumerate(&seq(&[5])).unwrap(), 1);
        assert_eq!(combf_enumerate(&seq(&[2, 1])).unwrap(), 3);
        assert_eq!(combf_enumerate(&seq(&[2, 2])).unwrap(), 4);
        // chains A₂ ⊆ A₁ ⊆ {1,2,3}, |A₁| ≤ 2, |A₂| ≤ 1
        assert_eq!(combf_enumerate(&seq(&[3, 2, 1])).unwrap(), 16);
    }

    #[test]
    fn enumerate_matches_brute_force() {
        for s in LevelSequence::all_up_to(5, 3) {
            assert_eq!(combf_enumerate(&s).unwrap(), brute_force(s.levels()), "{:?}", s.levels());
        }
    }

    #[test]
    fn bound_dominates_count() {
        let rep = combf_check_all(5, 3).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.failures);
        assert!(rep.cases > 100);
    }

    #[test]
    fn count_monotone_in_levels() {
        for s in LevelSequence::all_up_to(5, 3) {
            let base = combf_enumerate(&s).unwrap();
            for i in 1..s.levels().len() {
                let mut v = s.levels().to_vec();
                v[i] += 1;
                if let Ok(bigger) = LevelSequence::new(v) {
                    assert!(combf_enumerate(&bigger).unwrap() >= base);
                }
            }
        }
    }

    #[test]
    fn invalid_sequences() {
        assert!(LevelSequence::new(vec![]).is_err());
        assert!(LevelSequence::new(vec![2, 3]).is_err());
        assert!(LevelSequence::new(vec![2, 0]).is_err());
        assert!(serde_json::from_str::<LevelSequence>("[1,2]").is_err());
    }

    #[test]
    fn guard_refuses_large_spaces() {
        let big = seq(&[30, 20, 10, 5]);
        match combf_enumerate(&big) {
            Err(Error::SearchSpaceTooLarge { size, limit }) => {
                assert!(size > limit);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dyadic_log_examples() {
        let v = dyadic_log_sum(2, 1.0).unwrap();
        assert!((v - (3.0 + 2f64.ln())).abs() < 1e-12);
        let direct: f64 = (0..=3)
            .map(|k| {
                let w = 2f64.powi(k);
                w * (8.0 * std::f64::consts::E / w).ln().powi(3)
            })
            .sum();
        let v = dyadic_log_sum(8, 3.0).unwrap();
        assert!((v - direct).abs() < 1e-9);
        assert!((v - 83.8).abs() < 0.05);
        assert!(dyadic_log_sum(1, 1.0).is_err());
    }

    #[test]
    fn dyadic_log_scales_linearly() {
        let mut prev = dyadic_log_sum(1 << 10, 2.0).unwrap() / (1u64 << 10) as f64;
        for e in 11..=14 {
            let cur = dyadic_log_sum(1 << e, 2.0).unwrap() / (1u64 << e) as f64;
            let ratio = cur / prev;
            assert!((0.5..=2.0).contains(&ratio));
            prev = cur;
        }
    }

    #[test]
    fn dyadic_log_constant_is_bounded() {
        let mut worst: f64 = 0.0;
        for e in 1..=20 {
            for &r in &[1.0, 1.5, 2.0, 3.0, 4.0, 8.0] {
                worst = worst.max(dyadic_log_constant(1 << e, r).unwrap());
            }
        }
        assert!(worst < 10.0, "{worst}");
    }

    #[test]
    fn dyadic_tk_examples() {
        assert_eq!(dyadic_tk_sum(4.0, 1).unwrap(), 1.5);
        assert!((dyadic_tk_sum(4.0, 200).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(dyadic_tk_limit(4.0).unwrap(), 2.0);
        let v = dyadic_tk_sum(2.5, 20).unwrap();
        let direct: f64 = (0..=20).map(|k| 2f64.powf(-0.25 * k as f64)).sum();
        assert!((v - direct).abs() < 1e-12);
        assert!(v <= dyadic_tk_limit(2.5).unwrap());
        assert!(dyadic_tk_sum(2.0, 3).is_err());
    }

    #[test]
    fn dyadic_tk_constant_is_bounded() {
        for i in 1..200 {
            let r = 2.0 + i as f64 * 0.05;
            for &s in &[0, 1, 5, 50, 1000] {
                let v = dyadic_tk_sum(r, s).unwrap();
                assert!(v <= dyadic_tk_limit(r).unwrap() * (1.0 + 1e-12));
                assert!(dyadic_tk_constant(r, s).unwrap() <= 3.0);
            }
        }
    }

    #[test]
    fn halving_levels_stay_below_e_2l() {
        for l in 1..=64 {
            for j in 1..=10 {
                for r1 in (j + 1)..=(j + 60) {
                    assert!(halving_levels_log_product(l as f64, j, r1) <= 2.0 * l as f64);
                }
            }
        }
    }
}
