//! Observables of a random vector (order statistics, the exceedance count
//! N_x(t), ℓr norms) and their empirical tails and moments with confidence
//! intervals.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erf_inv;

use crate::distributions::{sample, DistributionSpec, SampleBatch};
use crate::error::{invalid, Result};
use crate::rng::{self, Domain};

/// Nonincreasing rearrangement of |x₁|, …, |xₙ|.
pub fn order_statistics(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|a| a.abs()).collect();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// N_x(t) = #{i : xᵢ ≥ t}. Signed coordinates, ties count.
pub fn exceedance_count(x: &[f64], t: f64) -> usize {
    x.iter().filter(|&&v| v >= t).count()
}

/// ‖x‖_r for r ≥ 1, or max |xᵢ| for r = ∞. Scaled by the max entry so that
/// large entries do not overflow.
pub fn lr_norm(x: &[f64], r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(invalid(format!("ℓr norm needs r ≥ 1, got {r}")));
    }
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.is_infinite() || max == 0.0 {
        return Ok(max);
    }
    if r == 2.0 {
        let s: f64 = x.iter().map(|v| (v / max) * (v / max)).sum();
        return Ok(max * s.sqrt());
    }
    let s: f64 = x.iter().map(|v| (v.abs() / max).powf(r)).sum();
    Ok(max * s.powf(1.0 / r))
}

/// Exact two-sided Clopper–Pearson interval for `successes` out of `trials`.
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(invalid(format!("need 0 ≤ successes ≤ trials, trials ≥ 1 (got {successes}/{trials})")));
    }
    check_level(level)?;
    let alpha = 1.0 - level;
    let (x, m) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        // P(Bin(m, q) ≥ x) = I_q(x, m − x + 1) = α/2
        bisect_increasing(|q| beta_reg(x, m - x + 1.0, q), alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        // P(Bin(m, q) ≤ x) = 1 − I_q(x + 1, m − x) = α/2
        bisect_increasing(|q| beta_reg(x + 1.0, m - x, q), 1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Standard normal quantile.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
}

/// Empirical probability with an exact confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub count: u64,
    pub successes: u64,
}

impl TailEstimate {
    pub fn from_counts(successes: u64, count: u64, level: f64) -> Result<Self> {
        let (ci_low, ci_high) = clopper_pearson(successes, count, level)?;
        Ok(TailEstimate {
            point: successes as f64 / count as f64,
            ci_low,
            ci_high,
            level,
            count,
            successes,
        })
    }

    /// Upper CI endpoint after zero observed events: nothing below this is
    /// resolvable at this sample size.
    pub fn resolution_floor(&self) -> f64 {
        1.0 - ((1.0 - self.level) / 2.0).powf(1.0 / self.count as f64)
    }

    /// No event observed; the tail is below what the sample can resolve.
    pub fn out_of_reach(&self) -> bool {
        self.successes == 0
    }
}

/// Fraction of `values` at or above `threshold`, with a Clopper–Pearson CI.
pub fn empirical_tail(values: &[f64], threshold: f64, level: f64) -> Result<TailEstimate> {
    if values.is_empty() {
        return Err(invalid("empirical tail of an empty sample"));
    }
    let hits = values.iter().filter(|&&v| v >= threshold).count() as u64;
    TailEstimate::from_counts(hits, values.len() as u64, level)
}

/// Tails at many thresholds from one sorted copy of the values.
pub fn empirical_tails(values: &[f64], thresholds: &[f64], level: f64) -> Result<Vec<TailEstimate>> {
    if values.is_empty() {
        return Err(invalid("empirical tail of an empty sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len() as u64;
    thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&v| v < t) as u64;
            TailEstimate::from_counts(m - below, m, level)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// A sample mean with a percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub count: u64,
}

/// Mean of `values` with a percentile-bootstrap CI. Resample `b` uses its own
/// stream, so the interval is independent of the thread count. When the
/// values take few distinct levels the row resampling is carried out as the
/// equivalent multinomial draw over levels.
pub fn bootstrap_mean(values: &[f64], cfg: &BootstrapConfig) -> Result<MomentEstimate> {
    if values.is_empty() {
        return Err(invalid("bootstrap of an empty sample"));
    }
    check_level(cfg.level)?;
    if cfg.resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    let m = values.len();
    let point = values.iter().sum::<f64>() / m as f64;

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut levels: Vec<(f64, u64)> = Vec::new();
    for v in sorted {
        match levels.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => levels.push((v, 1)),
        }
    }

    let mut means: Vec<f64> = if levels.len() * 8 <= m {
        (0..cfg.resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(cfg.seed, Domain::Bootstrap, b as u64);
                let mut left = m as u64;
                let mut mass = m as u64;
                let mut sum = 0.0;
                for &(v, c) in &levels {
                    if left == 0 {
                        break;
                    }
                    let draw = if c == mass {
                        left
                    } else {
                        Binomial::new(left, c as f64 / mass as f64)
                            .expect("valid binomial")
                            .sample(&mut rng)
                    };
                    sum += v * draw as f64;
                    left -= draw;
                    mass -= c;
                }
                sum / m as f64
            })
            .collect()
    } else {
        (0..cfg.resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(cfg.seed, Domain::Bootstrap, b as u64);
                (0..m).map(|_| values[rng.random_range(0..m)]).sum::<f64>() / m as f64
            })
            .collect()
    };
    means.sort_unstable_by(f64::total_cmp);
    let alpha = 1.0 - cfg.level;
    Ok(MomentEstimate {
        point,
        ci_low: quantile_sorted(&means, alpha / 2.0),
        ci_high: quantile_sorted(&means, 1.0 - alpha / 2.0),
        level: cfg.level,
        count: m as u64,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Per-row values of (t²·N_x(t))^p.
pub fn n_moment_values(batch: &SampleBatch, t: f64, p: f64) -> Vec<f64> {
    let scale = t * t;
    batch
        .par_rows()
        .map(|row| (scale * exceedance_count(row, t) as f64).powf(p))
        .collect()
}

/// Estimates E(t²·N_X(t))^p with a percentile-bootstrap CI.
pub fn empirical_n_moment(batch: &SampleBatch, t: f64, p: f64, cfg: &BootstrapConfig) -> Result<MomentEstimate> {
    if !(p >= 1.0) {
        return Err(invalid(format!("moment order must be ≥ 1, got {p}")));
    }
    bootstrap_mean(&n_moment_values(batch, t, p), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaleyZygmund {
    /// empirical P(Z ≥ θ·ÊZ)
    pub lhs: f64,
    /// (1 − θ)²·(ÊZ)² / ÊZ²
    pub rhs: f64,
    pub holds: bool,
}

/// Paley–Zygmund on the empirical law of nonnegative `values`.
pub fn paley_zygmund_check(values: &[f64], theta: f64) -> Result<PaleyZygmund> {
    if values.is_empty() {
        return Err(invalid("Paley–Zygmund check of an empty sample"));
    }
    if values.iter().any(|&v| !(v >= 0.0)) {
        return Err(invalid("Paley–Zygmund needs nonnegative values"));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(invalid("Paley–Zygmund is undefined for an all-zero sample"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("θ must lie in (0, 1), got {theta}")));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let second = values.iter().map(|v| v * v).sum::<f64>() / m;
    let lhs = values.iter().filter(|&&v| v >= theta * mean).count() as f64 / m;
    let rhs = (1.0 - theta).powi(2) * mean * mean / second;
    Ok(PaleyZygmund {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTailSum {
    pub p_a: TailEstimate,
    /// Σᵢ P(A ∩ {Xᵢ ≥ t}); `None` when no sample lies in A.
    pub sum: Option<MomentEstimate>,
    pub insufficient_mass: bool,
}

/// Estimates P(A) and Σᵢ P(A ∩ {Xᵢ ≥ t}) for A = {X ∈ K}, the latter as the
/// mean of 1{x ∈ K}·N_x(t) over rows.
pub fn conditional_tail_sum<K>(batch: &SampleBatch, in_k: K, t: f64, cfg: &BootstrapConfig) -> Result<ConditionalTailSum>
where
    K: Fn(&[f64]) -> bool + Sync,
{
    let values: Vec<(bool, f64)> = batch
        .par_rows()
        .map(|row| {
            let inside = in_k(row);
            (inside, if inside { exceedance_count(row, t) as f64 } else { 0.0 })
        })
        .collect();
    let hits = values.iter().filter(|v| v.0).count() as u64;
    let p_a = TailEstimate::from_counts(hits, batch.count() as u64, cfg.level)?;
    if hits == 0 {
        return Ok(ConditionalTailSum {
            p_a,
            sum: None,
            insufficient_mass: true,
        });
    }
    let weighted: Vec<f64> = values.into_iter().map(|v| v.1).collect();
    Ok(ConditionalTailSum {
        p_a,
        sum: Some(bootstrap_mean(&weighted, cfg)?),
        insufficient_mass: false,
    })
}

/// Per-coordinate estimates of P(A ∩ {Xᵢ ≥ t}), plus P(A).
pub fn conditional_coordinate_tails<K>(
    batch: &SampleBatch,
    in_k: K,
    t: f64,
    level: f64,
) -> Result<(TailEstimate, Vec<TailEstimate>)>
where
    K: Fn(&[f64]) -> bool + Sync,
{
    let n = batch.dimension();
    let m = batch.count() as u64;
    let mut hits_a = 0u64;
    let mut hits = vec![0u64; n];
    for row in batch.rows() {
        if in_k(row) {
            hits_a += 1;
            for (h, &x) in hits.iter_mut().zip(row) {
                if x >= t {
                    *h += 1;
                }
            }
        }
    }
    let p_a = TailEstimate::from_counts(hits_a, m, level)?;
    let coords = hits
        .into_iter()
        .map(|h| TailEstimate::from_counts(h, m, level))
        .collect::<Result<_>>()?;
    Ok((p_a, coords))
}

/// X_k* for every row, for each requested k (1-based). Output `[j][row]` holds
/// X_{ks[j]}* of that row.
pub fn order_statistic_columns(batch: &SampleBatch, ks: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = batch.dimension();
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(invalid(format!("order statistic index {k} outside 1..={n}")));
    }
    let per_row: Vec<Vec<f64>> = batch
        .par_rows()
        .map(|row| {
            let sorted = order_statistics(row);
            ks.iter().map(|&k| sorted[k - 1]).collect()
        })
        .collect();
    Ok((0..ks.len())
        .map(|j| per_row.iter().map(|r| r[j]).collect())
        .collect())
}

/// Sample median of X_k* over `count` fresh draws from `spec`.
pub fn empirical_median_orderstat(n: usize, k: usize, spec: &DistributionSpec, count: usize, seed: u64) -> Result<f64> {
    Ok(median_orderstat_with_ci(n, k, spec, count, seed, 0.95)?.0)
}

/// Sample median of X_k* and a distribution-free CI from order statistics of
/// the sample (binomial ranks, normal approximation).
pub fn median_orderstat_with_ci(
    n: usize,
    k: usize,
    spec: &DistributionSpec,
    count: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64, f64)> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    if spec.dimension() != n {
        return Err(invalid(format!(
            "spec has dimension {}, requested n = {n}",
            spec.dimension()
        )));
    }
    check_level(level)?;
    let batch = sample(spec, count, seed)?;
    let mut col = order_statistic_columns(&batch, &[k])?.remove(0);
    col.sort_unstable_by(f64::total_cmp);
    let m = col.len() as f64;
    let median = quantile_sorted(&col, 0.5);
    let z = normal_quantile(0.5 + level / 2.0);
    let lo = ((m / 2.0 - z * m.sqrt() / 2.0).floor().max(0.0)) as usize;
    let hi = ((m / 2.0 + z * m.sqrt() / 2.0).ceil() as usize).min(col.len() - 1);
    Ok((median, col[lo], col[hi]))
}

/// One CSV row of an estimate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub distribution: String,
    pub n: usize,
    pub k_or_p_or_r: f64,
    pub t: f64,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: u64,
    pub seed: u64,
}

impl EstimateRow {
    pub const CSV_HEADER: &'static str = "distribution,n,k_or_p_or_r,t,point,ci_low,ci_high,count,seed";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{},{}",
            self.distribution, self.n, self.k_or_p_or_r, self.t, self.point, self.ci_low, self.ci_high, self.count, self.seed
        )
    }
}
