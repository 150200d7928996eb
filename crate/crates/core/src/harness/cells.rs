//! Turning a sample batch into measured grid cells for each bound family.

use crate::bounds::{BoundCheck, BoundFamily, FamilyId};
use crate::distributions::SampleBatch;
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, Domain};
use crate::stats::{
    bootstrap_mean, conditional_coordinate_tails, conditional_tail_sum, empirical_n_moment, empirical_tails, lr_norm,
    order_statistic_columns, BootstrapConfig, MomentEstimate,
};

use super::config::FamilyConfig;

/// 1, 2, 4, … up to n/2 (just 1 when n < 2).
pub fn dyadic_ks(n: usize) -> Vec<usize> {
    let mut ks = vec![1];
    while ks.last().unwrap() * 2 <= n / 2 {
        ks.push(ks.last().unwrap() * 2);
    }
    ks
}

/// The family with its fixed parameters at dimension `n`.
pub fn family_for(cfg: &FamilyConfig, n: usize) -> BoundFamily {
    let mut fam = BoundFamily::new(cfg.family, n);
    if let Some(a1) = cfg.a1 {
        fam = fam.with_param("a1", a1);
    }
    if let Some(a2) = cfg.a2 {
        fam = fam.with_param("a2", a2);
    }
    fam
}

fn norm_values(batch: &SampleBatch, r: f64) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    batch.par_rows().map(|row| lr_norm(row, r)).collect()
}

fn tail_cells(values: &[f64], ts: &[f64], level: f64) -> Result<Vec<BoundCheck>> {
    Ok(empirical_tails(values, ts, level)?
        .iter()
        .zip(ts)
        .map(|(est, &t)| BoundCheck::from_tail(t, est))
        .collect())
}

/// (E‖X‖_r^p)^{1/p} with the interval mapped through the same power.
fn norm_moment(values: &[f64], p: f64, boot: &BootstrapConfig) -> Result<MomentEstimate> {
    let powered: Vec<f64> = values.iter().map(|v| v.powf(p)).collect();
    let est = bootstrap_mean(&powered, boot)?;
    Ok(MomentEstimate {
        point: est.point.powf(1.0 / p),
        ci_low: est.ci_low.powf(1.0 / p),
        ci_high: est.ci_high.powf(1.0 / p),
        ..est
    })
}

/// Measures every grid cell of `cfg` on `batch`. Bootstrap streams derive from
/// `seed`, so results do not depend on scheduling.
pub fn measure(cfg: &FamilyConfig, batch: &SampleBatch, level: f64, resamples: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let n = batch.dimension();
    let mut counter = 0u64;
    let mut boot = || {
        counter += 1;
        BootstrapConfig {
            resamples,
            level,
            seed: derive_seed(seed, Domain::Bootstrap, counter),
        }
    };
    let mut cells = Vec::new();
    match cfg.family {
        FamilyId::Paouris | FamilyId::NormFromMoments => {
            let root_n = (n as f64).sqrt();
            let scaled: Vec<f64> = norm_values(batch, 2.0)?.into_iter().map(|v| v / root_n).collect();
            cells = tail_cells(&scaled, &cfg.t, level)?;
        }
        FamilyId::UncondOrderStat | FamilyId::ExpConcOrderStat | FamilyId::MainOrderStat => {
            let ks: Vec<usize> = cfg
                .k
                .clone()
                .unwrap_or_else(|| dyadic_ks(n))
                .into_iter()
                .filter(|&k| k <= n)
                .collect();
            let cols = order_statistic_columns(batch, &ks)?;
            for (col, &k) in cols.iter().zip(&ks) {
                cells.extend(tail_cells(col, &cfg.t, level)?.into_iter().map(|c| c.with_k(k)));
            }
        }
        FamilyId::EstNMoment => {
            for &p in cfg.p.as_deref().unwrap_or_default() {
                for &t in &cfg.t {
                    let est = empirical_n_moment(batch, t, p, &boot())?;
                    cells.push(BoundCheck::from_moment(t, &est).with_p(p));
                }
            }
        }
        FamilyId::LrTailSmall | FamilyId::LrTailLarge | FamilyId::EstLarger => {
            for &r in cfg.r.as_deref().unwrap_or_default() {
                let vals = norm_values(batch, r)?;
                cells.extend(tail_cells(&vals, &cfg.t, level)?.into_iter().map(|c| c.with_r(r)));
            }
        }
        FamilyId::LinfTail => {
            let vals = norm_values(batch, f64::INFINITY)?;
            cells = tail_cells(&vals, &cfg.t, level)?;
        }
        FamilyId::LrMomentSmall | FamilyId::LrMomentLarge | FamilyId::LinfMoment => {
            let rs = if cfg.family == FamilyId::LinfMoment {
                vec![f64::INFINITY]
            } else {
                cfg.r.clone().unwrap_or_default()
            };
            for r in rs {
                let vals = norm_values(batch, r)?;
                for &p in cfg.p.as_deref().unwrap_or_default() {
                    let est = norm_moment(&vals, p, &boot())?;
                    cells.push(BoundCheck::from_moment(0.0, &est).with_p(p).with_r(r));
                }
            }
        }
        FamilyId::Cond1 => {
            let cond = cfg.condition.ok_or_else(|| invalid("cond1 needs a condition"))?;
            if cond.coordinate >= n {
                return Err(invalid(format!("condition coordinate {} ≥ n = {n}", cond.coordinate)));
            }
            let in_k = |x: &[f64]| x[cond.coordinate] >= cond.threshold;
            for &t in &cfg.t {
                let est = conditional_tail_sum(batch, in_k, t, &boot())?;
                let p_a = est.p_a.point;
                match est.sum {
                    Some(sum) if p_a > 0.0 => cells.push(BoundCheck::from_moment(t, &sum).with_p_a(p_a)),
                    _ => {}
                }
            }
        }
        FamilyId::Cond2 => {
            let cond = cfg.condition.ok_or_else(|| invalid("cond2 needs a condition"))?;
            if cond.coordinate >= n {
                return Err(invalid(format!("condition coordinate {} ≥ n = {n}", cond.coordinate)));
            }
            let in_k = |x: &[f64]| x[cond.coordinate] >= cond.threshold;
            for &t in &cfg.t {
                let (p_a, coords) = conditional_coordinate_tails(batch, in_k, t, level)?;
                if p_a.successes == 0 {
                    continue;
                }
                for &u in cfg.u.as_deref().unwrap_or_default() {
                    let w = (-u).exp();
                    let point = coords.iter().filter(|c| c.point >= w * p_a.point).count() as f64;
                    let high = coords.iter().filter(|c| c.ci_high >= w * p_a.ci_low).count() as f64;
                    let low = coords.iter().filter(|c| c.ci_low >= w * p_a.ci_high).count() as f64;
                    cells.push(
                        BoundCheck {
                            t,
                            empirical: point,
                            ci_low: low,
                            ci_high: high,
                            count: batch.count() as u64,
                            ..Default::default()
                        }
                        .with_u(u)
                        .with_p_a(p_a.point),
                    );
                }
            }
        }
    }
    Ok(cells)
}
