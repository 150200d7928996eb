//! First and second moments, whitening to isotropic position, and isotropy
//! diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::SampleBatch;
use crate::error::{invalid, Error, Result};

/// Eigenvalues at or below this make a covariance singular.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Rows per reduction chunk. Chunk boundaries do not depend on the thread
/// count, so reductions are bit-reproducible.
const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// Row-major, symmetric.
    pub covariance: Vec<Vec<f64>>,
    pub count: usize,
}

impl MomentSummary {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.dimension();
        DMatrix::from_fn(n, n, |i, j| self.covariance[i][j])
    }
}

fn chunked_sum<F>(batch: &SampleBatch, len: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let n = batch.dimension();
    let parts: Vec<Vec<f64>> = batch
        .data()
        .par_chunks(CHUNK_ROWS * n)
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            for row in chunk.chunks_exact(n) {
                f(row, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for p in parts {
        total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
    }
    total
}

/// Unbiased sample mean and covariance (two passes).
pub fn estimate_moments(batch: &SampleBatch) -> Result<MomentSummary> {
    let m = batch.count();
    if m < 2 {
        return Err(invalid("moment estimation needs at least 2 rows"));
    }
    let n = batch.dimension();
    let sums = chunked_sum(batch, n, |row, acc| {
        acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
    });
    let mean: Vec<f64> = sums.iter().map(|s| s / m as f64).collect();
    let upper = chunked_sum(batch, n * n, |row, acc| {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                acc[i * n + j] += di * (row[j] - mean[j]);
            }
        }
    });
    let mut covariance = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = upper[i * n + j] / (m - 1) as f64;
            covariance[i][j] = c;
            covariance[j][i] = c;
        }
    }
    Ok(MomentSummary {
        mean,
        covariance,
        count: m,
    })
}

/// Symmetric inverse square root Σ^{−1/2}.
fn inverse_sqrt(summary: &MomentSummary) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(summary.covariance_matrix());
    let deficient: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| !(eig.eigenvalues[i] > EIGENVALUE_FLOOR))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::SingularCovariance {
            floor: EIGENVALUE_FLOOR,
            eigenvalues: deficient.iter().map(|&i| eig.eigenvalues[i]).collect(),
            directions: deficient
                .iter()
                .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
                .collect(),
        });
    }
    let scale = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.sqrt().recip()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose())
}

/// Applies x ↦ Σ^{−1/2}(x − μ) with the moments in `summary`.
pub fn whiten(batch: &SampleBatch, summary: &MomentSummary) -> Result<SampleBatch> {
    let n = batch.dimension();
    if summary.dimension() != n {
        return Err(invalid(format!(
            "summary has dimension {}, batch has {n}",
            summary.dimension()
        )));
    }
    let w = inverse_sqrt(summary)?;
    let mut out = vec![0.0; batch.data().len()];
    out.par_chunks_mut(n).zip(batch.par_rows()).for_each(|(dst, row)| {
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += w[(i, j)] * (row[j] - summary.mean[j]);
            }
            *d = acc;
        }
    });
    batch.with_data(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub count: usize,
    pub max_abs_mean: f64,
    pub max_abs_mean_coord: usize,
    pub mean_se: f64,
    pub max_abs_cov_dev: f64,
    pub max_abs_cov_entry: (usize, usize),
    pub cov_se: f64,
    /// max over coordinates of |meanᵢ| / SE(meanᵢ)
    pub max_mean_z: f64,
    /// max over entries of |Covᵢⱼ − δᵢⱼ| / SE(Covᵢⱼ)
    pub max_cov_z: f64,
}

impl IsotropyReport {
    pub const CSV_HEADER: &'static str = "statistic,value,standard_error,location";

    pub fn csv_rows(&self) -> Vec<String> {
        vec![
            format!(
                "max_abs_mean,{:e},{:e},{}",
                self.max_abs_mean, self.mean_se, self.max_abs_mean_coord
            ),
            format!(
                "max_abs_cov_dev,{:e},{:e},{};{}",
                self.max_abs_cov_dev, self.cov_se, self.max_abs_cov_entry.0, self.max_abs_cov_entry.1
            ),
            format!("max_mean_z,{:e},,", self.max_mean_z),
            format!("max_cov_z,{:e},,", self.max_cov_z),
        ]
    }
}

/// Distance of a batch from isotropic position, with standard errors.
pub fn isotropy_diagnostics(batch: &SampleBatch) -> Result<IsotropyReport> {
    let s = estimate_moments(batch)?;
    let n = batch.dimension();
    let m = batch.count() as f64;
    // Var of centered products, for the SE of each covariance entry
    let mean = &s.mean;
    let cov = &s.covariance;
    let sq = chunked_sum(batch, n * n, |row, acc| {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                let z = di * (row[j] - mean[j]) - cov[i][j];
                acc[i * n + j] += z * z;
            }
        }
    });
    let mut report = IsotropyReport {
        count: batch.count(),
        max_abs_mean: -1.0,
        max_abs_mean_coord: 0,
        mean_se: 0.0,
        max_abs_cov_dev: -1.0,
        max_abs_cov_entry: (0, 0),
        cov_se: 0.0,
        max_mean_z: 0.0,
        max_cov_z: 0.0,
    };
    for i in 0..n {
        let se = (cov[i][i].max(0.0) / m).sqrt();
        let a = mean[i].abs();
        if a > report.max_abs_mean {
            report.max_abs_mean = a;
            report.max_abs_mean_coord = i;
            report.mean_se = se;
        }
        if se > 0.0 {
            report.max_mean_z = report.max_mean_z.max(a / se);
        }
        for j in i..n {
            let dev = (cov[i][j] - if i == j { 1.0 } else { 0.0 }).abs();
            let se = (sq[i * n + j] / (m - 1.0) / m).sqrt();
            if dev > report.max_abs_cov_dev {
                report.max_abs_cov_dev = dev;
                report.max_abs_cov_entry = (i, j);
                report.cov_se = se;
            }
            if se > 0.0 {
                report.max_cov_z = report.max_cov_z.max(dev / se);
            }
        }
    }
    Ok(report)
}

/// Scale s such that s·(uniform on the unit ℓp ball in ℝⁿ) has unit coordinate
/// variance. The second coordinate moment of the unit ball is
/// Γ(3/p)Γ(n/p + 1) / (Γ(1/p)Γ((n+2)/p + 1)); p = ∞ gives √3.
pub fn lp_ball_isotropic_scale(p: f64, n: usize) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("lp ball scale needs p ≥ 1, got {p}")));
    }
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if p.is_infinite() {
        return Ok(3f64.sqrt());
    }
    let nf = n as f64;
    let log_var = ln_gamma(3.0 / p) + ln_gamma(nf / p + 1.0) - ln_gamma(1.0 / p) - ln_gamma((nf + 2.0) / p + 1.0);
    Ok((-0.5 * log_var).exp())
}
