//! Canonical isotropic log-concave ensembles, their samplers, and exact
//! oracles for the iid symmetric-exponential case.

mod io;
mod oracle;
mod polytope;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{read_batch, read_batch_csv, write_batch, write_batch_csv, BatchFormat};
pub use oracle::{
    binomial_moment, binomial_pmf, binomial_tail, exponential_one_sided_tail, exponential_tail_exact,
    orderstat_median_exact, orderstat_tail_exact,
};
pub use polytope::{
    hit_and_run_chain, ChainDiagnostics, Halfspace, HitAndRunConfig, HitAndRunOutput, Polytope, MIN_CHORD,
};

use crate::error::{invalid, Error, Result};
use crate::isotropy::lp_ball_isotropic_scale;
use crate::rng::{self, Domain};

/// Tolerance on ‖QᵀQ − I‖∞ for rotation matrices.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Retained points per hit-and-run chain when sampling `PolytopeUniform`.
/// Fixed so that results do not depend on the worker count.
pub const POLYTOPE_CHAIN_LEN: usize = 10_000;

/// An orthogonal matrix, optionally generated from a seed (Haar measure).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: DMatrix<f64>,
    seed: Option<u64>,
}

impl Rotation {
    /// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
    /// signs of R's diagonal folded into Q.
    pub fn haar(n: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Domain::Rotation, n as u64);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Rotation {
            matrix: q,
            seed: Some(seed),
        }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidSpec("rotation matrix must be square".into()));
        }
        let n = matrix.nrows();
        let gram = matrix.transpose() * &matrix;
        let dev = (gram - DMatrix::<f64>::identity(n, n)).amax();
        if !(dev <= ORTHOGONALITY_TOL) {
            return Err(Error::InvalidSpec(format!(
                "rotation is not orthogonal: max |QᵀQ − I| = {dev:e}"
            )));
        }
        Ok(Rotation { matrix, seed: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    /// iid symmetric exponential with density (1/√2)·exp(−√2|x|).
    ExponentialProduct,
    GaussianProduct,
    /// Uniform on [−√3, √3]ⁿ.
    CubeUniform,
    /// Uniform on the unit ℓp ball, rescaled to unit coordinate variance.
    LpBallUniform { p: f64 },
    /// Uniform on {x ≥ 0, Σx ≤ 1}, mapped affinely to isotropic position.
    SimplexUniform,
    /// Uniform on a polytope, not normalized.
    PolytopeUniform(Polytope),
    Rotated {
        base: Box<DistributionSpec>,
        rotation: Rotation,
    },
}

/// Declarative description of a log-concave ensemble in dimension `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecJson", into = "SpecJson")]
pub struct DistributionSpec {
    kind: Kind,
    n: usize,
}

impl DistributionSpec {
    fn simple(kind: Kind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        Ok(DistributionSpec { kind, n })
    }

    pub fn exponential(n: usize) -> Result<Self> {
        Self::simple(Kind::ExponentialProduct, n)
    }

    pub fn gaussian(n: usize) -> Result<Self> {
        Self::simple(Kind::GaussianProduct, n)
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::simple(Kind::CubeUniform, n)
    }

    /// Requires p ≥ 1: for p < 1 the ball is not convex and the law is not log-concave.
    pub fn lp_ball(p: f64, n: usize) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "lp ball needs finite p ≥ 1 (use cube_uniform for p = ∞), got {p}"
            )));
        }
        Self::simple(Kind::LpBallUniform { p }, n)
    }

    pub fn simplex(n: usize) -> Result<Self> {
        Self::simple(Kind::SimplexUniform, n)
    }

    pub fn polytope(polytope: Polytope) -> Self {
        let n = polytope.dim();
        DistributionSpec {
            kind: Kind::PolytopeUniform(polytope),
            n,
        }
    }

    pub fn rotated(base: DistributionSpec, rotation: Rotation) -> Result<Self> {
        if rotation.matrix().nrows() != base.n {
            return Err(Error::InvalidSpec(format!(
                "rotation is {0}×{0} but base dimension is {1}",
                rotation.matrix().nrows(),
                base.n
            )));
        }
        let n = base.n;
        Self::simple(
            Kind::Rotated {
                base: Box::new(base),
                rotation,
            },
            n,
        )
    }

    pub fn rotated_haar(base: DistributionSpec, rotation_seed: u64) -> Result<Self> {
        let n = base.n;
        Self::rotated(base, Rotation::haar(n, rotation_seed))
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Whether the law has identity covariance by construction.
    pub fn is_isotropic(&self) -> bool {
        match &self.kind {
            Kind::PolytopeUniform(_) => false,
            Kind::Rotated { base, .. } => base.is_isotropic(),
            _ => true,
        }
    }

    /// Whether every exact iid-exponential oracle applies.
    pub fn is_exponential_product(&self) -> bool {
        matches!(self.kind, Kind::ExponentialProduct)
    }

    /// Short human-readable label, e.g. `rotated(exponential_product)`.
    pub fn label(&self) -> String {
        match &self.kind {
            Kind::LpBallUniform { p } => format!("lp_ball_uniform(p={p})"),
            Kind::Rotated { base, .. } => format!("rotated({})", base.label()),
            k => kind_name(k).to_string(),
        }
    }
}

fn kind_name(kind: &Kind) -> &'static str {
    match kind {
        Kind::ExponentialProduct => "exponential_product",
        Kind::GaussianProduct => "gaussian_product",
        Kind::CubeUniform => "cube_uniform",
        Kind::LpBallUniform { .. } => "lp_ball_uniform",
        Kind::SimplexUniform => "simplex_uniform",
        Kind::PolytopeUniform(_) => "polytope_uniform",
        Kind::Rotated { .. } => "rotated",
    }
}

/// Wire form of [`DistributionSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    kind: String,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    halfspaces: Option<Vec<Halfspace>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interior_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Box<SpecJson>>,
}

impl TryFrom<SpecJson> for DistributionSpec {
    type Error = Error;

    fn try_from(j: SpecJson) -> Result<Self> {
        let spec = match j.kind.as_str() {
            "exponential_product" => Self::exponential(j.n)?,
            "gaussian_product" => Self::gaussian(j.n)?,
            "cube_uniform" => Self::cube(j.n)?,
            "lp_ball_uniform" => {
                let p = j.p.ok_or_else(|| Error::InvalidSpec("lp_ball_uniform needs \"p\"".into()))?;
                Self::lp_ball(p, j.n)?
            }
            "simplex_uniform" => Self::simplex(j.n)?,
            "polytope_uniform" => {
                let hs = j
                    .halfspaces
                    .ok_or_else(|| Error::InvalidSpec("polytope_uniform needs \"halfspaces\"".into()))?;
                Self::polytope(Polytope::new(hs, j.interior_point)?)
            }
            "rotated" => {
                let base = j
                    .base
                    .ok_or_else(|| Error::InvalidSpec("rotated needs \"base\"".into()))?;
                let base = DistributionSpec::try_from(*base)?;
                match (j.rotation_seed, j.rotation) {
                    (Some(seed), None) => Self::rotated_haar(base, seed)?,
                    (None, Some(rows)) => {
                        let n = rows.len();
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(Error::InvalidSpec("rotation must be a square matrix".into()));
                        }
                        let m = DMatrix::from_fn(n, n, |i, k| rows[i][k]);
                        Self::rotated(base, Rotation::from_matrix(m)?)?
                    }
                    _ => {
                        return Err(Error::InvalidSpec(
                            "rotated needs exactly one of \"rotation_seed\" or \"rotation\"".into(),
                        ))
                    }
                }
            }
            other => return Err(Error::InvalidSpec(format!("unknown kind {other:?}"))),
        };
        if spec.n != j.n {
            return Err(Error::InvalidSpec(format!(
                "declared n = {} but the body has dimension {}",
                j.n, spec.n
            )));
        }
        Ok(spec)
    }
}

impl From<DistributionSpec> for SpecJson {
    fn from(spec: DistributionSpec) -> Self {
        let mut j = SpecJson {
            kind: kind_name(&spec.kind).to_string(),
            n: spec.n,
            p: None,
            halfspaces: None,
            interior_point: None,
            rotation_seed: None,
            rotation: None,
            base: None,
        };
        match spec.kind {
            Kind::LpBallUniform { p } => j.p = Some(p),
            Kind::PolytopeUniform(poly) => {
                j.interior_point = Some(poly.interior_point().to_vec());
                j.halfspaces = Some(poly.halfspaces().to_vec());
            }
            Kind::Rotated { base, rotation } => {
                j.base = Some(Box::new(SpecJson::from(*base)));
                match rotation.seed() {
                    Some(s) => j.rotation_seed = Some(s),
                    None => {
                        let m = rotation.matrix();
                        j.rotation = Some(
                            (0..m.nrows())
                                .map(|i| (0..m.ncols()).map(|k| m[(i, k)]).collect())
                                .collect(),
                        )
                    }
                }
            }
            _ => {}
        }
        j
    }
}

/// `count` rows of dimension `n`, stored row-major, with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    spec: DistributionSpec,
    seed: u64,
    count: usize,
}

impl SampleBatch {
    /// Wraps row-major data. Fails on ragged or non-finite input.
    pub fn from_parts(spec: DistributionSpec, seed: u64, data: Vec<f64>) -> Result<Self> {
        let n = spec.dimension();
        if data.is_empty() || !data.len().is_multiple_of(n) {
            return Err(invalid(format!(
                "{} values cannot be split into rows of length {n}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite entry in row {}", pos / n)));
        }
        let count = data.len() / n;
        Ok(SampleBatch {
            data,
            spec,
            seed,
            count,
        })
    }

    /// Convenience for tests and tools: rows with an ad-hoc Gaussian label.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("rows have different lengths"));
        }
        let spec = DistributionSpec::gaussian(n)?;
        Self::from_parts(spec, 0, rows.concat())
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dimension();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dimension())
    }

    pub fn par_rows(&self) -> rayon::slice::ChunksExact<'_, f64> {
        self.data.par_chunks_exact(self.dimension())
    }

    /// Same provenance, new data (used by affine transforms).
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.spec.clone(), self.seed, data)
    }
}

/// Fills `out` with a uniformly random unit vector.
pub(crate) fn unit_vector(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-150 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Row sampler with everything that does not depend on the row precomputed.
enum RowSampler {
    Exponential,
    Gaussian,
    Cube,
    LpBall { p: f64, scale: f64, gamma: Gamma<f64> },
    Simplex { n: usize },
    Rotated { base: Box<RowSampler>, q: DMatrix<f64> },
}

impl RowSampler {
    fn new(spec: &DistributionSpec) -> Result<Self> {
        Ok(match &spec.kind {
            Kind::ExponentialProduct => RowSampler::Exponential,
            Kind::GaussianProduct => RowSampler::Gaussian,
            Kind::CubeUniform => RowSampler::Cube,
            Kind::LpBallUniform { p } => RowSampler::LpBall {
                p: *p,
                scale: lp_ball_isotropic_scale(*p, spec.n)?,
                gamma: Gamma::new(1.0 / p, 1.0).map_err(|e| Error::InvalidSpec(e.to_string()))?,
            },
            Kind::SimplexUniform => RowSampler::Simplex { n: spec.n },
            Kind::Rotated { base, rotation } => RowSampler::Rotated {
                base: Box::new(RowSampler::new(base)?),
                q: rotation.matrix().clone(),
            },
            Kind::PolytopeUniform(_) => unreachable!("polytopes are sampled by chains"),
        })
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            RowSampler::Exponential => {
                for v in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *v = sign * e * std::f64::consts::FRAC_1_SQRT_2;
                }
            }
            RowSampler::Gaussian => {
                for v in out.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
            }
            RowSampler::Cube => {
                let h = 3f64.sqrt();
                for v in out.iter_mut() {
                    *v = rng.random_range(-h..h);
                }
            }
            RowSampler::LpBall { p, scale, gamma } => {
                // density ∝ exp(−|s|^p) coordinates plus one Exp(1) slack variate
                let mut sum = 0.0;
                for v in out.iter_mut() {
                    let g = gamma.sample(rng);
                    sum += g;
                    let mag = g.powf(1.0 / p);
                    *v = if rng.random::<bool>() { mag } else { -mag };
                }
                let z: f64 = Exp1.sample(rng);
                let r = (sum + z).powf(1.0 / p);
                out.iter_mut().for_each(|v| *v = *v / r * scale);
            }
            RowSampler::Simplex { n } => {
                let nf = *n as f64;
                let mut total = 0.0;
                for v in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *v = e;
                    total += e;
                }
                total += <Exp1 as Distribution<f64>>::sample(&Exp1, rng);
                // Dirichlet(1,…,1) covariance is a·I − b·11ᵀ; whiten with its symmetric root
                let a = 1.0 / ((nf + 1.0) * (nf + 2.0));
                let along = a / (nf + 1.0);
                let mu = 1.0 / (nf + 1.0);
                out.iter_mut().for_each(|v| *v = *v / total - mu);
                let s = out.iter().sum::<f64>() / nf;
                let (ia, il) = (a.sqrt().recip(), along.sqrt().recip());
                out.iter_mut().for_each(|v| *v = ia * (*v - s) + il * s);
            }
            RowSampler::Rotated { base, q } => {
                let n = out.len();
                let mut inner = std::mem::take(scratch);
                inner.resize(n, 0.0);
                let mut nested = Vec::new();
                base.fill(rng, &mut inner, &mut nested);
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, y) in inner.iter().enumerate() {
                        acc += q[(i, k)] * y;
                    }
                    *o = acc;
                }
                *scratch = inner;
            }
        }
    }
}

/// Draws `count` iid rows. Row `i` uses its own stream derived from `(seed, i)`,
/// so output is identical for any thread count.
pub fn sample(spec: &DistributionSpec, count: usize, seed: u64) -> Result<SampleBatch> {
    Ok(sample_with_diagnostics(spec, count, seed)?.0)
}

/// Like [`sample`], also returning merged chain diagnostics for polytope specs.
pub fn sample_with_diagnostics(
    spec: &DistributionSpec,
    count: usize,
    seed: u64,
) -> Result<(SampleBatch, Option<ChainDiagnostics>)> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let n = spec.dimension();
    if let Kind::PolytopeUniform(poly) = &spec.kind {
        let (batch, diag) = sample_polytope(spec, poly, count, seed)?;
        return Ok((batch, Some(diag)));
    }
    let sampler = RowSampler::new(spec)?;
    let mut data = vec![0.0; count * n];
    data.par_chunks_mut(n)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (i, row)| {
            let mut rng = rng::stream(seed, Domain::Rows, i as u64);
            sampler.fill(&mut rng, row, scratch);
        });
    Ok((SampleBatch::from_parts(spec.clone(), seed, data)?, None))
}

/// Chains of [`POLYTOPE_CHAIN_LEN`] retained points each, one stream per chain.
fn sample_polytope(
    spec: &DistributionSpec,
    poly: &Polytope,
    count: usize,
    seed: u64,
) -> Result<(SampleBatch, ChainDiagnostics)> {
    let n = spec.dimension();
    let chains = count.div_ceil(POLYTOPE_CHAIN_LEN);
    let parts: Vec<(Vec<f64>, ChainDiagnostics)> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let steps = POLYTOPE_CHAIN_LEN.min(count - c * POLYTOPE_CHAIN_LEN);
            let mut rng = rng::stream(seed, Domain::Chains, c as u64);
            let mut out = Vec::with_capacity(steps * n);
            let diag = polytope::run_chain(
                poly,
                poly.interior_point(),
                HitAndRunConfig::with_defaults(n, steps),
                &mut rng,
                &mut out,
            );
            (out, diag)
        })
        .collect();
    let mut diag = ChainDiagnostics::default();
    let mut data = Vec::with_capacity(count * n);
    for (part, d) in &parts {
        diag.merge(d);
        data.extend_from_slice(part);
    }
    Ok((SampleBatch::from_parts(spec.clone(), seed, data)?, diag))
}

/// Uniform points on the unit sphere Sⁿ⁻¹.
pub fn sample_sphere(n: usize, count: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(invalid("sphere dimension must be positive"));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut data = vec![0.0; count * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = rng::stream(seed, Domain::Rows, i as u64);
        unit_vector(&mut rng, row);
    });
    // provenance label only: the rows are not isotropic
    let spec = DistributionSpec::gaussian(n)?;
    SampleBatch::from_parts(spec, seed, data)
}
