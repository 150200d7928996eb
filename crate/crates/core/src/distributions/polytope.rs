//! Bounded polytopes in H-representation and the hit-and-run walk over them.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{unit_vector, DistributionSpec, SampleBatch};
use crate::error::{invalid, Error, Result};

/// Chords shorter than this are treated as degenerate and the direction is redrawn.
pub const MIN_CHORD: f64 = 1e-12;

/// One facet inequality `normal · x ≤ offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// A bounded, full-dimensional polytope `{x : A x ≤ b}` together with a strictly
/// interior point.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    halfspaces: Vec<Halfspace>,
    interior: Vec<f64>,
}

impl Polytope {
    /// Validates boundedness and finds an interior point (the Chebyshev center)
    /// when none is given.
    pub fn new(halfspaces: Vec<Halfspace>, interior: Option<Vec<f64>>) -> Result<Self> {
        let dim = halfspaces
            .first()
            .map(|h| h.normal.len())
            .ok_or_else(|| Error::InvalidSpec("polytope needs at least one halfspace".into()))?;
        if dim == 0 {
            return Err(Error::InvalidSpec("polytope dimension must be positive".into()));
        }
        for (i, h) in halfspaces.iter().enumerate() {
            if h.normal.len() != dim {
                return Err(Error::InvalidSpec(format!(
                    "halfspace {i} has {} coefficients, expected {dim}",
                    h.normal.len()
                )));
            }
            if !h.offset.is_finite() || h.normal.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidSpec(format!("halfspace {i} is not finite")));
            }
            if norm(&h.normal) == 0.0 {
                return Err(Error::InvalidSpec(format!("halfspace {i} has a zero normal")));
            }
        }
        check_bounded(&halfspaces, dim)?;
        let interior = match interior {
            Some(x) => {
                if x.len() != dim {
                    return Err(Error::InvalidSpec(format!(
                        "interior point has {} coordinates, expected {dim}",
                        x.len()
                    )));
                }
                if min_slack(&halfspaces, &x) <= 0.0 {
                    return Err(Error::InvalidSpec("given interior point is not strictly feasible".into()));
                }
                x
            }
            None => chebyshev_center(&halfspaces, dim)?,
        };
        Ok(Polytope {
            dim,
            halfspaces,
            interior,
        })
    }

    /// The box `[lo, hi]ⁿ`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        let mut hs = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            hs.push(Halfspace { normal: e.clone(), offset: hi });
            e[j] = -1.0;
            hs.push(Halfspace { normal: e, offset: -lo });
        }
        Polytope::new(hs, None)
    }

    /// The standard simplex `{x ≥ 0, Σ xᵢ ≤ 1}`.
    pub fn standard_simplex(dim: usize) -> Result<Self> {
        let mut hs = Vec::with_capacity(dim + 1);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = -1.0;
            hs.push(Halfspace { normal: e, offset: 0.0 });
        }
        hs.push(Halfspace {
            normal: vec![1.0; dim],
            offset: 1.0,
        });
        Polytope::new(hs, None)
    }

    /// A random polytope: `facets` uniformly random unit normals with offsets in
    /// `[0.5, 1.5]`, plus the 2·dim axis facets at distance 2 so the body is
    /// always bounded.
    pub fn random(dim: usize, facets: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut hs = Vec::with_capacity(facets + 2 * dim);
        for _ in 0..facets {
            let mut a = vec![0.0; dim];
            unit_vector(rng, &mut a);
            hs.push(Halfspace {
                normal: a,
                offset: rng.random_range(0.5..1.5),
            });
        }
        for j in 0..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[j] = s;
                hs.push(Halfspace { normal: e, offset: 2.0 });
            }
        }
        Polytope::new(hs, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn interior_point(&self) -> &[f64] {
        &self.interior
    }

    /// Smallest slack `bᵢ − aᵢ·x`; positive iff `x` is strictly inside.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        min_slack(&self.halfspaces, x)
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        self.min_slack(x) > 0.0
    }

    /// Parameter interval `[lo, hi]` of the chord `{x + λ d}` inside the body.
    pub fn chord(&self, x: &[f64], d: &[f64]) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for h in &self.halfspaces {
            let ad = dot(&h.normal, d);
            let slack = h.offset - dot(&h.normal, x);
            if ad > 0.0 {
                hi = hi.min(slack / ad);
            } else if ad < 0.0 {
                lo = lo.max(slack / ad);
            }
        }
        (lo, hi)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn min_slack(hs: &[Halfspace], x: &[f64]) -> f64 {
    hs.iter()
        .map(|h| h.offset - dot(&h.normal, x))
        .fold(f64::INFINITY, f64::min)
}

fn check_bounded(hs: &[Halfspace], dim: usize) -> Result<()> {
    for j in 0..dim {
        for dir in [OptimizationDirection::Maximize, OptimizationDirection::Minimize] {
            let mut lp = Problem::new(dir);
            let vars: Vec<_> = (0..dim)
                .map(|i| lp.add_var(if i == j { 1.0 } else { 0.0 }, (f64::NEG_INFINITY, f64::INFINITY)))
                .collect();
            for h in hs {
                let expr: Vec<_> = vars.iter().copied().zip(h.normal.iter().copied()).collect();
                lp.add_constraint(expr, ComparisonOp::Le, h.offset);
            }
            match lp.solve() {
                Ok(_) => {}
                Err(microlp::Error::Unbounded) => {
                    return Err(Error::InvalidSpec(format!("polytope is unbounded along coordinate {j}")))
                }
                Err(microlp::Error::Infeasible) => {
                    return Err(Error::InvalidSpec("polytope is empty".into()))
                }
                Err(e) => return Err(Error::InvalidSpec(format!("LP failure: {e}"))),
            }
        }
    }
    Ok(())
}

/// Center of the largest inscribed ball: maximize ρ s.t. aᵢ·x + ρ‖aᵢ‖ ≤ bᵢ.
fn chebyshev_center(hs: &[Halfspace], dim: usize) -> Result<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = (0..dim)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let radius = lp.add_var(1.0, (0.0, f64::INFINITY));
    for h in hs {
        let mut expr: Vec<_> = xs.iter().copied().zip(h.normal.iter().copied()).collect();
        expr.push((radius, norm(&h.normal)));
        lp.add_constraint(expr, ComparisonOp::Le, h.offset);
    }
    let sol = match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => sol,
        Ok(SolveOutcome::Interrupted(_)) => {
            return Err(Error::InvalidSpec("interior point search was interrupted".into()))
        }
        Err(microlp::Error::Infeasible) => return Err(Error::InvalidSpec("polytope is empty".into())),
        Err(e) => return Err(Error::InvalidSpec(format!("LP failure: {e}"))),
    };
    if sol[radius] <= 1e-9 {
        return Err(Error::InvalidSpec("polytope has no interior point".into()));
    }
    let center: Vec<f64> = xs.iter().map(|&v| sol[v]).collect();
    if min_slack(hs, &center) <= 0.0 {
        return Err(Error::InvalidSpec("interior point search returned a boundary point".into()));
    }
    Ok(center)
}

/// Hit-and-run schedule. `steps` counts retained points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitAndRunConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl HitAndRunConfig {
    /// Burn-in 50·n² and thinning n.
    pub fn with_defaults(dim: usize, steps: usize) -> Self {
        HitAndRunConfig {
            steps,
            burn_in: 50 * dim * dim,
            thinning: dim.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub iterations: u64,
    pub degenerate_chords: u64,
    pub boundary_redraws: u64,
}

impl ChainDiagnostics {
    pub fn merge(&mut self, other: &ChainDiagnostics) {
        self.iterations += other.iterations;
        self.degenerate_chords += other.degenerate_chords;
        self.boundary_redraws += other.boundary_redraws;
    }
}

#[derive(Debug, Clone)]
pub struct HitAndRunOutput {
    pub batch: SampleBatch,
    pub diagnostics: ChainDiagnostics,
}

/// Runs one hit-and-run chain and returns the retained states.
pub fn hit_and_run_chain(
    polytope: &Polytope,
    start: &[f64],
    config: HitAndRunConfig,
    seed: u64,
) -> Result<HitAndRunOutput> {
    if config.steps == 0 {
        return Err(invalid("hit-and-run needs at least one retained step"));
    }
    if config.thinning == 0 {
        return Err(invalid("thinning must be at least 1"));
    }
    if start.len() != polytope.dim() {
        return Err(invalid(format!(
            "start point has {} coordinates, polytope has dimension {}",
            start.len(),
            polytope.dim()
        )));
    }
    if !polytope.contains_strictly(start) {
        return Err(invalid("start point is not strictly inside the polytope"));
    }
    let mut rng = crate::rng::stream(seed, crate::rng::Domain::Chains, 0);
    let mut data = Vec::with_capacity(config.steps * polytope.dim());
    let diagnostics = run_chain(polytope, start, config, &mut rng, &mut data);
    let spec = DistributionSpec::polytope(polytope.clone());
    let batch = SampleBatch::from_parts(spec, seed, data)?;
    Ok(HitAndRunOutput { batch, diagnostics })
}

pub(crate) fn run_chain(
    polytope: &Polytope,
    start: &[f64],
    config: HitAndRunConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<f64>,
) -> ChainDiagnostics {
    let dim = polytope.dim();
    let mut x = start.to_vec();
    let mut d = vec![0.0; dim];
    let mut diag = ChainDiagnostics::default();
    let total = config.burn_in + config.steps * config.thinning;
    for it in 0..total {
        loop {
            unit_vector(rng, &mut d);
            let (lo, hi) = polytope.chord(&x, &d);
            if !(hi - lo >= MIN_CHORD) {
                diag.degenerate_chords += 1;
                continue;
            }
            let lambda = rng.random_range(lo..hi);
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + lambda * di).collect();
            if polytope.contains_strictly(&cand) {
                x = cand;
                break;
            }
            diag.boundary_redraws += 1;
        }
        diag.iterations += 1;
        if it >= config.burn_in && (it - config.burn_in + 1).is_multiple_of(config.thinning) {
            out.extend_from_slice(&x);
        }
    }
    diag
}
