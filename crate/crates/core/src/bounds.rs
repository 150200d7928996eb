//! Tail and moment bounds for isotropic log-concave vectors as executable
//! formulas, their envelopes (the range of t where each bound is asserted),
//! and the search for the smallest constant a set of measurements supports.
//!
//! Every bound involves an unspecified universal constant C. Each family
//! exposes `rhs(cell; C)` and whether a cell lies in the envelope for C. A
//! larger C always weakens the bound and shrinks the envelope, so the set of
//! constants consistent with a fixed set of cells is upward closed.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A bound value together with whether its envelope condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub rhs: f64,
    pub in_envelope: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    Ok(())
}

/// exp(−t√n); asserted for t ≥ 1 on the event {|X| ≥ C·t·√n}.
pub fn paouris_rhs(t: f64, n: usize) -> Evaluated {
    Evaluated {
        rhs: (-t * (n as f64).sqrt()).exp(),
        in_envelope: t >= 1.0,
    }
}

/// C·log(en/k), the start of the order-statistic envelope.
pub fn orderstat_envelope(n: usize, k: usize, c: f64) -> f64 {
    c * (E * n as f64 / k as f64).ln()
}

/// exp(−kt/C) for t ≥ C·log(en/k) (unconditional vectors).
pub fn uncond_orderstat_rhs(n: usize, k: usize, t: f64, c: f64) -> Result<Evaluated> {
    check_k(n, k)?;
    check_positive("C", c)?;
    Ok(Evaluated {
        rhs: (-(k as f64) * t / c).exp(),
        in_envelope: t >= orderstat_envelope(n, k, c),
    })
}

/// The union-bound step (2en/k)ᵏ·exp(−kt/C) that precedes the unconditional bound.
pub fn union_bound_intermediate(n: usize, k: usize, t: f64, c: f64) -> Result<f64> {
    check_k(n, k)?;
    check_positive("C", c)?;
    let kf = k as f64;
    Ok((kf * (2.0 * E * n as f64 / kf).ln() - kf * t / c).exp())
}

/// exp(−√k·t/(3α)) for t ≥ 8α·log(en/k), under exponential concentration with α ≥ 1.
pub fn expconc_orderstat_rhs(n: usize, k: usize, t: f64, alpha: f64) -> Result<Evaluated> {
    check_k(n, k)?;
    if !(alpha >= 1.0) {
        return Err(invalid(format!("concentration constant α must be ≥ 1, got {alpha}")));
    }
    Ok(Evaluated {
        rhs: (-(k as f64).sqrt() * t / (3.0 * alpha)).exp(),
        in_envelope: t >= 8.0 * alpha * (E * n as f64 / k as f64).ln(),
    })
}

/// exp(−√k·t/C) for t ≥ C·log(en/k), any isotropic log-concave vector.
pub fn main_orderstat_rhs(n: usize, k: usize, t: f64, c: f64) -> Result<Evaluated> {
    check_k(n, k)?;
    check_positive("C", c)?;
    Ok(Evaluated {
        rhs: (-(k as f64).sqrt() * t / c).exp(),
        in_envelope: t >= orderstat_envelope(n, k, c),
    })
}

/// Chebyshev step behind the order-statistic bound: with p = t√k/(eC),
/// 2(Cp/(t√k))^{2p} collapses to 2e^{−2p}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReduction {
    pub p: f64,
    pub chebyshev: f64,
    pub closed_form: f64,
}

pub fn chebyshev_reduction(t: f64, k: usize, c: f64) -> Result<ChebyshevReduction> {
    check_positive("t", t)?;
    check_positive("C", c)?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let tk = t * (k as f64).sqrt();
    let p = tk / (E * c);
    Ok(ChebyshevReduction {
        p,
        chebyshev: 2.0 * (c * p / tk).powf(2.0 * p),
        closed_form: 2.0 * (-2.0 * p).exp(),
    })
}

/// (Cp)^{2p}, the bound on E(t²N_X(t))^p.
pub fn estn_rhs(p: f64, c: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("moment order must be ≥ 1, got {p}")));
    }
    check_positive("C", c)?;
    Ok((c * p).powf(2.0 * p))
}

/// Smallest t with t ≥ C·log(nt²/p²): the upper fixed point of
/// g(t) = C·log(nt²/p²).
///
/// g is concave with g′(t) = 2C/t, so g(t) − t peaks at t = 2C. Iteration
/// starts from max(C·log(n·max(C,1)²/p²), 2C), which lies on the contracting
/// side, and moves monotonically to the fixed point. If g(2C) < 2C every t
/// satisfies the condition and there is no threshold.
pub fn envelope_threshold_estn(n: usize, p: f64, c: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("moment order must be ≥ 1, got {p}")));
    }
    check_positive("C", c)?;
    let nf = n as f64;
    let g = |t: f64| c * (nf * t * t / (p * p)).ln();
    let apex = 2.0 * c;
    if g(apex) < apex {
        return Err(Error::EmptyEnvelope(format!(
            "t ↦ {c}·log({n}t²/{p}²) has no fixed point"
        )));
    }
    let mut t = (c * (nf * c.max(1.0).powi(2) / (p * p)).ln()).max(apex);
    let mut converged = false;
    for _ in 0..100 {
        let next = g(t);
        let done = (next - t).abs() <= 1e-10 * t;
        t = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged || (t - g(t)).abs() > 1e-8 * t {
        // near tangency the contraction factor 2C/t approaches 1; bisect instead
        let (mut lo, mut hi) = (apex, t.max(apex));
        while g(hi) > hi {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = hi;
    }
    if !((t - g(t)).abs() <= 1e-8 * t) {
        return Err(Error::EmptyEnvelope(format!("fixed-point iteration did not converge (t = {t})")));
    }
    if t < 1.0 {
        return Err(Error::EmptyEnvelope(format!("fixed point {t} lies below 1")));
    }
    Ok(t)
}

/// Whether t lies in the moment-bound envelope. Without a fixed point the
/// condition holds for every t, restricted to t ≥ 1.
pub fn estn_in_envelope(n: usize, p: f64, t: f64, c: f64) -> Result<bool> {
    match envelope_threshold_estn(n, p, c) {
        Ok(t_star) => Ok(t >= t_star),
        Err(Error::EmptyEnvelope(_)) => Ok(t >= 1.0),
        Err(e) => Err(e),
    }
}

/// Side conditions used inside the moment-bound argument, reported for
/// diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstNSideConditions {
    /// t√n ≥ 10p
    pub large_deviation_regime: bool,
    /// t²·n·e^{−t/C₁} ≤ p²
    pub marginal_tail_small: bool,
}

pub fn estn_side_conditions(n: usize, p: f64, t: f64, c1: f64) -> EstNSideConditions {
    let nf = n as f64;
    EstNSideConditions {
        large_deviation_regime: t * nf.sqrt() >= 10.0 * p,
        marginal_tail_small: t * t * nf * (-t / c1).exp() <= p * p,
    }
}

fn check_r_small(r: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&r) {
        return Err(invalid(format!("this bound needs r ∈ [1, 2], got {r}")));
    }
    Ok(())
}

/// exp(−t·n^{1/2−1/r}/C) for t ≥ C·n^{1/r}, r ∈ [1, 2].
pub fn lr_tail_small_rhs(t: f64, n: usize, r: f64, c: f64) -> Result<Evaluated> {
    check_r_small(r)?;
    check_positive("C", c)?;
    let nf = n as f64;
    Ok(Evaluated {
        rhs: (-t * nf.powf(0.5 - 1.0 / r) / c).exp(),
        in_envelope: t >= c * nf.powf(1.0 / r),
    })
}

/// exp(−t/C) for t ≥ C·r·n^{1/r}, r ≥ 2.
pub fn lr_tail_large_rhs(t: f64, n: usize, r: f64, c: f64) -> Result<Evaluated> {
    if !(r >= 2.0) || r.is_infinite() {
        return Err(invalid(format!("this bound needs finite r ≥ 2, got {r}")));
    }
    check_positive("C", c)?;
    Ok(Evaluated {
        rhs: (-t / c).exp(),
        in_envelope: t >= c * r * (n as f64).powf(1.0 / r),
    })
}

/// exp(−t/C) for t ≥ C·log n.
pub fn linf_tail_rhs(t: f64, n: usize, c: f64) -> Result<Evaluated> {
    check_positive("C", c)?;
    Ok(Evaluated {
        rhs: (-t / c).exp(),
        in_envelope: t >= c * (n as f64).ln(),
    })
}

/// ((r−2)/r)^{1/r}; tends to 1 as r → ∞ and to 0 as r ↓ 2.
pub fn estlarger_prefactor(r: f64) -> Result<f64> {
    if !(r > 2.0) {
        return Err(invalid(format!("needs r > 2, got {r}")));
    }
    if r.is_infinite() {
        return Ok(1.0);
    }
    Ok(((r - 2.0) / r).powf(1.0 / r))
}

/// C·(r·n^{1/r} + (r/(r−2))^{1/r}·log n).
pub fn estlarger_envelope(n: usize, r: f64, c: f64) -> Result<f64> {
    let pre = estlarger_prefactor(r)?;
    let nf = n as f64;
    Ok(c * (r * nf.powf(1.0 / r) + nf.ln() / pre))
}

/// exp(−((r−2)/r)^{1/r}·t/C) beyond [`estlarger_envelope`], r > 2.
pub fn estlarger_rhs(t: f64, n: usize, r: f64, c: f64) -> Result<Evaluated> {
    check_positive("C", c)?;
    let pre = estlarger_prefactor(r)?;
    Ok(Evaluated {
        rhs: (-pre * t / c).exp(),
        in_envelope: t >= estlarger_envelope(n, r, c)?,
    })
}

/// Cap C·δ^{−1/2} on the constants of the simplified r ≥ 2 + δ bound.
/// Meaningful for δ ≤ 1: beyond that the constants stay bounded below by 1.
pub fn larger_r_constant_cap(delta: f64, c: f64) -> Result<f64> {
    check_positive("δ", delta)?;
    check_positive("C", c)?;
    Ok(c / delta.sqrt())
}

/// Bound on (E‖X‖_r^p)^{1/p}: C(n^{1/r} + n^{1/r−1/2}p) for r ∈ [1, 2],
/// C(r·n^{1/r} + p) for r ∈ [2, ∞), C(log n + p) for r = ∞.
pub fn lr_moment_rhs(p: f64, n: usize, r: f64, c: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(invalid(format!("moment bound needs p ≥ 2, got {p}")));
    }
    if !(r >= 1.0) {
        return Err(invalid(format!("needs r ≥ 1, got {r}")));
    }
    check_positive("C", c)?;
    let nf = n as f64;
    Ok(if r.is_infinite() {
        c * (nf.ln() + p)
    } else if r <= 2.0 {
        c * (nf.powf(1.0 / r) + nf.powf(1.0 / r - 0.5) * p)
    } else {
        c * (r * nf.powf(1.0 / r) + p)
    })
}

/// C(r·n^{1/r} + (r/(r−2))^{1/r}(log n + p)), r > 2.
pub fn lr_moment_refined_rhs(p: f64, n: usize, r: f64, c: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(invalid(format!("moment bound needs p ≥ 2, got {p}")));
    }
    check_positive("C", c)?;
    let pre = estlarger_prefactor(r)?;
    let nf = n as f64;
    Ok(c * (r * nf.powf(1.0 / r) + (nf.ln() + p) / pre))
}

fn check_pa(p_a: f64) -> Result<()> {
    if !(p_a > 0.0 && p_a <= 1.0) {
        return Err(invalid(format!("P(A) must lie in (0, 1], got {p_a}")));
    }
    Ok(())
}

/// C·P(A)·(t⁻²·log²P(A) + n·e^{−t/C}); asserted for t ≥ C and P(A) ≤ 1/e.
pub fn cond1_rhs(p_a: f64, t: f64, n: usize, c: f64) -> Result<Evaluated> {
    check_pa(p_a)?;
    check_positive("C", c)?;
    check_positive("t", t)?;
    let l = p_a.ln();
    Ok(Evaluated {
        rhs: c * p_a * (l * l / (t * t) + n as f64 * (-t / c).exp()),
        in_envelope: t >= c && p_a <= 1.0 / E,
    })
}

/// C·u²·t⁻²·log²P(A), a bound on #{i : P(A ∩ {Xᵢ ≥ t}) ≥ e^{−u}P(A)};
/// asserted for 1 ≤ u ≤ t/C and P(A) ≤ 1/e.
pub fn cond2_count_rhs(p_a: f64, t: f64, u: f64, c: f64) -> Result<Evaluated> {
    check_pa(p_a)?;
    check_positive("C", c)?;
    check_positive("t", t)?;
    let l = p_a.ln();
    Ok(Evaluated {
        rhs: c * u * u * l * l / (t * t),
        in_envelope: u >= 1.0 && u <= t / c && p_a <= 1.0 / E,
    })
}

/// exp(−s√n/(C·A₁)) for s ≥ max(C·A₁, A₂): the Euclidean-norm tail implied by
/// moment bounds on N_{UX}(t) with constants (A₁, A₂).
pub fn norm_from_moments_rhs(s: f64, n: usize, a1: f64, a2: f64, c: f64) -> Result<Evaluated> {
    check_positive("A₁", a1)?;
    check_positive("C", c)?;
    Ok(Evaluated {
        rhs: (-s * (n as f64).sqrt() / (c * a1)).exp(),
        in_envelope: s >= (c * a1).max(a2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Paouris,
    UncondOrderStat,
    ExpConcOrderStat,
    MainOrderStat,
    EstNMoment,
    LrTailSmall,
    LrTailLarge,
    LinfTail,
    EstLarger,
    Cond1,
    Cond2,
    LrMomentSmall,
    LrMomentLarge,
    LinfMoment,
    NormFromMoments,
}

impl FamilyId {
    pub const ALL: [FamilyId; 15] = [
        FamilyId::Paouris,
        FamilyId::UncondOrderStat,
        FamilyId::ExpConcOrderStat,
        FamilyId::MainOrderStat,
        FamilyId::EstNMoment,
        FamilyId::LrTailSmall,
        FamilyId::LrTailLarge,
        FamilyId::LinfTail,
        FamilyId::EstLarger,
        FamilyId::Cond1,
        FamilyId::Cond2,
        FamilyId::LrMomentSmall,
        FamilyId::LrMomentLarge,
        FamilyId::LinfMoment,
        FamilyId::NormFromMoments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyId::Paouris => "paouris",
            FamilyId::UncondOrderStat => "uncond_order_stat",
            FamilyId::ExpConcOrderStat => "exp_conc_order_stat",
            FamilyId::MainOrderStat => "main_order_stat",
            FamilyId::EstNMoment => "est_n_moment",
            FamilyId::LrTailSmall => "lr_tail_small",
            FamilyId::LrTailLarge => "lr_tail_large",
            FamilyId::LinfTail => "linf_tail",
            FamilyId::EstLarger => "est_larger",
            FamilyId::Cond1 => "cond1",
            FamilyId::Cond2 => "cond2",
            FamilyId::LrMomentSmall => "lr_moment_small",
            FamilyId::LrMomentLarge => "lr_moment_large",
            FamilyId::LinfMoment => "linf_moment",
            FamilyId::NormFromMoments => "norm_from_moments",
        }
    }

    /// Where the constant enters: the Paouris event threshold carries it,
    /// every other family carries it in the bound.
    pub fn constant_side(self) -> &'static str {
        match self {
            FamilyId::Paouris => "event",
            _ => "rhs",
        }
    }

    /// Families whose cells are probabilities (as opposed to moments or counts).
    pub fn is_tail(self) -> bool {
        !matches!(
            self,
            FamilyId::EstNMoment
                | FamilyId::Cond1
                | FamilyId::Cond2
                | FamilyId::LrMomentSmall
                | FamilyId::LrMomentLarge
                | FamilyId::LinfMoment
        )
    }
}

impl std::str::FromStr for FamilyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid(format!("unknown bound family {s:?}")))
    }
}

/// A bound family with its fixed parameters (always `n`; `a1`, `a2` for
/// [`FamilyId::NormFromMoments`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFamily {
    pub id: FamilyId,
    pub params: BTreeMap<String, f64>,
}

/// One measured grid cell. Which of `k`, `p`, `r`, `u`, `p_a` are set depends
/// on the family. For Paouris and NormFromMoments `t` is the threshold s of
/// the event {|X| ≥ s√n}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundCheck {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_a: Option<f64>,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: u64,
    /// Number of observed events for tail cells. Zero observed events cannot
    /// falsify any bound at this sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u64>,
}

impl BoundCheck {
    /// A cell whose value is known exactly (no sampling error).
    pub fn exact(t: f64, value: f64) -> Self {
        BoundCheck {
            t,
            empirical: value,
            ci_low: value,
            ci_high: value,
            ..Default::default()
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    pub fn with_p_a(mut self, p_a: f64) -> Self {
        self.p_a = Some(p_a);
        self
    }

    /// A tail cell from a Clopper–Pearson estimate.
    pub fn from_tail(t: f64, est: &crate::stats::TailEstimate) -> Self {
        BoundCheck {
            t,
            empirical: est.point,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            count: est.count,
            events: Some(est.successes),
            ..Default::default()
        }
    }

    /// A moment cell from a bootstrap estimate.
    pub fn from_moment(t: f64, est: &crate::stats::MomentEstimate) -> Self {
        BoundCheck {
            t,
            empirical: est.point,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            count: est.count,
            ..Default::default()
        }
    }
}

fn need<T>(v: Option<T>, what: &str, id: FamilyId) -> Result<T> {
    v.ok_or_else(|| invalid(format!("{} cells need `{what}`", id.name())))
}

impl BoundFamily {
    pub fn new(id: FamilyId, n: usize) -> Self {
        let mut params = BTreeMap::new();
        params.insert("n".to_string(), n as f64);
        BoundFamily { id, params }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| invalid(format!("{} needs parameter `{key}`", self.id.name())))
    }

    pub fn n(&self) -> Result<usize> {
        let n = self.param("n")?;
        if !(n >= 1.0) || n.fract() != 0.0 {
            return Err(invalid(format!("n must be a positive integer, got {n}")));
        }
        Ok(n as usize)
    }

    /// Whether constant `c` is admissible for this family (α ≥ 1 for the
    /// exponential-concentration family).
    pub fn admits(&self, c: f64) -> bool {
        c > 0.0 && (self.id != FamilyId::ExpConcOrderStat || c >= 1.0)
    }

    /// Bound value and envelope status of `cell` under constant `c`.
    pub fn evaluate(&self, cell: &BoundCheck, c: f64) -> Result<Evaluated> {
        let n = self.n()?;
        let id = self.id;
        match id {
            FamilyId::Paouris => {
                check_positive("C", c)?;
                Ok(paouris_rhs(cell.t / c, n))
            }
            FamilyId::UncondOrderStat => uncond_orderstat_rhs(n, need(cell.k, "k", id)?, cell.t, c),
            FamilyId::ExpConcOrderStat => expconc_orderstat_rhs(n, need(cell.k, "k", id)?, cell.t, c),
            FamilyId::MainOrderStat => main_orderstat_rhs(n, need(cell.k, "k", id)?, cell.t, c),
            FamilyId::EstNMoment => {
                let p = need(cell.p, "p", id)?;
                Ok(Evaluated {
                    rhs: estn_rhs(p, c)?,
                    in_envelope: estn_in_envelope(n, p, cell.t, c)?,
                })
            }
            FamilyId::LrTailSmall => lr_tail_small_rhs(cell.t, n, need(cell.r, "r", id)?, c),
            FamilyId::LrTailLarge => lr_tail_large_rhs(cell.t, n, need(cell.r, "r", id)?, c),
            FamilyId::LinfTail => linf_tail_rhs(cell.t, n, c),
            FamilyId::EstLarger => estlarger_rhs(cell.t, n, need(cell.r, "r", id)?, c),
            FamilyId::Cond1 => cond1_rhs(need(cell.p_a, "p_a", id)?, cell.t, n, c),
            FamilyId::Cond2 => cond2_count_rhs(need(cell.p_a, "p_a", id)?, cell.t, need(cell.u, "u", id)?, c),
            FamilyId::LrMomentSmall => {
                let r = need(cell.r, "r", id)?;
                check_r_small(r)?;
                Ok(Evaluated {
                    rhs: lr_moment_rhs(need(cell.p, "p", id)?, n, r, c)?,
                    in_envelope: true,
                })
            }
            FamilyId::LrMomentLarge => {
                let r = need(cell.r, "r", id)?;
                if !(r >= 2.0) || r.is_infinite() {
                    return Err(invalid(format!("lr_moment_large needs finite r ≥ 2, got {r}")));
                }
                Ok(Evaluated {
                    rhs: lr_moment_rhs(need(cell.p, "p", id)?, n, r, c)?,
                    in_envelope: true,
                })
            }
            FamilyId::LinfMoment => Ok(Evaluated {
                rhs: lr_moment_rhs(need(cell.p, "p", id)?, n, f64::INFINITY, c)?,
                in_envelope: true,
            }),
            FamilyId::NormFromMoments => norm_from_moments_rhs(cell.t, n, self.param("a1")?, self.param("a2")?, c),
        }
    }

    /// A cell is consistent with `c` when it lies outside the envelope, its
    /// upper CI endpoint is at most the bound, or no event was observed.
    pub fn cell_satisfied(&self, cell: &BoundCheck, c: f64) -> Result<(Evaluated, bool)> {
        let ev = self.evaluate(cell, c)?;
        let ok = !ev.in_envelope || cell.ci_high <= ev.rhs || cell.events == Some(0);
        Ok((ev, ok))
    }
}

/// C ∈ {0.25·2^{i/4}} up to 64.
pub fn default_search_grid() -> Vec<f64> {
    (0..=32).map(|i| 0.25 * 2f64.powf(i as f64 / 4.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// Some in-envelope cell exceeds the bound even at the largest grid value.
    NoQualifyingC,
}

/// A cell as it appears in a ledger, evaluated at the reported constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCell {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_a: Option<f64>,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: u64,
    pub rhs: f64,
    pub in_envelope: bool,
    /// In the envelope for at least one grid constant.
    pub constrained: bool,
    pub satisfied: bool,
    /// Moment-bound side conditions at the reported constant (diagnostic only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_conditions: Option<EstNSideConditions>,
}

/// Fitted constant for one family over a set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub family: FamilyId,
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "fitted_C")]
    pub fitted_c: Option<f64>,
    pub status: FitStatus,
    pub constant_side: String,
    pub search_grid: Vec<f64>,
    pub cells: Vec<LedgerCell>,
    /// Indices of cells that violate the bound at the largest grid constant.
    pub violations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ConstantLedger {
    /// Cells that constrain no grid constant.
    pub fn unconstrained(&self) -> impl Iterator<Item = &LedgerCell> {
        self.cells.iter().filter(|c| !c.constrained)
    }

    pub const CSV_HEADER: &'static str =
        "family,distribution,n,t,k,p,r,u,p_a,empirical,ci_low,ci_high,count,rhs,in_envelope,constrained,satisfied,fitted_C";

    /// Plot-ready rows: one per cell.
    pub fn csv_rows(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let n = self.params.get("n").map(|v| v.to_string()).unwrap_or_default();
        let fitted = self.fitted_c.map(|c| c.to_string()).unwrap_or_default();
        self.cells
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{},{:e},{},{},{},{}",
                    self.family.name(),
                    self.distribution.as_deref().unwrap_or(""),
                    n,
                    c.t,
                    c.k.map(|k| k.to_string()).unwrap_or_default(),
                    opt(c.p),
                    opt(c.r),
                    opt(c.u),
                    opt(c.p_a),
                    c.empirical,
                    c.ci_low,
                    c.ci_high,
                    c.count,
                    c.rhs,
                    c.in_envelope,
                    c.constrained,
                    c.satisfied,
                    fitted
                )
            })
            .collect()
    }
}

/// Smallest grid constant under which every in-envelope cell is consistent
/// with the bound.
pub fn fit_constant(family: &BoundFamily, cells: &[BoundCheck], search_grid: &[f64]) -> Result<ConstantLedger> {
    if search_grid.is_empty() {
        return Err(invalid("constant search grid is empty"));
    }
    if search_grid.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(invalid("search grid values must be positive and finite"));
    }
    if search_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("search grid must be strictly increasing"));
    }
    if cells.is_empty() {
        return Err(invalid("no cells to fit"));
    }
    let grid: Vec<f64> = search_grid.iter().copied().filter(|&c| family.admits(c)).collect();
    if grid.is_empty() {
        return Err(invalid(format!("no admissible constant in the grid for {}", family.id.name())));
    }

    let mut constrained = vec![false; cells.len()];
    let mut fitted = None;
    for &c in &grid {
        let mut all_ok = true;
        for (i, cell) in cells.iter().enumerate() {
            let (ev, ok) = family.cell_satisfied(cell, c)?;
            constrained[i] |= ev.in_envelope;
            all_ok &= ok;
        }
        if all_ok && fitted.is_none() {
            fitted = Some(c);
        }
    }

    let report_c = fitted.unwrap_or(*grid.last().expect("nonempty"));
    let mut out = Vec::with_capacity(cells.len());
    let mut violations = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let (ev, ok) = family.cell_satisfied(cell, report_c)?;
        if !ok {
            violations.push(i);
        }
        out.push(LedgerCell {
            t: cell.t,
            k: cell.k,
            p: cell.p,
            r: cell.r,
            u: cell.u,
            p_a: cell.p_a,
            empirical: cell.empirical,
            ci_low: cell.ci_low,
            ci_high: cell.ci_high,
            count: cell.count,
            rhs: ev.rhs,
            in_envelope: ev.in_envelope,
            constrained: constrained[i],
            satisfied: ok,
            side_conditions: match (family.id, cell.p) {
                (FamilyId::EstNMoment, Some(p)) => Some(estn_side_conditions(family.n()?, p, cell.t, report_c)),
                _ => None,
            },
        });
    }
    Ok(ConstantLedger {
        family: family.id,
        params: family.params.clone(),
        fitted_c: fitted,
        status: if fitted.is_some() {
            FitStatus::Fitted
        } else {
            FitStatus::NoQualifyingC
        },
        constant_side: family.id.constant_side().to_string(),
        search_grid: grid,
        cells: out,
        violations,
        distribution: None,
        config_hash: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn paouris_examples() {
        assert!(close(paouris_rhs(1.0, 4).rhs, (-2.0f64).exp()));
        assert!(close(paouris_rhs(2.0, 1).rhs, (-2.0f64).exp()));
        assert!(!paouris_rhs(0.5, 4).in_envelope);
    }

    #[test]
    fn uncond_examples() {
        // n = e·k is not an integer; use n = k so envelope = C
        let n = 7;
        let ev = uncond_orderstat_rhs(n, n, 1.0, 1.0).unwrap();
        assert!(close(ev.rhs, (-7.0f64).exp()));
        assert!(ev.in_envelope);
        assert!(close(union_bound_intermediate(1, 1, 1.0, 1.0).unwrap(), 2.0 * E * (-1.0f64).exp()));
        assert!(!uncond_orderstat_rhs(8, 1, 1.0, 1.0).unwrap().in_envelope);
        assert!(uncond_orderstat_rhs(8, 9, 1.0, 1.0).is_err());
    }

    #[test]
    fn expconc_examples() {
        assert!(close(expconc_orderstat_rhs(4, 1, 3.0, 1.0).unwrap().rhs, (-1.0f64).exp()));
        assert!(close(expconc_orderstat_rhs(4, 4, 3.0, 1.0).unwrap().rhs, (-2.0f64).exp()));
        assert!(expconc_orderstat_rhs(4, 1, 3.0, 0.5).is_err());
        // envelope 8α·log(en/k) at k = n is 8α
        assert!(expconc_orderstat_rhs(4, 4, 8.0, 1.0).unwrap().in_envelope);
        assert!(!expconc_orderstat_rhs(4, 4, 7.9, 1.0).unwrap().in_envelope);
    }

    #[test]
    fn main_examples() {
        let c = 2.5;
        assert!(close(main_orderstat_rhs(10, 1, c, c).unwrap().rhs, (-1.0f64).exp()));
        assert!(close(main_orderstat_rhs(10, 9, 2.0 * c, c).unwrap().rhs, (-6.0f64).exp()));
    }

    #[test]
    fn estn_examples() {
        assert_eq!(estn_rhs(1.0, 1.0).unwrap(), 1.0);
        assert!(close(estn_rhs(2.0, 3.0).unwrap(), 1296.0));
        assert!(estn_rhs(0.5, 1.0).is_err());
    }

    #[test]
    fn estn_fixed_point_property() {
        for &n in &[16usize, 64, 256, 4096] {
            for &p in &[1.0, 2.0, 4.0] {
                for &c in &[0.5, 1.0, 3.0, 10.0] {
                    match envelope_threshold_estn(n, p, c) {
                        Ok(t) => {
                            let g = c * (n as f64 * t * t / (p * p)).ln();
                            assert!((t - g).abs() <= 1e-8 * t, "n={n} p={p} c={c}");
                            assert!(t >= 2.0 * c && t >= 1.0);
                        }
                        Err(Error::EmptyEnvelope(_)) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn estn_no_fixed_point_is_signalled() {
        // g(2C) = C·log(4nC²/p²) < 2C when n is tiny relative to p
        assert!(matches!(envelope_threshold_estn(1, 50.0, 0.1), Err(Error::EmptyEnvelope(_))));
        assert!(estn_in_envelope(1, 50.0, 1.5, 0.1).unwrap());
    }

    #[test]
    fn chebyshev_reduction_identity() {
        for &(t, k, c) in &[(3.0, 1, 1.0), (10.0, 16, 2.5), (50.0, 64, 0.7), (7.3, 5, 4.0)] {
            let red = chebyshev_reduction(t, k, c).unwrap();
            assert!((red.chebyshev - red.closed_form).abs() <= 1e-12 * red.closed_form);
        }
    }

    #[test]
    fn lr_tail_examples() {
        let s = lr_tail_small_rhs(5.0, 16, 2.0, 1.5).unwrap();
        let l = lr_tail_large_rhs(5.0, 16, 2.0, 1.5).unwrap();
        assert_eq!(s.rhs, l.rhs);
        assert!(!linf_tail_rhs(1.0, 3, 1.0).unwrap().in_envelope);
        // n = e is not an integer: at n = 3, t = log 3 sits on the boundary
        let ev = linf_tail_rhs(3f64.ln(), 3, 1.0).unwrap();
        assert!(ev.in_envelope && close(ev.rhs, 1.0 / 3.0));
        assert!(lr_tail_small_rhs(1.0, 4, 2.5, 1.0).is_err());
        assert!(lr_tail_large_rhs(1.0, 4, 1.5, 1.0).is_err());
    }

    #[test]
    fn estlarger_examples() {
        assert!(close(estlarger_prefactor(4.0).unwrap(), 0.5f64.powf(0.25)));
        assert!((estlarger_prefactor(1e9).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(estlarger_prefactor(f64::INFINITY).unwrap(), 1.0);
        assert!(estlarger_rhs(1.0, 4, 2.0, 1.0).is_err());
        assert!(close(larger_r_constant_cap(0.25, 3.0).unwrap(), 6.0));
        // (r/(r−2))^{1/r} ≤ 2·δ^{−1/2} for r ≥ 2 + δ, δ ≤ 1; for large δ the
        // left side stays ≥ 1 while δ^{−1/2} → 0
        for &d in &[0.01, 0.1, 0.5, 1.0] {
            for i in 0..50 {
                let r = 2.0 + d + i as f64 * 0.3;
                assert!(1.0 / estlarger_prefactor(r).unwrap() <= 2.0 / d.sqrt());
            }
        }
    }

    #[test]
    fn lr_moment_examples() {
        assert!(close(lr_moment_rhs(2.0, 4, 2.0, 1.0).unwrap(), 4.0));
        // n = e is not an integer: C(log n + p) at n = 3
        assert!(close(lr_moment_rhs(2.0, 3, f64::INFINITY, 1.0).unwrap(), 3f64.ln() + 2.0));
        assert!(close(lr_moment_rhs(2.0, 16, 4.0, 1.0).unwrap(), 4.0 * 2.0 + 2.0));
        assert!(lr_moment_rhs(1.5, 4, 2.0, 1.0).is_err());
        let refined = lr_moment_refined_rhs(2.0, 16, 4.0, 1.0).unwrap();
        assert!(close(refined, 8.0 + 2f64.powf(0.25) * (16f64.ln() + 2.0)));
    }

    #[test]
    fn cond_examples() {
        let pa = 1.0 / E;
        let ev = cond1_rhs(pa, 2.0, 10, 1.5).unwrap();
        assert!(close(ev.rhs, 1.5 * pa * (0.25 + 10.0 * (-2.0f64 / 1.5).exp())));
        assert!(ev.in_envelope);
        assert!(!cond1_rhs(0.5, 2.0, 10, 1.5).unwrap().in_envelope);
        let far = cond2_count_rhs(0.01, 1e6, 1.0, 1.0).unwrap();
        assert!(far.rhs < 1.0 && far.in_envelope);
        assert!(!cond2_count_rhs(0.01, 2.0, 3.0, 1.0).unwrap().in_envelope);
        assert!(cond1_rhs(0.0, 2.0, 10, 1.0).is_err());
    }

    #[test]
    fn fit_all_zero_is_vacuous() {
        let fam = BoundFamily::new(FamilyId::MainOrderStat, 16);
        let cells: Vec<_> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| BoundCheck {
                t,
                k: Some(1),
                count: 1000,
                ci_high: 0.0037,
                events: Some(0),
                ..Default::default()
            })
            .collect();
        let grid = default_search_grid();
        let l = fit_constant(&fam, &cells, &grid).unwrap();
        assert_eq!(l.fitted_c, Some(grid[0]));
        assert_eq!(l.status, FitStatus::Fitted);
    }

    #[test]
    fn fit_reports_no_qualifying_c() {
        let fam = BoundFamily::new(FamilyId::LinfTail, 2);
        // P = 1 at huge t violates every bound
        let cells = vec![BoundCheck::exact(1e4, 1.0)];
        let l = fit_constant(&fam, &cells, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(l.status, FitStatus::NoQualifyingC);
        assert_eq!(l.fitted_c, None);
        assert_eq!(l.violations, vec![0]);
    }

    #[test]
    fn fit_marks_unconstrained_cells() {
        let fam = BoundFamily::new(FamilyId::MainOrderStat, 16);
        let cells = vec![BoundCheck::exact(0.1, 0.9).with_k(1), BoundCheck::exact(30.0, 0.0).with_k(1)];
        let l = fit_constant(&fam, &cells, &[1.0, 2.0]).unwrap();
        assert_eq!(l.unconstrained().count(), 1);
        assert!(!l.cells[0].constrained && l.cells[1].constrained);
    }

    #[test]
    fn fit_argument_errors() {
        let fam = BoundFamily::new(FamilyId::MainOrderStat, 16);
        let cell = [BoundCheck::exact(1.0, 0.1).with_k(1)];
        assert!(fit_constant(&fam, &cell, &[]).is_err());
        assert!(fit_constant(&fam, &cell, &[2.0, 1.0]).is_err());
        assert!(fit_constant(&fam, &[], &[1.0]).is_err());
        let missing_k = [BoundCheck::exact(1.0, 0.1)];
        assert!(fit_constant(&fam, &missing_k, &[1.0]).is_err());
    }

    #[test]
    fn expconc_fit_skips_alpha_below_one() {
        let fam = BoundFamily::new(FamilyId::ExpConcOrderStat, 4);
        let l = fit_constant(&fam, &[BoundCheck::exact(100.0, 0.0).with_k(1)], &default_search_grid()).unwrap();
        assert_eq!(l.fitted_c, Some(1.0));
    }

    #[test]
    fn ledger_json_shape() {
        let fam = BoundFamily::new(FamilyId::MainOrderStat, 16);
        let l = fit_constant(&fam, &[BoundCheck::exact(5.0, 1e-3).with_k(2)], &default_search_grid()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&l).unwrap();
        for key in ["family", "params", "fitted_C", "cells"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["t", "k", "empirical", "ci_high", "rhs", "in_envelope"] {
            assert!(v["cells"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(v["family"], "main_order_stat");
    }

    #[test]
    fn main_bound_dominates_marginal_tail() {
        let n = 64u64;
        let fam = BoundFamily::new(FamilyId::MainOrderStat, n as usize);
        let ts: Vec<f64> = (1..=80).map(|i| 0.25 * i as f64).collect();
        let cells: Vec<_> = ts
            .iter()
            .map(|&t| BoundCheck::exact(t, crate::distributions::orderstat_tail_exact(n, 1, t).unwrap()).with_k(1))
            .collect();
        let l = fit_constant(&fam, &cells, &default_search_grid()).unwrap();
        let c = l.fitted_c.unwrap();
        for &t in &ts {
            let ev = fam.evaluate(&BoundCheck::exact(t, 0.0).with_k(1), c).unwrap();
            if ev.in_envelope {
                assert!(ev.rhs >= (-std::f64::consts::SQRT_2 * t).exp(), "t={t}");
            }
        }
    }

    #[test]
    fn estn_ledger_logs_side_conditions() {
        let fam = BoundFamily::new(FamilyId::EstNMoment, 64);
        let l = fit_constant(&fam, &[BoundCheck::exact(5.0, 0.1).with_p(2.0)], &default_search_grid()).unwrap();
        assert!(l.cells[0].side_conditions.is_some());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_search_grid();
        assert_eq!(g[0], 0.25);
        assert_eq!(*g.last().unwrap(), 64.0);
        assert!(g.windows(2).all(|w| (w[1] / w[0] - 2f64.powf(0.25)).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn rhs_monotone_in_t_and_c(t1 in 0.1f64..50.0, dt in 0.0f64..20.0, c1 in 0.25f64..30.0, dc in 0.0f64..30.0, k in 1usize..64) {
            let n = 64;
            let (t2, c2) = (t1 + dt, c1 + dc);
            let fams = [FamilyId::MainOrderStat, FamilyId::UncondOrderStat, FamilyId::LinfTail, FamilyId::EstLarger, FamilyId::LrTailSmall, FamilyId::LrTailLarge];
            for id in fams {
                let fam = BoundFamily::new(id, n);
                let cell = |t: f64| BoundCheck::exact(t, 0.0).with_k(k).with_r(match id { FamilyId::EstLarger => 4.0, FamilyId::LrTailSmall => 1.5, _ => 3.0 });
                let a = fam.evaluate(&cell(t1), c1).unwrap();
                let b = fam.evaluate(&cell(t2), c1).unwrap();
                prop_assert!(b.rhs <= a.rhs);
                let w = fam.evaluate(&cell(t1), c2).unwrap();
                prop_assert!(w.rhs >= a.rhs);
                // larger C never enlarges the envelope
                prop_assert!(!w.in_envelope || a.in_envelope);
            }
        }

        #[test]
        fn orderstat_envelope_shape(n in 1usize..2000, c in 0.1f64..20.0) {
            let mut prev = f64::INFINITY;
            for k in 1..=n.min(200) {
                let e = orderstat_envelope(n, k, c);
                prop_assert!(e <= prev);
                prev = e;
            }
            prop_assert!((orderstat_envelope(n, n, c) - c).abs() <= 1e-12 * c);
        }

        #[test]
        fn more_cells_never_lower_the_constant(ts in prop::collection::vec(0.5f64..40.0, 1..12), extra in prop::collection::vec(0.5f64..40.0, 1..6)) {
            // exact iid-exponential tails for k = 1, n = 16
            let n = 16u64;
            let mk = |t: f64| BoundCheck::exact(t, crate::distributions::orderstat_tail_exact(n, 1, t).unwrap()).with_k(1);
            let fam = BoundFamily::new(FamilyId::MainOrderStat, n as usize);
            let grid = default_search_grid();
            let base: Vec<_> = ts.iter().map(|&t| mk(t)).collect();
            let mut more = base.clone();
            more.extend(extra.iter().map(|&t| mk(t)));
            let a = fit_constant(&fam, &base, &grid).unwrap().fitted_c.unwrap_or(f64::INFINITY);
            let b = fit_constant(&fam, &more, &grid).unwrap().fitted_c.unwrap_or(f64::INFINITY);
            prop_assert!(b >= a);
        }
    }
}
