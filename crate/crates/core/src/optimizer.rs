//! Lifetime-constrained maximization of lifetime throughput over the
//! transmission probability, for both schemes.
//!
//! The saturated-branch throughput is unimodal in the success probability
//! with its peak at p_m, a function of n and P_T/P_W only. Together with
//! the saturation boundary λ_M and the threshold lifetime T0* this yields
//! a three-case closed-form optimum; when the lifetime constraint binds,
//! the optimal success probability p_c solves T(p_c) = T_0 on the
//! saturated branch, which is monotone in p, so bracketed bisection is
//! unconditionally convergent.

use crate::cb::{self, Regime};
use crate::lambertw::lambert_w0;
use crate::model::{CbParams, EnergyProfile, PbParams};
use serde::Serialize;
use thiserror::Error;

/// Default |Δp| tolerance for the critical-probability bisection.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OptError {
    #[error("lifetime target {t0:e} outside ({t0_star:e}, {t_max:e}]")]
    TargetOutOfRange { t0: f64, t0_star: f64, t_max: f64 },
}

/// Which closed-form case produced the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// Constraint inactive, unsaturated arrivals: optimum at p_L.
    UnconstrainedUnsaturated,
    /// Constraint inactive, saturated arrivals: optimum at p_m.
    UnconstrainedSaturated,
    /// Constraint active: optimum at p_c with T(p_c) = T_0.
    LifetimeConstrained,
    Infeasible,
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaseTag::UnconstrainedUnsaturated => "unconstrained_unsaturated",
            CaseTag::UnconstrainedSaturated => "unconstrained_saturated",
            CaseTag::LifetimeConstrained => "lifetime_constrained",
            CaseTag::Infeasible => "infeasible",
        })
    }
}

/// Optimal transmission probability: a point, or a closed interval of
/// equally optimal values (every q in the steady interval yields the same
/// unsaturated throughput).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QOpt {
    Point(f64),
    Interval { lo: f64, hi: f64 },
}

impl QOpt {
    /// Single representative value: the midpoint of an interval.
    pub fn representative(&self) -> f64 {
        match *self {
            QOpt::Point(q) => q,
            QOpt::Interval { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            QOpt::Point(q) => (q, q),
            QOpt::Interval { lo, hi } => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptResult {
    pub feasible: bool,
    pub u_max: f64,
    pub q_opt: QOpt,
    /// Success probability at the optimum.
    pub p_opt: f64,
    pub regime: Regime,
    pub case: CaseTag,
}

impl OptResult {
    fn infeasible() -> Self {
        OptResult {
            feasible: false,
            u_max: 0.0,
            q_opt: QOpt::Point(f64::NAN),
            p_opt: f64::NAN,
            regime: Regime::Saturated,
            case: CaseTag::Infeasible,
        }
    }
}

/// The derived quantities Theorem-style case dispatch rests on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Saturated-branch peak success probability p_m ∈ [1/e, 1).
    pub peak_p: f64,
    /// Saturation boundary arrival rate λ_M.
    pub saturation_rate: f64,
    /// Threshold lifetime T0* below which the constraint is inactive.
    pub lifetime_knee: f64,
    /// Critical success probability, present only when the constraint binds.
    pub critical_p: Option<f64>,
}

/// p_m = exp((n - √(n² + 4n(r-1))) / (2(r-1))), rewritten as
/// exp(-2n / (n + √(n² + 4n(r-1)))) which is exact at r = 1 and avoids
/// the cancellation of the literal form for r near 1.
pub fn peak_success_prob(nodes: u32, power_ratio: f64) -> f64 {
    let n = nodes as f64;
    let s = (n * n + 4.0 * n * (power_ratio - 1.0)).sqrt();
    (-2.0 * n / (n + s)).exp()
}

/// Arrival-rate boundary λ_M between the unsaturated and saturated
/// regimes of the connection-based scheme.
pub fn cb_saturation_boundary(
    nodes: u32,
    data_slots: f64,
    overhead_slots: f64,
    power_ratio: f64,
) -> f64 {
    let n = nodes as f64;
    let pm = peak_success_prob(nodes, power_ratio);
    let v = pm * pm.ln();
    (data_slots / n) * v / (v * (data_slots + overhead_slots - 1.0) - 1.0)
}

/// Packet-based saturation boundary; algebraically equal to the
/// connection-based boundary at M = 1, δ = 0.
pub fn pb_saturation_boundary(nodes: u32, power_ratio: f64) -> f64 {
    let n = nodes as f64;
    let s = (n * n + 4.0 * n * (power_ratio - 1.0)).sqrt();
    2.0 * peak_success_prob(nodes, power_ratio) / (n + s)
}

/// Threshold lifetime T0* = max{T(p_L), T(p_m)} for the connection-based
/// scheme; `tx_prob` is ignored, it is the optimization variable.
pub fn cb_lifetime_knee(p: &CbParams, e: &EnergyProfile) -> f64 {
    let pm = peak_success_prob(p.nodes, e.power_ratio());
    let t_at_pm = cb::saturated_lifetime(p, e, pm);
    let region = cb::steady_interval(p);
    if region.defined {
        t_at_pm.max(cb::unsaturated_lifetime(p, e, region.p_large))
    } else {
        t_at_pm
    }
}

/// Packet-based T0*: the unsaturated lifetime at min{λ_P, λ_M}.
pub fn pb_lifetime_knee(p: &PbParams, e: &EnergyProfile) -> f64 {
    let n = p.nodes as f64;
    let lam_eff = p
        .arrival_rate
        .min(pb_saturation_boundary(p.nodes, e.power_ratio()));
    if lam_eff == 0.0 {
        return e.max_lifetime();
    }
    // a = -n·λ ≥ -1/e is guaranteed by λ ≤ λ_M.
    let p_fix = lambert_w0(-n * lam_eff)
        .expect("argument inside domain by construction")
        .exp();
    let drain = lam_eff * (e.p_tx - e.p_wait) / p_fix;
    e.budget / (drain + e.p_wait)
}

/// Critical success probability for the connection-based scheme: the
/// unique root of T(p) = t0 in (max(p_L, p_m), 1), by bisection to |Δp| ≤ tol.
pub fn cb_critical_p(
    p: &CbParams,
    e: &EnergyProfile,
    t0: f64,
    tol: f64,
) -> Result<f64, OptError> {
    let t0_star = cb_lifetime_knee(p, e);
    let t_max = e.max_lifetime();
    if !(t0 > t0_star && t0 <= t_max) {
        return Err(OptError::TargetOutOfRange { t0, t0_star, t_max });
    }
    let pm = peak_success_prob(p.nodes, e.power_ratio());
    let region = cb::steady_interval(p);
    let mut lo = if region.defined {
        pm.max(region.p_large)
    } else {
        pm
    };
    let mut hi = 1.0 - 1e-12;
    if cb::saturated_lifetime(p, e, hi) < t0 {
        // Target within one part in 1e12 of the absolute maximum; the
        // closest representable operating point is the bracket top.
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if cb::saturated_lifetime(p, e, mid) >= t0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The upper end satisfies the constraint.
    Ok(hi)
}

/// Packet-based critical probability, in closed form by inverting the
/// saturated lifetime.
pub fn pb_critical_p(p: &PbParams, e: &EnergyProfile, t0: f64) -> Result<f64, OptError> {
    let t0_star = pb_lifetime_knee(p, e);
    let t_max = e.max_lifetime();
    if !(t0 > t0_star && t0 <= t_max) {
        return Err(OptError::TargetOutOfRange { t0, t0_star, t_max });
    }
    let n = p.nodes as f64;
    Ok((-n * (e.budget / t0 - e.p_wait) / (e.p_tx - e.p_wait)).exp())
}

/// Maximize the connection-based lifetime throughput over q subject to a
/// minimum expected lifetime t0. `p.tx_prob` is ignored.
pub fn optimize_cb(p: &CbParams, e: &EnergyProfile, t0: f64) -> OptResult {
    optimize_cb_tol(p, e, t0, ROOT_TOL)
}

/// As [`optimize_cb`] with an explicit bisection tolerance.
pub fn optimize_cb_tol(p: &CbParams, e: &EnergyProfile, t0: f64, tol: f64) -> OptResult {
    if t0 > e.max_lifetime() {
        return OptResult::infeasible();
    }
    let n = p.nodes as f64;
    let t0_star = cb_lifetime_knee(p, e);
    if t0 <= t0_star {
        let lam_m = cb_saturation_boundary(
            p.nodes,
            p.data_slots,
            p.overhead_slots,
            e.power_ratio(),
        );
        let region = cb::steady_interval(p);
        if p.arrival_rate <= lam_m && region.defined {
            return OptResult {
                feasible: true,
                u_max: cb::unsaturated_lifetime_throughput(p, e, region.p_large),
                q_opt: QOpt::Interval {
                    lo: region.q_lo,
                    hi: region.q_hi,
                },
                p_opt: region.p_large,
                regime: Regime::Unsaturated,
                case: CaseTag::UnconstrainedUnsaturated,
            };
        }
        let pm = peak_success_prob(p.nodes, e.power_ratio());
        return OptResult {
            feasible: true,
            u_max: cb::saturated_lifetime_throughput(p, e, pm),
            q_opt: QOpt::Point(-pm.ln() / n),
            p_opt: pm,
            regime: Regime::Saturated,
            case: CaseTag::UnconstrainedSaturated,
        };
    }
    let pc = cb_critical_p(p, e, t0, tol).expect("t0 in (t0_star, t_max] by dispatch");
    OptResult {
        feasible: true,
        u_max: cb::saturated_lifetime_throughput(p, e, pc),
        q_opt: QOpt::Point(-pc.ln() / n),
        p_opt: pc,
        regime: Regime::Saturated,
        case: CaseTag::LifetimeConstrained,
    }
}

/// Packet-based optimum; thresholds use the packet-based closed forms,
/// evaluation delegates through the M = 1, δ = 0 reduction.
pub fn optimize_pb(p: &PbParams, e: &EnergyProfile, t0: f64) -> OptResult {
    if t0 > e.max_lifetime() {
        return OptResult::infeasible();
    }
    let cbp = p.as_cb();
    let n = p.nodes as f64;
    let t0_star = pb_lifetime_knee(p, e);
    if t0 <= t0_star {
        let lam_m = pb_saturation_boundary(p.nodes, e.power_ratio());
        let region = cb::steady_interval(&cbp);
        if p.arrival_rate <= lam_m && region.defined {
            return OptResult {
                feasible: true,
                u_max: cb::unsaturated_lifetime_throughput(&cbp, e, region.p_large),
                q_opt: QOpt::Interval {
                    lo: region.q_lo,
                    hi: region.q_hi,
                },
                p_opt: region.p_large,
                regime: Regime::Unsaturated,
                case: CaseTag::UnconstrainedUnsaturated,
            };
        }
        let pm = peak_success_prob(p.nodes, e.power_ratio());
        return OptResult {
            feasible: true,
            u_max: cb::saturated_lifetime_throughput(&cbp, e, pm),
            q_opt: QOpt::Point(-pm.ln() / n),
            p_opt: pm,
            regime: Regime::Saturated,
            case: CaseTag::UnconstrainedSaturated,
        };
    }
    let pc = pb_critical_p(p, e, t0).expect("t0 in (t0_star, t_max] by dispatch");
    OptResult {
        feasible: true,
        u_max: cb::saturated_lifetime_throughput(&cbp, e, pc),
        q_opt: QOpt::Point(-pc.ln() / n),
        p_opt: pc,
        regime: Regime::Saturated,
        case: CaseTag::LifetimeConstrained,
    }
}

/// Threshold bundle for reporting alongside an optimization.
pub fn cb_thresholds(p: &CbParams, e: &EnergyProfile, t0: f64) -> Thresholds {
    let knee = cb_lifetime_knee(p, e);
    Thresholds {
        peak_p: peak_success_prob(p.nodes, e.power_ratio()),
        saturation_rate: cb_saturation_boundary(
            p.nodes,
            p.data_slots,
            p.overhead_slots,
            e.power_ratio(),
        ),
        lifetime_knee: knee,
        critical_p: cb_critical_p(p, e, t0, ROOT_TOL).ok(),
    }
}

pub fn pb_thresholds(p: &PbParams, e: &EnergyProfile, t0: f64) -> Thresholds {
    let knee = pb_lifetime_knee(p, e);
    Thresholds {
        peak_p: peak_success_prob(p.nodes, e.power_ratio()),
        saturation_rate: pb_saturation_boundary(p.nodes, e.power_ratio()),
        lifetime_knee: knee,
        critical_p: pb_critical_p(p, e, t0).ok(),
    }
}
