//! Closed-form model of connection-based slotted Aloha under a per-node
//! energy budget: steady-state success probability, node throughput,
//! expected lifetime, lifetime throughput and per-state slot counts.
//!
//! The head-of-line request process has a steady operating point whenever
//! the transmission probability q lies in a closed interval obtained from
//! the two real branches of the Lambert W function; there the success
//! probability is the large root p_L and the node delivers exactly its
//! arrivals. Outside the interval (or when the offered load cannot be
//! stabilized at all) the network is saturated and the success probability
//! collapses to exp(-n·q). Both regimes meet continuously at the interval
//! endpoints.

use crate::lambertw::{lambert_w0, lambert_wm1};
use crate::model::{CbParams, EnergyProfile};
use serde::Serialize;

/// Operating regime of a node for a concrete transmission probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unsaturated,
    Saturated,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Unsaturated => "unsaturated",
            Regime::Saturated => "saturated",
        })
    }
}

/// The q-interval on which the desired fixed point exists, together with
/// both fixed-point success probabilities. `defined` is false when the
/// Lambert argument leaves [-1/e, 0] or the offered load exceeds the
/// stabilizable range; the network is then saturated for every q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyRegion {
    pub defined: bool,
    pub q_lo: f64,
    /// Upper endpoint clamped to 1.
    pub q_hi: f64,
    /// Large-root success probability p_L = exp(W0(a)).
    pub p_large: f64,
    /// Small-root success probability p_S = exp(W-1(a)).
    pub p_small: f64,
}

impl SteadyRegion {
    const UNDEFINED: SteadyRegion = SteadyRegion {
        defined: false,
        q_lo: f64::NAN,
        q_hi: f64::NAN,
        p_large: f64::NAN,
        p_small: f64::NAN,
    };

    pub fn contains(&self, q: f64) -> bool {
        self.defined && q >= self.q_lo && q <= self.q_hi
    }
}

/// Lambert argument a = -λ̂ / (M - λ̂(M+δ-1)), or None when the
/// denominator is not positive.
fn lambert_argument(p: &CbParams) -> Option<f64> {
    let lam_hat = p.aggregate_rate();
    let denom = p.data_slots - lam_hat * p.hold_slots();
    if denom <= 0.0 {
        return None;
    }
    Some(-lam_hat / denom)
}

/// Steady-operation interval of Eq.-(1) type for the given parameters.
pub fn steady_interval(p: &CbParams) -> SteadyRegion {
    let n = p.nodes as f64;
    if p.arrival_rate == 0.0 {
        // No traffic: the fixed point is p = 1 for every q.
        return SteadyRegion {
            defined: true,
            q_lo: 0.0,
            q_hi: 1.0,
            p_large: 1.0,
            p_small: 0.0,
        };
    }
    let Some(a) = lambert_argument(p) else {
        return SteadyRegion::UNDEFINED;
    };
    let (Ok(w0), Ok(wm1)) = (lambert_w0(a), lambert_wm1(a)) else {
        return SteadyRegion::UNDEFINED;
    };
    let q_lo = -w0 / n;
    let q_hi = (-wm1 / n).min(1.0);
    if q_lo > q_hi {
        // Whole interval above q = 1: unreachable operating point.
        return SteadyRegion::UNDEFINED;
    }
    SteadyRegion {
        defined: true,
        q_lo,
        q_hi,
        p_large: w0.exp(),
        p_small: wm1.exp(),
    }
}

/// Regime of the node at its configured transmission probability.
pub fn regime(p: &CbParams) -> Regime {
    if steady_interval(p).contains(p.tx_prob) {
        Regime::Unsaturated
    } else {
        Regime::Saturated
    }
}

/// Success probability of a head-of-line request transmission.
pub fn success_prob(p: &CbParams) -> f64 {
    let region = steady_interval(p);
    if region.contains(p.tx_prob) {
        region.p_large
    } else {
        (-(p.nodes as f64) * p.tx_prob).exp()
    }
}

/// Clamp a success probability away from the poles at 0 and 1 before logs.
fn guard_p(p: f64) -> f64 {
    p.clamp(1e-300, 1.0 - 1e-15)
}

/// Saturated-branch node throughput at success probability `p_succ`,
/// in data units per slot.
pub fn saturated_throughput(p: &CbParams, p_succ: f64) -> f64 {
    let n = p.nodes as f64;
    let ps = guard_p(p_succ);
    let u = -ps * ps.ln();
    p.data_slots * u / (n * (1.0 + u * p.hold_slots()))
}

/// Node throughput λ_out in data units per slot.
pub fn node_throughput(p: &CbParams) -> f64 {
    if p.tx_prob == 0.0 {
        return 0.0;
    }
    match regime(p) {
        Regime::Unsaturated => p.arrival_rate,
        Regime::Saturated => saturated_throughput(p, (-(p.nodes as f64) * p.tx_prob).exp()),
    }
}

/// Unsaturated-branch lifetime, valid when the steady region is defined;
/// depends on p_L and λ but not on q.
pub fn unsaturated_lifetime(p: &CbParams, e: &EnergyProfile, p_large: f64) -> f64 {
    let c = p.hold_slots();
    let pl = guard_p(p_large);
    let drain = (1.0 + c * pl) * p.arrival_rate * (e.p_tx - e.p_wait) / (p.data_slots * pl);
    e.budget / (drain + e.p_wait)
}

/// Saturated-branch lifetime at success probability `p_succ`.
pub fn saturated_lifetime(p: &CbParams, e: &EnergyProfile, p_succ: f64) -> f64 {
    let n = p.nodes as f64;
    let c = p.hold_slots();
    let ps = guard_p(p_succ);
    let plnp = ps * ps.ln();
    let num = e.budget * (1.0 - plnp * c);
    let den = e.p_wait - ((n - 1.0) * e.p_wait + e.p_tx) * c * plnp / n
        - (e.p_tx - e.p_wait) * ps.ln() / n;
    num / den
}

/// Expected node lifetime in slots.
pub fn lifetime(p: &CbParams, e: &EnergyProfile) -> f64 {
    let region = steady_interval(p);
    if region.contains(p.tx_prob) {
        unsaturated_lifetime(p, e, region.p_large)
    } else if p.tx_prob == 0.0 {
        // Pure waiting: ln p = 0 limit.
        e.max_lifetime()
    } else {
        saturated_lifetime(p, e, (-(p.nodes as f64) * p.tx_prob).exp())
    }
}

/// Unsaturated-branch lifetime throughput; zero traffic delivers nothing.
pub fn unsaturated_lifetime_throughput(p: &CbParams, e: &EnergyProfile, p_large: f64) -> f64 {
    if p.arrival_rate == 0.0 {
        return 0.0;
    }
    let c = p.hold_slots();
    let pl = guard_p(p_large);
    let den = (1.0 + c * pl) * (e.p_tx - e.p_wait) / (p.data_slots * pl)
        + e.p_wait / p.arrival_rate;
    e.budget / den
}

/// Saturated-branch lifetime throughput at success probability `p_succ`.
pub fn saturated_lifetime_throughput(p: &CbParams, e: &EnergyProfile, p_succ: f64) -> f64 {
    let n = p.nodes as f64;
    let c = p.hold_slots();
    let m = p.data_slots;
    let ps = guard_p(p_succ);
    let den = ((n - 1.0) * e.p_wait + e.p_tx) * c / m + (e.p_tx - e.p_wait) / (m * ps)
        - n * e.p_wait / (m * ps * ps.ln());
    e.budget / den
}

/// Expected data delivered over a node's whole lifetime, in data units
/// (packets for the packet-based special case).
pub fn lifetime_throughput(p: &CbParams, e: &EnergyProfile) -> f64 {
    let region = steady_interval(p);
    if region.contains(p.tx_prob) {
        unsaturated_lifetime_throughput(p, e, region.p_large)
    } else if p.tx_prob == 0.0 {
        0.0
    } else {
        saturated_lifetime_throughput(p, e, (-(p.nodes as f64) * p.tx_prob).exp())
    }
}

/// All per-operating-point outputs in one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub regime: Regime,
    pub p_success: f64,
    pub lambda_out: f64,
    pub lifetime: f64,
    pub lifetime_throughput: f64,
}

pub fn evaluate(p: &CbParams, e: &EnergyProfile) -> Evaluation {
    Evaluation {
        regime: regime(p),
        p_success: success_prob(p),
        lambda_out: node_throughput(p),
        lifetime: lifetime(p, e),
        lifetime_throughput: lifetime_throughput(p, e),
    }
}

/// Expected per-lifetime slot and attempt counts.
///
/// `idle`, `waiting` and `failed` are slot counts; `successes` counts
/// granted connections, each spanning M+δ slots. They satisfy
/// idle + waiting + failed + successes·(M+δ) = lifetime and the energy
/// balance P_W·(idle+waiting) + P_T·(failed + successes·(M+δ)) = E/σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateCounts {
    pub idle: f64,
    pub waiting: f64,
    pub failed: f64,
    pub successes: f64,
    /// Mean request service rate μ_r (successes per busy slot).
    pub service_rate: f64,
    /// Offered load ρ of the node's data queue; ≥ 1 when saturated.
    pub offered_load: f64,
}

/// Solve the per-state count system for the operating point.
///
/// Saturated: idle = 0 and μ_r comes from the saturated service-rate
/// closed form. Unsaturated: successes = λ·T/M (delivered equals
/// arrivals) and the failed/success ratio is (1-p)/p; the busy span per
/// request is the win time 1/(q·p_L) free slots, stretched by the slots
/// other nodes' data blocks hold, plus the own block's M+δ-1 continuation
/// slots. The steady-state fixed point makes this span exactly M/λ at
/// q = q_lo, so the idle share vanishes right at the regime boundary.
pub fn expected_state_counts(p: &CbParams, e: &EnergyProfile) -> StateCounts {
    let n = p.nodes as f64;
    let c = p.hold_slots();
    let m = p.data_slots;
    let span = m + p.overhead_slots;
    let t = lifetime(p, e);
    let region = steady_interval(p);
    if region.contains(p.tx_prob) {
        let pl = guard_p(region.p_large);
        let successes = p.arrival_rate * t / m;
        let failed = successes * (1.0 - pl) / pl;
        // Held-slot fractions: all blocks vs the node's own blocks.
        let held_all = p.aggregate_rate() * c / m;
        let held_own = p.arrival_rate * c / m;
        let service_slots = if p.tx_prob > 0.0 {
            (1.0 / (p.tx_prob * pl)) * (1.0 - held_own) / (1.0 - held_all) + c
        } else {
            f64::INFINITY
        };
        let busy = successes * service_slots;
        let waiting = (busy - failed - successes * span).max(0.0);
        let idle = (t - busy).max(0.0);
        StateCounts {
            idle,
            waiting,
            failed,
            successes,
            service_rate: if service_slots.is_finite() {
                1.0 / service_slots
            } else {
                0.0
            },
            offered_load: p.arrival_rate * service_slots / m,
        }
    } else if p.tx_prob == 0.0 {
        // Saturated with q = 0: the request is held forever.
        StateCounts {
            idle: 0.0,
            waiting: t,
            failed: 0.0,
            successes: 0.0,
            service_rate: 0.0,
            offered_load: f64::INFINITY,
        }
    } else {
        let ps = guard_p((-n * p.tx_prob).exp());
        let u = -ps * ps.ln();
        let service_rate = u / (n * (1.0 + u * c));
        let successes = service_rate * t;
        let failed = successes * (1.0 - ps) / ps;
        let waiting = (t - failed - successes * span).max(0.0);
        StateCounts {
            idle: 0.0,
            waiting,
            failed,
            successes,
            service_rate,
            offered_load: if p.arrival_rate > 0.0 {
                (p.arrival_rate / m) / service_rate
            } else {
                0.0
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PbParams;
    use proptest::prelude::*;

    fn fig2_params(q: f64) -> CbParams {
        CbParams::new(100, 8.0, 4.0, 1.0, 0.004, q).unwrap()
    }

    fn energy(budget: f64, p_tx: f64, p_wait: f64) -> EnergyProfile {
        EnergyProfile::new(budget, p_tx, p_wait).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zero_traffic_is_pure_waiting() {
        let p = CbParams::new(100, 8.0, 4.0, 1.0, 0.0, 0.3).unwrap();
        let e = energy(1e5, 100.0, 1.0);
        let region = steady_interval(&p);
        assert!(region.defined);
        assert_eq!(region.q_lo, 0.0);
        assert_eq!(region.q_hi, 1.0);
        assert_eq!(region.p_large, 1.0);
        assert_eq!(success_prob(&p), 1.0);
        assert_eq!(lifetime(&p, &e), 1e5);
        assert_eq!(lifetime_throughput(&p, &e), 0.0);
        let counts = expected_state_counts(&p, &e);
        assert_eq!(counts.idle, 1e5);
        assert_eq!(counts.waiting, 0.0);
        assert_eq!(counts.failed, 0.0);
        assert_eq!(counts.successes, 0.0);
    }

    #[test]
    fn branch_point_collapses_interval() {
        // λ̂ = 2/(e+1) with M = 2, δ = 0 puts the Lambert argument at -1/e.
        let lam_hat = 2.0 / (std::f64::consts::E + 1.0);
        let p = CbParams::new(100, 2.0, 0.0, 1.0, lam_hat / 100.0, 0.01).unwrap();
        let region = steady_interval(&p);
        assert!(region.defined);
        assert!((region.q_lo - 0.01).abs() < 1e-6);
        assert!((region.q_hi - 0.01).abs() < 1e-6);
        let inv_e = (-1.0f64).exp();
        assert!((region.p_large - inv_e).abs() < 1e-6);
        assert!((region.p_small - inv_e).abs() < 1e-6);
    }

    #[test]
    fn saturated_success_prob_formula() {
        // Offered load beyond the stabilizable range: always saturated.
        let p = CbParams::new(100, 2.0, 0.0, 1.0, 0.03, 0.05).unwrap();
        assert!(!steady_interval(&p).defined);
        assert!(rel_close(success_prob(&p), (-5.0f64).exp(), 1e-12));
    }

    #[test]
    fn equal_powers_pin_lifetime() {
        let e = energy(1e5, 2.5, 2.5);
        for q in [0.0, 1e-3, 0.02, 0.3, 1.0] {
            let p = fig2_params(q);
            assert!(rel_close(lifetime(&p, &e), 1e5 / 2.5, 1e-12));
        }
    }

    #[test]
    fn fig2_interval_shape() {
        let p = fig2_params(0.01);
        let region = steady_interval(&p);
        assert!(region.defined);
        assert!(region.q_lo < region.q_hi);
        assert!(region.p_large > (-1.0f64).exp());
        // Fixed point residual: p_L ln p_L must reproduce the argument.
        let lam_hat = 0.4;
        let a = -lam_hat / (8.0 - lam_hat * 11.0);
        let resid = region.p_large * region.p_large.ln() - a;
        assert!(resid.abs() < 1e-12);
        assert!(regime(&p) == Regime::Unsaturated);
        assert!(regime(&fig2_params(1e-4)) == Regime::Saturated);
        assert!(regime(&fig2_params(0.2)) == Regime::Saturated);
    }

    #[test]
    fn branch_continuity_at_interval_edges() {
        let p = fig2_params(0.01);
        let e = energy(1e7, 100.0, 1.0);
        let region = steady_interval(&p);
        let t_sat = saturated_lifetime(&p, &e, region.p_large);
        let t_unsat = unsaturated_lifetime(&p, &e, region.p_large);
        assert!(rel_close(t_sat, t_unsat, 1e-9), "{t_sat} vs {t_unsat}");
        let u_sat = saturated_lifetime_throughput(&p, &e, region.p_large);
        let u_unsat = unsaturated_lifetime_throughput(&p, &e, region.p_large);
        assert!(rel_close(u_sat, u_unsat, 1e-9), "{u_sat} vs {u_unsat}");
    }

    #[test]
    fn saturated_lifetime_monotone_in_p() {
        let p = fig2_params(0.0);
        let e = energy(1e7, 100.0, 1.0);
        let mut prev = 0.0;
        for i in 1..1000 {
            let ps = i as f64 / 1000.0;
            let t = saturated_lifetime(&p, &e, ps);
            assert!(t >= prev * (1.0 - 1e-12), "dip at p = {ps}");
            prev = t;
        }
    }

    #[test]
    fn lifetime_non_increasing_in_q_fig2() {
        let e = energy(1e7, 100.0, 1.0);
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let q = i as f64 * 0.001;
            let t = lifetime(&fig2_params(q), &e);
            assert!(t <= prev * (1.0 + 1e-9), "rise at q = {q}");
            prev = t;
        }
    }

    #[test]
    fn collision_collapse_limit() {
        let p = fig2_params(1.0);
        let out = node_throughput(&p);
        assert!(out > 0.0 && out < 1e-20);
    }

    #[test]
    fn state_counts_saturated_q0_hold_forever() {
        let p = fig2_params(0.0);
        // λ > 0, q = 0: saturated, the node waits forever on its request.
        let p = CbParams { arrival_rate: 0.01, ..p };
        let e = energy(1e5, 100.0, 1.0);
        assert_eq!(regime(&p), Regime::Saturated);
        let counts = expected_state_counts(&p, &e);
        assert_eq!(counts.idle, 0.0);
        assert_eq!(counts.waiting, 1e5);
        assert_eq!(counts.successes, 0.0);
        assert!(counts.offered_load.is_infinite());
    }

    proptest! {
        #[test]
        fn throughput_lifetime_identity(
            n in 1u32..400,
            m in 1.0f64..20.0,
            delta in 0.0f64..10.0,
            lam in 0.0f64..0.05,
            q in 0.0f64..1.0,
            ratio in 1.0f64..1000.0,
        ) {
            let p = CbParams::new(n, m, delta, 1.0, lam, q).unwrap();
            let e = energy(1e6, ratio, 1.0);
            let u = lifetime_throughput(&p, &e);
            let product = node_throughput(&p) * lifetime(&p, &e);
            prop_assert!(
                rel_close(u, product, 1e-9),
                "U = {u}, λ_out·T = {product}"
            );
        }

        #[test]
        fn state_counts_satisfy_identities(
            n in 1u32..400,
            m in 1.0f64..20.0,
            delta in 0.0f64..10.0,
            lam in 0.0f64..0.05,
            q in 0.0f64..1.0,
            ratio in 1.0f64..1000.0,
        ) {
            let p = CbParams::new(n, m, delta, 1.0, lam, q).unwrap();
            let e = energy(1e6, ratio, 1.0);
            let t = lifetime(&p, &e);
            let counts = expected_state_counts(&p, &e);
            let span = m + delta;
            let total = counts.idle + counts.waiting + counts.failed
                + counts.successes * span;
            prop_assert!(rel_close(total, t, 1e-9), "slot identity: {total} vs {t}");
            let drained = e.p_wait * (counts.idle + counts.waiting)
                + e.p_tx * (counts.failed + counts.successes * span);
            prop_assert!(
                rel_close(drained, e.budget, 1e-9),
                "energy identity: {drained} vs {}", e.budget
            );
            prop_assert!(counts.idle >= 0.0 && counts.waiting >= 0.0);
            prop_assert!(counts.failed >= 0.0 && counts.successes >= 0.0);
            if counts.failed > 0.0 {
                let ps = success_prob(&p);
                prop_assert!(rel_close(
                    counts.successes / counts.failed,
                    ps / (1.0 - ps),
                    1e-9
                ));
            }
        }

        #[test]
        fn energy_linearity(
            scale in 0.01f64..100.0,
            q in 0.0f64..1.0,
            lam in 0.0f64..0.02,
        ) {
            let p = CbParams::new(100, 8.0, 4.0, 1.0, lam, q).unwrap();
            let e1 = energy(1e5, 100.0, 1.0);
            let e2 = energy(1e5 * scale, 100.0, 1.0);
            prop_assert!(rel_close(
                lifetime(&p, &e2),
                scale * lifetime(&p, &e1),
                1e-12
            ));
            prop_assert!(rel_close(
                lifetime_throughput(&p, &e2),
                scale * lifetime_throughput(&p, &e1),
                1e-12
            ));
        }

        #[test]
        fn pb_delegation_matches(
            n in 1u32..400,
            lam in 0.0f64..0.05,
            q in 0.0f64..1.0,
        ) {
            let pb = PbParams::new(n, 1.0, lam, q).unwrap();
            let cb = pb.as_cb();
            prop_assert_eq!(cb.data_slots, 1.0);
            prop_assert_eq!(cb.overhead_slots, 0.0);
            let e = energy(1e5, 100.0, 1.0);
            // Bitwise identical because it is literally the same code path.
            prop_assert_eq!(lifetime(&cb, &e), lifetime(&pb.as_cb(), &e));
        }
    }
}
