//! Packet-based slotted Aloha: the M = 1, δ = 0 specialization of the
//! connection-based model. Everything delegates to [`crate::cb`]; a single
//! code path keeps the two schemes' branch logic from drifting apart.

use crate::cb::{self, Evaluation, SteadyRegion};
use crate::model::{EnergyProfile, PbParams};

/// Steady-operation interval with Lambert argument -n·λ_P.
pub fn steady_interval(p: &PbParams) -> SteadyRegion {
    cb::steady_interval(&p.as_cb())
}

/// Success probability, throughput, lifetime and lifetime throughput of a
/// packet-based node. `lambda_out` and `lifetime_throughput` count packets.
pub fn pb_eval(p: &PbParams, e: &EnergyProfile) -> Evaluation {
    cb::evaluate(&p.as_cb(), e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EnergyProfile;

    #[test]
    fn idle_network() {
        let p = PbParams::new(100, 2.0, 0.0, 0.1).unwrap();
        let e = EnergyProfile::new(1e5 / 2.0, 100.0, 1.0).unwrap();
        let out = pb_eval(&p, &e);
        assert_eq!(out.lifetime, 1e5 / 2.0);
        assert_eq!(out.lifetime_throughput, 0.0);
    }

    #[test]
    fn equal_powers_flat_lifetime() {
        let e = EnergyProfile::new(1e6, 3.0, 3.0).unwrap();
        for q in [0.0, 0.01, 0.5, 1.0] {
            let p = PbParams::new(50, 1.0, 0.02, q).unwrap();
            let out = pb_eval(&p, &e);
            assert!((out.lifetime - 1e6 / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn steady_region_uses_aggregate_rate() {
        let p = PbParams::new(100, 1.0, 0.001, 0.01).unwrap();
        let region = steady_interval(&p);
        assert!(region.defined);
        // Fixed point of p ln p = -n λ_P.
        let resid = region.p_large * region.p_large.ln() + 0.1;
        assert!(resid.abs() < 1e-12);
    }
}
