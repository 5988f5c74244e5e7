//! Scheme selection: connection-based versus packet-based under one
//! physical traffic setting and one battery.
//!
//! With the lifetime constraint off, the scheme ordering of the maximum
//! lifetime throughput reduces to a single inequality per matched regime.
//! Saturated, it only involves the coupled slot geometry and the power
//! profile; unsaturated it also involves both fixed points. The map over
//! (K, L_P) decides every cell by direct optimization and records the
//! analytic inequality alongside.

use crate::cb::{self, Regime};
use crate::lambertw::lambert_w0;
use crate::model::{couple, CouplingParams, EnergyBudget, ModelError};
use crate::optimizer::{
    cb_saturation_boundary, optimize_cb, optimize_pb, pb_saturation_boundary,
    peak_success_prob,
};
use crate::report;
use serde::Serialize;
use thiserror::Error;

/// Relative gap below which the two schemes are declared tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("schemes operate in different regimes (cb {cb}, pb {pb}); no matched inequality applies")]
    RegimeMismatch { cb: Regime, pb: Regime },
    #[error("scheme regimes ({cb}, {pb}) differ from the declared {declared} regime")]
    RegimeNotAsDeclared {
        cb: Regime,
        pb: Regime,
        declared: Regime,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Pb,
    Cb,
    Tie,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Winner::Pb => "pb",
            Winner::Cb => "cb",
            Winner::Tie => "tie",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonRegime {
    BothSaturated,
    BothUnsaturated,
    Mixed,
}

impl std::fmt::Display for ComparisonRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComparisonRegime::BothSaturated => "saturated",
            ComparisonRegime::BothUnsaturated => "unsaturated",
            ComparisonRegime::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub winner: Winner,
    pub regime: ComparisonRegime,
    pub u_pb: f64,
    pub u_cb: f64,
    /// Left side of the matched-regime inequality; PB wins iff lhs < rhs.
    pub inequality_lhs: f64,
    pub inequality_rhs: f64,
}

/// Right side of the saturated inequality; depends only on n and the power
/// profile, and is invariant under joint power scaling.
pub fn saturated_rhs(nodes: u32, p_tx: f64, p_wait: f64) -> f64 {
    let n = nodes as f64;
    let pm = peak_success_prob(nodes, p_tx / p_wait);
    let lnpm = pm.ln();
    ((n - 1.0) * p_wait + p_tx) * pm * lnpm / ((p_tx - p_wait) * lnpm - n * p_wait)
}

fn winner_of(u_pb: f64, u_cb: f64) -> Winner {
    let scale = u_pb.abs().max(u_cb.abs()).max(1e-300);
    if (u_pb - u_cb).abs() <= TIE_TOL * scale {
        Winner::Tie
    } else if u_pb > u_cb {
        Winner::Pb
    } else {
        Winner::Cb
    }
}

/// Regime of each scheme at the coupled parameters: a network is
/// saturated when its arrival rate exceeds its own λ_M.
pub fn scheme_regimes(
    c: &CouplingParams,
    nodes: u32,
    budget: &EnergyBudget,
) -> Result<(Regime, Regime), ModelError> {
    per_scheme_regimes(c, nodes, budget).map(|(cb, pb, _)| (cb, pb))
}

fn per_scheme_regimes(
    c: &CouplingParams,
    nodes: u32,
    budget: &EnergyBudget,
) -> Result<(Regime, Regime, crate::model::Coupled), ModelError> {
    let coupled = couple(c)?;
    let ratio = budget.power_ratio();
    let cb_regime = if c.arrival_rate
        > cb_saturation_boundary(nodes, coupled.data_slots, c.overhead_slots, ratio)
    {
        Regime::Saturated
    } else {
        Regime::Unsaturated
    };
    let pb_regime = if coupled.pb_arrival_rate > pb_saturation_boundary(nodes, ratio) {
        Regime::Saturated
    } else {
        Regime::Unsaturated
    };
    Ok((cb_regime, pb_regime, coupled))
}

fn matched_inequality(
    c: &CouplingParams,
    coupled: &crate::model::Coupled,
    nodes: u32,
    budget: &EnergyBudget,
    regime: Regime,
) -> (f64, f64) {
    let n = nodes as f64;
    let klp = coupled.data_len;
    let sigma_n = c.slot_len;
    let sigma_p = coupled.pb_slot_len;
    match regime {
        Regime::Saturated => {
            let lhs = (klp * sigma_p / sigma_n - sigma_n)
                / (klp + sigma_n * (c.overhead_slots - 1.0));
            (lhs, saturated_rhs(nodes, budget.p_tx, budget.p_wait))
        }
        Regime::Unsaturated => {
            // p_L of the connection-based fixed point.
            let cbp = coupled
                .cb_params(c, nodes, 0.0)
                .expect("validated coupling");
            let region = cb::steady_interval(&cbp);
            let p_l = region.p_large;
            let lhs = klp * p_l * sigma_p
                / (sigma_n * sigma_n
                    + (klp + sigma_n * (c.overhead_slots - 1.0)) * p_l * sigma_n);
            let rhs = lambert_w0(-n * coupled.pb_arrival_rate)
                .map(f64::exp)
                .unwrap_or(f64::NAN);
            (lhs, rhs)
        }
    }
}

fn direct_optima(
    c: &CouplingParams,
    coupled: &crate::model::Coupled,
    nodes: u32,
    budget: &EnergyBudget,
) -> Result<(f64, f64), ModelError> {
    let cbp = coupled.cb_params(c, nodes, 0.0)?;
    let pbp = coupled.pb_params(nodes, 0.0)?;
    let e_cb = budget.per_slot(c.slot_len)?;
    let e_pb = budget.per_slot(coupled.pb_slot_len)?;
    let u_cb = optimize_cb(&cbp, &e_cb, 0.0).u_max;
    let u_pb = optimize_pb(&pbp, &e_pb, 0.0).u_max;
    Ok((u_pb, u_cb))
}

/// Decide whether the packet-based scheme beats the connection-based one
/// at the unconstrained optimum, requiring both networks to sit in the
/// declared regime. The verdict carries both the matched inequality and
/// the directly computed optima.
pub fn pb_beats_cb(
    c: &CouplingParams,
    nodes: u32,
    budget: &EnergyBudget,
    declared: Regime,
) -> Result<ComparisonVerdict, CompareError> {
    let (cb_regime, pb_regime, coupled) = per_scheme_regimes(c, nodes, budget)?;
    if cb_regime != pb_regime {
        return Err(CompareError::RegimeMismatch {
            cb: cb_regime,
            pb: pb_regime,
        });
    }
    if cb_regime != declared {
        return Err(CompareError::RegimeNotAsDeclared {
            cb: cb_regime,
            pb: pb_regime,
            declared,
        });
    }
    let (lhs, rhs) = matched_inequality(c, &coupled, nodes, budget, declared);
    let (u_pb, u_cb) = direct_optima(c, &coupled, nodes, budget)?;
    Ok(ComparisonVerdict {
        winner: winner_of(u_pb, u_cb),
        regime: match declared {
            Regime::Saturated => ComparisonRegime::BothSaturated,
            Regime::Unsaturated => ComparisonRegime::BothUnsaturated,
        },
        u_pb,
        u_cb,
        inequality_lhs: lhs,
        inequality_rhs: rhs,
    })
}

/// Fixed parameters of a regime map over (K, L_P).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapParams {
    pub nodes: u32,
    pub overhead_slots: f64,
    pub slot_len: f64,
    pub pb_overhead: f64,
    pub arrival_rate: f64,
    pub budget: EnergyBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapCell {
    pub packets_per_conn: u32,
    pub packet_len: f64,
    pub data_slots: f64,
    /// False when the coupling violates M ≥ 1.
    pub valid: bool,
    pub winner: Option<Winner>,
    pub regime: Option<ComparisonRegime>,
    pub u_pb: f64,
    pub u_cb: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluate the comparison over a (K, L_P) grid. Every valid cell's
/// winner comes from direct optimization; the matched inequality is
/// recorded where both networks share a regime.
pub fn regime_map(ks: &[u32], packet_lens: &[f64], mp: &MapParams) -> Vec<MapCell> {
    let mut cells = Vec::with_capacity(ks.len() * packet_lens.len());
    for &k in ks {
        for &lp in packet_lens {
            cells.push(map_cell(k, lp, mp));
        }
    }
    cells
}

fn map_cell(k: u32, lp: f64, mp: &MapParams) -> MapCell {
    let invalid = |m: f64| MapCell {
        packets_per_conn: k,
        packet_len: lp,
        data_slots: m,
        valid: false,
        winner: None,
        regime: None,
        u_pb: f64::NAN,
        u_cb: f64::NAN,
        lhs: f64::NAN,
        rhs: f64::NAN,
    };
    let Ok(c) = CouplingParams::new(
        k,
        lp,
        mp.pb_overhead,
        mp.slot_len,
        mp.overhead_slots,
        mp.arrival_rate,
    ) else {
        return invalid(f64::NAN);
    };
    let (cb_regime, pb_regime, coupled) = match per_scheme_regimes(&c, mp.nodes, &mp.budget) {
        Ok(v) => v,
        Err(ModelError::DataSpanTooShort { m }) => return invalid(m),
        Err(_) => return invalid(f64::NAN),
    };
    let Ok((u_pb, u_cb)) = direct_optima(&c, &coupled, mp.nodes, &mp.budget) else {
        return invalid(coupled.data_slots);
    };
    let (regime, lhs, rhs) = if cb_regime == pb_regime {
        let (lhs, rhs) = matched_inequality(&c, &coupled, mp.nodes, &mp.budget, cb_regime);
        let r = match cb_regime {
            Regime::Saturated => ComparisonRegime::BothSaturated,
            Regime::Unsaturated => ComparisonRegime::BothUnsaturated,
        };
        (r, lhs, rhs)
    } else {
        (ComparisonRegime::Mixed, f64::NAN, f64::NAN)
    };
    MapCell {
        packets_per_conn: k,
        packet_len: lp,
        data_slots: coupled.data_slots,
        valid: true,
        winner: Some(winner_of(u_pb, u_cb)),
        regime: Some(regime),
        u_pb,
        u_cb,
        lhs,
        rhs,
    }
}

pub const MAP_CSV_HEADER: &str = "k,l_p,m,winner,u_pb,u_cb,lhs,rhs,regime";

/// Serialize a regime map with a fixed column order.
pub fn map_to_csv(cells: &[MapCell]) -> String {
    let mut out = String::from(MAP_CSV_HEADER);
    out.push('\n');
    for cell in cells {
        let winner = cell
            .winner
            .map(|w| w.to_string())
            .unwrap_or_else(|| "invalid".into());
        let regime = cell
            .regime
            .map(|r| r.to_string())
            .unwrap_or_else(|| "invalid".into());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            cell.packets_per_conn,
            report::float(cell.packet_len),
            report::float(cell.data_slots),
            winner,
            report::float(cell.u_pb),
            report::float(cell.u_cb),
            report::float(cell.lhs),
            report::float(cell.rhs),
            regime,
        ));
    }
    out
}

/// Parameters of the small-data-transmission case study: a 2-step
/// (packet-based) against a 4-step (connection-based) random-access
/// procedure on a shared collision channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseStudyParams {
    pub nodes: u32,
    /// CB slot σ_N, ms.
    pub slot_len: f64,
    /// CB per-connection overhead δ, in slots (success overhead / σ_N).
    pub overhead_slots: f64,
    /// PB per-packet overhead Δ_S,P, ms.
    pub pb_overhead: f64,
    pub p_tx: f64,
    pub p_wait: f64,
}

impl CaseStudyParams {
    /// Release-17 small-data-transmission setting: Δ_S,P = Δ_F,P = 6 ms,
    /// Δ_S,N = 8 ms over σ_N = 2 ms slots, P_T = 300 mW, P_W = 3 mW, n = 100.
    pub fn rasdt() -> Self {
        CaseStudyParams {
            nodes: 100,
            slot_len: 2.0,
            overhead_slots: 4.0,
            pb_overhead: 6.0,
            p_tx: 300.0,
            p_wait: 3.0,
        }
    }
}

/// Data length L_N below which the packet-based scheme wins the saturated
/// comparison, solved from the saturated inequality for the given packet
/// length; +∞ when it wins for every data length.
pub fn pb_win_data_len_threshold(cs: &CaseStudyParams, packet_len: f64) -> f64 {
    let r = saturated_rhs(cs.nodes, cs.p_tx, cs.p_wait);
    let sigma_p = packet_len + cs.pb_overhead;
    let denom = sigma_p - r * cs.slot_len;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    cs.slot_len * cs.slot_len * (1.0 + r * (cs.overhead_slots - 1.0)) / denom
}

/// The case-study threshold at the Release-17 parameters.
pub fn rasdt_threshold(packet_len: f64) -> f64 {
    pb_win_data_len_threshold(&CaseStudyParams::rasdt(), packet_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> EnergyBudget {
        EnergyBudget::new(1e6, 100.0, 1.0).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn saturated_rhs_case_study_value() {
        let rhs = saturated_rhs(100, 300.0, 3.0);
        assert!((rhs - 0.4113).abs() < 5e-4, "rhs = {rhs}");
        // Scale-free in the power unit.
        let scaled = saturated_rhs(100, 300.0 * 17.0, 3.0 * 17.0);
        assert!(rel_close(rhs, scaled, 1e-12));
    }

    #[test]
    fn structurally_identical_schemes_tie() {
        // K = 1, L_P = σ_N, Δ_S,P = 0, δ = 0: both schemes coincide.
        let c = CouplingParams::new(1, 1.0, 0.0, 1.0, 0.0, 0.02).unwrap();
        let b = budget();
        let (cb_r, pb_r, _) = per_scheme_regimes(&c, 100, &b).unwrap();
        assert_eq!(cb_r, pb_r);
        let v = pb_beats_cb(&c, 100, &b, cb_r).unwrap();
        assert_eq!(v.winner, Winner::Tie);
        assert!(rel_close(v.u_pb, v.u_cb, 1e-12));
    }

    #[test]
    fn declared_regime_is_checked() {
        let c = CouplingParams::new(4, 1.0, 2.0, 2.0, 4.0, 0.02).unwrap();
        let b = budget();
        let (cb_r, _, _) = per_scheme_regimes(&c, 100, &b).unwrap();
        let wrong = match cb_r {
            Regime::Saturated => Regime::Unsaturated,
            Regime::Unsaturated => Regime::Saturated,
        };
        assert!(pb_beats_cb(&c, 100, &b, wrong).is_err());
    }

    #[test]
    fn rasdt_headline_threshold() {
        let t = rasdt_threshold(0.5);
        // 1.57 ms to three significant figures.
        assert!(
            (t * 100.0).round() / 100.0 == 1.57,
            "threshold {t} not 1.57 to 3 s.f."
        );
        assert!((t - 3.0 * 0.5).abs() < 0.2, "≈ 3·L_P");
    }

    #[test]
    fn rasdt_fitted_form() {
        for i in 1..=1000 {
            let lp = i as f64 * 0.01;
            let t = rasdt_threshold(lp);
            let fitted = 8.9356 / (lp + 5.1774);
            assert!(
                (t - fitted).abs() <= 1e-3 * fitted,
                "lp = {lp}: {t} vs fitted {fitted}"
            );
        }
    }

    #[test]
    fn rasdt_zero_packet_limit() {
        let t = rasdt_threshold(1e-12);
        assert!((t - 8.9356 / 5.1774).abs() < 1e-3, "limit {t}");
    }

    #[test]
    fn map_single_cell_matches_direct_verdict() {
        let mp = MapParams {
            nodes: 100,
            overhead_slots: 4.0,
            slot_len: 2.0,
            pb_overhead: 2.0,
            arrival_rate: 0.02,
            budget: budget(),
        };
        let cells = regime_map(&[4], &[1.0], &mp);
        assert_eq!(cells.len(), 1);
        let cell = &cells[0];
        assert!(cell.valid);
        let c = CouplingParams::new(4, 1.0, 2.0, 2.0, 4.0, 0.02).unwrap();
        let (cb_r, pb_r, _) = per_scheme_regimes(&c, 100, &mp.budget).unwrap();
        assert_eq!(cb_r, pb_r);
        let v = pb_beats_cb(&c, 100, &mp.budget, cb_r).unwrap();
        assert_eq!(cell.winner, Some(v.winner));
        assert!(rel_close(cell.u_pb, v.u_pb, 1e-12));
        assert!(rel_close(cell.lhs, v.inequality_lhs, 1e-12));
    }

    #[test]
    fn map_marks_invalid_cells() {
        let mp = MapParams {
            nodes: 100,
            overhead_slots: 4.0,
            slot_len: 2.0,
            pb_overhead: 2.0,
            arrival_rate: 0.02,
            budget: budget(),
        };
        // K·L_P = 0.5 < σ_N = 2 → M < 1.
        let cells = regime_map(&[1], &[0.5], &mp);
        assert!(!cells[0].valid);
        let csv = map_to_csv(&cells);
        assert!(csv.starts_with(MAP_CSV_HEADER));
        assert!(csv.contains("invalid"));
    }

    /// Fig.-4-style grids: saturated map (λ_N = 0.02) and unsaturated map
    /// (λ_N = 4e-4), σ_N = 2, Δ_S,P = 2, δ = 4, n = 100, P_T/P_W = 100.
    fn fig4_map(arrival_rate: f64) -> Vec<MapCell> {
        let mp = MapParams {
            nodes: 100,
            overhead_slots: 4.0,
            slot_len: 2.0,
            pb_overhead: 2.0,
            arrival_rate,
            budget: budget(),
        };
        let ks: Vec<u32> = (1..=16).collect();
        let lps: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        regime_map(&ks, &lps, &mp)
    }

    #[test]
    fn cb_region_expands_under_saturation() {
        let sat = fig4_map(0.02);
        let unsat = fig4_map(4e-4);
        assert!(sat
            .iter()
            .filter(|c| c.valid)
            .all(|c| c.regime == Some(ComparisonRegime::BothSaturated)));
        assert!(unsat
            .iter()
            .filter(|c| c.valid)
            .all(|c| c.regime == Some(ComparisonRegime::BothUnsaturated)));
        let cb_wins = |cells: &[MapCell]| {
            cells
                .iter()
                .filter(|c| c.valid && c.winner == Some(Winner::Cb))
                .count()
        };
        assert!(
            cb_wins(&sat) > cb_wins(&unsat),
            "saturated CB region {} not larger than unsaturated {}",
            cb_wins(&sat),
            cb_wins(&unsat)
        );
        // On the same valid cells, every unsaturated CB win is also a
        // saturated CB win.
        for (s, u) in sat.iter().zip(unsat.iter()) {
            if u.valid && u.winner == Some(Winner::Cb) {
                assert_eq!(s.winner, Some(Winner::Cb));
            }
        }
    }

    #[test]
    fn unsaturated_small_k_cb_needs_long_packets() {
        let unsat = fig4_map(4e-4);
        let k1: Vec<&MapCell> = unsat
            .iter()
            .filter(|c| c.packets_per_conn == 1 && c.valid)
            .collect();
        assert!(!k1.is_empty());
        // Winner flips at most once from PB to CB as L_P grows.
        let first_cb = k1.iter().position(|c| c.winner == Some(Winner::Cb));
        if let Some(idx) = first_cb {
            assert!(idx > 0, "CB should not win at the smallest packet length");
            assert!(k1[idx..].iter().all(|c| c.winner == Some(Winner::Cb)));
        }
    }

    #[test]
    fn saturated_cb_wins_are_up_closed_in_k() {
        let sat = fig4_map(0.02);
        for lp_idx in 0..40 {
            let lp = 0.25 * (lp_idx + 1) as f64;
            let col: Vec<&MapCell> = sat
                .iter()
                .filter(|c| (c.packet_len - lp).abs() < 1e-12 && c.valid)
                .collect();
            let first_cb = col.iter().position(|c| c.winner == Some(Winner::Cb));
            if let Some(idx) = first_cb {
                assert!(
                    col[idx..]
                        .iter()
                        .all(|c| c.winner == Some(Winner::Cb)),
                    "CB wins not up-closed in K at L_P = {lp}"
                );
            }
        }
    }
}
