//! Parameter records shared by the analytic, optimization and simulation
//! modules, plus the coupling that maps one physical traffic setting onto
//! both access schemes.
//!
//! All analytic quantities are slot-normalized: times are counted in the
//! scheme's own slot, powers share one arbitrary unit, and the battery
//! budget enters as E/σ (power · slots). Physical units only exist at the
//! CLI boundary.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("coupling yields data span M = {m} < 1 CB slot")]
    DataSpanTooShort { m: f64 },
}

fn require(ok: bool, field: &'static str, reason: String) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::Invalid { field, reason })
    }
}

/// Connection-based Aloha parameters. A contention attempt is a one-slot
/// request; a win grants `data_slots` slots of data plus `overhead_slots`
/// of signaling, all in units of the request slot `slot_len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CbParams {
    /// Number of nodes n.
    pub nodes: u32,
    /// Data span M per granted connection, in slots (≥ 1; the analytics
    /// accept any real value, the simulator requires an integer).
    pub data_slots: f64,
    /// Signaling overhead δ per granted connection, in slots (≥ 0).
    pub overhead_slots: f64,
    /// Slot length σ_N in physical time units.
    pub slot_len: f64,
    /// Per-node arrival rate λ_N, data units per slot (≥ 0).
    pub arrival_rate: f64,
    /// Transmission probability q ∈ [0, 1].
    pub tx_prob: f64,
}

impl CbParams {
    pub fn new(
        nodes: u32,
        data_slots: f64,
        overhead_slots: f64,
        slot_len: f64,
        arrival_rate: f64,
        tx_prob: f64,
    ) -> Result<Self, ModelError> {
        require(nodes >= 1, "nodes", format!("{nodes} < 1"))?;
        require(
            data_slots.is_finite() && data_slots >= 1.0,
            "data_slots",
            format!("{data_slots} < 1"),
        )?;
        require(
            overhead_slots.is_finite() && overhead_slots >= 0.0,
            "overhead_slots",
            format!("{overhead_slots} < 0"),
        )?;
        require(
            slot_len.is_finite() && slot_len > 0.0,
            "slot_len",
            format!("{slot_len} not positive"),
        )?;
        require(
            arrival_rate.is_finite() && arrival_rate >= 0.0,
            "arrival_rate",
            format!("{arrival_rate} < 0"),
        )?;
        require(
            (0.0..=1.0).contains(&tx_prob),
            "tx_prob",
            format!("{tx_prob} outside [0, 1]"),
        )?;
        Ok(Self {
            nodes,
            data_slots,
            overhead_slots,
            slot_len,
            arrival_rate,
            tx_prob,
        })
    }

    /// Aggregate arrival rate λ̂ = n·λ.
    pub fn aggregate_rate(&self) -> f64 {
        self.nodes as f64 * self.arrival_rate
    }

    /// The recurring factor M + δ - 1: channel slots a success holds
    /// beyond its contention slot.
    pub fn hold_slots(&self) -> f64 {
        self.data_slots + self.overhead_slots - 1.0
    }

    pub fn with_tx_prob(mut self, q: f64) -> Self {
        self.tx_prob = q;
        self
    }
}

/// Packet-based Aloha parameters. Every contention attempt carries one
/// data packet and lasts one slot; there is no connection overhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PbParams {
    pub nodes: u32,
    /// Slot length σ_P in physical time units.
    pub slot_len: f64,
    /// Per-node arrival rate λ_P, packets per slot (≥ 0).
    pub arrival_rate: f64,
    /// Transmission probability q ∈ [0, 1].
    pub tx_prob: f64,
}

impl PbParams {
    pub fn new(
        nodes: u32,
        slot_len: f64,
        arrival_rate: f64,
        tx_prob: f64,
    ) -> Result<Self, ModelError> {
        let cb = CbParams::new(nodes, 1.0, 0.0, slot_len, arrival_rate, tx_prob)?;
        Ok(Self {
            nodes: cb.nodes,
            slot_len: cb.slot_len,
            arrival_rate: cb.arrival_rate,
            tx_prob: cb.tx_prob,
        })
    }

    /// The packet-based scheme is the M = 1, δ = 0 special case of the
    /// connection-based one; every analytic path delegates through this.
    pub fn as_cb(&self) -> CbParams {
        CbParams {
            nodes: self.nodes,
            data_slots: 1.0,
            overhead_slots: 0.0,
            slot_len: self.slot_len,
            arrival_rate: self.arrival_rate,
            tx_prob: self.tx_prob,
        }
    }

    pub fn aggregate_rate(&self) -> f64 {
        self.nodes as f64 * self.arrival_rate
    }

    pub fn with_tx_prob(mut self, q: f64) -> Self {
        self.tx_prob = q;
        self
    }
}

/// Per-node energy budget normalized by the scheme's slot: E/σ in
/// power·slots, together with the per-state powers. Idle and waiting
/// consume the same power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyProfile {
    /// E/σ: battery budget in units of power × slots.
    pub budget: f64,
    /// Transmission power P_T.
    pub p_tx: f64,
    /// Waiting (= idle) power P_W ≤ P_T.
    pub p_wait: f64,
}

impl EnergyProfile {
    pub fn new(budget: f64, p_tx: f64, p_wait: f64) -> Result<Self, ModelError> {
        require(
            budget.is_finite() && budget > 0.0,
            "budget",
            format!("{budget} not positive"),
        )?;
        require(
            p_tx.is_finite() && p_tx > 0.0,
            "p_tx",
            format!("{p_tx} not positive"),
        )?;
        require(
            p_wait.is_finite() && p_wait > 0.0,
            "p_wait",
            format!("{p_wait} not positive"),
        )?;
        require(
            p_wait <= p_tx,
            "p_wait",
            format!("{p_wait} exceeds p_tx = {p_tx}"),
        )?;
        Ok(Self { budget, p_tx, p_wait })
    }

    /// P_T / P_W ≥ 1.
    pub fn power_ratio(&self) -> f64 {
        self.p_tx / self.p_wait
    }

    /// Longest possible lifetime (E/σ)/P_W, reached by never transmitting.
    pub fn max_lifetime(&self) -> f64 {
        self.budget / self.p_wait
    }
}

/// Physical battery budget before slot normalization: energy in
/// power × time units shared by both schemes of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBudget {
    pub energy: f64,
    pub p_tx: f64,
    pub p_wait: f64,
}

impl EnergyBudget {
    pub fn new(energy: f64, p_tx: f64, p_wait: f64) -> Result<Self, ModelError> {
        let p = EnergyProfile::new(energy, p_tx, p_wait)?;
        Ok(Self {
            energy: p.budget,
            p_tx: p.p_tx,
            p_wait: p.p_wait,
        })
    }

    /// Normalize by a scheme's slot length.
    pub fn per_slot(&self, slot_len: f64) -> Result<EnergyProfile, ModelError> {
        require(
            slot_len.is_finite() && slot_len > 0.0,
            "slot_len",
            format!("{slot_len} not positive"),
        )?;
        EnergyProfile::new(self.energy / slot_len, self.p_tx, self.p_wait)
    }

    pub fn power_ratio(&self) -> f64 {
        self.p_tx / self.p_wait
    }
}

/// Inputs tying the two schemes to one physical traffic setting:
/// K packets of length L_P per CB connection, PB per-packet overhead
/// Δ_S,P, CB slot σ_N and overhead δ, and the CB-slot arrival rate λ_N.
/// A failed CB request always wastes exactly one slot (Δ_F,N = σ_N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingParams {
    /// Packets per CB connection, K ≥ 1.
    pub packets_per_conn: u32,
    /// PB data payload length L_P, physical time units.
    pub packet_len: f64,
    /// PB per-packet overhead Δ_S,P, physical time units.
    pub pb_overhead: f64,
    /// CB slot length σ_N, physical time units.
    pub slot_len: f64,
    /// CB signaling overhead δ, in CB slots.
    pub overhead_slots: f64,
    /// Per-node arrival rate λ_N, data units per CB slot.
    pub arrival_rate: f64,
}

impl CouplingParams {
    pub fn new(
        packets_per_conn: u32,
        packet_len: f64,
        pb_overhead: f64,
        slot_len: f64,
        overhead_slots: f64,
        arrival_rate: f64,
    ) -> Result<Self, ModelError> {
        require(packets_per_conn >= 1, "packets_per_conn", "K < 1".into())?;
        require(
            packet_len.is_finite() && packet_len > 0.0,
            "packet_len",
            format!("{packet_len} not positive"),
        )?;
        require(
            pb_overhead.is_finite() && pb_overhead >= 0.0,
            "pb_overhead",
            format!("{pb_overhead} < 0"),
        )?;
        require(
            slot_len.is_finite() && slot_len > 0.0,
            "slot_len",
            format!("{slot_len} not positive"),
        )?;
        require(
            overhead_slots.is_finite() && overhead_slots >= 0.0,
            "overhead_slots",
            format!("{overhead_slots} < 0"),
        )?;
        require(
            arrival_rate.is_finite() && arrival_rate >= 0.0,
            "arrival_rate",
            format!("{arrival_rate} < 0"),
        )?;
        Ok(Self {
            packets_per_conn,
            packet_len,
            pb_overhead,
            slot_len,
            overhead_slots,
            arrival_rate,
        })
    }
}

/// Output of [`couple`]: both schemes' derived quantities with the
/// transmission probability left open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupled {
    /// CB data span M = K·L_P/σ_N, in CB slots.
    pub data_slots: f64,
    /// Total data length L_N = K·L_P = M·σ_N.
    pub data_len: f64,
    /// PB slot σ_P = L_P + Δ_S,P.
    pub pb_slot_len: f64,
    /// λ_P = λ_N·σ_P/σ_N, packets per PB slot.
    pub pb_arrival_rate: f64,
    /// False when M is not an integer; the analytics accept it, the
    /// simulator rejects it.
    pub integral_data_slots: bool,
}

/// Derive both schemes' parameters from one coupled setting.
pub fn couple(c: &CouplingParams) -> Result<Coupled, ModelError> {
    let data_len = c.packets_per_conn as f64 * c.packet_len;
    let data_slots = data_len / c.slot_len;
    if data_slots < 1.0 {
        return Err(ModelError::DataSpanTooShort { m: data_slots });
    }
    let pb_slot_len = c.packet_len + c.pb_overhead;
    let pb_arrival_rate = c.arrival_rate * pb_slot_len / c.slot_len;
    let integral_data_slots = (data_slots - data_slots.round()).abs() < 1e-9;
    Ok(Coupled {
        data_slots,
        data_len,
        pb_slot_len,
        pb_arrival_rate,
        integral_data_slots,
    })
}

impl Coupled {
    pub fn cb_params(&self, c: &CouplingParams, nodes: u32, q: f64) -> Result<CbParams, ModelError> {
        CbParams::new(
            nodes,
            self.data_slots,
            c.overhead_slots,
            c.slot_len,
            c.arrival_rate,
            q,
        )
    }

    pub fn pb_params(&self, nodes: u32, q: f64) -> Result<PbParams, ModelError> {
        PbParams::new(nodes, self.pb_slot_len, self.pb_arrival_rate, q)
    }
}
