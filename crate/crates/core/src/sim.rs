//! Slot-level Monte-Carlo simulation of energy-limited slotted Aloha,
//! used to validate the closed forms independently.
//!
//! Per slot: data arrives Bernoulli per node; every M accumulated units
//! form one request. When the channel is free, each node holding a
//! head-of-line request transmits with probability q. A lone transmitter
//! wins the channel for M+δ consecutive slots at P_T; colliding
//! transmitters each burn one slot at P_T; everyone else pays P_W,
//! counted as waiting when a request is held and idle otherwise. A node
//! dies in the slot that exhausts its budget; a winner dying mid-block
//! aborts the block and the partial block delivers nothing. The
//! packet-based scheme is the M = 1, δ = 0 instance with one packet per
//! success.
//!
//! Runs are seeded through a splitmix64 stream, so identical
//! configurations reproduce bit-identical statistics, and independent
//! runs stay independent of execution order.

use crate::cb::{self, Regime};
use crate::model::{CbParams, EnergyProfile, ModelError, PbParams};
use crate::report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("simulator requires integral data span, got M = {m}")]
    NonIntegralDataSlots { m: f64 },
    #[error("arrival rate {rate} is not a per-slot probability")]
    ArrivalNotProbability { rate: f64 },
    #[error("runs must be ≥ 1")]
    NoRuns,
    #[error("slot cap must be ≥ 1")]
    NoHorizon,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cb,
    Pb,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Cb => "cb",
            Scheme::Pb => "pb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub scheme: Scheme,
    /// Canonical parameters; the packet-based scheme is stored as its
    /// M = 1, δ = 0 reduction.
    pub params: CbParams,
    pub energy: EnergyProfile,
    pub seed: u64,
    pub runs: u32,
    /// Safety horizon in slots; a node can never outlive ⌈(E/σ)/P_W⌉.
    pub slot_cap: u64,
}

impl SimConfig {
    pub fn cb(
        params: CbParams,
        energy: EnergyProfile,
        seed: u64,
        runs: u32,
        slot_cap: Option<u64>,
    ) -> Result<Self, SimError> {
        if (params.data_slots - params.data_slots.round()).abs() > 1e-9
            || (params.overhead_slots - params.overhead_slots.round()).abs() > 1e-9
        {
            return Err(SimError::NonIntegralDataSlots {
                m: params.data_slots,
            });
        }
        if params.arrival_rate > 1.0 {
            return Err(SimError::ArrivalNotProbability {
                rate: params.arrival_rate,
            });
        }
        if runs == 0 {
            return Err(SimError::NoRuns);
        }
        let slot_cap = slot_cap.unwrap_or_else(|| default_slot_cap(&energy));
        if slot_cap == 0 {
            return Err(SimError::NoHorizon);
        }
        Ok(SimConfig {
            scheme: Scheme::Cb,
            params,
            energy,
            seed,
            runs,
            slot_cap,
        })
    }

    pub fn pb(
        params: PbParams,
        energy: EnergyProfile,
        seed: u64,
        runs: u32,
        slot_cap: Option<u64>,
    ) -> Result<Self, SimError> {
        let mut cfg = Self::cb(params.as_cb(), energy, seed, runs, slot_cap)?;
        cfg.scheme = Scheme::Pb;
        Ok(cfg)
    }

    pub fn with_tx_prob(mut self, q: f64) -> Self {
        self.params.tx_prob = q;
        self
    }
}

/// Upper bound on any node's lifetime, plus one slot of slack.
pub fn default_slot_cap(energy: &EnergyProfile) -> u64 {
    (energy.max_lifetime().ceil() as u64).saturating_add(1)
}

/// Per-state slot tallies averaged over nodes and runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct StateSlots {
    pub idle: f64,
    pub waiting: f64,
    pub failed: f64,
    pub success: f64,
}

/// Aggregated measurements of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub scheme: Scheme,
    pub tx_prob: f64,
    pub nodes: u32,
    pub runs: u32,
    /// Mean slots lived per node.
    pub mean_lifetime: f64,
    /// Mean data delivered per node: σ_N units (packet-based: packets).
    pub mean_delivered: f64,
    pub state_slots: StateSlots,
    /// Mean granted connections per node.
    pub success_count: f64,
    /// Mean collided attempts per node.
    pub collision_count: f64,
    /// 95% normal-approximation half-widths over run means.
    pub ci_lifetime: f64,
    pub ci_delivered: f64,
    pub total_successes: u64,
    pub total_collisions: u64,
    /// Largest per-node gap |tallied energy - E/σ|; bounded by one slot
    /// at transmit power.
    pub max_energy_residual: f64,
    /// idle + waiting + failed + success slots = lifetime held exactly
    /// (integer tallies) for every node of every run.
    pub slot_identity_exact: bool,
    /// Some node was still alive when the horizon was reached.
    pub horizon_hit: bool,
}

pub const SIM_CSV_HEADER: &str = "scheme,q,mean_lifetime,mean_delivered,idle_slots,\
waiting_slots,failed_slots,success_slots,successes,collisions,ci_lifetime,ci_delivered";

impl SimStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            report::float(self.tx_prob),
            report::float(self.mean_lifetime),
            report::float(self.mean_delivered),
            report::float(self.state_slots.idle),
            report::float(self.state_slots.waiting),
            report::float(self.state_slots.failed),
            report::float(self.state_slots.success),
            report::float(self.success_count),
            report::float(self.collision_count),
            report::float(self.ci_lifetime),
            report::float(self.ci_delivered),
        )
    }
}

#[derive(Clone, Default)]
struct NodeState {
    alive: bool,
    consumed: f64,
    pending_units: u64,
    requests: u64,
    idle: u64,
    waiting: u64,
    failed: u64,
    success_slots: u64,
    block_progress: u64,
    successes: u64,
    collisions: u64,
    delivered: u64,
    lifetime: u64,
}

struct RunTotals {
    mean_lifetime: f64,
    mean_delivered: f64,
    slots: StateSlots,
    mean_successes: f64,
    mean_collisions: f64,
    successes: u64,
    collisions: u64,
    max_energy_residual: f64,
    slot_identity_exact: bool,
    horizon_hit: bool,
}

const SPLITMIX_GAMMA: u64 = 0x9E3779B97F4A7C15;

fn splitmix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58476D1CE4E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    z
}

fn run_seed(seed: u64, run: u32) -> u64 {
    splitmix64(seed.wrapping_add(SPLITMIX_GAMMA.wrapping_mul(run as u64 + 1)))
}

/// Run the configured experiment and aggregate over nodes and runs.
pub fn simulate(cfg: &SimConfig) -> SimStats {
    let totals: Vec<RunTotals> = (0..cfg.runs)
        .map(|run| single_run(cfg, run_seed(cfg.seed, run)))
        .collect();
    let runs = cfg.runs as f64;
    let mean = |f: &dyn Fn(&RunTotals) -> f64| totals.iter().map(f).sum::<f64>() / runs;
    let mean_lifetime = mean(&|t| t.mean_lifetime);
    let mean_delivered = mean(&|t| t.mean_delivered);
    let ci = |f: &dyn Fn(&RunTotals) -> f64, center: f64| {
        if cfg.runs < 2 {
            return 0.0;
        }
        let var = totals
            .iter()
            .map(|t| (f(t) - center).powi(2))
            .sum::<f64>()
            / (runs - 1.0);
        1.96 * (var / runs).sqrt()
    };
    SimStats {
        scheme: cfg.scheme,
        tx_prob: cfg.params.tx_prob,
        nodes: cfg.params.nodes,
        runs: cfg.runs,
        mean_lifetime,
        mean_delivered,
        state_slots: StateSlots {
            idle: mean(&|t| t.slots.idle),
            waiting: mean(&|t| t.slots.waiting),
            failed: mean(&|t| t.slots.failed),
            success: mean(&|t| t.slots.success),
        },
        success_count: mean(&|t| t.mean_successes),
        collision_count: mean(&|t| t.mean_collisions),
        ci_lifetime: ci(&|t| t.mean_lifetime, mean_lifetime),
        ci_delivered: ci(&|t| t.mean_delivered, mean_delivered),
        total_successes: totals.iter().map(|t| t.successes).sum(),
        total_collisions: totals.iter().map(|t| t.collisions).sum(),
        max_energy_residual: totals
            .iter()
            .map(|t| t.max_energy_residual)
            .fold(0.0, f64::max),
        slot_identity_exact: totals.iter().all(|t| t.slot_identity_exact),
        horizon_hit: totals.iter().any(|t| t.horizon_hit),
    }
}

fn single_run(cfg: &SimConfig, seed: u64) -> RunTotals {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = cfg.params.nodes as usize;
    let m_units = cfg.params.data_slots.round() as u64;
    let span = (cfg.params.data_slots + cfg.params.overhead_slots).round() as u64;
    let q = cfg.params.tx_prob;
    let lambda = cfg.params.arrival_rate;
    let budget = cfg.energy.budget;
    let (p_tx, p_wait) = (cfg.energy.p_tx, cfg.energy.p_wait);

    let mut nodes = vec![
        NodeState {
            alive: true,
            ..NodeState::default()
        };
        n
    ];
    // (winner index, slots remaining after the current one)
    let mut channel: Option<(usize, u64)> = None;
    let mut transmitters: Vec<usize> = Vec::with_capacity(n);
    let mut alive_count = n;
    let mut horizon_hit = false;

    let mut slot: u64 = 0;
    while alive_count > 0 {
        slot += 1;
        if slot > cfg.slot_cap {
            horizon_hit = true;
            break;
        }

        // Arrivals first: a request formed now contends in this slot.
        if lambda > 0.0 {
            for node in nodes.iter_mut().filter(|s| s.alive) {
                if rng.gen_bool(lambda) {
                    node.pending_units += 1;
                    if node.pending_units == m_units {
                        node.pending_units = 0;
                        node.requests += 1;
                    }
                }
            }
        }

        // Channel phase: classify every alive node and charge its slot.
        match channel {
            Some((winner, remaining)) => {
                for (i, node) in nodes.iter_mut().enumerate() {
                    if !node.alive {
                        continue;
                    }
                    if i == winner {
                        node.block_progress += 1;
                        node.consumed += p_tx;
                    } else {
                        wait_or_idle(node, p_wait);
                    }
                }
                if remaining == 1 {
                    let w = &mut nodes[winner];
                    w.successes += 1;
                    w.delivered += m_units;
                    w.success_slots += w.block_progress;
                    w.block_progress = 0;
                    channel = None;
                } else {
                    channel = Some((winner, remaining - 1));
                }
            }
            None => {
                transmitters.clear();
                for (i, node) in nodes.iter_mut().enumerate() {
                    if node.alive && node.requests > 0 && rng.gen_bool(q) {
                        transmitters.push(i);
                    }
                }
                match transmitters.len() {
                    0 => {
                        for node in nodes.iter_mut().filter(|s| s.alive) {
                            wait_or_idle(node, p_wait);
                        }
                    }
                    1 => {
                        let winner = transmitters[0];
                        for (i, node) in nodes.iter_mut().enumerate() {
                            if !node.alive {
                                continue;
                            }
                            if i == winner {
                                node.requests -= 1;
                                node.block_progress = 1;
                                node.consumed += p_tx;
                            } else {
                                wait_or_idle(node, p_wait);
                            }
                        }
                        if span == 1 {
                            let w = &mut nodes[winner];
                            w.successes += 1;
                            w.delivered += m_units;
                            w.success_slots += 1;
                            w.block_progress = 0;
                        } else {
                            channel = Some((winner, span - 1));
                        }
                    }
                    _ => {
                        for (i, node) in nodes.iter_mut().enumerate() {
                            if !node.alive {
                                continue;
                            }
                            if transmitters.contains(&i) {
                                node.failed += 1;
                                node.collisions += 1;
                                node.consumed += p_tx;
                            } else {
                                wait_or_idle(node, p_wait);
                            }
                        }
                    }
                }
            }
        }

        // Deaths: the slot that reaches the budget is the last one lived.
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.alive && node.consumed >= budget {
                node.alive = false;
                node.consumed = budget;
                node.lifetime = slot;
                alive_count -= 1;
                if let Some((winner, _)) = channel {
                    if winner == i {
                        // Abort: the partial block delivered nothing.
                        node.failed += node.block_progress;
                        node.block_progress = 0;
                        channel = None;
                    }
                }
            }
        }
    }

    // Horizon-terminated nodes count the slots they did live.
    for node in nodes.iter_mut().filter(|s| s.alive) {
        node.lifetime = cfg.slot_cap;
        node.failed += node.block_progress;
        node.block_progress = 0;
    }

    let nf = n as f64;
    let mut totals = RunTotals {
        mean_lifetime: 0.0,
        mean_delivered: 0.0,
        slots: StateSlots::default(),
        mean_successes: 0.0,
        mean_collisions: 0.0,
        successes: 0,
        collisions: 0,
        max_energy_residual: 0.0,
        slot_identity_exact: true,
        horizon_hit,
    };
    for node in &nodes {
        totals.slot_identity_exact &=
            node.idle + node.waiting + node.failed + node.success_slots == node.lifetime;
        totals.mean_lifetime += node.lifetime as f64 / nf;
        totals.mean_delivered += node.delivered as f64 / nf;
        totals.slots.idle += node.idle as f64 / nf;
        totals.slots.waiting += node.waiting as f64 / nf;
        totals.slots.failed += node.failed as f64 / nf;
        totals.slots.success += node.success_slots as f64 / nf;
        totals.mean_successes += node.successes as f64 / nf;
        totals.mean_collisions += node.collisions as f64 / nf;
        totals.successes += node.successes;
        totals.collisions += node.collisions;
        let tallied = p_wait * (node.idle + node.waiting) as f64
            + p_tx * (node.failed + node.success_slots) as f64;
        totals.max_energy_residual = totals.max_energy_residual.max((tallied - budget).abs());
    }
    totals
}

fn wait_or_idle(node: &mut NodeState, p_wait: f64) {
    if node.requests > 0 {
        node.waiting += 1;
    } else {
        node.idle += 1;
    }
    node.consumed += p_wait;
}

/// One grid point of a simulation-versus-closed-form comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationRow {
    pub tx_prob: f64,
    pub regime: Regime,
    pub sim_lifetime: f64,
    pub analytic_lifetime: f64,
    pub lifetime_rel_err: f64,
    pub sim_throughput: f64,
    pub analytic_throughput: f64,
    pub throughput_rel_err: f64,
    pub ci_lifetime: f64,
    pub ci_delivered: f64,
    /// Empirical successes/failures against p/(1-p), with a binomial 95%
    /// interval mapped through x ↦ x/(1-x).
    pub empirical_ratio: f64,
    pub analytic_ratio: f64,
    pub ratio_ci_lo: f64,
    pub ratio_ci_hi: f64,
    pub ratio_within_ci: bool,
    pub max_energy_residual: f64,
    pub energy_residual_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub max_lifetime_rel_err: f64,
    pub max_throughput_rel_err: f64,
    pub horizon_hit: bool,
}

pub const VALIDATE_CSV_HEADER: &str = "scheme,q,regime,sim_lifetime,analytic_lifetime,\
lifetime_rel_err,sim_throughput,analytic_throughput,throughput_rel_err,ci_lifetime,\
ci_delivered,empirical_ratio,analytic_ratio,ratio_ci_lo,ratio_ci_hi,ratio_within_ci,\
max_energy_residual,energy_residual_ok";

impl ValidationReport {
    pub fn to_csv(&self, scheme: Scheme) -> String {
        let mut out = String::from(VALIDATE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                scheme,
                report::float(r.tx_prob),
                r.regime,
                report::float(r.sim_lifetime),
                report::float(r.analytic_lifetime),
                report::float(r.lifetime_rel_err),
                report::float(r.sim_throughput),
                report::float(r.analytic_throughput),
                report::float(r.throughput_rel_err),
                report::float(r.ci_lifetime),
                report::float(r.ci_delivered),
                report::float(r.empirical_ratio),
                report::float(r.analytic_ratio),
                report::float(r.ratio_ci_lo),
                report::float(r.ratio_ci_hi),
                r.ratio_within_ci,
                report::float(r.max_energy_residual),
                r.energy_residual_ok,
            ));
        }
        out
    }
}

/// Simulate across a q-grid and compare against the closed forms.
pub fn validate_against_analytic(cfg: &SimConfig, q_grid: &[f64]) -> ValidationReport {
    let mut rows = Vec::with_capacity(q_grid.len());
    let mut horizon_hit = false;
    for &q in q_grid {
        let at = cfg.with_tx_prob(q);
        let stats = simulate(&at);
        horizon_hit |= stats.horizon_hit;
        let eval = cb::evaluate(&at.params, &at.energy);
        let p = eval.p_success;
        let (emp, lo, hi) = ratio_interval(stats.total_successes, stats.total_collisions);
        let analytic_ratio = p / (1.0 - p).max(1e-300);
        let rel = |sim: f64, ana: f64| (sim - ana).abs() / ana.abs().max(1e-300);
        rows.push(ValidationRow {
            tx_prob: q,
            regime: eval.regime,
            sim_lifetime: stats.mean_lifetime,
            analytic_lifetime: eval.lifetime,
            lifetime_rel_err: rel(stats.mean_lifetime, eval.lifetime),
            sim_throughput: stats.mean_delivered,
            analytic_throughput: eval.lifetime_throughput,
            throughput_rel_err: rel(stats.mean_delivered, eval.lifetime_throughput),
            ci_lifetime: stats.ci_lifetime,
            ci_delivered: stats.ci_delivered,
            empirical_ratio: emp,
            analytic_ratio,
            ratio_ci_lo: lo,
            ratio_ci_hi: hi,
            ratio_within_ci: analytic_ratio >= lo && analytic_ratio <= hi,
            max_energy_residual: stats.max_energy_residual,
            energy_residual_ok: stats.max_energy_residual <= at.energy.p_tx + 1e-9,
        });
    }
    ValidationReport {
        max_lifetime_rel_err: rows
            .iter()
            .map(|r| r.lifetime_rel_err)
            .fold(0.0, f64::max),
        max_throughput_rel_err: rows
            .iter()
            .map(|r| r.throughput_rel_err)
            .fold(0.0, f64::max),
        rows,
        horizon_hit,
    }
}

/// Success/failure ratio with its 95% binomial interval; NaN bounds and a
/// vacuous pass when there were no attempts.
fn ratio_interval(successes: u64, failures: u64) -> (f64, f64, f64) {
    let attempts = successes + failures;
    if attempts == 0 {
        return (f64::NAN, f64::NEG_INFINITY, f64::INFINITY);
    }
    if failures == 0 {
        return (f64::INFINITY, 0.0, f64::INFINITY);
    }
    let a = attempts as f64;
    let p_hat = successes as f64 / a;
    let half = 1.96 * (p_hat * (1.0 - p_hat) / a).sqrt();
    let lo = (p_hat - half).max(0.0);
    let hi = (p_hat + half).min(1.0 - 1e-15);
    (
        p_hat / (1.0 - p_hat),
        lo / (1.0 - lo),
        hi / (1.0 - hi),
    )
}
