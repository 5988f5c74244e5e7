//! Energy-aware slotted Aloha: closed-form lifetime and lifetime-throughput
//! analysis of connection-based and packet-based random access, the
//! lifetime-constrained optimum over the transmission probability, the
//! scheme comparison over coupled parameters, and a slot-level Monte-Carlo
//! simulator that validates the closed forms.
//!
//! Layout:
//! - [`lambertw`]: both real branches of the Lambert W function.
//! - [`model`]: parameter records and the CB/PB coupling.
//! - [`cb`]: connection-based closed forms (success probability,
//!   throughput, lifetime, lifetime throughput, state counts).
//! - [`pb`]: the packet-based M = 1, δ = 0 reduction.
//! - [`optimizer`]: lifetime-constrained maximization over q.
//! - [`compare`]: CB-versus-PB verdicts, regime maps and the
//!   small-data-transmission case study.
//! - [`sim`]: the discrete-event simulator and validation reports.

pub mod cb;
pub mod compare;
pub mod lambertw;
pub mod model;
pub mod optimizer;
pub mod pb;
pub mod report;
pub mod sim;

pub use cb::{Evaluation, Regime, StateCounts, SteadyRegion};
pub use compare::{ComparisonRegime, ComparisonVerdict, Winner};
pub use model::{CbParams, CouplingParams, Coupled, EnergyBudget, EnergyProfile, PbParams};
pub use optimizer::{CaseTag, OptResult, QOpt, Thresholds};
pub use sim::{Scheme, SimConfig, SimStats, ValidationReport};
