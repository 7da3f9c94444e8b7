//! Experiment harness for the privmatch protocols: scenarios, transports,
//! a plaintext oracle, operation-count and energy accounting, Monte Carlo
//! validation of the Bloom estimators and report output.

pub mod bench;
pub mod counters;
pub mod energy;
pub mod montecarlo;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod transport;

pub use counters::{expected_counters, verify_counters, ExpectedCounters, VerifyReport};
pub use energy::{energy_estimate, EnergyEstimate, EnergyModel};
pub use oracle::{oracle_match, OracleResult};
pub use runner::{run_scenario, run_scenario_with, CandidateRun, ScenarioRun, TransportKind};
pub use scenario::{ProtocolKind, Scenario};
