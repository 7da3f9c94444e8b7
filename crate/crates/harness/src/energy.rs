//! Energy model `E = P_comp·T_comp + P_run·T_run + n_t·E_t + n_r·E_r`.

use std::time::Duration;

use privmatch::protocol::OpCounters;
use serde::Serialize;

/// Power and per-byte costs of the reference handset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyModel {
    /// Watts drawn while computing.
    pub p_comp: f64,
    /// Watts drawn over the whole run.
    pub p_run: f64,
    /// Joules per byte sent.
    pub e_tx: f64,
    /// Joules per byte received.
    pub e_rx: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            p_comp: 0.38,
            p_run: 0.3167,
            e_tx: 4.8e-6,
            e_rx: 6.7e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyEstimate {
    pub joules: f64,
    pub compute: f64,
    pub runtime: f64,
    pub tx: f64,
    pub rx: f64,
}

impl EnergyModel {
    pub fn estimate(&self, bytes_sent: u64, bytes_received: u64, t_comp: Duration, t_run: Duration) -> EnergyEstimate {
        let compute = self.p_comp * t_comp.as_secs_f64();
        let runtime = self.p_run * t_run.as_secs_f64();
        let tx = self.e_tx * bytes_sent as f64;
        let rx = self.e_rx * bytes_received as f64;
        EnergyEstimate {
            joules: compute + runtime + tx + rx,
            compute,
            runtime,
            tx,
            rx,
        }
    }
}

/// Energy of one party under the default model.
pub fn energy_estimate(counters: &OpCounters, t_comp: Duration, t_run: Duration) -> EnergyEstimate {
    EnergyModel::default().estimate(counters.bytes_sent, counters.bytes_received, t_comp, t_run)
}
