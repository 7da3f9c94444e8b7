//! Cost sweep over profile size and priority levels for all three protocols.

use std::fmt::Write as _;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::energy::EnergyModel;
use crate::runner::{run_scenario_with, RunError, TransportKind};
use crate::scenario::{EMatchParams, ProtocolKind, Scenario, Seeds, UserSpec};

pub const BENCH_SCHEMA: &str = "privmatch-bench/1";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub ms: Vec<usize>,
    pub kappas: Vec<u32>,
    pub prime_bits: u64,
    /// Fixed filter length; sized from `l·κm/ln 2` when absent.
    pub lambda: Option<u32>,
    pub l: u32,
    pub lprime: u32,
    pub seed: u64,
    /// Runs per configuration; wall-clock figures are averaged.
    pub reps: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ms: vec![10, 50, 100],
            kappas: vec![10],
            prime_bits: 1024,
            lambda: None,
            l: 12,
            lprime: 11,
            seed: 1,
            reps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub schema: &'static str,
    pub protocol: &'static str,
    pub m: usize,
    pub kappa: u32,
    pub prime_bits: Option<u64>,
    pub lambda: Option<u32>,
    pub similarity: Option<f64>,
    pub init_online_exp: u64,
    pub resp_online_exp: u64,
    pub init_online_hash: u64,
    pub resp_online_hash: u64,
    pub bytes: u64,
    pub init_offline_ms: f64,
    pub resp_offline_ms: f64,
    pub online_ms: f64,
    pub transfer_ms: f64,
    pub simulated_ms: f64,
    pub init_energy_j: f64,
    pub resp_energy_j: f64,
}

fn sized_lambda(l: u32, kappa: u32, m: usize) -> u32 {
    let q = f64::from(kappa) * m as f64;
    ((f64::from(l) * q / std::f64::consts::LN_2).ceil() as u32).max(64)
}

/// Two random profiles of `m` attributes over a pool of `2m`, priorities
/// uniform in `1..=κ`. The E-match filter is sized for `κm` elements.
pub fn bench_scenario(m: usize, kappa: u32, prime_bits: u64, seed: u64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ((m as u64) << 32) ^ u64::from(kappa));
    let pool: Vec<String> = (0..2 * m).map(|i| format!("a{i:04}")).collect();
    let mut user = |name: &str| {
        let mut attrs: Vec<(String, u32)> = pool
            .choose_multiple(&mut rng, m)
            .map(|a| (a.clone(), rng.gen_range(1..=kappa)))
            .collect();
        attrs.sort();
        UserSpec {
            name: name.to_owned(),
            threshold: 0.0,
            attributes: attrs,
        }
    };
    let users = vec![user("initiator"), user("responder")];
    let ematch = EMatchParams::default();
    Scenario {
        name: format!("bench-m{m}-k{kappa}"),
        protocol: ProtocolKind::PMatch,
        kappa,
        prime_bits,
        initiator: "initiator".into(),
        users,
        attribute_pool: Some(pool),
        ematch: EMatchParams {
            lambda: sized_lambda(ematch.l, kappa, m),
            ..ematch
        },
        seeds: Seeds {
            key: format!("bench-keys-{seed}"),
            hash: format!("bench-hash-{seed}"),
            transcript: format!("bench-transcript-{seed}"),
        },
        trials: 1,
        link_kbps: crate::transport::BLUETOOTH_KBPS,
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Runs every protocol for every `(m, κ)` and returns one row each.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>, RunError> {
    let energy = EnergyModel::default();
    let reps = config.reps.max(1);
    let mut rows = Vec::new();
    for &m in &config.ms {
        for &kappa in &config.kappas {
            let mut scenario = bench_scenario(m, kappa, config.prime_bits, config.seed);
            scenario.ematch.lambda = config.lambda.unwrap_or_else(|| sized_lambda(config.l, kappa, m));
            scenario.ematch.l = config.l;
            scenario.ematch.lprime = config.lprime;
            for protocol in ProtocolKind::ALL {
                let mut acc = [0.0f64; 7];
                let mut last = None;
                for _ in 0..reps {
                    let run = run_scenario_with(&scenario, protocol, TransportKind::InProcess)?;
                    let c = run.candidates.into_iter().next().expect("one responder");
                    let t = c.timing;
                    let (ic, rc) = (&c.initiator_counters, &c.responder_counters);
                    let sample = [
                        ms(t.initiator_offline),
                        ms(t.responder_offline),
                        ms(t.online_compute()),
                        ms(t.transfer),
                        ms(t.simulated()),
                        energy
                            .estimate(ic.bytes_sent, ic.bytes_received, t.initiator_online, t.simulated())
                            .joules,
                        energy
                            .estimate(rc.bytes_sent, rc.bytes_received, t.responder_online, t.simulated())
                            .joules,
                    ];
                    acc.iter_mut().zip(sample).for_each(|(a, s)| *a += s / f64::from(reps));
                    last = Some(c);
                }
                let c = last.expect("at least one rep");
                let (ic, rc) = (&c.initiator_counters, &c.responder_counters);
                let ematch = protocol == ProtocolKind::EMatch;
                rows.push(BenchRow {
                    schema: BENCH_SCHEMA,
                    protocol: protocol.label(),
                    m,
                    kappa,
                    prime_bits: (!ematch).then_some(config.prime_bits),
                    lambda: ematch.then_some(scenario.ematch.lambda),
                    similarity: c.responder.as_ref().and_then(|o| o.similarity),
                    init_online_exp: ic.online.exp_class(),
                    resp_online_exp: rc.online.exp_class(),
                    init_online_hash: ic.online.hash_ops,
                    resp_online_hash: rc.online.hash_ops,
                    bytes: ic.bytes_sent + rc.bytes_sent,
                    init_offline_ms: acc[0],
                    resp_offline_ms: acc[1],
                    online_ms: acc[2],
                    transfer_ms: acc[3],
                    simulated_ms: acc[4],
                    init_energy_j: acc[5],
                    resp_energy_j: acc[6],
                });
            }
        }
    }
    Ok(rows)
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<8} {:>5} {:>4} {:>10} {:>10} {:>10} {:>10} {:>11} {:>9} {:>9}",
        "protocol", "m", "k", "offline ms", "online ms", "bytes", "xfer ms", "sim ms", "E_init J", "E_resp J"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{:<8} {:>5} {:>4} {:>10.2} {:>10.2} {:>10} {:>10.2} {:>11.2} {:>9.4} {:>9.4}",
            r.protocol,
            r.m,
            r.kappa,
            r.init_offline_ms + r.resp_offline_ms,
            r.online_ms,
            r.bytes,
            r.transfer_ms,
            r.simulated_ms,
            r.init_energy_j,
            r.resp_energy_j
        )
        .unwrap();
    }
    s
}
