//! Runs one initiator against every responder of a scenario.

use std::sync::Arc;
use std::time::{Duration, Instant};

use privmatch::bloom::{AttributePool, IndexedBloomFilter};
use privmatch::cipher::{CipherContext, SafePrime};
use privmatch::protocol::ematch::{build_initiator_filter, EMatchInitiator, EMatchResponder};
use privmatch::protocol::pmatch::{PMatchInitiator, PMatchResponder, Variant};
use privmatch::protocol::{rank_candidates, MatchOutcome, OpCounters, ProtocolError, Session, TranscriptEntry};
use privmatch::similarity::AttributeProfile;
use rayon::prelude::*;
use thiserror::Error;

use crate::scenario::{Candidate, Prepared, ProtocolKind, Scenario, ScenarioError};
use crate::transport::{drive, ByteStream, InProcess, LinkModel, Transport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("key setup: {0}")]
    Cipher(#[from] privmatch::CipherError),
    #[error("initiator setup: {0}")]
    Initiator(ProtocolError),
}

/// Which transport carries the frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    InProcess,
    ByteStream,
}

/// Wall-clock measurements of one session; never part of the deterministic report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionTiming {
    pub initiator_offline: Duration,
    pub responder_offline: Duration,
    pub initiator_online: Duration,
    pub responder_online: Duration,
    /// Emulated transfer time of all frames at the scenario's link rate.
    pub transfer: Duration,
}

impl SessionTiming {
    pub fn online_compute(&self) -> Duration {
        self.initiator_online + self.responder_online
    }

    /// Online compute plus emulated transfer.
    pub fn simulated(&self) -> Duration {
        self.online_compute() + self.transfer
    }
}

/// Everything recorded about one initiator–responder session.
#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub name: String,
    pub initiator: Option<MatchOutcome>,
    pub responder: Option<MatchOutcome>,
    pub initiator_counters: OpCounters,
    pub responder_counters: OpCounters,
    pub timing: SessionTiming,
    pub transcript: Vec<TranscriptEntry>,
    /// Raw E-match estimate before clamping to [0, 1].
    pub raw_estimate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: String,
    pub protocol: ProtocolKind,
    pub initiator: String,
    pub candidates: Vec<CandidateRun>,
    /// Accepted candidates by descending similarity, as the initiator sees them.
    pub ranking: Vec<(String, f64)>,
    /// Set when the initiator's Bloom filter may saturate.
    pub sizing_warning: Option<String>,
}

impl ScenarioRun {
    pub fn candidate(&self, name: &str) -> Option<&CandidateRun> {
        self.candidates.iter().find(|c| c.name == name)
    }
}

/// Key material and shared offline state for one run.
struct Setup {
    prime: Option<Arc<SafePrime>>,
    filter: Option<(IndexedBloomFilter, Duration)>,
    pool: Arc<AttributePool>,
}

fn seed(parts: &[&str]) -> Vec<u8> {
    parts.join("\u{1f}").into_bytes()
}

fn keys(prime: &Arc<SafePrime>, scenario: &Scenario, user: &str) -> CipherContext {
    CipherContext::derive(prime.clone(), &seed(&[&scenario.seeds.key, user]))
}

fn boxed_transport(kind: TransportKind) -> Box<dyn Transport> {
    match kind {
        TransportKind::InProcess => Box::new(InProcess),
        TransportKind::ByteStream => Box::new(ByteStream::new()),
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun, RunError> {
    run_scenario_with(scenario, scenario.protocol, TransportKind::InProcess)
}

/// Runs `protocol` between the initiator and each responder, concurrently.
pub fn run_scenario_with(scenario: &Scenario, protocol: ProtocolKind, transport: TransportKind) -> Result<ScenarioRun, RunError> {
    let prepared = scenario.prepare()?;
    let prime = match protocol {
        ProtocolKind::EMatch => None,
        _ => Some(Arc::new(SafePrime::for_bits(scenario.prime_bits, scenario.seeds.key.as_bytes())?)),
    };
    let mut sizing_warning = None;
    let filter = if protocol == ProtocolKind::EMatch {
        let config = scenario.ematch.config(0.0);
        let q1 = prepared.initiator.weighted_size();
        if privmatch::protocol::ematch::oversized_for_filter(config.lambda, config.l, q1) {
            sizing_warning = Some(format!(
                "l*q1 = {} exceeds lambda*ln(lambda) = {:.0}; the filter is likely to saturate",
                u64::from(config.l) * q1,
                f64::from(config.lambda) * f64::from(config.lambda).ln()
            ));
        }
        let started = Instant::now();
        let f = build_initiator_filter(&prepared.initiator, &prepared.pool, &config, scenario.seeds.hash.as_bytes())
            .map_err(RunError::Initiator)?;
        Some((f, started.elapsed()))
    } else {
        None
    };
    let setup = Setup {
        prime,
        filter,
        pool: Arc::new(prepared.pool.clone()),
    };
    let link = LinkModel { kbps: scenario.link_kbps };
    let candidates: Vec<CandidateRun> = prepared
        .candidates
        .par_iter()
        .map(|c| run_candidate(scenario, &prepared, &setup, c, protocol, transport, link))
        .collect();
    let outcomes: Vec<(&str, MatchOutcome)> = candidates
        .iter()
        .filter_map(|c| c.initiator.clone().map(|o| (c.name.as_str(), o)))
        .collect();
    Ok(ScenarioRun {
        scenario: scenario.name.clone(),
        protocol,
        initiator: prepared.initiator_name.clone(),
        ranking: rank_candidates(&outcomes),
        candidates,
        sizing_warning,
    })
}

fn failed(name: &str, error: String) -> CandidateRun {
    CandidateRun {
        name: name.to_owned(),
        initiator: None,
        responder: None,
        initiator_counters: OpCounters::default(),
        responder_counters: OpCounters::default(),
        timing: SessionTiming::default(),
        transcript: Vec::new(),
        raw_estimate: None,
        error: Some(error),
    }
}

fn run_candidate(
    scenario: &Scenario,
    prepared: &Prepared,
    setup: &Setup,
    candidate: &Candidate,
    protocol: ProtocolKind,
    transport: TransportKind,
    link: LinkModel,
) -> CandidateRun {
    let transcript_seed = seed(&[&scenario.seeds.transcript, &candidate.name]);
    let mut timing = SessionTiming::default();
    match protocol {
        ProtocolKind::PMatch | ProtocolKind::PMatchPlus => {
            let prime = setup.prime.as_ref().expect("prime set for P-match");
            let variant = if protocol == ProtocolKind::PMatch {
                Variant::Basic
            } else {
                Variant::Plus
            };
            let started = Instant::now();
            let i = PMatchInitiator::new(
                variant,
                &prepared.initiator,
                keys(prime, scenario, &prepared.initiator_name),
                &transcript_seed,
            );
            timing.initiator_offline = started.elapsed();
            let started = Instant::now();
            let r = PMatchResponder::new(
                variant,
                &candidate.profile,
                keys(prime, scenario, &candidate.name),
                candidate.threshold,
                &transcript_seed,
            );
            timing.responder_offline = started.elapsed();
            match (i, r) {
                (Ok(mut i), Ok(mut r)) => execute(&candidate.name, &mut i, &mut r, transport, link, timing),
                (Err(e), _) | (_, Err(e)) => failed(&candidate.name, e.to_string()),
            }
        }
        ProtocolKind::EMatch => {
            let (filter, spent) = setup.filter.as_ref().expect("filter built for E-match");
            timing.initiator_offline = *spent;
            let mut i = EMatchInitiator::from_filter(filter.clone(), prepared.initiator.weighted_size());
            let r = check_min(&prepared.initiator, scenario.ematch.min_attributes).and_then(|()| {
                EMatchResponder::new(
                    candidate.profile.clone(),
                    setup.pool.clone(),
                    &scenario.ematch.config(candidate.threshold),
                )
            });
            match r {
                Ok(mut r) => {
                    let mut run = execute(&candidate.name, &mut i, &mut r, transport, link, timing);
                    run.raw_estimate = r.estimate().map(|e| e.p_star);
                    run
                }
                Err(e) => failed(&candidate.name, e.to_string()),
            }
        }
    }
}

fn execute(
    name: &str,
    initiator: &mut dyn Session,
    responder: &mut dyn Session,
    transport: TransportKind,
    link: LinkModel,
    mut timing: SessionTiming,
) -> CandidateRun {
    let mut channel = boxed_transport(transport);
    let (transcript, error) = match drive(initiator, responder, channel.as_mut()) {
        Ok(stats) => {
            timing.initiator_online = stats.initiator_online;
            timing.responder_online = stats.responder_online;
            timing.transfer = link.transfer_time(stats.bytes);
            (stats.transcript, None)
        }
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    CandidateRun {
        name: name.to_owned(),
        initiator: initiator.outcome().cloned(),
        responder: responder.outcome().cloned(),
        initiator_counters: initiator.counters().clone(),
        responder_counters: responder.counters().clone(),
        timing,
        transcript,
        raw_estimate: None,
        error,
    }
}

fn check_min(profile: &AttributeProfile, min: usize) -> Result<(), ProtocolError> {
    if profile.len() < min {
        return Err(ProtocolError::ProfileTooSmall { have: profile.len(), min });
    }
    Ok(())
}
