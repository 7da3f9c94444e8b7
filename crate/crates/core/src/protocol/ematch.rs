//! E-match: one Bloom filter round trip.
//!
//! The initiator builds its indexed filter offline and sends it with the
//! announced hash family. The responder inserts its own elements, counts the
//! zero bits before and after, and estimates the Ochiai similarity.

use std::sync::Arc;

use super::counters::OpCounters;
use super::message::{ProtocolId, ProtocolMessage};
use super::{check_threshold, passes_threshold, MatchOutcome, ProtocolError, Role, Session, Step};
use crate::bloom::{build_indexed_set, choose_family, AttributePool, BloomError, EstimateReport, IndexedBloomFilter};
use crate::similarity::AttributeProfile;

/// Default minimum number of attributes each party must hold.
pub const DEFAULT_MIN_ATTRIBUTES: usize = 2;

/// Filter parameters and the responder's acceptance rule.
#[derive(Debug, Clone, PartialEq)]
pub struct EMatchConfig {
    pub lambda: u32,
    pub l: u32,
    pub lprime: u32,
    pub threshold: f64,
    pub min_attributes: usize,
    /// Seed of the public hash pool.
    pub pool_seed: Vec<u8>,
}

impl EMatchConfig {
    pub fn new(lambda: u32, l: u32, lprime: u32) -> Self {
        Self {
            lambda,
            l,
            lprime,
            threshold: 0.5,
            min_attributes: DEFAULT_MIN_ATTRIBUTES,
            pool_seed: b"privmatch-pool".to_vec(),
        }
    }
}

/// `true` when `l·q₁` exceeds `λ ln λ`, past which `d₁` is likely to hit zero.
pub fn oversized_for_filter(lambda: u32, l: u32, q1: u64) -> bool {
    let lam = f64::from(lambda);
    f64::from(l) * q1 as f64 > lam * lam.ln()
}

fn check_size(profile: &AttributeProfile, min: usize) -> Result<(), ProtocolError> {
    if profile.len() < min {
        return Err(ProtocolError::ProfileTooSmall { have: profile.len(), min });
    }
    Ok(())
}

/// Builds the initiator's filter `BF_A` for `profile`.
pub fn build_initiator_filter(
    profile: &AttributeProfile,
    pool: &AttributePool,
    config: &EMatchConfig,
    seed: &[u8],
) -> Result<IndexedBloomFilter, ProtocolError> {
    let elems = build_indexed_set(profile, pool)?;
    let spec = choose_family(&config.pool_seed, config.l, config.lprime, seed)?;
    let mut filter = IndexedBloomFilter::new(config.lambda, spec)?;
    filter.insert_initiator(&elems, seed);
    Ok(filter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitiatorPhase {
    Start,
    AwaitAck,
    AwaitResult,
    Done,
    Aborted,
}

#[derive(Debug)]
pub struct EMatchInitiator {
    phase: InitiatorPhase,
    filter: IndexedBloomFilter,
    q1: u64,
    counters: OpCounters,
    outcome: Option<MatchOutcome>,
}

impl EMatchInitiator {
    /// Builds `S_A`, the hash family and `BF_A`; all of it counts as offline work.
    pub fn new(profile: &AttributeProfile, pool: &AttributePool, config: &EMatchConfig, seed: &[u8]) -> Result<Self, ProtocolError> {
        check_size(profile, config.min_attributes)?;
        let filter = build_initiator_filter(profile, pool, config, seed)?;
        Ok(Self::from_filter(filter, profile.weighted_size()))
    }

    /// Wraps an already built filter, e.g. one shared by several sessions.
    pub fn from_filter(filter: IndexedBloomFilter, q1: u64) -> Self {
        let mut counters = OpCounters::new(0);
        counters.offline.hash_ops = filter.hash_evaluations();
        Self {
            phase: InitiatorPhase::Start,
            filter,
            q1,
            counters,
            outcome: None,
        }
    }

    pub fn filter(&self) -> &IndexedBloomFilter {
        &self.filter
    }

    /// See [`oversized_for_filter`].
    pub fn oversized(&self) -> bool {
        oversized_for_filter(self.filter.lambda(), self.filter.spec().l(), self.q1)
    }

    fn advance(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        use InitiatorPhase::*;
        match (self.phase, incoming) {
            (Start, None) => {
                self.phase = AwaitAck;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::EmReq),
                    outcome: None,
                })
            }
            (AwaitAck, Some(ProtocolMessage::EmAck)) => {
                self.phase = AwaitResult;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::EmData {
                        filter: self.filter.clone(),
                    }),
                    outcome: None,
                })
            }
            (AwaitResult, Some(ProtocolMessage::EmResult { similarity })) => {
                if let Some(s) = similarity {
                    if !(0.0..=1.0).contains(&s) {
                        return Err(ProtocolError::SimilarityOutOfRange(s));
                    }
                }
                let outcome = MatchOutcome {
                    similarity,
                    accepted: similarity.is_some(),
                    ..MatchOutcome::default()
                };
                self.phase = Done;
                self.outcome = Some(outcome.clone());
                Ok(Step {
                    outgoing: None,
                    outcome: Some(outcome),
                })
            }
            (phase, got) => Err(ProtocolError::OutOfOrder {
                expected: match phase {
                    Start => "starting",
                    AwaitAck => "awaiting EM_ACK",
                    AwaitResult => "awaiting EM_RESULT",
                    Done => "finished",
                    Aborted => "aborted",
                },
                got: got.as_ref().map_or("nothing", ProtocolMessage::kind),
            }),
        }
    }
}

impl Session for EMatchInitiator {
    fn protocol(&self) -> ProtocolId {
        ProtocolId::EMatch
    }

    fn role(&self) -> Role {
        Role::Initiator
    }

    fn step(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        match self.phase {
            InitiatorPhase::Aborted => return Err(ProtocolError::Aborted),
            InitiatorPhase::Done => return Err(ProtocolError::Finished),
            _ => {}
        }
        self.advance(incoming).inspect_err(|_| self.phase = InitiatorPhase::Aborted)
    }

    fn outcome(&self) -> Option<&MatchOutcome> {
        self.outcome.as_ref()
    }

    fn counters(&self) -> &OpCounters {
        &self.counters
    }

    fn counters_mut(&mut self) -> &mut OpCounters {
        &mut self.counters
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResponderPhase {
    AwaitRequest,
    AwaitData,
    Done,
    Aborted,
}

#[derive(Debug)]
pub struct EMatchResponder {
    phase: ResponderPhase,
    profile: AttributeProfile,
    pool: Arc<AttributePool>,
    threshold: f64,
    counters: OpCounters,
    estimate: Option<EstimateReport>,
    outcome: Option<MatchOutcome>,
}

impl EMatchResponder {
    pub fn new(profile: AttributeProfile, pool: Arc<AttributePool>, config: &EMatchConfig) -> Result<Self, ProtocolError> {
        check_size(&profile, config.min_attributes)?;
        Ok(Self {
            phase: ResponderPhase::AwaitRequest,
            profile,
            pool,
            threshold: check_threshold(config.threshold)?,
            counters: OpCounters::new(0),
            estimate: None,
            outcome: None,
        })
    }

    /// Raw estimates from the last completed session.
    pub fn estimate(&self) -> Option<&EstimateReport> {
        self.estimate.as_ref()
    }

    fn on_data(&mut self, filter: IndexedBloomFilter) -> Result<Step, ProtocolError> {
        let elems = build_indexed_set(&self.profile, &self.pool)?;
        let lambda = filter.lambda();
        let d1 = filter.count_zero_bits();
        if d1 == u64::from(lambda) {
            return Err(BloomError::EmptyInitiator.into());
        }
        let before = filter.hash_evaluations();
        let mut merged = filter;
        merged.insert_responder(&elems);
        self.counters.online.hash_ops += merged.hash_evaluations() - before;
        let d0 = merged.count_zero_bits();
        if d0 == 0 {
            return Err(BloomError::Saturated(d0).into());
        }
        let spec = merged.spec();
        let report = EstimateReport::from_counts(d0, d1, lambda, spec.l(), spec.lprime(), elems.len() as u64)?;
        let similarity = report.p_star.clamp(0.0, 1.0);
        let accepted = passes_threshold(similarity, self.threshold);
        let outcome = MatchOutcome {
            similarity: Some(similarity),
            accepted,
            ..MatchOutcome::default()
        };
        self.estimate = Some(report);
        self.phase = ResponderPhase::Done;
        self.outcome = Some(outcome.clone());
        Ok(Step {
            outgoing: Some(ProtocolMessage::EmResult {
                similarity: accepted.then_some(similarity),
            }),
            outcome: Some(outcome),
        })
    }

    fn advance(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        use ResponderPhase::*;
        match (self.phase, incoming) {
            (AwaitRequest, Some(ProtocolMessage::EmReq)) => {
                self.phase = AwaitData;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::EmAck),
                    outcome: None,
                })
            }
            (AwaitData, Some(ProtocolMessage::EmData { filter })) => self.on_data(filter),
            (phase, got) => Err(ProtocolError::OutOfOrder {
                expected: match phase {
                    AwaitRequest => "awaiting EM_REQ",
                    AwaitData => "awaiting EM_DATA",
                    Done => "finished",
                    Aborted => "aborted",
                },
                got: got.as_ref().map_or("nothing", ProtocolMessage::kind),
            }),
        }
    }
}

impl Session for EMatchResponder {
    fn protocol(&self) -> ProtocolId {
        ProtocolId::EMatch
    }

    fn role(&self) -> Role {
        Role::Responder
    }

    fn step(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        match self.phase {
            ResponderPhase::Aborted => return Err(ProtocolError::Aborted),
            ResponderPhase::Done => return Err(ProtocolError::Finished),
            _ => {}
        }
        self.advance(incoming).inspect_err(|_| self.phase = ResponderPhase::Aborted)
    }

    fn outcome(&self) -> Option<&MatchOutcome> {
        self.outcome.as_ref()
    }

    fn counters(&self) -> &OpCounters {
        &self.counters
    }

    fn counters_mut(&mut self) -> &mut OpCounters {
        &mut self.counters
    }
}
