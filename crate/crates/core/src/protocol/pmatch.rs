//! P-match and P-match⁺ sessions.
//!
//! Both variants share steps (i)–(v). At step (vi) the basic variant has the
//! responder compute the Tanimoto coefficient of the common priorities; the
//! enhanced variant echoes the double-encrypted initiator attributes so the
//! initiator can count common attributes, and uses the priority-aware Ochiai
//! coefficient over all priorities.
//!
//! The responder recovers the initiator's priorities by decrypting `a_i^{k_B}`
//! with `k_B′` and cross-checks every common entry against its own
//! precomputed `b_i^{k_B}`: the ciphertexts are equal exactly when the
//! priorities are.

use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::counters::{OpCounters, Phase};
use super::message::{ProtocolId, ProtocolMessage};
use super::{check_threshold, passes_threshold, MatchOutcome, ProtocolError, Role, Session, Step};
use crate::cipher::{
    commute_encrypt, digest_seed, encrypt_priority, hash_to_group, CipherContext, GroupElement, SafePrime, SecretExponent,
};
use crate::similarity::{ochiai_sets, tanimoto, AttributeProfile, CommonAttributes, PriorityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Privacy level I: Tanimoto over common priorities.
    Basic,
    /// Privacy level II: priority-aware Ochiai, initiator learns `|S|`.
    Plus,
}

impl Variant {
    pub fn protocol(self) -> ProtocolId {
        match self {
            Variant::Basic => ProtocolId::PMatch,
            Variant::Plus => ProtocolId::PMatchPlus,
        }
    }
}

fn exp(counters: &mut OpCounters, phase: Phase, x: &GroupElement, k: &SecretExponent) -> Result<GroupElement, ProtocolError> {
    counters.tally_mut(phase).exp_ops += 1;
    Ok(commute_encrypt(x, k)?)
}

fn invert(counters: &mut OpCounters, k: &SecretExponent) -> Result<SecretExponent, ProtocolError> {
    counters.offline.inversions += 1;
    Ok(k.invert()?)
}

fn check_elements(v: &[GroupElement], prime: &SafePrime) -> Result<(), ProtocolError> {
    for e in v {
        if GroupElement::new(e.value().clone(), prime).is_err() {
            return Err(ProtocolError::Malformed("group element outside Z*_p"));
        }
    }
    Ok(())
}

fn check_similarity(s: f64) -> Result<f64, ProtocolError> {
    if (0.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(ProtocolError::SimilarityOutOfRange(s))
    }
}

/// Seeded permutation of a profile's attributes, used for message order.
fn shuffled(profile: &AttributeProfile, seed: &[u8], label: &[u8]) -> Vec<(String, u32)> {
    let mut entries: Vec<(String, u32)> = profile.iter().map(|(a, p)| (a.to_owned(), p)).collect();
    let mut rng = ChaCha20Rng::from_seed(digest_seed(label, seed));
    entries.shuffle(&mut rng);
    entries
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitiatorPhase {
    Start,
    AwaitAttributes,
    AwaitPriorities,
    AwaitResult,
    Done,
    Aborted,
}

/// The initiator side. It never holds responder plaintext: only its own
/// profile and keys plus ciphertexts.
#[derive(Debug)]
pub struct PMatchInitiator {
    variant: Variant,
    phase: InitiatorPhase,
    keys: CipherContext,
    priority_key_inv: SecretExponent,
    /// `⟨h(x_i)^{K_A}, a_i^{k_A}⟩` in transmission order.
    offer: Vec<(GroupElement, GroupElement)>,
    /// `(h(y_i)^{K_B})^{K_A}` from step (iii).
    responder_double: Vec<GroupElement>,
    counters: OpCounters,
    outcome: Option<MatchOutcome>,
}

impl PMatchInitiator {
    /// Performs the offline work: hashing, both encryptions and `k_A′`.
    pub fn new(variant: Variant, profile: &AttributeProfile, keys: CipherContext, transcript_seed: &[u8]) -> Result<Self, ProtocolError> {
        let mut counters = OpCounters::new(keys.prime().bits());
        let order = shuffled(profile, transcript_seed, b"initiator-order");
        let mut offer = Vec::with_capacity(order.len());
        for (attr, priority) in &order {
            counters.offline.hash_ops += 1;
            let h = hash_to_group(attr.as_bytes(), keys.prime());
            let masked = exp(&mut counters, Phase::Offline, &h, keys.attribute_key())?;
            counters.offline.exp_ops += 1;
            let prio = encrypt_priority(u64::from(*priority), keys.priority_key())?;
            offer.push((masked, prio));
        }
        let priority_key_inv = invert(&mut counters, keys.priority_key())?;
        Ok(Self {
            variant,
            phase: InitiatorPhase::Start,
            keys,
            priority_key_inv,
            offer,
            responder_double: Vec::new(),
            counters,
            outcome: None,
        })
    }

    fn finish(&mut self, outcome: MatchOutcome) -> Result<Step, ProtocolError> {
        self.phase = InitiatorPhase::Done;
        self.outcome = Some(outcome.clone());
        Ok(Step {
            outgoing: None,
            outcome: Some(outcome),
        })
    }

    fn advance(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        use InitiatorPhase::*;
        let prime = self.keys.prime().clone();
        match (self.phase, incoming) {
            (Start, None) => {
                self.phase = AwaitAttributes;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::Pm1 { pairs: self.offer.clone() }),
                    outcome: None,
                })
            }
            (AwaitAttributes, Some(ProtocolMessage::Pm2 { attributes })) => {
                check_elements(&attributes, &prime)?;
                let mut double = Vec::with_capacity(attributes.len());
                for y in &attributes {
                    double.push(exp(&mut self.counters, Phase::Online, y, self.keys.attribute_key())?);
                }
                self.responder_double = double.clone();
                self.phase = AwaitPriorities;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::Pm3 { reencrypted: double }),
                    outcome: None,
                })
            }
            (AwaitPriorities, Some(ProtocolMessage::Pm4 { priorities })) => {
                if priorities.len() != self.offer.len() {
                    return Err(ProtocolError::Malformed("PM4 length differs from PM1"));
                }
                check_elements(&priorities, &prime)?;
                let mut stripped = Vec::with_capacity(priorities.len());
                for c in &priorities {
                    stripped.push(exp(&mut self.counters, Phase::Online, c, &self.priority_key_inv)?);
                }
                self.phase = AwaitResult;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::Pm5 { priorities: stripped }),
                    outcome: None,
                })
            }
            (AwaitPriorities, Some(ProtocolMessage::Decline { step: 4 })) => {
                let common_count = (self.variant == Variant::Plus).then_some(0);
                self.finish(MatchOutcome {
                    common_count,
                    ..MatchOutcome::default()
                })
            }
            (AwaitResult, Some(ProtocolMessage::Pm6 { similarity })) if self.variant == Variant::Basic => {
                let s = check_similarity(similarity)?;
                self.finish(MatchOutcome {
                    similarity: Some(s),
                    accepted: true,
                    ..MatchOutcome::default()
                })
            }
            (AwaitResult, Some(ProtocolMessage::Decline { step: 6 })) if self.variant == Variant::Basic => {
                self.finish(MatchOutcome::default())
            }
            (AwaitResult, Some(ProtocolMessage::PlusReply { reencrypted, similarity })) if self.variant == Variant::Plus => {
                if reencrypted.len() != self.offer.len() {
                    return Err(ProtocolError::Malformed("reply length differs from PM1"));
                }
                let similarity = similarity.map(check_similarity).transpose()?;
                let known: HashSet<&GroupElement> = self.responder_double.iter().collect();
                let common = reencrypted.iter().filter(|e| known.contains(e)).count();
                // no common attribute: the enhanced initiator terminates without a result
                let similarity = if common == 0 { None } else { similarity };
                self.finish(MatchOutcome {
                    similarity,
                    common_count: Some(common),
                    accepted: similarity.is_some(),
                    disclosed: None,
                })
            }
            (phase, got) => Err(ProtocolError::OutOfOrder {
                expected: initiator_expectation(phase),
                got: got.as_ref().map_or("nothing", ProtocolMessage::kind),
            }),
        }
    }
}

fn initiator_expectation(phase: InitiatorPhase) -> &'static str {
    match phase {
        InitiatorPhase::Start => "starting",
        InitiatorPhase::AwaitAttributes => "awaiting PM2",
        InitiatorPhase::AwaitPriorities => "awaiting PM4",
        InitiatorPhase::AwaitResult => "awaiting the result",
        InitiatorPhase::Done => "finished",
        InitiatorPhase::Aborted => "aborted",
    }
}

impl Session for PMatchInitiator {
    fn protocol(&self) -> ProtocolId {
        self.variant.protocol()
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
        if let Some(msg) = &incoming {
            self.counters.elements_received += msg.group_elements() as u64;
            if !msg.valid_for(self.protocol()) {
                self.phase = InitiatorPhase::Aborted;
                return Err(ProtocolError::Malformed("message not valid for this protocol"));
            }
        }
        match self.advance(incoming) {
            Ok(step) => {
                if let Some(out) = &step.outgoing {
                    self.counters.elements_sent += out.group_elements() as u64;
                }
                Ok(step)
            }
            Err(e) => {
                self.phase = InitiatorPhase::Aborted;
                Err(e)
            }
        }
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
    AwaitOffer,
    AwaitReencrypted,
    AwaitPriorities,
    Done,
    Aborted,
}

#[derive(Debug, Clone)]
struct OwnEntry {
    attribute: String,
    priority: u32,
    /// `b_i^{k_B}`.
    priority_ct: GroupElement,
}

/// The responder side.
#[derive(Debug)]
pub struct PMatchResponder {
    variant: Variant,
    phase: ResponderPhase,
    keys: CipherContext,
    priority_key_inv: SecretExponent,
    kappa: u32,
    threshold: f64,
    own: Vec<OwnEntry>,
    /// `h(y_i)^{K_B}` aligned with `own`.
    own_masked: Vec<GroupElement>,
    offer: Vec<(GroupElement, GroupElement)>,
    /// F₁: `(h(x_i)^{K_A})^{K_B}` aligned with the offer.
    f1: Vec<GroupElement>,
    /// L₂ as (offer index, own index) for each common attribute.
    matches: Vec<(usize, usize)>,
    counters: OpCounters,
    outcome: Option<MatchOutcome>,
}

impl PMatchResponder {
    /// Performs the offline work: hashing, `h(y_i)^{K_B}`, `b_i^{k_B}` and `k_B′`.
    pub fn new(
        variant: Variant,
        profile: &AttributeProfile,
        keys: CipherContext,
        threshold: f64,
        transcript_seed: &[u8],
    ) -> Result<Self, ProtocolError> {
        let threshold = check_threshold(threshold)?;
        let mut counters = OpCounters::new(keys.prime().bits());
        let order = shuffled(profile, transcript_seed, b"responder-order");
        let mut own = Vec::with_capacity(order.len());
        let mut own_masked = Vec::with_capacity(order.len());
        for (attr, priority) in order {
            counters.offline.hash_ops += 1;
            let h = hash_to_group(attr.as_bytes(), keys.prime());
            own_masked.push(exp(&mut counters, Phase::Offline, &h, keys.attribute_key())?);
            counters.offline.exp_ops += 1;
            let priority_ct = encrypt_priority(u64::from(priority), keys.priority_key())?;
            own.push(OwnEntry {
                attribute: attr,
                priority,
                priority_ct,
            });
        }
        let priority_key_inv = invert(&mut counters, keys.priority_key())?;
        Ok(Self {
            variant,
            phase: ResponderPhase::AwaitOffer,
            keys,
            priority_key_inv,
            kappa: profile.kappa(),
            threshold,
            own,
            own_masked,
            offer: Vec::new(),
            f1: Vec::new(),
            matches: Vec::new(),
            counters,
            outcome: None,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn finish(&mut self, outgoing: ProtocolMessage, outcome: MatchOutcome) -> Result<Step, ProtocolError> {
        self.phase = ResponderPhase::Done;
        self.outcome = Some(outcome.clone());
        Ok(Step {
            outgoing: Some(outgoing),
            outcome: Some(outcome),
        })
    }

    /// Steps (iv): find S via F₁ against L₁, then re-encrypt the initiator's priorities.
    fn on_reencrypted(&mut self, reencrypted: Vec<GroupElement>) -> Result<Step, ProtocolError> {
        if reencrypted.len() != self.own.len() {
            return Err(ProtocolError::Malformed("PM3 length differs from PM2"));
        }
        check_elements(&reencrypted, self.keys.prime())?;
        // L₁: (h(y_i)^{K_B})^{K_A} → own index
        let l1: HashMap<&GroupElement, usize> = reencrypted.iter().enumerate().map(|(j, e)| (e, j)).collect();
        let mut f1 = Vec::with_capacity(self.offer.len());
        for (masked, _) in &self.offer {
            f1.push(exp(&mut self.counters, Phase::Online, masked, self.keys.attribute_key())?);
        }
        self.matches = f1.iter().enumerate().filter_map(|(i, e)| l1.get(e).map(|&j| (i, j))).collect();
        self.f1 = f1;
        if self.matches.is_empty() {
            return self.finish(
                ProtocolMessage::Decline { step: 4 },
                MatchOutcome {
                    common_count: Some(0),
                    disclosed: Some(CommonAttributes::default()),
                    ..MatchOutcome::default()
                },
            );
        }
        let mut priorities = Vec::with_capacity(self.offer.len());
        for (_, prio) in &self.offer {
            priorities.push(exp(&mut self.counters, Phase::Online, prio, self.keys.priority_key())?);
        }
        self.phase = ResponderPhase::AwaitPriorities;
        Ok(Step {
            outgoing: Some(ProtocolMessage::Pm4 { priorities }),
            outcome: None,
        })
    }

    /// Step (vi): recover `a_i`, build L₄ and the priority vectors, then gate on the threshold.
    fn on_priorities(&mut self, keyed: Vec<GroupElement>) -> Result<Step, ProtocolError> {
        if keyed.len() != self.offer.len() {
            return Err(ProtocolError::Malformed("PM5 length differs from PM1"));
        }
        check_elements(&keyed, self.keys.prime())?;
        let mut recovered = Vec::with_capacity(keyed.len());
        for c in &keyed {
            let plain = exp(&mut self.counters, Phase::Online, c, &self.priority_key_inv)?;
            let a = plain
                .value()
                .to_u32()
                .filter(|a| (1..=self.kappa).contains(a))
                .ok_or(ProtocolError::PriorityRecovery)?;
            recovered.push(a);
        }
        // L₄, sorted by attribute for the canonical vector order
        let mut l4: Vec<(&str, u32, u32)> = Vec::with_capacity(self.matches.len());
        for &(i, j) in &self.matches {
            let own = &self.own[j];
            if (recovered[i] == own.priority) != (keyed[i] == own.priority_ct) {
                return Err(ProtocolError::IntegrityCheck);
            }
            l4.push((own.attribute.as_str(), recovered[i], own.priority));
        }
        l4.sort_by(|a, b| a.0.cmp(b.0));
        let common = CommonAttributes {
            ids: l4.iter().map(|e| e.0.to_owned()).collect(),
            initiator: PriorityVector(l4.iter().map(|e| e.1).collect()),
            responder: PriorityVector(l4.iter().map(|e| e.2).collect()),
        };
        match self.variant {
            Variant::Basic => {
                let t = tanimoto(&common.initiator, &common.responder)?;
                let accepted = passes_threshold(t, self.threshold);
                let out = if accepted {
                    ProtocolMessage::Pm6 { similarity: t }
                } else {
                    ProtocolMessage::Decline { step: 6 }
                };
                self.finish(
                    out,
                    MatchOutcome {
                        similarity: Some(t),
                        common_count: Some(common.len()),
                        accepted,
                        disclosed: Some(common),
                    },
                )
            }
            Variant::Plus => {
                // Algorithm 1, line 1: (h(x_i)^{K_A})^{K_B} for the echo
                let mut echo = Vec::with_capacity(self.offer.len());
                for (masked, _) in &self.offer {
                    echo.push(exp(&mut self.counters, Phase::Online, masked, self.keys.attribute_key())?);
                }
                let sum_min: u64 = l4.iter().map(|e| u64::from(e.1.min(e.2))).sum();
                let size_a: u64 = recovered.iter().map(|&a| u64::from(a)).sum();
                let size_b: u64 = self.own.iter().map(|e| u64::from(e.priority)).sum();
                let p = ochiai_sets(sum_min, size_a, size_b)?;
                let accepted = passes_threshold(p, self.threshold);
                self.finish(
                    ProtocolMessage::PlusReply {
                        reencrypted: echo,
                        similarity: accepted.then_some(p),
                    },
                    MatchOutcome {
                        similarity: Some(p),
                        common_count: Some(common.len()),
                        accepted,
                        disclosed: Some(common),
                    },
                )
            }
        }
    }

    fn advance(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError> {
        use ResponderPhase::*;
        match (self.phase, incoming) {
            (AwaitOffer, Some(ProtocolMessage::Pm1 { pairs })) => {
                if pairs.is_empty() {
                    return Err(ProtocolError::Malformed("empty PM1"));
                }
                for (a, b) in &pairs {
                    check_elements(std::slice::from_ref(a), self.keys.prime())?;
                    check_elements(std::slice::from_ref(b), self.keys.prime())?;
                }
                self.offer = pairs;
                self.phase = AwaitReencrypted;
                Ok(Step {
                    outgoing: Some(ProtocolMessage::Pm2 {
                        attributes: self.own_masked.clone(),
                    }),
                    outcome: None,
                })
            }
            (AwaitReencrypted, Some(ProtocolMessage::Pm3 { reencrypted })) => self.on_reencrypted(reencrypted),
            (AwaitPriorities, Some(ProtocolMessage::Pm5 { priorities })) => self.on_priorities(priorities),
            (phase, got) => Err(ProtocolError::OutOfOrder {
                expected: match phase {
                    AwaitOffer => "awaiting PM1",
                    AwaitReencrypted => "awaiting PM3",
                    AwaitPriorities => "awaiting PM5",
                    Done => "finished",
                    Aborted => "aborted",
                },
                got: got.as_ref().map_or("nothing", ProtocolMessage::kind),
            }),
        }
    }
}

impl Session for PMatchResponder {
    fn protocol(&self) -> ProtocolId {
        self.variant.protocol()
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
        if let Some(msg) = &incoming {
            self.counters.elements_received += msg.group_elements() as u64;
            if !msg.valid_for(self.protocol()) {
                self.phase = ResponderPhase::Aborted;
                return Err(ProtocolError::Malformed("message not valid for this protocol"));
            }
        }
        match self.advance(incoming) {
            Ok(step) => {
                if let Some(out) = &step.outgoing {
                    self.counters.elements_sent += out.group_elements() as u64;
                }
                Ok(step)
            }
            Err(e) => {
                self.phase = ResponderPhase::Aborted;
                Err(e)
            }
        }
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

/// Recovers a priority from `a^k` by trying every candidate in `1..=kappa`.
///
/// Returns the priority and the number of trial encryptions spent (at most κ).
pub fn recover_priority_by_trial(ciphertext: &GroupElement, key: &SecretExponent, kappa: u32) -> Result<(u32, u32), ProtocolError> {
    for a in 1..=kappa {
        if encrypt_priority(u64::from(a), key)? == *ciphertext {
            return Ok((a, a));
        }
    }
    Err(ProtocolError::PriorityRecovery)
}

/// `true` when `value` decodes to a priority in `1..=kappa`.
pub fn is_priority(value: &BigUint, kappa: u32) -> bool {
    value.to_u32().is_some_and(|a| (1..=kappa).contains(&a))
}
