//! Two-party matching sessions.
//!
//! Every session is a state machine driven by [`Session::step`]: it consumes
//! at most one message and emits at most one. Sessions never block on I/O;
//! the caller moves messages between the two parties. Any error aborts the
//! session and no outcome is produced afterwards.

pub mod counters;
pub mod ematch;
pub mod message;
pub mod pmatch;

use std::cmp::Ordering;

use thiserror::Error;

use crate::bloom::BloomError;
use crate::cipher::CipherError;
use crate::similarity::{CommonAttributes, SimilarityError};

pub use counters::{OpCounters, OpTally, Phase};
pub use message::{Frame, FrameError, ProtocolId, ProtocolMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unexpected {got} while {expected}")]
    OutOfOrder { expected: &'static str, got: &'static str },
    #[error("session already aborted")]
    Aborted,
    #[error("session already finished")]
    Finished,
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("priority recovery failed: decrypted value outside 1..=kappa")]
    PriorityRecovery,
    #[error("priority ciphertexts disagree with the recovered priorities")]
    IntegrityCheck,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("similarity {0} outside [0, 1]")]
    SimilarityOutOfRange(f64),
    #[error("profile has {have} attributes, below the minimum of {min}")]
    ProfileTooSmall { have: usize, min: usize },
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error("estimator failure: {0}")]
    Estimator(#[from] BloomError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// What a party knows when its session ends.
///
/// Fields are populated only where the protocol's privacy level lets that
/// party learn them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub similarity: Option<f64>,
    pub common_count: Option<usize>,
    pub accepted: bool,
    /// The responder's view of the common attributes and both priority vectors.
    pub disclosed: Option<CommonAttributes>,
}

/// Result of one [`Session::step`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Step {
    pub outgoing: Option<ProtocolMessage>,
    pub outcome: Option<MatchOutcome>,
}

pub trait Session {
    fn protocol(&self) -> ProtocolId;
    fn role(&self) -> Role;
    /// Advances the state machine. The initiator starts with `None`.
    fn step(&mut self, incoming: Option<ProtocolMessage>) -> Result<Step, ProtocolError>;
    fn outcome(&self) -> Option<&MatchOutcome>;
    fn counters(&self) -> &OpCounters;
    fn counters_mut(&mut self) -> &mut OpCounters;
    fn is_finished(&self) -> bool {
        self.outcome().is_some()
    }
}

/// Validates a responder threshold.
pub fn check_threshold(t: f64) -> Result<f64, ProtocolError> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(ProtocolError::InvalidThreshold(t))
    }
}

/// Ties accept: a similarity equal to the threshold is a match.
pub fn passes_threshold(similarity: f64, threshold: f64) -> bool {
    similarity >= threshold
}

/// A message together with the role that sent it.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub from: Role,
    pub message: ProtocolMessage,
}

/// Runs two sessions to completion by passing messages directly.
pub fn run_session(initiator: &mut dyn Session, responder: &mut dyn Session) -> Result<Vec<TranscriptEntry>, ProtocolError> {
    let mut transcript = Vec::new();
    let mut pending = initiator.step(None)?.outgoing;
    let mut to_responder = true;
    while let Some(msg) = pending.take() {
        transcript.push(TranscriptEntry {
            from: if to_responder { Role::Initiator } else { Role::Responder },
            message: msg.clone(),
        });
        let next = if to_responder {
            responder.step(Some(msg))?
        } else {
            initiator.step(Some(msg))?
        };
        pending = next.outgoing;
        to_responder = !to_responder;
    }
    Ok(transcript)
}

/// Orders accepted candidates by descending similarity, ties by name.
pub fn rank_candidates<S: AsRef<str>>(outcomes: &[(S, MatchOutcome)]) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = outcomes
        .iter()
        .filter(|(_, o)| o.accepted)
        .filter_map(|(name, o)| o.similarity.map(|s| (name.as_ref().to_owned(), s)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accepted(s: f64) -> MatchOutcome {
        MatchOutcome {
            similarity: Some(s),
            accepted: true,
            ..MatchOutcome::default()
        }
    }

    #[test]
    fn ranking_orders_and_breaks_ties() {
        let outcomes = vec![
            ("bob", accepted(0.9667)),
            ("charles", accepted(0.3972)),
            ("david", accepted(0.8243)),
            ("emmy", accepted(0.2316)),
            ("frank", accepted(0.9870)),
        ];
        let names: Vec<_> = rank_candidates(&outcomes).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["frank", "bob", "david", "charles", "emmy"]);

        let tied = vec![("zed", accepted(0.5)), ("amy", accepted(0.5))];
        let names: Vec<_> = rank_candidates(&tied).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["amy", "zed"]);
    }

    #[test]
    fn declined_outcomes_are_not_ranked() {
        let outcomes = vec![("a", MatchOutcome::default()), ("b", MatchOutcome::default())];
        assert!(rank_candidates(&outcomes).is_empty());
        assert!(rank_candidates::<&str>(&[]).is_empty());
    }

    #[test]
    fn threshold_rules() {
        assert!(passes_threshold(0.5, 0.5));
        assert!(!passes_threshold(0.49, 0.5));
        assert!(check_threshold(1.0).is_ok());
        assert_eq!(check_threshold(1.5), Err(ProtocolError::InvalidThreshold(1.5)));
        assert!(check_threshold(f64::NAN).is_err());
    }
}
