//! Privacy-preserving profile matching.
//!
//! Two parties compare prioritized attribute profiles without revealing
//! them. [`protocol::pmatch`] implements the exact protocols built on a
//! commutative cipher; [`protocol::ematch`] trades exactness for speed with an
//! indexed Bloom filter whose zero-bit counts estimate the similarity.

pub mod bloom;
pub mod cipher;
pub mod protocol;
pub mod similarity;

pub use bloom::{AttributePool, BloomError, HashFamilySpec, IndexedBloomFilter};
pub use cipher::{CipherContext, CipherError, GroupElement, SafePrime, SecretExponent};
pub use protocol::{MatchOutcome, ProtocolError, ProtocolId, ProtocolMessage, Role, Session};
pub use similarity::{AttributeProfile, CommonAttributes, PriorityVector, ProfileError, SimilarityError};
