//! Operation and traffic counters kept by each session.

use std::ops::AddAssign;

/// Counts of the expensive operations in one phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    /// Keyed hashes: hash-to-group calls, or Bloom pool-function evaluations.
    pub hash_ops: u64,
    /// Modular exponentiations.
    pub exp_ops: u64,
    /// Key inversions `k′ = k⁻¹ mod (p − 1)`.
    pub inversions: u64,
    /// Standalone modular multiplications.
    pub mul_ops: u64,
}

impl OpTally {
    /// Exponentiation-class operations: exponentiations plus key inversions.
    pub fn exp_class(&self) -> u64 {
        self.exp_ops + self.inversions
    }
}

impl AddAssign for OpTally {
    fn add_assign(&mut self, rhs: Self) {
        self.hash_ops += rhs.hash_ops;
        self.exp_ops += rhs.exp_ops;
        self.inversions += rhs.inversions;
        self.mul_ops += rhs.mul_ops;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Offline,
    Online,
}

/// Per-session instrumentation.
///
/// Offline work is whatever a party can precompute before meeting a peer;
/// everything triggered by a received message is online.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Modulus size for the exponentiation class (0 when no modulus is involved).
    pub modulus_bits: u64,
    pub offline: OpTally,
    pub online: OpTally,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub elements_sent: u64,
    pub elements_received: u64,
}

impl OpCounters {
    pub fn new(modulus_bits: u64) -> Self {
        Self {
            modulus_bits,
            ..Self::default()
        }
    }

    pub fn tally_mut(&mut self, phase: Phase) -> &mut OpTally {
        match phase {
            Phase::Offline => &mut self.offline,
            Phase::Online => &mut self.online,
        }
    }

    pub fn total(&self) -> OpTally {
        let mut t = self.offline;
        t += self.online;
        t
    }

    /// Exponentiation-class count at 1024 bits or below (`exp₁`).
    pub fn exp1024_ops(&self, phase: Phase) -> u64 {
        let t = match phase {
            Phase::Offline => self.offline,
            Phase::Online => self.online,
        };
        if self.modulus_bits <= 1024 {
            t.exp_class()
        } else {
            0
        }
    }

    /// Exponentiation-class count above 1024 bits (`exp₂`).
    pub fn exp2048_ops(&self, phase: Phase) -> u64 {
        let t = match phase {
            Phase::Offline => self.offline,
            Phase::Online => self.online,
        };
        if self.modulus_bits > 1024 {
            t.exp_class()
        } else {
            0
        }
    }

    /// Group-element payload in bits, as counted by the complexity tables.
    pub fn payload_bits_sent(&self) -> u64 {
        self.elements_sent * self.modulus_bits
    }

    pub fn payload_bits_received(&self) -> u64 {
        self.elements_received * self.modulus_bits
    }

    pub fn record_sent(&mut self, bytes: u64) {
        self.bytes_sent += bytes;
        self.frames_sent += 1;
    }

    pub fn record_received(&mut self, bytes: u64) {
        self.bytes_received += bytes;
        self.frames_received += 1;
    }
}
