//! Indexed Bloom filter with a partially shared hash family, and the
//! zero-bit estimators for the set sizes and overlap it encodes.
//!
//! Each attribute with priority `a` is expanded into `a` indexed elements
//! `{i, j, r_i + j − 1}`. The initiator inserts every element with the first
//! `l′` functions of its announced family `H_A` plus `l − l′` private pool
//! functions. The responder inserts with all `l` functions of `H_A`, so a
//! common element re-hits exactly `l′` positions. From the zero counts `d₁`
//! (initiator filter) and `d₀` (after responder insertion):
//!
//! ```text
//! q₁* = λ(ln λ − ln d₁)/l
//! q′* = (l·q₂ + λ(ln d₀ − ln d₁))/l′
//! P*  = q′* / √(q₁*·q₂)
//! ```

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::cipher::digest_seed;
use crate::similarity::AttributeProfile;

/// Number of addressable functions in the public hash pool.
pub const POOL_SIZE: u32 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BloomError {
    #[error("attribute {0:?} is not in the public pool")]
    UnknownAttribute(String),
    #[error("invalid hash split: need 1 < l' < l, got l={l}, l'={lprime}")]
    InvalidSplit { l: u32, lprime: u32 },
    #[error("filter length must be positive")]
    ZeroLength,
    #[error("hash family does not match the filter's family")]
    SpecMismatch,
    #[error("filter saturated (zero count {0}); increase lambda")]
    Saturated(u64),
    #[error("zero counts out of order: need 0 < d0 <= d1 <= lambda (d0={d0}, d1={d1}, lambda={lambda})")]
    InvalidCounts { d0: u64, d1: u64, lambda: u64 },
    #[error("similarity undefined when no initiator element is detected (d1 = lambda)")]
    EmptyInitiator,
    #[error("parameter out of domain: {0}")]
    Domain(&'static str),
    #[error("malformed filter encoding: {0}")]
    Malformed(&'static str),
}

/// The public attribute database `R`, with per-attribute base codes.
///
/// Attribute `i` (1-based, in the order given) gets base code `(i − 1)·κ + 1`,
/// so the expanded pool `R′` enumerates the codes `1..=κn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePool {
    index: BTreeMap<String, u32>,
    kappa: u32,
}

impl AttributePool {
    pub fn new<I, S>(attributes: I, kappa: u32) -> Result<Self, BloomError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if kappa == 0 {
            return Err(BloomError::Domain("kappa must be positive"));
        }
        let mut index = BTreeMap::new();
        for (i, attr) in attributes.into_iter().enumerate() {
            let attr = attr.into();
            if index.contains_key(&attr) {
                return Err(BloomError::Domain("duplicate attribute in pool"));
            }
            index.insert(attr, i as u32 + 1);
        }
        Ok(Self { index, kappa })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn index_of(&self, attr: &str) -> Option<u32> {
        self.index.get(attr).copied()
    }

    fn base_code(&self, index: u32) -> u64 {
        u64::from(index - 1) * u64::from(self.kappa) + 1
    }
}

/// One element `{i, j, x_i(j)}` of an indexed personal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedElement {
    pub attr_index: u32,
    pub count_index: u32,
    pub value: u64,
}

impl IndexedElement {
    /// Fixed-width big-endian encoding used as hash input.
    pub fn encode(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..4].copy_from_slice(&self.attr_index.to_be_bytes());
        out[4..8].copy_from_slice(&self.count_index.to_be_bytes());
        out[8..].copy_from_slice(&self.value.to_be_bytes());
        out
    }
}

/// Expands a profile into its indexed personal set (`Σ priorities` elements).
pub fn build_indexed_set(profile: &AttributeProfile, pool: &AttributePool) -> Result<Vec<IndexedElement>, BloomError> {
    let mut out = Vec::with_capacity(profile.weighted_size() as usize);
    for (attr, priority) in profile.iter() {
        let i = pool.index_of(attr).ok_or_else(|| BloomError::UnknownAttribute(attr.to_owned()))?;
        if priority > pool.kappa {
            return Err(BloomError::Domain("priority exceeds pool kappa"));
        }
        let base = pool.base_code(i);
        out.extend((1..=priority).map(|j| IndexedElement {
            attr_index: i,
            count_index: j,
            value: base + u64::from(j) - 1,
        }));
    }
    Ok(out)
}

/// The announced family `H_A` (length `l`) and the shared count `l′`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamilySpec {
    pool_seed: Vec<u8>,
    family_indices: Vec<u32>,
    shared_count: u32,
}

impl HashFamilySpec {
    pub fn new(pool_seed: Vec<u8>, family_indices: Vec<u32>, shared_count: u32) -> Result<Self, BloomError> {
        let l = family_indices.len() as u32;
        if !(1 < shared_count && shared_count < l) {
            return Err(BloomError::InvalidSplit { l, lprime: shared_count });
        }
        let unique: HashSet<_> = family_indices.iter().collect();
        if unique.len() != family_indices.len() || family_indices.iter().any(|&t| t >= POOL_SIZE) {
            return Err(BloomError::Domain("family indices must be distinct pool members"));
        }
        Ok(Self {
            pool_seed,
            family_indices,
            shared_count,
        })
    }

    pub fn pool_seed(&self) -> &[u8] {
        &self.pool_seed
    }

    pub fn family_indices(&self) -> &[u32] {
        &self.family_indices
    }

    /// `l`.
    pub fn l(&self) -> u32 {
        self.family_indices.len() as u32
    }

    /// `l′`.
    pub fn lprime(&self) -> u32 {
        self.shared_count
    }

    /// The functions the initiator applies to every element.
    pub fn shared_indices(&self) -> &[u32] {
        &self.family_indices[..self.shared_count as usize]
    }
}

/// Draws `l` distinct pool indices for `H_A`.
pub fn choose_family(pool_seed: &[u8], l: u32, lprime: u32, rng_seed: &[u8]) -> Result<HashFamilySpec, BloomError> {
    if !(1 < lprime && lprime < l) {
        return Err(BloomError::InvalidSplit { l, lprime });
    }
    let mut rng = ChaCha20Rng::from_seed(digest_seed(b"hash-family", rng_seed));
    let indices = index::sample(&mut rng, POOL_SIZE as usize, l as usize)
        .into_iter()
        .map(|t| t as u32)
        .collect();
    HashFamilySpec::new(pool_seed.to_vec(), indices, lprime)
}

/// Pool function `t` applied to `elem`, as a 0-based bit position in `[0, λ)`.
pub fn pool_hash(pool_seed: &[u8], t: u32, elem: &IndexedElement, lambda: u32) -> u32 {
    let mut hasher = Sha256::new();
    hasher.update((pool_seed.len() as u32).to_be_bytes());
    hasher.update(pool_seed);
    hasher.update(t.to_be_bytes());
    hasher.update(elem.encode());
    let digest = hasher.finalize();
    let word = u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    (word % u64::from(lambda)) as u32
}

/// A λ-bit filter bound to a hash family. Bits are stored most-significant-bit first.
///
/// Equality compares the transmitted state only; the local hash tally is ignored.
#[derive(Debug, Clone)]
pub struct IndexedBloomFilter {
    bits: Vec<u8>,
    lambda: u32,
    spec: HashFamilySpec,
    hash_evaluations: u64,
}

impl PartialEq for IndexedBloomFilter {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda && self.bits == other.bits && self.spec == other.spec
    }
}

impl Eq for IndexedBloomFilter {}

impl IndexedBloomFilter {
    pub fn new(lambda: u32, spec: HashFamilySpec) -> Result<Self, BloomError> {
        if lambda == 0 {
            return Err(BloomError::ZeroLength);
        }
        Ok(Self {
            bits: vec![0; lambda.div_ceil(8) as usize],
            lambda,
            spec,
            hash_evaluations: 0,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn spec(&self) -> &HashFamilySpec {
        &self.spec
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Pool-function evaluations performed on this filter value since creation or decoding.
    pub fn hash_evaluations(&self) -> u64 {
        self.hash_evaluations
    }

    pub fn get(&self, pos: u32) -> bool {
        self.bits[(pos / 8) as usize] & (0x80 >> (pos % 8)) != 0
    }

    pub fn set(&mut self, pos: u32) {
        self.bits[(pos / 8) as usize] |= 0x80 >> (pos % 8);
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    pub fn count_zero_bits(&self) -> u64 {
        u64::from(self.lambda) - self.count_ones()
    }

    fn hash(&mut self, t: u32, elem: &IndexedElement) -> u32 {
        self.hash_evaluations += 1;
        pool_hash(&self.spec.pool_seed, t, elem, self.lambda)
    }

    /// Initiator insertion: the `l′` shared functions plus `l − l′` private
    /// pool functions outside `H_A`, drawn per element from `rng_seed`.
    pub fn insert_initiator(&mut self, elems: &[IndexedElement], rng_seed: &[u8]) {
        let mut rng = ChaCha20Rng::from_seed(digest_seed(b"private-hashes", rng_seed));
        let family: HashSet<u32> = self.spec.family_indices.iter().copied().collect();
        let shared = self.spec.shared_indices().to_vec();
        let private_count = (self.spec.l() - self.spec.lprime()) as usize;
        let mut private = Vec::with_capacity(private_count);
        for elem in elems {
            for &t in &shared {
                let pos = self.hash(t, elem);
                self.set(pos);
            }
            private.clear();
            while private.len() < private_count {
                let t = rng.gen_range(0..POOL_SIZE);
                if !family.contains(&t) && !private.contains(&t) {
                    private.push(t);
                }
            }
            for &t in &private {
                let pos = self.hash(t, elem);
                self.set(pos);
            }
        }
    }

    /// Responder insertion with all `l` functions of `H_A`. Existing bits are kept.
    pub fn insert_responder(&mut self, elems: &[IndexedElement]) {
        let family = self.spec.family_indices.clone();
        for elem in elems {
            for &t in &family {
                let pos = self.hash(t, elem);
                self.set(pos);
            }
        }
    }

    /// Wire encoding: λ (4 bytes BE), ⌈λ/8⌉ filter bytes, then the family:
    /// pool seed (2-byte length prefix), `l`, `l′` (4 bytes BE each) and the
    /// count-prefixed indices.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bits.len() + 2 + self.spec.pool_seed.len() + 12 + 4 * self.spec.family_indices.len());
        out.extend_from_slice(&self.lambda.to_be_bytes());
        out.extend_from_slice(&self.bits);
        out.extend_from_slice(&(self.spec.pool_seed.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.spec.pool_seed);
        out.extend_from_slice(&self.spec.l().to_be_bytes());
        out.extend_from_slice(&self.spec.shared_count.to_be_bytes());
        out.extend_from_slice(&(self.spec.family_indices.len() as u32).to_be_bytes());
        for t in &self.spec.family_indices {
            out.extend_from_slice(&t.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BloomError> {
        let mut r = Reader(bytes);
        let lambda = r.u32()?;
        if lambda == 0 {
            return Err(BloomError::ZeroLength);
        }
        let bits = r.take(lambda.div_ceil(8) as usize)?.to_vec();
        let pad = (8 - lambda % 8) % 8;
        if pad > 0 && bits[bits.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return Err(BloomError::Malformed("padding bits set"));
        }
        let seed_len = r.u16()? as usize;
        let pool_seed = r.take(seed_len)?.to_vec();
        let l = r.u32()?;
        let lprime = r.u32()?;
        let count = r.u32()?;
        if count != l {
            return Err(BloomError::Malformed("index count differs from l"));
        }
        let mut family = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            family.push(r.u32()?);
        }
        if !r.0.is_empty() {
            return Err(BloomError::Malformed("trailing bytes"));
        }
        let spec = HashFamilySpec::new(pool_seed, family, lprime)?;
        Ok(Self {
            bits,
            lambda,
            spec,
            hash_evaluations: 0,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BloomError> {
        if self.0.len() < n {
            return Err(BloomError::Malformed("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, BloomError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, BloomError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Copies `filter_a` and inserts the responder's elements, checking the family matches.
pub fn insert_responder(
    filter_a: &IndexedBloomFilter,
    spec: &HashFamilySpec,
    elems: &[IndexedElement],
) -> Result<IndexedBloomFilter, BloomError> {
    if filter_a.spec != *spec {
        return Err(BloomError::SpecMismatch);
    }
    let mut out = filter_a.clone();
    out.insert_responder(elems);
    Ok(out)
}

/// `q₁* = λ(ln λ − ln d₁)/l`.
pub fn estimate_q1(d1: u64, lambda: u32, l: u32) -> Result<f64, BloomError> {
    if d1 == 0 {
        return Err(BloomError::Saturated(0));
    }
    if d1 > u64::from(lambda) || l == 0 {
        return Err(BloomError::InvalidCounts {
            d0: d1,
            d1,
            lambda: u64::from(lambda),
        });
    }
    let lam = f64::from(lambda);
    Ok(lam * (lam.ln() - (d1 as f64).ln()) / f64::from(l))
}

/// `q′* = (l·q₂ + λ(ln d₀ − ln d₁))/l′`.
pub fn estimate_qprime(d0: u64, d1: u64, lambda: u32, l: u32, lprime: u32, q2: u64) -> Result<f64, BloomError> {
    if d0 == 0 {
        return Err(BloomError::Saturated(0));
    }
    if d0 > d1 || d1 > u64::from(lambda) || lprime == 0 {
        return Err(BloomError::InvalidCounts {
            d0,
            d1,
            lambda: u64::from(lambda),
        });
    }
    let lam = f64::from(lambda);
    Ok((f64::from(l) * q2 as f64 + lam * ((d0 as f64).ln() - (d1 as f64).ln())) / f64::from(lprime))
}

/// `P* = q′* / √(q₁*·q₂)`.
pub fn estimate_similarity(d0: u64, d1: u64, lambda: u32, l: u32, lprime: u32, q2: u64) -> Result<f64, BloomError> {
    if d1 == u64::from(lambda) {
        return Err(BloomError::EmptyInitiator);
    }
    if q2 == 0 {
        return Err(BloomError::Domain("responder set is empty"));
    }
    let q1 = estimate_q1(d1, lambda, l)?;
    let qprime = estimate_qprime(d0, d1, lambda, l, lprime, q2)?;
    Ok(qprime / (q1 * q2 as f64).sqrt())
}

/// `(λ/l²)(e^{l·q₁/λ} − 1)`.
pub fn variance_q1(lambda: f64, l: f64, q1: f64) -> f64 {
    lambda / (l * l) * (l * q1 / lambda).exp_m1()
}

/// `ζ = (l·q₁ + l·q₂ − l′·q′)/λ`.
pub fn zeta(lambda: f64, l: f64, lprime: f64, q1: f64, q2: f64, qprime: f64) -> f64 {
    (l * q1 + l * q2 - lprime * qprime) / lambda
}

/// `(λ/l′²)(e^{l·q₁/λ} + e^ζ − 2 − ζ)`.
pub fn variance_qprime(lambda: f64, l: f64, lprime: f64, q1: f64, q2: f64, qprime: f64) -> f64 {
    let z = zeta(lambda, l, lprime, q1, q2, qprime);
    lambda / (lprime * lprime) * ((l * q1 / lambda).exp_m1() + (z.exp_m1() - z))
}

/// Estimator parameters shared by the variance and bound computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub lambda: f64,
    pub l: f64,
    pub lprime: f64,
    pub q1: f64,
    pub q2: f64,
    pub qprime: f64,
}

impl EstimatorParams {
    pub fn var_q1(&self) -> f64 {
        variance_q1(self.lambda, self.l, self.q1)
    }

    pub fn var_qprime(&self) -> f64 {
        variance_qprime(self.lambda, self.l, self.lprime, self.q1, self.q2, self.qprime)
    }
}

/// Relative slack on the ε lower bounds, so a bound computed from the formula itself is accepted.
const EPS_SLACK: f64 = 1e-12;

/// Chebyshev failure probabilities `(p₁, p₂)` for relative errors `ε₁`, `ε₂`:
/// `Pr(|q₁* − q₁| ≤ ε₁q₁) ≥ 1 − p₁` and likewise for `q′*`.
pub fn chebyshev_bounds(eps1: f64, eps2: f64, params: &EstimatorParams) -> Result<(f64, f64), BloomError> {
    if params.q1 <= 0.0 || params.qprime <= 0.0 {
        return Err(BloomError::Domain("q1 and q' must be positive"));
    }
    let v1 = params.var_q1();
    let v2 = params.var_qprime();
    let t1 = eps1 * params.q1;
    let t2 = eps2 * params.qprime;
    if t1 * (1.0 + EPS_SLACK) < v1.sqrt() {
        return Err(BloomError::Domain("eps1 below its admissible lower bound"));
    }
    if t2 * (1.0 + EPS_SLACK) < v2.sqrt() {
        return Err(BloomError::Domain("eps2 below its admissible lower bound"));
    }
    Ok((v1 / (t1 * t1), v2 / (t2 * t2)))
}

/// Smallest admissible `ε₁` for the given parameters.
pub fn eps1_lower_bound(params: &EstimatorParams) -> f64 {
    params.var_q1().sqrt() / params.q1
}

/// Smallest admissible `ε₂` for the given parameters.
pub fn eps2_lower_bound(params: &EstimatorParams) -> f64 {
    params.var_qprime().sqrt() / params.qprime
}

/// Point estimates and plug-in variances from one pair of zero counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub q1_star: f64,
    pub qprime_star: f64,
    pub p_star: f64,
    pub var_q1: f64,
    pub var_qprime: f64,
}

impl EstimateReport {
    pub fn from_counts(d0: u64, d1: u64, lambda: u32, l: u32, lprime: u32, q2: u64) -> Result<Self, BloomError> {
        let q1_star = estimate_q1(d1, lambda, l)?;
        let qprime_star = estimate_qprime(d0, d1, lambda, l, lprime, q2)?;
        let p_star = estimate_similarity(d0, d1, lambda, l, lprime, q2)?;
        let (lam, lf, lpf) = (f64::from(lambda), f64::from(l), f64::from(lprime));
        Ok(Self {
            q1_star,
            qprime_star,
            p_star,
            var_q1: variance_q1(lam, lf, q1_star.max(0.0)),
            var_qprime: variance_qprime(lam, lf, lpf, q1_star.max(0.0), q2 as f64, qprime_star.max(0.0)).max(0.0),
        })
    }
}

/// Parameters of the remaining-entropy bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParams {
    pub lambda: f64,
    pub l: u32,
    pub q1: u64,
    pub kappa: u32,
    pub n: u32,
}

/// Tail mass below which the entropy sum stops.
const ENTROPY_TAIL: f64 = 1e-12;

/// Probability that one pool element passes the filter test: `1 − (1 − p)^l`
/// with `p = 1 − e^{−l·q₁/λ}`.
pub fn false_positive_rate(params: &EntropyParams) -> f64 {
    let l = f64::from(params.l);
    let p = -(-l * params.q1 as f64 / params.lambda).exp_m1();
    // Σ_{i=1}^{l} C(l,i) pⁱ(1−p)^{l−i} = 1 − (1−p)^l
    -(l * (-p).ln_1p()).exp_m1()
}

/// Remaining privacy `q₁ · Σ_{x=1}^{κn} C(κn,x) Pˣ(1−P)^{κn−x} log₂x`, in bits.
pub fn remaining_entropy(params: &EntropyParams) -> Result<f64, BloomError> {
    let total = u64::from(params.kappa) * u64::from(params.n);
    if params.q1 == 0 || params.q1 > total {
        return Err(BloomError::Domain("need 0 < q1 <= kappa * n"));
    }
    if params.lambda <= 0.0 || params.l == 0 {
        return Err(BloomError::Domain("lambda and l must be positive"));
    }
    let big_p = false_positive_rate(params);
    Ok(params.q1 as f64 * expected_log2_binomial(total, big_p))
}

/// `E[log₂ X]` over `X ~ Binomial(n, prob)` restricted to `X ≥ 1`, summed in the log domain.
fn expected_log2_binomial(n: u64, prob: f64) -> f64 {
    if prob <= 0.0 || n == 0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return (n as f64).log2();
    }
    let nf = n as f64;
    let ln_p = prob.ln();
    let ln_q = (-prob).ln_1p();
    let ln_n_fact = ln_gamma(nf + 1.0);
    let mode = ((nf + 1.0) * prob).floor() as u64;
    let mut acc = 0.0;
    for x in 1..=n {
        let xf = x as f64;
        let ln_pmf = ln_n_fact - ln_gamma(xf + 1.0) - ln_gamma(nf - xf + 1.0) + xf * ln_p + (nf - xf) * ln_q;
        let pmf = ln_pmf.exp();
        acc += pmf * xf.log2();
        // past the mode the pmf decreases, so (n − x)·pmf bounds the remaining mass
        if x > mode && pmf * (nf - xf) * nf.log2() < ENTROPY_TAIL {
            break;
        }
    }
    acc
}

/// `log₂ C(κn, q₁*)` with `q₁*` rounded to the nearest integer, via log-gamma.
pub fn candidate_uncertainty(kappa: u32, n: u32, q1_star: f64) -> Result<f64, BloomError> {
    let total = f64::from(kappa) * f64::from(n);
    let k = q1_star.round();
    if !k.is_finite() || k < 0.0 || k > total {
        return Err(BloomError::Domain("q1* must lie in [0, kappa * n]"));
    }
    let ln_binom = ln_gamma(total + 1.0) - ln_gamma(k + 1.0) - ln_gamma(total - k + 1.0);
    Ok((ln_binom / std::f64::consts::LN_2).max(0.0))
}
