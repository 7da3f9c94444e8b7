//! Commutative power cipher over a safe-prime field.
//!
//! Encryption is `x ↦ x^k mod p`. Layers under different keys commute, and a
//! layer is removed with the inverse exponent `k′ = k⁻¹ mod (p − 1)`.

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Miller–Rabin rounds used for every primality decision.
pub const MILLER_RABIN_ROUNDS: usize = 64;

const MODP_1024: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF";
const MODP_1536: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF";
const MODP_2048: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

/// Small primes used to sieve safe-prime candidates before Miller–Rabin.
const SIEVE_LIMIT: u32 = 2000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("safe prime search exhausted after {0} candidates; retry with a new seed")]
    SearchExhausted(u64),
    #[error("bit length {0} is too small for a safe prime")]
    BitsTooSmall(u64),
    #[error("{0} is not a safe prime")]
    NotSafePrime(BigUint),
    #[error("element is not in Z*_p")]
    NotInGroup,
    #[error("exponent has no inverse modulo p - 1")]
    NotInvertible,
    #[error("priority {0} outside the admissible domain")]
    PriorityOutOfDomain(u64),
    #[error("exponent belongs to a different modulus")]
    ModulusMismatch,
}

/// A prime `p` such that `(p − 1)/2` is also prime.
#[derive(Clone, PartialEq, Eq)]
pub struct SafePrime {
    p: BigUint,
    /// `p − 1`, the order of Z*_p.
    order: BigUint,
    bits: u64,
}

impl fmt::Debug for SafePrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SafePrime({} bits, {:#x})", self.bits, self.p)
    }
}

impl SafePrime {
    /// Validates `p` as a safe prime.
    pub fn new(p: BigUint) -> Result<Self, CipherError> {
        let mut rng = ChaCha20Rng::from_seed(digest_seed(b"safe-prime-validate", &p.to_bytes_be()));
        let two = BigUint::from(2u32);
        if p < BigUint::from(5u32) || p.is_even() {
            return Err(CipherError::NotSafePrime(p));
        }
        let q = (&p - 1u32) / &two;
        if !is_probable_prime(&q, &mut rng) || !is_probable_prime(&p, &mut rng) {
            return Err(CipherError::NotSafePrime(p));
        }
        Ok(Self::from_parts(p))
    }

    fn from_parts(p: BigUint) -> Self {
        let order = &p - 1u32;
        let bits = p.bits();
        Self { p, order, bits }
    }

    /// Deterministically searches for a safe prime of exactly `bits` bits.
    ///
    /// The search draws candidates `q` with the top bit forced and tests
    /// `q` and `2q + 1`. It gives up after `64 · bits²` candidates.
    pub fn generate(bits: u64, seed: &[u8]) -> Result<Self, CipherError> {
        if bits < 3 {
            return Err(CipherError::BitsTooSmall(bits));
        }
        let mut rng = ChaCha20Rng::from_seed(digest_seed(b"safe-prime", seed));
        let budget = 64 * bits * bits;
        let qbits = bits - 1;
        let sieve = small_primes(SIEVE_LIMIT);
        for _ in 0..budget {
            let mut q = rng.gen_biguint(qbits);
            q.set_bit(qbits - 1, true);
            if qbits > 1 {
                q.set_bit(0, true);
            }
            let p = (&q << 1u32) + 1u32;
            if !passes_sieve(&q, &p, &sieve) {
                continue;
            }
            // cheap Fermat filter on p before the full tests
            if !BigUint::from(2u32).modpow(&(&p - 1u32), &p).is_one() {
                continue;
            }
            if is_probable_prime(&q, &mut rng) && is_probable_prime(&p, &mut rng) {
                return Ok(Self::from_parts(p));
            }
        }
        Err(CipherError::SearchExhausted(budget))
    }

    /// The published MODP safe primes (RFC 2409 group 2, RFC 3526 groups 5 and 14)
    /// for 1024, 1536 and 2048 bits.
    pub fn well_known(bits: u64) -> Option<Self> {
        let hex = match bits {
            1024 => MODP_1024,
            1536 => MODP_1536,
            2048 => MODP_2048,
            _ => return None,
        };
        let p = BigUint::parse_bytes(hex.as_bytes(), 16).expect("valid hex constant");
        Some(Self::from_parts(p))
    }

    /// A published prime when one exists for `bits`, otherwise a generated one.
    pub fn for_bits(bits: u64, seed: &[u8]) -> Result<Self, CipherError> {
        match Self::well_known(bits) {
            Some(p) => Ok(p),
            None => Self::generate(bits, seed),
        }
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    /// `p − 1`.
    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Byte width of a fully-padded element of Z*_p.
    pub fn element_bytes(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }
}

fn small_primes(limit: u32) -> Vec<u32> {
    let mut composite = vec![false; limit as usize + 1];
    let mut out = Vec::new();
    for n in 2..=limit {
        if !composite[n as usize] {
            out.push(n);
            let mut m = n * n;
            while m <= limit {
                composite[m as usize] = true;
                m += n;
            }
        }
    }
    out
}

fn passes_sieve(q: &BigUint, p: &BigUint, primes: &[u32]) -> bool {
    for &r in primes {
        let rq = (q % r).iter_u32_digits().next().unwrap_or(0);
        let rp = (p % r).iter_u32_digits().next().unwrap_or(0);
        if (rq == 0 && *q != BigUint::from(r)) || (rp == 0 && *p != BigUint::from(r)) {
            return false;
        }
    }
    true
}

/// Miller–Rabin with [`MILLER_RABIN_ROUNDS`] random bases.
pub fn is_probable_prime<R: RngCore>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let s = BigUint::from(small);
        if *n == s {
            return true;
        }
        if (n % &s).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> shift;
    let upper = n - 1u32;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &upper);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A secret exponent `k` with `gcd(k, p − 1) = 1`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretExponent {
    k: BigUint,
    prime: Arc<SafePrime>,
}

impl fmt::Debug for SecretExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretExponent(..)")
    }
}

impl SecretExponent {
    /// Wraps an explicit exponent, checking admissibility.
    pub fn new(k: BigUint, prime: Arc<SafePrime>) -> Result<Self, CipherError> {
        if k <= BigUint::one() || k >= *prime.order() || !k.gcd(prime.order()).is_one() {
            return Err(CipherError::NotInvertible);
        }
        Ok(Self { k, prime })
    }

    /// Samples `k` uniformly from `[2, p − 2]`, rejecting until `gcd(k, p − 1) = 1`.
    pub fn derive(prime: Arc<SafePrime>, seed: &[u8]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(digest_seed(b"secret-exponent", seed));
        let low = BigUint::from(2u32);
        // gen_biguint_range is half-open, so the upper bound p − 1 admits p − 2
        let high = prime.order().clone();
        loop {
            let k = rng.gen_biguint_range(&low, &high);
            if k.gcd(prime.order()).is_one() {
                return Self { k, prime };
            }
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.k
    }

    pub fn prime(&self) -> &Arc<SafePrime> {
        &self.prime
    }

    /// `k′` with `k·k′ ≡ 1 (mod p − 1)`, via the extended Euclidean algorithm.
    pub fn invert(&self) -> Result<Self, CipherError> {
        let modulus = BigInt::from_biguint(Sign::Plus, self.prime.order().clone());
        let k = BigInt::from_biguint(Sign::Plus, self.k.clone());
        let egcd = k.extended_gcd(&modulus);
        if !egcd.gcd.is_one() {
            return Err(CipherError::NotInvertible);
        }
        let inv = egcd.x.mod_floor(&modulus);
        let inv = inv.to_biguint().ok_or(CipherError::NotInvertible)?;
        Ok(Self {
            k: inv,
            prime: self.prime.clone(),
        })
    }
}

/// An element of Z*_p.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:#x})", self.0)
    }
}

impl GroupElement {
    pub fn new(value: BigUint, prime: &SafePrime) -> Result<Self, CipherError> {
        if value.is_zero() || value >= *prime.p() {
            return Err(CipherError::NotInGroup);
        }
        Ok(Self(value))
    }

    /// Wraps a value without range checking; used by the wire decoder, which
    /// validates against the session modulus separately.
    pub fn from_raw(value: BigUint) -> Self {
        Self(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Minimal big-endian bytes (a single zero byte for zero).
    pub fn to_bytes_be(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn is_quadratic_residue(&self, prime: &SafePrime) -> bool {
        let half = prime.order() >> 1u32;
        self.0.modpow(&half, prime.p()).is_one()
    }
}

/// Maps attribute bytes to a quadratic residue of Z*_p.
///
/// SHA-256 of the input is reduced mod p and squared. A zero residue is
/// re-hashed with a big-endian counter suffix.
pub fn hash_to_group(attr: &[u8], prime: &SafePrime) -> GroupElement {
    let mut counter: u32 = 0;
    loop {
        let mut hasher = Sha256::new();
        hasher.update(attr);
        if counter > 0 {
            hasher.update(counter.to_be_bytes());
        }
        let digest = hasher.finalize();
        let r = BigUint::from_bytes_be(&digest) % prime.p();
        if !r.is_zero() {
            return GroupElement((&r * &r) % prime.p());
        }
        counter += 1;
    }
}

/// `x^k mod p`.
pub fn commute_encrypt(x: &GroupElement, k: &SecretExponent) -> Result<GroupElement, CipherError> {
    let p = k.prime.p();
    if x.0.is_zero() || x.0 >= *p {
        return Err(CipherError::NotInGroup);
    }
    Ok(GroupElement(x.0.modpow(&k.k, p)))
}

/// Removes the `k` layer: `y^{k′}` where `k′` is the inverse exponent.
pub fn commute_decrypt(y: &GroupElement, k_inv: &SecretExponent) -> Result<GroupElement, CipherError> {
    commute_encrypt(y, k_inv)
}

/// `a^k mod p` for a raw priority `a ≥ 1` (priorities are not hashed first).
pub fn encrypt_priority(a: u64, k: &SecretExponent) -> Result<GroupElement, CipherError> {
    if a == 0 || BigUint::from(a) >= *k.prime.p() {
        return Err(CipherError::PriorityOutOfDomain(a));
    }
    Ok(GroupElement(BigUint::from(a).modpow(&k.k, k.prime.p())))
}

/// A party's key material: the safe prime, the attribute key `K` and the priority key `k`.
#[derive(Clone, Debug)]
pub struct CipherContext {
    prime: Arc<SafePrime>,
    attribute_key: SecretExponent,
    priority_key: SecretExponent,
}

impl CipherContext {
    /// Derives both exponents from one seed with domain separation.
    pub fn derive(prime: Arc<SafePrime>, seed: &[u8]) -> Self {
        let mut attr_seed = b"attribute-key/".to_vec();
        attr_seed.extend_from_slice(seed);
        let mut prio_seed = b"priority-key/".to_vec();
        prio_seed.extend_from_slice(seed);
        Self {
            attribute_key: SecretExponent::derive(prime.clone(), &attr_seed),
            priority_key: SecretExponent::derive(prime.clone(), &prio_seed),
            prime,
        }
    }

    pub fn from_keys(attribute_key: SecretExponent, priority_key: SecretExponent) -> Result<Self, CipherError> {
        if attribute_key.prime != priority_key.prime {
            return Err(CipherError::ModulusMismatch);
        }
        Ok(Self {
            prime: attribute_key.prime.clone(),
            attribute_key,
            priority_key,
        })
    }

    pub fn prime(&self) -> &Arc<SafePrime> {
        &self.prime
    }

    pub fn attribute_key(&self) -> &SecretExponent {
        &self.attribute_key
    }

    pub fn priority_key(&self) -> &SecretExponent {
        &self.priority_key
    }
}

/// Expands an arbitrary seed into a 32-byte ChaCha seed under a domain label.
pub(crate) fn digest_seed(domain: &[u8], seed: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((domain.len() as u32).to_be_bytes());
    hasher.update(domain);
    hasher.update(seed);
    hasher.finalize().into()
}
