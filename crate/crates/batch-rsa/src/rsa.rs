//! Textbook RSA over one modulus with several exponent pairs: key
//! generation, encryption, and CRT decryption. This is the baseline every
//! batch result is checked against. No padding — the crate studies
//! decryption cost and scheduling, not semantic security.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nt;

/// One public/private exponent pair over the shared modulus, with the
/// precomputed CRT residues used by conventional decryption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub e: BigUint,
    pub d: BigUint,
    pub d_mod_p1: BigUint,
    pub d_mod_q1: BigUint,
}

/// RSA key material: modulus, factors, and one or more exponent slots, all
/// over the same modulus. Immutable after construction and safe to share
/// read-only across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub n: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    pub phi: BigUint,
    pub slots: Vec<Slot>,
    /// q^-1 mod p, shared by every slot's CRT recombination.
    pub q_inv_p: BigUint,
}

impl KeyPair {
    /// Assembles a key from factors and exponents, deriving phi, the private
    /// exponents and the CRT caches. Validates the slot invariants.
    pub fn from_parts(p: BigUint, q: BigUint, exponents: &[BigUint]) -> Result<KeyPair> {
        if p == q {
            return Err(Error::KeyGeneration("p and q must differ".into()));
        }
        check_exponent_list(exponents)?;
        let n = &p * &q;
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        let phi = &p1 * &q1;
        let q_inv_p = nt::mod_inverse(&q, &p)
            .ok_or_else(|| Error::KeyGeneration("q not invertible mod p".into()))?;
        let mut slots = Vec::with_capacity(exponents.len());
        for e in exponents {
            let d = nt::mod_inverse(e, &phi).ok_or_else(|| {
                Error::KeyGeneration(format!("exponent {e} shares a factor with phi"))
            })?;
            slots.push(Slot {
                d_mod_p1: &d % &p1,
                d_mod_q1: &d % &q1,
                e: e.clone(),
                d,
            });
        }
        Ok(KeyPair { n, p, q, phi, slots, q_inv_p })
    }

    pub fn slot(&self, index: usize) -> Result<&Slot> {
        self.slots
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("no slot {index}")))
    }

    /// Slot index for a given public exponent, if present.
    pub fn slot_index_of(&self, e: &BigUint) -> Option<usize> {
        self.slots.iter().position(|s| &s.e == e)
    }

    pub fn public_exponents(&self) -> Vec<BigUint> {
        self.slots.iter().map(|s| s.e.clone()).collect()
    }

    /// base^exp mod n computed through the factors: two half-size
    /// exponentiations recombined with the cached q^-1 mod p.
    pub fn crt_pow(&self, base: &BigUint, exp_mod_p1: &BigUint, exp_mod_q1: &BigUint) -> BigUint {
        let mp = (base % &self.p).modpow(exp_mod_p1, &self.p);
        let mq = (base % &self.q).modpow(exp_mod_q1, &self.q);
        // h = q_inv * (mp - mq) mod p
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let h = (&self.q_inv_p * diff) % &self.p;
        mq + h * &self.q
    }

    /// One private exponentiation with an arbitrary phi-sized exponent,
    /// through the CRT. Used by the batch root step.
    pub fn private_pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        let p1 = &self.p - 1u32;
        let q1 = &self.q - 1u32;
        self.crt_pow(base, &(exp % p1), &(exp % q1))
    }
}

fn check_exponent_list(exponents: &[BigUint]) -> Result<()> {
    if exponents.is_empty() {
        return Err(Error::InvalidInput("exponent list is empty".into()));
    }
    for e in exponents {
        if e.is_zero() || (e % 2u32).is_zero() {
            return Err(Error::InvalidInput(format!("exponent {e} must be odd and positive")));
        }
    }
    for i in 0..exponents.len() {
        for j in i + 1..exponents.len() {
            if !exponents[i].gcd(&exponents[j]).is_one() {
                return Err(Error::InvalidInput(format!(
                    "exponents not pairwise coprime: {} and {}",
                    exponents[i], exponents[j]
                )));
            }
        }
    }
    Ok(())
}

/// Number of retries for drawing a prime compatible with the exponent list.
const PRIME_RETRIES: u32 = 64;

/// Generates a keypair with modulus of `bits` bits and one slot per
/// requested exponent. Deterministic for a fixed seed. Each prime is drawn
/// until it is compatible with every exponent (gcd(e, p-1) = 1), up to a
/// retry budget.
pub fn generate_keypair(bits: u64, exponents: &[BigUint], seed: u64) -> Result<KeyPair> {
    if bits < 16 {
        return Err(Error::InvalidInput(format!("modulus of {bits} bits is below the 16-bit floor")));
    }
    check_exponent_list(exponents)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p_bits = bits.div_ceil(2);
    let q_bits = bits - p_bits;

    let compatible = |prime: &BigUint| {
        let pm1 = prime - 1u32;
        exponents.iter().all(|e| e.gcd(&pm1).is_one())
    };
    let draw = |bits: u64, rng: &mut ChaCha20Rng, avoid: Option<&BigUint>| -> Result<BigUint> {
        for _ in 0..PRIME_RETRIES {
            let candidate = nt::gen_prime(bits, true, rng, compatible)
                .ok_or_else(|| Error::KeyGeneration("prime search budget exhausted".into()))?;
            if avoid != Some(&candidate) {
                return Ok(candidate);
            }
        }
        Err(Error::KeyGeneration(format!(
            "no {bits}-bit prime compatible with exponents {exponents:?} after {PRIME_RETRIES} retries"
        )))
    };

    let p = draw(p_bits, &mut rng, None)?;
    let q = draw(q_bits, &mut rng, Some(&p))?;
    KeyPair::from_parts(p, q, exponents)
}

/// m^e mod n for the given slot.
pub fn encrypt(key: &KeyPair, slot: usize, m: &BigUint) -> Result<BigUint> {
    if m >= &key.n {
        return Err(Error::InvalidInput("plaintext not below modulus".into()));
    }
    Ok(m.modpow(&key.slot(slot)?.e, &key.n))
}

/// c^d mod n via the CRT cache for the given slot.
pub fn decrypt_conventional(key: &KeyPair, slot: usize, c: &BigUint) -> Result<BigUint> {
    if c >= &key.n {
        return Err(Error::InvalidInput("ciphertext not below modulus".into()));
    }
    let s = key.slot(slot)?;
    Ok(key.crt_pow(c, &s.d_mod_p1, &s.d_mod_q1))
}

/// Convenience for tests and toy constructions: exponents from u64s.
pub fn exponents_from_u64(list: &[u64]) -> Vec<BigUint> {
    list.iter().map(|&e| BigUint::from(e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::RandBigInt;

    fn toy_key() -> KeyPair {
        // n = 55, phi = 40, slots (3, 27) and (7, 23)
        KeyPair::from_parts(
            BigUint::from(5u32),
            BigUint::from(11u32),
            &exponents_from_u64(&[3, 7]),
        )
        .unwrap()
    }

    #[test]
    fn toy_key_derives_printed_exponents() {
        let key = toy_key();
        assert_eq!(key.n, BigUint::from(55u32));
        assert_eq!(key.phi, BigUint::from(40u32));
        assert_eq!(key.slots[0].d, BigUint::from(27u32));
        assert_eq!(key.slots[1].d, BigUint::from(23u32));
    }

    #[test]
    fn encrypt_known_value() {
        let key = toy_key();
        assert_eq!(encrypt(&key, 0, &BigUint::from(2u32)).unwrap(), BigUint::from(8u32));
        assert!(encrypt(&key, 0, &BigUint::zero()).unwrap().is_zero());
        assert!(encrypt(&key, 0, &BigUint::one()).unwrap().is_one());
        assert!(encrypt(&key, 0, &BigUint::from(55u32)).is_err());
    }

    #[test]
    fn decrypt_known_value() {
        let key = toy_key();
        // 8^27 ≡ 2 (mod 55), checked against a direct exponentiation.
        let c = BigUint::from(8u32);
        assert_eq!(c.modpow(&key.slots[0].d, &key.n), BigUint::from(2u32));
        assert_eq!(decrypt_conventional(&key, 0, &c).unwrap(), BigUint::from(2u32));
        assert!(decrypt_conventional(&key, 0, &BigUint::one()).unwrap().is_one());
        assert!(decrypt_conventional(&key, 0, &BigUint::from(60u32)).is_err());
    }

    #[test]
    fn round_trip_exhaustive_small_modulus() {
        let key = toy_key();
        for slot in 0..2 {
            for m in 0u32..55 {
                let m = BigUint::from(m);
                let c = encrypt(&key, slot, &m).unwrap();
                assert_eq!(decrypt_conventional(&key, slot, &c).unwrap(), m);
            }
        }
    }

    #[test]
    fn keygen_congruence_and_determinism() {
        let key = generate_keypair(16, &exponents_from_u64(&[3]), 1).unwrap();
        assert!((BigUint::from(3u32) * &key.slots[0].d % &key.phi).is_one());
        let again = generate_keypair(16, &exponents_from_u64(&[3]), 1).unwrap();
        assert_eq!(key, again);
        let other = generate_keypair(16, &exponents_from_u64(&[3]), 2).unwrap();
        assert_ne!(key, other);
    }

    #[test]
    fn keygen_slots_and_coprimality() {
        let key = generate_keypair(128, &exponents_from_u64(&[3, 5, 7, 11]), 7).unwrap();
        assert_eq!(key.slots.len(), 4);
        assert_eq!(key.n.bits(), 128);
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(key.slots[i].e.gcd(&key.slots[j].e).is_one());
            }
        }
    }

    #[test]
    fn keygen_rejects_bad_exponent_lists() {
        assert!(generate_keypair(64, &exponents_from_u64(&[3, 3]), 1).is_err());
        assert!(generate_keypair(64, &exponents_from_u64(&[4]), 1).is_err());
        assert!(generate_keypair(64, &[], 1).is_err());
        assert!(generate_keypair(8, &exponents_from_u64(&[3]), 1).is_err());
    }

    #[test]
    fn crt_matches_direct_exponentiation() {
        let key = generate_keypair(256, &exponents_from_u64(&[65537]), 11).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let c = rng.gen_biguint_below(&key.n);
            let direct = c.modpow(&key.slots[0].d, &key.n);
            assert_eq!(decrypt_conventional(&key, 0, &c).unwrap(), direct);
        }
    }

    #[test]
    fn round_trip_random_large_modulus() {
        let key = generate_keypair(512, &exponents_from_u64(&[3, 5]), 42).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for slot in 0..2 {
            for _ in 0..20 {
                let m = rng.gen_biguint_below(&key.n);
                let c = encrypt(&key, slot, &m).unwrap();
                assert_eq!(decrypt_conventional(&key, slot, &c).unwrap(), m);
            }
        }
    }
}
