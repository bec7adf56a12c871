//! Number-theory helpers shared by key generation, batching and the attack
//! oracles: primality testing, prime generation, modular inverses, CRT,
//! exact binomials.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

/// Trial-division screen bound used before Miller-Rabin.
const TRIAL_BOUND: u32 = 1 << 13;

/// Primes below 2^20, used by the strong-prime smoothness check and the
/// trial-division screen. Built once.
pub fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| sieve_primes(1 << 20))
}

/// Sieve of Eratosthenes up to `limit` (exclusive).
pub fn sieve_primes(limit: u32) -> Vec<u32> {
    let limit = limit as usize;
    let mut composite = vec![false; limit];
    let mut primes = Vec::new();
    for i in 2..limit {
        if !composite[i] {
            primes.push(i as u32);
            let mut j = i * i;
            while j < limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

fn mulmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod_u64(acc, base, m);
        }
        base = mulmod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit candidates. The witness set is
/// sufficient for all n < 2^64.
fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Probabilistic primality: trial division by small primes, then 40
/// Miller-Rabin rounds with bases drawn from a candidate-derived stream so
/// the verdict is reproducible. Exact below 2^64.
pub fn is_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    for &p in small_primes() {
        if p >= TRIAL_BOUND {
            break;
        }
        if (n % p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, 40)
}

fn miller_rabin(n: &BigUint, rounds: u32) -> bool {
    let one = BigUint::one();
    let two = &one + &one;
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    // Base stream seeded from the candidate itself: identical inputs give
    // identical verdicts across runs and processes.
    let seed = n.iter_u64_digits().fold(0u64, |acc, w| acc ^ w.rotate_left(17));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    'round: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'round;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits. `force_second_bit` additionally
/// sets the second-highest bit so that a product of two such primes has full
/// length. `accept` filters candidates (e.g. gcd conditions against public
/// exponents) before the expensive primality test.
pub fn gen_prime<R: rand::Rng>(
    bits: u64,
    force_second_bit: bool,
    rng: &mut R,
    accept: impl Fn(&BigUint) -> bool,
) -> Option<BigUint> {
    assert!(bits >= 2);
    let top = BigUint::one() << (bits - 1);
    let second = if force_second_bit && bits >= 2 {
        BigUint::one() << (bits - 2)
    } else {
        BigUint::zero()
    };
    for _ in 0..64 {
        let mut candidate = rng.gen_biguint(bits) | &top | &second | BigUint::one();
        // Step odd candidates from a fresh random start.
        for _ in 0..16 * bits {
            if candidate.bits() != bits {
                break;
            }
            if screen(&candidate) && accept(&candidate) && is_prime(&candidate) {
                return Some(candidate);
            }
            candidate += 2u32;
        }
    }
    None
}

/// Cheap compositeness screen by trial division.
fn screen(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return small >= 2 && (small < 4 || small % 2 != 0);
    }
    for &p in small_primes() {
        if p >= TRIAL_BOUND {
            break;
        }
        if (n % p).is_zero() {
            return false;
        }
    }
    true
}

/// Square-and-multiply with plain modular multiplications. For exponents of
/// a few dozen bits this beats `modpow`, whose per-call Montgomery setup
/// costs as much as ~50 multiplications.
pub fn pow_small(base: &BigUint, exp: &BigUint, n: &BigUint) -> BigUint {
    if exp.bits() > 32 {
        return base.modpow(exp, n);
    }
    let Some(e) = exp.to_u64() else { return base.modpow(exp, n) };
    if e == 0 {
        return BigUint::one() % n;
    }
    let base = base % n;
    let mut acc = base.clone();
    let top = 63 - e.leading_zeros();
    for i in (0..top).rev() {
        acc = &acc * &acc % n;
        if e & (1 << i) != 0 {
            acc = acc * &base % n;
        }
    }
    acc
}

/// Montgomery's trick: inverts every value with a single extended gcd plus
/// 3(k-1) multiplications. `None` if any value shares a factor with n; the
/// index of the first such value is reported.
pub fn batch_inverse(values: &[BigUint], n: &BigUint) -> Result<Vec<BigUint>, usize> {
    if values.is_empty() {
        return Ok(vec![]);
    }
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = BigUint::one();
    for v in values {
        prefix.push(acc.clone());
        acc = acc * v % n;
    }
    let Some(mut inv_acc) = mod_inverse(&acc, n) else {
        // Locate the offending value for the error report.
        let bad = values
            .iter()
            .position(|v| !v.gcd(n).is_one())
            .expect("a non-invertible product has a non-invertible element");
        return Err(bad);
    };
    let mut out = vec![BigUint::zero(); values.len()];
    for (i, v) in values.iter().enumerate().rev() {
        out[i] = &inv_acc * &prefix[i] % n;
        inv_acc = inv_acc * v % n;
    }
    Ok(out)
}

/// Modular inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if m.is_one() {
        return Some(BigUint::zero());
    }
    let a = BigInt::from(a % m);
    let m = BigInt::from(m.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m;
    if x < BigInt::zero() {
        x += &m;
    }
    x.to_biguint()
}

/// Smallest solution of x ≡ r1 (mod m1), x ≡ r2 (mod m2) for coprime moduli,
/// returned in [0, m1·m2).
pub fn crt_pair(r1: &BigUint, m1: &BigUint, r2: &BigUint, m2: &BigUint) -> Option<BigUint> {
    // x = r1 + m1 * ((r2 - r1) * m1^-1 mod m2)
    let inv = mod_inverse(m1, m2)?;
    let r1m = r1 % m1;
    let diff = (r2 + m2 - (&r1m % m2)) % m2;
    Some(&r1m + m1 * ((diff * inv) % m2))
}

/// Exact binomial coefficient C(n, k).
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of decimal digits (0 has one digit).
pub fn digits10(n: &BigUint) -> usize {
    if n.is_zero() {
        return 1;
    }
    n.to_str_radix(10).len()
}

pub fn hamming_weight(n: &BigUint) -> u64 {
    n.iter_u64_digits().map(|w| w.count_ones() as u64).sum()
}

pub fn is_perfect_square(n: &BigUint) -> Option<BigUint> {
    let root = n.sqrt();
    if &root * &root == *n {
        Some(root)
    } else {
        None
    }
}

/// Ceiling of the integer square root.
pub fn ceil_sqrt(n: &BigUint) -> BigUint {
    let root = n.sqrt();
    if &root * &root == *n {
        root
    } else {
        root + 1u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_prime_classification() {
        let primes: Vec<u64> = (0..100).filter(|&n| is_prime_u64(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97]
        );
    }

    #[test]
    fn carmichael_numbers_rejected() {
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911] {
            assert!(!is_prime(&BigUint::from(n)), "{n} is composite");
        }
    }

    #[test]
    fn large_known_prime() {
        // 2^89 - 1 is a Mersenne prime.
        let p = (BigUint::one() << 89u32) - 1u32;
        assert!(is_prime(&p));
        assert!(!is_prime(&(p + 2u32)));
    }

    #[test]
    fn generated_primes_have_requested_length() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for bits in [16u64, 48, 128] {
            let p = gen_prime(bits, true, &mut rng, |_| true).unwrap();
            assert_eq!(p.bits(), bits);
            assert!(is_prime(&p));
        }
    }

    #[test]
    fn pow_small_matches_modpow() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let n = gen_prime(96, false, &mut rng, |_| true).unwrap() * gen_prime(96, false, &mut rng, |_| true).unwrap();
        for _ in 0..50 {
            let base = rng.gen_biguint_below(&n);
            let exp = BigUint::from(rng.gen_range(0u64..100_000));
            assert_eq!(pow_small(&base, &exp, &n), base.modpow(&exp, &n));
        }
        assert_eq!(pow_small(&BigUint::from(5u32), &BigUint::zero(), &n), BigUint::one());
    }

    #[test]
    fn batch_inverse_matches_individual_inverses() {
        let n = BigUint::from(55u32);
        let values: Vec<BigUint> = [2u32, 3, 7, 13, 54].iter().map(|&v| BigUint::from(v)).collect();
        let inverses = batch_inverse(&values, &n).unwrap();
        for (v, inv) in values.iter().zip(&inverses) {
            assert_eq!(mod_inverse(v, &n).unwrap(), *inv);
            assert!((v * inv % &n).is_one());
        }
        // Index of the first non-invertible value is reported.
        let bad = vec![BigUint::from(2u32), BigUint::from(11u32), BigUint::from(5u32)];
        assert_eq!(batch_inverse(&bad, &n), Err(1));
        assert_eq!(batch_inverse(&[], &n), Ok(vec![]));
    }

    #[test]
    fn mod_inverse_agrees_with_definition() {
        let a = BigUint::from(21u32);
        let m = BigUint::from(40u32);
        let inv = mod_inverse(&a, &m).unwrap();
        assert_eq!(inv, BigUint::from(21u32));
        assert!((a * inv % m).is_one());
        assert!(mod_inverse(&BigUint::from(6u32), &BigUint::from(9u32)).is_none());
    }

    #[test]
    fn crt_smallest_solution() {
        // t ≡ 1 (mod 3), t ≡ 0 (mod 7) -> 7
        let t = crt_pair(
            &BigUint::one(),
            &BigUint::from(3u32),
            &BigUint::zero(),
            &BigUint::from(7u32),
        )
        .unwrap();
        assert_eq!(t, BigUint::from(7u32));
    }

    #[test]
    fn binomial_exact_values() {
        assert_eq!(binomial(1024, 0), BigUint::one());
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(1024, 1), BigUint::from(1024u32));
        // C(n,k) == C(n,n-k)
        assert_eq!(binomial(60, 17), binomial(60, 43));
    }

    #[test]
    fn digit_and_weight_helpers() {
        assert_eq!(digits10(&BigUint::zero()), 1);
        assert_eq!(digits10(&BigUint::from(999u32)), 3);
        assert_eq!(digits10(&BigUint::from(1000u32)), 4);
        assert_eq!(hamming_weight(&BigUint::from(0b1011_0111u32)), 6);
    }

    #[test]
    fn square_detection() {
        assert_eq!(is_perfect_square(&BigUint::from(441u32)), Some(BigUint::from(21u32)));
        assert!(is_perfect_square(&BigUint::from(440u32)).is_none());
        assert_eq!(ceil_sqrt(&BigUint::from(5959u32)), BigUint::from(78u32));
        assert_eq!(ceil_sqrt(&BigUint::from(49u32)), BigUint::from(7u32));
    }
}
