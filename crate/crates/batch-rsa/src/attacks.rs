//! Desk-scale attack oracles used as adversarial validators for the sieve:
//! each one breaks a deliberately weak toy key within budget and fails on a
//! sieved key. They are bounded by steps and wall clock, and every success
//! is self-verified before it is returned.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use std::time::Instant;

use crate::nt;

/// Caps every oracle: iteration count and wall-clock seconds.
#[derive(Debug, Clone, Copy)]
pub struct AttackBudget {
    pub max_steps: u64,
    pub max_seconds: f64,
}

impl AttackBudget {
    pub fn steps(max_steps: u64) -> AttackBudget {
        AttackBudget { max_steps, max_seconds: 60.0 }
    }
}

struct BudgetClock {
    start: Instant,
    max_seconds: f64,
    max_steps: u64,
    steps: u64,
}

impl BudgetClock {
    fn new(budget: &AttackBudget) -> BudgetClock {
        BudgetClock {
            start: Instant::now(),
            max_seconds: budget.max_seconds,
            max_steps: budget.max_steps,
            steps: 0,
        }
    }

    /// Counts a step; false once either cap is hit.
    fn tick(&mut self) -> bool {
        self.steps += 1;
        if self.steps > self.max_steps {
            return false;
        }
        // Wall clock is checked coarsely; Instant::elapsed is cheap but not free.
        if self.steps.is_multiple_of(1024) && self.start.elapsed().as_secs_f64() > self.max_seconds {
            return false;
        }
        true
    }
}

/// Factor search for moduli whose prime factors sit close together: scans
/// a = ceil(sqrt(n)) upward until a^2 - n is a perfect square, giving
/// n = (a-b)(a+b).
pub fn fermat_factor(n: &BigUint, budget: &AttackBudget) -> Option<(BigUint, BigUint)> {
    if n < &BigUint::from(4u32) {
        return None;
    }
    if (n % 2u32).is_zero() {
        // Degenerate success for even n.
        return Some((BigUint::from(2u32), n / 2u32));
    }
    let mut clock = BudgetClock::new(budget);
    let mut a = nt::ceil_sqrt(n);
    // a^2 - n maintained incrementally: (a+1)^2 - n = (a^2 - n) + 2a + 1.
    let mut diff = &a * &a - n;
    while clock.tick() {
        if let Some(b) = nt::is_perfect_square(&diff) {
            let p = &a - &b;
            let q = &a + &b;
            if p.is_one() {
                return None; // n itself is prime; only the trivial split exists.
            }
            assert_eq!(&p * &q, *n, "factorization must multiply back");
            return Some((p, q));
        }
        diff += (&a << 1) + 1u32;
        a += 1u32;
    }
    None
}

/// Pollard p-1: raises a base to the product of all prime powers below the
/// smoothness bound, taking gcd(x - 1, n) after every prime. When a gcd
/// degenerates to n, that prime's power is replayed one multiplication at a
/// time; bases 2, 3, 5 are tried in turn.
pub fn pollard_p_minus_1(
    n: &BigUint,
    smoothness_bound: u32,
    budget: &AttackBudget,
) -> Option<BigUint> {
    if (n % 2u32).is_zero() {
        return Some(BigUint::from(2u32));
    }
    let one = BigUint::one();
    let primes: Vec<u32> = nt::small_primes()
        .iter()
        .copied()
        .take_while(|&p| p <= smoothness_bound)
        .collect();

    let nontrivial = |g: &BigUint| !g.is_one() && g < n;

    for base in [2u32, 3, 5] {
        let base_big = BigUint::from(base);
        let g = base_big.gcd(n);
        if nontrivial(&g) {
            return Some(g);
        }
        let mut clock = BudgetClock::new(budget);
        let mut x = base_big % n;
        'primes: for &p in &primes {
            if !clock.tick() {
                return None;
            }
            // Largest power of p below the bound.
            let mut exponent = 1u64;
            while exponent * p as u64 <= smoothness_bound as u64 {
                exponent *= p as u64;
            }
            let checkpoint = x.clone();
            x = x.modpow(&BigUint::from(exponent), n);
            let g = (&x + n - &one).gcd(n) % n;
            let g = if g.is_zero() { n.clone() } else { g };
            if nontrivial(&g) {
                assert!((n % &g).is_zero());
                return Some(g);
            }
            if &g == n {
                // Every factor collapsed at once; replay this prime one
                // multiplication at a time from the checkpoint.
                let mut y = checkpoint;
                let mut applied = 1u64;
                while applied < exponent {
                    y = y.modpow(&BigUint::from(p), n);
                    applied *= p as u64;
                    let g = (&y + n - &one).gcd(n) % n;
                    let g = if g.is_zero() { n.clone() } else { g };
                    if nontrivial(&g) {
                        assert!((n % &g).is_zero());
                        return Some(g);
                    }
                    if &g == n {
                        break; // collapsed below this granularity; next base
                    }
                }
                continue 'primes;
            }
        }
    }
    None
}

/// Wiener's continued-fraction attack on small private exponents. Expands
/// e/n, and for each convergent k/d with integral phi-hat solves
/// x^2 - (n - phi + 1)x + n for the prime factors. Returns the recovered d.
pub fn wiener_attack(e: &BigUint, n: &BigUint, budget: &AttackBudget) -> Option<BigUint> {
    let mut clock = BudgetClock::new(budget);
    let one = BigUint::one();

    // Continued-fraction expansion of e/n with convergents built on the fly.
    let (mut num, mut den) = (e.clone(), n.clone());
    let (mut k_prev, mut k) = (BigUint::zero(), BigUint::one());
    let (mut d_prev, mut d) = (BigUint::one(), BigUint::zero());

    while !den.is_zero() && clock.tick() {
        let quotient = &num / &den;
        let rem = &num % &den;
        num = std::mem::replace(&mut den, rem);

        let k_next = &quotient * &k + &k_prev;
        let d_next = &quotient * &d + &d_prev;
        k_prev = std::mem::replace(&mut k, k_next);
        d_prev = std::mem::replace(&mut d, d_next);

        if k.is_zero() || d.is_zero() {
            continue;
        }
        let ed_minus_1 = e * &d - &one;
        if !(&ed_minus_1 % &k).is_zero() {
            continue;
        }
        let phi_hat = ed_minus_1 / &k;
        if &phi_hat >= n {
            continue;
        }
        // p + q = n - phi + 1; p, q solve the quadratic when the
        // discriminant is a perfect square.
        let sum = n + &one - &phi_hat;
        let disc = &sum * &sum;
        let four_n = n << 2;
        if disc < four_n {
            continue;
        }
        let disc = disc - (n << 2);
        let Some(root) = nt::is_perfect_square(&disc) else { continue };
        if ((&sum + &root) % 2u32).is_zero() {
            let p = (&sum + &root) / 2u32;
            let q = (&sum - &root) / 2u32;
            if &(&p * &q) == n && !p.is_one() && !q.is_one() {
                assert!((e * &d % &phi_hat).is_one(), "recovered d must invert e mod phi");
                return Some(d);
            }
        }
    }
    None
}

/// Outcome of the iteration attack: either the recovered plaintext or, when
/// gcd(c, n) > 1, a factor of the modulus found for free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CycleOutcome {
    Plaintext(BigUint),
    Factor(BigUint),
}

/// Iteration attack: re-encrypts c until the sequence returns to c; the
/// previous element is the plaintext.
pub fn cycle_attack(
    c: &BigUint,
    e: &BigUint,
    n: &BigUint,
    budget: &AttackBudget,
) -> Option<CycleOutcome> {
    if c.is_zero() || c >= n {
        return None;
    }
    let g = c.gcd(n);
    if !g.is_one() {
        return Some(CycleOutcome::Factor(g));
    }
    let mut clock = BudgetClock::new(budget);
    let mut prev = c.clone();
    loop {
        if !clock.tick() {
            return None;
        }
        let next = prev.modpow(e, n);
        if &next == c {
            assert_eq!(prev.modpow(e, n), *c, "recovered plaintext must re-encrypt to c");
            return Some(CycleOutcome::Plaintext(prev));
        }
        prev = next;
    }
}

/// Exhaustive search for the smallest universal decryption exponent: the
/// least d' <= budget with c^d' ≡ m (mod n) for every probe pair. d' is
/// congruent to the keyholder's d modulo the group exponent, not necessarily
/// equal to it.
pub fn exhaustive_d_search(
    n: &BigUint,
    probes: &[(BigUint, BigUint)],
    budget: &AttackBudget,
) -> Option<BigUint> {
    if probes.is_empty() {
        return None;
    }
    let start = Instant::now();
    // acc[i] = c_i^d for the current candidate d, advanced incrementally by
    // one modular multiplication per probe per candidate.
    let mut acc: Vec<BigUint> = probes.iter().map(|(_, c)| c % n).collect();
    for d in 1..=budget.max_steps {
        if acc.iter().zip(probes).all(|(a, (m, _))| a == m) {
            let d_big = BigUint::from(d);
            for (m, c) in probes {
                assert_eq!(&c.modpow(&d_big, n), m);
            }
            return Some(d_big);
        }
        if d.is_multiple_of(1024) && start.elapsed().as_secs_f64() > budget.max_seconds {
            return None;
        }
        for (a, (_, c)) in acc.iter_mut().zip(probes) {
            *a = &*a * c % n;
        }
    }
    None
}

/// Weight-limited variant of the exhaustive search: enumerates candidate
/// exponents of exactly `bit_len` bits with at most `max_weight` set bits,
/// the space a low-Hamming-weight d lives in.
pub fn low_weight_d_search(
    n: &BigUint,
    probes: &[(BigUint, BigUint)],
    bit_len: u64,
    max_weight: u32,
    budget: &AttackBudget,
) -> Option<BigUint> {
    if probes.is_empty() || bit_len == 0 || bit_len > 62 {
        return None;
    }
    let mut clock = BudgetClock::new(budget);
    let top = 1u64 << (bit_len - 1);
    // Candidates have the top bit set plus up to max_weight - 1 lower bits.
    fn enumerate(
        n: &BigUint,
        probes: &[(BigUint, BigUint)],
        clock: &mut BudgetClock,
        base: u64,
        next_bit: u32,
        remaining: u32,
        limit_bit: u32,
    ) -> Option<BigUint> {
        if !clock.tick() {
            return None;
        }
        let candidate = BigUint::from(base);
        if probes.iter().all(|(m, c)| &c.modpow(&candidate, n) == m) {
            return Some(candidate);
        }
        if remaining == 0 {
            return None;
        }
        for bit in next_bit..limit_bit {
            let found = enumerate(n, probes, clock, base | (1u64 << bit), bit + 1, remaining - 1, limit_bit);
            if found.is_some() {
                return found;
            }
        }
        None
    }
    enumerate(n, probes, &mut clock, top, 0, max_weight.saturating_sub(1), (bit_len - 1) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::{exponents_from_u64, KeyPair};

    fn steps(n: u64) -> AttackBudget {
        AttackBudget::steps(n)
    }

    #[test]
    fn fermat_factors_5959_at_third_candidate() {
        let n = BigUint::from(5959u32);
        let (p, q) = fermat_factor(&n, &steps(3)).unwrap();
        assert_eq!((p, q), (BigUint::from(59u32), BigUint::from(101u32)));
        // Two candidates are not enough.
        assert!(fermat_factor(&n, &steps(2)).is_none());
    }

    #[test]
    fn fermat_immediate_on_perfect_square() {
        let p = BigUint::from(101u32);
        let n = &p * &p;
        let (a, b) = fermat_factor(&n, &steps(1)).unwrap();
        assert_eq!(a, p);
        assert_eq!(b, p);
    }

    #[test]
    fn fermat_even_modulus_degenerate() {
        let (p, q) = fermat_factor(&BigUint::from(22u32), &steps(1)).unwrap();
        assert_eq!(p, BigUint::from(2u32));
        assert_eq!(q, BigUint::from(11u32));
    }

    #[test]
    fn pollard_factors_391() {
        // 391 = 17 * 23 and 17 - 1 = 16 divides 2^16.
        let f = pollard_p_minus_1(&BigUint::from(391u32), 1 << 16, &steps(10_000)).unwrap();
        assert!(f == BigUint::from(17u32) || f == BigUint::from(23u32));
    }

    #[test]
    fn pollard_factors_15_with_tiny_bound() {
        let f = pollard_p_minus_1(&BigUint::from(15u32), 4, &steps(100)).unwrap();
        assert!(f == BigUint::from(3u32) || f == BigUint::from(5u32));
    }

    #[test]
    fn pollard_blocked_by_large_factor() {
        // p - 1 = 2 * 1013 and q - 1 = 2 * 1019: nothing below bound 100
        // captures either factor. (p = 2027, q = 2039.)
        let n = BigUint::from(2027u32 * 2039);
        assert!(pollard_p_minus_1(&n, 100, &steps(10_000)).is_none());
    }

    #[test]
    fn wiener_recovers_classic_d() {
        let e = BigUint::from(17993u32);
        let n = BigUint::from(90581u32);
        assert_eq!(wiener_attack(&e, &n, &steps(1000)), Some(BigUint::from(5u32)));
        // Brute confirmation that 5 is the private exponent.
        let phi = BigUint::from(89964u32);
        assert!((e * BigUint::from(5u32) % phi).is_one());
    }

    #[test]
    fn wiener_fails_when_d_is_large() {
        // A small e makes d nearly phi-sized, violating the d < n^(1/4)
        // premise.
        let key = KeyPair::from_parts(
            BigUint::from(239u32),
            BigUint::from(379u32),
            &exponents_from_u64(&[5]),
        )
        .unwrap();
        assert!(key.slots[0].d.bits() > 14);
        assert!(wiener_attack(&key.slots[0].e, &key.n, &steps(1000)).is_none());
    }

    #[test]
    fn cycle_recovers_plaintext_mod_35() {
        // 3^5 mod 35 = 33; iterating 33 -> 3 -> 33 closes the cycle.
        let out = cycle_attack(
            &BigUint::from(33u32),
            &BigUint::from(5u32),
            &BigUint::from(35u32),
            &steps(100),
        );
        assert_eq!(out, Some(CycleOutcome::Plaintext(BigUint::from(3u32))));
    }

    #[test]
    fn cycle_fixed_point_and_factor_shortcut() {
        let n = BigUint::from(35u32);
        let e = BigUint::from(5u32);
        assert_eq!(
            cycle_attack(&BigUint::one(), &e, &n, &steps(10)),
            Some(CycleOutcome::Plaintext(BigUint::one()))
        );
        assert_eq!(
            cycle_attack(&BigUint::from(10u32), &e, &n, &steps(10)),
            Some(CycleOutcome::Factor(BigUint::from(5u32)))
        );
    }

    #[test]
    fn exhaustive_finds_universal_exponent_7() {
        // True d is 27, but 27 ≡ 7 (mod lambda(55) = 20) and 7 comes first.
        let n = BigUint::from(55u32);
        let probes = vec![(BigUint::from(2u32), BigUint::from(8u32))];
        assert_eq!(exhaustive_d_search(&n, &probes, &steps(100)), Some(BigUint::from(7u32)));
        assert!(exhaustive_d_search(&n, &probes, &steps(6)).is_none());
    }

    #[test]
    fn exhaustive_vacuous_probe_stops_at_one() {
        let n = BigUint::from(55u32);
        let probes = vec![(BigUint::one(), BigUint::one())];
        assert_eq!(exhaustive_d_search(&n, &probes, &steps(100)), Some(BigUint::one()));
    }

    #[test]
    fn low_weight_search_finds_sparse_exponent() {
        // d = 2^20 + 2^3 + 1 has weight 3; a plain scan would need ~2^20 steps.
        let key = KeyPair::from_parts(
            BigUint::from(1889u32),
            BigUint::from(2003u32),
            &exponents_from_u64(&[65537]),
        )
        .unwrap();
        let m = BigUint::from(1234u32);
        let d = BigUint::from((1u64 << 20) | 0b1001);
        let c = m.modpow(&key.slots[0].e, &key.n);
        // Forge a probe set for the sparse exponent directly.
        let fake_m = c.modpow(&d, &key.n);
        let probes = vec![(fake_m, c)];
        let found = low_weight_d_search(&key.n, &probes, 21, 3, &steps(100_000)).unwrap();
        assert_eq!(probes[0].1.modpow(&found, &key.n), probes[0].0);
    }

    #[test]
    fn budget_monotonicity() {
        let n = BigUint::from(5959u32);
        assert!(fermat_factor(&n, &steps(3)).is_some());
        assert!(fermat_factor(&n, &steps(1000)).is_some());
        let probes = vec![(BigUint::from(2u32), BigUint::from(8u32))];
        let n55 = BigUint::from(55u32);
        assert!(exhaustive_d_search(&n55, &probes, &steps(7)).is_some());
        assert!(exhaustive_d_search(&n55, &probes, &steps(70)).is_some());
    }
}
