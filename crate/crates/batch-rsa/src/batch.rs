//! Batch decryption: b ciphertexts under b pairwise-coprime public exponents
//! (one modulus) are decrypted with a single private root exponentiation
//! plus small-exponent work over a product tree.
//!
//! Upward phase: leaves hold the ciphertexts; an internal node over children
//! (L, R) with exponent products (E_L, E_R) holds V_L^{E_R} * V_R^{E_L}, so
//! the root holds A = prod c_i^{E/e_i} = (prod m_i)^E. Root step: A^D with
//! D = E^-1 mod phi recovers prod m_i. Downward phase: a CRT-chosen t with
//! t ≡ 1 (mod E_L), t ≡ 0 (mod E_R) splits each node's plaintext product
//! into its children's until the leaves hold the individual messages.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::nt;
use crate::rsa::{self, KeyPair};

/// Product tree over the exponent list. Leaves keep the list order.
#[derive(Debug, Clone)]
pub struct ExponentTree {
    /// Product of the exponents under this node; the root stores E.
    pub product: BigUint,
    pub kind: TreeKind,
}

#[derive(Debug, Clone)]
pub enum TreeKind {
    Leaf(usize),
    Internal(Box<ExponentTree>, Box<ExponentTree>),
}

impl ExponentTree {
    fn build(exponents: &[BigUint], offset: usize) -> ExponentTree {
        if exponents.len() == 1 {
            return ExponentTree {
                product: exponents[0].clone(),
                kind: TreeKind::Leaf(offset),
            };
        }
        let mid = exponents.len().div_ceil(2);
        let left = ExponentTree::build(&exponents[..mid], offset);
        let right = ExponentTree::build(&exponents[mid..], offset + mid);
        ExponentTree {
            product: &left.product * &right.product,
            kind: TreeKind::Internal(Box::new(left), Box::new(right)),
        }
    }
}

/// Precomputed batching state for one ordered exponent list. Immutable and
/// shareable; binding to a key's phi happens per decryption call.
#[derive(Debug, Clone)]
pub struct BatchContext {
    pub exponents: Vec<BigUint>,
    /// E = product of all exponents.
    pub product: BigUint,
    pub tree: ExponentTree,
}

impl BatchContext {
    pub fn batch_size(&self) -> usize {
        self.exponents.len()
    }
}

/// Builds the product tree, rejecting non-coprime pairs by name.
pub fn build_batch_context(exponents: &[BigUint]) -> Result<BatchContext> {
    if exponents.is_empty() {
        return Err(Error::InvalidInput("batch context needs at least one exponent".into()));
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
                    "not pairwise coprime: {} and {}",
                    exponents[i], exponents[j]
                )));
            }
        }
    }
    let tree = ExponentTree::build(exponents, 0);
    Ok(BatchContext {
        exponents: exponents.to_vec(),
        product: tree.product.clone(),
        tree,
    })
}

/// Ciphertexts aligned to the context's exponent order, with origin tags for
/// result routing.
#[derive(Debug, Clone)]
pub struct BatchJob {
    pub ciphertexts: Vec<BigUint>,
    pub origin_tags: Vec<u64>,
}

impl BatchJob {
    pub fn new(ciphertexts: Vec<BigUint>) -> BatchJob {
        let origin_tags = (0..ciphertexts.len() as u64).collect();
        BatchJob { ciphertexts, origin_tags }
    }
}

struct UpTree {
    value: BigUint,
    /// Inverse of `value` mod n; filled by one batched inversion after the
    /// upward pass (the root never needs one).
    inverse: BigUint,
    children: Option<(Box<UpTree>, Box<UpTree>)>,
}

fn upward(node: &ExponentTree, cts: &[BigUint], n: &BigUint) -> UpTree {
    match &node.kind {
        TreeKind::Leaf(i) => UpTree {
            value: cts[*i].clone(),
            inverse: BigUint::zero(),
            children: None,
        },
        TreeKind::Internal(l, r) => {
            let lt = upward(l, cts, n);
            let rt = upward(r, cts, n);
            let value = nt::pow_small(&lt.value, &r.product, n)
                * nt::pow_small(&rt.value, &l.product, n)
                % n;
            UpTree {
                value,
                inverse: BigUint::zero(),
                children: Some((Box::new(lt), Box::new(rt))),
            }
        }
    }
}

fn collect_values(up: &UpTree, is_root: bool, out: &mut Vec<BigUint>) {
    if !is_root {
        out.push(up.value.clone());
    }
    if let Some((l, r)) = &up.children {
        collect_values(l, false, out);
        collect_values(r, false, out);
    }
}

fn assign_inverses(up: &mut UpTree, is_root: bool, next: &mut std::vec::IntoIter<BigUint>) {
    if !is_root {
        up.inverse = next.next().expect("one inverse per non-root node");
    }
    if let Some((l, r)) = up.children.as_mut() {
        assign_inverses(l, false, next);
        assign_inverses(r, false, next);
    }
}

/// Inverts every non-root upward value with one extended gcd (the root
/// value is never divided by).
fn fill_inverses(up: &mut UpTree, n: &BigUint) -> std::result::Result<(), ()> {
    let mut values = Vec::new();
    collect_values(up, true, &mut values);
    if values.is_empty() {
        return Ok(());
    }
    let inverses = nt::batch_inverse(&values, n).map_err(|_| ())?;
    let mut iter = inverses.into_iter();
    assign_inverses(up, true, &mut iter);
    Ok(())
}

/// Splits a node's plaintext product between its children. With E_L, E_R
/// the children's exponent products, t ≡ 1 (mod E_L), t ≡ 0 (mod E_R) gives
/// M_L = M^t * A_L^(-(t-1)/E_L) * A_R^(-t/E_R), and the mirrored s = lcm+1-t
/// gives M_R the same way. All exponents here are small.
fn downward(node: &ExponentTree, up: &UpTree, m_product: BigUint, n: &BigUint, out: &mut [BigUint]) {
    match &node.kind {
        TreeKind::Leaf(i) => out[*i] = m_product,
        TreeKind::Internal(l, r) => {
            let (ul, ur) = up.children.as_ref().expect("internal node has upward children");
            let (e_l, e_r) = (&l.product, &r.product);
            let lcm = e_l * e_r;
            let mut t =
                e_r * nt::mod_inverse(&(e_r % e_l), e_l).expect("sibling products are coprime");
            if t.is_zero() {
                t = e_r.clone();
            }
            let s = &lcm + 1u32 - &t;
            let m_left = nt::pow_small(&m_product, &t, n)
                * nt::pow_small(&ul.inverse, &((&t - 1u32) / e_l), n)
                % n
                * nt::pow_small(&ur.inverse, &(&t / e_r), n)
                % n;
            let m_right = nt::pow_small(&m_product, &s, n)
                * nt::pow_small(&ul.inverse, &(&s / e_l), n)
                % n
                * nt::pow_small(&ur.inverse, &((&s - 1u32) / e_r), n)
                % n;
            debug_assert_eq!(&m_left * &m_right % n, m_product, "children must recombine");
            downward(l, ul, m_left, n, out);
            downward(r, ur, m_right, n, out);
        }
    }
}

/// Decrypts the whole job with one private root exponentiation. Output i is
/// the plaintext for ciphertext i, identical to conventional decryption
/// under the matching slot.
pub fn batch_decrypt(ctx: &BatchContext, key: &KeyPair, job: &BatchJob) -> Result<Vec<BigUint>> {
    let b = ctx.batch_size();
    if job.ciphertexts.len() != b || job.origin_tags.len() != b {
        return Err(Error::InvalidInput(format!(
            "job carries {} ciphertexts for a batch of {b}",
            job.ciphertexts.len()
        )));
    }
    for e in &ctx.exponents {
        if key.slot_index_of(e).is_none() {
            return Err(Error::InvalidInput(format!("key has no slot for exponent {e}")));
        }
    }
    let n = &key.n;
    for (index, c) in job.ciphertexts.iter().enumerate() {
        if c >= n {
            return Err(Error::InvalidInput(format!("ciphertext {index} not below modulus")));
        }
    }

    let mut up = upward(&ctx.tree, &job.ciphertexts, n);
    // Invertibility is checked lazily: the batched inversion fails exactly
    // when some ciphertext shares a factor with n (products of units are
    // units), and only then is the offending index looked up.
    fill_inverses(&mut up, n).map_err(|_| {
        match job.ciphertexts.iter().position(|c| !c.gcd(n).is_one()) {
            Some(index) => Error::NotInvertible { index },
            None => Error::Integrity("non-invertible intermediate".into()),
        }
    })?;
    let d = nt::mod_inverse(&(&ctx.product % &key.phi), &key.phi)
        .ok_or_else(|| Error::InvalidInput("batch exponent product not invertible mod phi".into()))?;
    let root_plain = key.private_pow(&up.value, &d);

    let mut out = vec![BigUint::zero(); b];
    downward(&ctx.tree, &up, root_plain.clone(), n, &mut out);

    #[cfg(debug_assertions)]
    {
        let recombined = out.iter().fold(BigUint::one(), |acc, m| acc * m % n);
        debug_assert_eq!(recombined, root_plain, "root identity A^D = prod m_i violated");
    }
    Ok(out)
}

/// First `b` odd primes, the default exponent assignment for a batch of b.
pub fn default_exponents(b: usize) -> Vec<BigUint> {
    nt::small_primes()
        .iter()
        .skip(1)
        .take(b)
        .map(|&p| BigUint::from(p))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub bits: u64,
    pub b: usize,
    pub batch_ms: f64,
    pub conventional_ms: f64,
    /// conventional time over batch time for the same b messages.
    pub speedup: f64,
}

impl BenchReport {
    pub fn csv_header() -> &'static str {
        "bits,b,batch_ms,conventional_ms,speedup"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.3}",
            self.bits, self.b, self.batch_ms, self.conventional_ms, self.speedup
        )
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// Times one batch of b messages against b conventional decryptions on a
/// fresh key; median over `trials` runs.
pub fn bench_batch(bits: u64, b: usize, trials: usize, seed: u64) -> Result<BenchReport> {
    if b < 1 || trials < 1 {
        return Err(Error::InvalidInput("bench needs b >= 1 and trials >= 1".into()));
    }
    let exponents = default_exponents(b);
    let key = rsa::generate_keypair(bits, &exponents, seed)?;
    let ctx = build_batch_context(&exponents)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xb47c);

    let mut batch_times = Vec::with_capacity(trials);
    let mut conv_times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let messages: Vec<BigUint> = (0..b)
            .map(|_| loop {
                let m = rng.gen_biguint_below(&key.n);
                if m.gcd(&key.n).is_one() && !m.is_zero() {
                    break m;
                }
            })
            .collect();
        let cts: Vec<BigUint> = messages
            .iter()
            .enumerate()
            .map(|(i, m)| rsa::encrypt(&key, i, m).unwrap())
            .collect();
        let job = BatchJob::new(cts.clone());

        let t0 = Instant::now();
        let batch_out = batch_decrypt(&ctx, &key, &job)?;
        batch_times.push(t0.elapsed().as_secs_f64() * 1e3);

        let t1 = Instant::now();
        let conv_out: Vec<BigUint> = cts
            .iter()
            .enumerate()
            .map(|(i, c)| rsa::decrypt_conventional(&key, i, c).unwrap())
            .collect();
        conv_times.push(t1.elapsed().as_secs_f64() * 1e3);

        assert_eq!(batch_out, messages);
        assert_eq!(conv_out, messages);
    }
    let batch_ms = median(&mut batch_times);
    let conventional_ms = median(&mut conv_times);
    Ok(BenchReport {
        bits,
        b,
        batch_ms,
        conventional_ms,
        speedup: conventional_ms / batch_ms,
    })
}

/// On-demand cache of subset contexts for minibatching. The full context is
/// built once; subsets are built lazily and evicted oldest-first past the
/// capacity (b is small, so 32 entries cover realistic churn).
pub struct ContextCache {
    capacity: usize,
    entries: HashMap<Vec<Vec<u8>>, Arc<BatchContext>>,
    order: Vec<Vec<Vec<u8>>>,
}

impl ContextCache {
    pub fn new(capacity: usize) -> ContextCache {
        ContextCache { capacity, entries: HashMap::new(), order: Vec::new() }
    }

    pub fn get(&mut self, exponents: &[BigUint]) -> Result<Arc<BatchContext>> {
        let cache_key: Vec<Vec<u8>> = exponents.iter().map(|e| e.to_bytes_be()).collect();
        if let Some(ctx) = self.entries.get(&cache_key) {
            return Ok(Arc::clone(ctx));
        }
        let ctx = Arc::new(build_batch_context(exponents)?);
        if self.entries.len() >= self.capacity {
            let oldest = self.order.remove(0);
            self.entries.remove(&oldest);
        }
        self.entries.insert(cache_key.clone(), Arc::clone(&ctx));
        self.order.push(cache_key);
        Ok(ctx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::exponents_from_u64;
    use num_bigint::RandBigInt;

    fn toy_key() -> KeyPair {
        KeyPair::from_parts(
            BigUint::from(5u32),
            BigUint::from(11u32),
            &exponents_from_u64(&[3, 7]),
        )
        .unwrap()
    }

    #[test]
    fn context_products() {
        let ctx = build_batch_context(&exponents_from_u64(&[3, 7])).unwrap();
        assert_eq!(ctx.product, BigUint::from(21u32));
        // Leaf co-exponents E/e_i.
        let co: Vec<BigUint> = ctx.exponents.iter().map(|e| &ctx.product / e).collect();
        assert_eq!(co, exponents_from_u64(&[7, 3]));

        let ctx4 = build_batch_context(&exponents_from_u64(&[3, 5, 7, 11])).unwrap();
        assert_eq!(ctx4.product, BigUint::from(1155u32));
    }

    #[test]
    fn context_rejects_shared_factor() {
        let err = build_batch_context(&exponents_from_u64(&[3, 3])).unwrap_err();
        assert!(err.to_string().contains("not pairwise coprime"));
        assert!(err.to_string().contains('3'));
        assert!(build_batch_context(&[]).is_err());
    }

    #[test]
    fn tree_products_consistent() {
        let ctx = build_batch_context(&exponents_from_u64(&[3, 5, 7, 11, 13])).unwrap();
        fn check(node: &ExponentTree) {
            if let TreeKind::Internal(l, r) = &node.kind {
                assert_eq!(&l.product * &r.product, node.product);
                check(l);
                check(r);
            }
        }
        check(&ctx.tree);
    }

    #[test]
    fn worked_example_mod_55() {
        // c = [8, 42] under exponents [3, 7]: intermediates A = 6, D = 21,
        // split t = 7, plaintexts [2, 3].
        let key = toy_key();
        let ctx = build_batch_context(&key.public_exponents()).unwrap();
        let job = BatchJob::new(vec![BigUint::from(8u32), BigUint::from(42u32)]);
        let out = batch_decrypt(&ctx, &key, &job).unwrap();
        assert_eq!(out, vec![BigUint::from(2u32), BigUint::from(3u32)]);
    }

    #[test]
    fn exhaustive_oracle_equivalence_mod_55() {
        let key = toy_key();
        let ctx = build_batch_context(&key.public_exponents()).unwrap();
        for m1 in 1u32..55 {
            for m2 in 1u32..55 {
                let (m1, m2) = (BigUint::from(m1), BigUint::from(m2));
                let c1 = rsa::encrypt(&key, 0, &m1).unwrap();
                let c2 = rsa::encrypt(&key, 1, &m2).unwrap();
                let job = BatchJob::new(vec![c1.clone(), c2.clone()]);
                let invertible = m1.gcd(&key.n).is_one() && m2.gcd(&key.n).is_one();
                match batch_decrypt(&ctx, &key, &job) {
                    Ok(out) => {
                        assert!(invertible);
                        assert_eq!(out[0], rsa::decrypt_conventional(&key, 0, &c1).unwrap());
                        assert_eq!(out[1], rsa::decrypt_conventional(&key, 1, &c2).unwrap());
                        assert_eq!(out, vec![m1, m2]);
                    }
                    Err(Error::NotInvertible { index }) => {
                        assert!(!invertible);
                        let shares = [&m1, &m2][index];
                        assert!(!shares.gcd(&key.n).is_one());
                    }
                    Err(other) => panic!("unexpected error: {other}"),
                }
            }
        }
    }

    #[test]
    fn degenerate_single_exponent_batch() {
        let key = toy_key();
        let ctx = build_batch_context(&exponents_from_u64(&[7])).unwrap();
        for m in [2u32, 13, 54] {
            let m = BigUint::from(m);
            let c = rsa::encrypt(&key, 1, &m).unwrap();
            let out = batch_decrypt(&ctx, &key, &BatchJob::new(vec![c])).unwrap();
            assert_eq!(out, vec![m]);
        }
    }

    #[test]
    fn random_keys_match_conventional_oracle() {
        for (b, seed) in [(2usize, 21u64), (4, 22), (8, 23)] {
            let exponents = default_exponents(b);
            let key = rsa::generate_keypair(512, &exponents, seed).unwrap();
            let ctx = build_batch_context(&exponents).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
            for _ in 0..5 {
                let ms: Vec<BigUint> = (0..b).map(|_| rng.gen_biguint_below(&key.n)).collect();
                let cs: Vec<BigUint> = ms
                    .iter()
                    .enumerate()
                    .map(|(i, m)| rsa::encrypt(&key, i, m).unwrap())
                    .collect();
                let out = batch_decrypt(&ctx, &key, &BatchJob::new(cs.clone())).unwrap();
                for i in 0..b {
                    assert_eq!(out[i], rsa::decrypt_conventional(&key, i, &cs[i]).unwrap());
                    assert_eq!(out[i], ms[i]);
                }
            }
        }
    }

    #[test]
    fn permuting_pairs_permutes_outputs() {
        let exponents = exponents_from_u64(&[3, 5, 7, 11]);
        let key = rsa::generate_keypair(256, &exponents, 31).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let ms: Vec<BigUint> = (0..4).map(|_| rng.gen_biguint_below(&key.n)).collect();
        let cs: Vec<BigUint> = ms
            .iter()
            .enumerate()
            .map(|(i, m)| rsa::encrypt(&key, i, m).unwrap())
            .collect();

        let ctx = build_batch_context(&exponents).unwrap();
        let out = batch_decrypt(&ctx, &key, &BatchJob::new(cs.clone())).unwrap();

        let perm = [2usize, 0, 3, 1];
        let p_exponents: Vec<BigUint> = perm.iter().map(|&i| exponents[i].clone()).collect();
        let p_cs: Vec<BigUint> = perm.iter().map(|&i| cs[i].clone()).collect();
        let p_ctx = build_batch_context(&p_exponents).unwrap();
        let p_out = batch_decrypt(&p_ctx, &key, &BatchJob::new(p_cs)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(p_out[k], out[i]);
        }
    }

    #[test]
    fn non_invertible_ciphertext_reports_index_without_factor() {
        let key = toy_key();
        let ctx = build_batch_context(&key.public_exponents()).unwrap();
        let job = BatchJob::new(vec![BigUint::from(8u32), BigUint::from(11u32)]);
        match batch_decrypt(&ctx, &key, &job) {
            Err(Error::NotInvertible { index }) => {
                assert_eq!(index, 1);
                let msg = Error::NotInvertible { index }.to_string();
                assert!(!msg.contains("11"), "error must not echo the factor: {msg}");
            }
            other => panic!("expected NotInvertible, got {other:?}"),
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let key = toy_key();
        let ctx = build_batch_context(&key.public_exponents()).unwrap();
        let job = BatchJob::new(vec![BigUint::from(8u32)]);
        assert!(batch_decrypt(&ctx, &key, &job).is_err());
    }

    #[test]
    fn bench_single_message_batch_costs_one_decryption() {
        // A batch of one is the same work as a conventional decryption.
        let report = bench_batch(2048, 1, 9, 77).unwrap();
        assert!(
            (0.8..=1.2).contains(&report.speedup),
            "b=1 speedup {:.3} outside ±20% of 1",
            report.speedup
        );
    }

    #[test]
    fn context_cache_reuses_and_evicts() {
        let mut cache = ContextCache::new(2);
        let a = cache.get(&exponents_from_u64(&[3, 5])).unwrap();
        let a2 = cache.get(&exponents_from_u64(&[3, 5])).unwrap();
        assert!(Arc::ptr_eq(&a, &a2));
        cache.get(&exponents_from_u64(&[7, 11])).unwrap();
        cache.get(&exponents_from_u64(&[13, 17])).unwrap();
        assert_eq!(cache.len(), 2);
        // The oldest entry was evicted; fetching it again builds a new tree.
        let a3 = cache.get(&exponents_from_u64(&[3, 5])).unwrap();
        assert!(!Arc::ptr_eq(&a, &a3));
    }
}
