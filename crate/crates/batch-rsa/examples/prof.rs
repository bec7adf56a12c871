use batch_rsa::rsa::{self, exponents_from_u64};
use num_bigint::{BigUint, RandBigInt};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn main() {
    let key = rsa::generate_keypair(2048, &exponents_from_u64(&[3,5,7,11]), 5).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let xs: Vec<BigUint> = (0..50).map(|_| rng.gen_biguint_below(&key.n)).collect();

    for exp in [3u32, 11, 77, 1155, 65537] {
        let e = BigUint::from(exp);
        let t = Instant::now();
        for x in &xs { std::hint::black_box(x.modpow(&e, &key.n)); }
        println!("modpow e={exp}: {:.1} us", t.elapsed().as_secs_f64()*1e6/50.0);
    }
    // plain square-and-multiply
    let t = Instant::now();
    for x in &xs {
        let mut acc = x.clone();
        for _ in 0..1 { acc = &acc * &acc % &key.n; }
        std::hint::black_box(&acc);
    }
    println!("one modmul: {:.1} us", t.elapsed().as_secs_f64()*1e6/50.0);
}
