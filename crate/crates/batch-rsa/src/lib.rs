//! Batch RSA decryption server toolkit.
//!
//! A modulus holds several public/private exponent pairs; `b` ciphertexts
//! encrypted under `b` pairwise-coprime public exponents are decrypted with a
//! single private exponentiation plus cheap small-exponent work. On top of
//! that primitive sit a deadline-aware batch scheduler with minibatching, a
//! discrete-event simulator comparing batching against conventional service,
//! a sieved RSA parameter generator with matching attack oracles, and a
//! length-prefixed TCP demo server.

pub mod attacks;
pub mod batch;
pub mod client;
pub mod error;
pub mod keyfile;
pub mod nt;
pub mod paramgen;
pub mod proto;
pub mod rsa;
pub mod sched;
pub mod server;
pub mod sim;

pub use error::Error;

/// Timestamps and durations are seconds on whatever clock the caller owns:
/// the simulator feeds virtual time, the server feeds wall time.
pub type Seconds = f64;
