//! Load-generating client for the batch decryption service: opens N
//! connections, encrypts random plaintexts under each connection's assigned
//! exponent, paces requests with Poisson gaps, and verifies every returned
//! plaintext against the original message.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::proto::{HelloFrame, RequestFrame, ResponseFrame, Status};

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub requests_sent: usize,
    pub ok_responses: usize,
    pub overloaded: usize,
    pub malformed: usize,
    /// Status-0 responses whose plaintext differs from what was encrypted.
    pub mismatches: usize,
    pub response_times: Vec<f64>,
    pub wall_seconds: f64,
    pub lambda: f64,
}

impl LoadReport {
    pub fn mean_response(&self) -> f64 {
        if self.response_times.is_empty() {
            0.0
        } else {
            self.response_times.iter().sum::<f64>() / self.response_times.len() as f64
        }
    }

    pub fn p95_response(&self) -> f64 {
        if self.response_times.is_empty() {
            return 0.0;
        }
        let mut sorted = self.response_times.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted[((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1]
    }

    /// Same schema as the simulator; the violations column carries the
    /// fraction of requests without an ok response, and t_i / b are not
    /// known on the client side.
    pub fn csv(&self) -> String {
        let failed = self.requests_sent.saturating_sub(self.ok_responses);
        let violations = if self.requests_sent == 0 {
            0.0
        } else {
            failed as f64 / self.requests_sent as f64
        };
        let throughput = if self.wall_seconds > 0.0 {
            self.ok_responses as f64 / self.wall_seconds
        } else {
            0.0
        };
        format!(
            "mode,lambda,t_i,b,mean_ms,p95_ms,violations,throughput,ratio\nload,{},0,0,{:.3},{:.3},{:.4},{:.2},\n",
            self.lambda,
            self.mean_response() * 1e3,
            self.p95_response() * 1e3,
            violations,
            throughput,
        )
    }
}

struct ConnOutcome {
    sent: usize,
    ok: usize,
    overloaded: usize,
    malformed: usize,
    mismatches: usize,
    response_times: Vec<f64>,
}

/// Runs the workload and aggregates per-connection outcomes. `lambda` is
/// the aggregate request rate across all connections.
pub fn load_client(
    addr: &str,
    connections: usize,
    requests_per_connection: usize,
    lambda: f64,
    seed: u64,
) -> Result<LoadReport> {
    if connections == 0 || lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Config("need at least one connection and lambda > 0".into()));
    }
    let per_conn_rate = lambda / connections as f64;
    let started = Instant::now();
    let mut handles = Vec::with_capacity(connections);
    for conn in 0..connections {
        let addr = addr.to_string();
        let conn_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(conn as u64 + 1));
        handles.push(thread::spawn(move || {
            run_connection(&addr, requests_per_connection, per_conn_rate, conn_seed)
        }));
    }

    let mut report = LoadReport { lambda, ..LoadReport::default() };
    for handle in handles {
        let outcome = handle
            .join()
            .map_err(|_| Error::Config("client connection thread panicked".into()))??;
        report.requests_sent += outcome.sent;
        report.ok_responses += outcome.ok;
        report.overloaded += outcome.overloaded;
        report.malformed += outcome.malformed;
        report.mismatches += outcome.mismatches;
        report.response_times.extend(outcome.response_times);
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

fn run_connection(
    addr: &str,
    requests: usize,
    rate: f64,
    seed: u64,
) -> Result<ConnOutcome> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true).ok();
    stream.set_read_timeout(Some(Duration::from_secs(60)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let hello = HelloFrame::read_from(&mut reader)?;
    let n = hello.modulus;
    let e = hello.exponent;

    // Reader drains responses concurrently so requests can pipeline.
    type Received = Vec<(u64, Status, Vec<u8>, Instant)>;
    let reader_handle = thread::spawn(move || -> std::io::Result<Received> {
        let mut out = Vec::with_capacity(requests);
        while out.len() < requests {
            let frame = ResponseFrame::read_from(&mut reader)?;
            out.push((frame.request_id, frame.status, frame.plaintext, Instant::now()));
        }
        Ok(out)
    });

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gap = Exp::new(rate).expect("positive rate");
    let mut writer = BufWriter::new(stream);
    let mut sent_at: HashMap<u64, Instant> = HashMap::with_capacity(requests);
    let mut messages: HashMap<u64, BigUint> = HashMap::with_capacity(requests);
    for id in 0..requests as u64 {
        thread::sleep(Duration::from_secs_f64(gap.sample(&mut rng)));
        let m = loop {
            let m = rng.gen_biguint_below(&n);
            if m.gcd(&n).is_one() {
                break m;
            }
        };
        let c = m.modpow(&e, &n);
        let frame = RequestFrame { request_id: id, ciphertext: c.to_bytes_be() };
        sent_at.insert(id, Instant::now());
        frame.write_to(&mut writer)?;
        writer.flush()?;
        messages.insert(id, m);
    }

    let responses = reader_handle
        .join()
        .map_err(|_| Error::Config("reader thread panicked".into()))??;

    let mut outcome = ConnOutcome {
        sent: requests,
        ok: 0,
        overloaded: 0,
        malformed: 0,
        mismatches: 0,
        response_times: Vec::with_capacity(requests),
    };
    for (id, status, plaintext, received) in responses {
        match status {
            Status::Ok => {
                outcome.ok += 1;
                let matches = messages
                    .get(&id)
                    .map(|m| &BigUint::from_bytes_be(&plaintext) == m)
                    .unwrap_or(false);
                if !matches {
                    outcome.mismatches += 1;
                }
            }
            Status::RejectedOverload => outcome.overloaded += 1,
            Status::Malformed => outcome.malformed += 1,
        }
        if let Some(t0) = sent_at.get(&id) {
            outcome.response_times.push(received.duration_since(*t0).as_secs_f64());
        }
    }
    Ok(outcome)
}
