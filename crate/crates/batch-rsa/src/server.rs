//! TCP batch-decryption service. Connection handlers greet each client with
//! a round-robin exponent assignment, forward decryption requests to the
//! single scheduler actor, and stream responses back by request id.
//!
//! Threading: one acceptor, one scheduler actor (sole owner of the queue
//! state), a decryption worker pool, and per connection one reader plus one
//! writer. Handlers never touch scheduler state directly; everything flows
//! through channels.

use num_bigint::BigUint;
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::batch::{self, BatchJob, ContextCache};
use crate::error::{Error, Result};
use crate::proto::{self, HelloFrame, RequestFrame, ResponseFrame, Status};
use crate::rsa::{self, KeyPair};
use crate::sched::{self, Action, PendingRequest, QueueState, SchedulerConfig};

/// A response routed back to one connection's writer.
type Reply = (u64, Status, Vec<u8>);

enum ActorMsg {
    /// Connection setup: reply with the next round-robin exponent index.
    Hello { reply: Sender<usize> },
    Enqueue {
        client_request_id: u64,
        exponent_index: usize,
        ciphertext: BigUint,
        respond: Sender<Reply>,
    },
}

struct JobEntry {
    slot: usize,
    ciphertext: BigUint,
    client_request_id: u64,
    respond: Sender<Reply>,
}

struct Job {
    entries: Vec<JobEntry>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    pub batch_size: usize,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, drains the actor and workers, and joins them.
    /// Established connections are closed by their clients.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops (the CLI's foreground mode).
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Starts the service on `listen` (use port 0 for an ephemeral port). The
/// batch size b comes from the step-1 optimizer; the key must carry at
/// least that many slots.
pub fn serve(
    key: Arc<KeyPair>,
    cfg: SchedulerConfig,
    listen: &str,
    workers: usize,
) -> Result<ServerHandle> {
    cfg.validate()?;
    let b = sched::find_optimal_batch_size(&cfg).unwrap_or(1) as usize;
    if key.slots.len() < b {
        return Err(Error::Config(format!(
            "optimal batch size is {b} but the key has only {} slots",
            key.slots.len()
        )));
    }
    let workers = workers.max(1);
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let mut threads = Vec::new();

    let (job_tx, job_rx) = mpsc::channel::<Job>();
    let job_rx = Arc::new(Mutex::new(job_rx));
    for _ in 0..workers {
        let job_rx = Arc::clone(&job_rx);
        let key = Arc::clone(&key);
        threads.push(thread::spawn(move || worker_loop(key, job_rx)));
    }

    let (actor_tx, actor_rx) = mpsc::channel::<ActorMsg>();
    {
        let stop = Arc::clone(&stop);
        let cfg = cfg.clone();
        threads.push(thread::spawn(move || actor_loop(b, cfg, actor_rx, job_tx, stop)));
    }

    {
        let stop = Arc::clone(&stop);
        let key = Arc::clone(&key);
        threads.push(thread::spawn(move || accept_loop(listener, key, actor_tx, stop)));
    }

    Ok(ServerHandle { addr, stop, threads, batch_size: b })
}

fn accept_loop(
    listener: TcpListener,
    key: Arc<KeyPair>,
    actor_tx: Sender<ActorMsg>,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let key = Arc::clone(&key);
                let actor_tx = actor_tx.clone();
                thread::spawn(move || {
                    let _ = handle_connection(stream, key, actor_tx);
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break,
        }
    }
}

fn handle_connection(stream: TcpStream, key: Arc<KeyPair>, actor_tx: Sender<ActorMsg>) -> Result<()> {
    stream.set_nodelay(true).ok();
    let (index_tx, index_rx) = mpsc::channel();
    actor_tx
        .send(ActorMsg::Hello { reply: index_tx })
        .map_err(|_| Error::Config("scheduler actor is gone".into()))?;
    let exponent_index = index_rx
        .recv()
        .map_err(|_| Error::Config("scheduler actor is gone".into()))?;

    {
        let hello = HelloFrame {
            exponent_index: exponent_index as u16,
            modulus: key.n.clone(),
            exponent: key.slots[exponent_index].e.clone(),
        };
        let mut w = BufWriter::new(stream.try_clone()?);
        hello.write_to(&mut w)?;
        w.flush()?;
    }

    let write_stream = stream.try_clone()?;
    let (reply_tx, reply_rx) = mpsc::channel::<Reply>();
    let writer = thread::spawn(move || writer_loop(write_stream, reply_rx));

    let modulus_len = key.n.to_bytes_be().len();
    let mut reader = BufReader::new(stream);
    loop {
        let mut ty = [0u8; 1];
        if reader.read_exact(&mut ty).is_err() {
            break; // client closed
        }
        if ty[0] != proto::TYPE_REQUEST {
            // An unknown frame type desynchronizes the stream; report and drop.
            let _ = reply_tx.send((0, Status::Malformed, vec![]));
            break;
        }
        let frame = match RequestFrame::read_body(&mut reader) {
            Ok(f) => f,
            Err(_) => break,
        };
        if frame.ciphertext.len() > modulus_len {
            let _ = reply_tx.send((frame.request_id, Status::Malformed, vec![]));
            continue;
        }
        let ciphertext = BigUint::from_bytes_be(&frame.ciphertext);
        if ciphertext >= key.n {
            let _ = reply_tx.send((frame.request_id, Status::Malformed, vec![]));
            continue;
        }
        if actor_tx
            .send(ActorMsg::Enqueue {
                client_request_id: frame.request_id,
                exponent_index,
                ciphertext,
                respond: reply_tx.clone(),
            })
            .is_err()
        {
            break;
        }
    }
    drop(reply_tx);
    let _ = writer.join();
    Ok(())
}

fn writer_loop(stream: TcpStream, replies: Receiver<Reply>) {
    let mut w = BufWriter::new(stream);
    while let Ok((request_id, status, plaintext)) = replies.recv() {
        let frame = ResponseFrame { request_id, status, plaintext };
        if frame.write_to(&mut w).is_err() || w.flush().is_err() {
            break;
        }
    }
}

/// Sole owner of the queue state. Wakes on messages or on the scheduler's
/// own wait hints, polls until Wait, and ships completed actions to the
/// worker pool.
fn actor_loop(
    b: usize,
    cfg: SchedulerConfig,
    rx: Receiver<ActorMsg>,
    job_tx: Sender<Job>,
    stop: Arc<AtomicBool>,
) {
    let origin = Instant::now();
    let mut state = QueueState::new(b, &cfg);
    let mut routes: HashMap<u64, (u64, Sender<Reply>)> = HashMap::new();
    let mut next_id: u64 = 0;
    let mut wait = cfg.poll_granularity;

    loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let deadline = Duration::from_secs_f64(wait.clamp(1e-4, 0.05));
        let mut msg = match rx.recv_timeout(deadline) {
            Ok(m) => Some(m),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        // Drain whatever arrived together before polling.
        loop {
            match msg {
                Some(ActorMsg::Hello { reply }) => {
                    let _ = reply.send(sched::assign_exponent(&mut state));
                }
                Some(ActorMsg::Enqueue { client_request_id, exponent_index, ciphertext, respond }) => {
                    let id = next_id;
                    next_id += 1;
                    let req = PendingRequest::new(id, exponent_index, ciphertext);
                    match sched::enqueue_request(&mut state, req, origin.elapsed().as_secs_f64()) {
                        Ok(()) => {
                            routes.insert(id, (client_request_id, respond));
                        }
                        Err(Error::Overload(_)) => {
                            let _ = respond.send((client_request_id, Status::RejectedOverload, vec![]));
                        }
                        Err(_) => {
                            let _ = respond.send((client_request_id, Status::Malformed, vec![]));
                        }
                    }
                }
                None => break,
            }
            msg = rx.try_recv().ok();
        }

        loop {
            let now = origin.elapsed().as_secs_f64();
            match sched::poll(&state, &cfg, now) {
                Action::Wait(d) => {
                    wait = d;
                    break;
                }
                act => {
                    let popped = match sched::complete_action(&mut state, &act, now) {
                        Ok(p) => p,
                        Err(_) => break, // single-owner contract: unreachable
                    };
                    let entries: Vec<JobEntry> = popped
                        .into_iter()
                        .filter_map(|req| {
                            routes.remove(&req.id).map(|(client_request_id, respond)| JobEntry {
                                slot: req.exponent_index,
                                ciphertext: req.ciphertext,
                                client_request_id,
                                respond,
                            })
                        })
                        .collect();
                    if !entries.is_empty() && job_tx.send(Job { entries }).is_err() {
                        return;
                    }
                }
            }
        }
    }
}

fn worker_loop(key: Arc<KeyPair>, jobs: Arc<Mutex<Receiver<Job>>>) {
    let mut contexts = ContextCache::new(32);
    loop {
        let job = {
            let guard = jobs.lock().expect("job queue lock");
            guard.recv()
        };
        let Ok(job) = job else { break };
        run_job(&key, &mut contexts, job);
    }
}

/// Decrypts one action's worth of requests. Batches of >= 2 go through the
/// batch engine; a failed batch (e.g. a ciphertext sharing a factor with n)
/// falls back to per-message conventional decryption so the payloads never
/// depend on the path taken.
fn run_job(key: &KeyPair, contexts: &mut ContextCache, job: Job) {
    let send_conventional = |entry: &JobEntry| {
        let reply = match rsa::decrypt_conventional(key, entry.slot, &entry.ciphertext) {
            Ok(m) => (entry.client_request_id, Status::Ok, m.to_bytes_be()),
            Err(_) => (entry.client_request_id, Status::Malformed, vec![]),
        };
        let _ = entry.respond.send(reply);
    };

    if job.entries.len() >= 2 {
        let exponents: Vec<BigUint> =
            job.entries.iter().map(|e| key.slots[e.slot].e.clone()).collect();
        let cts: Vec<BigUint> = job.entries.iter().map(|e| e.ciphertext.clone()).collect();
        let batch_result = contexts
            .get(&exponents)
            .and_then(|ctx| batch::batch_decrypt(&ctx, key, &BatchJob::new(cts)));
        match batch_result {
            Ok(plaintexts) => {
                for (entry, m) in job.entries.iter().zip(plaintexts) {
                    let _ = entry.respond.send((entry.client_request_id, Status::Ok, m.to_bytes_be()));
                }
            }
            Err(_) => {
                for entry in &job.entries {
                    send_conventional(entry);
                }
            }
        }
        return;
    }
    for entry in &job.entries {
        send_conventional(entry);
    }
}
