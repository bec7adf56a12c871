//! batch-rsa: key generation and sieving, batch decryption benchmarks,
//! scheduling simulations, attack oracles, and the demo network server.
//!
//! Exit codes: 0 success, 1 domain failure (sieve FAIL, attack outcome
//! contrary to --expect, plaintext mismatches), 2 configuration error,
//! 64 usage error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::RngCore;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use batch_rsa::attacks::{self, AttackBudget, CycleOutcome};
use batch_rsa::batch;
use batch_rsa::client::load_client;
use batch_rsa::error::Error;
use batch_rsa::keyfile;
use batch_rsa::paramgen::{self, SievePolicy};
use batch_rsa::rsa;
use batch_rsa::sched::SchedulerConfig;
use batch_rsa::server;
use batch_rsa::sim::{self, ServiceModel, SimConfig, SimMode};

#[derive(Parser)]
#[command(name = "batch-rsa", version, about = "Batch RSA decryption toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key file, optionally sieved against the security policy
    Keygen(KeygenArgs),
    /// Run the security sieve over an existing key file
    Sieve(SieveArgs),
    /// Encrypt a message under one exponent slot
    Encrypt(CryptArgs),
    /// Decrypt a ciphertext under one exponent slot
    Decrypt(CryptArgs),
    /// Time batch decryption against conventional decryption
    BatchBench(BatchBenchArgs),
    /// Simulate one service discipline over a generated arrival trace
    Simulate(SimulateArgs),
    /// Run all three disciplines on one trace and compare mean response
    Compare(CompareArgs),
    /// Run an attack oracle against a key file
    Attack(AttackArgs),
    /// Print the decimal digit profile of a generated key
    Table1(Table1Args),
    /// Serve batch decryption over TCP
    Serve(ServeArgs),
    /// Drive a running server with encrypted load and verify responses
    Load(LoadArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Modulus length in bits
    #[arg(long, default_value_t = 512)]
    bits: u64,
    /// Comma-separated public exponents, pairwise coprime and odd
    #[arg(long, default_value = "3,5,7,11", value_delimiter = ',')]
    exponents: Vec<u64>,
    /// Sieve the key: strong primes plus the full check list
    #[arg(long)]
    sieve: bool,
    /// RNG seed; drawn from system entropy (and printed) when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Output key file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    max_attempts: u32,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct PolicyArgs {
    /// Override: required bit length of strong factors of p±1, q±1
    #[arg(long)]
    strong_factor_bits: Option<u64>,
    /// Override: required bit length of |p - q|
    #[arg(long)]
    min_prime_gap_bits: Option<u64>,
    /// Override: maximum allowed gcd(p-1, q-1)
    #[arg(long)]
    max_gcd: Option<u64>,
}

impl PolicyArgs {
    fn build(&self, bits: u64) -> SievePolicy {
        let mut policy = SievePolicy::for_modulus_bits(bits);
        if let Some(v) = self.strong_factor_bits {
            policy.strong_factor_bits = v;
        }
        if let Some(v) = self.min_prime_gap_bits {
            policy.min_prime_gap_bits = v;
        }
        if let Some(v) = self.max_gcd {
            policy.max_gcd = v;
        }
        policy
    }
}

#[derive(Args)]
struct SieveArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value_t = 0)]
    slot: usize,
    /// Write the report as CSV to this path
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct CryptArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value_t = 0)]
    slot: usize,
    /// Integer value, decimal or 0x-prefixed hex
    #[arg(long)]
    value: String,
}

#[derive(Args)]
struct BatchBenchArgs {
    #[arg(long, default_value_t = 2048)]
    bits: u64,
    /// Batch sizes to measure
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    b: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Arrival rate, requests/second
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    /// Client tolerable waiting time, seconds
    #[arg(long, default_value_t = 0.2)]
    t_i: f64,
    /// Conventional decryption cost, milliseconds
    #[arg(long, default_value_t = 10.0)]
    t_rsa_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1024)]
    n_scale: u64,
    /// Simulated horizon, seconds
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Rate multiplier inside the burst window
    #[arg(long, default_value_t = 1.0)]
    burst_factor: f64,
    /// Fraction of the horizon covered by the burst window
    #[arg(long, default_value_t = 0.0)]
    burst_fraction: f64,
    /// Arrival rate of the generated trace; defaults to --lambda
    #[arg(long)]
    trace_lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TraceArgs {
    fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            lambda: self.lambda,
            t_i: self.t_i,
            t_rsa: self.t_rsa_ms / 1e3,
            k: self.k,
            n_scale: self.n_scale,
            ..SchedulerConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Mode::BatchMini)]
    mode: Mode,
    /// Time real batch-engine calls instead of the analytic cost model
    #[arg(long)]
    measured: bool,
    /// Key file for --measured
    #[arg(long)]
    key: Option<PathBuf>,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    NonBatching,
    Batch,
    BatchMini,
}

impl From<Mode> for SimMode {
    fn from(mode: Mode) -> SimMode {
        match mode {
            Mode::NonBatching => SimMode::NonBatching,
            Mode::Batch => SimMode::BatchNoMini,
            Mode::BatchMini => SimMode::BatchWithMini,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    attack: AttackKind,
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value_t = 0)]
    slot: usize,
    #[arg(long, default_value_t = 1_000_000)]
    budget_steps: u64,
    #[arg(long, default_value_t = 60.0)]
    budget_seconds: f64,
    /// Smoothness bound for pminus1
    #[arg(long, default_value_t = 65536)]
    bound: u32,
    /// Ciphertext for cycle (decimal or 0x hex); derived from --seed if absent
    #[arg(long)]
    ciphertext: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Turn the outcome into an exit status check
    #[arg(long, value_enum)]
    expect: Option<Expectation>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Fermat,
    Pminus1,
    Wiener,
    Cycle,
    Exhaustive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expectation {
    Broken,
    Resisted,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, default_value_t = 500)]
    bits: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// table1: single random 66-bit exponent; batch: small prime exponents
    #[arg(long, default_value = "table1")]
    profile: String,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:4433")]
    listen: String,
    #[arg(long)]
    key: PathBuf,
    /// Scheduler config file (key = value lines); defaults apply if absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Decryption worker threads; defaults to the processor count
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct LoadArgs {
    #[arg(long)]
    connect: String,
    #[arg(long, default_value_t = 10)]
    connections: usize,
    /// Requests per connection
    #[arg(long, default_value_t = 100)]
    requests: usize,
    /// Aggregate request rate across all connections
    #[arg(long, default_value_t = 200.0)]
    lambda: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

/// Resolves --seed, drawing from entropy and printing the value when the
/// flag is absent so the run stays reproducible after the fact.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = rand::thread_rng().next_u64();
            println!("seed: {s}");
            s
        }
    }
}

fn parse_int(text: &str) -> Result<BigUint, Error> {
    let text = text.trim();
    let parsed = if let Some(hex) = text.strip_prefix("0x") {
        BigUint::parse_bytes(hex.as_bytes(), 16)
    } else {
        BigUint::parse_bytes(text.as_bytes(), 10)
    };
    parsed.ok_or_else(|| Error::Parse(format!("not an integer: {text}")))
}

fn write_or_print(csv: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match csv {
        Some(path) => std::fs::write(path, content).map_err(Error::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Keygen(args) => {
            let seed = resolve_seed(args.seed);
            let exponents = rsa::exponents_from_u64(&args.exponents);
            if args.sieve {
                let policy = args.policy.build(args.bits);
                let (key, report) =
                    paramgen::generate_sieved_keypair(args.bits, &exponents, &policy, seed, args.max_attempts)?;
                keyfile::write(&args.out, &key)?;
                print!("{}", report.render_lines());
                println!("wrote {}", args.out.display());
            } else {
                let key = rsa::generate_keypair(args.bits, &exponents, seed)?;
                keyfile::write(&args.out, &key)?;
                println!("wrote {}", args.out.display());
            }
            Ok(0)
        }
        Command::Sieve(args) => {
            let key = keyfile::read(&args.key)?;
            let policy = args.policy.build(key.n.bits());
            let report = paramgen::sieve_keypair(&key, args.slot, &policy)?;
            print!("{}", report.render_lines());
            if let Some(path) = &args.csv {
                std::fs::write(path, report.csv())?;
            }
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Encrypt(args) => {
            let key = keyfile::read(&args.key)?;
            let m = parse_int(&args.value)?;
            let c = rsa::encrypt(&key, args.slot, &m)?;
            println!("{c}");
            Ok(0)
        }
        Command::Decrypt(args) => {
            let key = keyfile::read(&args.key)?;
            let c = parse_int(&args.value)?;
            let m = rsa::decrypt_conventional(&key, args.slot, &c)?;
            println!("{m}");
            Ok(0)
        }
        Command::BatchBench(args) => {
            let seed = resolve_seed(args.seed);
            let mut out = String::from(batch::BenchReport::csv_header());
            out.push('\n');
            for &b in &args.b {
                let report = batch::bench_batch(args.bits, b, args.trials, seed)?;
                out.push_str(&report.csv_row());
                out.push('\n');
            }
            write_or_print(&args.csv, &out)?;
            Ok(0)
        }
        Command::Simulate(args) => {
            let seed = resolve_seed(args.trace.seed);
            let sched = args.trace.scheduler_config();
            let service = if args.measured {
                let path = args
                    .key
                    .as_ref()
                    .ok_or_else(|| Error::Config("--measured needs --key".into()))?;
                ServiceModel::Measured { key: Arc::new(keyfile::read(path)?) }
            } else {
                ServiceModel::Analytic
            };
            let trace = sim::generate_trace(
                args.trace.trace_lambda.unwrap_or(args.trace.lambda),
                args.trace.duration,
                args.trace.burst_factor,
                args.trace.burst_fraction,
                seed,
            )?;
            let cfg = SimConfig { sched, mode: args.mode.into(), service, duration: args.trace.duration };
            let metrics = sim::run_simulation(&trace, &cfg)?;
            let csv = sim::metrics_csv(std::slice::from_ref(&metrics));
            write_or_print(&args.csv, &csv)?;
            if let Some(ratio) = metrics.model_measured_ratio {
                println!("# measured/model service-time ratio: {ratio:.3}");
            }
            Ok(0)
        }
        Command::Compare(args) => {
            let seed = resolve_seed(args.trace.seed);
            let trace = sim::generate_trace(
                args.trace.trace_lambda.unwrap_or(args.trace.lambda),
                args.trace.duration,
                args.trace.burst_factor,
                args.trace.burst_fraction,
                seed,
            )?;
            let cfg = SimConfig {
                sched: args.trace.scheduler_config(),
                mode: SimMode::BatchWithMini,
                service: ServiceModel::Analytic,
                duration: args.trace.duration,
            };
            let rows = sim::compare_modes(&trace, &cfg)?;
            write_or_print(&args.csv, &sim::metrics_csv(&rows))?;
            Ok(0)
        }
        Command::Attack(args) => run_attack(args),
        Command::Table1(args) => {
            let seed = resolve_seed(args.seed);
            let key = match args.profile.as_str() {
                "table1" => paramgen::generate_wide_exponent_keypair(args.bits, seed)?,
                "batch" => rsa::generate_keypair(args.bits, &rsa::exponents_from_u64(&[3, 5, 7, 11]), seed)?,
                other => return Err(Error::Config(format!("unknown profile {other}"))),
            };
            let profile = paramgen::measure_digit_profile(&key)?;
            println!("bits={} profile={}", args.bits, args.profile);
            println!(
                "p={} q={} n={} e={} d={} c={}",
                profile.p, profile.q, profile.n, profile.e, profile.d, profile.c
            );
            if let Some(path) = &args.csv {
                std::fs::write(path, format!("{}\n{}\n", paramgen::DigitProfile::csv_header(), profile.csv_row()))?;
            }
            Ok(0)
        }
        Command::Serve(args) => {
            let key = Arc::new(keyfile::read(&args.key)?);
            let cfg = match &args.config {
                Some(path) => SchedulerConfig::from_config_text(&std::fs::read_to_string(path)?)?,
                None => SchedulerConfig::default(),
            };
            let workers = args.workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
            });
            let handle = server::serve(key, cfg, &args.listen, workers)?;
            println!("listening on {} with batch size {}", handle.local_addr(), handle.batch_size);
            handle.join();
            Ok(0)
        }
        Command::Load(args) => {
            let seed = resolve_seed(args.seed);
            let report = load_client(&args.connect, args.connections, args.requests, args.lambda, seed)?;
            println!(
                "sent={} ok={} overloaded={} malformed={} mismatches={} mean_ms={:.3} p95_ms={:.3}",
                report.requests_sent,
                report.ok_responses,
                report.overloaded,
                report.malformed,
                report.mismatches,
                report.mean_response() * 1e3,
                report.p95_response() * 1e3,
            );
            if let Some(path) = &args.csv {
                std::fs::write(path, report.csv())?;
            }
            Ok(if report.mismatches == 0 { 0 } else { 1 })
        }
    }
}

fn run_attack(args: AttackArgs) -> Result<u8, Error> {
    let key = keyfile::read(&args.key)?;
    let slot = key.slot(args.slot)?;
    let budget = AttackBudget { max_steps: args.budget_steps, max_seconds: args.budget_seconds };

    let broken = match args.attack {
        AttackKind::Fermat => match attacks::fermat_factor(&key.n, &budget) {
            Some((p, q)) => {
                println!("broken: n = {p} * {q}");
                true
            }
            None => false,
        },
        AttackKind::Pminus1 => match attacks::pollard_p_minus_1(&key.n, args.bound, &budget) {
            Some(f) => {
                println!("broken: found factor {f}");
                true
            }
            None => false,
        },
        AttackKind::Wiener => match attacks::wiener_attack(&slot.e, &key.n, &budget) {
            Some(d) => {
                println!("broken: recovered d = {d}");
                true
            }
            None => false,
        },
        AttackKind::Cycle => {
            let seed = resolve_seed(args.seed);
            let c = match &args.ciphertext {
                Some(text) => parse_int(text)?,
                None => {
                    let m = BigUint::from(seed | 3) % &key.n;
                    rsa::encrypt(&key, args.slot, &m)?
                }
            };
            match attacks::cycle_attack(&c, &slot.e, &key.n, &budget) {
                Some(CycleOutcome::Plaintext(m)) => {
                    println!("broken: recovered plaintext {m}");
                    true
                }
                Some(CycleOutcome::Factor(f)) => {
                    println!("broken: gcd with ciphertext gave factor {f}");
                    true
                }
                None => false,
            }
        }
        AttackKind::Exhaustive => {
            let probes: Vec<(BigUint, BigUint)> = [2u32, 3]
                .iter()
                .map(|&m| {
                    let m = BigUint::from(m);
                    rsa::encrypt(&key, args.slot, &m).map(|c| (m, c))
                })
                .collect::<Result<_, _>>()?;
            match attacks::exhaustive_d_search(&key.n, &probes, &budget) {
                Some(d) => {
                    println!("broken: universal exponent {d}");
                    true
                }
                None => false,
            }
        }
    };
    if !broken {
        println!("resisted within budget");
    }
    let status = match args.expect {
        None => {
            if broken {
                0
            } else {
                1
            }
        }
        Some(Expectation::Broken) => {
            if broken {
                0
            } else {
                1
            }
        }
        Some(Expectation::Resisted) => {
            if broken {
                1
            } else {
                0
            }
        }
    };
    Ok(status)
}
