//! `feinsum`: canonicalize batched einsums, check isomorphism, match kernels
//! and query the tuning database from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use feinsum::canonicalize::{
    brute_force_isomorphic_with_budget, canonicalize, generate_random, is_isomorphic, scramble,
    verify_witness, CanonResult, GenParams,
};
use feinsum::factsdb::{
    arithmetic_intensity, flop_count, footprint_bytes, roofline, DevicePeaks, FactsDb, NewFact,
};
use feinsum::model::{BatchedEinsum, DtypeCode};
use feinsum::raising::{identify_as_einsum, parse_kernel};
use feinsum::{canonical_key, parse_classic, print_classic, Error};

#[derive(Parser)]
#[command(
    name = "feinsum",
    version,
    about = "Canonical forms and tuning facts for batched einsums"
)]
struct Cli {
    /// Facts database file.
    #[arg(long, global = true, default_value = "./feinsum-facts.db")]
    db: PathBuf,

    /// Device identifier (required by `record` and `retrieve`).
    #[arg(long, global = true)]
    device: Option<String>,

    /// Output format for `canonicalize` and `retrieve`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    KeyOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form, its key and the maps back to the input.
    Canonicalize { spec: PathBuf },
    /// Print a witness if the two einsums are isomorphic.
    Isomorphic { a: PathBuf, b: PathBuf },
    /// Match a loop-nest kernel against a reference einsum.
    Match { kernel: PathBuf, reference: PathBuf },
    /// Append a measurement for an einsum on a device.
    Record {
        spec: PathBuf,
        /// Transform identifier.
        #[arg(long)]
        transform: String,
        /// Wall time in seconds.
        #[arg(long)]
        time: f64,
        /// Achieved FLOP/s; defaults to the FLOP count divided by the time.
        #[arg(long)]
        flop_rate: Option<f64>,
        /// Free-form metadata.
        #[arg(long, default_value = "")]
        meta: String,
    },
    /// Print the fastest recorded transform for an einsum on a device.
    Retrieve { spec: PathBuf },
    /// Print FLOPs, footprint and arithmetic intensity, plus the roofline
    /// with `--device`.
    Stats { spec: PathBuf },
    /// Run the generator and scramble differential checks.
    #[command(hide = true)]
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        iterations: u64,
    },
}

/// How a command failed; each class has its own exit code.
enum Failure {
    Domain(String),
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Domain(e.to_string())
        }
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<BatchedEinsum, Failure> {
    parse_classic(&read(path)?).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn require_device(device: &Option<String>, command: &str) -> Result<String, Failure> {
    device
        .clone()
        .ok_or_else(|| Failure::Usage(format!("`{command}` requires --device")))
}

fn sigma_lines(c: &CanonResult) -> String {
    let mut s = String::new();
    for (r, orig) in c.sigma_row.iter().enumerate() {
        s += &format!("sigma_row: {} -> {}\n", r + 1, orig + 1);
    }
    for (j, orig) in c.sigma_slot.iter().enumerate() {
        s += &format!("sigma_slot: {} -> {}\n", j + 1, orig + 1);
    }
    for (canon, orig) in &c.sigma_idx {
        s += &format!("sigma_idx: {canon} -> {orig}\n");
    }
    for (canon, orig) in &c.sigma_arg {
        s += &format!("sigma_arg: {canon} -> {orig}\n");
    }
    s
}

fn cmd_canonicalize(spec: &Path, format: Format) -> Outcome {
    let e = load(spec)?;
    let c = canonicalize(&e)?;
    let key = canonical_key(&c.canonical)?;
    if format == Format::KeyOnly {
        return Ok(format!("{key}\n"));
    }
    Ok(format!(
        "{}key: {key}\n{}",
        print_classic(&c.canonical)?,
        sigma_lines(&c)
    ))
}

fn cmd_isomorphic(a: &Path, b: &Path) -> Outcome {
    let (e1, e2) = (load(a)?, load(b)?);
    match is_isomorphic(&e1, &e2)? {
        Some(w) => Ok(format!("isomorphic\n{w}")),
        None => Err(Failure::Domain("not isomorphic".into())),
    }
}

fn cmd_match(kernel: &Path, reference: &Path) -> Outcome {
    let k = parse_kernel(&read(kernel)?)
        .map_err(|e| Failure::Domain(format!("{}: {e}", kernel.display())))?;
    let r = load(reference)?;
    let id = identify_as_einsum(&k, &r)?;
    let mut s = String::from("match\n");
    for (row, &stmt) in id.sigma_row.iter().enumerate() {
        s += &format!("sigma_row: {} -> {}\n", row + 1, k.statements[stmt].output);
    }
    for (j, &pos) in id.sigma_slot.iter().enumerate() {
        s += &format!("sigma_slot: {} -> {}\n", j + 1, pos + 1);
    }
    for (from, to) in &id.sigma_idx {
        s += &format!("sigma_idx: {from} -> {to}\n");
    }
    for (from, to) in &id.sigma_arg {
        s += &format!("sigma_arg: {from} -> {to}\n");
    }
    Ok(s)
}

fn cmd_record(
    db: &FactsDb,
    spec: &Path,
    device: String,
    transform: String,
    time: f64,
    flop_rate: Option<f64>,
    meta: String,
) -> Outcome {
    let e = load(spec)?;
    let rate = flop_rate.unwrap_or_else(|| flop_count(&e) as f64 / time);
    let fact = NewFact {
        meta,
        ..NewFact::new(device, transform, time, rate)
    };
    let n = db.record_facts(&e, &[fact])?;
    Ok(format!("recorded: {n}\n"))
}

fn cmd_retrieve(db: &FactsDb, spec: &Path, device: &str, format: Format) -> Outcome {
    let e = load(spec)?;
    let got = match db.retrieve(&e, device) {
        Ok(got) => got,
        Err(err @ Error::NotFound { .. }) => {
            return Err(Failure::Domain(format!("not found: {err}")))
        }
        Err(err) => return Err(err.into()),
    };
    let b = &got.best;
    if format == Format::KeyOnly {
        return Ok(format!("{}\n", b.canonical_key));
    }
    Ok(format!(
        "key: {}\ndevice: {}\ntransform: {}\nwall_time_s: {}\nflop_rate: {}\nrecorded_at: {}\nmeta: {}\n{}",
        b.canonical_key,
        b.device_id,
        b.transform_id,
        b.wall_time_s,
        b.flop_rate,
        b.recorded_at_text(),
        b.meta,
        sigma_lines(&got.canon)
    ))
}

fn cmd_stats(spec: &Path, device: Option<&str>) -> Outcome {
    let e = load(spec)?;
    let mut s = format!(
        "flops: {}\nbytes: {}\narithmetic_intensity: {:.6}\n",
        flop_count(&e),
        footprint_bytes(&e),
        arithmetic_intensity(&e)
    );
    if let Some(id) = device {
        let names: Vec<String> = DevicePeaks::presets()
            .into_iter()
            .map(|p| p.device_id)
            .collect();
        let peaks = DevicePeaks::preset(id).ok_or_else(|| {
            Failure::Domain(format!(
                "unknown device `{id}` (known: {})",
                names.join(", ")
            ))
        })?;
        let r = roofline(&e, &peaks);
        s += &format!(
            "device: {}\nsaturation_ai: {}\nroofline_flops: {:.6}\nmemory_bound: {}\n",
            peaks.device_id,
            peaks.saturation_ai(),
            r.roofline_flops,
            r.memory_bound
        );
    }
    Ok(s)
}

fn cmd_fuzz(seed: u64, iterations: u64) -> Outcome {
    let mut failures = Vec::new();
    let mut brute_checked = 0u64;
    for k in 0..iterations {
        let s = seed.wrapping_add(k);
        let p = GenParams {
            b: 1 + (s % 4) as usize,
            n: 1 + (s / 4 % 4) as usize,
            max_indices: 1 + (s / 16 % 6) as usize,
            dtypes: vec![
                DtypeCode::Float32,
                DtypeCode::Float64,
                DtypeCode::Complex128,
            ],
            seed: s,
            ..GenParams::default()
        };
        let e = generate_random(&p)?;
        let (t, _) = scramble(&e, s ^ 0x9e37_79b9);
        let (c1, c2) = (canonicalize(&e)?, canonicalize(&t)?);
        if !c1.canonical.equals(&c2.canonical) {
            failures.push(format!(
                "seed {s}: scrambled copy has a different canonical form"
            ));
            continue;
        }
        match is_isomorphic(&e, &t)? {
            Some(w) if verify_witness(&e, &t, &w) => {}
            _ => failures.push(format!("seed {s}: witness does not verify")),
        }
        if !canonicalize(&c1.canonical)?.canonical.equals(&c1.canonical) {
            failures.push(format!("seed {s}: canonical form is not a fixed point"));
        }
        if let Ok(found) = brute_force_isomorphic_with_budget(&e, &t, 100_000) {
            brute_checked += 1;
            if found.is_none() {
                failures.push(format!("seed {s}: brute force finds no witness"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "fuzz: {iterations} iterations passed ({brute_checked} cross-checked by brute force)\n"
        ))
    } else {
        Err(Failure::Domain(format!(
            "fuzz: {} failures\n{}",
            failures.len(),
            failures.join("\n")
        )))
    }
}

fn run(cli: Cli) -> Outcome {
    let db = FactsDb::new(&cli.db);
    match cli.command {
        Command::Canonicalize { spec } => cmd_canonicalize(&spec, cli.format),
        Command::Isomorphic { a, b } => cmd_isomorphic(&a, &b),
        Command::Match { kernel, reference } => cmd_match(&kernel, &reference),
        Command::Record {
            spec,
            transform,
            time,
            flop_rate,
            meta,
        } => {
            let device = require_device(&cli.device, "record")?;
            cmd_record(&db, &spec, device, transform, time, flop_rate, meta)
        }
        Command::Retrieve { spec } => {
            let device = require_device(&cli.device, "retrieve")?;
            cmd_retrieve(&db, &spec, &device, cli.format)
        }
        Command::Stats { spec } => cmd_stats(&spec, cli.device.as_deref()),
        Command::Fuzz { seed, iterations } => cmd_fuzz(seed, iterations),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
            .exit(),
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
