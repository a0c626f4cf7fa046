//! `mufc`: check, run and trace μF programs.

mod json;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use muf::corpus::BENCHMARKS;
use muf::dynamic_checker::{check_high_level, check_low_level, record_run, StepMetrics};
use muf::error::{MufError, RuntimeError};
use muf::interpreter::{default_input, RunConfig, Runner};
use muf::static_analysis::{analyze_program, AnalysisConfig};
use muf::types::TypedProgram;
use muf::value::Value;
use serde_json::Value as Json;

#[derive(Parser)]
#[command(name = "mufc", version, about = "Bounded-memory analysis and inference for μF programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Statically check that every infer site runs in bounded memory.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 10)]
        up_budget: usize,
    },
    /// Run the main stream and print one output per step.
    Run {
        file: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        /// Print distributions as text instead of mean/variance.
        #[arg(long)]
        raw: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run with instrumentation and print per-step memory metrics.
    Trace {
        file: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long, default_value_t = 0)]
        particle_index: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Check the bundled benchmarks against their expected verdicts.
    Bench {
        /// Read benchmark sources from this directory instead.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        up_budget: usize,
    },
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    particles: u64,
    /// Number of steps; defaults to the number of inputs.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = "MUFC_SEED", default_value_t = 0)]
    seed: u64,
    /// JSON Lines file with one input per step, or an inline JSON array.
    #[arg(long)]
    input: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Exit statuses.
const OK: u8 = 0;
const REJECTED: u8 = 1;
const FAILURE: u8 = 2;
const DEGENERATE: u8 = 3;

struct Failure(u8, String);

impl From<MufError> for Failure {
    fn from(e: MufError) -> Self {
        match e {
            MufError::Runtime(RuntimeError::DegenerateWeights) => Failure(DEGENERATE, e.to_string()),
            e => Failure(FAILURE, e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // A closed pipe on stdout (e.g. `| head`) is not an error.
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure(OK, String::new());
        }
        Failure(FAILURE, e.to_string())
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { file, up_budget } => check(&file, up_budget),
        Command::Run { file, exec, raw, format } => run(&file, &exec, raw, format),
        Command::Trace { file, exec, particle_index, format } => trace(&file, &exec, particle_index, format),
        Command::Bench { corpus, up_budget } => bench(corpus.as_deref(), up_budget),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            if !msg.is_empty() {
                eprintln!("mufc: {msg}");
            }
            ExitCode::from(code)
        }
    }
}

fn load(file: &Path) -> Result<TypedProgram, Failure> {
    let src = fs::read_to_string(file).map_err(|e| Failure(FAILURE, format!("{}: {e}", file.display())))?;
    let program = muf::parse(&src).map_err(|e| Failure(FAILURE, format!("{}:{e}", file.display())))?;
    Ok(muf::typecheck_core(&program).map_err(|e| Failure(FAILURE, format!("{}: {e}", file.display())))?)
}

fn check(file: &Path, up_budget: usize) -> CliResult {
    let typed = load(file)?;
    let report = analyze_program(&typed.program, AnalysisConfig { up_budget }).map_err(MufError::from)?;
    let j = json::report_json(&file.display().to_string(), &report);
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&j).expect("report encodes"))?;
    Ok(if report.accepted() { OK } else { REJECTED })
}

fn read_inputs(spec: &str) -> Result<Vec<Json>, Failure> {
    let bad = |m: String| Failure(FAILURE, m);
    if Path::new(spec).is_file() {
        let text = fs::read_to_string(spec)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(format!("{spec}:{}: {e}", i + 1))))
            .collect()
    } else {
        match serde_json::from_str(spec) {
            Ok(Json::Array(xs)) => Ok(xs),
            Ok(_) => Err(bad("inline --input must be a JSON array".into())),
            Err(e) => Err(bad(format!("--input is neither a file nor a JSON array: {e}"))),
        }
    }
}

fn inputs(typed: &TypedProgram, exec: &ExecArgs) -> Result<Vec<Value>, Failure> {
    let ty = &typed.main_sig().input;
    let Some(spec) = &exec.input else {
        return Ok(vec![default_input(ty); exec.steps.unwrap_or(0)]);
    };
    let raw = read_inputs(spec)?;
    let steps = exec.steps.unwrap_or(raw.len());
    if raw.len() < steps {
        return Err(Failure(FAILURE, format!("{steps} steps requested but only {} inputs given", raw.len())));
    }
    raw[..steps]
        .iter()
        .enumerate()
        .map(|(i, j)| json::to_value(j, ty).map_err(|e| Failure(FAILURE, format!("input {}: {e}", i + 1))))
        .collect()
}

fn config(exec: &ExecArgs) -> RunConfig {
    RunConfig { particles: exec.particles as usize, seed: exec.seed, record_trace: false }
}

fn run(file: &Path, exec: &ExecArgs, raw: bool, format: Format) -> CliResult {
    let typed = load(file)?;
    let ins = inputs(&typed, exec)?;
    let mut runner = Runner::new(&typed, config(exec))?;
    let mut out = BufWriter::new(io::stdout().lock());
    for (i, input) in ins.into_iter().enumerate() {
        let v = runner.step(input).map_err(MufError::from)?;
        let j = json::from_value(&v, raw);
        match format {
            Format::Json => writeln!(out, "{j}")?,
            Format::Csv => {
                let mut cells = vec![(i + 1).to_string()];
                json::csv_cells(&j, &mut cells);
                writeln!(out, "{}", cells.join(","))?;
            }
        }
    }
    out.flush()?;
    Ok(OK)
}

/// Bounds used for the verdict lines printed after a trace.
const SUMMARY_M: usize = 16;
const SUMMARY_GRACE: usize = 16;

fn trace(file: &Path, exec: &ExecArgs, particle: usize, format: Format) -> CliResult {
    let typed = load(file)?;
    if particle >= exec.particles as usize {
        return Err(Failure(FAILURE, format!("--particle-index {particle} out of range")));
    }
    let ins = inputs(&typed, exec)?;
    let snaps = record_run(&typed, config(exec), ins, particle)?;
    let mut out = BufWriter::new(io::stdout().lock());
    if format == Format::Csv {
        writeln!(out, "{}", StepMetrics::CSV_HEADER)?;
    }
    for s in &snaps {
        let m = StepMetrics::of(s);
        match format {
            Format::Csv => writeln!(out, "{m}")?,
            Format::Json => writeln!(
                out,
                "{}",
                serde_json::json!({
                    "step": m.step,
                    "reachable": m.reachable,
                    "max_init_chain": m.max_init_chain,
                    "max_marg_chain": m.max_marg_chain,
                    "max_state_path": m.max_state_path,
                    "max_unconsumed_m": m.max_unconsumed_m,
                })
            )?,
        }
    }
    out.flush()?;
    if !snaps.is_empty() {
        let high = check_high_level(&snaps, SUMMARY_M, SUMMARY_M, SUMMARY_GRACE);
        let low = check_low_level(&snaps, SUMMARY_M);
        eprintln!(
            "steps={} max_reachable={} max_ratio={:.2} max_state_path={} unconsumed={} m_consumed={} unseparated={} bounded_k{}={}",
            high.horizon,
            low.max_reachable,
            low.max_ratio,
            high.max_state_path,
            high.unconsumed.len(),
            high.m_consumed,
            high.unseparated,
            SUMMARY_M,
            low.holds
        );
    }
    Ok(OK)
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

fn bench(corpus: Option<&Path>, up_budget: usize) -> CliResult {
    if let Some(dir) = corpus {
        if !dir.is_dir() {
            return Err(Failure(FAILURE, format!("corpus directory {} not found", dir.display())));
        }
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{:<22} {:>4} {:>4} {:>7} {:>7}  {}", "benchmark", "mc", "up", "exp mc", "exp up", "result")?;
    let mut mismatches = Vec::new();
    for b in BENCHMARKS.iter() {
        let source = match corpus {
            Some(dir) => fs::read_to_string(dir.join(b.file))
                .map_err(|e| Failure(FAILURE, format!("{}: {e}", dir.join(b.file).display())))?,
            None => b.source.to_string(),
        };
        let verdict = muf::parse(&source)
            .map_err(MufError::from)
            .and_then(|p| analyze_program(&p, AnalysisConfig { up_budget }).map_err(MufError::from));
        let (mc, up, note) = match &verdict {
            Ok(r) => (r.sites.iter().all(|s| s.mc), r.sites.iter().all(|s| s.up), String::new()),
            Err(e) => (false, false, format!(" ({e})")),
        };
        let ok = verdict.is_ok() && mc == b.mc && up == b.up;
        if !ok {
            mismatches.push(b.name);
        }
        writeln!(
            out,
            "{:<22} {:>4} {:>4} {:>7} {:>7}  {}{}",
            b.name,
            mark(mc),
            mark(up),
            mark(b.mc),
            mark(b.up),
            if ok { "match" } else { "MISMATCH" },
            note
        )?;
    }
    if mismatches.is_empty() {
        writeln!(out, "all {} benchmarks match", BENCHMARKS.len())?;
        Ok(OK)
    } else {
        writeln!(out, "mismatched: {}", mismatches.join(", "))?;
        Ok(REJECTED)
    }
}
