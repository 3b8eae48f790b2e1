//! Command-line front end: `check`, `derive`, `debug` and `oracle`.
//!
//! Every run is reproducible: randomness derives from `--rng-seed`, which
//! defaults to a fixed constant, never the clock. Exit codes are `0` when
//! all checks pass, `1` when a mathematical inconsistency was detected, and
//! `2` for usage or environment errors. `ADINVAR_ORDER_CAP` overrides the
//! default derivative-order cap.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{load_paths, load_program_file, CorpusError};
use crate::debugger::{
    apply_faults, debug_forward, fd_cross_check, load_fault_registry, FaultError, FdCheckError,
    FD_CHECK_REL_TOL,
};
use crate::engine::{derive, infer_shapes, order_cap, EngineError, ModeWord, SeedBundle};
use crate::invariant::{
    random_bundle, random_direction, run_suite_streaming, SuiteError, TolerancePolicy, Verdict,
};
use crate::oracle::{
    check_contraction_commutativity, contract, fd_tensor_diagnostic, tensor_bindings, FdConfig,
    OracleError, Slot,
};
use crate::scalar::ElementalTable;

/// Fixed default so bare invocations are reproducible.
pub const DEFAULT_RNG_SEED: u64 = 1729;

/// Residual threshold for `oracle`: derive vs contraction must agree to
/// `max(1e-4, 1e-4 |value|)` componentwise.
const ORACLE_RESIDUAL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Top-level invocation; one subcommand per workflow.
#[derive(Debug, Parser)]
#[command(name = "adinvar", version, about = "Build and validate derivative programs of arbitrary order over single assignment codes")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the differential-invariant suite over programs or corpus dirs
    Check(CheckArgs),
    /// Evaluate one derivative program selected by a mode word
    Derive(DeriveArgs),
    /// Localize faulty elemental derivatives by stepwise invariant checks
    Debug(DebugArgs),
    /// Cross-check derivative programs against the finite-difference tensor
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// `.sac` files or corpus directories
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Highest derivative order to check
    #[arg(long, default_value_t = 3)]
    pub max_order: usize,
    /// Random seed bundles per (program, order, class) case
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    #[arg(long, default_value_t = DEFAULT_RNG_SEED)]
    pub rng_seed: u64,
    /// Absolute residual tolerance (default 1e-10)
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Relative residual tolerance at order 1 (default 1e-10; grows 10x per order)
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// JSON fault registry to inject before checking
    #[arg(long)]
    pub faults: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report stream here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    /// `.sac` program file
    pub path: PathBuf,
    /// Mode word over {t, a} in application order, e.g. "ataat"
    #[arg(long)]
    pub word: String,
    /// "ones" for all-ones seeds at the box center, or a JSON seed file
    /// {"x": [...], "seeds": [[...], ...]}
    #[arg(long, conflicts_with = "random_seeds")]
    pub seeds: Option<String>,
    /// Draw the point and all seeds from --rng-seed
    #[arg(long)]
    pub random_seeds: bool,
    #[arg(long, default_value_t = DEFAULT_RNG_SEED)]
    pub rng_seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DebugArgs {
    /// `.sac` program file
    pub path: PathBuf,
    /// JSON fault registry to inject before debugging
    #[arg(long)]
    pub faults: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RNG_SEED)]
    pub rng_seed: u64,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// `.sac` program file
    pub path: PathBuf,
    /// Highest tensor order to estimate (at most 3)
    #[arg(long, default_value_t = 2)]
    pub max_order: usize,
    #[arg(long, default_value_t = DEFAULT_RNG_SEED)]
    pub rng_seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

impl From<FdCheckError> for CliError {
    fn from(e: FdCheckError) -> Self {
        match e {
            FdCheckError::Engine(e) => CliError::Engine(e),
            FdCheckError::Oracle(e) => CliError::Oracle(e),
        }
    }
}

const EXIT_OK: i32 = 0;
const EXIT_INCONSISTENT: i32 = 1;
const EXIT_USAGE: i32 = 2;

/// Entry point for the binary: parse `std::env::args`, run, return the code.
pub fn main() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    let mut stdout = std::io::stdout().lock();
    run(&args, &mut stdout)
}

/// Parses and runs one invocation, writing report output to `out`.
pub fn run(args: &[String], out: &mut dyn Write) -> i32 {
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cfg, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    match &cfg.command {
        Command::Check(args) => cmd_check(args, out),
        Command::Derive(args) => cmd_derive(args, out),
        Command::Debug(args) => cmd_debug(args, out),
        Command::Oracle(args) => cmd_oracle(args, out),
    }
}

fn table_with_faults(path: Option<&PathBuf>) -> Result<ElementalTable, CliError> {
    let table = ElementalTable::standard();
    match path {
        None => Ok(table),
        Some(p) => {
            let json = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?;
            let faults = load_fault_registry(&json)?;
            Ok(apply_faults(&table, &faults))
        }
    }
}

fn tolerance(abs: Option<f64>, rel: Option<f64>) -> Result<TolerancePolicy, CliError> {
    let mut tol = TolerancePolicy::default();
    if let Some(a) = abs {
        tol.abs_tol = a;
    }
    if let Some(r) = rel {
        tol.rel_tol = r;
    }
    if !tol.is_valid() {
        return Err(CliError::Usage(
            "tolerances must be positive finite numbers".to_string(),
        ));
    }
    Ok(tol)
}

/// Streams report lines to `--out` or the given stream as they are
/// produced, so long runs can be inspected mid-flight. Write errors are
/// latched and surfaced at the end (the suite callbacks cannot bail).
struct Sink<'a> {
    w: Box<dyn Write + 'a>,
    path: Option<PathBuf>,
    error: Option<std::io::Error>,
}

impl<'a> Sink<'a> {
    fn new(path: Option<&PathBuf>, fallback: &'a mut dyn Write) -> Result<Self, CliError> {
        let w: Box<dyn Write + 'a> = match path {
            Some(p) => {
                let file = std::fs::File::create(p).map_err(|source| CliError::Io {
                    path: p.clone(),
                    source,
                })?;
                Box::new(std::io::BufWriter::new(file))
            }
            None => Box::new(fallback),
        };
        Ok(Sink {
            w,
            path: path.cloned(),
            error: None,
        })
    }

    fn line(&mut self, line: &str) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.w, "{line}") {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> Result<(), CliError> {
        if self.error.is_none() {
            if let Err(e) = self.w.flush() {
                self.error = Some(e);
            }
        }
        match self.error {
            None => Ok(()),
            Some(source) => Err(match self.path {
                Some(path) => CliError::Io { path, source },
                None => CliError::Write(source),
            }),
        }
    }
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cap = order_cap();
    if args.max_order == 0 || args.max_order > cap {
        return Err(CliError::Usage(format!(
            "--max-order {} is outside 1..={cap} (set ADINVAR_ORDER_CAP to raise the cap)",
            args.max_order
        )));
    }
    let corpus = load_paths(&args.paths)?;
    let table = table_with_faults(args.faults.as_ref())?;
    let tol = tolerance(args.abs_tol, args.rel_tol)?;

    let mut sink = Sink::new(args.out.as_ref(), out)?;
    let mut failures = 0usize;
    let format = args.format;
    let reports = run_suite_streaming(
        &corpus,
        &table,
        args.max_order,
        args.trials,
        args.rng_seed,
        &tol,
        |r| {
            if !r.passed() {
                failures += 1;
            }
            match format {
                Format::Json => sink.line(&serde_json::to_string(r).unwrap()),
                Format::Text => sink.line(&format!(
                    "{} program={} nu={} prefix={:?} lhs={} rhs={} rel_err={:.3e} seed={}",
                    if r.passed() { "pass" } else { "FAIL" },
                    r.program,
                    r.nu,
                    r.prefix,
                    r.lhs,
                    r.rhs,
                    r.rel_err,
                    r.rng_seed
                )),
            }
        },
    )?;
    if format == Format::Text {
        sink.line(&format!(
            "checked {} cases over {} programs up to order {}: {} failed",
            reports.len(),
            corpus.len(),
            args.max_order,
            failures
        ));
    }
    sink.finish()?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_INCONSISTENT })
}

#[derive(Deserialize)]
struct SeedFile {
    x: Option<Vec<f64>>,
    seeds: Vec<Vec<f64>>,
}

fn load_seed_file(path: &str) -> Result<SeedFile, CliError> {
    let p = PathBuf::from(path);
    let json = std::fs::read_to_string(&p).map_err(|source| CliError::Io { path: p, source })?;
    serde_json::from_str(&json)
        .map_err(|e| CliError::Usage(format!("bad seed file {path}: {e}")))
}

fn cmd_derive(args: &DeriveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let entry = load_program_file(&args.path)?;
    let p = &entry.program;
    let word = ModeWord::parse(&args.word)
        .map_err(|e| CliError::Usage(format!("--word: {e}")))?;
    let (shapes, _) = infer_shapes(p, &word);

    let (x, seeds) = match (&args.seeds, args.random_seeds) {
        (Some(spec), false) if spec == "ones" => {
            (entry.safe_box.center(), SeedBundle::ones(&shapes))
        }
        (Some(path), false) => {
            let file = load_seed_file(path)?;
            let x = file.x.unwrap_or_else(|| entry.safe_box.center());
            (x, SeedBundle::new(file.seeds))
        }
        (None, true) => {
            let mut rng = ChaCha12Rng::seed_from_u64(args.rng_seed);
            let x = entry.safe_box.sample(&mut rng);
            let seeds = random_bundle(&mut rng, &shapes);
            (x, seeds)
        }
        (None, false) => {
            return Err(CliError::Usage(
                "provide --seeds <ones|file.json> or --random-seeds".to_string(),
            ))
        }
        (Some(_), true) => unreachable!("clap conflicts_with"),
    };

    let table = ElementalTable::standard();
    let res = derive(p, &table, &word, &x, &seeds)?;

    let mut sink = Sink::new(args.out.as_ref(), out)?;
    match args.format {
        Format::Json => {
            let obj = serde_json::json!({
                "program": p.name,
                "word": word.to_string(),
                "name": word.outside_in_name(),
                "x": x,
                "shape": res.shape.to_string(),
                "value": res.value,
                "primal_y": res.primal_y,
                "intermediate_v": res.intermediate_v,
            });
            sink.line(&serde_json::to_string(&obj).unwrap());
        }
        Format::Text => {
            sink.line(&format!("program: {} (n={}, m={})", p.name, p.n_inputs(), p.n_outputs()));
            sink.line(&format!("word: {} ({})", word, word.outside_in_name()));
            sink.line(&format!("x: {}", fmt_vec(&x)));
            sink.line(&format!("shape: {}", res.shape));
            sink.line(&format!("value: {}", fmt_vec(&res.value)));
            sink.line(&format!("primal y: {}", fmt_vec(&res.primal_y)));
        }
    }
    sink.finish()?;
    Ok(EXIT_OK)
}

fn fmt_vec(v: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{x}");
    }
    s.push(']');
    s
}

fn cmd_debug(args: &DebugArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let entry = load_program_file(&args.path)?;
    let p = &entry.program;
    let table = table_with_faults(args.faults.as_ref())?;
    let tol = tolerance(args.abs_tol, args.rel_tol)?;

    let mut rng = ChaCha12Rng::seed_from_u64(args.rng_seed);
    let x = entry.safe_box.sample(&mut rng);
    let xdot = random_direction(&mut rng, p.n_inputs());

    let outcome = debug_forward(p, &table, &x, &xdot, args.rng_seed, &tol)?;
    let fd = fd_cross_check(p, &table, &x, &xdot, &FdConfig::default(), FD_CHECK_REL_TOL)?;
    let invariants_clean = outcome.first_failure.is_none();
    let shared_suspected = invariants_clean && fd.verdict == Verdict::Fail;

    let mut sink = Sink::new(args.out.as_ref(), out)?;
    match args.format {
        Format::Json => {
            for s in &outcome.steps {
                sink.line(&serde_json::to_string(s).unwrap());
            }
            let obj = serde_json::json!({
                "program": p.name,
                "first_failure": outcome.first_failure,
                "fd_verdict": fd.verdict,
                "fd_rel_err": fd.rel_err,
                "shared_conceptual_error_suspected": shared_suspected,
            });
            sink.line(&serde_json::to_string(&obj).unwrap());
        }
        Format::Text => {
            sink.line(&format!("program: {} at x={}", p.name, fmt_vec(&x)));
            sink.line("step  target      elemental  verdict       rel_err");
            for s in &outcome.steps {
                sink.line(&format!(
                    "{:>4}  {:<10}  {:<9}  {:<12}  {:.3e}",
                    s.step,
                    s.target,
                    s.elemental.keyword(),
                    format!("{:?}", s.verdict).to_lowercase(),
                    s.rel_err
                ));
            }
            match outcome.first_failure {
                Some(s) => sink.line(&format!(
                    "first failure: step {s} ({} = {})",
                    outcome.steps[s].target,
                    outcome.steps[s].elemental.keyword()
                )),
                None => sink.line("all steps consistent"),
            }
            sink.line(&format!(
                "finite-difference cross-check: {} (rel_err {:.3e})",
                format!("{:?}", fd.verdict).to_lowercase(),
                fd.rel_err
            ));
            if shared_suspected {
                sink.line("shared conceptual error suspected: every invariant passed but finite differences disagree");
            }
        }
    }
    sink.finish()?;

    let failed = outcome.first_failure.is_some() || fd.verdict == Verdict::Fail;
    Ok(if failed { EXIT_INCONSISTENT } else { EXIT_OK })
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let entry = load_program_file(&args.path)?;
    let p = &entry.program;
    let table = ElementalTable::standard();
    let cfg = FdConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(args.rng_seed);
    let x = entry.safe_box.sample(&mut rng);

    let mut sink = Sink::new(args.out.as_ref(), out)?;
    let mut failed = false;
    for nu in 1..=args.max_order {
        let (tensor, asym) = fd_tensor_diagnostic(p, &x, nu, &cfg)?;

        // Every order-nu word must match its contraction of the tensor.
        let mut worst = 0.0f64;
        let mut worst_word = String::new();
        for word in ModeWord::enumerate(nu) {
            let (shapes, _) = infer_shapes(p, &word);
            let seeds = random_bundle(&mut rng, &shapes);
            let res = derive(p, &table, &word, &x, &seeds)?;
            let (bound, _) = tensor_bindings(&word);
            let bindings: Vec<(Slot, Vec<f64>)> =
                bound.into_iter().zip(seeds.seeds.iter().cloned()).collect();
            let expect = contract(&tensor, &bindings)?;
            for (a, b) in expect.iter().zip(&res.value) {
                let err = (a - b).abs();
                if err > ORACLE_RESIDUAL_TOL.max(ORACLE_RESIDUAL_TOL * b.abs()) {
                    failed = true;
                }
                if err > worst {
                    worst = err;
                    worst_word = word.to_string();
                }
            }
        }

        // Reordering a full contraction only reshuffles rounding.
        let (bound, free) = tensor_bindings(&ModeWord::enumerate(nu)[0]);
        let mut bindings: Vec<(Slot, Vec<f64>)> = bound
            .into_iter()
            .map(|s| {
                let dim = match s {
                    Slot::K => p.n_outputs(),
                    Slot::J(_) => p.n_inputs(),
                };
                (s, random_direction(&mut rng, dim))
            })
            .collect();
        let free_dim = match free {
            Slot::K => p.n_outputs(),
            Slot::J(_) => p.n_inputs(),
        };
        bindings.push((free, random_direction(&mut rng, free_dim)));
        let reversed: Vec<usize> = (0..bindings.len()).rev().collect();
        let commutativity = check_contraction_commutativity(&tensor, &bindings, &reversed)?;

        match args.format {
            Format::Json => {
                let obj = serde_json::json!({
                    "program": p.name,
                    "nu": nu,
                    "x": x,
                    "entries": if tensor.len() <= 64 {
                        serde_json::json!(tensor.entries)
                    } else {
                        serde_json::json!({"len": tensor.len(), "frobenius": frob(&tensor.entries)})
                    },
                    "presym_asymmetry": asym,
                    "max_derive_residual": worst,
                    "worst_word": worst_word,
                    "commutativity_residual": commutativity,
                });
                sink.line(&serde_json::to_string(&obj).unwrap());
            }
            Format::Text => {
                sink.line(&format!("order {nu} tensor at x={} :", fmt_vec(&x)));
                if tensor.len() <= 64 {
                    sink.line(&format!("  entries: {}", fmt_vec(&tensor.entries)));
                } else {
                    sink.line(&format!(
                        "  entries: {} values, frobenius {:.6e}",
                        tensor.len(),
                        frob(&tensor.entries)
                    ));
                }
                sink.line(&format!("  symmetry residual: {asym:.3e}"));
                sink.line(&format!(
                    "  derive-vs-contraction residual: {worst:.3e} (worst word {worst_word:?}, {} words)",
                    1usize << nu
                ));
                sink.line(&format!("  commutativity residual: {commutativity:.3e}"));
            }
        }
    }
    sink.finish()?;
    Ok(if failed { EXIT_INCONSISTENT } else { EXIT_OK })
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to_string(args: &[&str]) -> (i32, String) {
        let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let mut buf = Vec::new();
        let code = run(&argv, &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    fn corpus_path(name: &str) -> String {
        format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    #[test]
    fn derive_ttt_on_cube_prints_six() {
        let (code, out) = run_to_string(&[
            "adinvar",
            "derive",
            &corpus_path("cube.sac"),
            "--word",
            "ttt",
            "--seeds",
            "ones",
        ]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("value: [6]"), "{out}");
        assert!(out.contains("tangent of tangent of tangent"), "{out}");
    }

    #[test]
    fn derive_requires_a_seed_source() {
        let (code, _) = run_to_string(&[
            "adinvar",
            "derive",
            &corpus_path("cube.sac"),
            "--word",
            "t",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn derive_prints_the_outside_in_name_of_ataat() {
        let (code, out) = run_to_string(&[
            "adinvar",
            "derive",
            &corpus_path("five_in.sac"),
            "--word",
            "ataat",
            "--random-seeds",
        ]);
        assert_eq!(code, 0, "{out}");
        assert!(
            out.contains("tangent of adjoint of adjoint of tangent of adjoint"),
            "{out}"
        );
    }

    #[test]
    fn check_rejects_orders_beyond_the_cap() {
        let (code, _) = run_to_string(&[
            "adinvar",
            "check",
            &corpus_path("identity.sac"),
            "--max-order",
            "9",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn bad_word_is_a_usage_error() {
        let (code, _) = run_to_string(&[
            "adinvar",
            "derive",
            &corpus_path("cube.sac"),
            "--word",
            "txa",
            "--seeds",
            "ones",
        ]);
        assert_eq!(code, 2);
    }
}
