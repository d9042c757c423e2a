//! `ctxkit` command-line front end.
//!
//! Exit codes: 0 success, 1 domain failure (a check that came out negative,
//! an invalid wiring, a suite with failures), 2 usage error (bad flags,
//! unreadable or malformed files).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ctxkit::io::{
    self, behavior_to_string, behavior_to_value, load_behavior, load_scenario, load_wiring, quantifier_result_to_value,
    report_to_string, IoError, Report,
};
use ctxkit::quantifiers::{check_noncontextual, mbqc_failure_bound, nu_linear_distance, EntropicOptions, QuantValue};
use ctxkit::rational::{format_rational, parse_rational, Rational};
use ctxkit::scenario::{vertex_cap_from_env, VERTEX_CAP_ENV};
use ctxkit::wirings::{run_monotonicity_suite, run_preservation_suite, OpClass};
use ctxkit::{
    apply_ncwiring, controlled_choice, product_box, quantify, validate_scenario, validate_wiring, Behavior, Diagnostic,
    Measure, NcWiring, NumericMode, QuantifierOptions, Scenario, WiringError,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ctxkit", version, about = "Contextuality quantifiers and non-contextual wirings")]
struct Cli {
    /// Emit machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file for structural problems.
    ScenarioValidate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Check that overlapping contexts agree on their marginals.
    BehaviorCheckNd {
        #[arg(long)]
        behavior: PathBuf,
    },
    /// Decide non-contextuality: a global section or a Farkas certificate.
    BehaviorCheckNc {
        #[arg(long)]
        behavior: PathBuf,
    },
    /// Evaluate a contextuality quantifier.
    Quantify(QuantifyArgs),
    /// Apply a wiring to a behavior.
    WireApply {
        #[arg(long)]
        wiring: PathBuf,
        #[arg(long)]
        behavior: PathBuf,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Validate a wiring against its target scenario.
    WireValidate {
        #[arg(long)]
        wiring: PathBuf,
        /// Target scenario, when the wiring file does not name one.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Product box: one context of each input per context.
    BoxProduct(PairArgs),
    /// Controlled choice: the contexts of both inputs side by side.
    BoxAnd(PairArgs),
    /// Checks that random wirings keep ND inputs ND and NC inputs NC.
    SuitePreservation {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
        trials: u64,
        #[arg(long, required = true)]
        seed: u64,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Monotonicity suite for one quantifier over random wirings.
    SuiteMonotonicity {
        #[arg(long)]
        measure: Measure,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
        trials: u64,
        #[arg(long, required = true)]
        seed: u64,
        /// full or post-only
        #[arg(long, default_value = "full")]
        opclass: OpClass,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Lower bound (1 − CF)·ν on the failure probability of an MBQC computation.
    MbqcBound {
        #[arg(long)]
        cf: String,
        #[arg(long)]
        nu: String,
    },
    /// Average distance of a Boolean function to the closest linear function.
    Nu {
        /// Truth table as a 0/1 string, input 0 first (length a power of two).
        #[arg(long)]
        truth_table: String,
    },
}

#[derive(Args)]
struct QuantifyArgs {
    /// cf, du, dmax, eu, emax, or all
    #[arg(long)]
    measure: String,
    #[arg(long)]
    behavior: PathBuf,
    /// Gap target for the entropic measures.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args)]
struct OutputArg {
    /// Write the result here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

/// Unreadable or malformed files are usage errors; files that parse but
/// violate an invariant are domain failures.
fn io_failure(e: IoError) -> Failure {
    match e {
        IoError::Invariant { .. } => domain(e),
        _ => usage(e),
    }
}

/// What a command prints and how it exits.
struct Outcome {
    ok: bool,
    human: String,
    json: Value,
}

impl Outcome {
    fn new(ok: bool, human: impl Into<String>, json: Value) -> Self {
        Self { ok, human: human.into(), json }
    }
}

/// Joins two-word forms such as `behavior check-nd` into `behavior-check-nd`.
fn normalize_args(mut args: Vec<String>) -> Vec<String> {
    const GROUPS: [&str; 6] = ["scenario", "behavior", "wire", "box", "suite", "mbqc"];
    if args.len() > 2 && GROUPS.contains(&args[1].as_str()) && !args[2].starts_with('-') {
        let verb = args.remove(2);
        args[1] = format!("{}-{verb}", args[1]);
    }
    args
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(normalize_args(std::env::args().collect())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command, cli.json) {
        Ok(outcome) => {
            let text = if cli.json {
                serde_json::to_string_pretty(&outcome.json).expect("json values serialize")
            } else {
                outcome.human.trim_end().to_string()
            };
            // a closed pipe is not worth a panic
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::from(if outcome.ok { 0 } else { 1 })
        }
        Err(f) => {
            if cli.json {
                let _ = writeln!(std::io::stdout(), "{}", json!({ "error": format!("{:#}", f.error), "exitCode": f.code }));
            }
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn behavior(path: &Path) -> Result<Behavior, Failure> {
    load_behavior(path).map_err(io_failure)
}

fn scenario(path: &Path) -> Result<Arc<Scenario>, Failure> {
    load_scenario(path).map(Arc::new).map_err(io_failure)
}

fn diagnostics_json(diags: &[Diagnostic]) -> Value {
    serde_json::to_value(diags).expect("diagnostics serialize")
}

fn diagnostics_text(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("{d}\n")).collect()
}

/// Writes a file when `--output` is set, otherwise returns the text as the outcome.
fn emit(out: &OutputArg, text: String, value: Value, ok: bool) -> Result<Outcome, Failure> {
    match &out.output {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display())).map_err(usage)?;
            Ok(Outcome::new(ok, format!("wrote {}", path.display()), json!({ "output": path, "ok": ok })))
        }
        None => Ok(Outcome::new(ok, text, value)),
    }
}

/// Suite reports go to standard output as JSON only with `--json`; otherwise a summary is printed.
fn run(command: &Command, json_output: bool) -> Result<Outcome, Failure> {
    match command {
        Command::ScenarioValidate { scenario } => {
            let text = fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display())).map_err(usage)?;
            let spec = io::parse_scenario_spec(&text).map_err(io_failure)?;
            let diags = validate_scenario(&spec);
            let ok = !diags.iter().any(Diagnostic::is_error);
            let human = if diags.is_empty() { "scenario ok".to_string() } else { diagnostics_text(&diags) };
            Ok(Outcome::new(ok, human, json!({ "valid": ok, "diagnostics": diagnostics_json(&diags) })))
        }
        Command::BehaviorCheckNd { behavior: path } => {
            let b = behavior(path)?;
            let report = b.check_nondisturbance(NumericMode::ExactRational);
            Ok(match report.violation {
                None => Outcome::new(true, "non-disturbing", json!({ "nonDisturbing": true })),
                Some(v) => {
                    let s = b.scenario();
                    let (first, second) = (s.context_names(v.first).join(","), s.context_names(v.second).join(","));
                    let discrepancy = format_rational(&v.discrepancy);
                    Outcome::new(
                        false,
                        format!("disturbing: contexts {{{first}}} and {{{second}}} disagree on their overlap (discrepancy {discrepancy})"),
                        json!({
                            "nonDisturbing": false,
                            "contexts": [s.context_names(v.first), s.context_names(v.second)],
                            "discrepancy": discrepancy,
                        }),
                    )
                }
            })
        }
        Command::BehaviorCheckNc { behavior: path } => {
            let b = behavior(path)?;
            let check = check_noncontextual(&b).map_err(domain)?;
            let s = b.scenario();
            if let Some(model) = check.model {
                let section: Vec<Value> = model
                    .weights
                    .iter()
                    .map(|(g, w)| json!({ "assignment": g.labels(s), "weight": format_rational(w) }))
                    .collect();
                let mut human = String::from("non-contextual; global section:\n");
                for (g, w) in &model.weights {
                    let labels: Vec<String> = g.labels(s).into_iter().map(|(m, o)| format!("{m}={o}")).collect();
                    human.push_str(&format!("  {}  {}\n", format_rational(w), labels.join(" ")));
                }
                Ok(Outcome::new(true, human, json!({ "noncontextual": true, "globalSection": section })))
            } else {
                let y: Vec<String> = check.farkas.unwrap_or_default().iter().map(format_rational).collect();
                let human = format!("contextual; Farkas certificate (one multiplier per table entry):\n  {}", y.join(" "));
                Ok(Outcome::new(false, human, json!({ "noncontextual": false, "farkas": y })))
            }
        }
        Command::Quantify(args) => quantify_command(args),
        Command::WireApply { wiring, behavior: path, out } => {
            let b = behavior(path)?;
            let w = load_wiring(wiring, Some(b.scenario_arc())).map_err(io_failure)?;
            let w = NcWiring::new(w.target, w.pre, w.post).map_err(domain)?;
            let result = apply_ncwiring(&w, &b).map_err(domain)?;
            emit(out, behavior_to_string(&result), behavior_to_value(&result), true)
        }
        Command::WireValidate { wiring, scenario: target } => {
            let target = target.as_deref().map(scenario).transpose()?;
            let w = load_wiring(wiring, target.as_ref()).map_err(io_failure)?;
            let diags = validate_wiring(&w);
            let ok = !diags.iter().any(Diagnostic::is_error);
            let human = if diags.is_empty() { "wiring ok".to_string() } else { diagnostics_text(&diags) };
            Ok(Outcome::new(ok, human, json!({ "valid": ok, "diagnostics": diagnostics_json(&diags) })))
        }
        Command::BoxProduct(args) | Command::BoxAnd(args) => {
            let (b1, b2) = (behavior(&args.left)?, behavior(&args.right)?);
            let result = if matches!(command, Command::BoxProduct(_)) { product_box(&b1, &b2) } else { controlled_choice(&b1, &b2) }
                .map_err(domain)?;
            emit(&args.out, behavior_to_string(&result), behavior_to_value(&result), true)
        }
        Command::SuitePreservation { scenario: path, trials, seed, out } => {
            let s = scenario(path)?;
            let r = run_preservation_suite(&s, *trials as usize, *seed).map_err(domain)?;
            let ok = r.all_passed();
            let report = Report::Preservation(r.clone());
            if out.output.is_none() && !json_output {
                let mut human = format!(
                    "preservation: {} trials, seed {}: ND {}/{}, NC {}/{}, invalid wirings {}",
                    r.trials, r.seed, r.nd_passed, r.trials, r.nc_passed, r.trials, r.invalid_wirings
                );
                if let Some(c) = &r.counterexample {
                    human.push_str(&format!("\ncounterexample: trial {} (seed {}), {}: {}", c.trial, c.seed, c.check, c.message));
                }
                return Ok(Outcome::new(ok, human, Value::Null));
            }
            emit(out, report_to_string(&report), serde_json::to_value(&report).expect("reports serialize"), ok)
        }
        Command::SuiteMonotonicity { measure, scenario: path, trials, seed, opclass, out } => {
            let s = scenario(path)?;
            let r = run_monotonicity_suite(*measure, &s, *trials as usize, *seed, *opclass).map_err(|e| match e {
                WiringError::Refused(_) => usage(e),
                other => domain(other),
            })?;
            let ok = r.all_passed();
            let report = Report::Monotonicity(r.clone());
            if out.output.is_none() && !json_output {
                let mut human = format!(
                    "monotonicity of {} under {} wirings: {} trials, seed {}: {} passed, {} violations, {} errors (tolerance {:e}, max excess {:e})",
                    r.measure.symbol(),
                    r.opclass,
                    r.trials,
                    r.seed,
                    r.passed,
                    r.violations,
                    r.errors,
                    r.tolerance,
                    r.max_excess
                );
                if let Some(c) = &r.counterexample {
                    human.push_str(&format!("\ncounterexample: trial {} (seed {}), {}: {}", c.trial, c.seed, c.check, c.message));
                }
                return Ok(Outcome::new(ok, human, Value::Null));
            }
            emit(out, report_to_string(&report), serde_json::to_value(&report).expect("reports serialize"), ok)
        }
        Command::MbqcBound { cf, nu } => {
            let cf = rational_arg("cf", cf)?;
            let nu = rational_arg("nu", nu)?;
            let bound = mbqc_failure_bound(&cf, &nu).map_err(usage)?;
            let text = format_rational(&bound);
            Ok(Outcome::new(true, format!("p_F >= {text}"), json!({ "bound": text, "cf": format_rational(&cf), "nu": format_rational(&nu) })))
        }
        Command::Nu { truth_table } => {
            let bits = truth_table
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(usage(anyhow::anyhow!("truth table may only contain 0 and 1, found `{other}`"))),
                })
                .collect::<Result<Vec<bool>, _>>()?;
            let nu = nu_linear_distance(&bits).map_err(usage)?;
            let text = format_rational(&nu);
            Ok(Outcome::new(true, format!("nu = {text}"), json!({ "nu": text })))
        }
    }
}

fn rational_arg(name: &str, text: &str) -> Result<Rational, Failure> {
    parse_rational(text).map_err(|e| usage(anyhow::anyhow!("--{name}: {e}")))
}

fn quantify_command(args: &QuantifyArgs) -> Result<Outcome, Failure> {
    let measures: Vec<Measure> = if args.measure.eq_ignore_ascii_case("all") {
        Measure::ALL.to_vec()
    } else {
        vec![args.measure.parse::<Measure>().map_err(|e| usage(anyhow::anyhow!(e)))?]
    };
    let b = behavior(&args.behavior)?;
    let mut options = QuantifierOptions { vertex_cap: vertex_cap_from_env(), entropic: EntropicOptions::default() };
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(usage(anyhow::anyhow!("--tol must lie in (0, 1)")));
        }
        options.entropic.tol = tol;
    }
    if let Some(n) = args.max_iterations {
        options.entropic.max_iterations = n;
    }
    let mut human = String::new();
    let mut results = Vec::new();
    for m in measures {
        let r = quantify(m, &b, &options)
            .with_context(|| format!("{} (vertex cap via {VERTEX_CAP_ENV})", m.symbol()))
            .map_err(domain)?;
        match &r.value {
            QuantValue::Exact(v) => human.push_str(&format!("{} = {}\n", m.symbol(), format_rational(v))),
            QuantValue::Approx(x) => {
                human.push_str(&format!("{} = {x:.9} bits", m.symbol()));
                if let (Some(gap), Some(lower)) = (r.meta.gap, r.meta.lower_bound) {
                    human.push_str(&format!(" (certified >= {lower:.9}, gap {gap:.1e})"));
                }
                human.push('\n');
            }
        }
        results.push(quantifier_result_to_value(&r, b.scenario()));
    }
    let json = if results.len() == 1 { results.pop().expect("one result") } else { Value::Array(results) };
    Ok(Outcome::new(true, human, json))
}
