use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use effcalc::dynstate::{DynOutcome, DynProgram};
use effcalc::eval::{Outcome, DEFAULT_FUEL};
use effcalc::harness::{self, FuzzReport, Verdict};
use effcalc::infer;
use effcalc::parse::SourceProgram;
use effcalc::pretty;
use effcalc::syntax::{Mode, Program};
use effcalc::translate::TranslationMode;
use effcalc::{dynstate, eval, fixtures, parse, translate};

#[derive(Parser)]
#[command(
    name = "effcalc",
    about = "Effect-handler calculus: type checker, evaluator, translator, and theorem harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Local,
    Coarse,
    None,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Local => Mode::Local,
            ModeArg::Coarse => Mode::Coarse,
            ModeArg::None => Mode::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TransModeArg {
    Ground,
    Coarse,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    Safety,
    GlobalSim,
    DynSim,
    TypePreservation,
    Divergence,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Type-check a program and print the inferred schemes.
    Check {
        file: PathBuf,
        /// Override the mode header.
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        json: bool,
    },
    /// Type-check and evaluate a program; print the terminal form.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate and print the numbered small-step trace.
    Trace {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Maximum number of trace lines to print.
        #[arg(long, default_value_t = 1000)]
        limit: usize,
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        json: bool,
    },
    /// Translate a dynamic-state program into the handler calculus.
    Translate {
        file: PathBuf,
        /// ground: annotated target (requires a ground signature);
        /// coarse: annotation-free target.
        #[arg(long, value_enum, default_value_t = TransModeArg::Ground)]
        mode: TransModeArg,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a fuzz campaign for one of the theorems.
    Fuzz {
        #[arg(long, value_enum, default_value_t = TheoremArg::All)]
        theorem: TheoremArg,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// First seed, for replaying a reported witness.
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 300)]
        fuel: u64,
        #[arg(long)]
        json: bool,
    },
    /// Print a named program from the built-in collection.
    Fixture { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_program(file: &PathBuf, mode: Option<ModeArg>) -> Result<SourceProgram, String> {
    let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let mut program = parse::parse_source(&text).map_err(|e| format!("{}: {e}", file.display()))?;
    if let (Some(m), SourceProgram::Handler(p)) = (mode, &mut program) {
        p.mode = m.into();
        if p.mode == Mode::Local {
            p.signature = None;
        }
    }
    Ok(program)
}

fn dispatch(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Check { file, mode, json } => check_cmd(&file, mode, json),
        Command::Run {
            file,
            fuel,
            mode,
            json,
        } => run_cmd(&file, fuel, mode, json),
        Command::Trace {
            file,
            fuel,
            limit,
            mode,
            json,
        } => trace_cmd(&file, fuel, limit, mode, json),
        Command::Translate { file, mode, out } => translate_cmd(&file, mode, out),
        Command::Fuzz {
            theorem,
            seeds,
            start,
            depth,
            fuel,
            json,
        } => fuzz_cmd(theorem, start..start + seeds, depth, fuel, json),
        Command::Fixture { name } => fixture_cmd(&name),
    }
}

/// Fresh variables minted by elaboration look like `base'N`; they are
/// hidden from the per-binding listing.
fn is_generated(name: &str) -> bool {
    match name.rsplit_once('\'') {
        Some((_, digits)) => !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

fn scheme_json(s: &effcalc::types::Scheme) -> serde_json::Value {
    json!({
        "quantifiers": infer::canonical_scheme(s).vars.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "type": infer::render_scheme(s),
    })
}

fn check_cmd(file: &PathBuf, mode: Option<ModeArg>, as_json: bool) -> Result<ExitCode, String> {
    match read_program(file, mode)? {
        SourceProgram::Handler(p) => {
            let typed = infer::check_program(&p).map_err(|e| e.to_string())?;
            if as_json {
                let out = json!({
                    "mode": p.mode.to_string(),
                    "bindings": typed.bindings.iter().filter(|(x, _)| !is_generated(x.as_str())).map(|(x, s)| {
                        json!({"name": x.to_string(), "scheme": scheme_json(s)})
                    }).collect::<Vec<_>>(),
                    "type": infer::render_typed(&typed.scheme, &typed.effects),
                });
                println!("{}", serde_json::to_string_pretty(&out).unwrap());
            } else {
                for (x, s) in &typed.bindings {
                    if !is_generated(x.as_str()) {
                        println!("val {x} : {}", infer::render_scheme(s));
                    }
                }
                println!(
                    "val it : {}",
                    infer::render_typed(&typed.scheme, &typed.effects)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        SourceProgram::Dyn(p) => {
            let typed = infer::check_dyn_program(&p).map_err(|e| e.to_string())?;
            if as_json {
                let out = json!({
                    "params": p.params.iter().map(|(k, v)| json!({"name": k.to_string(), "type": v.to_string()})).collect::<Vec<_>>(),
                    "bindings": typed.bindings.iter().filter(|(x, _)| !is_generated(x.as_str())).map(|(x, s)| {
                        json!({"name": x.to_string(), "scheme": scheme_json(s)})
                    }).collect::<Vec<_>>(),
                    "type": infer::render_scheme(&typed.scheme),
                });
                println!("{}", serde_json::to_string_pretty(&out).unwrap());
            } else {
                for (x, s) in &typed.bindings {
                    if !is_generated(x.as_str()) {
                        println!("val {x} : {}", infer::render_scheme(s));
                    }
                }
                println!("val it : {}", infer::render_scheme(&typed.scheme));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_cmd(file: &PathBuf, fuel: u64, mode: Option<ModeArg>, as_json: bool) -> Result<ExitCode, String> {
    match read_program(file, mode)? {
        SourceProgram::Handler(p) => {
            infer::check_program(&p).map_err(|e| e.to_string())?;
            let trace = eval::run(&p.body, fuel);
            let (line, ok, tag) = match &trace.outcome {
                Outcome::Value(v) => (format!("return {}", pretty::pretty_value(v)), true, "value"),
                Outcome::Operation { op, arg, var, cont } => (
                    format!(
                        "unhandled operation: {}",
                        pretty::pretty_comp(&effcalc::syntax::Computation::OpCall(
                            op.clone(),
                            arg.clone(),
                            var.clone(),
                            Box::new(cont.clone())
                        ))
                    ),
                    true,
                    "operation",
                ),
                Outcome::Stuck(msg) => (format!("stuck: {msg}"), false, "stuck"),
                Outcome::FuelExhausted(c) => (
                    format!(
                        "fuel exhausted after {} steps at: {}",
                        trace.fuel_used,
                        pretty::pretty_comp(c)
                    ),
                    false,
                    "fuel-exhausted",
                ),
            };
            if as_json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "outcome": tag,
                        "result": line,
                        "steps": trace.fuel_used,
                    }))
                    .unwrap()
                );
            } else {
                println!("{line}");
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        SourceProgram::Dyn(p) => {
            infer::check_dyn_program(&p).map_err(|e| e.to_string())?;
            let trace = dynstate::dyn_run(&p.body, fuel);
            let (line, ok, tag) = match &trace.outcome {
                DynOutcome::Value(v) => (
                    format!("return {}", {
                        let c = dynstate::DynComputation::Return(v.clone());
                        pretty::pretty_dyn(&c).trim_start_matches("return ").to_string()
                    }),
                    true,
                    "value",
                ),
                DynOutcome::UnboundParameter(p) => {
                    (format!("unbound parameter: ${p}"), false, "unbound-parameter")
                }
                DynOutcome::Stuck(msg) => (format!("stuck: {msg}"), false, "stuck"),
                DynOutcome::FuelExhausted(c) => (
                    format!(
                        "fuel exhausted after {} steps at: {}",
                        trace.fuel_used,
                        pretty::pretty_dyn(c)
                    ),
                    false,
                    "fuel-exhausted",
                ),
            };
            if as_json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "outcome": tag,
                        "result": line,
                        "steps": trace.fuel_used,
                    }))
                    .unwrap()
                );
            } else {
                println!("{line}");
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn trace_cmd(
    file: &PathBuf,
    fuel: u64,
    limit: usize,
    mode: Option<ModeArg>,
    as_json: bool,
) -> Result<ExitCode, String> {
    match read_program(file, mode)? {
        SourceProgram::Handler(p) => {
            infer::check_program(&p).map_err(|e| e.to_string())?;
            let trace = eval::run(&p.body, fuel);
            let lines: Vec<String> = trace
                .steps
                .iter()
                .take(limit)
                .enumerate()
                .map(|(i, c)| format!("{i}: {}", pretty::pretty_comp(c)))
                .collect();
            let outcome = match &trace.outcome {
                Outcome::Value(v) => format!("value {}", pretty::pretty_value(v)),
                Outcome::Operation { op, .. } => format!("unhandled operation {op}"),
                Outcome::Stuck(msg) => format!("stuck: {msg}"),
                Outcome::FuelExhausted(_) => "fuel exhausted".to_string(),
            };
            if as_json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "steps": lines,
                        "elided": trace.steps.len().saturating_sub(limit) + trace.elided,
                        "outcome": outcome,
                    }))
                    .unwrap()
                );
            } else {
                for line in &lines {
                    println!("{line}");
                }
                let hidden = trace.steps.len().saturating_sub(limit) + trace.elided;
                if hidden > 0 {
                    println!("... {hidden} states elided ...");
                }
                println!("outcome: {outcome}");
            }
            Ok(ExitCode::SUCCESS)
        }
        SourceProgram::Dyn(p) => {
            infer::check_dyn_program(&p).map_err(|e| e.to_string())?;
            let trace = dynstate::dyn_run(&p.body, fuel);
            let lines: Vec<String> = trace
                .steps
                .iter()
                .take(limit)
                .enumerate()
                .map(|(i, c)| format!("{i}: {}", pretty::pretty_dyn(c)))
                .collect();
            let outcome = match &trace.outcome {
                DynOutcome::Value(v) => {
                    let c = dynstate::DynComputation::Return(v.clone());
                    format!("value {}", pretty::pretty_dyn(&c))
                }
                DynOutcome::UnboundParameter(p) => format!("unbound parameter ${p}"),
                DynOutcome::Stuck(msg) => format!("stuck: {msg}"),
                DynOutcome::FuelExhausted(_) => "fuel exhausted".to_string(),
            };
            if as_json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "steps": lines,
                        "elided": trace.steps.len().saturating_sub(limit) + trace.elided,
                        "outcome": outcome,
                    }))
                    .unwrap()
                );
            } else {
                for line in &lines {
                    println!("{line}");
                }
                println!("outcome: {outcome}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn translate_cmd(
    file: &PathBuf,
    mode: TransModeArg,
    out: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let program = read_program(file, None)?;
    let dyn_program: DynProgram = match program {
        SourceProgram::Dyn(p) => p,
        SourceProgram::Handler(_) => {
            return Err("translate expects a dynamic-state program (params header)".to_string())
        }
    };
    infer::check_dyn_program(&dyn_program).map_err(|e| e.to_string())?;
    let tmode = match mode {
        TransModeArg::Ground => TranslationMode::GroundAnnotated,
        TransModeArg::Coarse => TranslationMode::Coarse,
    };
    let translated: Program =
        translate::translate_program(&dyn_program, tmode).map_err(|e| e.to_string())?;
    let text = pretty::pretty_program(&translated);
    match out {
        Some(path) => {
            fs::write(&path, &text).map_err(|e| format!("{}: {e}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verdict_line(v: &Verdict, seed: u64) -> String {
    if v.passed {
        format!("seed {seed}: {} ok", v.theorem)
    } else {
        let w = v.witness.as_ref().unwrap();
        format!(
            "seed {seed}: {} FAILED at step {}: {} | {}",
            v.theorem, w.step, w.detail, w.term
        )
    }
}

fn report(reports: Vec<FuzzReport>, as_json: bool) -> Result<ExitCode, String> {
    let mut all_ok = true;
    if as_json {
        let mut out = Vec::new();
        for r in &reports {
            all_ok &= r.failed() == 0;
            out.push(json!({
                "theorem": r.theorem.to_string(),
                "passed": r.passed(),
                "failed": r.failed(),
                "witnesses": r.verdicts.iter().filter(|v| !v.passed).map(|v| {
                    let w = v.witness.as_ref().unwrap();
                    json!({"seed": w.seed, "step": w.step, "detail": w.detail, "term": w.term})
                }).collect::<Vec<_>>(),
            }));
        }
        println!("{}", serde_json::to_string_pretty(&json!(out)).unwrap());
    } else {
        for r in &reports {
            for v in &r.verdicts {
                let seed = v.witness.as_ref().map(|w| w.seed).unwrap_or_default();
                if !v.passed {
                    println!("{}", verdict_line(v, seed));
                }
            }
            println!(
                "{}: {} passed, {} failed",
                r.theorem,
                r.passed(),
                r.failed()
            );
            all_ok &= r.failed() == 0;
        }
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn fuzz_cmd(
    theorem: TheoremArg,
    seeds: std::ops::Range<u64>,
    depth: usize,
    fuel: u64,
    as_json: bool,
) -> Result<ExitCode, String> {
    let mut reports = Vec::new();
    let safety = |reports: &mut Vec<FuzzReport>| {
        for mode in [Mode::Local, Mode::Coarse, Mode::None] {
            reports.push(harness::fuzz_safety(mode, seeds.clone(), depth, fuel));
        }
    };
    match theorem {
        TheoremArg::Safety => safety(&mut reports),
        TheoremArg::GlobalSim => {
            reports.push(harness::fuzz_global_sim(seeds, depth, fuel));
        }
        TheoremArg::DynSim => {
            reports.push(harness::fuzz_dyn_sim(seeds, depth, fuel));
        }
        TheoremArg::TypePreservation => {
            reports.push(harness::fuzz_type_preservation(seeds, depth));
        }
        TheoremArg::Divergence => {
            reports.push(FuzzReport {
                theorem: harness::Theorem::Divergence,
                verdicts: vec![harness::check_divergence(0)],
            });
        }
        TheoremArg::All => {
            safety(&mut reports);
            reports.push(harness::fuzz_global_sim(seeds.clone(), depth, fuel));
            reports.push(harness::fuzz_dyn_sim(seeds.clone(), depth, fuel));
            reports.push(harness::fuzz_type_preservation(seeds, depth));
            reports.push(FuzzReport {
                theorem: harness::Theorem::Divergence,
                verdicts: vec![harness::check_divergence(0)],
            });
        }
    }
    report(reports, as_json)
}

fn fixture_cmd(name: &str) -> Result<ExitCode, String> {
    let fixture = fixtures::fixture(name)?;
    match fixture {
        fixtures::Fixture::Comp(c) => {
            print!(
                "{}",
                pretty::pretty_program(&Program {
                    mode: Mode::Local,
                    signature: None,
                    body: c,
                })
            );
        }
        fixtures::Fixture::HandlerVal(h) => {
            let body = effcalc::syntax::Computation::Return(effcalc::syntax::Value::Handler(
                Box::new(h),
            ));
            print!(
                "{}",
                pretty::pretty_program(&Program {
                    mode: Mode::Local,
                    signature: None,
                    body,
                })
            );
        }
        fixtures::Fixture::Dyn(c, params) => {
            print!(
                "{}",
                pretty::pretty_dyn_program(&DynProgram { params, body: c })
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
