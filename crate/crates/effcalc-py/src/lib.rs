//! Python bindings: parse, type-check, run, trace, and translate programs
//! of the handler and dynamic-state calculi, plus the fixture collection
//! and the fuzz harness.

// The pyo3 attribute macros expand to conversions clippy flags.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use effcalc::dynstate::DynOutcome;
use effcalc::eval::Outcome;
use effcalc::harness;
use effcalc::infer;
use effcalc::parse::SourceProgram;
use effcalc::pretty;
use effcalc::syntax::Mode;
use effcalc::translate::TranslationMode;
use effcalc::{dynstate, eval, fixtures, parse, translate};

/// A parsed program: either handler-calculus (with a mode header) or
/// dynamic-state (with a params header).
#[pyclass]
struct Program {
    inner: SourceProgram,
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pymethods]
impl Program {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        let inner = parse::parse_source(source).map_err(value_err)?;
        Ok(Program { inner })
    }

    /// True for dynamic-state programs.
    #[getter]
    fn is_dyn(&self) -> bool {
        matches!(self.inner, SourceProgram::Dyn(_))
    }

    #[getter]
    fn mode(&self) -> String {
        match &self.inner {
            SourceProgram::Handler(p) => p.mode.to_string(),
            SourceProgram::Dyn(_) => "dyn".to_string(),
        }
    }

    /// Pretty-prints the program back to concrete syntax.
    fn pretty(&self) -> String {
        match &self.inner {
            SourceProgram::Handler(p) => pretty::pretty_program(p),
            SourceProgram::Dyn(p) => pretty::pretty_dyn_program(p),
        }
    }

    /// Type-checks the program; returns the bindings and the top-level
    /// type as a dict, or raises ValueError.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new_bound(py);
        match &self.inner {
            SourceProgram::Handler(p) => {
                let typed = infer::check_program(p).map_err(value_err)?;
                let bindings = PyList::empty_bound(py);
                for (x, s) in &typed.bindings {
                    let b = PyDict::new_bound(py);
                    b.set_item("name", x.to_string())?;
                    b.set_item("scheme", infer::render_scheme(s))?;
                    bindings.append(b)?;
                }
                out.set_item("bindings", bindings)?;
                out.set_item("type", infer::render_typed(&typed.scheme, &typed.effects))?;
                out.set_item("mode", p.mode.to_string())?;
            }
            SourceProgram::Dyn(p) => {
                let typed = infer::check_dyn_program(p).map_err(value_err)?;
                let bindings = PyList::empty_bound(py);
                for (x, s) in &typed.bindings {
                    let b = PyDict::new_bound(py);
                    b.set_item("name", x.to_string())?;
                    b.set_item("scheme", infer::render_scheme(s))?;
                    bindings.append(b)?;
                }
                out.set_item("bindings", bindings)?;
                out.set_item("type", infer::render_scheme(&typed.scheme))?;
                out.set_item("mode", "dyn")?;
            }
        }
        Ok(out)
    }

    /// Type-checks and evaluates the program with the given fuel.
    #[pyo3(signature = (fuel = 10_000))]
    fn run<'py>(&self, py: Python<'py>, fuel: u64) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new_bound(py);
        match &self.inner {
            SourceProgram::Handler(p) => {
                infer::check_program(p).map_err(value_err)?;
                let trace = eval::run(&p.body, fuel);
                match &trace.outcome {
                    Outcome::Value(v) => {
                        out.set_item("outcome", "value")?;
                        out.set_item("result", format!("return {}", pretty::pretty_value(v)))?;
                    }
                    Outcome::Operation { op, .. } => {
                        out.set_item("outcome", "operation")?;
                        out.set_item("result", op.to_string())?;
                    }
                    Outcome::Stuck(msg) => {
                        return Err(PyRuntimeError::new_err(format!("stuck: {msg}")))
                    }
                    Outcome::FuelExhausted(_) => {
                        out.set_item("outcome", "fuel-exhausted")?;
                        out.set_item("result", "")?;
                    }
                }
                out.set_item("steps", trace.fuel_used)?;
            }
            SourceProgram::Dyn(p) => {
                infer::check_dyn_program(p).map_err(value_err)?;
                let trace = dynstate::dyn_run(&p.body, fuel);
                match &trace.outcome {
                    DynOutcome::Value(v) => {
                        let c = dynstate::DynComputation::Return(v.clone());
                        out.set_item("outcome", "value")?;
                        out.set_item("result", pretty::pretty_dyn(&c))?;
                    }
                    DynOutcome::UnboundParameter(p) => {
                        return Err(PyRuntimeError::new_err(format!("unbound parameter ${p}")))
                    }
                    DynOutcome::Stuck(msg) => {
                        return Err(PyRuntimeError::new_err(format!("stuck: {msg}")))
                    }
                    DynOutcome::FuelExhausted(_) => {
                        out.set_item("outcome", "fuel-exhausted")?;
                        out.set_item("result", "")?;
                    }
                }
                out.set_item("steps", trace.fuel_used)?;
            }
        }
        Ok(out)
    }

    /// The numbered small-step trace, one pretty-printed state per line.
    #[pyo3(signature = (fuel = 10_000, limit = 1000))]
    fn trace(&self, fuel: u64, limit: usize) -> PyResult<Vec<String>> {
        match &self.inner {
            SourceProgram::Handler(p) => {
                infer::check_program(p).map_err(value_err)?;
                let trace = eval::run(&p.body, fuel);
                Ok(trace
                    .steps
                    .iter()
                    .take(limit)
                    .enumerate()
                    .map(|(i, c)| format!("{i}: {}", pretty::pretty_comp(c)))
                    .collect())
            }
            SourceProgram::Dyn(p) => {
                infer::check_dyn_program(p).map_err(value_err)?;
                let trace = dynstate::dyn_run(&p.body, fuel);
                Ok(trace
                    .steps
                    .iter()
                    .take(limit)
                    .enumerate()
                    .map(|(i, c)| format!("{i}: {}", pretty::pretty_dyn(c)))
                    .collect())
            }
        }
    }

    /// Translates a dynamic-state program into the handler calculus;
    /// `mode` is "ground" (annotated) or "coarse".
    #[pyo3(signature = (mode = "ground"))]
    fn translate(&self, mode: &str) -> PyResult<String> {
        let p = match &self.inner {
            SourceProgram::Dyn(p) => p,
            SourceProgram::Handler(_) => {
                return Err(PyValueError::new_err(
                    "translate expects a dynamic-state program",
                ))
            }
        };
        let tmode = match mode {
            "ground" => TranslationMode::GroundAnnotated,
            "coarse" => TranslationMode::Coarse,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown translation mode `{other}` (use ground or coarse)"
                )))
            }
        };
        let translated = translate::translate_program(p, tmode).map_err(value_err)?;
        Ok(pretty::pretty_program(&translated))
    }
}

/// Source text of a named fixture program.
#[pyfunction]
fn fixture(name: &str) -> PyResult<String> {
    let f = fixtures::fixture(name).map_err(PyValueError::new_err)?;
    Ok(match f {
        fixtures::Fixture::Comp(c) => pretty::pretty_program(&effcalc::syntax::Program {
            mode: Mode::Local,
            signature: None,
            body: c,
        }),
        fixtures::Fixture::HandlerVal(h) => {
            let body = effcalc::syntax::Computation::Return(effcalc::syntax::Value::Handler(
                Box::new(h),
            ));
            pretty::pretty_program(&effcalc::syntax::Program {
                mode: Mode::Local,
                signature: None,
                body,
            })
        }
        fixtures::Fixture::Dyn(c, params) => {
            pretty::pretty_dyn_program(&effcalc::dynstate::DynProgram { params, body: c })
        }
    })
}

/// Runs a fuzz campaign; returns per-theorem pass/fail counts and the
/// witnesses of any failures.
#[pyfunction]
#[pyo3(signature = (theorem = "all", seeds = 50, start = 0, depth = 4, fuel = 300))]
fn fuzz<'py>(
    py: Python<'py>,
    theorem: &str,
    seeds: u64,
    start: u64,
    depth: usize,
    fuel: u64,
) -> PyResult<Bound<'py, PyList>> {
    let range = start..start + seeds;
    let mut reports = Vec::new();
    match theorem {
        "safety" => {
            for mode in [Mode::Local, Mode::Coarse, Mode::None] {
                reports.push(harness::fuzz_safety(mode, range.clone(), depth, fuel));
            }
        }
        "global-sim" => reports.push(harness::fuzz_global_sim(range, depth, fuel)),
        "dyn-sim" => reports.push(harness::fuzz_dyn_sim(range, depth, fuel)),
        "type-preservation" => reports.push(harness::fuzz_type_preservation(range, depth)),
        "divergence" => reports.push(harness::FuzzReport {
            theorem: harness::Theorem::Divergence,
            verdicts: vec![harness::check_divergence(0)],
        }),
        "all" => {
            for mode in [Mode::Local, Mode::Coarse, Mode::None] {
                reports.push(harness::fuzz_safety(mode, range.clone(), depth, fuel));
            }
            reports.push(harness::fuzz_global_sim(range.clone(), depth, fuel));
            reports.push(harness::fuzz_dyn_sim(range.clone(), depth, fuel));
            reports.push(harness::fuzz_type_preservation(range, depth));
            reports.push(harness::FuzzReport {
                theorem: harness::Theorem::Divergence,
                verdicts: vec![harness::check_divergence(0)],
            });
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown theorem `{other}`"
            )))
        }
    }
    let out = PyList::empty_bound(py);
    for r in &reports {
        let d = PyDict::new_bound(py);
        d.set_item("theorem", r.theorem.to_string())?;
        d.set_item("passed", r.passed())?;
        d.set_item("failed", r.failed())?;
        let witnesses = PyList::empty_bound(py);
        for v in r.verdicts.iter().filter(|v| !v.passed) {
            let w = v.witness.as_ref().unwrap();
            let wd = PyDict::new_bound(py);
            wd.set_item("seed", w.seed)?;
            wd.set_item("step", w.step)?;
            wd.set_item("detail", &w.detail)?;
            wd.set_item("term", &w.term)?;
            witnesses.append(wd)?;
        }
        d.set_item("witnesses", witnesses)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Names of the available fixtures.
#[pyfunction]
fn fixture_names() -> Vec<String> {
    fixtures::FIXTURE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[pymodule]
fn effcalc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Program>()?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_names, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
