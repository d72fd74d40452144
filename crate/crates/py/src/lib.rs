//! Python bindings: parse/check/run programs, build anticipation tables,
//! query them against snapshots, consult the runtime oracle, and replay
//! replica scenarios. Structured data crosses the boundary as JSON strings.

use ant_core::ast::{Expr, Value};
use ant_core::domain::BoundedDomain;
use ant_core::interp::run_main;
use ant_core::oracle;
use ant_core::parser::parse_program_with_spans;
use ant_core::pretty::pretty_print;
use ant_core::simulate::{self, Scenario, Snapshot};
use ant_core::table::{self, QueryCall};
use ant_core::types::check_program_with_spans;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Type-check a source program; returns `{"ok": bool, "diagnostics": [...]}`.
#[pyfunction]
fn check(src: &str) -> PyResult<String> {
    let (prog, spans) = parse_program_with_spans(src).map_err(err)?;
    let report = check_program_with_spans(&prog, &spans);
    serde_json::to_string(&serde_json::json!({
        "ok": report.ok(),
        "diagnostics": report.diagnostics,
    }))
    .map_err(err)
}

/// Parse and pretty-print back the canonical form.
#[pyfunction]
fn canonical(src: &str) -> PyResult<String> {
    let (prog, _) = parse_program_with_spans(src).map_err(err)?;
    Ok(pretty_print(&prog))
}

/// Execute the main expression; returns `{"value": ..., "heap": ...}`.
#[pyfunction]
fn run(src: &str) -> PyResult<String> {
    let (prog, _) = parse_program_with_spans(src).map_err(err)?;
    let (state, value) = run_main(&prog).map_err(err)?;
    serde_json::to_string(&serde_json::json!({ "value": value, "heap": state.heap }))
        .map_err(err)
}

/// Build the anticipation table as JSON.
#[pyfunction]
fn analyze(src: &str) -> PyResult<String> {
    let (prog, _) = parse_program_with_spans(src).map_err(err)?;
    let report = check_program_with_spans(&prog, &Default::default());
    if !report.ok() {
        return Err(err(format!("program does not type-check: {:?}", report.diagnostics)));
    }
    let dom = BoundedDomain::for_program(&prog);
    let table = table::build_table(&prog, &dom);
    let bytes = table::serialize_table(&table).map_err(err)?;
    String::from_utf8(bytes).map_err(err)
}

fn parse_value(s: &str, ids: &std::collections::BTreeMap<String, ant_core::ast::Loc>) -> PyResult<Value> {
    if s == "null" {
        return Ok(Value::Null);
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Value::Int(n));
    }
    ids.get(s)
        .map(|l| Value::Loc(*l))
        .ok_or_else(|| err(format!("`{s}` is neither an integer nor an object id")))
}

/// Query a serialized table: may `m2(recv2, arg2)` be anticipated w.r.t.
/// `m1(recv1, arg1)` in the snapshot (`{"objects": [...]}`)?
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn query(
    table_json: &str,
    state_json: &str,
    m1: &str,
    recv1: &str,
    arg1: &str,
    m2: &str,
    recv2: &str,
    arg2: &str,
) -> PyResult<bool> {
    let table = table::load_table(table_json.as_bytes()).map_err(err)?;
    let snapshot: Snapshot = serde_json::from_str(state_json).map_err(err)?;
    let (state, ids) = simulate::build_state(&snapshot).map_err(err)?;
    let get = |id: &str| ids.get(id).copied().ok_or_else(|| err(format!("unknown id `{id}`")));
    let q1 = QueryCall { recv: get(recv1)?, method: strip_class(m1), arg: parse_value(arg1, &ids)? };
    let q2 = QueryCall { recv: get(recv2)?, method: strip_class(m2), arg: parse_value(arg2, &ids)? };
    table::query(&table, &q1, &q2, &state).map_err(err)
}

fn strip_class(sig: &str) -> String {
    sig.split_once('.').map(|(_, m)| m.to_string()).unwrap_or_else(|| sig.to_string())
}

/// Ask the runtime oracle the same question; returns
/// `(allowed, witness_tuple_or_None, failed_step_or_None)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn anticipate_runtime(
    src: &str,
    state_json: &str,
    m1: &str,
    recv1: &str,
    arg1: &str,
    m2: &str,
    recv2: &str,
    arg2: &str,
) -> PyResult<(bool, Option<Vec<i64>>, Option<u8>)> {
    let (prog, _) = parse_program_with_spans(src).map_err(err)?;
    let snapshot: Snapshot = serde_json::from_str(state_json).map_err(err)?;
    let (state, ids) = simulate::build_state(&snapshot).map_err(err)?;
    let mc1 = Expr::Call(
        recv1.to_string(),
        strip_class(m1),
        Box::new(Expr::Val(parse_value(arg1, &ids)?)),
    );
    let mc2 = Expr::Call(
        recv2.to_string(),
        strip_class(m2),
        Box::new(Expr::Val(parse_value(arg2, &ids)?)),
    );
    let dom = BoundedDomain::for_program(&prog);
    let out = oracle::can_anticipate(&state, &mc1, &mc2, &prog, &dom).map_err(err)?;
    match out.witness {
        Some((ns, step)) => Ok((out.allowed, Some(ns), Some(step))),
        None => Ok((out.allowed, None, None)),
    }
}

/// Replay a replica scenario (same JSON as the CLI, program given as source).
#[pyfunction]
fn simulate_scenario(src: &str, table_json: &str, scenario_json: &str) -> PyResult<String> {
    let (prog, _) = parse_program_with_spans(src).map_err(err)?;
    let table = table::load_table(table_json.as_bytes()).map_err(err)?;
    let scenario: Scenario = serde_json::from_str(scenario_json).map_err(err)?;
    let report = simulate::simulate(&prog, &table, &scenario).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn ant_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(canonical, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(query, m)?)?;
    m.add_function(wrap_pyfunction!(anticipate_runtime, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_scenario, m)?)?;
    Ok(())
}
