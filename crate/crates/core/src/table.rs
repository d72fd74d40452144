//! Anticipation tables: offline construction over every method pair and
//! alias case, JSON persistence, consistency classification, and the runtime
//! query path that instantiates residual conditions.

use crate::analysis::*;
use crate::ast::*;
use crate::domain::BoundedDomain;
use crate::formula::{emit_smtlib, eval, Assignment, SymValue};
use crate::interp::State;
use crate::pretty::pretty_print;
use crate::symbolic::{enumerate_alias_cases, pair_roles, AliasCase};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyLevel {
    Strong,
    CoordinationFree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub class: Ident,
    pub name: Ident,
    pub sig: String,
    pub param_is_object: bool,
    pub lp: bool,
    pub level: ConsistencyLevel,
    pub surface: Surface,
    pub note: Option<String>,
}

/// A method call is strongly consistent when it accesses a strong field or
/// may break a weak-field invariant (is not locally permissible).
pub fn classify(lp: bool, surface: &Surface) -> ConsistencyLevel {
    if surface.strong() || !lp {
        ConsistencyLevel::Strong
    } else {
        ConsistencyLevel::CoordinationFree
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseOutcome {
    /// The case was not analyzed (no weak surface, or causally ordered).
    Skipped { reason: String },
    /// Analysis failed; treated as a refusal at query time.
    Error { reason: String },
    Analyzed {
        result: AnticipationResult,
        residual_smt: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    /// Signature of the earlier call (the one being overtaken).
    pub m1: String,
    /// Signature of the call being anticipated.
    pub m2: String,
    pub alias: String,
    pub outcome: CaseOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: Ident,
    pub methods: usize,
    pub non_lp: usize,
    /// Unordered method pairs (self-pairs included) with at least one
    /// analyzed alias case.
    pub pairs: usize,
    /// Pairs whose orders can produce different heaps in some admissible
    /// instantiation, or that interfere on a strong field.
    pub conflicts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnticipationTable {
    pub version: u32,
    pub program_hash: String,
    pub domain: BoundedDomain,
    pub methods: Vec<MethodEntry>,
    pub pairs: Vec<PairEntry>,
    pub stats: Vec<ClassStats>,
}

impl AnticipationTable {
    pub fn method(&self, sig: &str) -> Option<&MethodEntry> {
        self.methods.iter().find(|m| m.sig == sig)
    }

    pub fn entry(&self, m2: &str, m1: &str, alias: &str) -> Option<&PairEntry> {
        self.pairs.iter().find(|p| p.m2 == m2 && p.m1 == m1 && p.alias == alias)
    }

    pub fn class_stats(&self, class: &str) -> Option<&ClassStats> {
        self.stats.iter().find(|s| s.class == class)
    }
}

fn sig_of(class: &str, method: &str) -> String {
    format!("{class}.{method}")
}

/// FNV-1a over the canonical printing; stable across runs and platforms.
fn program_hash(prog: &Program) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in pretty_print(prog).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Methods named `init` model object initializers: every call on an object
/// causally follows its initialization, so same-receiver reorderings against
/// an initializer are resolved upstream by causal delivery. Two initializer
/// calls are causally unrelated (concurrent creation) and are analyzed.
fn is_initializer(name: &str) -> bool {
    name == "init"
}

/// Build the full anticipation table: every ordered method pair of every
/// class, every applicable alias case. Per-case failures are recorded, never
/// fatal.
pub fn build_table(prog: &Program, dom: &BoundedDomain) -> AnticipationTable {
    let mut methods = Vec::new();
    let mut pairs = Vec::new();
    let mut stats = Vec::new();

    for class in &prog.classes {
        if class.methods.is_empty() {
            continue;
        }
        let mut class_methods = Vec::new();
        for md in &class.methods {
            let (surface, mut note) = match method_surface(prog, &class.name, md, dom) {
                Ok(s) => (s, None),
                Err(e) => (
                    Surface { weak: true, strong_read: true, strong_write: true },
                    Some(format!("surface analysis failed: {e}")),
                ),
            };
            let lp = match lp_verdict(prog, &class.name, md, dom) {
                Ok(v) => v,
                Err(e) => {
                    note.get_or_insert_with(|| format!("LP analysis failed: {e}"));
                    false
                }
            };
            let entry = MethodEntry {
                class: class.name.clone(),
                name: md.name.clone(),
                sig: sig_of(&class.name, &md.name),
                param_is_object: matches!(md.param.1, Type::Named(_)),
                lp,
                level: classify(lp, &surface),
                surface,
                note,
            };
            class_methods.push(entry.clone());
            methods.push(entry);
        }

        // Every ordered pair, every alias case.
        for (i1, md1) in class.methods.iter().enumerate() {
            for (i2, md2) in class.methods.iter().enumerate() {
                let sig1 = sig_of(&class.name, &md1.name);
                let sig2 = sig_of(&class.name, &md2.name);
                let surf1 = &class_methods[i1].surface;
                let surf2 = &class_methods[i2].surface;
                for h in enumerate_alias_cases(md1, &class.name, md2, &class.name) {
                    let outcome = pair_case_outcome(prog, &class.name, md1, md2, surf1, surf2, &h, dom);
                    pairs.push(PairEntry {
                        m1: sig1.clone(),
                        m2: sig2.clone(),
                        alias: h.label(),
                        outcome,
                    });
                }
            }
        }

        // Recompute stats from the recorded entries (conflicts are judged per
        // unordered pair across both directions).
        let class_sigs: Vec<String> =
            class.methods.iter().map(|m| sig_of(&class.name, &m.name)).collect();
        let mut pair_count = 0usize;
        let mut conflict_count = 0usize;
        for (a, s1) in class_sigs.iter().enumerate() {
            for s2 in class_sigs.iter().skip(a) {
                let cases: Vec<&PairEntry> = pairs
                    .iter()
                    .filter(|p| {
                        (p.m1 == *s1 && p.m2 == *s2) || (p.m1 == *s2 && p.m2 == *s1)
                    })
                    .collect();
                let analyzed = cases
                    .iter()
                    .any(|p| !matches!(p.outcome, CaseOutcome::Skipped { .. }));
                if analyzed {
                    pair_count += 1;
                    let conflict = cases.iter().any(|p| match &p.outcome {
                        CaseOutcome::Analyzed { result, .. } => {
                            !result.commute_valid || !result.sfni
                        }
                        _ => false,
                    });
                    if conflict {
                        conflict_count += 1;
                    }
                }
            }
        }
        stats.push(ClassStats {
            class: class.name.clone(),
            methods: class.methods.len(),
            non_lp: class_methods.iter().filter(|m| !m.lp).count(),
            pairs: pair_count,
            conflicts: conflict_count,
        });
    }

    AnticipationTable {
        version: TABLE_VERSION,
        program_hash: program_hash(prog),
        domain: dom.clone(),
        methods,
        pairs,
        stats,
    }
}

fn pair_case_outcome(
    prog: &Program,
    class: &str,
    md1: &MethodDecl,
    md2: &MethodDecl,
    surf1: &Surface,
    surf2: &Surface,
    h: &AliasCase,
    dom: &BoundedDomain,
) -> CaseOutcome {
    // A pair with no weak-field surface has no replica-divergence question:
    // both calls act only on coordinated state.
    if !surf1.weak && !surf2.weak {
        return CaseOutcome::Skipped {
            reason: "no weak-field access in either method".into(),
        };
    }
    // Same-receiver cases against an initializer are causally ordered.
    if is_initializer(&md1.name) != is_initializer(&md2.name)
        && h.same_block("this1", "this2")
    {
        return CaseOutcome::Skipped {
            reason: "causally ordered with the initializer".into(),
        };
    }
    match method_anticipation(h, prog, class, md1, class, md2, dom) {
        Ok(result) => {
            let residual_smt = emit_smtlib(&result.residual);
            CaseOutcome::Analyzed { result, residual_smt }
        }
        Err(e) => CaseOutcome::Error { reason: e.to_string() },
    }
}

pub fn serialize_table(table: &AnticipationTable) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = serde_json::to_vec_pretty(table)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("table version {got} is not supported (expected {want})")]
    Version { got: u32, want: u32 },
    #[error("malformed table at {path}: {message}")]
    Malformed { path: String, message: String },
}

pub fn load_table(bytes: &[u8]) -> Result<AnticipationTable, TableError> {
    let mut table: AnticipationTable = serde_json::from_slice(bytes).map_err(|e| {
        TableError::Malformed { path: format!("/[line {}]", e.line()), message: e.to_string() }
    })?;
    if table.version != TABLE_VERSION {
        return Err(TableError::Version { got: table.version, want: TABLE_VERSION });
    }
    table.domain.rebuild_scan();
    Ok(table)
}

/// A concrete call against a state snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCall {
    pub recv: Loc,
    pub method: Ident,
    pub arg: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("no object at {0} in the snapshot")]
    NoObject(Loc),
    #[error("table has no entry for ({m2} anticipating {m1}) under `{alias}`")]
    MissingEntry { m2: String, m1: String, alias: String },
    #[error("pair was not analyzed: {0}")]
    NotAnalyzed(String),
    #[error("cannot resolve `{0}` in the snapshot")]
    Unresolved(String),
    #[error("{0}")]
    Eval(String),
}

/// Decide whether `call2` may be anticipated w.r.t. `call1` in the given
/// snapshot: select the realized alias case from the concrete locations,
/// instantiate the residual's parameters and strong-field symbols, and
/// evaluate it with weak fields still universally quantified.
pub fn query(
    table: &AnticipationTable,
    call1: &QueryCall,
    call2: &QueryCall,
    snapshot: &State,
) -> Result<bool, QueryError> {
    let class1 = snapshot.heap.get(call1.recv).ok_or(QueryError::NoObject(call1.recv))?.class.clone();
    let class2 = snapshot.heap.get(call2.recv).ok_or(QueryError::NoObject(call2.recv))?.class.clone();
    let sig1 = sig_of(&class1, &call1.method);
    let sig2 = sig_of(&class2, &call2.method);

    let alias = realized_alias(table, call1, call2, &sig1, &sig2)?;
    let entry = table.entry(&sig2, &sig1, &alias).ok_or_else(|| QueryError::MissingEntry {
        m2: sig2.clone(),
        m1: sig1.clone(),
        alias: alias.clone(),
    })?;

    match &entry.outcome {
        CaseOutcome::Skipped { reason } => Err(QueryError::NotAnalyzed(reason.clone())),
        CaseOutcome::Error { .. } => Ok(false),
        CaseOutcome::Analyzed { result, .. } => match result.verdict {
            VerdictKind::Always => Ok(true),
            VerdictKind::Never => Ok(false),
            VerdictKind::Conditional => {
                let mut subst: BTreeMap<String, SymValue> = BTreeMap::new();
                for (sym, arg) in
                    [(&result.params[0], call1.arg), (&result.params[1], call2.arg)]
                {
                    if let Some(name) = sym {
                        if let Value::Int(n) = arg {
                            subst.insert(name.clone(), SymValue::Int(n));
                        }
                    }
                }
                for b in &result.strong_bindings {
                    let v = resolve_path(snapshot, call1, call2, &b.path, &b.field)?;
                    if let Value::Int(n) = v {
                        subst.insert(b.var.clone(), SymValue::Int(n));
                    }
                }
                let inst = result.residual.subst(&subst);
                eval(&inst, &Assignment::default(), &table.domain)
                    .map_err(|e| QueryError::Eval(e.to_string()))
            }
        },
    }
}

/// The alias case realized by the concrete receivers and object arguments.
fn realized_alias(
    table: &AnticipationTable,
    call1: &QueryCall,
    call2: &QueryCall,
    sig1: &str,
    sig2: &str,
) -> Result<String, QueryError> {
    let m1 = table.method(sig1).ok_or_else(|| QueryError::Unresolved(sig1.to_string()))?;
    let m2 = table.method(sig2).ok_or_else(|| QueryError::Unresolved(sig2.to_string()))?;
    let mut located: Vec<(String, Loc)> =
        vec![("this1".into(), call1.recv), ("this2".into(), call2.recv)];
    if m1.param_is_object {
        if let Value::Loc(l) = call1.arg {
            located.push(("other1".into(), l));
        } else {
            return Err(QueryError::Unresolved("object argument of call 1".into()));
        }
    }
    if m2.param_is_object {
        if let Value::Loc(l) = call2.arg {
            located.push(("other2".into(), l));
        } else {
            return Err(QueryError::Unresolved("object argument of call 2".into()));
        }
    }
    let mut blocks: BTreeMap<Loc, Vec<String>> = BTreeMap::new();
    for (role, l) in located {
        blocks.entry(l).or_default().push(role);
    }
    let case = AliasCase { blocks: blocks.into_values().map(|mut b| { b.sort(); b }).collect() };
    let mut canon = case.blocks;
    canon.sort();
    Ok(AliasCase { blocks: canon }.label())
}

fn resolve_path(
    snapshot: &State,
    call1: &QueryCall,
    call2: &QueryCall,
    path: &str,
    field: &str,
) -> Result<Value, QueryError> {
    let mut parts = path.split('.');
    let root = parts.next().ok_or_else(|| QueryError::Unresolved(path.to_string()))?;
    let mut l = match root {
        "this1" => call1.recv,
        "this2" => call2.recv,
        "other1" => match call1.arg {
            Value::Loc(l) => l,
            _ => return Err(QueryError::Unresolved(path.to_string())),
        },
        "other2" => match call2.arg {
            Value::Loc(l) => l,
            _ => return Err(QueryError::Unresolved(path.to_string())),
        },
        other => return Err(QueryError::Unresolved(other.to_string())),
    };
    for f in parts {
        let obj = snapshot.heap.get(l).ok_or(QueryError::NoObject(l))?;
        match obj.fields.get(f) {
            Some(Value::Loc(next)) => l = *next,
            _ => return Err(QueryError::Unresolved(format!("{path} (at `{f}`)"))),
        }
    }
    let obj = snapshot.heap.get(l).ok_or(QueryError::NoObject(l))?;
    obj.fields
        .get(field)
        .copied()
        .ok_or_else(|| QueryError::Unresolved(format!("{path}.{field}")))
}

impl AnticipationTable {
    /// The pair roles as the analysis would name them, for CLI explanations.
    pub fn roles_for(&self, prog: &Program, sig1: &str, sig2: &str) -> Option<Vec<(String, Ident)>> {
        let m1 = self.method(sig1)?;
        let m2 = self.method(sig2)?;
        let c1 = prog.class(&m1.class)?;
        let c2 = prog.class(&m2.class)?;
        let md1 = c1.method(&m1.name)?;
        let md2 = c2.method(&m2.name)?;
        Some(pair_roles(md1, &m1.class, md2, &m2.class))
    }
}
