//! Replica convergence simulator: a shared initial heap, per-replica
//! delivery orders with table-gated anticipation swaps, and
//! permissibility-enforcing execution. Divergence shows up as unequal final
//! heaps.

use crate::ast::*;
use crate::interp::{exec, Obj, State};
use crate::oracle::state_invariant;
use crate::table::{query, AnticipationTable, QueryCall, QueryError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Int(i64),
    Ref {
        #[serde(rename = "ref")]
        target: String,
    },
    Null(()),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    #[serde(default)]
    pub fields: BTreeMap<String, ValueSpec>,
}

/// A snapshot of replicated objects, as fed to `anticipate --state` and as
/// the initial heap of scenarios.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub objects: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSpec {
    pub recv: String,
    pub method: String,
    #[serde(default)]
    pub arg: Option<ValueSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapSpec {
    /// Swap the calls at positions `at - 1` and `at` of the current order,
    /// anticipating the latter.
    pub at: usize,
    #[serde(default)]
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaSpec {
    pub name: String,
    pub order: Vec<usize>,
    #[serde(default)]
    pub swaps: Vec<SwapSpec>,
    /// Weak-field divergence this replica starts from: `"acc1.balance" -> 7`.
    #[serde(default)]
    pub overrides: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Program path, resolved relative to the scenario file.
    pub program: String,
    #[serde(flatten)]
    pub snapshot: Snapshot,
    pub calls: Vec<CallSpec>,
    pub replicas: Vec<ReplicaSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown object id `{0}`")]
    UnknownId(String),
    #[error("replica `{0}`: order must be a permutation of all call indices")]
    BadOrder(String),
    #[error("replica `{name}`: swap position {at} out of range")]
    BadSwap { name: String, at: usize },
    #[error("override `{0}` does not name `object.field`")]
    BadOverride(String),
    #[error("{0}")]
    Query(#[from] QueryError),
    #[error("execution failed: {0}")]
    Exec(String),
}

/// Materialize a snapshot into a state with every object stack-bound by id.
pub fn build_state(snapshot: &Snapshot) -> Result<(State, BTreeMap<String, Loc>), SimError> {
    let mut st = State::new();
    let mut ids = BTreeMap::new();
    for spec in &snapshot.objects {
        let l = st.alloc(Obj { class: spec.class.clone(), fields: BTreeMap::new() });
        ids.insert(spec.id.clone(), l);
    }
    for spec in &snapshot.objects {
        let l = ids[&spec.id];
        let mut fields = BTreeMap::new();
        for (f, v) in &spec.fields {
            let value = match v {
                ValueSpec::Int(n) => Value::Int(*n),
                ValueSpec::Null(()) => Value::Null,
                ValueSpec::Ref { target } => Value::Loc(
                    *ids.get(target).ok_or_else(|| SimError::UnknownId(target.clone()))?,
                ),
            };
            fields.insert(f.clone(), value);
        }
        st.heap.map.get_mut(&l).expect("allocated").fields = fields;
    }
    for (id, l) in &ids {
        st.bind(id.clone(), Value::Loc(*l));
    }
    Ok((st, ids))
}

fn call_of(spec: &CallSpec, ids: &BTreeMap<String, Loc>) -> Result<(Expr, QueryCall), SimError> {
    let recv_loc = *ids.get(&spec.recv).ok_or_else(|| SimError::UnknownId(spec.recv.clone()))?;
    let arg = match &spec.arg {
        None => Value::Int(0),
        Some(ValueSpec::Int(n)) => Value::Int(*n),
        Some(ValueSpec::Null(())) => Value::Null,
        Some(ValueSpec::Ref { target }) => {
            Value::Loc(*ids.get(target).ok_or_else(|| SimError::UnknownId(target.clone()))?)
        }
    };
    let expr = Expr::Call(spec.recv.clone(), spec.method.clone(), Box::new(Expr::Val(arg)));
    Ok((expr, QueryCall { recv: recv_loc, method: spec.method.clone(), arg }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapReport {
    pub at: usize,
    pub m1: String,
    pub m2: String,
    pub permitted: bool,
    pub forced: bool,
    pub applied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub name: String,
    pub order: Vec<usize>,
    pub swaps: Vec<SwapReport>,
    /// Call indices refused by the permissibility gate.
    pub rejected: Vec<usize>,
    pub objects: BTreeMap<String, BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub converged: bool,
    pub replicas: Vec<ReplicaReport>,
}

/// Run every replica and compare the final heaps.
pub fn simulate(
    prog: &Program,
    table: &AnticipationTable,
    scenario: &Scenario,
) -> Result<SimReport, SimError> {
    let (base, ids) = build_state(&scenario.snapshot)?;
    let mut finals: Vec<State> = Vec::new();
    let mut reports = Vec::new();

    for replica in &scenario.replicas {
        let mut order = replica.order.clone();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..scenario.calls.len()).collect::<Vec<_>>() {
            return Err(SimError::BadOrder(replica.name.clone()));
        }

        let mut st = base.clone();
        for (path, v) in &replica.overrides {
            let (id, field) =
                path.split_once('.').ok_or_else(|| SimError::BadOverride(path.clone()))?;
            let l = ids.get(id).ok_or_else(|| SimError::UnknownId(id.to_string()))?;
            let obj = st.heap.map.get_mut(l).expect("bound object");
            if !obj.fields.contains_key(field) {
                return Err(SimError::BadOverride(path.clone()));
            }
            obj.fields.insert(field.to_string(), Value::Int(*v));
        }

        // Anticipation decisions are made against the replica's local view
        // before execution starts.
        let mut swaps = Vec::new();
        for swap in &replica.swaps {
            if swap.at == 0 || swap.at >= order.len() {
                return Err(SimError::BadSwap { name: replica.name.clone(), at: swap.at });
            }
            let (_, q1) = call_of(&scenario.calls[order[swap.at - 1]], &ids)?;
            let (_, q2) = call_of(&scenario.calls[order[swap.at]], &ids)?;
            let permitted = match query(table, &q1, &q2, &st) {
                Ok(b) => b,
                Err(QueryError::NotAnalyzed(_)) => false,
                Err(e) => return Err(e.into()),
            };
            let applied = permitted || swap.forced;
            swaps.push(SwapReport {
                at: swap.at,
                m1: scenario.calls[order[swap.at - 1]].method.clone(),
                m2: scenario.calls[order[swap.at]].method.clone(),
                permitted,
                forced: swap.forced,
                applied,
            });
            if applied {
                order.swap(swap.at - 1, swap.at);
            }
        }

        // Execute: a call applies only when guarded and permissible in the
        // replica's current state; otherwise the replica refuses it.
        let mut rejected = Vec::new();
        for &idx in &order {
            let (expr, _) = call_of(&scenario.calls[idx], &ids)?;
            let mut clean = st.clone();
            clean.monitored.clear();
            clean.strong_log.clear();
            let (post, _) = match exec(&expr, &clean, prog) {
                Ok(r) => r,
                Err(e) => return Err(SimError::Exec(format!("call {idx}: {e}"))),
            };
            let guarded = post.monitored.iter().all(|c| c.holds().unwrap_or(false));
            let permissible = !state_invariant(&clean, prog) || state_invariant(&post, prog);
            if guarded && permissible {
                st = post;
            } else {
                rejected.push(idx);
            }
        }

        let mut objects = BTreeMap::new();
        for (id, l) in &ids {
            let obj = st.heap.get(*l).expect("object survives");
            objects.insert(id.clone(), obj.fields.clone());
        }
        reports.push(ReplicaReport {
            name: replica.name.clone(),
            order,
            swaps,
            rejected,
            objects,
        });
        finals.push(st);
    }

    let converged = finals.windows(2).all(|w| {
        crate::interp::heaps_equal_mod_fresh(base.loc_watermark(), &w[0].heap, &w[1].heap)
    });

    Ok(SimReport { converged, replicas: reports })
}
