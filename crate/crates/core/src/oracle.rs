//! Runtime anticipation oracle: satisfied invariants, permissibility, local
//! permissibility, weak-field generalization, state commutativity, and the
//! call anticipation algorithm. Universal quantification over weak integer
//! fields is realized by bounded enumeration; the oracle is the ground truth
//! the static analysis is validated against.

use crate::ast::*;
use crate::domain::BoundedDomain;
use crate::interp::{closure, exec, heaps_equal_mod_fresh, EvalError, State, UpdateError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("state has monitored preconditions; guard judgements need a clean state")]
    MonitoredNotEmpty,
    #[error("state has a non-empty strong-field access log")]
    StrongLogNotEmpty,
    #[error("call is not guarded in this state")]
    NotGuarded,
    #[error("weak-field tuple has {got} entries, state has {want} weak integer slots")]
    ArityMismatch { got: usize, want: usize },
    #[error("expected a call expression x.m(v)")]
    NotACall,
    #[error("receiver `{0}` is not bound to an object")]
    BadReceiver(String),
    #[error("{0}")]
    Update(#[from] UpdateError),
    #[error("{0}")]
    Eval(#[from] EvalError),
}

/// `Σ ⊩ d1 Rel d2`: close the invariant over the state and evaluate it.
pub fn satisfies(state: &State, inv: &Invariant) -> Result<bool, OracleError> {
    let closed = closure(&state.heap, &state.stack, std::slice::from_ref(inv))?;
    Ok(closed[0].holds()?)
}

/// `I(Σ)`: every field invariant of every stack-reachable object holds.
/// Field invariants mention only the field itself and literals (wfField), so
/// each resolves directly against the object.
pub fn state_invariant(state: &State, prog: &Program) -> bool {
    let mut seen: Vec<Loc> = Vec::new();
    for v in state.stack.values() {
        let Value::Loc(l) = v else { continue };
        if seen.contains(l) {
            continue;
        }
        seen.push(*l);
        let Some(obj) = state.heap.get(*l) else { continue };
        let Some(class) = prog.class(&obj.class) else { continue };
        for fd in &class.fields {
            for inv in &fd.invs {
                let side = |d: &InvValue| -> Option<i64> {
                    match d {
                        InvValue::Val(Value::Int(n)) => Some(*n),
                        InvValue::Field(_, f) => match obj.fields.get(f) {
                            Some(Value::Int(n)) => Some(*n),
                            _ => None,
                        },
                        _ => None,
                    }
                };
                match (side(&inv.lhs), side(&inv.rhs)) {
                    (Some(a), Some(b)) if inv.rel.holds(a, b) => {}
                    _ => return false,
                }
            }
        }
    }
    true
}

fn cleared(state: &State) -> State {
    let mut st = state.clone();
    st.monitored.clear();
    st.strong_log.clear();
    st
}

/// Execute a call from a clean state; report whether every monitored
/// precondition of the post-state holds there, along with the post-state.
fn guarded_run(state: &State, mc: &Expr, prog: &Program) -> Result<(bool, State), OracleError> {
    let (post, _) = exec(mc, state, prog)?;
    for c in &post.monitored {
        if !c.holds()? {
            return Ok((false, post));
        }
    }
    Ok((true, post))
}

/// Call guard: Σ must carry no monitored preconditions; the call is guarded
/// when executing it satisfies every precondition it spawns.
pub fn is_guarded(state: &State, mc: &Expr, prog: &Program) -> Result<bool, OracleError> {
    if !state.monitored.is_empty() {
        return Err(OracleError::MonitoredNotEmpty);
    }
    Ok(guarded_run(state, mc, prog)?.0)
}

/// `P(Σ, mc)`: for a guarded call, the pre-state invariant implies the
/// post-state invariant.
pub fn permissible(state: &State, mc: &Expr, prog: &Program) -> Result<bool, OracleError> {
    let (guarded, post) = guarded_run(&cleared(state), mc, prog)?;
    if !guarded {
        return Err(OracleError::NotGuarded);
    }
    Ok(!state_invariant(state, prog) || state_invariant(&post, prog))
}

/// `NP(Σ, mc)`: the pre-state invariant implies the post-state invariant
/// fails.
pub fn not_permissible(state: &State, mc: &Expr, prog: &Program) -> Result<bool, OracleError> {
    let (guarded, post) = guarded_run(&cleared(state), mc, prog)?;
    if !guarded {
        return Err(OracleError::NotGuarded);
    }
    Ok(!state_invariant(state, prog) || !state_invariant(&post, prog))
}

/// Candidate arguments for quantifying over a method's parameter: domain
/// integers, or existing heap objects of the parameter's class.
fn candidate_args(state: &State, ty: &Type, dom: &BoundedDomain) -> Vec<Value> {
    match ty {
        Type::Int => dom.points().iter().map(|n| Value::Int(*n)).collect(),
        Type::Unit => vec![Value::Null],
        Type::Named(c) => state
            .heap
            .map
            .iter()
            .filter(|(_, o)| o.class == *c)
            .map(|(l, _)| Value::Loc(*l))
            .collect(),
    }
}

/// `LP(Σ, m)`: every Σ-guarded call of `m` on this receiver is permissible.
/// Calls that fail to execute (exceptions) are not calls and are skipped.
pub fn locally_permissible(
    state: &State,
    recv: Loc,
    method: &str,
    prog: &Program,
    dom: &BoundedDomain,
) -> Result<bool, OracleError> {
    let class = state
        .heap
        .get(recv)
        .map(|o| o.class.clone())
        .ok_or_else(|| OracleError::BadReceiver(format!("{recv}")))?;
    let md = prog
        .class(&class)
        .and_then(|c| c.method(method))
        .ok_or_else(|| OracleError::BadReceiver(format!("{class}::{method}")))?;
    let mut probe = cleared(state);
    probe.bind("_lp_recv", Value::Loc(recv));
    let pre_inv = state_invariant(&probe, prog);
    for arg in candidate_args(state, &md.param.1, dom) {
        let mc = Expr::Call("_lp_recv".into(), method.into(), Box::new(Expr::Val(arg)));
        let (guarded, post) = match guarded_run(&probe, &mc, prog) {
            Ok(r) => r,
            Err(OracleError::Update(_)) => continue,
            Err(e) => return Err(e),
        };
        if !guarded {
            continue;
        }
        if pre_inv && !state_invariant(&post, prog) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Weak integer field slots in deterministic order: heap insertion order,
/// then class declaration order.
pub fn weak_slots(state: &State, prog: &Program) -> Vec<(Loc, Ident)> {
    let mut out = Vec::new();
    for (l, obj) in &state.heap.map {
        let Some(class) = prog.class(&obj.class) else { continue };
        for fd in &class.fields {
            if fd.weak && fd.ty == Type::Int {
                out.push((*l, fd.name.clone()));
            }
        }
    }
    out
}

/// Domain points satisfying a slot's own field invariants. Field invariants
/// mention only the field itself (wfField), so admissibility is pointwise;
/// quantification then ranges over the invariant-satisfying product.
fn admissible_points(
    state: &State,
    prog: &Program,
    slot: &(Loc, Ident),
    dom: &BoundedDomain,
) -> Vec<i64> {
    let invs = state
        .heap
        .get(slot.0)
        .and_then(|o| prog.class(&o.class))
        .and_then(|c| c.field(&slot.1))
        .map(|f| f.invs.clone())
        .unwrap_or_default();
    dom.points()
        .iter()
        .copied()
        .filter(|p| {
            invs.iter().all(|inv| {
                let side = |d: &InvValue| match d {
                    InvValue::Val(Value::Int(n)) => Some(*n),
                    InvValue::Field(_, _) => Some(*p),
                    _ => None,
                };
                matches!((side(&inv.lhs), side(&inv.rhs)), (Some(a), Some(b)) if inv.rel.holds(a, b))
            })
        })
        .collect()
}

/// Weak integer fields' generalization: replace every weak integer slot by
/// the corresponding entry of `ns`.
pub fn wifg(state: &State, ns: &[i64], prog: &Program) -> Result<State, OracleError> {
    let slots = weak_slots(state, prog);
    if slots.len() != ns.len() {
        return Err(OracleError::ArityMismatch { got: ns.len(), want: slots.len() });
    }
    let mut st = state.clone();
    for ((l, f), n) in slots.iter().zip(ns) {
        st.heap.map.get_mut(l).expect("slot location").fields.insert(f.clone(), Value::Int(*n));
    }
    Ok(st)
}

/// Do two calls commute from this state? Heaps are compared modulo a
/// bijection on freshly allocated locations; stacks and monitors are not
/// part of replica-visible state.
pub fn state_commute(
    state: &State,
    mc1: &Expr,
    mc2: &Expr,
    prog: &Program,
) -> Result<bool, OracleError> {
    let watermark = state.loc_watermark();
    let (s1, _) = exec(mc1, state, prog)?;
    let (s12, _) = exec(mc2, &s1, prog)?;
    let (s2, _) = exec(mc2, state, prog)?;
    let (s21, _) = exec(mc1, &s2, prog)?;
    Ok(heaps_equal_mod_fresh(watermark, &s12.heap, &s21.heap))
}

/// Outcome of the runtime anticipation algorithm. On refusal, `witness`
/// carries the weak-field tuple and the algorithm step that failed
/// (1 commutativity, 2 permissibility of mc2, 3 preservation for mc1,
/// 4 strong-field interference).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anticipation {
    pub allowed: bool,
    pub witness: Option<(Vec<i64>, u8)>,
}

impl Anticipation {
    fn yes() -> Anticipation {
        Anticipation { allowed: true, witness: None }
    }

    fn no(ns: Vec<i64>, step: u8) -> Anticipation {
        Anticipation { allowed: false, witness: Some((ns, step)) }
    }
}


/// May `mc1 ; mc2` be reordered into `mc2 ; mc1`? Checks, for every weak
/// integer instantiation over the domain:
///   1. the calls commute,
///   2. mc2's method is locally permissible (or the call itself is
///      permissible) irrespective of the weak fields,
///   3. mc1's method is locally permissible in the post-state, or else its
///      permissibility and non-permissibility are preserved across mc2,
///   4. no strong field read by mc2 after mc1 was written by mc1.
pub fn can_anticipate(
    state: &State,
    mc1: &Expr,
    mc2: &Expr,
    prog: &Program,
    dom: &BoundedDomain,
) -> Result<Anticipation, OracleError> {
    if !state.monitored.is_empty() {
        return Err(OracleError::MonitoredNotEmpty);
    }
    if !state.strong_log.is_empty() {
        return Err(OracleError::StrongLogNotEmpty);
    }
    let (Expr::Call(_, m1, _), Expr::Call(_, m2, _)) = (mc1, mc2) else {
        return Err(OracleError::NotACall);
    };
    let recv1_loc = call_receiver(state, mc1)?;
    let recv2_loc = call_receiver(state, mc2)?;

    let slots = weak_slots(state, prog);
    // Weak instantiations violating a slot's own invariants are unreachable
    // replica states: quantification ranges over the admissible product, and
    // the remaining (weak-independent) invariant parts are checked once.
    let lists: Vec<Vec<i64>> =
        slots.iter().map(|s| admissible_points(state, prog, s, dom)).collect();
    let base_ok = match first_tuple(&lists) {
        Some(ns) => state_invariant(&wifg(state, &ns, prog)?, prog),
        None => false,
    };

    // The LP disjuncts of steps 2 and 3 range over every weak instantiation;
    // they are evaluated once, on the first failure of the corresponding
    // pointwise check, and the whole quantification short-circuits when the
    // disjunct cannot rescue it.
    let mut step2_lp: Option<bool> = None;
    let mut step3_lp: Option<bool> = None;

    let lp2_all = |step2_lp: &mut Option<bool>| -> Result<bool, OracleError> {
        if let Some(b) = step2_lp {
            return Ok(*b);
        }
        let b = forall_admissible(state, prog, &slots, &lists, |sn| {
            locally_permissible(sn, recv2_loc, m2, prog, dom)
        })?;
        *step2_lp = Some(b);
        Ok(b)
    };
    let lp1_post_all = |step3_lp: &mut Option<bool>| -> Result<bool, OracleError> {
        if let Some(b) = step3_lp {
            return Ok(*b);
        }
        let b = forall_admissible(state, prog, &slots, &lists, |sn| {
            let (g2, post2) = guarded_run(sn, mc2, prog)?;
            if !g2 {
                return Ok(true);
            }
            locally_permissible(&cleared(&post2), recv1_loc, m1, prog, dom)
        })?;
        *step3_lp = Some(b);
        Ok(b)
    };

    let mut odo = Odometer::new(&lists, base_ok);
    while let Some(ns) = odo.next() {
        let sn = wifg(state, &ns, prog)?;
        let (g1, post1) = guarded_run(&sn, mc1, prog)?;
        let (g2, post2) = guarded_run(&sn, mc2, prog)?;

        // Step 1: commutativity, judged where both calls are admissible
        // (guards never mention weak fields, so the skip mirrors the static
        // antecedent exactly). post12/post21 double as the guard checks for
        // the second position.
        let mut post21: Option<(bool, State)> = None;
        if g1 && g2 {
            let (g21, post12) = guarded_run(&cleared(&post1), mc2, prog)?;
            let p21 = guarded_run(&cleared(&post2), mc1, prog)?;
            let g12 = p21.0;
            post21 = Some(p21);
            if g21
                && g12
                && !heaps_equal_mod_fresh(
                    sn.loc_watermark(),
                    &post12.heap,
                    &post21.as_ref().expect("just set").1.heap,
                )
            {
                return Ok(Anticipation::no(ns, 1));
            }
        }

        if g2 {
            // Step 2: mc2 permissible at this instantiation, or its method
            // locally permissible everywhere.
            let inv_post2 = state_invariant(&post2, prog);
            if !inv_post2 && !lp2_all(&mut step2_lp)? {
                return Ok(Anticipation::no(ns, 2));
            }

            // Step 3: permissibility of mc1 preserved across mc2, or mc1
            // locally permissible in every generalized post-state.
            if g1 {
                let p_pre = state_invariant(&post1, prog);
                let (g1_post, post21) = match post21.take() {
                    Some(p) => p,
                    None => guarded_run(&cleared(&post2), mc1, prog)?,
                };
                let (p_post, np_post) = if g1_post {
                    (
                        !inv_post2 || state_invariant(&post21, prog),
                        !inv_post2 || !state_invariant(&post21, prog),
                    )
                } else {
                    // An unguarded call in the post-state constrains nothing.
                    (true, true)
                };
                let preserved = (!p_pre || p_post) && (p_pre || np_post);
                if !preserved && !lp1_post_all(&mut step3_lp)? {
                    return Ok(Anticipation::no(ns, 3));
                }
            }
        }
    }

    // Step 4: strong fields read by mc2 after mc1 must not have been written
    // by mc1. Access patterns are weak-value independent (no branching), so
    // the original state decides.
    let (post1, _) = exec(mc1, state, prog)?;
    let writes1: Vec<(Loc, Ident)> = post1
        .strong_log
        .iter()
        .filter(|(_, _, m)| *m == crate::interp::AccessMode::Write)
        .map(|(l, f, _)| (*l, f.clone()))
        .collect();
    let mut after = cleared(&post1);
    after.strong_log.clear();
    let (post12, _) = exec(mc2, &after, prog)?;
    let reads2 = post12
        .strong_log
        .iter()
        .filter(|(_, _, m)| *m == crate::interp::AccessMode::Read);
    for (l, f, _) in reads2 {
        if writes1.iter().any(|(wl, wf)| wl == l && wf == f) {
            return Ok(Anticipation::no(Vec::new(), 4));
        }
    }

    Ok(Anticipation::yes())
}

fn call_receiver(state: &State, mc: &Expr) -> Result<Loc, OracleError> {
    let Expr::Call(x, _, _) = mc else { return Err(OracleError::NotACall) };
    match state.stack.get(x) {
        Some(Value::Loc(l)) => Ok(*l),
        _ => Err(OracleError::BadReceiver(x.clone())),
    }
}

fn first_tuple(lists: &[Vec<i64>]) -> Option<Vec<i64>> {
    lists.iter().map(|l| l.first().copied()).collect()
}

/// Lexicographic enumeration over per-slot point lists. Yields nothing when
/// the base state is inadmissible or any list is empty.
struct Odometer<'a> {
    lists: &'a [Vec<i64>],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> Odometer<'a> {
    fn new(lists: &'a [Vec<i64>], base_ok: bool) -> Odometer<'a> {
        let done = !base_ok || lists.iter().any(|l| l.is_empty());
        Odometer { lists, idx: vec![0; lists.len()], done }
    }

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let ns: Vec<i64> = self.idx.iter().zip(self.lists).map(|(&i, l)| l[i]).collect();
        // advance
        let mut k = self.lists.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.idx[k] += 1;
            if self.idx[k] < self.lists[k].len() {
                break;
            }
            self.idx[k] = 0;
            if k == 0 {
                self.done = true;
                break;
            }
        }
        Some(ns)
    }
}

/// Evaluate a predicate for every admissible weak-field instantiation.
fn forall_admissible(
    state: &State,
    prog: &Program,
    slots: &[(Loc, Ident)],
    lists: &[Vec<i64>],
    mut pred: impl FnMut(&State) -> Result<bool, OracleError>,
) -> Result<bool, OracleError> {
    let base_ok = match first_tuple(lists) {
        Some(ns) => state_invariant(&wifg(state, &ns, prog)?, prog),
        None => false,
    };
    let _ = slots;
    let mut odo = Odometer::new(lists, base_ok);
    while let Some(ns) = odo.next() {
        let sn = wifg(state, &ns, prog)?;
        if !pred(&sn)? {
            return Ok(false);
        }
    }
    Ok(true)
}
