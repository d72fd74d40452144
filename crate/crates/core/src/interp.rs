//! Small-step dynamic semantics: heap/stack configurations, precondition
//! monitoring, and strong-field access logging.

use crate::ast::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessMode {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obj {
    pub class: Ident,
    pub fields: BTreeMap<Ident, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Heap {
    pub map: BTreeMap<Loc, Obj>,
}

impl Heap {
    pub fn get(&self, l: Loc) -> Option<&Obj> {
        self.map.get(&l)
    }
}

pub type Stack = BTreeMap<Ident, Value>;

/// A monitored precondition: every name already resolved to a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedInv {
    pub lhs: Value,
    pub rel: Rel,
    pub rhs: Value,
}

impl ClosedInv {
    pub fn holds(&self) -> Result<bool, EvalError> {
        match (self.lhs, self.rhs) {
            (Value::Int(a), Value::Int(b)) => Ok(self.rel.holds(a, b)),
            _ => Err(EvalError::NonIntInvariant),
        }
    }
}

/// Runtime state: heap, stack, strong-field access log, and monitored
/// preconditions. Fresh-name counters ride along so repeated runs from equal
/// states allocate identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub heap: Heap,
    pub stack: Stack,
    pub strong_log: Vec<(Loc, Ident, AccessMode)>,
    pub monitored: Vec<ClosedInv>,
    next_loc: u64,
    next_var: u64,
}

impl Default for State {
    fn default() -> Self {
        State::new()
    }
}

impl State {
    pub fn new() -> State {
        State {
            heap: Heap::default(),
            stack: Stack::new(),
            strong_log: Vec::new(),
            monitored: Vec::new(),
            next_loc: 0,
            next_var: 0,
        }
    }

    pub fn alloc(&mut self, obj: Obj) -> Loc {
        let l = Loc(self.next_loc);
        self.next_loc += 1;
        self.heap.map.insert(l, obj);
        l
    }

    pub fn fresh_var(&mut self) -> Ident {
        let v = format!("_v{}", self.next_var);
        self.next_var += 1;
        v
    }

    pub fn loc_watermark(&self) -> u64 {
        self.next_loc
    }

    /// Bind a stack variable (used when assembling initial states).
    pub fn bind(&mut self, x: impl Into<Ident>, v: Value) {
        self.stack.insert(x.into(), v);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Thread {
    Expr(Expr),
    Exn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub state: State,
    pub thread: Thread,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(Ident),
    #[error("variable `{0}` is not bound to an object")]
    NotAnObject(Ident),
    #[error("dangling location {0}")]
    DanglingLoc(Loc),
    #[error("object has no field `{0}`")]
    NoField(Ident),
    #[error("invariant compares non-integer values")]
    NonIntInvariant,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("thread is already a value")]
    ValueThread,
    #[error("stuck configuration: {0}")]
    Stuck(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UpdateError {
    #[error("execution raised an exception")]
    Exn,
    #[error("step budget exceeded")]
    BudgetExceeded,
    #[error("{0}")]
    Step(#[from] StepError),
}

/// Default number of steps granted to one `update` run.
pub const STEP_BUDGET: u64 = 1_000_000;

/// Close invariant values over a stack and heap: variables become their stack
/// values, field selections follow the stack then the heap.
pub fn closure(heap: &Heap, stack: &Stack, invs: &[Invariant]) -> Result<Vec<ClosedInv>, EvalError> {
    invs.iter()
        .map(|inv| {
            Ok(ClosedInv {
                lhs: close_value(heap, stack, &inv.lhs)?,
                rel: inv.rel,
                rhs: close_value(heap, stack, &inv.rhs)?,
            })
        })
        .collect()
}

fn close_value(heap: &Heap, stack: &Stack, d: &InvValue) -> Result<Value, EvalError> {
    match d {
        InvValue::Val(v) => Ok(*v),
        InvValue::Var(x) => stack.get(x).copied().ok_or_else(|| EvalError::UnboundVar(x.clone())),
        InvValue::Field(x, f) => {
            let v = stack.get(x).copied().ok_or_else(|| EvalError::UnboundVar(x.clone()))?;
            let l = match v {
                Value::Loc(l) => l,
                _ => return Err(EvalError::NotAnObject(x.clone())),
            };
            let obj = heap.get(l).ok_or(EvalError::DanglingLoc(l))?;
            obj.fields.get(f).copied().ok_or_else(|| EvalError::NoField(f.clone()))
        }
    }
}

pub fn init_value(t: &Type) -> Value {
    match t {
        Type::Int => Value::Int(0),
        _ => Value::Null,
    }
}

pub fn field_is_strong(prog: &Program, class: &str, field: &str) -> bool {
    prog.class(class)
        .and_then(|c| c.field(field))
        .map(|f| !f.weak)
        .unwrap_or(false)
}

enum Outcome {
    Next(Expr),
    Raised,
}

/// One small-step transition. Null dereference, division by zero, and
/// arithmetic overflow move the thread to EXN; genuinely stuck terms (which
/// cannot arise from well-typed programs) are reported as errors.
pub fn step(cfg: Configuration, prog: &Program) -> Result<Configuration, StepError> {
    let Configuration { mut state, thread } = cfg;
    let e = match thread {
        Thread::Exn => return Err(StepError::ValueThread),
        Thread::Expr(e) => {
            if e.is_value() {
                return Err(StepError::ValueThread);
            }
            e
        }
    };
    match step_expr(&mut state, e, prog)? {
        Outcome::Next(e) => Ok(Configuration { state, thread: Thread::Expr(e) }),
        Outcome::Raised => Ok(Configuration { state, thread: Thread::Exn }),
    }
}

fn step_expr(st: &mut State, e: Expr, prog: &Program) -> Result<Outcome, StepError> {
    let stuck = |m: String| Err(StepError::Stuck(m));
    match e {
        Expr::Val(_) => stuck("attempted to step a value".into()),
        Expr::Var(x) => match st.stack.get(&x) {
            Some(v) => Ok(Outcome::Next(Expr::Val(*v))),
            None => stuck(format!("unbound variable `{x}`")),
        },
        Expr::Op(l, op, r) => {
            if !l.is_value() {
                return in_context(st, *l, prog, |l2| Expr::Op(Box::new(l2), op, r));
            }
            if !r.is_value() {
                let l0 = l.clone();
                return in_context(st, *r, prog, move |r2| Expr::Op(l0, op, Box::new(r2)));
            }
            match (l.as_value().unwrap(), r.as_value().unwrap()) {
                (Value::Int(a), Value::Int(b)) => match op.apply(a, b) {
                    Ok(n) => Ok(Outcome::Next(Expr::int(n))),
                    Err(_) => Ok(Outcome::Raised),
                },
                _ => stuck("integer operator applied to non-integers".into()),
            }
        }
        Expr::Select(x, f) => {
            let v = match st.stack.get(&x) {
                Some(v) => *v,
                None => return stuck(format!("unbound variable `{x}`")),
            };
            let l = match v {
                Value::Loc(l) => l,
                Value::Null => return Ok(Outcome::Raised),
                Value::Int(_) => return stuck(format!("`{x}` is not an object")),
            };
            let obj = match st.heap.get(l) {
                Some(o) => o,
                None => return stuck(format!("dangling location {l}")),
            };
            let fv = match obj.fields.get(&f) {
                Some(v) => *v,
                None => return stuck(format!("no field `{f}` on `{}`", obj.class)),
            };
            if field_is_strong(prog, &obj.class, &f) {
                st.strong_log.push((l, f, AccessMode::Read));
            }
            Ok(Outcome::Next(Expr::Val(fv)))
        }
        Expr::Update(x, f, rhs) => {
            if !rhs.is_value() {
                let x0 = x.clone();
                let f0 = f.clone();
                return in_context(st, *rhs, prog, move |r2| Expr::Update(x0, f0, Box::new(r2)));
            }
            let v = rhs.as_value().unwrap();
            let l = match st.stack.get(&x) {
                Some(Value::Loc(l)) => *l,
                Some(Value::Null) => return Ok(Outcome::Raised),
                Some(Value::Int(_)) => return stuck(format!("`{x}` is not an object")),
                None => return stuck(format!("unbound variable `{x}`")),
            };
            let class = match st.heap.get(l) {
                Some(o) => o.class.clone(),
                None => return stuck(format!("dangling location {l}")),
            };
            let obj = st.heap.map.get_mut(&l).unwrap();
            if !obj.fields.contains_key(&f) {
                return stuck(format!("no field `{f}` on `{class}`"));
            }
            obj.fields.insert(f.clone(), v);
            if field_is_strong(prog, &class, &f) {
                st.strong_log.push((l, f, AccessMode::Write));
            }
            Ok(Outcome::Next(Expr::Val(Value::Null)))
        }
        Expr::Call(x, m, arg) => {
            if !arg.is_value() {
                let x0 = x.clone();
                let m0 = m.clone();
                return in_context(st, *arg, prog, move |a2| Expr::Call(x0, m0, Box::new(a2)));
            }
            let v = arg.as_value().unwrap();
            let l = match st.stack.get(&x) {
                Some(Value::Loc(l)) => *l,
                Some(Value::Null) => return Ok(Outcome::Raised),
                Some(Value::Int(_)) => return stuck(format!("`{x}` is not an object")),
                None => return stuck(format!("unbound variable `{x}`")),
            };
            let class = match st.heap.get(l) {
                Some(o) => o.class.clone(),
                None => return stuck(format!("dangling location {l}")),
            };
            let md = match prog.class(&class).and_then(|c| c.method(&m)) {
                Some(md) => md.clone(),
                None => return stuck(format!("no method `{m}` on `{class}`")),
            };
            // Close the callee's preconditions over the argument and receiver.
            let mut mini = Stack::new();
            mini.insert(md.param.0.clone(), v);
            mini.insert("this".into(), Value::Loc(l));
            let closed = closure(&st.heap, &mini, &md.pre)
                .map_err(|e| StepError::Stuck(format!("precondition closure failed: {e}")))?;
            st.monitored.extend(closed);
            let fresh_param = st.fresh_var();
            st.stack.insert(fresh_param.clone(), v);
            let mut map = HashMap::new();
            map.insert("this".to_string(), x.clone());
            map.insert(md.param.0.clone(), fresh_param);
            let body = {
                let mut fresh = || st_fresh(st);
                rename_vars(&md.body, &map, &mut fresh)
            };
            Ok(Outcome::Next(body))
        }
        Expr::Let(x, e1, e2) => {
            if !e1.is_value() {
                let x0 = x.clone();
                let e20 = e2.clone();
                return in_context(st, *e1, prog, move |v2| Expr::Let(x0, Box::new(v2), e20));
            }
            let v = e1.as_value().unwrap();
            let x2 = st.fresh_var();
            st.stack.insert(x2.clone(), v);
            let mut map = HashMap::new();
            map.insert(x, x2);
            let body = {
                let mut fresh = || st_fresh(st);
                rename_vars(&e2, &map, &mut fresh)
            };
            Ok(Outcome::Next(body))
        }
        Expr::New(cname) => {
            let class = match prog.class(&cname) {
                Some(c) => c,
                None => return stuck(format!("unknown class `{cname}`")),
            };
            let fields = class
                .fields
                .iter()
                .map(|f| (f.name.clone(), init_value(&f.ty)))
                .collect();
            let l = st.alloc(Obj { class: cname, fields });
            Ok(Outcome::Next(Expr::Val(Value::Loc(l))))
        }
        Expr::Cast(t, e) => {
            if !e.is_value() {
                return in_context(st, *e, prog, move |e2| Expr::Cast(t, Box::new(e2)));
            }
            Ok(Outcome::Next(Expr::Val(e.as_value().unwrap())))
        }
    }
}

// rename_vars needs a fresh-name closure that borrows the state mutably while
// the caller also holds it; route through a raw counter bump instead.
fn st_fresh(st: &mut State) -> Ident {
    st.fresh_var()
}

fn in_context(
    st: &mut State,
    inner: Expr,
    prog: &Program,
    rebuild: impl FnOnce(Expr) -> Expr,
) -> Result<Outcome, StepError> {
    match step_expr(st, inner, prog)? {
        Outcome::Next(e) => Ok(Outcome::Next(rebuild(e))),
        Outcome::Raised => Ok(Outcome::Raised),
    }
}

/// Run an expression to a value, returning the final state and value.
pub fn update(call: &Expr, sigma: &State, prog: &Program) -> Result<(State, Value), UpdateError> {
    update_with_budget(call, sigma, prog, STEP_BUDGET)
}

pub fn update_with_budget(
    call: &Expr,
    sigma: &State,
    prog: &Program,
    budget: u64,
) -> Result<(State, Value), UpdateError> {
    let mut cfg = Configuration { state: sigma.clone(), thread: Thread::Expr(call.clone()) };
    for _ in 0..budget {
        match &cfg.thread {
            Thread::Exn => return Err(UpdateError::Exn),
            Thread::Expr(e) => {
                if let Some(v) = e.as_value() {
                    return Ok((cfg.state, v));
                }
            }
        }
        cfg = step(cfg, prog)?;
    }
    Err(UpdateError::BudgetExceeded)
}

/// Execute a program's main expression from the empty state.
pub fn run_main(prog: &Program) -> Result<(State, Value), UpdateError> {
    update(&prog.main, &State::new(), prog)
}

/// Big-step execution with the same observable behavior as iterating `step`
/// (heap effects, monitored preconditions, access log, result value), using
/// lexical scoping instead of substitution. The oracle's quantification
/// loops run millions of tiny calls; this path avoids the small-step
/// machine's tree rebuilding.
pub fn exec(call: &Expr, sigma: &State, prog: &Program) -> Result<(State, Value), UpdateError> {
    let mut st = sigma.clone();
    let mut scope: Vec<(Ident, Value)> = Vec::new();
    let mut fuel = STEP_BUDGET;
    match eval_big(&mut st, &mut scope, call, prog, &mut fuel) {
        Ok(v) => Ok((st, v)),
        Err(BigStepError::Exn) => Err(UpdateError::Exn),
        Err(BigStepError::Fuel) => Err(UpdateError::BudgetExceeded),
        Err(BigStepError::Stuck(m)) => Err(UpdateError::Step(StepError::Stuck(m))),
    }
}

enum BigStepError {
    Exn,
    Fuel,
    Stuck(String),
}

fn lookup(st: &State, scope: &[(Ident, Value)], x: &str) -> Option<Value> {
    scope
        .iter()
        .rev()
        .find(|(n, _)| n == x)
        .map(|(_, v)| *v)
        .or_else(|| st.stack.get(x).copied())
}

fn eval_big(
    st: &mut State,
    scope: &mut Vec<(Ident, Value)>,
    e: &Expr,
    prog: &Program,
    fuel: &mut u64,
) -> Result<Value, BigStepError> {
    if *fuel == 0 {
        return Err(BigStepError::Fuel);
    }
    *fuel -= 1;
    let object = |st: &State, scope: &[(Ident, Value)], x: &str| -> Result<Loc, BigStepError> {
        match lookup(st, scope, x) {
            Some(Value::Loc(l)) => Ok(l),
            Some(Value::Null) => Err(BigStepError::Exn),
            Some(Value::Int(_)) => Err(BigStepError::Stuck(format!("`{x}` is not an object"))),
            None => Err(BigStepError::Stuck(format!("unbound variable `{x}`"))),
        }
    };
    match e {
        Expr::Val(v) => Ok(*v),
        Expr::Var(x) => {
            lookup(st, scope, x).ok_or_else(|| BigStepError::Stuck(format!("unbound `{x}`")))
        }
        Expr::Op(l, op, r) => {
            let lv = eval_big(st, scope, l, prog, fuel)?;
            let rv = eval_big(st, scope, r, prog, fuel)?;
            match (lv, rv) {
                (Value::Int(a), Value::Int(b)) => match op.apply(a, b) {
                    Ok(n) => Ok(Value::Int(n)),
                    Err(_) => Err(BigStepError::Exn),
                },
                _ => Err(BigStepError::Stuck("integer operator on non-integers".into())),
            }
        }
        Expr::Select(x, f) => {
            let l = object(st, scope, x)?;
            let obj = st.heap.get(l).ok_or_else(|| BigStepError::Stuck(format!("dangling {l}")))?;
            let v = obj
                .fields
                .get(f)
                .copied()
                .ok_or_else(|| BigStepError::Stuck(format!("no field `{f}`")))?;
            if field_is_strong(prog, &obj.class, f) {
                st.strong_log.push((l, f.clone(), AccessMode::Read));
            }
            Ok(v)
        }
        Expr::Update(x, f, rhs) => {
            let v = eval_big(st, scope, rhs, prog, fuel)?;
            let l = object(st, scope, x)?;
            let class = st
                .heap
                .get(l)
                .map(|o| o.class.clone())
                .ok_or_else(|| BigStepError::Stuck(format!("dangling {l}")))?;
            let obj = st.heap.map.get_mut(&l).expect("checked");
            if !obj.fields.contains_key(f) {
                return Err(BigStepError::Stuck(format!("no field `{f}`")));
            }
            obj.fields.insert(f.clone(), v);
            if field_is_strong(prog, &class, f) {
                st.strong_log.push((l, f.clone(), AccessMode::Write));
            }
            Ok(Value::Null)
        }
        Expr::Call(x, m, arg) => {
            let v = eval_big(st, scope, arg, prog, fuel)?;
            let l = object(st, scope, x)?;
            let class = st
                .heap
                .get(l)
                .map(|o| o.class.clone())
                .ok_or_else(|| BigStepError::Stuck(format!("dangling {l}")))?;
            let md = prog
                .class(&class)
                .and_then(|c| c.method(m))
                .cloned()
                .ok_or_else(|| BigStepError::Stuck(format!("no method `{class}.{m}`")))?;
            let mut mini = Stack::new();
            mini.insert(md.param.0.clone(), v);
            mini.insert("this".into(), Value::Loc(l));
            let closed = closure(&st.heap, &mini, &md.pre)
                .map_err(|e| BigStepError::Stuck(format!("precondition closure failed: {e}")))?;
            st.monitored.extend(closed);
            let depth = scope.len();
            scope.push(("this".into(), Value::Loc(l)));
            scope.push((md.param.0.clone(), v));
            let out = eval_big(st, scope, &md.body, prog, fuel);
            scope.truncate(depth);
            out
        }
        Expr::Let(x, e1, e2) => {
            let v = eval_big(st, scope, e1, prog, fuel)?;
            scope.push((x.clone(), v));
            let out = eval_big(st, scope, e2, prog, fuel);
            scope.pop();
            out
        }
        Expr::New(cname) => {
            let class = prog
                .class(cname)
                .ok_or_else(|| BigStepError::Stuck(format!("unknown class `{cname}`")))?;
            let fields =
                class.fields.iter().map(|f| (f.name.clone(), init_value(&f.ty))).collect();
            Ok(Value::Loc(st.alloc(Obj { class: cname.clone(), fields })))
        }
        Expr::Cast(_, e) => eval_big(st, scope, e, prog, fuel),
    }
}

/// Heap equality modulo a bijection on locations allocated at or above the
/// watermark. Pre-existing locations must match exactly.
pub fn heaps_equal_mod_fresh(watermark: u64, a: &Heap, b: &Heap) -> bool {
    let fresh_a: Vec<Loc> = a.map.keys().copied().filter(|l| l.0 >= watermark).collect();
    let fresh_b: Vec<Loc> = b.map.keys().copied().filter(|l| l.0 >= watermark).collect();
    if fresh_a.len() != fresh_b.len() {
        return false;
    }
    let pi: BTreeMap<Loc, Loc> = fresh_a.iter().copied().zip(fresh_b.iter().copied()).collect();
    let translate = |v: Value| match v {
        Value::Loc(l) if l.0 >= watermark => pi.get(&l).map(|l2| Value::Loc(*l2)),
        v => Some(v),
    };
    if a.map.len() != b.map.len() {
        return false;
    }
    for (l, obj) in &a.map {
        let lb = if l.0 >= watermark { pi[l] } else { *l };
        let Some(objb) = b.map.get(&lb) else { return false };
        if obj.class != objb.class || obj.fields.len() != objb.fields.len() {
            return false;
        }
        for (f, v) in &obj.fields {
            let Some(vb) = objb.fields.get(f) else { return false };
            match translate(*v) {
                Some(vt) if vt == *vb => {}
                _ => return false,
            }
        }
    }
    true
}
