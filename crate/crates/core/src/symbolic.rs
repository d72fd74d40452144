//! Symbolic configurations and the effect reduction relation: bootstrap heap
//! generation from alias cases, single-buffer effect execution, and symbolic
//! method sequences.

use crate::ast::*;
use crate::domain::BoundedDomain;
use crate::effect::{infer_method_effect, rename_effect, Effect, EffectError, EffectExpr, EffectVar};
use crate::formula::{sat_bounded, Formula, FormulaError, SymValue, SymVar, VarRole};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// A symbolic invariant: both sides already resolved to symbolic values.
pub type SymInv = (SymValue, Rel, SymValue);

pub fn syminv_formula(inv: &SymInv) -> Formula {
    Formula::Cmp(inv.0.clone(), inv.1, inv.2.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSlot {
    pub ty: Type,
    pub weak: bool,
    pub invs: Vec<Invariant>,
    pub value: SymValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EObj {
    pub class: Ident,
    /// Declaration order preserved.
    pub fields: Vec<(Ident, FieldSlot)>,
}

impl EObj {
    pub fn slot(&self, f: &str) -> Option<&FieldSlot> {
        self.fields.iter().find(|(n, _)| n == f).map(|(_, s)| s)
    }

    fn slot_mut(&mut self, f: &str) -> Option<&mut FieldSlot> {
        self.fields.iter_mut().find(|(n, _)| n == f).map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ELog {
    Access(Loc, Ident, crate::interp::AccessMode),
    Sep,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EState {
    pub heap: BTreeMap<Loc, EObj>,
    pub stack: BTreeMap<Ident, SymValue>,
    pub log: Vec<ELog>,
    /// Whether any weak field was read or written so far.
    pub touched_weak: bool,
    next_loc: u64,
    next_obj: u64,
}

impl EState {
    pub fn obj(&self, l: Loc) -> Option<&EObj> {
        self.heap.get(&l)
    }

    /// Weak-field symbols currently stored in the heap.
    pub fn weak_vars(&self) -> Vec<SymVar> {
        let mut out = BTreeMap::new();
        for obj in self.heap.values() {
            for (_, slot) in &obj.fields {
                if slot.weak {
                    slot.value.free_vars(&mut out);
                }
            }
        }
        out.into_values().filter(|v| v.role == VarRole::Weak).collect()
    }

    /// Field-invariant closure over the current heap values.
    pub fn invariants(&self) -> Vec<SymInv> {
        let mut out = Vec::new();
        for obj in self.heap.values() {
            for (_, slot) in &obj.fields {
                for inv in &slot.invs {
                    let side = |d: &InvValue| match d {
                        // wfField guarantees the only field mentioned is the
                        // slot's own; close it with the current value.
                        InvValue::Field(_, _) => slot.value.clone(),
                        InvValue::Val(v) => SymValue::from_value(*v),
                        InvValue::Var(x) => SymValue::var(x.clone(), VarRole::Param),
                    };
                    out.push((side(&inv.lhs), inv.rel, side(&inv.rhs)));
                }
            }
        }
        out
    }

    /// Subset of the invariant closure belonging to weak fields.
    pub fn weak_invariants(&self) -> Vec<SymInv> {
        let mut out = Vec::new();
        for obj in self.heap.values() {
            for (_, slot) in &obj.fields {
                if !slot.weak {
                    continue;
                }
                for inv in &slot.invs {
                    let side = |d: &InvValue| match d {
                        InvValue::Field(_, _) => slot.value.clone(),
                        InvValue::Val(v) => SymValue::from_value(*v),
                        InvValue::Var(x) => SymValue::var(x.clone(), VarRole::Param),
                    };
                    out.push((side(&inv.lhs), inv.rel, side(&inv.rhs)));
                }
            }
        }
        out
    }
}

/// Role names (`this1`, `other2`, ...) mapped to their generated locations.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Reserved(pub BTreeMap<String, Loc>);

/// An alias case: a partition of the active role names. Roles sharing a
/// block denote the same heap object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AliasCase {
    pub blocks: Vec<Vec<String>>,
}

impl AliasCase {
    fn canonical(mut blocks: Vec<Vec<String>>) -> AliasCase {
        for b in &mut blocks {
            b.sort();
        }
        blocks.sort();
        AliasCase { blocks }
    }

    pub fn roles(&self) -> Vec<&String> {
        self.blocks.iter().flatten().collect()
    }

    pub fn same_block(&self, a: &str, b: &str) -> bool {
        self.blocks.iter().any(|blk| blk.iter().any(|r| r == a) && blk.iter().any(|r| r == b))
    }

    /// `this1=this2|other1` style rendering; singleton blocks are implicit
    /// unless every block is a singleton, which prints as `distinct`.
    pub fn label(&self) -> String {
        let joined: Vec<String> = self
            .blocks
            .iter()
            .filter(|b| b.len() > 1)
            .map(|b| b.join("="))
            .collect();
        if joined.is_empty() {
            "distinct".to_string()
        } else {
            joined.join("|")
        }
    }

    /// Parse a label against a set of active roles.
    pub fn from_label(label: &str, roles: &[String]) -> Option<AliasCase> {
        fn find(parent: &mut HashMap<String, String>, x: &str) -> Option<String> {
            let mut cur = x.to_string();
            loop {
                let p = parent.get(&cur)?.clone();
                if p == cur {
                    return Some(cur);
                }
                cur = p;
            }
        }
        let mut parent: HashMap<String, String> =
            roles.iter().map(|r| (r.clone(), r.clone())).collect();
        if label.trim() != "distinct" {
            for group in label.split('|') {
                let members: Vec<&str> = group.split('=').map(str::trim).collect();
                for pair in members.windows(2) {
                    let a = find(&mut parent, pair[0])?;
                    let b = find(&mut parent, pair[1])?;
                    parent.insert(a, b);
                }
            }
        }
        let mut blocks: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in roles {
            let root = find(&mut parent, r)?;
            blocks.entry(root).or_default().push(r.clone());
        }
        Some(AliasCase::canonical(blocks.into_values().collect()))
    }
}

impl fmt::Display for AliasCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Active roles for a method pair: the two receivers plus each object-typed
/// parameter, with their classes.
pub fn pair_roles(md1: &MethodDecl, c1: &str, md2: &MethodDecl, c2: &str) -> Vec<(String, Ident)> {
    let mut roles = vec![("this1".to_string(), c1.to_string()), ("this2".to_string(), c2.to_string())];
    if let Type::Named(p) = &md1.param.1 {
        roles.push(("other1".to_string(), p.clone()));
    }
    if let Type::Named(p) = &md2.param.1 {
        roles.push(("other2".to_string(), p.clone()));
    }
    roles
}

/// All set partitions of the active roles, filtered so a block only merges
/// roles of the same class. Deterministic order, coarsest first.
pub fn enumerate_alias_cases_for(roles: &[(String, Ident)]) -> Vec<AliasCase> {
    let mut parts: Vec<Vec<Vec<usize>>> = Vec::new();
    partitions_rec(0, roles.len(), &mut Vec::new(), &mut parts);
    let mut out: Vec<AliasCase> = parts
        .into_iter()
        .filter(|blocks| {
            blocks.iter().all(|b| {
                let class = &roles[b[0]].1;
                b.iter().all(|&i| roles[i].1 == *class)
            })
        })
        .map(|blocks| {
            AliasCase::canonical(
                blocks
                    .into_iter()
                    .map(|b| b.into_iter().map(|i| roles[i].0.clone()).collect())
                    .collect(),
            )
        })
        .collect();
    out.sort_by_key(|c| (c.blocks.len(), c.label()));
    out.dedup();
    out
}

pub fn enumerate_alias_cases(
    md1: &MethodDecl,
    c1: &str,
    md2: &MethodDecl,
    c2: &str,
) -> Vec<AliasCase> {
    enumerate_alias_cases_for(&pair_roles(md1, c1, md2, c2))
}

fn partitions_rec(i: usize, n: usize, acc: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
    if i == n {
        out.push(acc.clone());
        return;
    }
    for b in 0..acc.len() {
        acc[b].push(i);
        partitions_rec(i + 1, n, acc, out);
        acc[b].pop();
    }
    acc.push(vec![i]);
    partitions_rec(i + 1, n, acc, out);
    acc.pop();
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolicError {
    #[error("{0}")]
    Effect(#[from] EffectError),
    #[error("cannot generate an instance of `{0}`: not a declared class")]
    NotAClass(Ident),
    #[error("class graph recursion exceeds depth {0} during heap generation")]
    GenDepth(usize),
    #[error("cannot locate `{0}` during symbolic execution")]
    Locate(Ident),
    #[error("no field `{1}` at {0}")]
    NoField(Loc, Ident),
    #[error("effect list is empty")]
    EmptyEffect,
    #[error("final preconditions are unsatisfiable: {0}")]
    UnsatPreconditions(String),
    #[error("constraint engine failure: {0}")]
    Formula(#[from] FormulaError),
    #[error("alias case mentions roles {0:?} of different classes")]
    ClassMismatch(Vec<String>),
}

/// Nested object generation depth cap.
pub const GEN_DEPTH: usize = 3;

/// A symbolic configuration mid-run: state, accumulated preconditions, the
/// remaining effect list, and the single return-value buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ECfg {
    pub state: EState,
    pub pre: Vec<SymInv>,
    pub list: Vec<EffectExpr>,
    pub buffer: SymValue,
}

/// Generate the bootstrap state for an alias case: one symbolic object per
/// block, fresh symbols for integer fields, recursively generated instances
/// for object fields.
pub fn gen_bootstrap(
    h: &AliasCase,
    roles: &[(String, Ident)],
    prog: &Program,
) -> Result<(EState, Reserved), SymbolicError> {
    let mut state = EState::default();
    let mut rho = Reserved::default();
    let class_of = |r: &str| -> Option<&Ident> {
        roles.iter().find(|(name, _)| name == r).map(|(_, c)| c)
    };
    for block in &h.blocks {
        let class = class_of(&block[0]).cloned().ok_or_else(|| {
            SymbolicError::ClassMismatch(block.clone())
        })?;
        if block.iter().any(|r| class_of(r) != Some(&class)) {
            return Err(SymbolicError::ClassMismatch(block.clone()));
        }
        let l = gen_instance(&mut state, &class, prog, 0)?;
        for r in block {
            rho.0.insert(r.clone(), l);
        }
    }
    Ok((state, rho))
}

fn gen_instance(
    state: &mut EState,
    class: &str,
    prog: &Program,
    depth: usize,
) -> Result<Loc, SymbolicError> {
    if depth > GEN_DEPTH {
        return Err(SymbolicError::GenDepth(GEN_DEPTH));
    }
    let decl = prog.class(class).ok_or_else(|| SymbolicError::NotAClass(class.into()))?.clone();
    let idx = state.next_obj;
    state.next_obj += 1;
    let l = Loc(state.next_loc);
    state.next_loc += 1;
    // Reserve the location before generating nested instances so allocation
    // order stays readable.
    state.heap.insert(
        l,
        EObj { class: class.to_string(), fields: Vec::new() },
    );
    let mut fields = Vec::new();
    for fd in &decl.fields {
        let value = match &fd.ty {
            Type::Int => {
                let role = if fd.weak { VarRole::Weak } else { VarRole::Strong };
                SymValue::var(format!("o{idx}_{}", fd.name), role)
            }
            Type::Unit => SymValue::Null,
            Type::Named(n) => {
                if prog.class(n).is_some() {
                    let nested = gen_instance(state, n, prog, depth + 1)?;
                    SymValue::Loc(nested)
                } else {
                    // Interface-typed fields have no canonical instance.
                    return Err(SymbolicError::NotAClass(n.clone()));
                }
            }
        };
        fields.push((
            fd.name.clone(),
            FieldSlot { ty: fd.ty.clone(), weak: fd.weak, invs: fd.invs.clone(), value },
        ));
    }
    state.heap.get_mut(&l).expect("just inserted").fields = fields;
    Ok(l)
}

/// `locate`: a role location, a stack-bound location, or nothing.
fn locate(state: &EState, rho: &Reserved, x: &str) -> Option<Loc> {
    if let Some(l) = rho.0.get(x) {
        return Some(*l);
    }
    match state.stack.get(x) {
        Some(SymValue::Loc(l)) => Some(*l),
        _ => None,
    }
}

/// Resolve a syntactic symbolic-value operand against the stack: bound
/// variables are substituted, unbound ones become free parameter symbols.
fn resolve_operand(state: &EState, rho: &Reserved, e: &Expr) -> Result<SymValue, SymbolicError> {
    match e {
        Expr::Val(v) => Ok(SymValue::from_value(*v)),
        Expr::Var(x) => Ok(resolve_var(state, rho, x)),
        Expr::Op(l, op, r) => Ok(SymValue::op(
            resolve_operand(state, rho, l)?,
            *op,
            resolve_operand(state, rho, r)?,
        )),
        other => Err(SymbolicError::Locate(format!("non-symbolic operand {other:?}"))),
    }
}

fn resolve_var(state: &EState, rho: &Reserved, x: &str) -> SymValue {
    if let Some(l) = rho.0.get(x) {
        return SymValue::Loc(*l);
    }
    match state.stack.get(x) {
        Some(sv) => sv.clone(),
        None => SymValue::var(x.to_string(), VarRole::Param),
    }
}

/// Close invariants over a symbolic state: variables resolve through the
/// stack (unbound ones stay as free parameter symbols), field selections
/// through role or stack locations into the heap.
pub fn closure_sym(
    state: &EState,
    rho: &Reserved,
    invs: &[Invariant],
) -> Result<Vec<SymInv>, SymbolicError> {
    invs.iter()
        .map(|inv| {
            let side = |d: &InvValue| -> Result<SymValue, SymbolicError> {
                match d {
                    InvValue::Val(v) => Ok(SymValue::from_value(*v)),
                    InvValue::Var(x) => Ok(resolve_var(state, rho, x)),
                    InvValue::Field(x, f) => {
                        let l = locate(state, rho, x).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
                        let obj = state.heap.get(&l).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
                        obj.slot(f)
                            .map(|s| s.value.clone())
                            .ok_or_else(|| SymbolicError::NoField(l, f.clone()))
                    }
                }
            };
            Ok((side(&inv.lhs)?, inv.rel, side(&inv.rhs)?))
        })
        .collect()
}

/// Consume exactly the head of the effect list.
pub fn step_symbolic(rho: &Reserved, ecfg: &ECfg) -> Result<ECfg, SymbolicError> {
    let mut cfg = ecfg.clone();
    let head = if cfg.list.is_empty() {
        return Err(SymbolicError::EmptyEffect);
    } else {
        cfg.list.remove(0)
    };
    match head {
        EffectExpr::RetVal(v) => {
            cfg.buffer = SymValue::from_value(v);
        }
        EffectExpr::RetVar(x) => {
            cfg.buffer = resolve_var(&cfg.state, rho, &x);
        }
        EffectExpr::RetField(x, f) => {
            let l = locate(&cfg.state, rho, &x).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
            let obj = cfg.state.heap.get(&l).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
            let slot = obj.slot(&f).ok_or_else(|| SymbolicError::NoField(l, f.clone()))?;
            cfg.buffer = slot.value.clone();
            if slot.weak {
                cfg.state.touched_weak = true;
            } else {
                cfg.state.log.push(ELog::Access(l, f, crate::interp::AccessMode::Read));
            }
        }
        EffectExpr::Op(op, operand) => {
            let sv2 = resolve_operand(&cfg.state, rho, &operand)?;
            cfg.buffer = SymValue::op(cfg.buffer.clone(), op, sv2);
        }
        EffectExpr::Var(EffectVar::Field(x, f)) => {
            let l = locate(&cfg.state, rho, &x).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
            let buffer = cfg.buffer.clone();
            let obj = cfg.state.heap.get_mut(&l).ok_or_else(|| SymbolicError::Locate(x.clone()))?;
            let weak = {
                let slot = obj.slot_mut(&f).ok_or_else(|| SymbolicError::NoField(l, f.clone()))?;
                slot.value = buffer;
                slot.weak
            };
            if weak {
                cfg.state.touched_weak = true;
            } else {
                cfg.state.log.push(ELog::Access(l, f, crate::interp::AccessMode::Write));
            }
            cfg.buffer = SymValue::Null;
        }
        EffectExpr::Var(EffectVar::BindL(x)) => {
            cfg.state.stack.insert(x, cfg.buffer.clone());
            cfg.buffer = SymValue::Null;
        }
        EffectExpr::Var(EffectVar::BindC(y, pre)) => {
            cfg.state.stack.insert(y, cfg.buffer.clone());
            let closed = closure_sym(&cfg.state, rho, &pre)?;
            cfg.pre.extend(closed);
            cfg.buffer = SymValue::Null;
        }
        EffectExpr::New(class, fds) => {
            let idx = cfg.state.next_obj;
            cfg.state.next_obj += 1;
            let l = Loc(cfg.state.next_loc);
            cfg.state.next_loc += 1;
            let fields = fds
                .iter()
                .map(|fd| {
                    let value = match &fd.ty {
                        Type::Int => {
                            let role = if fd.weak { VarRole::Weak } else { VarRole::Strong };
                            SymValue::var(format!("o{idx}_{}", fd.name), role)
                        }
                        _ => SymValue::Null,
                    };
                    (
                        fd.name.clone(),
                        FieldSlot { ty: fd.ty.clone(), weak: fd.weak, invs: fd.invs.clone(), value },
                    )
                })
                .collect();
            cfg.state.heap.insert(l, EObj { class, fields });
            cfg.buffer = SymValue::Loc(l);
        }
    }
    Ok(cfg)
}

/// Run an effect to completion; the accumulated preconditions must be
/// satisfiable over the bounded domain.
pub fn update_symbolic(
    rho: &Reserved,
    ecfg: &ECfg,
    dom: &BoundedDomain,
) -> Result<ECfg, SymbolicError> {
    let mut cfg = ecfg.clone();
    while !cfg.list.is_empty() {
        cfg = step_symbolic(rho, &cfg)?;
    }
    let conj = Formula::and(cfg.pre.iter().map(syminv_formula).collect());
    if sat_bounded(&conj, dom)?.is_none() {
        return Err(SymbolicError::UnsatPreconditions(conj.to_string()));
    }
    Ok(cfg)
}

/// Everything a pair analysis needs: the bootstrap state, role map, and the
/// two methods' effects instantiated onto their role names and per-side
/// parameter symbols.
#[derive(Debug, Clone)]
pub struct PairCtx {
    pub gen_state: EState,
    pub rho: Reserved,
    pub roles: Vec<(String, Ident)>,
    pub eff: [Effect; 2],
    /// Integer parameter symbol name per side, if the parameter is an int.
    pub param_sym: [Option<String>; 2],
}

/// Instantiate a method effect for side `i` (1 or 2): `this` becomes
/// `this{i}`, an object parameter becomes `other{i}`, an integer parameter
/// becomes the free symbol `p{i}_<name>`.
pub fn instantiate_effect(eff: &Effect, md: &MethodDecl, side: usize) -> (Effect, Option<String>) {
    let mut map = HashMap::new();
    map.insert("this".to_string(), format!("this{side}"));
    let mut param_sym = None;
    match &md.param.1 {
        Type::Named(_) => {
            map.insert(md.param.0.clone(), format!("other{side}"));
        }
        _ => {
            let name = format!("p{side}_{}", md.param.0);
            map.insert(md.param.0.clone(), name.clone());
            param_sym = Some(name);
        }
    }
    let list = rename_effect(&eff.list, &map);
    let pre = eff.pre.iter().map(|c| c.rename(&map)).collect();
    (Effect { pre, list }, param_sym)
}

pub fn pair_ctx(
    h: &AliasCase,
    prog: &Program,
    c1: &str,
    md1: &MethodDecl,
    c2: &str,
    md2: &MethodDecl,
) -> Result<PairCtx, SymbolicError> {
    let roles = pair_roles(md1, c1, md2, c2);
    let (gen_state, rho) = gen_bootstrap(h, &roles, prog)?;
    let raw1 = infer_method_effect(prog, c1, &md1.name)?;
    let raw2 = infer_method_effect(prog, c2, &md2.name)?;
    let (eff1, p1) = instantiate_effect(&raw1, md1, 1);
    let (eff2, p2) = instantiate_effect(&raw2, md2, 2);
    Ok(PairCtx {
        gen_state,
        rho,
        roles,
        eff: [eff1, eff2],
        param_sym: [p1, p2],
    })
}

/// The outcome of one symbolic method sequence `first ; second`.
#[derive(Debug, Clone)]
pub struct SeqRun {
    /// State after the first method (stack still populated).
    pub mid: EState,
    /// Final state: stack reset before the second method, separator logged.
    pub fin: EState,
    /// Preconditions accumulated by the first run, closed over the bootstrap
    /// state.
    pub pre_first: Vec<SymInv>,
    /// Preconditions of the second run, closed over the intermediate state.
    pub pre_second: Vec<SymInv>,
}

/// Execute `sides[0]` then `sides[1]` (1-based side indices into `ctx.eff`)
/// from the bootstrap state.
pub fn run_sequence(
    ctx: &PairCtx,
    sides: [usize; 2],
    dom: &BoundedDomain,
) -> Result<SeqRun, SymbolicError> {
    let eff_a = &ctx.eff[sides[0] - 1];
    let state0 = ctx.gen_state.clone();
    let pre_a = closure_sym(&state0, &ctx.rho, &eff_a.pre)?;
    let cfg_a = ECfg { state: state0, pre: pre_a, list: eff_a.list.clone(), buffer: SymValue::Null };
    let done_a = update_symbolic(&ctx.rho, &cfg_a, dom)?;
    let mid = done_a.state.clone();

    let mut between = done_a.state;
    between.stack.clear();
    between.log.push(ELog::Sep);

    let eff_b = &ctx.eff[sides[1] - 1];
    let pre_b = closure_sym(&between, &ctx.rho, &eff_b.pre)?;
    let cfg_b =
        ECfg { state: between, pre: pre_b.clone(), list: eff_b.list.clone(), buffer: SymValue::Null };
    let done_b = update_symbolic(&ctx.rho, &cfg_b, dom)?;

    Ok(SeqRun { mid, fin: done_b.state, pre_first: done_a.pre, pre_second: done_b.pre })
}

/// Symbolic method sequence `md1 ; md2` under an alias case: final heap, the
/// separated strong-field log, and both closed precondition sets.
pub fn symbolic_sequence(
    h: &AliasCase,
    prog: &Program,
    c1: &str,
    md1: &MethodDecl,
    c2: &str,
    md2: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<(EState, Vec<ELog>, (Vec<SymInv>, Vec<SymInv>)), SymbolicError> {
    let ctx = pair_ctx(h, prog, c1, md1, c2, md2)?;
    let run = run_sequence(&ctx, [1, 2], dom)?;
    let log = run.fin.log.clone();
    Ok((run.fin.clone(), log, (run.pre_first, run.pre_second)))
}
