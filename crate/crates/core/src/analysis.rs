//! Static anticipation analysis: heap equations, commutativity conditions,
//! permissibility formulas, strong-field non-interference, and the per-pair
//! method anticipation algorithm producing runtime-checkable residuals.

use crate::ast::*;
use crate::domain::BoundedDomain;
use crate::effect::EffectError;
use crate::formula::{
    normalize, sat_bounded, simplify, valid_bounded, Formula, FormulaError, SymValue, SymVar,
    VarRole,
};
use crate::interp::AccessMode;
use crate::symbolic::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Symbolic(#[from] SymbolicError),
    #[error("{0}")]
    Effect(#[from] EffectError),
    #[error("{0}")]
    Formula(#[from] FormulaError),
    #[error("final heaps differ in shape: {0}")]
    DomainMismatch(String),
    #[error("unknown class or method {0}")]
    Unknown(String),
}

/// Field-by-field equations between two final heaps, normalized, with
/// trivially-true entries dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Eqs(pub Vec<(SymValue, SymValue)>);

impl Eqs {
    pub fn formulas(&self) -> Vec<Formula> {
        self.0.iter().map(|(l, r)| Formula::Cmp(l.clone(), Rel::Eq, r.clone())).collect()
    }
}

pub fn heap_equations(eh1: &EState, eh2: &EState) -> Result<Eqs, AnalysisError> {
    if eh1.heap.len() != eh2.heap.len() {
        return Err(AnalysisError::DomainMismatch(format!(
            "{} vs {} objects",
            eh1.heap.len(),
            eh2.heap.len()
        )));
    }
    let mut out = Vec::new();
    for ((l1, o1), (l2, o2)) in eh1.heap.iter().zip(eh2.heap.iter()) {
        if l1 != l2 || o1.class != o2.class {
            return Err(AnalysisError::DomainMismatch(format!("{l1} vs {l2}")));
        }
        for ((f1, s1), (_, s2)) in o1.fields.iter().zip(o2.fields.iter()) {
            let a = normalize(&s1.value);
            let b = normalize(&s2.value);
            if a != b {
                let _ = f1;
                out.push((a, b));
            }
        }
    }
    Ok(Eqs(out))
}

/// The commutativity conditions of a pair under an alias case: equations
/// between the two execution orders' heaps, and the invariant/precondition
/// set they are judged under.
pub fn commute_conditions(
    h: &AliasCase,
    prog: &Program,
    c1: &str,
    md1: &MethodDecl,
    c2: &str,
    md2: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<(Eqs, Vec<SymInv>), AnalysisError> {
    let ctx = pair_ctx(h, prog, c1, md1, c2, md2)?;
    let seq12 = run_sequence(&ctx, [1, 2], dom)?;
    let seq21 = run_sequence(&ctx, [2, 1], dom)?;
    let eqs = heap_equations(&seq12.fin, &seq21.fin)?;
    let cc = collect_cc(&ctx, &seq12, &seq21);
    Ok((eqs, cc))
}

fn collect_cc(ctx: &PairCtx, seq12: &SeqRun, seq21: &SeqRun) -> Vec<SymInv> {
    let mut cc = ctx.gen_state.invariants();
    for set in [&seq12.pre_first, &seq12.pre_second, &seq21.pre_first, &seq21.pre_second] {
        cc.extend(set.iter().cloned());
    }
    dedupe_invs(cc)
}

fn dedupe_invs(invs: Vec<SymInv>) -> Vec<SymInv> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for inv in invs {
        let key = (normalize(&inv.0), inv.1, normalize(&inv.2));
        if !seen.contains(&key) {
            seen.push(key);
            out.push(inv);
        }
    }
    out
}

/// Permissibility formulas of a method symbolically executed from `state`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermFormulas {
    /// inv(pre) ∧ guards ⇒ inv(post)
    pub sp: Formula,
    /// inv(pre) ∧ guards ⇒ ¬inv(post)
    pub snp: Formula,
    /// Universal closure of `sp` over the free variables of the pre-state
    /// invariants and guards.
    pub slp: Formula,
}

/// One symbolic run plus the pieces permissibility formulas are built from.
#[derive(Debug, Clone)]
pub struct PermRun {
    pub pre_state: EState,
    pub post_state: EState,
    pub guards: Vec<SymInv>,
    pub forms: PermFormulas,
}

fn perm_run(
    state: &EState,
    rho: &Reserved,
    eff: &crate::effect::Effect,
    dom: &BoundedDomain,
) -> Result<PermRun, AnalysisError> {
    let pre = closure_sym(state, rho, &eff.pre)?;
    let cfg = ECfg { state: state.clone(), pre, list: eff.list.clone(), buffer: SymValue::Null };
    let done = update_symbolic(rho, &cfg, dom)?;
    let inv_pre: Vec<Formula> = state.invariants().iter().map(syminv_formula).collect();
    let inv_post: Vec<Formula> = done.state.invariants().iter().map(syminv_formula).collect();
    let mut antecedent = inv_pre.clone();
    antecedent.extend(done.pre.iter().map(syminv_formula));
    let sp = Formula::implies(Formula::and(antecedent.clone()), Formula::and(inv_post.clone()));
    let snp = Formula::implies(
        Formula::and(antecedent),
        Formula::not(Formula::and(inv_post)),
    );
    let mut fv: Vec<SymVar> = sp.free_vars().into_values().collect();
    fv.sort();
    let slp = Formula::forall(fv, sp.clone());
    Ok(PermRun {
        pre_state: state.clone(),
        post_state: done.state,
        guards: done.pre,
        forms: PermFormulas { sp, snp, slp },
    })
}

/// Permissibility formulas for a method alone in a bootstrap state generated
/// for its own receiver (and object parameter, if any) under an alias case.
pub fn static_permissibility(
    h: &AliasCase,
    prog: &Program,
    class: &str,
    md: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<PermFormulas, AnalysisError> {
    let roles = solo_roles(md, class);
    let (state, rho) = gen_bootstrap(h, &roles, prog)?;
    let raw = crate::effect::infer_method_effect(prog, class, &md.name)?;
    let (eff, _) = instantiate_effect(&raw, md, 1);
    Ok(perm_run(&state, &rho, &eff, dom)?.forms)
}

/// Roles for analyzing one method on its own (side 1).
pub fn solo_roles(md: &MethodDecl, class: &str) -> Vec<(String, Ident)> {
    let mut roles = vec![("this1".to_string(), class.to_string())];
    if let Type::Named(p) = &md.param.1 {
        roles.push(("other1".to_string(), p.clone()));
    }
    roles
}

/// Local-permissibility verdict for a method: its sLP formula is valid over
/// the bounded domain for every solo alias case.
pub fn lp_verdict(
    prog: &Program,
    class: &str,
    md: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<bool, AnalysisError> {
    let roles = solo_roles(md, class);
    for h in enumerate_alias_cases_for(&roles) {
        let forms = static_permissibility(&h, prog, class, md, dom)?;
        if !valid_bounded(&forms.slp, dom)?.is_valid() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Which parts of the state a method touches during symbolic execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Surface {
    pub weak: bool,
    pub strong_read: bool,
    pub strong_write: bool,
}

impl Surface {
    pub fn strong(&self) -> bool {
        self.strong_read || self.strong_write
    }
}

pub fn method_surface(
    prog: &Program,
    class: &str,
    md: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<Surface, AnalysisError> {
    let roles = solo_roles(md, class);
    let labels: Vec<String> = roles.iter().map(|(r, _)| r.clone()).collect();
    let h = AliasCase::from_label("distinct", &labels)
        .expect("distinct case always exists");
    let (state, rho) = gen_bootstrap(&h, &roles, prog)?;
    let raw = crate::effect::infer_method_effect(prog, class, &md.name)?;
    let (eff, _) = instantiate_effect(&raw, md, 1);
    let run = perm_run(&state, &rho, &eff, dom)?;
    let mut s = Surface { weak: run.post_state.touched_weak, ..Default::default() };
    for e in &run.post_state.log {
        match e {
            ELog::Access(_, _, AccessMode::Read) => s.strong_read = true,
            ELog::Access(_, _, AccessMode::Write) => s.strong_write = true,
            ELog::Sep => {}
        }
    }
    Ok(s)
}

/// Strong-field non-interference for `md1 ; md2`: no strong field read by
/// md2 (right of the separator) was written by md1 (left of it).
pub fn sfni(
    h: &AliasCase,
    prog: &Program,
    c1: &str,
    md1: &MethodDecl,
    c2: &str,
    md2: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<bool, AnalysisError> {
    let (_, log, _) = symbolic_sequence(h, prog, c1, md1, c2, md2, dom)?;
    Ok(sfni_of_log(&log))
}

pub fn sfni_of_log(log: &[ELog]) -> bool {
    let sep = log.iter().position(|e| matches!(e, ELog::Sep)).unwrap_or(log.len());
    let writes: Vec<(&Loc, &Ident)> = log[..sep]
        .iter()
        .filter_map(|e| match e {
            ELog::Access(l, f, AccessMode::Write) => Some((l, f)),
            _ => None,
        })
        .collect();
    for e in &log[sep..] {
        if let ELog::Access(l, f, AccessMode::Read) = e {
            if writes.iter().any(|(wl, wf)| *wl == l && *wf == f) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Always,
    Conditional,
    Never,
}

/// How a strong-field symbol is located at query time: follow `path` from
/// the realized roles, then read `field`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrongBinding {
    pub var: String,
    pub path: String,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnticipationResult {
    /// Commutativity, permissibility of m2, and the disjunction for m1, in
    /// that order; their conjunction (plus SFNI) is what a runtime checks.
    pub propositions: Vec<Formula>,
    pub sfni: bool,
    pub verdict: VerdictKind,
    /// Simplified conjunction of the propositions. Weak-field symbols stay
    /// universally quantified inside; parameters and strong-field symbols
    /// are free and get instantiated at query time.
    pub residual: Formula,
    /// Is the equation system valid under the invariants (no conflict)?
    pub commute_valid: bool,
    /// Parameter symbol of each side, when the parameter is an integer.
    pub params: [Option<String>; 2],
    /// Strong-field symbols and where to read them from a concrete state.
    pub strong_bindings: Vec<StrongBinding>,
    pub note: Option<String>,
}

/// The Method Anticipation algorithm for one ordered pair `(md1, md2)` under
/// one alias case: may a call of md2 be anticipated w.r.t. a call of md1?
pub fn method_anticipation(
    h: &AliasCase,
    prog: &Program,
    c1: &str,
    md1: &MethodDecl,
    c2: &str,
    md2: &MethodDecl,
    dom: &BoundedDomain,
) -> Result<AnticipationResult, AnalysisError> {
    let ctx = pair_ctx(h, prog, c1, md1, c2, md2)?;
    let seq12 = run_sequence(&ctx, [1, 2], dom)?;
    let seq21 = run_sequence(&ctx, [2, 1], dom)?;

    let weak_vars = ctx.gen_state.weak_vars();
    let inv_gen: Vec<Formula> = ctx.gen_state.invariants().iter().map(syminv_formula).collect();

    // (1) commutativity: the two orders' heaps agree under the invariants
    // and every spawned guard.
    let eqs = heap_equations(&seq12.fin, &seq21.fin)?;
    let cc = collect_cc(&ctx, &seq12, &seq21);
    let p_comm = quantified(
        &weak_vars,
        Formula::implies(
            Formula::and(cc.iter().map(syminv_formula).collect()),
            Formula::and(eqs.formulas()),
        ),
    );

    // (2) permissibility of md2 in the bootstrap state, weak fields
    // generalized, its parameter left free for the runtime.
    let sp2 = sp_formula(&ctx.gen_state, &seq21.pre_first, &seq21.mid);
    let p_lp2 = quantified(&weak_vars, sp2);

    // (3) md1 stays locally permissible in the post-state of md2, or its
    // (non-)permissibility is preserved between the bootstrap and post
    // states. Weak instantiations that already violate the bootstrap
    // invariant are unreachable replica states and constrain nothing.
    let weak_inv = Formula::and(
        ctx.gen_state.weak_invariants().iter().map(syminv_formula).collect(),
    );
    let sp1_pre = sp_formula(&ctx.gen_state, &seq12.pre_first, &seq12.mid);
    let snp1_pre = snp_formula(&ctx.gen_state, &seq12.pre_first, &seq12.mid);
    let sp1_post = sp_formula(&seq21.mid, &seq21.pre_second, &seq21.fin);
    let snp1_post = snp_formula(&seq21.mid, &seq21.pre_second, &seq21.fin);
    let mut lp_vars = weak_vars.clone();
    if let Some(p1) = &ctx.param_sym[0] {
        lp_vars.push(SymVar::new(p1.clone(), VarRole::Param));
    }
    let psi_lp = quantified(
        &lp_vars,
        Formula::implies(weak_inv.clone(), sp1_post.clone()),
    );
    let psi_pres = quantified(
        &weak_vars,
        Formula::implies(
            weak_inv,
            Formula::and(vec![
                Formula::implies(sp1_pre, sp1_post),
                Formula::implies(snp1_pre, snp1_post),
            ]),
        ),
    );
    let p_or1 = Formula::or(vec![psi_lp, psi_pres]);

    // (4) strong-field non-interference over the original order.
    let interference_free = sfni_of_log(&seq12.fin.log);

    let propositions = vec![p_comm.clone(), p_lp2.clone(), p_or1.clone()];
    let residual = simplify(&Formula::and(propositions.clone()));

    // Conflict-column input: are the two orders' heaps provably equal under
    // the invariants, for all arguments and snapshots in the domain?
    let commute_valid = match valid_bounded(
        &Formula::implies(
            Formula::and(cc.iter().map(syminv_formula).collect()),
            Formula::and(eqs.formulas()),
        ),
        dom,
    ) {
        Ok(v) => v.is_valid(),
        Err(FormulaError::TooManyFreeVars { .. }) => false,
        Err(e) => return Err(e.into()),
    };

    let params = ctx.param_sym.clone();
    let strong_bindings = strong_bindings(&ctx);

    let (verdict, note) = if !interference_free {
        (VerdictKind::Never, Some("strong-field interference".to_string()))
    } else {
        match &residual {
            Formula::Bool(true) => (VerdictKind::Always, None),
            Formula::Bool(false) => (VerdictKind::Never, Some("propositions unsatisfiable".into())),
            f => {
                let free = f.free_vars();
                if free.is_empty() {
                    match crate::formula::eval(f, &Default::default(), dom)? {
                        true => (VerdictKind::Always, None),
                        false => (VerdictKind::Never, Some("propositions evaluate false".into())),
                    }
                } else {
                    // Satisfiable at any snapshot/argument instantiation?
                    // Note guard conditions are antecedents inside the
                    // propositions, not side constraints: an instantiation
                    // where a call is not even guarded satisfies everything
                    // vacuously, matching the runtime's skip.
                    match sat_bounded(f, dom) {
                        Ok(Some(_)) => (VerdictKind::Conditional, None),
                        Ok(None) => (VerdictKind::Never, Some("no instantiation satisfies the propositions".into())),
                        Err(FormulaError::TooManyFreeVars { .. }) => (VerdictKind::Conditional, None),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
    };

    Ok(AnticipationResult {
        propositions,
        sfni: interference_free,
        verdict,
        residual,
        commute_valid,
        params,
        strong_bindings,
        note,
    })
}

fn quantified(vars: &[SymVar], f: Formula) -> Formula {
    let fv = f.free_vars();
    let mut vs: Vec<SymVar> = vars.iter().filter(|v| fv.contains_key(&v.name)).cloned().collect();
    vs.sort();
    vs.dedup();
    Formula::forall(vs, f)
}

fn sp_formula(pre: &EState, guards: &[SymInv], post: &EState) -> Formula {
    let mut antecedent: Vec<Formula> = pre.invariants().iter().map(syminv_formula).collect();
    antecedent.extend(guards.iter().map(syminv_formula));
    Formula::implies(
        Formula::and(antecedent),
        Formula::and(post.invariants().iter().map(syminv_formula).collect()),
    )
}

fn snp_formula(pre: &EState, guards: &[SymInv], post: &EState) -> Formula {
    let mut antecedent: Vec<Formula> = pre.invariants().iter().map(syminv_formula).collect();
    antecedent.extend(guards.iter().map(syminv_formula));
    Formula::implies(
        Formula::and(antecedent),
        Formula::not(Formula::and(post.invariants().iter().map(syminv_formula).collect())),
    )
}

/// Where each strong-field symbol of the bootstrap heap can be read from a
/// concrete state: role path (possibly through object fields) plus field.
fn strong_bindings(ctx: &PairCtx) -> Vec<StrongBinding> {
    let mut out = Vec::new();
    let mut visited = Vec::new();
    // Deterministic role order.
    let mut roles: Vec<(&String, &Loc)> = ctx.rho.0.iter().collect();
    roles.sort();
    for (role, l) in roles {
        bind_from(ctx, *l, role.clone(), &mut out, &mut visited);
    }
    out
}

fn bind_from(
    ctx: &PairCtx,
    l: Loc,
    path: String,
    out: &mut Vec<StrongBinding>,
    visited: &mut Vec<Loc>,
) {
    if visited.contains(&l) {
        return;
    }
    visited.push(l);
    let Some(obj) = ctx.gen_state.obj(l) else { return };
    for (f, slot) in &obj.fields {
        match (&slot.value, slot.weak) {
            (SymValue::Var(v), false) => out.push(StrongBinding {
                var: v.name.clone(),
                path: path.clone(),
                field: f.clone(),
            }),
            (SymValue::Loc(nested), _) => {
                bind_from(ctx, *nested, format!("{path}.{f}"), out, visited);
            }
            _ => {}
        }
    }
}
