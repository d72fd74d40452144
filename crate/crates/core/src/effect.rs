//! Effect inference: a method body flattens into a list of primitive state
//! operations executed against a symbolic heap through a single return-value
//! buffer. Calls are inlined, so the list also carries the chain of
//! preconditions spawned by nested calls.

use crate::ast::*;
use crate::parser::FreshNames;
use crate::types::{type_expr, SynthType, TypingEnv};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectVar {
    /// Write the buffer into `x.f`.
    Field(Ident, Ident),
    /// Bind a let variable to the buffer.
    BindL(Ident),
    /// Bind a call argument to the buffer; carries the callee's
    /// preconditions with `this` and the formal parameter substituted.
    BindC(Ident, Vec<Invariant>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectExpr {
    RetVal(Value),
    RetVar(Ident),
    RetField(Ident, Ident),
    /// Apply `buffer op operand`; the operand is a symbolic value whose
    /// stack-bound variables are substituted at execution time.
    Op(Op, Expr),
    Var(EffectVar),
    New(Ident, Vec<FieldDecl>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub pre: Vec<Invariant>,
    pub list: Vec<EffectExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EffectError {
    #[error("unknown class `{0}`")]
    UnknownClass(Ident),
    #[error("class `{0}` has no method `{1}`")]
    UnknownMethod(Ident, Ident),
    #[error("cannot inline call through interface type `{0}`")]
    InterfaceDispatch(Ident),
    #[error("call inlining exceeded depth {0}; recursive methods are not supported")]
    DepthExceeded(usize),
    #[error("type error during effect inference: {0}")]
    Typing(String),
}

/// Maximum call-inlining depth.
pub const INLINE_DEPTH: usize = 16;

/// Infer the effect list of an expression under a typing environment that
/// resolves call receivers.
pub fn infer_effect(
    env: &TypingEnv,
    e: &Expr,
    prog: &Program,
) -> Result<Vec<EffectExpr>, EffectError> {
    let mut used = HashSet::new();
    collect_idents(e, &mut used);
    let mut fresh = FreshNames::avoiding(used);
    infer(env, e, prog, &mut fresh, 0)
}

/// The effect of a method is the effect of its body under `this : C` plus
/// the parameter binding; the declared preconditions ride along unchanged.
pub fn infer_method_effect(
    prog: &Program,
    class: &str,
    method: &str,
) -> Result<Effect, EffectError> {
    let c = prog.class(class).ok_or_else(|| EffectError::UnknownClass(class.into()))?;
    let md = c
        .method(method)
        .ok_or_else(|| EffectError::UnknownMethod(class.into(), method.into()))?;
    let mut env = TypingEnv::new();
    env.bind("this", Type::Named(class.to_string()));
    env.bind(md.param.0.clone(), md.param.1.clone());
    let list = infer_effect(&env, &md.body, prog)?;
    Ok(Effect { pre: md.pre.clone(), list })
}

fn infer(
    env: &TypingEnv,
    e: &Expr,
    prog: &Program,
    fresh: &mut FreshNames,
    depth: usize,
) -> Result<Vec<EffectExpr>, EffectError> {
    match e {
        Expr::Val(v) => Ok(vec![EffectExpr::RetVal(*v)]),
        Expr::Var(x) => Ok(vec![EffectExpr::RetVar(x.clone())]),
        Expr::Select(x, f) => Ok(vec![EffectExpr::RetField(x.clone(), f.clone())]),
        Expr::Op(l, op, r) => {
            let mut out = infer(env, l, prog, fresh, depth)?;
            out.push(EffectExpr::Op(*op, (**r).clone()));
            Ok(out)
        }
        Expr::Update(x, f, rhs) => {
            let mut out = infer(env, rhs, prog, fresh, depth)?;
            out.push(EffectExpr::Var(EffectVar::Field(x.clone(), f.clone())));
            Ok(out)
        }
        Expr::Let(x, e1, e2) => {
            let mut out = infer(env, e1, prog, fresh, depth)?;
            let t1 = type_expr(env, e1, prog).map_err(|e| EffectError::Typing(e.to_string()))?;
            let x2 = fresh.fresh("_l");
            out.push(EffectExpr::Var(EffectVar::BindL(x2.clone())));
            let mut map = HashMap::new();
            map.insert(x.clone(), x2.clone());
            let body = {
                let mut supply = || fresh.fresh("_r");
                rename_vars(e2, &map, &mut supply)
            };
            let mut inner = env.clone();
            inner.bind_synth(x2, t1);
            out.extend(infer(&inner, &body, prog, fresh, depth)?);
            Ok(out)
        }
        Expr::Call(x, m, arg) => {
            if depth >= INLINE_DEPTH {
                return Err(EffectError::DepthExceeded(INLINE_DEPTH));
            }
            let class = match type_expr(env, &Expr::Var(x.clone()), prog) {
                Ok(SynthType::Ty(Type::Named(n))) => {
                    if prog.class(&n).is_some() {
                        n
                    } else {
                        return Err(EffectError::InterfaceDispatch(n));
                    }
                }
                Ok(other) => {
                    return Err(EffectError::Typing(format!(
                        "receiver `{x}` has non-object type {other}"
                    )))
                }
                Err(e) => return Err(EffectError::Typing(e.to_string())),
            };
            let md = prog
                .class(&class)
                .and_then(|c| c.method(m))
                .cloned()
                .ok_or_else(|| EffectError::UnknownMethod(class.clone(), m.clone()))?;
            let mut out = infer(env, arg, prog, fresh, depth)?;
            let y = fresh.fresh("_c");
            let mut map = HashMap::new();
            map.insert("this".to_string(), x.clone());
            map.insert(md.param.0.clone(), y.clone());
            let pre: Vec<Invariant> = md.pre.iter().map(|c| c.rename(&map)).collect();
            out.push(EffectExpr::Var(EffectVar::BindC(y.clone(), pre)));
            let body = {
                let mut supply = || fresh.fresh("_r");
                rename_vars(&md.body, &map, &mut supply)
            };
            let mut inner = env.clone();
            inner.bind(y, md.param.1.clone());
            out.extend(infer(&inner, &body, prog, fresh, depth + 1)?);
            Ok(out)
        }
        Expr::New(c) => {
            let class = prog.class(c).ok_or_else(|| EffectError::UnknownClass(c.clone()))?;
            Ok(vec![EffectExpr::New(c.clone(), class.fields.clone())])
        }
        Expr::Cast(_, e) => infer(env, e, prog, fresh, depth),
    }
}

fn collect_idents(e: &Expr, out: &mut HashSet<Ident>) {
    match e {
        Expr::Val(_) | Expr::New(_) => {}
        Expr::Var(x) => {
            out.insert(x.clone());
        }
        Expr::Select(x, _) => {
            out.insert(x.clone());
        }
        Expr::Op(l, _, r) => {
            collect_idents(l, out);
            collect_idents(r, out);
        }
        Expr::Update(x, _, e) | Expr::Call(x, _, e) => {
            out.insert(x.clone());
            collect_idents(e, out);
        }
        Expr::Let(x, e1, e2) => {
            out.insert(x.clone());
            collect_idents(e1, out);
            collect_idents(e2, out);
        }
        Expr::Cast(_, e) => collect_idents(e, out),
    }
}

/// Rename free variables throughout an effect: receivers, operands, binders'
/// carried preconditions. Binder names themselves are globally fresh and are
/// never rename targets.
pub fn rename_effect(list: &[EffectExpr], map: &HashMap<Ident, Ident>) -> Vec<EffectExpr> {
    let ren = |x: &Ident| map.get(x).cloned().unwrap_or_else(|| x.clone());
    list.iter()
        .map(|e| match e {
            EffectExpr::RetVal(v) => EffectExpr::RetVal(*v),
            EffectExpr::RetVar(x) => EffectExpr::RetVar(ren(x)),
            EffectExpr::RetField(x, f) => EffectExpr::RetField(ren(x), f.clone()),
            EffectExpr::Op(op, sv) => {
                let mut noop = || unreachable!("symbolic operands bind nothing");
                EffectExpr::Op(*op, rename_vars(sv, map, &mut noop))
            }
            EffectExpr::Var(EffectVar::Field(x, f)) => {
                EffectExpr::Var(EffectVar::Field(ren(x), f.clone()))
            }
            EffectExpr::Var(EffectVar::BindL(x)) => EffectExpr::Var(EffectVar::BindL(x.clone())),
            EffectExpr::Var(EffectVar::BindC(y, pre)) => EffectExpr::Var(EffectVar::BindC(
                y.clone(),
                pre.iter().map(|c| c.rename(map)).collect(),
            )),
            EffectExpr::New(c, fds) => EffectExpr::New(c.clone(), fds.clone()),
        })
        .collect()
}
