//! Typing of expressions, well-formedness of programs, and typing of runtime
//! configurations.

use crate::ast::*;
use crate::interp::{ClosedInv, Configuration, State, Thread};
use crate::lexer::Pos;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Synthesized type: `null` gets its own bottom element so it can sit at any
/// non-integer type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthType {
    Null,
    Ty(Type),
}

impl fmt::Display for SynthType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthType::Null => write!(f, "null"),
            SynthType::Ty(t) => write!(f, "{t}"),
        }
    }
}

/// Ordered typing environment over variables and locations.
#[derive(Debug, Clone, Default)]
pub struct TypingEnv {
    vars: Vec<(Ident, SynthType)>,
    locs: Vec<(Loc, Ident)>,
}

impl TypingEnv {
    pub fn new() -> TypingEnv {
        TypingEnv::default()
    }

    pub fn bind(&mut self, x: impl Into<Ident>, t: Type) -> &mut Self {
        self.vars.push((x.into(), SynthType::Ty(t)));
        self
    }

    pub fn bind_synth(&mut self, x: impl Into<Ident>, t: SynthType) -> &mut Self {
        self.vars.push((x.into(), t));
        self
    }

    pub fn bind_loc(&mut self, l: Loc, class: impl Into<Ident>) -> &mut Self {
        self.locs.push((l, class.into()));
        self
    }

    pub fn var(&self, x: &str) -> Option<&SynthType> {
        self.vars.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t)
    }

    pub fn loc(&self, l: Loc) -> Option<&Ident> {
        self.locs.iter().rev().find(|(m, _)| *m == l).map(|(_, c)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{rule}: {message}")]
pub struct TypeError {
    pub rule: &'static str,
    pub message: String,
}

fn err<T>(rule: &'static str, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError { rule, message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: String,
    pub path: String,
    pub message: String,
    pub pos: Option<Pos>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pos = self.pos.unwrap_or(Pos { line: 0, col: 0 });
        write!(f, "{}: {}: {} ({})", pos, self.rule, self.message, self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypingReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl TypingReport {
    pub fn ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Does the program declare `name` as a class or interface (or is it the
/// built-in `Object`)?
fn named_type_exists(prog: &Program, name: &str) -> bool {
    name == "Object" || prog.class(name).is_some() || prog.interface(name).is_some()
}

fn type_exists(prog: &Program, t: &Type) -> bool {
    match t {
        Type::Int | Type::Unit => true,
        Type::Named(n) => named_type_exists(prog, n),
    }
}

/// Named-type subtyping: a class is a subtype of the interface it implements,
/// an interface of the interfaces it extends, everything of `Object`.
pub fn named_subtype(prog: &Program, sub: &str, sup: &str) -> bool {
    if sub == sup || sup == "Object" {
        return true;
    }
    let mut seen = BTreeSet::new();
    let mut work = vec![sub.to_string()];
    while let Some(cur) = work.pop() {
        if cur == sup {
            return true;
        }
        if !seen.insert(cur.clone()) {
            continue;
        }
        if let Some(c) = prog.class(&cur) {
            work.push(c.implements.clone());
        }
        if let Some(InterfaceDecl::Extends { parents, .. }) = prog.interface(&cur) {
            work.push(parents.0.clone());
            work.push(parents.1.clone());
        }
    }
    false
}

pub fn subtype(prog: &Program, s: &SynthType, t: &Type) -> bool {
    match (s, t) {
        (SynthType::Null, Type::Int) => false,
        (SynthType::Null, _) => true,
        (SynthType::Ty(Type::Int), Type::Int) => true,
        (SynthType::Ty(Type::Unit), Type::Unit) => true,
        (SynthType::Ty(Type::Named(a)), Type::Named(b)) => named_subtype(prog, a, b),
        _ => false,
    }
}

/// Method signatures available on a named type.
pub fn msigs(prog: &Program, name: &str) -> Vec<MethodSig> {
    if let Some(c) = prog.class(name) {
        return c.methods.iter().map(|m| m.sig()).collect();
    }
    match prog.interface(name) {
        Some(InterfaceDecl::Body { sigs, .. }) => sigs.clone(),
        Some(InterfaceDecl::Extends { parents, .. }) => {
            let mut out = msigs(prog, &parents.0);
            for s in msigs(prog, &parents.1) {
                if !out.iter().any(|o| o.name == s.name) {
                    out.push(s);
                }
            }
            out
        }
        None => Vec::new(),
    }
}

/// Synthesize the type of an expression (rules tInt, tNull, tVar, tLoc, tOp,
/// tNew, tCall, tLet, tSelect, tUpdate, tCast).
pub fn type_expr(env: &TypingEnv, e: &Expr, prog: &Program) -> Result<SynthType, TypeError> {
    match e {
        Expr::Val(Value::Int(_)) => Ok(SynthType::Ty(Type::Int)),
        Expr::Val(Value::Null) => Ok(SynthType::Null),
        Expr::Val(Value::Loc(l)) => match env.loc(*l) {
            Some(c) => Ok(SynthType::Ty(Type::Named(c.clone()))),
            None => err("tLoc", format!("location {l} not in the environment")),
        },
        Expr::Var(x) => match env.var(x) {
            Some(t) => Ok(t.clone()),
            None => err("tVar", format!("unbound variable `{x}`")),
        },
        Expr::Op(l, op, r) => {
            let tl = type_expr(env, l, prog)?;
            let tr = type_expr(env, r, prog)?;
            if tl != SynthType::Ty(Type::Int) {
                return err("tOp", format!("left operand of `{}` has type {tl}", op.symbol()));
            }
            if tr != SynthType::Ty(Type::Int) {
                return err("tOp", format!("right operand of `{}` has type {tr}", op.symbol()));
            }
            Ok(SynthType::Ty(Type::Int))
        }
        Expr::Select(x, f) => {
            let class = receiver_class(env, x, prog, "tSelect")?;
            match prog.class(&class).and_then(|c| c.field(f)) {
                Some(fd) => Ok(SynthType::Ty(fd.ty.clone())),
                None => err("tSelect", format!("class `{class}` has no field `{f}`")),
            }
        }
        Expr::Update(x, f, rhs) => {
            let class = receiver_class(env, x, prog, "tUpdate")?;
            let fd = match prog.class(&class).and_then(|c| c.field(f)) {
                Some(fd) => fd.clone(),
                None => return err("tUpdate", format!("class `{class}` has no field `{f}`")),
            };
            let tr = type_expr(env, rhs, prog)?;
            if !subtype(prog, &tr, &fd.ty) {
                return err(
                    "tUpdate",
                    format!("cannot assign {tr} to field `{f}` of type {}", fd.ty),
                );
            }
            Ok(SynthType::Ty(Type::Unit))
        }
        Expr::Call(x, m, arg) => {
            let tname = match type_expr(env, &Expr::Var(x.clone()), prog)? {
                SynthType::Ty(Type::Named(n)) => n,
                other => {
                    return err("tCall", format!("receiver `{x}` has non-object type {other}"))
                }
            };
            let sig = match msigs(prog, &tname).into_iter().find(|s| s.name == *m) {
                Some(s) => s,
                None => return err("tCall", format!("type `{tname}` has no method `{m}`")),
            };
            let ta = type_expr(env, arg, prog)?;
            if !subtype(prog, &ta, &sig.param.1) {
                return err(
                    "tCall",
                    format!("argument of `{m}` has type {ta}, expected {}", sig.param.1),
                );
            }
            Ok(SynthType::Ty(sig.ret))
        }
        Expr::Let(x, e1, e2) => {
            let t1 = type_expr(env, e1, prog)?;
            let mut inner = env.clone();
            inner.bind_synth(x.clone(), t1);
            type_expr(&inner, e2, prog)
        }
        Expr::New(c) => {
            if prog.class(c).is_some() {
                Ok(SynthType::Ty(Type::Named(c.clone())))
            } else {
                err("tNew", format!("unknown class `{c}`"))
            }
        }
        Expr::Cast(t, e) => {
            if !type_exists(prog, t) {
                return err("tCast", format!("unknown type {t}"));
            }
            let s = type_expr(env, e, prog)?;
            if subtype(prog, &s, t) {
                Ok(SynthType::Ty(t.clone()))
            } else {
                err("tCast", format!("{s} is not a subtype of {t}"))
            }
        }
    }
}

/// Check an expression against an expected type (tNull picks any non-int).
pub fn check_expr(env: &TypingEnv, e: &Expr, expected: &Type, prog: &Program) -> Result<(), TypeError> {
    let s = type_expr(env, e, prog)?;
    if subtype(prog, &s, expected) {
        Ok(())
    } else {
        let rule = if s == SynthType::Null { "tNull" } else { "tSub" };
        err(rule, format!("expected {expected}, found {s}"))
    }
}

fn receiver_class(
    env: &TypingEnv,
    x: &str,
    prog: &Program,
    rule: &'static str,
) -> Result<Ident, TypeError> {
    match env.var(x) {
        Some(SynthType::Ty(Type::Named(n))) if prog.class(n).is_some() => Ok(n.clone()),
        Some(t) => err(rule, format!("`{x}` has type {t}, which is not a class")),
        None => err(rule, format!("unbound variable `{x}`")),
    }
}

/// Well-formedness of a whole program. Never fails; problems come back as
/// diagnostics sorted by declaration path.
pub fn check_program(prog: &Program) -> TypingReport {
    check_program_with_spans(prog, &HashMap::new())
}

pub fn check_program_with_spans(prog: &Program, spans: &HashMap<String, Pos>) -> TypingReport {
    let mut ds: Vec<Diagnostic> = Vec::new();
    let mut push = |rule: &str, path: String, message: String, ds: &mut Vec<Diagnostic>| {
        let pos = spans.get(&path).copied();
        ds.push(Diagnostic { rule: rule.into(), path, message, pos });
    };

    // Distinct type names; declared implement/extend targets.
    let mut names = BTreeSet::new();
    for n in prog
        .interfaces
        .iter()
        .map(|i| i.name().to_string())
        .chain(prog.classes.iter().map(|c| c.name.clone()))
    {
        if !names.insert(n.clone()) {
            push("wfProgram", n.clone(), format!("duplicate type name `{n}`"), &mut ds);
        }
    }

    for i in &prog.interfaces {
        let path = i.name().to_string();
        match i {
            InterfaceDecl::Extends { parents, .. } => {
                for p in [&parents.0, &parents.1] {
                    if !named_type_exists(prog, p) {
                        push("wfInterfaceE", path.clone(), format!("unknown interface `{p}`"), &mut ds);
                    }
                }
            }
            InterfaceDecl::Body { sigs, .. } => {
                for s in sigs {
                    for t in [&s.param.1, &s.ret] {
                        if !type_exists(prog, t) {
                            push("wfInterface", path.clone(), format!("unknown type {t}"), &mut ds);
                        }
                    }
                }
            }
        }
    }

    for c in &prog.classes {
        if c.implements != "Object" && prog.interface(&c.implements).is_none() {
            push(
                "wfClass",
                c.name.clone(),
                format!("`{}` must implement a declared interface or Object", c.name),
                &mut ds,
            );
        }
        let mut fnames = BTreeSet::new();
        for f in &c.fields {
            if !fnames.insert(f.name.clone()) {
                push("wfClass", format!("{}.{}", c.name, f.name), "duplicate field".into(), &mut ds);
            }
        }
        let mut mnames = BTreeSet::new();
        for m in &c.methods {
            if !mnames.insert(m.name.clone()) {
                push("wfClass", format!("{}::{}", c.name, m.name), "duplicate method".into(), &mut ds);
            }
        }

        for f in &c.fields {
            check_field(prog, c, f, &mut push, &mut ds);
        }
        for m in &c.methods {
            check_method(prog, c, m, &mut push, &mut ds);
        }

        // Every interface signature must be implemented.
        if c.implements != "Object" {
            for sig in msigs(prog, &c.implements) {
                let found = c.methods.iter().any(|m| {
                    m.name == sig.name && m.param.1 == sig.param.1 && m.ret == sig.ret
                });
                if !found {
                    push(
                        "wfClass",
                        c.name.clone(),
                        format!("missing method `{}` required by `{}`", sig.name, c.implements),
                        &mut ds,
                    );
                }
            }
        }
    }

    // Main expression.
    if let Err(e) = type_expr(&TypingEnv::new(), &prog.main, prog) {
        push(e.rule, "main".into(), e.message, &mut ds);
    }

    ds.sort_by(|a, b| (&a.path, &a.rule, &a.message).cmp(&(&b.path, &b.rule, &b.message)));
    TypingReport { diagnostics: ds }
}

/// wfField: an invariant of field `f` may mention only `this.f` itself and
/// integer literals, and only integer fields carry invariants.
fn check_field(
    prog: &Program,
    c: &ClassDecl,
    f: &FieldDecl,
    push: &mut impl FnMut(&str, String, String, &mut Vec<Diagnostic>),
    ds: &mut Vec<Diagnostic>,
) {
    let path = format!("{}.{}", c.name, f.name);
    if !type_exists(prog, &f.ty) {
        push("wfField", path.clone(), format!("unknown type {}", f.ty), ds);
    }
    if f.invs.is_empty() {
        return;
    }
    if f.ty != Type::Int {
        push("wfField", path.clone(), "only int fields may carry invariants".into(), ds);
    }
    for inv in &f.invs {
        for d in [&inv.lhs, &inv.rhs] {
            match d {
                InvValue::Val(Value::Int(_)) => {}
                InvValue::Val(v) => {
                    push("wfFieldInv", path.clone(), format!("non-integer literal {v}"), ds)
                }
                InvValue::Field(x, g) if x == "this" && g == &f.name => {}
                InvValue::Field(x, g) => push(
                    "wfField",
                    path.clone(),
                    format!("invariant of `{}` may not mention `{x}.{g}`", f.name),
                    ds,
                ),
                InvValue::Var(x) => {
                    push("wfField", path.clone(), format!("free variable `{x}` in field invariant"), ds)
                }
            }
        }
    }
}

/// wfMethod: preconditions mention only the formal parameter, integer
/// literals, and strong fields of `this`; the body types against the
/// declared return type.
fn check_method(
    prog: &Program,
    c: &ClassDecl,
    m: &MethodDecl,
    push: &mut impl FnMut(&str, String, String, &mut Vec<Diagnostic>),
    ds: &mut Vec<Diagnostic>,
) {
    let path = format!("{}::{}", c.name, m.name);
    for t in [&m.param.1, &m.ret] {
        if !type_exists(prog, t) {
            push("wfMethod", path.clone(), format!("unknown type {t}"), ds);
        }
    }
    for inv in &m.pre {
        for d in [&inv.lhs, &inv.rhs] {
            match d {
                InvValue::Val(Value::Int(_)) => {}
                InvValue::Val(v) => {
                    push("wfMethod", path.clone(), format!("non-integer literal {v} in precondition"), ds)
                }
                InvValue::Var(x) if *x == m.param.0 => {
                    if m.param.1 != Type::Int {
                        push(
                            "wfMethod",
                            path.clone(),
                            format!("parameter `{x}` used in an integer relation but has type {}", m.param.1),
                            ds,
                        );
                    }
                }
                InvValue::Var(x) => {
                    push("wfMethod", path.clone(), format!("unknown name `{x}` in precondition"), ds)
                }
                InvValue::Field(x, g) if x == "this" => {
                    match c.field(g) {
                        Some(fd) if fd.weak => push(
                            "wfMethod",
                            path.clone(),
                            format!("precondition mentions weak field `{g}`"),
                            ds,
                        ),
                        Some(fd) if fd.ty != Type::Int => push(
                            "wfMethod",
                            path.clone(),
                            format!("precondition mentions non-integer field `{g}`"),
                            ds,
                        ),
                        Some(_) => {}
                        None => push(
                            "wfMethod",
                            path.clone(),
                            format!("unknown field `{g}` in precondition"),
                            ds,
                        ),
                    }
                }
                InvValue::Field(x, _) => push(
                    "wfMethod",
                    path.clone(),
                    format!("precondition receiver must be `this`, found `{x}`"),
                    ds,
                ),
            }
        }
    }
    let mut env = TypingEnv::new();
    env.bind("this", Type::Named(c.name.clone()));
    env.bind(m.param.0.clone(), m.param.1.clone());
    match type_expr(&env, &m.body, prog) {
        Err(e) => push(e.rule, path, e.message, ds),
        Ok(t) => {
            if !subtype(prog, &t, &m.ret) {
                push(
                    "wfMethod",
                    path,
                    format!("body has type {t}, declared return type is {}", m.ret),
                    ds,
                );
            }
        }
    }
}

/// Typing of configurations (wfCfg, wfHeap, wfFields): heap and stack are
/// consistent, the strong log points at real fields, monitored preconditions
/// are closed, and the thread expression types.
pub fn type_config(
    env: &TypingEnv,
    cfg: &Configuration,
    prog: &Program,
) -> Result<SynthType, TypeError> {
    let mut full = env.clone();
    for (l, obj) in &cfg.state.heap.map {
        if full.loc(*l).is_none() {
            full.bind_loc(*l, obj.class.clone());
        }
    }
    for (x, v) in &cfg.state.stack {
        if full.var(x).is_none() {
            let t = match v {
                Value::Int(_) => SynthType::Ty(Type::Int),
                Value::Null => SynthType::Ty(Type::Unit),
                Value::Loc(l) => match cfg.state.heap.get(*l) {
                    Some(o) => SynthType::Ty(Type::Named(o.class.clone())),
                    None => return err("wfCfg", format!("stack variable `{x}` holds dangling {l}")),
                },
            };
            full.bind_synth(x.clone(), t);
        }
    }

    check_heap(&full, &cfg.state, prog)?;

    for (l, f, _) in &cfg.state.strong_log {
        let Some(obj) = cfg.state.heap.get(*l) else {
            return err("wfCfg", format!("strong log mentions dangling {l}"));
        };
        if !obj.fields.contains_key(f) {
            return err("wfCfg", format!("strong log mentions missing field `{f}` at {l}"));
        }
    }

    for c in &cfg.state.monitored {
        check_closed(c)?;
    }

    match &cfg.thread {
        Thread::Exn => Ok(SynthType::Null),
        Thread::Expr(e) => type_expr(&full, e, prog),
    }
}

fn check_heap(env: &TypingEnv, state: &State, prog: &Program) -> Result<(), TypeError> {
    for (l, obj) in &state.heap.map {
        let Some(class) = prog.class(&obj.class) else {
            return err("wfHeap", format!("{l} has undeclared class `{}`", obj.class));
        };
        if obj.fields.len() != class.fields.len() {
            return err("wfFields", format!("{l} has a field map not matching `{}`", obj.class));
        }
        for fd in &class.fields {
            let Some(v) = obj.fields.get(&fd.name) else {
                return err("wfFields", format!("{l} is missing field `{}`", fd.name));
            };
            let s = match v {
                Value::Int(_) => SynthType::Ty(Type::Int),
                Value::Null => SynthType::Null,
                Value::Loc(m) => match env.loc(*m) {
                    Some(c) => SynthType::Ty(Type::Named(c.clone())),
                    None => return err("wfFields", format!("field `{}` holds dangling {m}", fd.name)),
                },
            };
            if !subtype(prog, &s, &fd.ty) {
                return err(
                    "wfFields",
                    format!("field `{}` of {l} holds {s}, expected {}", fd.name, fd.ty),
                );
            }
        }
    }
    Ok(())
}

/// Monitored preconditions must be closed integer relations ("fv(c̃) = ∅").
fn check_closed(c: &ClosedInv) -> Result<(), TypeError> {
    match (c.lhs, c.rhs) {
        (Value::Int(_), Value::Int(_)) => Ok(()),
        _ => err("wfCfg", "monitored precondition is not a closed integer relation"),
    }
}
