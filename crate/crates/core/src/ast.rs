//! AST for ANT source programs: classes with weak/strong replicated fields,
//! integer field invariants, method preconditions, and a main expression.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub type Ident = String;

/// Heap location. Only produced at runtime; the parser never emits one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Loc(pub u64);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Binary integer relation used by invariants and preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Rel::Eq => a == b,
            Rel::Ne => a != b,
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Gt => a > b,
            Rel::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ne => "!=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    pub fn negate(self) -> Rel {
        match self {
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Gt => Rel::Le,
            Rel::Ge => Rel::Lt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
        }
    }

    /// 64-bit checked arithmetic; division truncates toward zero.
    pub fn apply(self, a: i64, b: i64) -> Result<i64, ArithError> {
        match self {
            Op::Add => a.checked_add(b).ok_or(ArithError::Overflow),
            Op::Sub => a.checked_sub(b).ok_or(ArithError::Overflow),
            Op::Mul => a.checked_mul(b).ok_or(ArithError::Overflow),
            Op::Div => {
                if b == 0 {
                    Err(ArithError::DivByZero)
                } else {
                    a.checked_div(b).ok_or(ArithError::Overflow)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Null,
    Int(i64),
    Loc(Loc),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "null"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Loc(l) => write!(f, "{l}"),
        }
    }
}

/// Invariant value `d`: a variable, a field selection, or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvValue {
    Var(Ident),
    Field(Ident, Ident),
    Val(Value),
}

/// `d1 Rel d2` as attached to fields (invariants) and methods (preconditions).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Invariant {
    pub lhs: InvValue,
    pub rel: Rel,
    pub rhs: InvValue,
}

impl Invariant {
    /// Substitute variable names in both sides (`this` instantiation and the like).
    pub fn rename(&self, map: &HashMap<Ident, Ident>) -> Invariant {
        let sub = |d: &InvValue| match d {
            InvValue::Var(x) => InvValue::Var(map.get(x).cloned().unwrap_or_else(|| x.clone())),
            InvValue::Field(x, f) => {
                InvValue::Field(map.get(x).cloned().unwrap_or_else(|| x.clone()), f.clone())
            }
            InvValue::Val(v) => InvValue::Val(*v),
        };
        Invariant { lhs: sub(&self.lhs), rel: self.rel, rhs: sub(&self.rhs) }
    }

    /// Fields mentioned on either side, as `(receiver, field)` pairs.
    pub fn fields(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for d in [&self.lhs, &self.rhs] {
            if let InvValue::Field(x, f) = d {
                out.push((x.as_str(), f.as_str()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Unit,
    Named(Ident),
}

impl Type {
    pub fn object() -> Type {
        Type::Named("Object".into())
    }

    pub fn is_object_kind(&self) -> bool {
        matches!(self, Type::Named(_))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Unit => write!(f, "Unit"),
            Type::Named(n) => write!(f, "{n}"),
        }
    }
}

/// Core expressions. Right operands of `Op` are restricted to symbolic-value
/// shape by the parser; the left operand may be any expression and is reduced
/// first by the evaluation contexts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Val(Value),
    Var(Ident),
    Op(Box<Expr>, Op, Box<Expr>),
    /// `x.f`
    Select(Ident, Ident),
    /// `x.f = e`
    Update(Ident, Ident, Box<Expr>),
    /// `x.m(e)`
    Call(Ident, Ident, Box<Expr>),
    Let(Ident, Box<Expr>, Box<Expr>),
    New(Ident),
    Cast(Type, Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Val(Value::Int(n))
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Expr::Val(_))
    }

    pub fn as_value(&self) -> Option<Value> {
        match self {
            Expr::Val(v) => Some(*v),
            _ => None,
        }
    }

    /// Symbolic-value shape: values, variables, and Op trees over those.
    pub fn is_sv(&self) -> bool {
        match self {
            Expr::Val(_) | Expr::Var(_) => true,
            Expr::Op(l, _, r) => l.is_sv() && r.is_sv(),
            _ => false,
        }
    }

    pub fn contains_loc(&self) -> bool {
        match self {
            Expr::Val(Value::Loc(_)) => true,
            Expr::Val(_) | Expr::Var(_) | Expr::Select(_, _) | Expr::New(_) => false,
            Expr::Op(l, _, r) => l.contains_loc() || r.contains_loc(),
            Expr::Update(_, _, e) | Expr::Call(_, _, e) | Expr::Cast(_, e) => e.contains_loc(),
            Expr::Let(_, e1, e2) => e1.contains_loc() || e2.contains_loc(),
        }
    }

    pub fn int_literals(&self, out: &mut BTreeSet<i64>) {
        match self {
            Expr::Val(Value::Int(n)) => {
                out.insert(*n);
            }
            Expr::Val(_) | Expr::Var(_) | Expr::Select(_, _) | Expr::New(_) => {}
            Expr::Op(l, _, r) => {
                l.int_literals(out);
                r.int_literals(out);
            }
            Expr::Update(_, _, e) | Expr::Call(_, _, e) | Expr::Cast(_, e) => e.int_literals(out),
            Expr::Let(_, e1, e2) => {
                e1.int_literals(out);
                e2.int_literals(out);
            }
        }
    }
}

/// Capture-avoiding renaming of free variables. `fresh` supplies new binder
/// names when a binder would capture one of the substituted targets.
pub fn rename_vars(
    e: &Expr,
    map: &HashMap<Ident, Ident>,
    fresh: &mut dyn FnMut() -> Ident,
) -> Expr {
    let var = |x: &Ident, map: &HashMap<Ident, Ident>| map.get(x).cloned().unwrap_or_else(|| x.clone());
    match e {
        Expr::Val(v) => Expr::Val(*v),
        Expr::Var(x) => Expr::Var(var(x, map)),
        Expr::Op(l, op, r) => Expr::Op(
            Box::new(rename_vars(l, map, fresh)),
            *op,
            Box::new(rename_vars(r, map, fresh)),
        ),
        Expr::Select(x, f) => Expr::Select(var(x, map), f.clone()),
        Expr::Update(x, f, rhs) => {
            Expr::Update(var(x, map), f.clone(), Box::new(rename_vars(rhs, map, fresh)))
        }
        Expr::Call(x, m, arg) => {
            Expr::Call(var(x, map), m.clone(), Box::new(rename_vars(arg, map, fresh)))
        }
        Expr::Let(x, e1, e2) => {
            let e1 = rename_vars(e1, map, fresh);
            let mut inner = map.clone();
            inner.remove(x);
            // Rename the binder when it would capture a substitution target.
            if inner.values().any(|t| t == x) {
                let x2 = fresh();
                let mut shadow = HashMap::new();
                shadow.insert(x.clone(), x2.clone());
                let e2 = rename_vars(e2, &shadow, fresh);
                Expr::Let(x2, Box::new(e1), Box::new(rename_vars(&e2, &inner, fresh)))
            } else {
                Expr::Let(x.clone(), Box::new(e1), Box::new(rename_vars(e2, &inner, fresh)))
            }
        }
        Expr::New(c) => Expr::New(c.clone()),
        Expr::Cast(t, e) => Expr::Cast(t.clone(), Box::new(rename_vars(e, map, fresh))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: Ident,
    pub ty: Type,
    pub weak: bool,
    pub invs: Vec<Invariant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDecl {
    pub name: Ident,
    pub param: (Ident, Type),
    pub ret: Type,
    pub pre: Vec<Invariant>,
    pub body: Expr,
}

impl MethodDecl {
    pub fn sig(&self) -> MethodSig {
        MethodSig {
            name: self.name.clone(),
            param: self.param.clone(),
            ret: self.ret.clone(),
            pre: self.pre.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSig {
    pub name: Ident,
    pub param: (Ident, Type),
    pub ret: Type,
    pub pre: Vec<Invariant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterfaceDecl {
    Body { name: Ident, sigs: Vec<MethodSig> },
    Extends { name: Ident, parents: (Ident, Ident) },
}

impl InterfaceDecl {
    pub fn name(&self) -> &str {
        match self {
            InterfaceDecl::Body { name, .. } | InterfaceDecl::Extends { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub name: Ident,
    pub implements: Ident,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDecl>,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn strong_fields(&self) -> impl Iterator<Item = &FieldDecl> {
        self.fields.iter().filter(|f| !f.weak)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub interfaces: Vec<InterfaceDecl>,
    pub classes: Vec<ClassDecl>,
    pub main: Expr,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn interface(&self, name: &str) -> Option<&InterfaceDecl> {
        self.interfaces.iter().find(|i| i.name() == name)
    }

    /// All integer literals appearing anywhere in the program: field
    /// invariants, preconditions, method bodies, and the main expression.
    pub fn int_literals(&self) -> BTreeSet<i64> {
        let mut out = BTreeSet::new();
        let inv_lits = |inv: &Invariant, out: &mut BTreeSet<i64>| {
            for d in [&inv.lhs, &inv.rhs] {
                if let InvValue::Val(Value::Int(n)) = d {
                    out.insert(*n);
                }
            }
        };
        for c in &self.classes {
            for f in &c.fields {
                for inv in &f.invs {
                    inv_lits(inv, &mut out);
                }
            }
            for m in &c.methods {
                for inv in &m.pre {
                    inv_lits(inv, &mut out);
                }
                m.body.int_literals(&mut out);
            }
        }
        for i in &self.interfaces {
            if let InterfaceDecl::Body { sigs, .. } = i {
                for s in sigs {
                    for inv in &s.pre {
                        inv_lits(inv, &mut out);
                    }
                }
            }
        }
        self.main.int_literals(&mut out);
        out
    }
}
