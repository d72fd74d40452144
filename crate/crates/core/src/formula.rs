//! Symbolic integer terms, quantified formulas, bounded satisfiability and
//! validity, simplification, and SMT-LIB emission.

use crate::ast::{Loc, Op, Rel, Value};
use crate::domain::BoundedDomain;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Where a symbolic variable came from; decides how the runtime instantiates
/// it when a residual condition is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarRole {
    /// Weak-field symbol: stays universally quantified at query time.
    Weak,
    /// Strong-field symbol: instantiated from the coordinated state snapshot.
    Strong,
    /// Method parameter: instantiated from the call's actual argument.
    Param,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymVar {
    pub name: String,
    pub role: VarRole,
}

impl SymVar {
    pub fn new(name: impl Into<String>, role: VarRole) -> SymVar {
        SymVar { name: name.into(), role }
    }
}

impl fmt::Display for SymVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Symbolic values: literals, locations, variables, and arithmetic trees.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SymValue {
    Null,
    Int(i64),
    Loc(Loc),
    Var(SymVar),
    Op(Box<SymValue>, Op, Box<SymValue>),
}

impl SymValue {
    pub fn var(name: impl Into<String>, role: VarRole) -> SymValue {
        SymValue::Var(SymVar::new(name, role))
    }

    pub fn op(l: SymValue, op: Op, r: SymValue) -> SymValue {
        SymValue::Op(Box::new(l), op, Box::new(r))
    }

    pub fn from_value(v: Value) -> SymValue {
        match v {
            Value::Null => SymValue::Null,
            Value::Int(n) => SymValue::Int(n),
            Value::Loc(l) => SymValue::Loc(l),
        }
    }

    pub fn free_vars(&self, out: &mut BTreeMap<String, SymVar>) {
        match self {
            SymValue::Var(v) => {
                out.insert(v.name.clone(), v.clone());
            }
            SymValue::Op(l, _, r) => {
                l.free_vars(out);
                r.free_vars(out);
            }
            _ => {}
        }
    }

    pub fn eval(&self, a: &Assignment) -> Result<Value, FormulaError> {
        match self {
            SymValue::Null => Ok(Value::Null),
            SymValue::Int(n) => Ok(Value::Int(*n)),
            SymValue::Loc(l) => Ok(Value::Loc(*l)),
            SymValue::Var(v) => a
                .0
                .get(&v.name)
                .map(|n| Value::Int(*n))
                .ok_or_else(|| FormulaError::UnboundVar(v.name.clone())),
            SymValue::Op(l, op, r) => {
                let lv = l.eval(a)?;
                let rv = r.eval(a)?;
                match (lv, rv) {
                    (Value::Int(x), Value::Int(y)) => match op.apply(x, y) {
                        Ok(n) => Ok(Value::Int(n)),
                        Err(crate::ast::ArithError::DivByZero) => Err(FormulaError::DivByZero),
                        Err(crate::ast::ArithError::Overflow) => Err(FormulaError::Overflow),
                    },
                    _ => Err(FormulaError::IllTyped("arithmetic on a non-integer".into())),
                }
            }
        }
    }

    /// Substitute variables by symbolic values (lets, call arguments).
    pub fn subst(&self, map: &BTreeMap<String, SymValue>) -> SymValue {
        match self {
            SymValue::Var(v) => map.get(&v.name).cloned().unwrap_or_else(|| self.clone()),
            SymValue::Op(l, op, r) => SymValue::op(l.subst(map), *op, r.subst(map)),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for SymValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymValue::Null => write!(f, "null"),
            SymValue::Int(n) => write!(f, "{n}"),
            SymValue::Loc(l) => write!(f, "{l}"),
            SymValue::Var(v) => write!(f, "{v}"),
            SymValue::Op(l, op, r) => {
                let paren = |sv: &SymValue, f: &mut fmt::Formatter<'_>| -> fmt::Result {
                    if matches!(sv, SymValue::Op(_, _, _)) {
                        write!(f, "({sv})")
                    } else {
                        write!(f, "{sv}")
                    }
                };
                paren(l, f)?;
                write!(f, " {} ", op.symbol())?;
                paren(r, f)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization: sums of products with folded constants, used for syntactic
// heap equality. Only exact rewrites: +/- flattening with like-term
// collection, * flattening with sorted factors, unit/zero laws. Division
// stays a binary node (not associative, not commutative).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Atom {
    Var(SymVar),
    Div(SymValue, SymValue),
    Opaque(SymValue),
}

impl Atom {
    fn to_sym(&self) -> SymValue {
        match self {
            Atom::Var(v) => SymValue::Var(v.clone()),
            Atom::Div(a, b) => SymValue::op(a.clone(), Op::Div, b.clone()),
            Atom::Opaque(sv) => sv.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct Poly {
    constant: i64,
    /// factor multiset (sorted) -> coefficient
    terms: BTreeMap<Vec<Atom>, i64>,
    /// lost exactness (overflow while folding); fall back to the original
    overflow: bool,
}

fn poly_of(sv: &SymValue) -> Poly {
    match sv {
        SymValue::Int(n) => Poly { constant: *n, ..Default::default() },
        SymValue::Null | SymValue::Loc(_) => {
            let mut t = BTreeMap::new();
            t.insert(vec![Atom::Opaque(sv.clone())], 1);
            Poly { terms: t, ..Default::default() }
        }
        SymValue::Var(v) => {
            let mut t = BTreeMap::new();
            t.insert(vec![Atom::Var(v.clone())], 1);
            Poly { terms: t, ..Default::default() }
        }
        SymValue::Op(l, op, r) => {
            let a = poly_of(l);
            match op {
                Op::Add | Op::Sub => {
                    let b = poly_of(r);
                    add_poly(a, b, if *op == Op::Add { 1 } else { -1 })
                }
                Op::Mul => mul_poly(a, poly_of(r)),
                Op::Div => {
                    let ln = normalize(l);
                    let rn = normalize(r);
                    if let (SymValue::Int(x), SymValue::Int(y)) = (&ln, &rn) {
                        if let Ok(n) = Op::Div.apply(*x, *y) {
                            return Poly { constant: n, ..Default::default() };
                        }
                    }
                    // x / 1 == x (exact under truncation)
                    if rn == SymValue::Int(1) {
                        return poly_of(&ln);
                    }
                    let mut t = BTreeMap::new();
                    t.insert(vec![Atom::Div(ln, rn)], 1);
                    Poly { terms: t, ..Default::default() }
                }
            }
        }
    }
}

fn add_poly(mut a: Poly, b: Poly, sign: i64) -> Poly {
    if a.overflow || b.overflow {
        a.overflow = true;
        return a;
    }
    match b.constant.checked_mul(sign).and_then(|c| a.constant.checked_add(c)) {
        Some(c) => a.constant = c,
        None => {
            a.overflow = true;
            return a;
        }
    }
    for (fs, coeff) in b.terms {
        let signed = match coeff.checked_mul(sign) {
            Some(c) => c,
            None => {
                a.overflow = true;
                return a;
            }
        };
        let e = a.terms.entry(fs).or_insert(0);
        match e.checked_add(signed) {
            Some(c) => *e = c,
            None => {
                a.overflow = true;
                return a;
            }
        }
    }
    a.terms.retain(|_, c| *c != 0);
    a
}

fn mul_poly(a: Poly, b: Poly) -> Poly {
    if a.overflow || b.overflow {
        return Poly { overflow: true, ..Default::default() };
    }
    let mut out = Poly::default();
    match a.constant.checked_mul(b.constant) {
        Some(c) => out.constant = c,
        None => return Poly { overflow: true, ..Default::default() },
    }
    let push = |fs: Vec<Atom>, coeff: i64, out: &mut Poly| -> bool {
        if coeff == 0 {
            return true;
        }
        let e = out.terms.entry(fs).or_insert(0);
        match e.checked_add(coeff) {
            Some(c) => {
                *e = c;
                true
            }
            None => false,
        }
    };
    for (fs, ca) in &a.terms {
        match ca.checked_mul(b.constant) {
            Some(c) => {
                if !push(fs.clone(), c, &mut out) {
                    return Poly { overflow: true, ..Default::default() };
                }
            }
            None => return Poly { overflow: true, ..Default::default() },
        }
    }
    for (fs, cb) in &b.terms {
        match cb.checked_mul(a.constant) {
            Some(c) => {
                if !push(fs.clone(), c, &mut out) {
                    return Poly { overflow: true, ..Default::default() };
                }
            }
            None => return Poly { overflow: true, ..Default::default() },
        }
    }
    for (fa, ca) in &a.terms {
        for (fb, cb) in &b.terms {
            let mut fs = fa.clone();
            fs.extend(fb.iter().cloned());
            fs.sort();
            match ca.checked_mul(*cb) {
                Some(c) => {
                    if !push(fs, c, &mut out) {
                        return Poly { overflow: true, ..Default::default() };
                    }
                }
                None => return Poly { overflow: true, ..Default::default() },
            }
        }
    }
    out.terms.retain(|_, c| *c != 0);
    out
}

/// Canonical form: constant folding, unit laws, flattened and sorted
/// associative chains. Equal normal forms imply semantic equality.
pub fn normalize(sv: &SymValue) -> SymValue {
    let p = poly_of(sv);
    if p.overflow {
        return sv.clone();
    }
    let mut parts: Vec<SymValue> = Vec::new();
    for (fs, coeff) in &p.terms {
        let mut factors: Vec<SymValue> = fs.iter().map(|a| a.to_sym()).collect();
        if *coeff != 1 {
            factors.insert(0, SymValue::Int(*coeff));
        }
        let term = factors
            .into_iter()
            .reduce(|l, r| SymValue::op(l, Op::Mul, r))
            .expect("nonempty factor list");
        parts.push(term);
    }
    if p.constant != 0 || parts.is_empty() {
        parts.insert(0, SymValue::Int(p.constant));
    }
    parts.into_iter().reduce(|l, r| SymValue::op(l, Op::Add, r)).unwrap()
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Bool(bool),
    Cmp(SymValue, Rel, SymValue),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Vec<SymVar>, Box<Formula>),
}

impl Formula {
    pub fn cmp(l: SymValue, rel: Rel, r: SymValue) -> Formula {
        Formula::Cmp(l, rel, r)
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::Bool(true),
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::And(fs),
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::Bool(false),
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn forall(vars: Vec<SymVar>, f: Formula) -> Formula {
        if vars.is_empty() {
            f
        } else {
            Formula::Forall(vars, Box::new(f))
        }
    }

    /// Free variables, name-keyed, quantified ones excluded.
    pub fn free_vars(&self) -> BTreeMap<String, SymVar> {
        let mut out = BTreeMap::new();
        self.collect_free(&mut out, &mut BTreeSet::new());
        out
    }

    fn collect_free(&self, out: &mut BTreeMap<String, SymVar>, bound: &mut BTreeSet<String>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(l, _, r) => {
                let mut vars = BTreeMap::new();
                l.free_vars(&mut vars);
                r.free_vars(&mut vars);
                for (name, v) in vars {
                    if !bound.contains(&name) {
                        out.insert(name, v);
                    }
                }
            }
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.collect_free(out, bound);
                }
            }
            Formula::Not(f) => f.collect_free(out, bound),
            Formula::Implies(a, b) => {
                a.collect_free(out, bound);
                b.collect_free(out, bound);
            }
            Formula::Forall(vars, body) => {
                let added: Vec<String> = vars
                    .iter()
                    .filter(|v| bound.insert(v.name.clone()))
                    .map(|v| v.name.clone())
                    .collect();
                body.collect_free(out, bound);
                for name in added {
                    bound.remove(&name);
                }
            }
        }
    }

    /// Substitute free variables by symbolic values.
    pub fn subst(&self, map: &BTreeMap<String, SymValue>) -> Formula {
        match self {
            Formula::Bool(b) => Formula::Bool(*b),
            Formula::Cmp(l, rel, r) => Formula::Cmp(l.subst(map), *rel, r.subst(map)),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.subst(map)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.subst(map)).collect()),
            Formula::Not(f) => Formula::not(f.subst(map)),
            Formula::Implies(a, b) => Formula::implies(a.subst(map), b.subst(map)),
            Formula::Forall(vars, body) => {
                let mut inner = map.clone();
                for v in vars {
                    inner.remove(&v.name);
                }
                Formula::Forall(vars.clone(), Box::new(body.subst(&inner)))
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::Cmp(l, rel, r) => write!(f, "{l} {} {r}", rel.symbol()),
            Formula::And(fs) => {
                write!(f, "(")?;
                for (i, g) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " && ")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ")")
            }
            Formula::Or(fs) => {
                write!(f, "(")?;
                for (i, g) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " || ")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ")")
            }
            Formula::Not(g) => write!(f, "!({g})"),
            Formula::Implies(a, b) => write!(f, "({a} => {b})"),
            Formula::Forall(vars, body) => {
                write!(f, "forall ")?;
                for (i, v) in vars.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ". {body}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment(pub BTreeMap<String, i64>);

impl Assignment {
    pub fn set(&mut self, name: impl Into<String>, v: i64) -> &mut Self {
        self.0.insert(name.into(), v);
        self
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k} = {v}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulaError {
    #[error("unbound variable `{0}` during evaluation")]
    UnboundVar(String),
    #[error("division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("{0}")]
    IllTyped(String),
    #[error("{count} free variables exceeds the cap of {cap}; export to SMT-LIB instead")]
    TooManyFreeVars { count: usize, cap: usize },
}

/// Boolean evaluation under an assignment; quantifiers range over `dom`.
pub fn eval(f: &Formula, a: &Assignment, dom: &BoundedDomain) -> Result<bool, FormulaError> {
    match f {
        Formula::Bool(b) => Ok(*b),
        Formula::Cmp(l, rel, r) => {
            let lv = l.eval(a)?;
            let rv = r.eval(a)?;
            match (lv, rv) {
                (Value::Int(x), Value::Int(y)) => Ok(rel.holds(x, y)),
                (lv, rv) => match rel {
                    Rel::Eq => Ok(lv == rv),
                    Rel::Ne => Ok(lv != rv),
                    _ => Err(FormulaError::IllTyped("ordered comparison of non-integers".into())),
                },
            }
        }
        Formula::And(fs) => {
            for g in fs {
                if !eval(g, a, dom)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(fs) => {
            for g in fs {
                if eval(g, a, dom)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Not(g) => Ok(!eval(g, a, dom)?),
        Formula::Implies(p, q) => Ok(!eval(p, a, dom)? || eval(q, a, dom)?),
        Formula::Forall(vars, body) => {
            // ∀x.(A ⇒ B) with x not free in B: decide B once; when it holds
            // the quantification cannot fail.
            if let Formula::Implies(_, concl) = body.as_ref() {
                let cfv = concl.free_vars();
                if vars.iter().all(|v| !cfv.contains_key(&v.name))
                    && matches!(eval(concl, a, dom), Ok(true))
                {
                    return Ok(true);
                }
            }
            // Unary antecedent constraints on a quantified variable gate its
            // scan domain: outside them the implication is vacuously true.
            let scan = scan_domains(vars, body, dom);
            let names: Vec<&SymVar> = vars.iter().collect();
            let mut inner = a.clone();
            forall_eval(&names, &scan, 0, body, &mut inner, dom)
        }
    }
}

/// Per-variable scan lists for a quantified body, filtered by unary ground
/// comparisons found in the antecedent chain of the body's implications.
fn scan_domains(vars: &[SymVar], body: &Formula, dom: &BoundedDomain) -> Vec<Vec<i64>> {
    let mut constraints: Vec<(String, Rel, i64)> = Vec::new();
    collect_unary(body, &mut constraints);
    vars.iter()
        .map(|v| {
            let relevant: Vec<&(String, Rel, i64)> =
                constraints.iter().filter(|(n, _, _)| n == &v.name).collect();
            dom.scan_points()
                .iter()
                .copied()
                .filter(|p| relevant.iter().all(|(_, rel, c)| rel.holds(*p, *c)))
                .collect()
        })
        .collect()
}

/// Gather `x REL c` conjuncts from the antecedent when the body is one
/// implication. Outside the collected ranges that antecedent is false and
/// the body vacuously true, so those points need no visit. Conjunctions of
/// implications are not filtered: their antecedents differ.
fn collect_unary(f: &Formula, out: &mut Vec<(String, Rel, i64)>) {
    if let Formula::Implies(a, _) = f {
        collect_antecedent(a, out);
    }
}

fn collect_antecedent(f: &Formula, out: &mut Vec<(String, Rel, i64)>) {
    match f {
        Formula::And(fs) => {
            for g in fs {
                collect_antecedent(g, out);
            }
        }
        Formula::Cmp(SymValue::Var(v), rel, SymValue::Int(c)) => {
            out.push((v.name.clone(), *rel, *c));
        }
        Formula::Cmp(SymValue::Int(c), rel, SymValue::Var(v)) => {
            let mirrored = match rel {
                Rel::Lt => Rel::Gt,
                Rel::Le => Rel::Ge,
                Rel::Gt => Rel::Lt,
                Rel::Ge => Rel::Le,
                r => *r,
            };
            out.push((v.name.clone(), mirrored, *c));
        }
        _ => {}
    }
}

fn forall_eval(
    vars: &[&SymVar],
    scan: &[Vec<i64>],
    i: usize,
    body: &Formula,
    a: &mut Assignment,
    dom: &BoundedDomain,
) -> Result<bool, FormulaError> {
    if i == vars.len() {
        return eval(body, a, dom);
    }
    let name = &vars[i].name;
    let saved = a.0.get(name).copied();
    for &n in &scan[i] {
        a.0.insert(name.clone(), n);
        if !forall_eval(vars, scan, i + 1, body, a, dom)? {
            restore(a, name, saved);
            return Ok(false);
        }
    }
    restore(a, name, saved);
    Ok(true)
}

fn restore(a: &mut Assignment, name: &str, saved: Option<i64>) {
    match saved {
        Some(v) => {
            a.0.insert(name.to_string(), v);
        }
        None => {
            a.0.remove(name);
        }
    }
}

/// Free variables above this count refuse exhaustive search.
pub const SAT_VAR_CAP: usize = 8;

/// Exhaustive bounded satisfiability. The witness is the lexicographically
/// first satisfying assignment (variables sorted by name, domain ascending).
/// Top-level conjuncts are checked as soon as their variables are assigned,
/// pruning the search below a falsified antecedent.
pub fn sat_bounded(f: &Formula, dom: &BoundedDomain) -> Result<Option<Assignment>, FormulaError> {
    let f = simplify(f);
    let fv = f.free_vars();
    if fv.len() > SAT_VAR_CAP {
        return Err(FormulaError::TooManyFreeVars { count: fv.len(), cap: SAT_VAR_CAP });
    }
    let names: Vec<String> = fv.keys().cloned().collect();
    let conjuncts: Vec<Formula> = match &f {
        Formula::And(fs) => fs.clone(),
        Formula::Bool(true) => Vec::new(),
        other => vec![other.clone()],
    };
    if let Formula::Bool(false) = f {
        return Ok(None);
    }
    // For each conjunct, the index of the last assigned variable it needs.
    let due: Vec<usize> = conjuncts
        .iter()
        .map(|c| {
            c.free_vars()
                .keys()
                .map(|n| names.iter().position(|m| m == n).expect("var of a conjunct"))
                .max()
                .map(|i| i + 1)
                .unwrap_or(0)
        })
        .collect();
    let mut a = Assignment::default();
    sat_search(&names, 0, &conjuncts, &due, &mut a, dom)
}

fn sat_search(
    names: &[String],
    i: usize,
    conjuncts: &[Formula],
    due: &[usize],
    a: &mut Assignment,
    dom: &BoundedDomain,
) -> Result<Option<Assignment>, FormulaError> {
    for (c, d) in conjuncts.iter().zip(due) {
        if *d == i && !eval(c, a, dom)? {
            return Ok(None);
        }
    }
    if i == names.len() {
        return Ok(Some(a.clone()));
    }
    for &n in dom.points() {
        a.0.insert(names[i].clone(), n);
        if let Some(w) = sat_search(names, i + 1, conjuncts, due, a, dom)? {
            return Ok(Some(w));
        }
    }
    a.0.remove(&names[i]);
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    CounterExample(Assignment),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Bounded validity as the dual of satisfiability of the negation.
pub fn valid_bounded(f: &Formula, dom: &BoundedDomain) -> Result<Validity, FormulaError> {
    match sat_bounded(&Formula::not(f.clone()), dom)? {
        None => Ok(Validity::Valid),
        Some(a) => Ok(Validity::CounterExample(a)),
    }
}

// ---------------------------------------------------------------------------
// Simplification: equivalence-preserving rewrites only.
// ---------------------------------------------------------------------------

pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::Bool(b) => Formula::Bool(*b),
        Formula::Cmp(l, rel, r) => simplify_cmp(l, *rel, r),
        Formula::And(fs) => {
            let mut out: Vec<Formula> = Vec::new();
            for g in fs {
                match simplify(g) {
                    Formula::Bool(true) => {}
                    Formula::Bool(false) => return Formula::Bool(false),
                    Formula::And(inner) => {
                        for h in inner {
                            if !out.contains(&h) {
                                out.push(h);
                            }
                        }
                    }
                    h => {
                        if !out.contains(&h) {
                            out.push(h);
                        }
                    }
                }
            }
            Formula::and(out)
        }
        Formula::Or(fs) => {
            let mut out: Vec<Formula> = Vec::new();
            for g in fs {
                match simplify(g) {
                    Formula::Bool(false) => {}
                    Formula::Bool(true) => return Formula::Bool(true),
                    Formula::Or(inner) => {
                        for h in inner {
                            if !out.contains(&h) {
                                out.push(h);
                            }
                        }
                    }
                    h => {
                        if !out.contains(&h) {
                            out.push(h);
                        }
                    }
                }
            }
            Formula::or(out)
        }
        Formula::Not(g) => match simplify(g) {
            Formula::Bool(b) => Formula::Bool(!b),
            Formula::Not(inner) => *inner,
            // ¬(A ⇒ B) ≡ A ∧ ¬B exposes the antecedent to search pruning.
            Formula::Implies(a, b) => simplify(&Formula::And(vec![*a, Formula::Not(b)])),
            h => Formula::not(h),
        },
        Formula::Implies(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            match (&a, &b) {
                (Formula::Bool(false), _) => return Formula::Bool(true),
                (Formula::Bool(true), _) => return b,
                (_, Formula::Bool(true)) => return Formula::Bool(true),
                (_, Formula::Bool(false)) => return simplify(&Formula::not(a)),
                _ => {}
            }
            if a == b {
                return Formula::Bool(true);
            }
            // Drop conclusion conjuncts already entailed by the antecedent.
            let ants = conjuncts(&a);
            let concls = conjuncts(&b);
            let remaining: Vec<Formula> = concls
                .iter()
                .filter(|c| !ants.iter().any(|p| entails(p, c)))
                .cloned()
                .collect();
            if remaining.is_empty() {
                Formula::Bool(true)
            } else {
                Formula::implies(a, Formula::and(remaining))
            }
        }
        Formula::Forall(vars, body) => {
            let body = simplify(body);
            if let Formula::Bool(b) = body {
                return Formula::Bool(b);
            }
            let fv = body.free_vars();
            let vars: Vec<SymVar> = vars.iter().filter(|v| fv.contains_key(&v.name)).cloned().collect();
            Formula::forall(vars, body)
        }
    }
}

fn simplify_cmp(l: &SymValue, rel: Rel, r: &SymValue) -> Formula {
    let mut ln = normalize(l);
    let mut rn = normalize(r);
    // Ground comparisons fold away.
    match (&ln, &rn) {
        (SymValue::Int(a), SymValue::Int(b)) => return Formula::Bool(rel.holds(*a, *b)),
        (SymValue::Null, SymValue::Null) => {
            if matches!(rel, Rel::Eq | Rel::Ne) {
                return Formula::Bool(rel == Rel::Eq);
            }
        }
        (SymValue::Loc(a), SymValue::Loc(b)) => {
            if matches!(rel, Rel::Eq | Rel::Ne) {
                return Formula::Bool(rel.holds(a.0 as i64, b.0 as i64));
            }
        }
        _ => {}
    }
    if ln == rn {
        return match rel {
            Rel::Eq | Rel::Le | Rel::Ge => Formula::Bool(true),
            Rel::Ne | Rel::Lt | Rel::Gt => Formula::Bool(false),
        };
    }
    // Keep constants on the right for readability and entailment checks.
    let mut rel = rel;
    if matches!(ln, SymValue::Int(_)) && !matches!(rn, SymValue::Int(_)) {
        std::mem::swap(&mut ln, &mut rn);
        rel = mirror(rel);
    }
    Formula::Cmp(ln, rel, rn)
}

fn mirror(rel: Rel) -> Rel {
    match rel {
        Rel::Lt => Rel::Gt,
        Rel::Le => Rel::Ge,
        Rel::Gt => Rel::Lt,
        Rel::Ge => Rel::Le,
        Rel::Eq => Rel::Eq,
        Rel::Ne => Rel::Ne,
    }
}

fn conjuncts(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::And(fs) => fs.clone(),
        other => vec![other.clone()],
    }
}

/// Cheap syntactic entailment between comparisons over the same term:
/// `t > 0` entails `t >= 0`, `t >= 5` entails `t > 3`, and so on.
fn entails(p: &Formula, q: &Formula) -> bool {
    if p == q {
        return true;
    }
    let (Formula::Cmp(pl, prel, pr), Formula::Cmp(ql, qrel, qr)) = (p, q) else {
        return false;
    };
    let (SymValue::Int(a), SymValue::Int(b)) = (pr, qr) else { return false };
    if normalize(pl) != normalize(ql) {
        return false;
    }
    let (a, b) = (*a, *b);
    // Interval reasoning: does `t prel a` force `t qrel b`?
    let lower = |rel: Rel, c: i64| -> Option<i64> {
        match rel {
            Rel::Ge | Rel::Eq => Some(c),
            Rel::Gt => c.checked_add(1),
            _ => None,
        }
    };
    let upper = |rel: Rel, c: i64| -> Option<i64> {
        match rel {
            Rel::Le | Rel::Eq => Some(c),
            Rel::Lt => c.checked_sub(1),
            _ => None,
        }
    };
    let plo = lower(*prel, a);
    let phi = upper(*prel, a);
    match qrel {
        Rel::Ge => plo.is_some_and(|lo| lo >= b),
        Rel::Gt => plo.is_some_and(|lo| lo > b),
        Rel::Le => phi.is_some_and(|hi| hi <= b),
        Rel::Lt => phi.is_some_and(|hi| hi < b),
        Rel::Eq => plo.is_some_and(|lo| lo == b) && phi.is_some_and(|hi| hi == b),
        Rel::Ne => {
            plo.is_some_and(|lo| lo > b) || phi.is_some_and(|hi| hi < b)
        }
    }
}

// ---------------------------------------------------------------------------
// SMT-LIB emission
// ---------------------------------------------------------------------------

/// Render an SMT-LIB 2 script deciding satisfiability of `f`. Truncated
/// division is expressed through a defined `tdiv` (SMT-LIB `div` is
/// Euclidean). Byte-stable for equal formulas.
pub fn emit_smtlib(f: &Formula) -> String {
    let mut out = String::new();
    let has_quant = has_forall(f);
    let logic = if has_quant { "NIA" } else { "QF_NIA" };
    out.push_str(&format!("(set-logic {logic})\n"));
    if has_div(f) {
        out.push_str(
            "(define-fun tdiv ((a Int) (b Int)) Int (ite (>= a 0) (div a b) (- (div (- a) b))))\n",
        );
    }
    for (name, v) in f.free_vars() {
        let role = match v.role {
            VarRole::Weak => "weak field",
            VarRole::Strong => "strong field",
            VarRole::Param => "parameter",
        };
        out.push_str(&format!("(declare-const {name} Int) ; {role}\n"));
    }
    out.push_str("(assert ");
    emit_formula(f, &mut out);
    out.push_str(")\n(check-sat)\n");
    out
}

fn has_forall(f: &Formula) -> bool {
    match f {
        Formula::Forall(_, _) => true,
        Formula::And(fs) | Formula::Or(fs) => fs.iter().any(has_forall),
        Formula::Not(g) => has_forall(g),
        Formula::Implies(a, b) => has_forall(a) || has_forall(b),
        _ => false,
    }
}

fn has_div(f: &Formula) -> bool {
    fn sv_has_div(sv: &SymValue) -> bool {
        match sv {
            SymValue::Op(l, Op::Div, r) => {
                !matches!((l.as_ref(), r.as_ref()), (SymValue::Int(_), SymValue::Int(_)))
                    || sv_has_div(l)
                    || sv_has_div(r)
            }
            SymValue::Op(l, _, r) => sv_has_div(l) || sv_has_div(r),
            _ => false,
        }
    }
    match f {
        Formula::Cmp(l, _, r) => sv_has_div(l) || sv_has_div(r),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().any(has_div),
        Formula::Not(g) => has_div(g),
        Formula::Implies(a, b) => has_div(a) || has_div(b),
        Formula::Forall(_, g) => has_div(g),
        Formula::Bool(_) => false,
    }
}

fn emit_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Formula::Cmp(l, rel, r) => {
            // Ground location/null comparisons fold during emission; formulas
            // shipped to a solver are integer-only.
            if let (Ok(lv), Ok(rv)) = (l.eval(&Assignment::default()), r.eval(&Assignment::default()))
            {
                if !matches!((lv, rv), (Value::Int(_), Value::Int(_))) {
                    let b = match rel {
                        Rel::Eq => lv == rv,
                        _ => lv != rv,
                    };
                    out.push_str(if b { "true" } else { "false" });
                    return;
                }
            }
            let op = match rel {
                Rel::Eq => "=",
                Rel::Ne => "distinct",
                Rel::Lt => "<",
                Rel::Le => "<=",
                Rel::Gt => ">",
                Rel::Ge => ">=",
            };
            out.push_str(&format!("({op} "));
            emit_sym(l, out);
            out.push(' ');
            emit_sym(r, out);
            out.push(')');
        }
        Formula::And(fs) => emit_nary("and", fs, out),
        Formula::Or(fs) => emit_nary("or", fs, out),
        Formula::Not(g) => {
            out.push_str("(not ");
            emit_formula(g, out);
            out.push(')');
        }
        Formula::Implies(a, b) => {
            out.push_str("(=> ");
            emit_formula(a, out);
            out.push(' ');
            emit_formula(b, out);
            out.push(')');
        }
        Formula::Forall(vars, body) => {
            out.push_str("(forall (");
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("({} Int)", v.name));
            }
            out.push_str(") ");
            emit_formula(body, out);
            out.push(')');
        }
    }
}

fn emit_nary(op: &str, fs: &[Formula], out: &mut String) {
    match fs.len() {
        0 => out.push_str(if op == "and" { "true" } else { "false" }),
        1 => emit_formula(&fs[0], out),
        _ => {
            out.push_str(&format!("({op}"));
            for f in fs {
                out.push(' ');
                emit_formula(f, out);
            }
            out.push(')');
        }
    }
}

fn emit_sym(sv: &SymValue, out: &mut String) {
    match sv {
        SymValue::Int(n) => {
            if *n < 0 {
                out.push_str(&format!("(- {})", n.unsigned_abs()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        SymValue::Var(v) => out.push_str(&v.name),
        SymValue::Null | SymValue::Loc(_) => out.push_str("0"),
        SymValue::Op(l, op, r) => {
            let name = match op {
                Op::Add => "+",
                Op::Sub => "-",
                Op::Mul => "*",
                Op::Div => "tdiv",
            };
            out.push_str(&format!("({name} "));
            emit_sym(l, out);
            out.push(' ');
            emit_sym(r, out);
            out.push(')');
        }
    }
}
