//! Recursive-descent parser for `.ant` sources plus the desugaring pass that
//! lowers surface conveniences (`;`, `+=`, `-=`, zero-argument methods) onto
//! the core expression grammar.

use crate::ast::*;
use crate::lexer::{tokenize, LexError, Pos, Tok, Token};
use std::collections::{HashMap, HashSet};

/// Surface expressions as written in source, before desugaring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurfaceExpr {
    Val(Value),
    Var(Ident),
    Op(Box<SurfaceExpr>, Op, Box<SurfaceExpr>),
    Select(Ident, Ident),
    Update(Ident, Ident, Box<SurfaceExpr>),
    AddAssign(Ident, Ident, Box<SurfaceExpr>),
    SubAssign(Ident, Ident, Box<SurfaceExpr>),
    Call(Ident, Ident, Box<SurfaceExpr>),
    ZeroCall(Ident, Ident),
    Seq(Box<SurfaceExpr>, Box<SurfaceExpr>),
    Let(Ident, Box<SurfaceExpr>, Box<SurfaceExpr>),
    New(Ident),
    Cast(Type, Box<SurfaceExpr>),
}

impl From<&Expr> for SurfaceExpr {
    fn from(e: &Expr) -> SurfaceExpr {
        match e {
            Expr::Val(v) => SurfaceExpr::Val(*v),
            Expr::Var(x) => SurfaceExpr::Var(x.clone()),
            Expr::Op(l, op, r) => {
                SurfaceExpr::Op(Box::new(l.as_ref().into()), *op, Box::new(r.as_ref().into()))
            }
            Expr::Select(x, f) => SurfaceExpr::Select(x.clone(), f.clone()),
            Expr::Update(x, f, e) => {
                SurfaceExpr::Update(x.clone(), f.clone(), Box::new(e.as_ref().into()))
            }
            Expr::Call(x, m, e) => {
                SurfaceExpr::Call(x.clone(), m.clone(), Box::new(e.as_ref().into()))
            }
            Expr::Let(x, e1, e2) => SurfaceExpr::Let(
                x.clone(),
                Box::new(e1.as_ref().into()),
                Box::new(e2.as_ref().into()),
            ),
            Expr::New(c) => SurfaceExpr::New(c.clone()),
            Expr::Cast(t, e) => SurfaceExpr::Cast(t.clone(), Box::new(e.as_ref().into())),
        }
    }
}

impl SurfaceExpr {
    fn collect_idents(&self, out: &mut HashSet<Ident>) {
        match self {
            SurfaceExpr::Val(_) => {}
            SurfaceExpr::Var(x) => {
                out.insert(x.clone());
            }
            SurfaceExpr::Op(l, _, r) => {
                l.collect_idents(out);
                r.collect_idents(out);
            }
            SurfaceExpr::Select(x, _) => {
                out.insert(x.clone());
            }
            SurfaceExpr::Update(x, _, e)
            | SurfaceExpr::AddAssign(x, _, e)
            | SurfaceExpr::SubAssign(x, _, e)
            | SurfaceExpr::Call(x, _, e) => {
                out.insert(x.clone());
                e.collect_idents(out);
            }
            SurfaceExpr::ZeroCall(x, _) => {
                out.insert(x.clone());
            }
            SurfaceExpr::Seq(a, b) => {
                a.collect_idents(out);
                b.collect_idents(out);
            }
            SurfaceExpr::Let(x, e1, e2) => {
                out.insert(x.clone());
                e1.collect_idents(out);
                e2.collect_idents(out);
            }
            SurfaceExpr::New(_) => {}
            SurfaceExpr::Cast(_, e) => e.collect_idents(out),
        }
    }
}

/// Fresh-name supply that avoids every identifier already present.
pub struct FreshNames {
    used: HashSet<Ident>,
    next: u32,
}

impl FreshNames {
    pub fn avoiding(used: HashSet<Ident>) -> FreshNames {
        FreshNames { used, next: 0 }
    }

    pub fn fresh(&mut self, prefix: &str) -> Ident {
        loop {
            let name = format!("{}{}", prefix, self.next);
            self.next += 1;
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Lower a surface expression onto the core grammar:
/// `e1; e2` becomes `let _sN = e1 in e2`, `x.f += e` becomes
/// `x.f = x.f + e` (likewise `-=`), zero-argument call sites pass 0.
pub fn desugar(e: &SurfaceExpr) -> Expr {
    let mut used = HashSet::new();
    e.collect_idents(&mut used);
    let mut fresh = FreshNames::avoiding(used);
    desugar_with(e, &mut fresh)
}

fn desugar_with(e: &SurfaceExpr, fresh: &mut FreshNames) -> Expr {
    match e {
        SurfaceExpr::Val(v) => Expr::Val(*v),
        SurfaceExpr::Var(x) => Expr::Var(x.clone()),
        SurfaceExpr::Op(l, op, r) => Expr::Op(
            Box::new(desugar_with(l, fresh)),
            *op,
            Box::new(desugar_with(r, fresh)),
        ),
        SurfaceExpr::Select(x, f) => Expr::Select(x.clone(), f.clone()),
        SurfaceExpr::Update(x, f, e) => {
            Expr::Update(x.clone(), f.clone(), Box::new(desugar_with(e, fresh)))
        }
        SurfaceExpr::AddAssign(x, f, e) => Expr::Update(
            x.clone(),
            f.clone(),
            Box::new(Expr::Op(
                Box::new(Expr::Select(x.clone(), f.clone())),
                Op::Add,
                Box::new(desugar_with(e, fresh)),
            )),
        ),
        SurfaceExpr::SubAssign(x, f, e) => Expr::Update(
            x.clone(),
            f.clone(),
            Box::new(Expr::Op(
                Box::new(Expr::Select(x.clone(), f.clone())),
                Op::Sub,
                Box::new(desugar_with(e, fresh)),
            )),
        ),
        SurfaceExpr::Call(x, m, e) => {
            Expr::Call(x.clone(), m.clone(), Box::new(desugar_with(e, fresh)))
        }
        SurfaceExpr::ZeroCall(x, m) => Expr::Call(x.clone(), m.clone(), Box::new(Expr::int(0))),
        SurfaceExpr::Seq(a, b) => {
            let e1 = desugar_with(a, fresh);
            let x = fresh.fresh("_s");
            Expr::Let(x, Box::new(e1), Box::new(desugar_with(b, fresh)))
        }
        SurfaceExpr::Let(x, e1, e2) => Expr::Let(
            x.clone(),
            Box::new(desugar_with(e1, fresh)),
            Box::new(desugar_with(e2, fresh)),
        ),
        SurfaceExpr::New(c) => Expr::New(c.clone()),
        SurfaceExpr::Cast(t, e) => Expr::Cast(t.clone(), Box::new(desugar_with(e, fresh))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{0}")]
    Lex(#[from] LexError),
    #[error("{pos}: syntax error: expected {expected}, found {found}")]
    Unexpected { pos: Pos, expected: String, found: String },
    #[error("{pos}: {message}")]
    Invalid { pos: Pos, message: String },
}

/// Declaration positions keyed by path (`Account`, `Account.balance`,
/// `Account::deposit`, `main`), for diagnostics.
pub type SourceMap = HashMap<String, Pos>;

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    parse_program_with_spans(src).map(|(p, _)| p)
}

pub fn parse_program_with_spans(src: &str) -> Result<(Program, SourceMap), ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, spans: HashMap::new() };
    let prog = p.program()?;
    Ok((prog, p.spans))
}

/// Parse a standalone surface expression (used by tests and the REPL-ish bits).
pub fn parse_surface_expr(src: &str) -> Result<SurfaceExpr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, spans: HashMap::new() };
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

/// Parse and desugar a standalone expression.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    Ok(desugar(&parse_surface_expr(src)?))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    spans: SourceMap,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn here(&self) -> Pos {
        self.tokens[self.pos].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Unexpected {
            pos: self.here(),
            expected: expected.to_string(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(x)
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut interfaces = Vec::new();
        let mut classes = Vec::new();
        loop {
            match self.peek() {
                Tok::Interface => interfaces.push(self.interface()?),
                Tok::Class => classes.push(self.class()?),
                _ => break,
            }
        }
        let main = if *self.peek() == Tok::Eof {
            SurfaceExpr::Val(Value::Null)
        } else {
            self.spans.insert("main".into(), self.here());
            self.expr()?
        };
        self.expect(Tok::Eof)?;
        let mut prog = Program { interfaces, classes, main: desugar(&main) };
        self.pad_zero_param(&mut prog);
        Ok(prog)
    }

    /// Zero-parameter methods get a synthetic unused int parameter.
    fn pad_zero_param(&mut self, prog: &mut Program) {
        for c in &mut prog.classes {
            for m in &mut c.methods {
                if m.param.0.is_empty() {
                    m.param = ("_p0".into(), Type::Int);
                }
            }
        }
        for i in &mut prog.interfaces {
            if let InterfaceDecl::Body { sigs, .. } = i {
                for s in sigs {
                    if s.param.0.is_empty() {
                        s.param = ("_p0".into(), Type::Int);
                    }
                }
            }
        }
    }

    fn interface(&mut self) -> Result<InterfaceDecl, ParseError> {
        let pos = self.here();
        self.expect(Tok::Interface)?;
        let name = self.ident()?;
        self.spans.insert(name.clone(), pos);
        if *self.peek() == Tok::Extends {
            self.bump();
            let a = self.ident()?;
            self.expect(Tok::Comma)?;
            let b = self.ident()?;
            Ok(InterfaceDecl::Extends { name, parents: (a, b) })
        } else {
            self.expect(Tok::LBrace)?;
            let mut sigs = Vec::new();
            while *self.peek() != Tok::RBrace {
                sigs.push(self.msig()?);
            }
            self.expect(Tok::RBrace)?;
            Ok(InterfaceDecl::Body { name, sigs })
        }
    }

    fn msig(&mut self) -> Result<MethodSig, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let param = if *self.peek() == Tok::RParen {
            (String::new(), Type::Int)
        } else {
            let x = self.ident()?;
            self.expect(Tok::Colon)?;
            (x, self.ty()?)
        };
        self.expect(Tok::RParen)?;
        self.expect(Tok::Colon)?;
        let ret = self.ty()?;
        let pre = self.opt_invariants()?;
        Ok(MethodSig { name, param, ret, pre })
    }

    fn class(&mut self) -> Result<ClassDecl, ParseError> {
        let pos = self.here();
        self.expect(Tok::Class)?;
        let name = self.ident()?;
        self.spans.insert(name.clone(), pos);
        self.expect(Tok::Implements)?;
        let implements = self.ident()?;
        self.expect(Tok::LBrace)?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Def {
                let pos = self.here();
                let m = self.method()?;
                self.spans.insert(format!("{name}::{}", m.name), pos);
                methods.push(m);
            } else {
                let pos = self.here();
                let f = self.field()?;
                self.spans.insert(format!("{name}.{}", f.name), pos);
                fields.push(f);
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(ClassDecl { name, implements, fields, methods })
    }

    fn field(&mut self) -> Result<FieldDecl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let ty = self.ty()?;
        let weak = if *self.peek() == Tok::Weak {
            self.bump();
            true
        } else {
            false
        };
        let invs = self.opt_invariants()?;
        Ok(FieldDecl { name, ty, weak, invs })
    }

    fn method(&mut self) -> Result<MethodDecl, ParseError> {
        self.expect(Tok::Def)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let param = if *self.peek() == Tok::RParen {
            (String::new(), Type::Int)
        } else {
            let x = self.ident()?;
            self.expect(Tok::Colon)?;
            (x, self.ty()?)
        };
        self.expect(Tok::RParen)?;
        self.expect(Tok::Colon)?;
        let ret = self.ty()?;
        let pre = self.opt_invariants()?;
        self.expect(Tok::LBrace)?;
        let body = self.expr()?;
        self.expect(Tok::RBrace)?;
        Ok(MethodDecl { name, param, ret, pre, body: desugar(&body) })
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::IntTy => {
                self.bump();
                Ok(Type::Int)
            }
            Tok::UnitTy => {
                self.bump();
                Ok(Type::Unit)
            }
            Tok::Ident(x) => {
                self.bump();
                Ok(Type::Named(x))
            }
            _ => self.unexpected("type"),
        }
    }

    fn opt_invariants(&mut self) -> Result<Vec<Invariant>, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(Vec::new());
        }
        self.bump();
        let mut out = Vec::new();
        if *self.peek() != Tok::RBracket {
            out.push(self.invariant()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                out.push(self.invariant()?);
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(out)
    }

    fn invariant(&mut self) -> Result<Invariant, ParseError> {
        let lhs = self.inv_value()?;
        let rel = self.rel()?;
        let rhs = self.inv_value()?;
        Ok(Invariant { lhs, rel, rhs })
    }

    fn inv_value(&mut self) -> Result<InvValue, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(InvValue::Val(Value::Int(n)))
            }
            Tok::Minus => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(n) => {
                        self.bump();
                        Ok(InvValue::Val(Value::Int(-n)))
                    }
                    _ => self.unexpected("integer literal"),
                }
            }
            Tok::Null => {
                self.bump();
                Ok(InvValue::Val(Value::Null))
            }
            Tok::Ident(x) => {
                self.bump();
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let f = self.ident()?;
                    Ok(InvValue::Field(x, f))
                } else {
                    Ok(InvValue::Var(x))
                }
            }
            _ => self.unexpected("invariant value"),
        }
    }

    fn rel(&mut self) -> Result<Rel, ParseError> {
        let r = match self.peek() {
            Tok::Assign => Rel::Eq,
            Tok::Ne => Rel::Ne,
            Tok::Lt => Rel::Lt,
            Tok::Le => Rel::Le,
            Tok::Gt => Rel::Gt,
            Tok::Ge => Rel::Ge,
            _ => return self.unexpected("relation"),
        };
        self.bump();
        Ok(r)
    }

    /// expr := item (';' item)*, right-associated into Seq.
    fn expr(&mut self) -> Result<SurfaceExpr, ParseError> {
        let first = self.item()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.expr()?;
            Ok(SurfaceExpr::Seq(Box::new(first), Box::new(rest)))
        } else {
            Ok(first)
        }
    }

    /// item := let | assignment | arithmetic. A `let` body extends as far
    /// right as possible, so `let x = a in b; c` scopes x over `b; c`.
    fn item(&mut self) -> Result<SurfaceExpr, ParseError> {
        if *self.peek() == Tok::Let {
            self.bump();
            let x = self.ident()?;
            self.expect(Tok::Assign)?;
            let e1 = self.item()?;
            self.expect(Tok::In)?;
            let e2 = self.expr()?;
            return Ok(SurfaceExpr::Let(x, Box::new(e1), Box::new(e2)));
        }
        // x.f = / += / -=
        if let Tok::Ident(x) = self.peek().clone() {
            if *self.peek_at(1) == Tok::Dot {
                if let Tok::Ident(f) = self.peek_at(2).clone() {
                    let op = self.peek_at(3).clone();
                    if matches!(op, Tok::Assign | Tok::PlusEq | Tok::MinusEq) {
                        self.bump();
                        self.bump();
                        self.bump();
                        self.bump();
                        let rhs = self.item()?;
                        return Ok(match op {
                            Tok::Assign => SurfaceExpr::Update(x, f, Box::new(rhs)),
                            Tok::PlusEq => SurfaceExpr::AddAssign(x, f, Box::new(rhs)),
                            _ => SurfaceExpr::SubAssign(x, f, Box::new(rhs)),
                        });
                    }
                }
            }
        }
        self.arith()
    }

    fn arith(&mut self) -> Result<SurfaceExpr, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op::Add,
                Tok::Minus => Op::Sub,
                _ => break,
            };
            let pos = self.here();
            self.bump();
            let rhs = self.mul()?;
            self.check_sv_operand(&rhs, pos)?;
            lhs = SurfaceExpr::Op(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul(&mut self) -> Result<SurfaceExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Op::Mul,
                Tok::Slash => Op::Div,
                _ => break,
            };
            let pos = self.here();
            self.bump();
            let rhs = self.unary()?;
            self.check_sv_operand(&rhs, pos)?;
            lhs = SurfaceExpr::Op(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    /// Right operands of integer operators must be symbolic values.
    fn check_sv_operand(&self, e: &SurfaceExpr, pos: Pos) -> Result<(), ParseError> {
        fn is_sv(e: &SurfaceExpr) -> bool {
            match e {
                SurfaceExpr::Val(_) | SurfaceExpr::Var(_) => true,
                SurfaceExpr::Op(l, _, r) => is_sv(l) && is_sv(r),
                _ => false,
            }
        }
        if is_sv(e) {
            Ok(())
        } else {
            Err(ParseError::Invalid {
                pos,
                message: "right operand of an integer operator must be a value or variable"
                    .into(),
            })
        }
    }

    fn unary(&mut self) -> Result<SurfaceExpr, ParseError> {
        if *self.peek() == Tok::Minus {
            if let Tok::Int(n) = self.peek_at(1).clone() {
                self.bump();
                self.bump();
                return Ok(SurfaceExpr::Val(Value::Int(-n)));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<SurfaceExpr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(SurfaceExpr::Val(Value::Int(n)))
            }
            Tok::Null => {
                self.bump();
                Ok(SurfaceExpr::Val(Value::Null))
            }
            Tok::New => {
                self.bump();
                let c = self.ident()?;
                Ok(SurfaceExpr::New(c))
            }
            Tok::Ident(x) => {
                self.bump();
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let f = self.ident()?;
                    if *self.peek() == Tok::LParen {
                        self.bump();
                        if *self.peek() == Tok::RParen {
                            self.bump();
                            Ok(SurfaceExpr::ZeroCall(x, f))
                        } else {
                            let arg = self.expr()?;
                            self.expect(Tok::RParen)?;
                            Ok(SurfaceExpr::Call(x, f, Box::new(arg)))
                        }
                    } else {
                        Ok(SurfaceExpr::Select(x, f))
                    }
                } else {
                    Ok(SurfaceExpr::Var(x))
                }
            }
            Tok::LParen => {
                self.bump();
                // Cast when the parenthesized item is a type: `int`, `Unit`,
                // or an uppercase identifier followed by an expression head.
                match self.peek().clone() {
                    Tok::IntTy => {
                        self.bump();
                        self.expect(Tok::RParen)?;
                        let e = self.unary()?;
                        Ok(SurfaceExpr::Cast(Type::Int, Box::new(e)))
                    }
                    Tok::UnitTy => {
                        self.bump();
                        self.expect(Tok::RParen)?;
                        let e = self.unary()?;
                        Ok(SurfaceExpr::Cast(Type::Unit, Box::new(e)))
                    }
                    Tok::Ident(name)
                        if name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
                            && *self.peek_at(1) == Tok::RParen
                            && self.starts_expr(self.peek_at(2)) =>
                    {
                        self.bump();
                        self.bump();
                        let e = self.unary()?;
                        Ok(SurfaceExpr::Cast(Type::Named(name), Box::new(e)))
                    }
                    _ => {
                        let e = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(e)
                    }
                }
            }
            _ => self.unexpected("expression"),
        }
    }

    fn starts_expr(&self, t: &Tok) -> bool {
        matches!(
            t,
            Tok::Int(_) | Tok::Null | Tok::New | Tok::Ident(_) | Tok::LParen | Tok::Minus | Tok::Let
        )
    }
}
