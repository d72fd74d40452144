//! Canonical source printer. Output reparses to an equal (desugared) AST.

use crate::ast::*;
use std::fmt::Write;

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for i in &p.interfaces {
        print_interface(&mut out, i);
        out.push('\n');
    }
    for c in &p.classes {
        print_class(&mut out, c);
        out.push('\n');
    }
    if p.main != Expr::Val(Value::Null) {
        let mut s = String::new();
        print_expr(&mut s, &p.main, 0);
        out.push_str(&s);
        out.push('\n');
    }
    out
}

fn print_interface(out: &mut String, i: &InterfaceDecl) {
    match i {
        InterfaceDecl::Extends { name, parents } => {
            let _ = writeln!(out, "interface {name} extends {}, {}", parents.0, parents.1);
        }
        InterfaceDecl::Body { name, sigs } => {
            let _ = writeln!(out, "interface {name} {{");
            for s in sigs {
                let _ = write!(out, "  {}({} : {}) : {}", s.name, s.param.0, s.param.1, s.ret);
                print_invariants(out, &s.pre);
                out.push('\n');
            }
            out.push_str("}\n");
        }
    }
}

fn print_class(out: &mut String, c: &ClassDecl) {
    let _ = writeln!(out, "class {} implements {} {{", c.name, c.implements);
    for f in &c.fields {
        let _ = write!(out, "  {} : {}", f.name, f.ty);
        if f.weak {
            out.push_str(" weak");
        }
        print_invariants(out, &f.invs);
        out.push('\n');
    }
    for m in &c.methods {
        out.push('\n');
        let _ = write!(out, "  def {}({} : {}) : {}", m.name, m.param.0, m.param.1, m.ret);
        print_invariants(out, &m.pre);
        out.push_str(" {\n    ");
        let mut body = String::new();
        print_expr(&mut body, &m.body, 0);
        out.push_str(&body);
        out.push_str("\n  }\n");
    }
    out.push_str("}\n");
}

fn print_invariants(out: &mut String, invs: &[Invariant]) {
    if invs.is_empty() {
        return;
    }
    out.push_str(" [");
    for (i, inv) in invs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_inv(out, inv);
    }
    out.push(']');
}

fn print_inv(out: &mut String, inv: &Invariant) {
    print_inv_value(out, &inv.lhs);
    let _ = write!(out, " {} ", inv.rel.symbol());
    print_inv_value(out, &inv.rhs);
}

fn print_inv_value(out: &mut String, d: &InvValue) {
    match d {
        InvValue::Var(x) => out.push_str(x),
        InvValue::Field(x, f) => {
            let _ = write!(out, "{x}.{f}");
        }
        InvValue::Val(v) => {
            let _ = write!(out, "{v}");
        }
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Val(_) | Expr::Var(_) | Expr::Select(_, _) | Expr::Call(_, _, _) | Expr::New(_) => 9,
        Expr::Cast(_, _) => 3,
        Expr::Op(_, Op::Mul | Op::Div, _) => 2,
        Expr::Op(_, Op::Add | Op::Sub, _) => 1,
        Expr::Let(_, _, _) | Expr::Update(_, _, _) => 0,
    }
}

/// Print `e`, parenthesizing when its precedence is below `min`.
fn print_expr(out: &mut String, e: &Expr, min: u8) {
    if prec(e) < min {
        out.push('(');
        print_expr_raw(out, e);
        out.push(')');
    } else {
        print_expr_raw(out, e);
    }
}

fn print_expr_raw(out: &mut String, e: &Expr) {
    match e {
        Expr::Val(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(x) => out.push_str(x),
        Expr::Op(l, op, r) => {
            let level = prec(e);
            print_expr(out, l, level);
            let _ = write!(out, " {} ", op.symbol());
            // Right operands are symbolic values; parenthesize nested ops to
            // keep the tree shape on reparse.
            if matches!(r.as_ref(), Expr::Op(_, _, _)) {
                out.push('(');
                print_expr_raw(out, r);
                out.push(')');
            } else {
                print_expr_raw(out, r);
            }
        }
        Expr::Select(x, f) => {
            let _ = write!(out, "{x}.{f}");
        }
        Expr::Update(x, f, rhs) => {
            let _ = write!(out, "{x}.{f} = ");
            print_expr(out, rhs, 0);
        }
        Expr::Call(x, m, arg) => {
            let _ = write!(out, "{x}.{m}(");
            print_expr(out, arg, 0);
            out.push(')');
        }
        Expr::Let(x, e1, e2) => {
            let _ = write!(out, "let {x} = ");
            // The bound expression sits at item level; a nested let is fine,
            // but print parens around it for readability of chains.
            if matches!(e1.as_ref(), Expr::Let(_, _, _)) {
                out.push('(');
                print_expr_raw(out, e1);
                out.push(')');
            } else {
                print_expr(out, e1, 0);
            }
            out.push_str(" in ");
            print_expr(out, e2, 0);
        }
        Expr::New(c) => {
            let _ = write!(out, "new {c}");
        }
        Expr::Cast(t, e) => {
            let _ = write!(out, "({t}) ");
            print_expr(out, e, 4);
        }
    }
}
