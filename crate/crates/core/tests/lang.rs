//! Parser, desugaring, pretty-printer, and type-system tests.

use ant_core::ast::*;
use ant_core::parser::{desugar, parse_expr, parse_program, parse_surface_expr, SurfaceExpr};
use ant_core::pretty::pretty_print;
use ant_core::types::*;

fn corpus(name: &str) -> String {
    let path = format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

fn account() -> Program {
    parse_program(&corpus("account.ant")).unwrap()
}

#[test]
fn account_program_structure() {
    let p = account();
    assert_eq!(p.classes.len(), 2);
    let acc = p.class("Account").unwrap();
    assert_eq!(acc.implements, "Object");
    assert_eq!(acc.fields.len(), 2);
    let bal = acc.field("balance").unwrap();
    assert!(bal.weak);
    assert_eq!(
        bal.invs,
        vec![Invariant {
            lhs: InvValue::Field("this".into(), "balance".into()),
            rel: Rel::Ge,
            rhs: InvValue::Val(Value::Int(0)),
        }]
    );
    let mc = acc.field("min_cash").unwrap();
    assert!(!mc.weak);
    assert_eq!(mc.invs.len(), 1);
    assert_eq!(acc.methods.len(), 6);
    let names: Vec<_> = acc.methods.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["init", "withdraw", "transfer", "deposit", "accrueInterest", "getBalance"]);
}

#[test]
fn empty_source_parses_to_null_main() {
    let p = parse_program("").unwrap();
    assert!(p.interfaces.is_empty());
    assert!(p.classes.is_empty());
    assert_eq!(p.main, Expr::Val(Value::Null));
}

#[test]
fn compound_assignment_desugars() {
    let e = parse_expr("this.balance += amount").unwrap();
    assert_eq!(
        e,
        Expr::Update(
            "this".into(),
            "balance".into(),
            Box::new(Expr::Op(
                Box::new(Expr::Select("this".into(), "balance".into())),
                Op::Add,
                Box::new(Expr::Var("amount".into())),
            )),
        )
    );
}

#[test]
fn sequencing_desugars_to_let() {
    let e = parse_expr("this.withdraw(a); w.deposit(a)").unwrap();
    match e {
        Expr::Let(x, e1, e2) => {
            assert!(x.starts_with("_s"));
            assert_eq!(*e1, Expr::Call("this".into(), "withdraw".into(), Box::new(Expr::Var("a".into()))));
            assert_eq!(*e2, Expr::Call("w".into(), "deposit".into(), Box::new(Expr::Var("a".into()))));
        }
        other => panic!("expected let, got {other:?}"),
    }
}

#[test]
fn zero_arg_methods_are_padded() {
    let p = account();
    let g = p.class("Account").unwrap().method("getBalance").unwrap();
    assert_eq!(g.param.1, Type::Int);
    assert!(!g.param.0.is_empty());
    // call sites pass 0
    let e = parse_expr("x.getBalance()").unwrap();
    assert_eq!(e, Expr::Call("x".into(), "getBalance".into(), Box::new(Expr::int(0))));
}

#[test]
fn seq_fresh_names_avoid_collisions() {
    let e = parse_expr("let _s0 = 5 in (x.inc(1); _s0)").unwrap();
    match e {
        Expr::Let(outer, _, body) => {
            assert_eq!(outer, "_s0");
            match *body {
                Expr::Let(inner, _, tail) => {
                    assert_ne!(inner, "_s0");
                    assert_eq!(*tail, Expr::Var("_s0".into()));
                }
                other => panic!("expected inner let, got {other:?}"),
            }
        }
        other => panic!("expected let, got {other:?}"),
    }
}

#[test]
fn desugar_is_idempotent() {
    for src in [
        "this.balance += amount",
        "a.m(1); b.m(2); c.m(3)",
        "let x = this.balance * i / 100 in this.balance += x",
    ] {
        let once = parse_expr(src).unwrap();
        let again = desugar(&SurfaceExpr::from(&once));
        assert_eq!(once, again);
    }
}

#[test]
fn parser_never_produces_locations() {
    for name in ["account.ant", "counter.ant", "register.ant", "auction.ant"] {
        let p = parse_program(&corpus(name)).unwrap();
        for c in &p.classes {
            for m in &c.methods {
                assert!(!m.body.contains_loc());
            }
        }
        assert!(!p.main.contains_loc());
    }
}

#[test]
fn corpus_round_trips_through_pretty_printer() {
    for name in ["account.ant", "counter.ant", "register.ant", "auction.ant"] {
        let p = parse_program(&corpus(name)).unwrap();
        let printed = pretty_print(&p);
        let reparsed = parse_program(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(p, reparsed, "round trip failed for {name}");
        // idempotence: pretty(parse(pretty(p))) == pretty(p)
        assert_eq!(printed, pretty_print(&reparsed));
    }
}

#[test]
fn pretty_print_account_mentions_weak_invariant() {
    let p = account();
    let s = pretty_print(&p);
    assert!(s.contains("balance : int weak [this.balance >= 0]"), "{s}");
}

#[test]
fn syntax_errors_carry_position() {
    let err = parse_program("class Account implements Object {\n  balance : int weak [this.balance >=\n}").unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("3:1"), "{msg}");
    assert!(msg.contains("expected"), "{msg}");
}

// --- type system ---

#[test]
fn account_type_checks() {
    let report = check_program(&account());
    assert!(report.ok(), "{:?}", report.diagnostics);
    for name in ["counter.ant", "register.ant", "auction.ant"] {
        let p = parse_program(&corpus(name)).unwrap();
        let report = check_program(&p);
        assert!(report.ok(), "{name}: {:?}", report.diagnostics);
    }
}

#[test]
fn op_on_this_balance_types_as_int() {
    let p = account();
    let mut env = TypingEnv::new();
    env.bind("this", Type::Named("Account".into()));
    env.bind("amount", Type::Int);
    let e = parse_expr("this.balance + amount").unwrap();
    assert_eq!(type_expr(&env, &e, &p).unwrap(), SynthType::Ty(Type::Int));
}

#[test]
fn null_checks_at_class_type_but_not_int() {
    let p = account();
    let env = TypingEnv::new();
    let null = Expr::Val(Value::Null);
    assert!(check_expr(&env, &null, &Type::Named("Account".into()), &p).is_ok());
    let err = check_expr(&env, &null, &Type::Int, &p).unwrap_err();
    assert_eq!(err.rule, "tNull");
}

#[test]
fn call_to_deposit_types_as_unit() {
    let p = account();
    let mut env = TypingEnv::new();
    env.bind("x", Type::Named("Account".into()));
    let e = parse_expr("x.deposit(5)").unwrap();
    assert_eq!(type_expr(&env, &e, &p).unwrap(), SynthType::Ty(Type::Unit));
}

#[test]
fn weak_field_in_precondition_is_rejected() {
    let src = r#"
class Account implements Object {
  balance : int weak [this.balance >= 0]
  def deposit(amount : int) : Unit [this.balance > 0] { this.balance += amount }
}
null
"#;
    let p = parse_program(src).unwrap();
    let report = check_program(&p);
    assert!(!report.ok());
    assert!(report.diagnostics.iter().any(|d| d.rule == "wfMethod" && d.message.contains("weak")));
}

#[test]
fn cross_field_invariant_is_rejected() {
    let src = r#"
class Account implements Object {
  balance : int weak [this.min_cash >= 0]
  min_cash : int
}
null
"#;
    let p = parse_program(src).unwrap();
    let report = check_program(&p);
    assert!(!report.ok());
    assert!(report.diagnostics.iter().any(|d| d.rule == "wfField"));
}

#[test]
fn check_program_is_order_independent() {
    let src = &corpus("account.ant");
    let p = parse_program(src).unwrap();
    let mut swapped = p.clone();
    swapped.classes.reverse();
    assert_eq!(check_program(&p).diagnostics, check_program(&swapped).diagnostics);
}

#[test]
fn interface_conformance_is_checked() {
    let src = r#"
interface Greeter {
  greet(n : int) : int
}
class Silent implements Greeter {
  x : int
}
null
"#;
    let p = parse_program(src).unwrap();
    let report = check_program(&p);
    assert!(report.diagnostics.iter().any(|d| d.message.contains("greet")), "{report:?}");
}

#[test]
fn surface_expr_parses_listing_shapes() {
    // operand-order of the interest computation: (balance * interest) / 100
    let e = parse_surface_expr("this.balance * interest / 100").unwrap();
    match e {
        SurfaceExpr::Op(l, Op::Div, r) => {
            assert_eq!(*r, SurfaceExpr::Val(Value::Int(100)));
            match *l {
                SurfaceExpr::Op(ll, Op::Mul, lr) => {
                    assert_eq!(*ll, SurfaceExpr::Select("this".into(), "balance".into()));
                    assert_eq!(*lr, SurfaceExpr::Var("interest".into()));
                }
                other => panic!("expected mul, got {other:?}"),
            }
        }
        other => panic!("expected div, got {other:?}"),
    }
    // right operands must be symbolic values
    assert!(parse_surface_expr("interest * this.balance").is_err());
}
