//! Constraint engine, effect inference, and symbolic execution tests.

use ant_core::ast::*;
use ant_core::domain::BoundedDomain;
use ant_core::effect::*;
use ant_core::formula::*;
use ant_core::interp::{update, Obj, State};
use ant_core::parser::parse_program;
use ant_core::symbolic::*;
use proptest::prelude::*;

fn corpus(name: &str) -> Program {
    let path = format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dom_for(prog: &Program) -> BoundedDomain {
    BoundedDomain::from_program(prog, -8, 8)
}

fn wvar(n: &str) -> SymValue {
    SymValue::var(n, VarRole::Weak)
}

fn pvar(n: &str) -> SymValue {
    SymValue::var(n, VarRole::Param)
}

fn int(n: i64) -> SymValue {
    SymValue::Int(n)
}

fn ge(l: SymValue, r: SymValue) -> Formula {
    Formula::Cmp(l, Rel::Ge, r)
}

fn gt(l: SymValue, r: SymValue) -> Formula {
    Formula::Cmp(l, Rel::Gt, r)
}

/// φd: x >= 0 && amount > 0 => x + amount >= 0
fn phi_d() -> Formula {
    Formula::implies(
        Formula::and(vec![ge(wvar("x"), int(0)), gt(pvar("amount"), int(0))]),
        ge(SymValue::op(wvar("x"), Op::Add, pvar("amount")), int(0)),
    )
}

/// φw: x >= 0 && amount > 0 => x - amount >= 0
fn phi_w() -> Formula {
    Formula::implies(
        Formula::and(vec![ge(wvar("x"), int(0)), gt(pvar("amount"), int(0))]),
        ge(SymValue::op(wvar("x"), Op::Sub, pvar("amount")), int(0)),
    )
}

#[test]
fn eval_examples() {
    let dom = BoundedDomain::new(-8, 8, []);
    let mut a = Assignment::default();
    a.set("x", 3).set("amount", 5);
    assert!(eval(&phi_d(), &a, &dom).unwrap());
    assert!(!eval(&ge(SymValue::op(wvar("x"), Op::Sub, pvar("amount")), int(0)), &a, &dom).unwrap());
    assert!(!eval(&Formula::implies(Formula::Bool(true), Formula::Bool(false)), &a, &dom).unwrap());
}

#[test]
fn phi_d_is_valid_for_any_assignment() {
    let dom = BoundedDomain::new(-8, 8, [0, 50, 100]);
    assert!(valid_bounded(&phi_d(), &dom).unwrap().is_valid());
}

#[test]
fn phi_w_universal_closure_has_counterexample() {
    let dom = BoundedDomain::new(-8, 8, [0, 50, 100]);
    let fv: Vec<SymVar> = phi_w().free_vars().into_values().collect();
    let closed = Formula::forall(fv, phi_w());
    match valid_bounded(&closed, &dom).unwrap() {
        Validity::CounterExample(_) => {}
        Validity::Valid => panic!("withdraw should not be locally permissible"),
    }
    // the witness breaks it with amount > x
    match valid_bounded(&phi_w(), &dom).unwrap() {
        Validity::CounterExample(a) => {
            assert!(a.0["amount"] > a.0["x"], "{a}");
        }
        Validity::Valid => panic!("expected counterexample"),
    }
}

#[test]
fn sat_witness_is_lexicographically_first() {
    let dom = BoundedDomain::new(-8, 8, []);
    let f = Formula::and(vec![
        ge(wvar("x"), int(0)),
        gt(pvar("a"), int(0)),
        ge(SymValue::op(wvar("x"), Op::Sub, pvar("a")), int(0)),
    ]);
    let w = sat_bounded(&f, &dom).unwrap().unwrap();
    assert_eq!(w.0["a"], 1);
    assert_eq!(w.0["x"], 1);
}

#[test]
fn unsatisfiable_literal_has_no_witness() {
    let dom = BoundedDomain::new(-8, 8, []);
    let f = gt(int(-10), int(0));
    assert_eq!(sat_bounded(&f, &dom).unwrap(), None);
}

#[test]
fn deposit_accrue_equation_is_satisfiable_at_i_zero() {
    // φ1 ∧ x ≥ 0 ∧ a > 0 has a witness (the equation holds when i = 0),
    // which is why conflicts are judged by validity, not satisfiability.
    let dom = BoundedDomain::new(-8, 8, [0, 50, 100]);
    let x = wvar("x");
    let a = pvar("a");
    let i = pvar("i");
    let seq_da = SymValue::op(
        SymValue::op(x.clone(), Op::Add, a.clone()),
        Op::Add,
        SymValue::op(
            SymValue::op(SymValue::op(x.clone(), Op::Add, a.clone()), Op::Mul, i.clone()),
            Op::Div,
            int(100),
        ),
    );
    let seq_ad = SymValue::op(
        SymValue::op(
            x.clone(),
            Op::Add,
            SymValue::op(SymValue::op(x.clone(), Op::Mul, i.clone()), Op::Div, int(100)),
        ),
        Op::Add,
        a.clone(),
    );
    let phi1 = Formula::Cmp(seq_da, Rel::Eq, seq_ad);
    let sys = Formula::and(vec![phi1.clone(), ge(x, int(0)), gt(a, int(0))]);
    assert!(sat_bounded(&sys, &dom).unwrap().is_some());
    let mut at_zero = Assignment::default();
    at_zero.set("x", 5).set("a", 3).set("i", 0);
    assert!(eval(&sys, &at_zero, &dom).unwrap());
    // ... but the equation is not valid under the invariants.
    let sys_valid = Formula::implies(
        Formula::and(vec![ge(wvar("x"), int(0)), gt(pvar("a"), int(0))]),
        phi1,
    );
    assert!(!valid_bounded(&sys_valid, &dom).unwrap().is_valid());
}

#[test]
fn free_variable_cap_advises_smtlib() {
    let dom = BoundedDomain::new(-8, 8, []);
    let vars: Vec<Formula> = (0..9).map(|k| ge(pvar(&format!("v{k}")), int(0))).collect();
    let err = sat_bounded(&Formula::and(vars), &dom).unwrap_err();
    assert!(matches!(err, FormulaError::TooManyFreeVars { count: 9, cap: 8 }));
}

#[test]
fn smtlib_emission_is_stable_and_well_formed() {
    let s1 = emit_smtlib(&phi_w());
    let s2 = emit_smtlib(&phi_w());
    assert_eq!(s1, s2);
    assert!(s1.contains("(set-logic QF_NIA)"), "{s1}");
    assert!(s1.contains("(declare-const amount Int)"), "{s1}");
    assert!(s1.contains("(>= x 0)"), "{s1}");
    assert!(s1.trim_end().ends_with("(check-sat)"), "{s1}");

    let quantified = Formula::forall(
        phi_d().free_vars().into_values().collect(),
        phi_d(),
    );
    let s3 = emit_smtlib(&quantified);
    assert!(s3.contains("(set-logic NIA)"), "{s3}");
    assert!(s3.contains("(forall ((amount Int) (x Int))"), "{s3}");

    let divf = ge(SymValue::op(wvar("z"), Op::Div, int(100)), int(0));
    let s4 = emit_smtlib(&divf);
    assert!(s4.contains("define-fun tdiv"), "{s4}");
    assert!(s4.contains("(tdiv z 100)"), "{s4}");
}

#[test]
fn simplify_drops_trivial_equations() {
    let z = wvar("z");
    let i = pvar("i");
    let t = SymValue::op(
        z.clone(),
        Op::Add,
        SymValue::op(SymValue::op(z.clone(), Op::Mul, i.clone()), Op::Div, int(100)),
    );
    let f = Formula::Cmp(t.clone(), Rel::Eq, t);
    assert_eq!(simplify(&f), Formula::Bool(true));
    let g = Formula::and(vec![Formula::Bool(true), phi_d()]);
    assert_eq!(simplify(&g), simplify(&phi_d()));
}

#[test]
fn simplify_discharges_entailed_conclusions() {
    // (x >= 0 && s >= 0 && a > 0) => (a >= 0 && s >= 0) is syntactically true
    let f = Formula::implies(
        Formula::and(vec![ge(wvar("x"), int(0)), ge(SymValue::var("s", VarRole::Strong), int(0)), gt(pvar("a"), int(0))]),
        Formula::and(vec![ge(pvar("a"), int(0)), ge(SymValue::var("s", VarRole::Strong), int(0))]),
    );
    assert_eq!(simplify(&f), Formula::Bool(true));
}

#[test]
fn normalization_reorders_sums() {
    // x - a + d  ==  x + d - a
    let lhs = SymValue::op(SymValue::op(wvar("x"), Op::Sub, pvar("a")), Op::Add, pvar("d"));
    let rhs = SymValue::op(SymValue::op(wvar("x"), Op::Add, pvar("d")), Op::Sub, pvar("a"));
    assert_eq!(normalize(&lhs), normalize(&rhs));
    // but division does not reassociate
    let d1 = SymValue::op(SymValue::op(wvar("x"), Op::Div, int(100)), Op::Mul, pvar("i"));
    let d2 = SymValue::op(SymValue::op(wvar("x"), Op::Mul, pvar("i")), Op::Div, int(100));
    assert_ne!(normalize(&d1), normalize(&d2));
}

// Random formulas stay equivalent under simplify, and random symbolic values
// under normalize.
fn arb_sym(depth: u32) -> BoxedStrategy<SymValue> {
    let leaf = prop_oneof![
        (-20i64..20).prop_map(SymValue::Int),
        prop_oneof![Just("a"), Just("b"), Just("c")]
            .prop_map(|n| SymValue::var(n, VarRole::Param)),
    ];
    leaf.prop_recursive(depth, 16, 2, |inner| {
        (inner.clone(), prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul)], inner)
            .prop_map(|(l, op, r)| SymValue::op(l, op, r))
    })
    .boxed()
}

fn arb_formula() -> BoxedStrategy<Formula> {
    let cmp = (arb_sym(2), prop_oneof![Just(Rel::Eq), Just(Rel::Le), Just(Rel::Gt)], arb_sym(2))
        .prop_map(|(l, rel, r)| Formula::Cmp(l, rel, r));
    cmp.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::Or),
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::implies(a, b)),
        ]
    })
    .boxed()
}

proptest! {
    #[test]
    fn simplify_preserves_evaluation(f in arb_formula(), a in -30i64..30, b in -30i64..30, c in -30i64..30) {
        let dom = BoundedDomain::new(-2, 2, []);
        let mut asg = Assignment::default();
        asg.set("a", a).set("b", b).set("c", c);
        let before = eval(&f, &asg, &dom);
        let after = eval(&simplify(&f), &asg, &dom);
        if let (Ok(x), Ok(y)) = (&before, &after) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn normalize_preserves_evaluation(sv in arb_sym(4), a in -30i64..30, b in -30i64..30, c in -30i64..30) {
        let mut asg = Assignment::default();
        asg.set("a", a).set("b", b).set("c", c);
        let before = sv.eval(&asg);
        let after = normalize(&sv).eval(&asg);
        if let (Ok(x), Ok(y)) = (&before, &after) {
            prop_assert_eq!(x, y);
        }
    }
}

// --- effect inference ---

#[test]
fn deposit_effect_matches_expected_shape() {
    let prog = corpus("account.ant");
    let eff = infer_method_effect(&prog, "Account", "deposit").unwrap();
    assert_eq!(
        eff.list,
        vec![
            EffectExpr::RetField("this".into(), "balance".into()),
            EffectExpr::Op(Op::Add, Expr::Var("amount".into())),
            EffectExpr::Var(EffectVar::Field("this".into(), "balance".into())),
        ]
    );
    assert_eq!(eff.pre.len(), 1);
}

#[test]
fn literal_effect_is_ret_val() {
    let prog = corpus("account.ant");
    let env = ant_core::types::TypingEnv::new();
    let list = infer_effect(&env, &Expr::int(5), &prog).unwrap();
    assert_eq!(list, vec![EffectExpr::RetVal(Value::Int(5))]);
}

#[test]
fn init_effect_shape() {
    let prog = corpus("account.ant");
    let eff = infer_method_effect(&prog, "Account", "init").unwrap();
    assert_eq!(
        eff.list,
        vec![
            EffectExpr::RetVar("amount".into()),
            EffectExpr::Var(EffectVar::Field("this".into(), "balance".into())),
        ]
    );
    assert_eq!(
        eff.pre,
        vec![Invariant {
            lhs: InvValue::Var("amount".into()),
            rel: Rel::Ge,
            rhs: InvValue::Field("this".into(), "min_cash".into()),
        }]
    );
}

#[test]
fn get_balance_effect_is_a_read() {
    let prog = corpus("account.ant");
    let eff = infer_method_effect(&prog, "Account", "getBalance").unwrap();
    assert!(eff.pre.is_empty());
    assert_eq!(eff.list, vec![EffectExpr::RetField("this".into(), "balance".into())]);
}

#[test]
fn accrue_interest_effect_shape() {
    let prog = corpus("account.ant");
    let eff = infer_method_effect(&prog, "Account", "accrueInterest").unwrap();
    let let_var = match &eff.list[3] {
        EffectExpr::Var(EffectVar::BindL(x)) => x.clone(),
        other => panic!("expected BindL, got {other:?}"),
    };
    assert_eq!(
        eff.list,
        vec![
            EffectExpr::RetField("this".into(), "balance".into()),
            EffectExpr::Op(Op::Mul, Expr::Var("interest".into())),
            EffectExpr::Op(Op::Div, Expr::int(100)),
            EffectExpr::Var(EffectVar::BindL(let_var.clone())),
            EffectExpr::RetField("this".into(), "balance".into()),
            EffectExpr::Op(Op::Add, Expr::Var(let_var)),
            EffectExpr::Var(EffectVar::Field("this".into(), "balance".into())),
        ]
    );
}

#[test]
fn transfer_effect_carries_nested_preconditions() {
    let prog = corpus("account.ant");
    let eff = infer_method_effect(&prog, "Account", "transfer").unwrap();
    let bindc: Vec<_> = eff
        .list
        .iter()
        .filter_map(|e| match e {
            EffectExpr::Var(EffectVar::BindC(y, pre)) => Some((y.clone(), pre.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(bindc.len(), 2, "withdraw and deposit each spawn a guard");
    for (y, pre) in &bindc {
        assert_eq!(
            pre,
            &vec![Invariant {
                lhs: InvValue::Var(y.clone()),
                rel: Rel::Gt,
                rhs: InvValue::Val(Value::Int(0)),
            }]
        );
    }
    // capture freedom: binder names are pairwise distinct
    let mut binders: Vec<String> = Vec::new();
    for e in &eff.list {
        if let EffectExpr::Var(EffectVar::BindL(x) | EffectVar::BindC(x, _)) = e {
            assert!(!binders.contains(x), "binder `{x}` reused");
            binders.push(x.clone());
        }
    }
}

#[test]
fn recursive_methods_are_rejected() {
    let src = r#"
class Loop implements Object {
  n : int
  def spin(k : int) : Unit { this.spin(k) }
}
null
"#;
    let prog = parse_program(src).unwrap();
    assert!(matches!(
        infer_method_effect(&prog, "Loop", "spin"),
        Err(EffectError::DepthExceeded(_))
    ));
}

// --- symbolic execution ---

#[test]
fn alias_cases_for_int_parameter_methods() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let d = acc.method("deposit").unwrap();
    let a = acc.method("accrueInterest").unwrap();
    let cases = enumerate_alias_cases(d, "Account", a, "Account");
    assert_eq!(cases.len(), 2);
    assert_eq!(cases[0].label(), "this1=this2");
    assert_eq!(cases[1].label(), "distinct");
}

#[test]
fn four_same_class_roles_give_fifteen_cases() {
    let roles: Vec<(String, Ident)> = ["this1", "this2", "other1", "other2"]
        .iter()
        .map(|r| (r.to_string(), "A".to_string()))
        .collect();
    assert_eq!(enumerate_alias_cases_for(&roles).len(), 15);
}

#[test]
fn transfer_vs_deposit_has_two_cases() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let t = acc.method("transfer").unwrap();
    let d = acc.method("deposit").unwrap();
    let cases = enumerate_alias_cases(t, "Account", d, "Account");
    // other1 : Transfer can never merge with the Account receivers
    assert_eq!(cases.len(), 2);
}

#[test]
fn gen_merged_receivers_share_one_object() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let d = acc.method("deposit").unwrap();
    let a = acc.method("accrueInterest").unwrap();
    let roles = pair_roles(d, "Account", a, "Account");
    let h = AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();
    assert_eq!(state.heap.len(), 1);
    assert_eq!(rho.0["this1"], rho.0["this2"]);
    let obj = state.heap.values().next().unwrap();
    assert_eq!(obj.fields[0].1.value, wvar("o0_balance"));
    assert_eq!(obj.fields[1].1.value, SymValue::var("o0_min_cash", VarRole::Strong));

    let h2 = AliasCase::from_label("distinct", &["this1".into(), "this2".into()]).unwrap();
    let (state2, rho2) = gen_bootstrap(&h2, &roles, &prog).unwrap();
    assert_eq!(state2.heap.len(), 2);
    assert_ne!(rho2.0["this1"], rho2.0["this2"]);
}

#[test]
fn gen_transfer_argument_spawns_nested_account() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let t = acc.method("transfer").unwrap();
    let d = acc.method("deposit").unwrap();
    let roles = pair_roles(t, "Account", d, "Account");
    let labels: Vec<String> = roles.iter().map(|(r, _)| r.clone()).collect();
    let h = AliasCase::from_label("this1=this2", &labels).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();
    // merged receiver + transfer object + its nested account
    assert_eq!(state.heap.len(), 3);
    let tloc = rho.0["other1"];
    let tobj = state.obj(tloc).unwrap();
    assert_eq!(tobj.class, "Transfer");
    let nested = match &tobj.slot("account").unwrap().value {
        SymValue::Loc(l) => *l,
        other => panic!("expected a generated account, got {other}"),
    };
    assert_ne!(nested, rho.0["this1"]);
    assert_eq!(state.obj(nested).unwrap().class, "Account");
}

#[test]
fn step_symbolic_consumes_exactly_one_head() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let i = acc.method("init").unwrap();
    let g = acc.method("getBalance").unwrap();
    let roles = pair_roles(i, "Account", g, "Account");
    let h = AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();

    let cfg = ECfg {
        state,
        pre: Vec::new(),
        list: vec![
            EffectExpr::RetVal(Value::Int(5)),
            EffectExpr::RetVar("a".into()),
            EffectExpr::Var(EffectVar::Field("this1".into(), "balance".into())),
        ],
        buffer: SymValue::Null,
    };
    let c1 = step_symbolic(&rho, &cfg).unwrap();
    assert_eq!(c1.buffer, int(5));
    assert_eq!(c1.list.len(), 2);
    // `a` is unbound: it becomes a free symbol (symbVarS)
    let c2 = step_symbolic(&rho, &c1).unwrap();
    assert_eq!(c2.buffer, pvar("a"));
    // the write lands in the heap, buffer resets to null
    let c3 = step_symbolic(&rho, &c2).unwrap();
    assert_eq!(c3.buffer, SymValue::Null);
    let l = rho.0["this1"];
    assert_eq!(c3.state.obj(l).unwrap().slot("balance").unwrap().value, pvar("a"));
    assert!(c3.list.is_empty());
}

#[test]
fn bind_call_closes_preconditions_symbolically() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let d = acc.method("deposit").unwrap();
    let roles = pair_roles(d, "Account", d, "Account");
    let h = AliasCase::from_label("distinct", &["this1".into(), "this2".into()]).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();
    let pre = vec![Invariant {
        lhs: InvValue::Var("y".into()),
        rel: Rel::Gt,
        rhs: InvValue::Val(Value::Int(0)),
    }];
    let cfg = ECfg {
        state,
        pre: Vec::new(),
        list: vec![EffectExpr::Var(EffectVar::BindC("y".into(), pre))],
        buffer: SymValue::op(wvar("z"), Op::Add, int(1)),
    };
    let c1 = step_symbolic(&rho, &cfg).unwrap();
    assert_eq!(c1.pre, vec![(SymValue::op(wvar("z"), Op::Add, int(1)), Rel::Gt, int(0))]);
    assert_eq!(c1.buffer, SymValue::Null);
}

fn run_solo(prog: &Program, class: &str, method: &str) -> (EState, EState, Reserved) {
    let md = prog.class(class).unwrap().method(method).unwrap();
    let roles = pair_roles(md, class, md, class);
    let labels: Vec<String> = roles.iter().map(|(r, _)| r.clone()).collect();
    let h = AliasCase::from_label("distinct", &labels).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, prog).unwrap();
    let raw = infer_method_effect(prog, class, method).unwrap();
    let (eff, _) = instantiate_effect(&raw, md, 1);
    let pre = closure_sym(&state, &rho, &eff.pre).unwrap();
    let cfg = ECfg { state: state.clone(), pre, list: eff.list, buffer: SymValue::Null };
    let done = update_symbolic(&rho, &cfg, &dom_for(prog)).unwrap();
    (state, done.state, rho)
}

#[test]
fn deposit_effect_writes_symbolic_sum() {
    let prog = corpus("account.ant");
    let (pre, post, rho) = run_solo(&prog, "Account", "deposit");
    let l = rho.0["this1"];
    let before = pre.obj(l).unwrap().slot("balance").unwrap().value.clone();
    let after = post.obj(l).unwrap().slot("balance").unwrap().value.clone();
    assert_eq!(after, SymValue::op(before, Op::Add, pvar("p1_amount")));
}

#[test]
fn get_balance_effect_leaves_heap_unchanged() {
    let prog = corpus("account.ant");
    let (pre, post, _) = run_solo(&prog, "Account", "getBalance");
    assert_eq!(pre.heap, post.heap);
}

#[test]
fn unsatisfiable_nested_precondition_fails_update() {
    let src = r#"
class Cell implements Object {
  v : int weak
  def put(amount : int) : Unit [amount > 0] { this.v = amount }
  def bad(k : int) : Unit { this.put(-10) }
}
null
"#;
    let prog = parse_program(src).unwrap();
    let md = prog.class("Cell").unwrap().method("bad").unwrap();
    let roles = pair_roles(md, "Cell", md, "Cell");
    let h = AliasCase::from_label("distinct", &["this1".into(), "this2".into()]).unwrap();
    let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();
    let raw = infer_method_effect(&prog, "Cell", "bad").unwrap();
    let (eff, _) = instantiate_effect(&raw, md, 1);
    let pre = closure_sym(&state, &rho, &eff.pre).unwrap();
    let cfg = ECfg { state, pre, list: eff.list, buffer: SymValue::Null };
    assert!(matches!(
        update_symbolic(&rho, &cfg, &dom_for(&prog)),
        Err(SymbolicError::UnsatPreconditions(_))
    ));
}

fn seq_balance(prog: &Program, first: &str, second: &str) -> SymValue {
    let acc = prog.class("Account").unwrap();
    let md1 = acc.method(first).unwrap();
    let md2 = acc.method(second).unwrap();
    let h = AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap();
    let ctx = pair_ctx(&h, prog, "Account", md1, "Account", md2).unwrap();
    let run = run_sequence(&ctx, [1, 2], &dom_for(prog)).unwrap();
    let l = ctx.rho.0["this1"];
    run.fin.obj(l).unwrap().slot("balance").unwrap().value.clone()
}

#[test]
fn deposit_then_accrue_balance_shape() {
    let prog = corpus("account.ant");
    let got = seq_balance(&prog, "deposit", "accrueInterest");
    let x = wvar("o0_balance");
    let a = pvar("p1_amount");
    let i = pvar("p2_interest");
    let xa = SymValue::op(x, Op::Add, a);
    let expected = SymValue::op(
        xa.clone(),
        Op::Add,
        SymValue::op(SymValue::op(xa, Op::Mul, i), Op::Div, int(100)),
    );
    assert_eq!(normalize(&got), normalize(&expected));
}

#[test]
fn accrue_then_deposit_balance_shape() {
    let prog = corpus("account.ant");
    let got = seq_balance(&prog, "accrueInterest", "deposit");
    let x = wvar("o0_balance");
    let a = pvar("p2_amount");
    let i = pvar("p1_interest");
    let expected = SymValue::op(
        SymValue::op(
            x.clone(),
            Op::Add,
            SymValue::op(SymValue::op(x, Op::Mul, i), Op::Div, int(100)),
        ),
        Op::Add,
        a,
    );
    assert_eq!(normalize(&got), normalize(&expected));
}

#[test]
fn two_reads_leave_the_bootstrap_heap() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let g = acc.method("getBalance").unwrap();
    let h = AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap();
    let ctx = pair_ctx(&h, &prog, "Account", g, "Account", g).unwrap();
    let run = run_sequence(&ctx, [1, 2], &dom_for(&prog)).unwrap();
    assert_eq!(run.fin.heap, ctx.gen_state.heap);
}

#[test]
fn separator_splits_the_strong_log() {
    let prog = corpus("auction.ant");
    let auc = prog.class("Auction").unwrap();
    let c = auc.method("close").unwrap();
    let w = auc.method("winner").unwrap();
    let (fin, log, _) = symbolic_sequence(
        &AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap(),
        &prog,
        "Auction",
        c,
        "Auction",
        w,
        &dom_for(&prog),
    )
    .map(|(s, l, p)| (s, l, p))
    .unwrap();
    let sep = log.iter().position(|e| matches!(e, ELog::Sep)).unwrap();
    // close writes the strong winner before the separator
    assert!(log[..sep]
        .iter()
        .any(|e| matches!(e, ELog::Access(_, f, ant_core::interp::AccessMode::Write) if f == "winner")));
    // winner() reads it after the separator
    assert!(log[sep..]
        .iter()
        .any(|e| matches!(e, ELog::Access(_, f, ant_core::interp::AccessMode::Read) if f == "winner")));
    assert!(fin.touched_weak);
}

/// Concrete refinement: seeding the symbolic result agrees with the
/// interpreter, per field, over random seeds.
#[test]
fn symbolic_execution_refines_concrete_execution() {
    let prog = corpus("account.ant");
    let acc = prog.class("Account").unwrap();
    let mut rng: u64 = 0x5eed;
    let mut next = move || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng % 201) as i64 - 100
    };
    for method in ["init", "withdraw", "deposit", "accrueInterest", "getBalance"] {
        let md = acc.method(method).unwrap();
        for _ in 0..10 {
            let roles = pair_roles(md, "Account", md, "Account");
            let h = AliasCase::from_label("distinct", &["this1".into(), "this2".into()]).unwrap();
            let (state, rho) = gen_bootstrap(&h, &roles, &prog).unwrap();
            let raw = infer_method_effect(&prog, "Account", method).unwrap();
            let (eff, psym) = instantiate_effect(&raw, md, 1);
            let pre = closure_sym(&state, &rho, &eff.pre).unwrap();
            let cfg = ECfg { state: state.clone(), pre, list: eff.list, buffer: SymValue::Null };
            let done = update_symbolic(&rho, &cfg, &dom_for(&prog)).unwrap();

            // Seed every symbol.
            let mut seeds = Assignment::default();
            let mut vars = std::collections::BTreeMap::new();
            for obj in state.heap.values() {
                for (_, slot) in &obj.fields {
                    slot.value.free_vars(&mut vars);
                }
            }
            for name in vars.keys() {
                seeds.set(name.clone(), next());
            }
            let arg = next();
            if let Some(p) = &psym {
                seeds.set(p.clone(), arg);
            }

            // Concrete mirror of the bootstrap heap.
            let mut cst = State::new();
            for (l, eobj) in &state.heap {
                let fields = eobj
                    .fields
                    .iter()
                    .map(|(f, slot)| (f.clone(), slot.value.eval(&seeds).unwrap()))
                    .collect();
                let cl = cst.alloc(Obj { class: eobj.class.clone(), fields });
                assert_eq!(cl, *l);
            }
            for (role, l) in &rho.0 {
                cst.bind(role.clone(), Value::Loc(*l));
            }
            let call = Expr::Call("this1".into(), method.into(), Box::new(Expr::int(arg)));
            let (concrete, _) = match update(&call, &cst, &prog) {
                Ok(r) => r,
                Err(_) => continue, // division edge cases and the like
            };
            for (l, eobj) in &done.state.heap {
                let cobj = concrete.heap.get(*l).unwrap();
                for (f, slot) in &eobj.fields {
                    let expect = slot.value.eval(&seeds).unwrap();
                    assert_eq!(
                        cobj.fields[f], expect,
                        "{method}: field {f} diverges between symbolic and concrete"
                    );
                }
            }
        }
    }
}
