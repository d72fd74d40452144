//! Interpreter tests: closure, small steps, update, and the state invariants
//! the analysis relies on.

use ant_core::ast::*;
use ant_core::interp::*;
use ant_core::parser::{parse_expr, parse_program};

fn corpus(name: &str) -> Program {
    let path = format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// One Account at `x` with the given balance and min_cash.
fn account_state(balance: i64, min_cash: i64) -> (Program, State, Loc) {
    let prog = corpus("account.ant");
    let mut st = State::new();
    let obj = Obj {
        class: "Account".into(),
        fields: [
            ("balance".to_string(), Value::Int(balance)),
            ("min_cash".to_string(), Value::Int(min_cash)),
        ]
        .into_iter()
        .collect(),
    };
    let l = st.alloc(obj);
    st.bind("x", Value::Loc(l));
    (prog, st, l)
}

#[test]
fn closure_substitutes_stack_variables() {
    let mut stack = Stack::new();
    stack.insert("y".into(), Value::Int(10));
    let inv = Invariant { lhs: InvValue::Var("y".into()), rel: Rel::Gt, rhs: InvValue::Val(Value::Int(0)) };
    let closed = closure(&Heap::default(), &stack, &[inv]).unwrap();
    assert_eq!(closed, vec![ClosedInv { lhs: Value::Int(10), rel: Rel::Gt, rhs: Value::Int(0) }]);
}

#[test]
fn closure_leaves_literals_alone() {
    let inv = Invariant { lhs: InvValue::Val(Value::Int(5)), rel: Rel::Ge, rhs: InvValue::Val(Value::Int(50)) };
    let closed = closure(&Heap::default(), &Stack::new(), &[inv]).unwrap();
    assert_eq!(closed[0], ClosedInv { lhs: Value::Int(5), rel: Rel::Ge, rhs: Value::Int(50) });
    assert!(!closed[0].holds().unwrap());
}

#[test]
fn closure_follows_fields_through_the_heap() {
    let (_, st, _) = account_state(100, 50);
    let mut stack = st.stack.clone();
    stack.insert("a".into(), Value::Int(60));
    stack.insert("y".into(), *st.stack.get("x").unwrap());
    let inv = Invariant {
        lhs: InvValue::Var("a".into()),
        rel: Rel::Ge,
        rhs: InvValue::Field("y".into(), "min_cash".into()),
    };
    let closed = closure(&st.heap, &stack, &[inv]).unwrap();
    assert_eq!(closed, vec![ClosedInv { lhs: Value::Int(60), rel: Rel::Ge, rhs: Value::Int(50) }]);
}

#[test]
fn closure_errors_on_unresolvable_names() {
    let inv = Invariant { lhs: InvValue::Var("ghost".into()), rel: Rel::Gt, rhs: InvValue::Val(Value::Int(0)) };
    assert!(closure(&Heap::default(), &Stack::new(), &[inv]).is_err());
}

#[test]
fn op_steps_to_sum() {
    let prog = parse_program("").unwrap();
    let cfg = Configuration { state: State::new(), thread: Thread::Expr(parse_expr("5 + 3").unwrap()) };
    let cfg = step(cfg, &prog).unwrap();
    assert_eq!(cfg.thread, Thread::Expr(Expr::int(8)));
}

#[test]
fn deposit_updates_balance_and_monitors_precondition() {
    let (prog, st, l) = account_state(5, 50);
    let call = parse_expr("x.deposit(10)").unwrap();
    let (post, v) = update(&call, &st, &prog).unwrap();
    assert_eq!(v, Value::Null);
    assert_eq!(post.heap.get(l).unwrap().fields["balance"], Value::Int(15));
    assert_eq!(
        post.monitored,
        vec![ClosedInv { lhs: Value::Int(10), rel: Rel::Gt, rhs: Value::Int(0) }]
    );
    // balance is weak: the strong log stays empty
    assert!(post.strong_log.is_empty());
}

#[test]
fn strong_field_reads_are_logged() {
    let (prog, st, l) = account_state(5, 50);
    let cfg = Configuration { state: st, thread: Thread::Expr(parse_expr("x.min_cash").unwrap()) };
    let cfg = step(cfg, &prog).unwrap();
    assert_eq!(cfg.thread, Thread::Expr(Expr::int(50)));
    assert_eq!(cfg.state.strong_log, vec![(l, "min_cash".to_string(), AccessMode::Read)]);
}

#[test]
fn weak_field_reads_are_not_logged() {
    let (prog, st, _) = account_state(5, 50);
    let cfg = Configuration { state: st, thread: Thread::Expr(parse_expr("x.balance").unwrap()) };
    let cfg = step(cfg, &prog).unwrap();
    assert!(cfg.state.strong_log.is_empty());
}

#[test]
fn get_balance_leaves_heap_unchanged() {
    let (prog, st, _) = account_state(42, 50);
    let call = parse_expr("x.getBalance(0)").unwrap();
    let (post, v) = update(&call, &st, &prog).unwrap();
    assert_eq!(v, Value::Int(42));
    assert_eq!(post.heap, st.heap);
}

#[test]
fn withdraw_below_zero_still_executes() {
    // Permissibility is judged by the oracle, not by update itself.
    let (prog, st, l) = account_state(3, 50);
    let call = parse_expr("x.withdraw(5)").unwrap();
    let (post, _) = update(&call, &st, &prog).unwrap();
    assert_eq!(post.heap.get(l).unwrap().fields["balance"], Value::Int(-2));
}

#[test]
fn init_values_for_types() {
    assert_eq!(init_value(&Type::Int), Value::Int(0));
    assert_eq!(init_value(&Type::Named("Account".into())), Value::Null);
    assert_eq!(init_value(&Type::Unit), Value::Null);
}

#[test]
fn new_account_reads_zero_balance() {
    let prog = corpus("account.ant");
    let e = parse_expr("let a = new Account in a.balance").unwrap();
    let (_, v) = update(&e, &State::new(), &prog).unwrap();
    assert_eq!(v, Value::Int(0));
}

#[test]
fn division_by_zero_raises() {
    let prog = parse_program("").unwrap();
    let e = parse_expr("1 / 0").unwrap();
    assert_eq!(update(&e, &State::new(), &prog), Err(UpdateError::Exn));
}

#[test]
fn null_dereference_raises() {
    let prog = corpus("account.ant");
    let e = parse_expr("let a = (Account) null in a.balance").unwrap();
    assert_eq!(update(&e, &State::new(), &prog), Err(UpdateError::Exn));
}

#[test]
fn overflow_raises() {
    let prog = parse_program("").unwrap();
    let e = Expr::Op(
        Box::new(Expr::int(i64::MAX)),
        Op::Add,
        Box::new(Expr::int(1)),
    );
    assert_eq!(update(&e, &State::new(), &prog), Err(UpdateError::Exn));
}

#[test]
fn nonterminating_calls_hit_the_budget() {
    let src = r#"
class Loop implements Object {
  n : int
  def spin(k : int) : Unit { this.spin(k) }
}
null
"#;
    let prog = parse_program(src).unwrap();
    let mut st = State::new();
    let obj = Obj { class: "Loop".into(), fields: [("n".to_string(), Value::Int(0))].into_iter().collect() };
    let l = st.alloc(obj);
    st.bind("x", Value::Loc(l));
    let call = parse_expr("x.spin(1)").unwrap();
    assert_eq!(
        update_with_budget(&call, &st, &prog, 10_000),
        Err(UpdateError::BudgetExceeded)
    );
}

#[test]
fn update_is_deterministic() {
    let (prog, st, _) = account_state(7, 50);
    let call = parse_expr("x.accrueInterest(10)").unwrap();
    let a = update(&call, &st, &prog).unwrap();
    let b = update(&call, &st, &prog).unwrap();
    assert_eq!(a, b);
}

#[test]
fn heap_domain_grows_monotonically() {
    let prog = corpus("account.ant");
    let (_, st, _) = account_state(5, 50);
    let call = parse_expr("let t = new Transfer in x.getBalance(0)").unwrap();
    let before: Vec<Loc> = st.heap.map.keys().copied().collect();
    let (post, _) = update(&call, &st, &prog).unwrap();
    for l in before {
        assert!(post.heap.get(l).is_some());
    }
    assert!(post.heap.map.len() > st.heap.map.len());
}

#[test]
fn strong_log_never_contains_weak_fields() {
    let (prog, st, _) = account_state(5, 50);
    for call in ["x.deposit(10)", "x.withdraw(1)", "x.accrueInterest(10)", "x.getBalance(0)", "x.init(60)"] {
        let (post, _) = update(&parse_expr(call).unwrap(), &st, &prog).unwrap();
        for (l, f, _) in &post.strong_log {
            let class = &post.heap.get(*l).unwrap().class;
            assert!(field_is_strong(&prog, class, f), "{call}: ({l}, {f}) logged but weak");
        }
    }
}

#[test]
fn monitored_grows_only_at_calls() {
    let (prog, st, _) = account_state(5, 50);
    let mut cfg = Configuration { state: st, thread: Thread::Expr(parse_expr("x.init(60)").unwrap()) };
    let mut monitored = 0;
    loop {
        let was_call = matches!(&cfg.thread, Thread::Expr(Expr::Call(_, _, a)) if a.is_value());
        match &cfg.thread {
            Thread::Expr(e) if !e.is_value() => {
                cfg = step(cfg, &prog).unwrap();
                let now = cfg.state.monitored.len();
                if now != monitored {
                    assert!(was_call, "monitored grew outside dynEvalCall");
                    assert_eq!(now, monitored + 1);
                    monitored = now;
                }
            }
            _ => break,
        }
    }
    assert_eq!(monitored, 1);
}

#[test]
fn heaps_equal_mod_fresh_pairs_fresh_locations() {
    let prog = corpus("account.ant");
    let st = State::new();
    let watermark = st.loc_watermark();
    let e = parse_expr("let a = new Account in let b = new Transfer in a.balance").unwrap();
    let (h1, _) = update(&e, &st, &prog).unwrap();
    let (h2, _) = update(&e, &st, &prog).unwrap();
    assert!(heaps_equal_mod_fresh(watermark, &h1.heap, &h2.heap));
}

#[test]
fn corpus_mains_run() {
    for (name, expected) in [
        ("account.ant", Value::Int(100)),
        ("counter.ant", Value::Int(2)),
        ("register.ant", Value::Int(7)),
        ("auction.ant", Value::Int(10)),
    ] {
        let prog = corpus(name);
        let (_, v) = run_main(&prog).unwrap();
        assert_eq!(v, expected, "{name}");
    }
}

#[test]
fn big_step_exec_matches_small_step_update() {
    let prog = corpus("account.ant");
    let (_, st, _) = account_state(5, 50);
    let mut st = st;
    // a transfer order into a second account exercises nested calls
    let l2 = st.alloc(Obj {
        class: "Account".into(),
        fields: [
            ("balance".to_string(), Value::Int(9)),
            ("min_cash".to_string(), Value::Int(50)),
        ]
        .into_iter()
        .collect(),
    });
    let lt = st.alloc(Obj {
        class: "Transfer".into(),
        fields: [
            ("amount".to_string(), Value::Int(4)),
            ("account".to_string(), Value::Loc(l2)),
        ]
        .into_iter()
        .collect(),
    });
    st.bind("y", Value::Loc(l2));
    st.bind("t", Value::Loc(lt));
    for call in [
        "x.deposit(10)",
        "x.withdraw(3)",
        "x.accrueInterest(25)",
        "x.getBalance(0)",
        "x.init(60)",
        "x.transfer(t)",
        "let a = new Account in a.balance",
    ] {
        let mc = parse_expr(call).unwrap();
        let slow = update(&mc, &st, &prog).unwrap();
        let fast = exec(&mc, &st, &prog).unwrap();
        assert_eq!(slow.0.heap, fast.0.heap, "{call}: heaps differ");
        assert_eq!(slow.0.monitored, fast.0.monitored, "{call}: monitors differ");
        assert_eq!(slow.0.strong_log, fast.0.strong_log, "{call}: logs differ");
        assert_eq!(slow.1, fast.1, "{call}: values differ");
    }
}
