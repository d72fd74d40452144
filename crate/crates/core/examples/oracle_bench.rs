use ant_core::ast::*;
use ant_core::domain::BoundedDomain;
use ant_core::interp::{Obj, State};
use ant_core::oracle::can_anticipate;
use ant_core::parser::{parse_expr, parse_program};
use std::time::Instant;

fn main() {
    let src = std::fs::read_to_string("programs/account.ant").unwrap();
    let prog = parse_program(&src).unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    println!("points: {}", dom.points().len());

    let mut st = State::new();
    let acc = |b: i64| Obj {
        class: "Account".into(),
        fields: [("balance".to_string(), Value::Int(b)), ("min_cash".to_string(), Value::Int(50))]
            .into_iter()
            .collect(),
    };
    let lx = st.alloc(acc(100));
    let ln = st.alloc(acc(10));
    let lt = st.alloc(Obj {
        class: "Transfer".into(),
        fields: [("amount".to_string(), Value::Int(7)), ("account".to_string(), Value::Loc(ln))]
            .into_iter()
            .collect(),
    });
    let ly = st.alloc(acc(20));
    st.bind("this1", Value::Loc(lx));
    st.bind("other1", Value::Loc(lt));
    st.bind("n", Value::Loc(ln));
    st.bind("this2", Value::Loc(ly));

    let mc1 = Expr::Call("this1".into(), "transfer".into(), Box::new(Expr::Val(Value::Loc(lt))));
    let mc2 = parse_expr("this2.getBalance(0)").unwrap();
    let t0 = Instant::now();
    let out = can_anticipate(&st, &mc1, &mc2, &prog, &dom).unwrap();
    println!("g over t, distinct: allowed={} in {:.2?}", out.allowed, t0.elapsed());

    let mc2 = parse_expr("this2.deposit(9)").unwrap();
    let t0 = Instant::now();
    let out = can_anticipate(&st, &mc1, &mc2, &prog, &dom).unwrap();
    println!("d over t, distinct: allowed={} in {:.2?}", out.allowed, t0.elapsed());

    let mc1b = parse_expr("this1.deposit(4)").unwrap();
    let t0 = Instant::now();
    let out = can_anticipate(&st, &mc1b, &mc2, &prog, &dom).unwrap();
    println!("d over d, distinct: allowed={} in {:.2?}", out.allowed, t0.elapsed());
}
