use ant_core::analysis::method_anticipation;
use ant_core::domain::BoundedDomain;
use ant_core::formula::{eval, Assignment};
use ant_core::parser::parse_program;
use ant_core::symbolic::AliasCase;

fn main() {
    let src = std::fs::read_to_string("programs/account.ant").unwrap();
    let prog = parse_program(&src).unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let acc = prog.class("Account").unwrap();
    let w = acc.method("withdraw").unwrap();
    let d = acc.method("deposit").unwrap();
    let h = AliasCase::from_label("this1=this2", &["this1".into(), "this2".into()]).unwrap();
    let r = method_anticipation(&h, &prog, "Account", w, "Account", d, &dom).unwrap();
    println!("verdict: {:?}  note: {:?}", r.verdict, r.note);
    println!("params: {:?}", r.params);
    println!("residual: {}", r.residual);
    let mut a = Assignment::default();
    a.set("o0_min_cash", 50).set("p1_amount", 49).set("p2_amount", 1);
    println!("residual @ (y=50, a1=49, a2=1): {:?}", eval(&r.residual, &a, &dom));
}
