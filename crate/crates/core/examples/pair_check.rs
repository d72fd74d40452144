use ant_core::analysis::method_anticipation;
use ant_core::domain::BoundedDomain;
use ant_core::parser::parse_program;
use ant_core::symbolic::enumerate_alias_cases;

fn main() {
    let src = std::fs::read_to_string("programs/account.ant").unwrap();
    let prog = parse_program(&src).unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let acc = prog.class("Account").unwrap();
    for m1 in &acc.methods {
        for m2 in &acc.methods {
            for h in enumerate_alias_cases(m1, "Account", m2, "Account") {
                let t0 = std::time::Instant::now();
                let r = method_anticipation(&h, &prog, "Account", m1, "Account", m2, &dom);
                let dt = t0.elapsed();
                println!(
                    "{} {:<14} {:<14} {:<28} {:?} in {:.2?}",
                    if dt.as_millis() > 200 { "SLOW" } else { "ok  " },
                    m1.name,
                    m2.name,
                    h.label(),
                    r.as_ref().map(|x| x.verdict),
                    dt
                );
            }
        }
    }
}
