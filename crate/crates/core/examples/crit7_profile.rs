use ant_core::ast::*;
use ant_core::domain::BoundedDomain;
use ant_core::formula::{SymValue, VarRole};
use ant_core::interp::{Obj, State};
use ant_core::oracle::can_anticipate;
use ant_core::parser::parse_program;
use ant_core::symbolic::{pair_roles, AliasCase};
use ant_core::table::*;
use std::time::{Duration, Instant};

struct Lcg(u64);
impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[(self.next() % xs.len() as u64) as usize]
    }
}

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "account.ant".into());
    let samples: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let src = std::fs::read_to_string(format!("programs/{name}")).unwrap();
    let prog = parse_program(&src).unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let t0 = Instant::now();
    let table = build_table(&prog, &dom);
    println!("build_table: {:.2?}", t0.elapsed());
    let points = dom.points().to_vec();

    let mut entry_idx = 0;
    for entry in &table.pairs {
        let CaseOutcome::Analyzed { .. } = &entry.outcome else { continue };
        entry_idx += 1;
        let m1e = table.method(&entry.m1).unwrap();
        let m2e = table.method(&entry.m2).unwrap();
        let md1 = prog.class(&m1e.class).unwrap().method(&m1e.name).unwrap();
        let md2 = prog.class(&m2e.class).unwrap().method(&m2e.name).unwrap();
        let roles = pair_roles(md1, &m1e.class, md2, &m2e.class);
        let labels: Vec<String> = roles.iter().map(|(r, _)| r.clone()).collect();
        let h = AliasCase::from_label(&entry.alias, &labels).unwrap();
        let ctx =
            ant_core::symbolic::pair_ctx(&h, &prog, &m1e.class, md1, &m2e.class, md2).unwrap();

        let t1 = Instant::now();
        let mut rng = Lcg(0x9e3779b97f4a7c15 ^ (entry_idx as u64));
        for _ in 0..samples {
            let mut st = State::new();
            for (l, eobj) in &ctx.gen_state.heap {
                let mut fields = std::collections::BTreeMap::new();
                for (f, slot) in &eobj.fields {
                    let v = match &slot.value {
                        SymValue::Loc(m) => Value::Loc(*m),
                        SymValue::Null => Value::Null,
                        SymValue::Var(var) => {
                            if var.role == VarRole::Weak {
                                Value::Int(*rng.pick(&points))
                            } else {
                                let ok: Vec<i64> = points
                                    .iter()
                                    .copied()
                                    .filter(|p| {
                                        slot.invs.iter().all(|inv| {
                                            let side = |d: &InvValue| match d {
                                                InvValue::Val(Value::Int(n)) => Some(*n),
                                                InvValue::Field(_, _) => Some(*p),
                                                _ => None,
                                            };
                                            matches!(
                                                (side(&inv.lhs), side(&inv.rhs)),
                                                (Some(a), Some(b)) if inv.rel.holds(a, b)
                                            )
                                        })
                                    })
                                    .collect();
                                Value::Int(if ok.is_empty() { 0 } else { *rng.pick(&ok) })
                            }
                        }
                        other => panic!("unexpected {other}"),
                    };
                    fields.insert(f.clone(), v);
                }
                let got = st.alloc(Obj { class: eobj.class.clone(), fields });
                assert_eq!(got, *l);
            }
            for (role, l) in &ctx.rho.0 {
                st.bind(role.clone(), Value::Loc(*l));
            }
            for l in st.heap.map.keys().copied().collect::<Vec<_>>() {
                st.bind(format!("_obj{}", l.0), Value::Loc(l));
            }
            let arg_for = |side: usize, md: &MethodDecl, rng: &mut Lcg| match &md.param.1 {
                Type::Named(_) => Value::Loc(ctx.rho.0[&format!("other{side}")]),
                Type::Unit => Value::Null,
                Type::Int => Value::Int(*rng.pick(&points)),
            };
            let a1 = arg_for(1, md1, &mut rng);
            let a2 = arg_for(2, md2, &mut rng);
            let mc1 = Expr::Call("this1".into(), md1.name.clone(), Box::new(Expr::Val(a1)));
            let mc2 = Expr::Call("this2".into(), md2.name.clone(), Box::new(Expr::Val(a2)));
            let tq = Instant::now();
            let q1 = QueryCall { recv: ctx.rho.0["this1"], method: md1.name.clone(), arg: a1 };
            let q2 = QueryCall { recv: ctx.rho.0["this2"], method: md2.name.clone(), arg: a2 };
            let stat = query(&table, &q1, &q2, &st).unwrap();
            let dq = tq.elapsed();
            let dynv = can_anticipate(&st, &mc1, &mc2, &prog, &dom).unwrap().allowed;
            if stat != dynv {
                println!("MISMATCH {} over {} {} args {a1}/{a2} static={stat} runtime={dynv}", entry.m2, entry.m1, entry.alias);
            }
            if dq > Duration::from_millis(200) {
                println!("SLOWQUERY {} over {} {} args {a1}/{a2}: {dq:.2?}", entry.m2, entry.m1, entry.alias);
            }
        }
        let dt = t1.elapsed();
        if dt.as_millis() > 300 {
            println!(
                "SLOW {:<24} over {:<24} {:<28} {} samples in {:.2?}",
                entry.m2, entry.m1, entry.alias, samples, dt
            );
        }
    }
    println!("total: {:.2?} for {entry_idx} entries x {samples} samples", t0.elapsed());
}
