use ant_core::domain::BoundedDomain;
use ant_core::parser::parse_program;
use ant_core::table::build_table;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "counter.ant".into());
    let src = std::fs::read_to_string(format!("programs/{name}")).unwrap();
    let prog = parse_program(&src).unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    eprintln!("domain points: {}", dom.points().len());
    let t0 = std::time::Instant::now();
    let table = build_table(&prog, &dom);
    for s in &table.stats {
        println!(
            "{:<10} methods={} non_lp={} pairs={} conflicts={}   ({:.2?})",
            s.class, s.methods, s.non_lp, s.pairs, s.conflicts, t0.elapsed()
        );
    }
}
