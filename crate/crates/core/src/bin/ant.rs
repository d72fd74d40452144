//! Command-line front end: type checking, execution, analysis, anticipation
//! queries, and replica simulation. Exit codes: 0 ok, 1 negative verdict,
//! 2 error.

use ant_core::analysis::VerdictKind;
use ant_core::ast::{Expr, Program, Value};
use ant_core::domain::BoundedDomain;
use ant_core::effect::infer_method_effect;
use ant_core::interp::run_main;
use ant_core::oracle::can_anticipate;
use ant_core::parser::parse_program_with_spans;
use ant_core::simulate::{build_state, simulate, Scenario, Snapshot};
use ant_core::symbolic::{pair_ctx, run_sequence, AliasCase};
use ant_core::table::{build_table, load_table, query, serialize_table, CaseOutcome, QueryCall};
use ant_core::types::check_program_with_spans;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ant", about = "Call anticipation analysis for replicated objects")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program and print diagnostics.
    Check { file: PathBuf },
    /// Execute a program's main expression and print the result as JSON.
    Run { file: PathBuf },
    /// Build the anticipation table; optionally dump intermediate artifacts.
    Analyze(AnalyzeArgs),
    /// Decide whether call 2 may be anticipated w.r.t. call 1.
    Anticipate(AnticipateArgs),
    /// Replay a replica scenario against a table and check convergence.
    Simulate {
        #[arg(long)]
        table: PathBuf,
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    file: PathBuf,
    /// Write the table as JSON.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print each method's inferred effect as JSON.
    #[arg(long)]
    dump_effects: bool,
    /// Print the two symbolic heaps and logs of a method pair.
    #[arg(long, num_args = 2, value_names = ["M1", "M2"])]
    dump_symbolic: Option<Vec<String>>,
    /// Alias case for --dump-symbolic (`this1=this2`, `distinct`, ...).
    #[arg(long, default_value = "this1=this2")]
    alias: String,
}

#[derive(Args)]
struct AnticipateArgs {
    #[arg(long)]
    table: Option<PathBuf>,
    /// First (earlier) call: signature `Class.method`.
    #[arg(long)]
    m1: String,
    #[arg(long)]
    recv1: String,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    arg1: String,
    /// Second call, the one to anticipate.
    #[arg(long)]
    m2: String,
    #[arg(long)]
    recv2: String,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    arg2: String,
    /// Snapshot of the replicated objects (JSON `{"objects": [...]}`).
    #[arg(long)]
    state: PathBuf,
    /// Use the runtime oracle instead of the table (needs --program).
    #[arg(long)]
    runtime: bool,
    #[arg(long)]
    program: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_program(path: &Path) -> Result<Program, String> {
    let src = read(path)?;
    match parse_program_with_spans(&src) {
        Ok((prog, _)) => Ok(prog),
        Err(e) => Err(format!("{}:{e}", path.display())),
    }
}

fn dispatch() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Check { file } => {
            let src = read(&file)?;
            let (prog, spans) = match parse_program_with_spans(&src) {
                Ok(p) => p,
                Err(e) => {
                    println!("{}:{e}", file.display());
                    return Ok(ExitCode::from(1));
                }
            };
            let report = check_program_with_spans(&prog, &spans);
            for d in &report.diagnostics {
                let pos = d.pos.unwrap_or(ant_core::lexer::Pos { line: 0, col: 0 });
                println!("{}:{}:{}: {}: {}", file.display(), pos.line, pos.col, d.rule, d.message);
            }
            if report.ok() {
                println!("{}: ok", file.display());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Run { file } => {
            let prog = load_program(&file)?;
            match run_main(&prog) {
                Ok((state, value)) => {
                    let out = serde_json::json!({
                        "value": value,
                        "heap": state.heap,
                        "strong_log": state.strong_log,
                        "monitored": state.monitored,
                    });
                    println!("{}", serde_json::to_string_pretty(&out).unwrap());
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("execution failed: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Cmd::Analyze(args) => analyze(args),
        Cmd::Anticipate(args) => anticipate(args),
        Cmd::Simulate { table, scenario } => {
            let table = load_table(read(&table)?.as_bytes()).map_err(|e| e.to_string())?;
            let text = read(&scenario)?;
            let sc: Scenario = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let prog_path = scenario.parent().unwrap_or(Path::new(".")).join(&sc.program);
            let prog = load_program(&prog_path)?;
            let report = simulate(&prog, &table, &sc).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let prog = load_program(&args.file)?;
    let report = check_program_with_spans(&prog, &Default::default());
    if !report.ok() {
        for d in &report.diagnostics {
            eprintln!("{}: {}: {}", args.file.display(), d.rule, d.message);
        }
        return Err("program does not type-check".into());
    }
    let dom = BoundedDomain::for_program(&prog);

    if args.dump_effects {
        let mut out = serde_json::Map::new();
        for class in &prog.classes {
            for md in &class.methods {
                let eff = infer_method_effect(&prog, &class.name, &md.name)
                    .map_err(|e| e.to_string())?;
                out.insert(
                    format!("{}.{}", class.name, md.name),
                    serde_json::to_value(&eff).unwrap(),
                );
            }
        }
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
        return Ok(ExitCode::SUCCESS);
    }

    if let Some(ms) = &args.dump_symbolic {
        let (m1, m2) = (&ms[0], &ms[1]);
        let find = |sig: &str| -> Result<(String, ant_core::ast::MethodDecl), String> {
            let (class, method) = sig
                .split_once('.')
                .ok_or_else(|| format!("`{sig}` is not of the form Class.method"))?;
            let c = prog.class(class).ok_or_else(|| format!("unknown class `{class}`"))?;
            let md = c.method(method).ok_or_else(|| format!("unknown method `{sig}`"))?;
            Ok((class.to_string(), md.clone()))
        };
        let (c1, md1) = find(m1)?;
        let (c2, md2) = find(m2)?;
        let roles = ant_core::symbolic::pair_roles(&md1, &c1, &md2, &c2);
        let labels: Vec<String> = roles.iter().map(|(r, _)| r.clone()).collect();
        let h = AliasCase::from_label(&args.alias, &labels)
            .ok_or_else(|| format!("bad alias case `{}` for roles {labels:?}", args.alias))?;
        let ctx = pair_ctx(&h, &prog, &c1, &md1, &c2, &md2).map_err(|e| e.to_string())?;
        let seq12 = run_sequence(&ctx, [1, 2], &dom).map_err(|e| e.to_string())?;
        let seq21 = run_sequence(&ctx, [2, 1], &dom).map_err(|e| e.to_string())?;
        let out = serde_json::json!({
            "alias": h.label(),
            "bootstrap": ctx.gen_state,
            "first_then_second": { "heap": seq12.fin.heap, "log": seq12.fin.log },
            "second_then_first": { "heap": seq21.fin.heap, "log": seq21.fin.log },
        });
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
        return Ok(ExitCode::SUCCESS);
    }

    let table = build_table(&prog, &dom);
    for s in &table.stats {
        println!(
            "{}: methods={} non_lp={} pairs={} conflicts={}",
            s.class, s.methods, s.non_lp, s.pairs, s.conflicts
        );
    }
    for m in &table.methods {
        println!(
            "  {}: {} ({})",
            m.sig,
            if m.lp { "locally permissible" } else { "not locally permissible" },
            match m.level {
                ant_core::table::ConsistencyLevel::Strong => "strong",
                ant_core::table::ConsistencyLevel::CoordinationFree => "coordination-free",
            }
        );
    }
    if let Some(out) = &args.output {
        let bytes = serialize_table(&table).map_err(|e| e.to_string())?;
        std::fs::write(out, bytes).map_err(|e| e.to_string())?;
        println!("table written to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn anticipate(args: AnticipateArgs) -> Result<ExitCode, String> {
    let snapshot: Snapshot =
        serde_json::from_str(&read(&args.state)?).map_err(|e| e.to_string())?;
    let (state, ids) = build_state(&snapshot).map_err(|e| e.to_string())?;

    let parse_arg = |s: &str| -> Result<Value, String> {
        if s == "null" {
            return Ok(Value::Null);
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Value::Int(n));
        }
        ids.get(s)
            .map(|l| Value::Loc(*l))
            .ok_or_else(|| format!("argument `{s}` is neither an integer nor an object id"))
    };
    let recv = |id: &str| -> Result<ant_core::ast::Loc, String> {
        ids.get(id).copied().ok_or_else(|| format!("unknown object id `{id}`"))
    };
    let method_of = |sig: &str| -> Result<String, String> {
        Ok(sig.split_once('.').ok_or_else(|| format!("bad signature `{sig}`"))?.1.to_string())
    };

    let q1 = QueryCall {
        recv: recv(&args.recv1)?,
        method: method_of(&args.m1)?,
        arg: parse_arg(&args.arg1)?,
    };
    let q2 = QueryCall {
        recv: recv(&args.recv2)?,
        method: method_of(&args.m2)?,
        arg: parse_arg(&args.arg2)?,
    };

    if args.runtime {
        let program = args.program.as_ref().ok_or("--runtime needs --program")?;
        let prog = load_program(program)?;
        let dom = BoundedDomain::for_program(&prog);
        let mc1 = Expr::Call(args.recv1.clone(), q1.method.clone(), Box::new(Expr::Val(q1.arg)));
        let mc2 = Expr::Call(args.recv2.clone(), q2.method.clone(), Box::new(Expr::Val(q2.arg)));
        let out = can_anticipate(&state, &mc1, &mc2, &prog, &dom).map_err(|e| e.to_string())?;
        if out.allowed {
            println!("allowed");
            return Ok(ExitCode::SUCCESS);
        }
        match out.witness {
            Some((ns, step)) => println!("refused at step {step}, weak-field witness {ns:?}"),
            None => println!("refused"),
        }
        return Ok(ExitCode::from(1));
    }

    let table_path = args.table.as_ref().ok_or("--table is required (or pass --runtime)")?;
    let table = load_table(read(table_path)?.as_bytes()).map_err(|e| e.to_string())?;
    let allowed = query(&table, &q1, &q2, &state).map_err(|e| e.to_string())?;
    if allowed {
        println!("allowed");
        Ok(ExitCode::SUCCESS)
    } else {
        // Show what the runtime would have had to satisfy.
        if let Some(CaseOutcome::Analyzed { result, .. }) =
            entry_outcome(&table, &q1, &q2, &state)
        {
            if result.verdict == VerdictKind::Conditional {
                println!("refused; residual: {}", result.residual);
                return Ok(ExitCode::from(1));
            }
        }
        println!("refused");
        Ok(ExitCode::from(1))
    }
}

fn entry_outcome<'t>(
    table: &'t ant_core::table::AnticipationTable,
    q1: &QueryCall,
    q2: &QueryCall,
    state: &ant_core::interp::State,
) -> Option<&'t CaseOutcome> {
    let class1 = &state.heap.get(q1.recv)?.class;
    let class2 = &state.heap.get(q2.recv)?.class;
    let sig1 = format!("{class1}.{}", q1.method);
    let sig2 = format!("{class2}.{}", q2.method);
    // Receiver aliasing only; good enough for the human-readable hint.
    let alias = if q1.recv == q2.recv { "this1=this2" } else { "distinct" };
    table.entry(&sig2, &sig1, alias).map(|e| &e.outcome)
}
