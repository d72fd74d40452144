//! Anticipation-table service tests: classification, persistence, querying,
//! and the replica simulator.

use ant_core::ast::*;
use ant_core::domain::BoundedDomain;
use ant_core::parser::parse_program;
use ant_core::simulate::*;
use ant_core::table::*;

fn corpus(name: &str) -> Program {
    let path = format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scenario(name: &str) -> Scenario {
    let path = format!("{}/../../programs/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn account_table() -> (Program, AnticipationTable) {
    let prog = corpus("account.ant");
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let table = build_table(&prog, &dom);
    (prog, table)
}

fn snapshot_two_accounts(bx: i64, by: i64) -> Snapshot {
    serde_json::from_value(serde_json::json!({
        "objects": [
            { "id": "x", "class": "Account", "fields": { "balance": bx, "min_cash": 50 } },
            { "id": "y", "class": "Account", "fields": { "balance": by, "min_cash": 50 } },
        ]
    }))
    .unwrap()
}

#[test]
fn classification_follows_strong_access_and_lp() {
    let (_, table) = account_table();
    let level = |sig: &str| table.method(sig).unwrap().level;
    assert_eq!(level("Account.withdraw"), ConsistencyLevel::Strong);
    assert_eq!(level("Account.transfer"), ConsistencyLevel::Strong);
    assert_eq!(level("Account.accrueInterest"), ConsistencyLevel::Strong);
    assert_eq!(level("Account.getBalance"), ConsistencyLevel::CoordinationFree);
    assert_eq!(level("Account.deposit"), ConsistencyLevel::CoordinationFree);
    assert_eq!(level("Account.init"), ConsistencyLevel::CoordinationFree);

    // Auction: close writes the strong winner, winner() reads it.
    let prog = corpus("auction.ant");
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let auction = build_table(&prog, &dom);
    assert_eq!(auction.method("Auction.close").unwrap().level, ConsistencyLevel::Strong);
    assert_eq!(auction.method("Auction.winner").unwrap().level, ConsistencyLevel::Strong);
    assert_eq!(auction.method("Auction.bid").unwrap().level, ConsistencyLevel::CoordinationFree);
    assert_eq!(
        auction.method("Auction.currentBid").unwrap().level,
        ConsistencyLevel::CoordinationFree
    );

    // A counter method touches one weak field and stays locally permissible.
    let prog = corpus("counter.ant");
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let counter = build_table(&prog, &dom);
    for m in &counter.methods {
        assert_eq!(m.level, ConsistencyLevel::CoordinationFree, "{}", m.sig);
    }
}

#[test]
fn query_examples_from_the_account() {
    let (_, table) = account_table();
    let snap = snapshot_two_accounts(100, 20);
    let (state, ids) = build_state(&snap).unwrap();
    let call = |recv: &str, m: &str, arg: i64| QueryCall {
        recv: ids[recv],
        method: m.into(),
        arg: Value::Int(arg),
    };

    // deposit may not overtake a withdraw on the same account
    assert!(!query(&table, &call("x", "withdraw", 5), &call("x", "deposit", 10), &state).unwrap());
    // deposits to different accounts reorder freely
    assert!(query(&table, &call("x", "deposit", 30), &call("y", "deposit", 20), &state).unwrap());
    // the interest condition
    assert!(!query(&table, &call("x", "getBalance", 0), &call("x", "accrueInterest", -200), &state).unwrap());
    assert!(query(&table, &call("x", "getBalance", 0), &call("x", "accrueInterest", -50), &state).unwrap());
    // determinism
    for _ in 0..3 {
        assert!(query(&table, &call("x", "deposit", 30), &call("y", "deposit", 20), &state).unwrap());
    }
}

#[test]
fn query_uses_the_realized_alias_case() {
    let (_, table) = account_table();
    let snap = snapshot_two_accounts(100, 20);
    let (state, ids) = build_state(&snap).unwrap();
    let same = QueryCall { recv: ids["x"], method: "deposit".into(), arg: Value::Int(10) };
    let withdraw_x = QueryCall { recv: ids["x"], method: "withdraw".into(), arg: Value::Int(5) };
    let deposit_y = QueryCall { recv: ids["y"], method: "deposit".into(), arg: Value::Int(10) };
    assert!(!query(&table, &withdraw_x, &same, &state).unwrap());
    assert!(query(&table, &withdraw_x, &deposit_y, &state).unwrap());
}

#[test]
fn skipped_entries_are_reported_not_guessed() {
    // Same-receiver pairs against the initializer are causally ordered.
    let (_, table) = account_table();
    let snap = snapshot_two_accounts(100, 20);
    let (state, ids) = build_state(&snap).unwrap();
    let init = QueryCall { recv: ids["x"], method: "init".into(), arg: Value::Int(60) };
    let dep = QueryCall { recv: ids["x"], method: "deposit".into(), arg: Value::Int(10) };
    match query(&table, &init, &dep, &state) {
        Err(QueryError::NotAnalyzed(reason)) => {
            assert!(reason.contains("initializer"), "{reason}");
        }
        other => panic!("expected NotAnalyzed, got {other:?}"),
    }
}

#[test]
fn table_round_trips_through_json() {
    let (_, table) = account_table();
    let bytes = serialize_table(&table).unwrap();
    let loaded = load_table(&bytes).unwrap();
    assert_eq!(table, loaded);
}

#[test]
fn empty_program_builds_an_empty_table() {
    let prog = parse_program("").unwrap();
    let dom = BoundedDomain::from_program(&prog, -8, 8);
    let table = build_table(&prog, &dom);
    assert!(table.methods.is_empty());
    assert!(table.pairs.is_empty());
    assert!(table.stats.is_empty());
    let bytes = serialize_table(&table).unwrap();
    assert_eq!(load_table(&bytes).unwrap(), table);
}

#[test]
fn version_mismatch_is_rejected() {
    let (_, table) = account_table();
    let mut json: serde_json::Value =
        serde_json::from_slice(&serialize_table(&table).unwrap()).unwrap();
    json["version"] = serde_json::json!(99);
    let err = load_table(serde_json::to_string(&json).unwrap().as_bytes()).unwrap_err();
    assert!(matches!(err, TableError::Version { got: 99, .. }));

    let err = load_table(b"{ not json").unwrap_err();
    assert!(matches!(err, TableError::Malformed { .. }));
}

#[test]
fn bank_scenario_with_permitted_swaps_converges() {
    let (prog, table) = account_table();
    let sc = scenario("bank_replicas.json");
    let report = simulate(&prog, &table, &sc).unwrap();
    assert!(report.converged, "{report:?}");
    // every requested swap was table-permitted
    for r in &report.replicas {
        assert!(r.rejected.is_empty());
        for s in &r.swaps {
            assert!(s.permitted && s.applied, "{s:?}");
        }
    }
}

#[test]
fn forced_illegal_swap_diverges() {
    let (prog, table) = account_table();
    let sc = scenario("forced_swap.json");
    let report = simulate(&prog, &table, &sc).unwrap();
    assert!(!report.converged);
    let forced = &report.replicas[1].swaps[0];
    assert!(!forced.permitted && forced.forced && forced.applied);
    // the straight replica refused the uncovered withdraw
    assert_eq!(report.replicas[0].rejected, vec![0]);
}

#[test]
fn single_replica_trivially_converges() {
    let (prog, table) = account_table();
    let mut sc = scenario("forced_swap.json");
    sc.replicas.truncate(1);
    let report = simulate(&prog, &table, &sc).unwrap();
    assert!(report.converged);
}

#[test]
fn order_must_be_a_permutation() {
    let (prog, table) = account_table();
    let mut sc = scenario("forced_swap.json");
    sc.replicas[0].order = vec![0, 0];
    assert!(matches!(simulate(&prog, &table, &sc), Err(SimError::BadOrder(_))));
}
