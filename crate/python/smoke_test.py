#!/usr/bin/env python3
"""Smoke test for the ant_py extension module.

Builds nothing itself: expects `cargo build --workspace [--release]` to have
produced the cdylib. Copies it next to a temp module path and exercises the
bindings end to end on the bank-account corpus.
"""

import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        ROOT / "target" / "release" / "libant_py.so",
        ROOT / "target" / "debug" / "libant_py.so",
    ]
    lib = next((c for c in candidates if c.exists()), None)
    if lib is None:
        sys.exit("build the workspace first: cargo build --workspace [--release]")
    tmp = tempfile.mkdtemp(prefix="ant_py_")
    shutil.copy(lib, pathlib.Path(tmp) / "ant_py.so")
    sys.path.insert(0, tmp)
    import ant_py  # noqa: E402

    return ant_py


def main():
    ant = load_module()
    src = (ROOT / "programs" / "account.ant").read_text()

    report = json.loads(ant.check(src))
    assert report["ok"], report

    ran = json.loads(ant.run(src))
    assert ran["value"] == {"Int": 100}, ran

    # canonical form reparses to itself
    printed = ant.canonical(src)
    assert ant.canonical(printed) == printed

    table_json = ant.analyze(src)
    table = json.loads(table_json)
    account = next(s for s in table["stats"] if s["class"] == "Account")
    assert (account["methods"], account["non_lp"], account["pairs"], account["conflicts"]) == (
        6,
        3,
        21,
        5,
    ), account

    state = json.dumps(
        {
            "objects": [
                {"id": "a", "class": "Account", "fields": {"balance": 100, "min_cash": 50}},
                {"id": "b", "class": "Account", "fields": {"balance": 10, "min_cash": 50}},
            ]
        }
    )

    # accrueInterest anticipates getBalance exactly when the interest >= -100
    assert ant.query(table_json, state, "Account.getBalance", "a", "0",
                     "Account.accrueInterest", "a", "-100")
    assert not ant.query(table_json, state, "Account.getBalance", "a", "0",
                         "Account.accrueInterest", "a", "-101")

    # deposits on distinct accounts reorder freely; same-account deposit may
    # not overtake a withdraw
    assert ant.query(table_json, state, "Account.deposit", "a", "30",
                     "Account.deposit", "b", "20")
    assert not ant.query(table_json, state, "Account.withdraw", "a", "5",
                         "Account.deposit", "a", "10")

    allowed, witness, step = ant.anticipate_runtime(
        src, state, "Account.withdraw", "a", "5", "Account.deposit", "a", "10"
    )
    assert not allowed and step == 3, (allowed, witness, step)

    scenario = json.loads((ROOT / "programs" / "scenarios" / "forced_swap.json").read_text())
    sim = json.loads(ant.simulate_scenario(src, table_json, json.dumps(scenario)))
    assert not sim["converged"], sim

    print("ant_py smoke test: ok")


if __name__ == "__main__":
    main()
