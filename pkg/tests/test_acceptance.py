"""Acceptance criteria 1-8, one PASS/FAIL line each in the terminal summary."""

import contextlib
import io
import json
import random
import time

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lazysynth import solver
from lazysynth.cli import main
from lazysynth.interference import classify_conjuncts
from lazysynth.logic import Const, LogicProgram
from lazysynth.synthesizer import KEY_MOVEMENT, render_text
from lazysynth.unfolder import find_least_common_instance, find_witness, unfold
from lazysynth.verifier import MUTATIONS, mutate, verify

from oracles import random_program, stable_models


def run_cli(*argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(list(argv))
    return code, out.getvalue()


def outcome(results, op):
    blocks = [r for r in results if r.operation == op]
    rcu = [r.outcome for r in blocks if r.is_rcu]
    return ("RCU", rcu[0].reason) if rcu else ("Success", None)


def test_1_outcome_matrix(table, verdict):
    results, elapsed = table
    got = {(name, op): outcome(res, op) for name, (_, res) in results.items() for op in ("insert", "delete")}
    want = {
        ("linked_list", "insert"): ("Success", None),
        ("linked_list", "delete"): ("Success", None),
        ("external_bst", "insert"): ("Success", None),
        ("external_bst", "delete"): ("Success", None),
        ("internal_bst", "insert"): ("Success", None),
        ("internal_bst", "delete"): ("RCU", KEY_MOVEMENT),
    }
    ok = got == want and elapsed < 60
    verdict(1, ok, f"outcome matrix {'matches' if got == want else got}, {elapsed:.1f}s total (limit 60s)")
    assert got == want
    assert elapsed < 60


def test_2_golden_list_code(table, golden_dir, verdict):
    spec, results = table[0]["linked_list"]
    by_op = {r.operation: r for r in results}
    ins, dele = by_op["insert"].outcome, by_op["delete"].outcome
    shape_ok = (
        {str(n) for n in ins.locks} == {"x", "y", "target"}
        and [str(s) for s in ins.steps] == ["link(target, y)", "link(x, target)"]
        and all(l.atom.pred != "suffix" for l in ins.validation)
        and {str(n) for n in dele.locks} == {"x", "target", "y"}
        and [str(s) for s in dele.steps] == ["link(x, y)"]
    )
    golden = {op: (golden_dir / f"linked_list_{op}.txt").read_bytes() for op in ("insert", "delete")}
    bytes_ok = all(render_text(by_op[op]).encode() == golden[op] for op in golden)
    verdict(2, shape_ok and bytes_ok, f"locks/steps/validation {'as expected' if shape_ok else 'differ'}, golden bytes {'equal' if bytes_ok else 'differ'}")
    assert shape_ok
    assert bytes_ok


def test_3_task1_verdicts(list_spec, list_synth, verdict):
    witness = list_synth.delta[1][("insert", "block1")]
    v = classify_conjuncts(list_spec, witness)
    fluent = lambda lits: {l.atom.pred for l in lits if l.positive and l.atom.pred in list_spec.fluents}
    got = (fluent(v.falsifiable), fluent(v.unfalsifiable))
    ok = got == ({"reach", "edge"}, {"suffix"})
    verdict(3, ok, f"falsifiable {sorted(got[0])}, unfalsifiable {sorted(got[1])}")
    assert ok


def test_4_order_violation(verdict):
    code, out = run_cli(
        "check-order", "--spec", "linked_list", "--op", "insert", "--steps", "link(x,target); link(target,y)", "--format", "json"
    )
    bad = json.loads(out)[0]
    code2, out2 = run_cli(
        "check-order", "--spec", "linked_list", "--op", "insert", "--steps", "link(target,y); link(x,target)", "--format", "json"
    )
    good = json.loads(out2)[0]
    inv = [s["invariant"] for s in bad["trace"]]
    ok = code == code2 == 0 and not bad["valid"] and inv[:2] == [True, False] and good["valid"]
    verdict(4, ok, f"sequential order valid={bad['valid']} invariant by state {inv}; reversed valid={good['valid']}")
    assert ok
    assert bad["reason"] == "invariant broken after step 1"


def test_5_key_movement(verdict):
    code, out = run_cli("check-keymove", "--spec", "internal_bst", "--op", "delete", "--format", "json")
    ibst = json.loads(out)[0]
    visited = [a.split("(")[1].split(",")[0] for a in ibst["trace"] if a.startswith("async_visit(")]
    code2, out2 = run_cli("check-keymove", "--spec", "linked_list", "--op", "delete", "--format", "json")
    lst = json.loads(out2)[0]
    ok = ibst["detected"] and "l" in visited and "lrl" not in visited and "lrl" in ibst["missed"] and not lst["detected"]
    verdict(5, ok, f"internal BST detected={ibst['detected']} visits {visited} missed {ibst['missed']}; list detected={lst['detected']}")
    assert ok


def test_6_solver_against_brute_force(verdict):
    seen, mismatches = [], []

    @settings(max_examples=1000, deadline=None, derandomize=True, suppress_health_check=list(HealthCheck))
    @given(st.integers(min_value=0, max_value=2**63))
    def check(seed):
        rules, atoms, abd = random_program(random.Random(seed), max_atoms=12)
        gp = solver.ground(LogicProgram(tuple(rules), abd), [], [])
        got = {m.atoms for m in solver.answer_sets(gp, abd)}
        seen.append(seed)
        if got != stable_models(rules, atoms):
            mismatches.append(seed)

    check()
    ok = len(seen) >= 1000 and not mismatches
    verdict(6, ok, f"{len(seen)} random programs (<= 12 atoms), {len(mismatches)} mismatches")
    assert len(seen) >= 1000
    assert not mismatches, mismatches[:5]


def test_7_verifier_agrees_with_synthesis(table, verdict):
    start = time.perf_counter()
    codes = [(name, spec, r.outcome) for name, (spec, res) in table[0].items() for r in res if not r.is_rcu]
    unsafe = []
    for name, spec, code in codes:
        report = verify(code, spec, max_depth=3, interferers=1)
        if not report.ok:
            unsafe.append(f"{name}/{code.operation}/{code.block_id}")
    missed, applied = [], {m: 0 for m in MUTATIONS}
    for kind in MUTATIONS:
        for name, spec, code in codes:
            broken = mutate(code, kind)
            if broken == code:
                # reversing a single step changes nothing
                continue
            applied[kind] += 1
            if verify(broken, spec, max_depth=3, interferers=1).ok:
                missed.append(f"{kind}: {name}/{code.operation}/{code.block_id}")
    elapsed = time.perf_counter() - start
    ok = not unsafe and not missed and all(applied.values()) and elapsed < 300
    verdict(
        7,
        ok,
        f"{len(codes)} emitted codes safe: {not unsafe}; mutants caught "
        + ", ".join(f"{k} {applied[k]}/{applied[k]}" if not any(m.startswith(k) for m in missed) else f"{k} MISSED" for k in MUTATIONS)
        + f"; {elapsed:.0f}s (limit 300s)",
    )
    assert not unsafe, unsafe
    assert not missed, missed
    assert all(applied.values())
    assert elapsed < 300


def test_8_least_common_instance(list_spec, verdict):
    delta, _ = find_least_common_instance(list_spec)
    h, n1, t = Const("h"), Const("n1"), Const("t")
    shape = delta.depth == 1 and delta.nodes == (h, n1, t) and {(a, b) for a, _, b in delta.edges} == {(h, n1), (n1, t)}
    delete = list_spec.operation("delete").blocks[0]
    shallow = unfold(list_spec, 0)
    fails = bool(shallow) and all(find_witness(list_spec, delete, inst) is None for inst in shallow)
    verdict(8, shape and fails, f"delta {delta.describe()}; depth 0 fails delete's precondition: {fails}")
    assert shape
    assert fails
