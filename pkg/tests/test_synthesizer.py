import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lazysynth import synthesizer
from lazysynth.logic import Const
from lazysynth.ordering import OrderVerdict
from lazysynth.synthesizer import (
    KEY_MOVEMENT,
    NO_VALID_ORDER,
    ConcurrentCode,
    Synthesizer,
    exit_code,
    render,
    render_text,
    to_dict,
    unlock_order,
)

ROLES = [Const(n) for n in ("x", "y", "z", "p", "target")]


def all_results(table):
    return [r for _, results in table[0].values() for r in results]


def test_golden_files_match(table, golden_dir):
    for r in table[0]["linked_list"][1]:
        assert render_text(r) == (golden_dir / f"linked_list_{r.operation}.txt").read_text()


def test_locks_and_unlocks_pair_up(table):
    for r in all_results(table):
        if isinstance(r.outcome, ConcurrentCode):
            assert Counter(r.outcome.locks) == Counter(r.outcome.unlocks)
            assert len(set(r.outcome.locks)) == len(r.outcome.locks)


@given(st.permutations(ROLES).flatmap(lambda p: st.integers(0, len(p)).map(lambda n: p[:n])))
def test_unlock_order_releases_target_first(locks):
    out = unlock_order(tuple(locks))
    assert sorted(out) == sorted(locks)
    rest = [n for n in locks if n.name != "target"]
    if Const("target") in locks:
        assert out[0] == Const("target")
        assert list(out[1:]) == rest[::-1]
    else:
        assert list(out) == rest[::-1]


def test_validation_is_pre_minus_unfalsifiable(table):
    for r in all_results(table):
        code = r.outcome
        if isinstance(code, ConcurrentCode):
            block = r.verdicts["witness"].block
            assert set(code.validation) | set(code.unfalsifiable) == set(block.pre)
            assert not set(code.validation) & set(code.unfalsifiable)
            assert all(not l.is_builtin for l in code.unfalsifiable)


def test_key_movement_gate_short_circuits_locks(table):
    _, results = table[0]["internal_bst"]
    for r in results:
        if r.operation == "delete":
            assert r.is_rcu and r.outcome.reason == KEY_MOVEMENT
            assert "locks" not in r.verdicts
            assert "lrl" in r.outcome.detail


def test_order_gate_comes_first(list_spec, monkeypatch):
    monkeypatch.setattr(synthesizer, "valid_program_orders", lambda spec, w: OrderVerdict())
    (r,) = Synthesizer(list_spec).operation("insert")
    assert r.is_rcu and r.outcome.reason == NO_VALID_ORDER
    assert "keymove" not in r.verdicts
    assert render_text(r) == "RCU recommended for insert block1: no-valid-order\n"
    assert exit_code([r]) == 2


def test_text_and_json_carry_the_same_fields(table):
    for r in all_results(table):
        d = to_dict(r, verbose=True)
        text = render([r], "text", verbose=True)
        if r.is_rcu:
            assert d["outcome"] == "rcu" and d["reason"] in text
            continue
        lines = text.splitlines()
        assert lines[1] == "  {" + ", ".join(d["pre"]) + "}"
        assert [l.strip()[5:-1] for l in lines if l.startswith("  lock(")] == d["locks"]
        assert [l.strip()[7:-1] for l in lines if l.startswith("  unlock(")] == d["unlocks"]
        assert [l.strip() for l in lines if l.startswith("    ")] == d["steps"]
        assert "  if validate(" + " & ".join(d["validate"]) + ") {" in lines
        assert "  % unfalsifiable: " + ", ".join(d["verdicts"]["unfalsifiable"]) in lines
        assert json.loads(render([r], "json", verbose=True))[0] == d


def test_exit_codes(table):
    assert exit_code(table[0]["linked_list"][1]) == 0
    assert exit_code(table[0]["internal_bst"][1]) == 2


def test_unknown_format(table):
    with pytest.raises(ValueError):
        render(table[0]["linked_list"][1], "yaml")
