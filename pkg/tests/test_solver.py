import itertools
import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lazysynth import solver
from lazysynth.logic import Atom, Const, LogicProgram, Rule, atom, fact, neg, pos

from oracles import random_program, stable_models

seeds = st.integers(min_value=0, max_value=2**63)
fast = settings(max_examples=300, deadline=None, suppress_health_check=list(HealthCheck))


def models(rules, abducibles=frozenset(), domain=(), order=(), exclusive=frozenset()):
    prog = LogicProgram(tuple(rules), frozenset(abducibles), exclusive=frozenset(exclusive))
    gp = solver.ground(prog, [Const(c) for c in domain], [Const(k) for k in order])
    return {m.atoms for m in solver.answer_sets(gp, prog.abducibles)}, gp


def test_transitive_closure():
    rules = [fact("edge", "a", "b"), fact("edge", "b", "c")]
    rules += [
        Rule(atom("path", "X", "Y"), (pos(atom("edge", "X", "Y")),)),
        Rule(atom("path", "X", "Z"), (pos(atom("edge", "X", "Y")), pos(atom("path", "Y", "Z")))),
    ]
    (m,), _ = models(rules, domain="abc")
    assert {str(x) for x in m if x.pred == "path"} == {"path(a,b)", "path(b,c)", "path(a,c)"}


def test_key_order_builtins():
    rules = [fact("key", "n", "k1"), fact("key", "m", "k2")]
    rules.append(
        Rule(atom("before", "X", "Y"), (pos(atom("key", "X", "A")), pos(atom("key", "Y", "B")), pos(atom("lt", "A", "B"))))
    )
    (m,), _ = models(rules, order=["k1", "k2"])
    assert {str(x) for x in m if x.pred == "before"} == {"before(n,m)"}


def test_unsafe_rule_is_rejected():
    with pytest.raises(solver.GroundingError):
        models([Rule(atom("p", "X"), (neg(atom("q", "X")),))])


def test_unguarded_even_loop_is_not_stratified():
    rules = [Rule(atom("p"), (neg(atom("q")),)), Rule(atom("q"), (neg(atom("p")),))]
    with pytest.raises(solver.StratificationError):
        models(rules)


def test_choice_pair_gives_both_models():
    rules = [Rule(atom("a"), (neg(atom("na")),)), Rule(atom("na"), (neg(atom("a")),))]
    ms, _ = models(rules, abducibles={"a"})
    assert ms == {frozenset({atom("a")}), frozenset({atom("na")})}


def test_constraint_prunes_and_cap_is_enforced():
    pairs = []
    for i in range(12):
        a, na = atom(f"a{i}"), atom(f"na{i}")
        pairs += [Rule(a, (neg(na),)), Rule(na, (neg(a),))]
    prog = LogicProgram(tuple(pairs), frozenset(f"a{i}" for i in range(12)))
    gp = solver.ground(prog, [], [])
    with pytest.raises(solver.ResourceError):
        solver.answer_sets(gp, prog.abducibles, cap=100)
    pruned = prog.extend([Rule(None, (neg(atom("a0")),))])
    gp2 = solver.ground(pruned, [], [])
    assert all(atom("a0") in m for m in solver.iter_answer_sets(gp2, prog.abducibles))


def test_brave_and_cautious():
    rules = [Rule(atom("a"), (neg(atom("na")),)), Rule(atom("na"), (neg(atom("a")),)), fact("base")]
    _, gp = models(rules, abducibles={"a"})
    assert solver.entails_bravely(gp, atom("a"), {"a"})
    assert not solver.entails_cautiously(gp, atom("a"), {"a"})
    assert solver.entails_cautiously(gp, atom("base"), {"a"})
    assert solver.brave_atoms(gp, [atom("a"), atom("base"), atom("zzz")], {"a"}) == {atom("a"), atom("base")}


def test_relevant_slice_keeps_dependencies_and_constraints():
    rules = (
        Rule(atom("p"), (pos(atom("q")),)),
        fact("q"),
        fact("unrelated"),
        Rule(None, (pos(atom("q")), neg(atom("p")))),
    )
    sliced = solver.relevant_slice(LogicProgram(rules), {"p"})
    heads = {r.head.pred for r in sliced.rules if r.head is not None}
    assert heads == {"p", "q"}
    assert any(r.head is None for r in sliced.rules)


def test_dump_dir_receives_grounded_theories(tmp_path):
    solver.configure(dump_dir=str(tmp_path))
    try:
        models([fact("p", "a")])
    finally:
        solver.configure(dump_dir=None)
    files = sorted(tmp_path.iterdir())
    assert files and "p(a)." in files[-1].read_text()


def test_configure_rejects_nonpositive_cap():
    with pytest.raises(ValueError):
        solver.configure(cap=0)


@fast
@given(seeds)
def test_answer_sets_match_reduct_enumeration(seed):
    rules, atoms, abd = random_program(random.Random(seed))
    got, _ = models(rules, abd)
    assert got == stable_models(rules, atoms)


@fast
@given(seeds)
def test_brave_consequences_match_enumeration(seed):
    rules, atoms, abd = random_program(random.Random(seed))
    _, gp = models(rules, abd)
    expected = stable_models(rules, atoms)
    union = set().union(*expected) if expected else set()
    assert solver.brave_atoms(gp, atoms, abd) == union


def _pairwise(abducible_atoms) -> list:
    return [Rule(None, (pos(x), pos(y))) for x, y in itertools.combinations(abducible_atoms, 2)]


@fast
@given(seeds)
def test_exclusive_group_equals_pairwise_constraints(seed):
    t0 = Const("t0")
    rules, atoms, abd = random_program(random.Random(seed), max_atoms=10, arg=t0)
    chosen = [x for x in atoms if x.pred in abd]
    native, _ = models(rules, abd, exclusive=abd)
    spelled, _ = models(rules + _pairwise(chosen), abd)
    assert native == spelled
    brute = {m for m in stable_models(rules, atoms) if sum(x in m for x in chosen) <= 1}
    assert native == brute


def test_exclusive_groups_split_on_the_last_argument():
    rules = []
    for t in ("t0", "t1"):
        for p in ("a", "b"):
            x, nx = Atom(p, (Const(t),)), Atom("n" + p, (Const(t),))
            rules += [Rule(x, (neg(nx),)), Rule(nx, (neg(x),))]
    ms, _ = models(rules, {"a", "b"}, exclusive={"a", "b"})
    # per time point: neither, a or b
    assert len(ms) == 9
