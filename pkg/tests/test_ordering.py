import math

import pytest

from lazysynth.kb import rename_literal
from lazysynth.logic import Atom, Literal
from lazysynth.ordering import bind_steps, check_order, valid_program_orders
from lazysynth.verifier import Evaluator, Heap


def texts(steps):
    return [str(s) for s in steps]


@pytest.fixture(scope="module")
def insert_witness(list_synth):
    return list_synth.delta[1][("insert", "block1")]


def test_list_insert_has_one_valid_order(list_spec, insert_witness):
    v = valid_program_orders(list_spec, insert_witness)
    assert [texts(o) for o in v.valid_orders] == [["link(target, n1)", "link(h, target)"]]


def test_sequential_insert_breaks_the_list_after_step_one(list_spec, insert_witness):
    steps = bind_steps(insert_witness.block, insert_witness.mapping)
    r = check_order(list_spec, insert_witness, steps)
    assert not r.valid
    assert [s.invariant for s in r.trace] == [True, False, True]
    assert r.trace[1].edges == ("edge(h,target)", "edge(n1,t)")
    assert r.reason == "invariant broken after step 1"


def test_list_delete_single_step(list_spec, list_synth):
    w = list_synth.delta[1][("delete", "block1")]
    v = valid_program_orders(list_spec, w)
    assert [texts(o) for o in v.valid_orders] == [["link(h, t)"]]


@pytest.mark.parametrize("name", ["linked_list", "external_bst", "internal_bst"])
def test_verdict_covers_every_permutation(table, name):
    spec, results = table[0][name]
    for r in results:
        order = r.verdicts["order"]
        n = len(r.verdicts["witness"].block.steps)
        assert len(order.results) == math.factorial(n)
        assert len({res.steps for res in order.results}) == len(order.results)
        for res in order.results:
            if res.valid:
                assert all(s.invariant for s in res.trace)
            else:
                assert res.reason


@pytest.mark.parametrize("name", ["linked_list", "external_bst", "internal_bst"])
def test_valid_orders_run_concretely(table, name):
    """Executing each valid order on the witness instance establishes the post-condition."""
    spec, results = table[0][name]
    shape = {r.head.pred for r in spec.structural_rules}
    for r in results:
        w = r.verdicts["witness"]
        inst = w.instance
        ev = Evaluator(spec.rules, {k: i for i, k in enumerate(inst.key_order)}, inst.all_nodes(), lazy=shape)
        static = [Atom("node", (n,)) for n in inst.all_nodes()] + [Atom("key", (n, k)) for n, k in inst.keys]
        post = [rename_literal(l, w.mapping) for l in w.block.post]
        for order in r.verdicts["order"].valid_orders:
            heap = Heap(frozenset(inst.edges))
            for s in order:
                heap = heap.link(s)
                db = ev.model(static + [Atom("edge", e) for e in heap.edges])
                assert ev.holds(Literal(Atom(spec.invariant, ())), db)
            assert all(ev.holds(l, db) for l in post), (r.operation, r.block_id)
