import math

import pytest

from lazysynth.logic import Atom, Const
from lazysynth.unfolder import (
    NoInstanceError,
    evaluate,
    find_least_common_instance,
    find_witness,
    placements,
    unfold,
)

from oracles import binary_trees, full_binary_trees


@pytest.mark.parametrize("depth", range(4))
def test_list_has_one_chain_per_depth(list_spec, depth):
    (inst,) = unfold(list_spec, depth)
    names = ["h"] + [f"n{i}" for i in range(1, depth + 1)] + ["t"]
    assert [n.name for n in inst.nodes] == names
    assert [(a.name, b.name) for a, _, b in inst.edges] == list(zip(names, names[1:]))
    assert [k.name for k in inst.key_order] == ["kh"] + [f"k{i}" for i in range(1, depth + 1)] + ["kt"]


@pytest.mark.parametrize("depth", range(4))
def test_tree_shape_counts(specs, depth):
    assert len(unfold(specs["external_bst"], depth)) == full_binary_trees(depth + 1)
    assert len(unfold(specs["internal_bst"], depth)) == binary_trees(depth)


@pytest.mark.parametrize("name", ["linked_list", "external_bst", "internal_bst"])
def test_unfolded_instances_satisfy_the_invariant(specs, name):
    spec = specs[name]
    for d in range(3):
        for inst in unfold(spec, d):
            assert Atom(spec.invariant, ()) in evaluate(spec, inst), inst.describe()


def test_unfolded_trees_are_distinct(specs):
    for name in ("external_bst", "internal_bst"):
        shapes = [frozenset(i.edges) for i in unfold(specs[name], 3)]
        assert len(set(shapes)) == len(shapes)


@pytest.mark.parametrize("inner,extra", [(0, 1), (2, 1), (2, 2), (3, 2)])
def test_placements_keep_sentinels(inner, extra):
    base = tuple(Const(f"k{i}") for i in range(inner + 2))
    extras = tuple(Const(f"e{i}") for i in range(extra))
    got = list(placements(base, extras))
    assert len(got) == math.comb(inner + extra, extra) * math.factorial(extra)
    assert len(set(got)) == len(got)
    assert all(o[0] == base[0] and o[-1] == base[-1] for o in got)


def test_no_placement_without_sentinels():
    assert list(placements((Const("k"),), (Const("e"),))) == []


def test_least_instance_depths(specs):
    assert find_least_common_instance(specs["external_bst"])[0].depth == 1
    assert find_least_common_instance(specs["internal_bst"])[0].depth == 4


def test_too_shallow_bound_raises(specs):
    with pytest.raises(NoInstanceError, match="delete"):
        find_least_common_instance(specs["internal_bst"], max_depth=3)
    with pytest.raises(ValueError):
        find_least_common_instance(specs["linked_list"], max_depth=0)


def test_witness_binds_extra_nodes_to_their_own_role(specs):
    spec = specs["external_bst"]
    delta, witnesses = find_least_common_instance(spec)
    extras = set(spec.extra_nodes)
    for w in witnesses.values():
        assert all(v == p for p, v in w.binding if v in extras)


def test_list_delete_witness(list_spec):
    (inst,) = unfold(list_spec, 1)
    w = find_witness(list_spec, list_spec.operation("delete").blocks[0], inst)
    assert {str(p): str(v) for p, v in w.binding} == {
        "x": "h", "target": "n1", "y": "t", "kx": "kh", "ky": "kt", "ktarget": "k1"
    }
