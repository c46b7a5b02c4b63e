import pytest
from hypothesis import given
from hypothesis import strategies as st

from lazysynth.logic import (
    Atom,
    Const,
    Literal,
    LogicProgram,
    Rule,
    StructuralError,
    Var,
    apply_substitution,
    atom,
    fact,
    is_safe,
    neg,
    pos,
    rename_apart,
    unsafe_variables,
)

X, Y = Var("X"), Var("Y")
a, b = Const("a"), Const("b")

names = st.text(alphabet="abcxyz", min_size=1, max_size=3)


def test_atom_helper_splits_variables_by_case():
    assert atom("edge", "X", "b") == Atom("edge", (X, b))
    assert atom("p", "_G").args == (Var("_G"),)


def test_substitute_leaves_unbound_variables():
    r = Rule(atom("p", "X", "Y"), (pos(atom("q", "X")),))
    out = r.head.substitute({X: a})
    assert out == Atom("p", (a, Y))
    assert not out.is_ground


def test_apply_substitution_requires_every_variable():
    r = Rule(atom("p", "X"), (pos(atom("q", "X", "Y")),))
    with pytest.raises(StructuralError, match="Y"):
        apply_substitution(r, {X: a})
    assert apply_substitution(r, {X: a, Y: b}).is_ground()


@given(names, st.lists(names, max_size=4))
def test_substituted_atoms_hash_like_fresh_ones(pred, args):
    vs = tuple(Var(n.upper()) for n in args)
    binding = {v: Const(n) for v, n in zip(vs, args)}
    got = Atom(pred, vs).substitute(binding)
    fresh = Atom(pred, tuple(Const(n) for n in args))
    assert got == fresh and hash(got) == hash(fresh)
    assert {got: 1}[fresh] == 1


def test_safety():
    assert is_safe(Rule(atom("p", "X"), (pos(atom("q", "X")), neg(atom("r", "X")))))
    assert unsafe_variables(Rule(atom("p", "X"), (neg(atom("r", "X")),))) == {X}
    assert unsafe_variables(Rule(None, (pos(atom("q", "X")), neg(atom("r", "Y"))))) == {Y}


def test_rename_apart_is_consistent():
    r = Rule(atom("p", "X"), (pos(atom("q", "X", "Y")),))
    r2 = rename_apart(r, "1")
    assert r2.variables() == {Var("X_1"), Var("Y_1")}
    assert r2.head.args[0] == r2.body[0].atom.args[0]


def test_rule_text():
    assert str(fact("edge", "h", "t")) == "edge(h,t)."
    assert str(Rule(None, (neg(atom("ok")),))) == " :- not ok."
    assert str(Literal(atom("lt", "a", "b"))) == "lt(a,b)"


def test_predicate_arity_clash_is_structural():
    prog = LogicProgram((fact("p", "a"), fact("p", "a", "b")))
    with pytest.raises(StructuralError, match="arities"):
        prog.predicates()


def test_builtins_are_recognised():
    assert Literal(atom("lt", "X", "Y")).is_builtin
    assert not Literal(atom("edge", "X", "Y")).is_builtin
