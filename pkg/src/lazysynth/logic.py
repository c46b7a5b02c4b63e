"""Flat first-order terms, atoms, literals and rules.

Everything here is an immutable value.  Terms are either constants or
variables; there are no function symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

# Builtins evaluated during grounding against a symbolic key order.
BUILTINS = frozenset({"lt", "eq_node", "eq_num"})


class StructuralError(ValueError):
    """A malformed rule or substitution."""


@dataclass(frozen=True, order=True)
class Const:
    name: str

    def __hash__(self) -> int:
        return hash(self.name)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __hash__(self) -> int:
        return hash(self.name)

    def __str__(self) -> str:
        return self.name


Term = Union[Const, Var]


def is_var(term: Term) -> bool:
    return isinstance(term, Var)


@dataclass(frozen=True, order=True)
class Atom:
    pred: str
    args: tuple = ()

    def __hash__(self) -> int:
        # atoms are hashed constantly during grounding; cache it
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.pred, self.args))
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def variables(self) -> Iterator[Var]:
        for a in self.args:
            if isinstance(a, Var):
                yield a

    def substitute(self, binding: Mapping[Var, Term]) -> "Atom":
        if not binding:
            return self
        # constants never occur as keys, so a plain lookup is enough
        return Atom._make(self.pred, tuple([binding.get(a, a) for a in self.args]))

    @classmethod
    def _make(cls, pred: str, args: tuple) -> "Atom":
        """Unchecked constructor for the grounder's inner loop."""
        a = object.__new__(cls)
        d = a.__dict__
        d["pred"] = pred
        d["args"] = args
        return a

    def __str__(self) -> str:
        if not self.args:
            return self.pred
        return f"{self.pred}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    positive: bool = True

    @property
    def is_builtin(self) -> bool:
        return self.atom.pred in BUILTINS

    def substitute(self, binding: Mapping[Var, Term]) -> "Literal":
        return Literal(self.atom.substitute(binding), self.positive)

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


@dataclass(frozen=True)
class Rule:
    head: Optional[Atom]
    body: tuple = ()

    @property
    def is_constraint(self) -> bool:
        return self.head is None

    @property
    def is_fact(self) -> bool:
        return self.head is not None and not self.body

    def variables(self) -> set:
        out = set(self.head.variables()) if self.head is not None else set()
        for lit in self.body:
            out.update(lit.atom.variables())
        return out

    def is_ground(self) -> bool:
        return not self.variables()

    def __str__(self) -> str:
        head = str(self.head) if self.head is not None else ""
        if not self.body:
            return f"{head}."
        return f"{head} :- {', '.join(str(l) for l in self.body)}."


def fact(pred: str, *args: str) -> Rule:
    return Rule(Atom(pred, tuple(Const(a) for a in args)))


def atom(pred: str, *args) -> Atom:
    """Build an atom; plain strings starting uppercase become variables."""
    terms = []
    for a in args:
        if isinstance(a, (Const, Var)):
            terms.append(a)
        elif a[:1].isupper() or a[:1] == "_":
            terms.append(Var(a))
        else:
            terms.append(Const(a))
    return Atom(pred, tuple(terms))


def pos(a: Atom) -> Literal:
    return Literal(a, True)


def neg(a: Atom) -> Literal:
    return Literal(a, False)


def apply_substitution(rule: Rule, binding: Mapping[Var, Term]) -> Rule:
    missing = sorted(v.name for v in rule.variables() if v not in binding)
    if missing:
        raise StructuralError(f"unbound variable {missing[0]} in rule {rule}")
    return substitute(rule, binding)


def substitute(rule: Rule, binding: Mapping[Var, Term]) -> Rule:
    """Partial substitution; variables outside ``binding`` are left alone."""
    head = rule.head.substitute(binding) if rule.head is not None else None
    return Rule(head, tuple(l.substitute(binding) for l in rule.body))


def rename_apart(rule: Rule, tag: str) -> Rule:
    binding = {v: Var(f"{v.name}_{tag}") for v in rule.variables()}
    return substitute(rule, binding)


def unsafe_variables(rule: Rule) -> set:
    """Variables of the head or of a negated literal with no positive occurrence."""
    bound = set()
    for lit in rule.body:
        if lit.positive:
            bound.update(lit.atom.variables())
    need = set(rule.head.variables()) if rule.head is not None else set()
    for lit in rule.body:
        if not lit.positive:
            need.update(lit.atom.variables())
    return need - bound


def is_safe(rule: Rule) -> bool:
    return not unsafe_variables(rule)


@dataclass(frozen=True)
class LogicProgram:
    rules: tuple = ()
    abducibles: frozenset = frozenset()
    builtins: frozenset = BUILTINS
    # abducible predicates of which at most one atom is true per value of
    # the last argument (one action per time step)
    exclusive: frozenset = frozenset()

    def __add__(self, other: "LogicProgram") -> "LogicProgram":
        return LogicProgram(
            self.rules + other.rules, self.abducibles | other.abducibles, self.builtins, self.exclusive | other.exclusive
        )

    def extend(self, rules: Iterable[Rule], abducibles: Iterable[str] = ()) -> "LogicProgram":
        return LogicProgram(self.rules + tuple(rules), self.abducibles | frozenset(abducibles), self.builtins, self.exclusive)

    def predicates(self) -> dict:
        """Map predicate name to arity, raising on an arity clash."""
        arities: dict = {}
        for r in self.rules:
            atoms = ([r.head] if r.head is not None else []) + [l.atom for l in r.body]
            for a in atoms:
                seen = arities.setdefault(a.pred, a.arity)
                if seen != a.arity:
                    raise StructuralError(f"predicate {a.pred} used with arities {seen} and {a.arity}")
        return arities

    def constants(self) -> set:
        out = set()
        for r in self.rules:
            atoms = ([r.head] if r.head is not None else []) + [l.atom for l in r.body]
            for a in atoms:
                out.update(t for t in a.args if isinstance(t, Const))
        return out

    def __str__(self) -> str:
        lines = [str(r) for r in self.rules]
        if self.abducibles:
            lines.insert(0, "% abducible: " + ", ".join(sorted(self.abducibles)))
        return "\n".join(lines) + ("\n" if lines else "")


def lits_str(lits: Sequence[Literal]) -> str:
    return ", ".join(str(l) for l in lits)
