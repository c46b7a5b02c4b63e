"""Which orderings of a block's steps keep the invariant at every step."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import solver
from .kb import DataStructureSpec, LinkAction, atom_text, rename_literal
from .logic import Atom, Literal, Rule, Var
from .reifier import T, action_rules, at, horizon_for, initial_state, reify, state_at


@dataclass(frozen=True)
class StepState:
    time: str
    edges: tuple
    invariant: bool


@dataclass(frozen=True)
class OrderResult:
    steps: tuple
    valid: bool
    trace: tuple
    reason: str = ""


@dataclass
class OrderVerdict:
    results: list = field(default_factory=list)

    @property
    def valid_orders(self) -> list:
        return [r.steps for r in self.results if r.valid]

    @property
    def ok(self) -> bool:
        return bool(self.valid_orders)


def bind_steps(block, mapping) -> tuple:
    return tuple(s.substitute(mapping) for s in block.steps)


def bind_literals(lits, mapping) -> tuple:
    return tuple(rename_literal(l, mapping) for l in lits)


def timed_literal(l: Literal, t, fluents) -> Literal:
    return Literal(at(l.atom, t), l.positive) if l.atom.pred in fluents else l


def order_program(spec: DataStructureSpec, witness, steps) -> tuple:
    """Reified theory with ``steps`` scheduled one per transition; returns (program, chain, post atom)."""
    inst = witness.instance
    prog, chain = reify(spec, len(steps) + 1)
    S, F, D = Var("S"), Var("F"), Var("D")
    generic = LinkAction(S, F, D)
    rules = initial_state(spec, inst, chain)
    rules += action_rules(spec, generic, (Literal(Atom("act", (S, F, D, T))),))
    for s, t in zip(steps, chain.times):
        rules.append(Rule(Atom("act", (s.source, s.field, s.dest, t))))
    post = bind_literals(witness.block.post, witness.mapping)
    post_ok = Atom("post_ok")
    rules.append(Rule(post_ok, tuple(timed_literal(l, chain.last, spec.fluents) for l in post)))
    return prog.extend(rules), chain, post_ok


def order_constraints(spec, chain, post_ok) -> list:
    out = [Rule(None, (Literal(at(Atom(spec.invariant, ()), t), False),)) for t in chain.times]
    out.append(Rule(None, (Literal(post_ok, False),)))
    return out


def check_order(spec: DataStructureSpec, witness, steps) -> OrderResult:
    prog, chain, post_ok = order_program(spec, witness, steps)
    domain = witness.instance.all_nodes()
    order = witness.instance.key_order
    constrained = solver.ground(prog.extend(order_constraints(spec, chain, post_ok)), domain, order)
    valid = solver.satisfiable(constrained)
    # the unconstrained theory is deterministic; its model is the trace
    model = solver.answer_sets(solver.ground(prog, domain, order))[0]
    trace = []
    reason = ""
    base = spec.base_fluents()
    for i, t in enumerate(chain.times):
        inv = at(Atom(spec.invariant, ()), t) in model
        edges = tuple(sorted(atom_text(a) for a in state_at(model, t, base)))
        trace.append(StepState(t.name, edges, inv))
        if not inv and not reason:
            reason = f"invariant broken after step {i}" if i else "invariant false initially"
    if not reason and post_ok not in model:
        reason = "postcondition false after the last step"
    if valid and reason:
        raise AssertionError("constrained and unconstrained checks disagree")
    return OrderResult(tuple(steps), valid, tuple(trace), "" if valid else reason)


def valid_program_orders(spec: DataStructureSpec, witness) -> OrderVerdict:
    """Try every permutation of the block's steps on the witness instance."""
    steps = bind_steps(witness.block, witness.mapping)
    verdict = OrderVerdict()
    seen = set()
    for perm in itertools.permutations(steps):
        if perm in seen:
            continue
        seen.add(perm)
        verdict.results.append(check_order(spec, witness, perm))
    return verdict


__all__ = ["OrderVerdict", "OrderResult", "StepState", "valid_program_orders", "check_order", "horizon_for"]
