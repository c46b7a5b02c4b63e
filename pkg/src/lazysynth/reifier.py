"""Time-indexed versions of a data-structure theory.

Every fluent gains a trailing time argument.  Base fluents (those written by
primitive actions) persist by inertia unless their slot is overwritten;
derived fluents are recomputed from scratch at every time point.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kb import DataStructureSpec, LinkAction, SpecError, rename_atom
from .logic import Atom, Const, Literal, LogicProgram, Rule, Var

T = Var("T")
T2 = Var("T2")


@dataclass(frozen=True)
class TimeChain:
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")

    @property
    def times(self) -> tuple:
        return tuple(Const(f"t{i}") for i in range(1, self.horizon + 1))

    @property
    def first(self) -> Const:
        return self.times[0]

    @property
    def last(self) -> Const:
        return self.times[-1]

    def facts(self) -> list:
        ts = self.times
        out = [Rule(Atom("time", (t,))) for t in ts]
        out += [Rule(Atom("next_time", (a, b))) for a, b in zip(ts, ts[1:])]
        for i, a in enumerate(ts):
            for j, b in enumerate(ts):
                if i < j:
                    out.append(Rule(Atom("before", (a, b))))
                if i <= j:
                    out.append(Rule(Atom("leq", (a, b))))
        return out


def at(a: Atom, t) -> Atom:
    return Atom(a.pred, a.args + (t,))


def reify_rule(rule: Rule, fluents) -> Rule:
    def lit(l: Literal) -> Literal:
        return Literal(at(l.atom, T), l.positive) if l.atom.pred in fluents else l

    body = tuple(lit(l) for l in rule.body)
    timed_body = any(l.atom.pred in fluents for l in rule.body)
    if rule.head is None:
        return Rule(None, body + ((Literal(Atom("time", (T,))),) if not timed_body else ()))
    if rule.head.pred not in fluents:
        if timed_body:
            raise SpecError(f"rule for non-fluent {rule.head.pred} depends on a fluent")
        return rule
    if not timed_body or not any(l.positive and l.atom.pred in fluents for l in rule.body):
        body = (Literal(Atom("time", (T,))),) + body
    return Rule(at(rule.head, T), body)


def overwritten_pred(pred: str) -> str:
    return f"overwritten_{pred}"


def inertia_rules(spec: DataStructureSpec) -> list:
    arities = {c.pred: c.arity for p in spec.primitives for c in p.causes}
    out = []
    for pred, n in sorted(arities.items()):
        xs = tuple(Var(f"A{i}") for i in range(n))
        out.append(
            Rule(
                at(Atom(pred, xs), T2),
                (
                    Literal(at(Atom(pred, xs), T)),
                    Literal(Atom("next_time", (T, T2))),
                    Literal(Atom(overwritten_pred(pred), xs[:-1] + (T,)), False),
                ),
            )
        )
    return out


def reify(spec: DataStructureSpec, horizon: int) -> tuple:
    """Reified spec rules plus inertia and time facts; returns (program, chain)."""
    chain = TimeChain(horizon)
    rules = [reify_rule(r, spec.fluents) for r in spec.rules]
    rules += inertia_rules(spec)
    rules += chain.facts()
    return LogicProgram(tuple(rules)), chain


def initial_state(spec: DataStructureSpec, inst, chain: TimeChain) -> list:
    """Instance facts, with fluent facts placed at the first time point."""
    out = []
    for r in inst.facts():
        a = r.head
        out.append(Rule(at(a, chain.first)) if a.pred in spec.fluents else r)
    return out


def step_effects(spec: DataStructureSpec, step: LinkAction):
    """Caused atoms, their slots, and the modified node for a concrete step."""
    prim = spec.primitive_for(step)
    ren = dict(zip(prim.action.args, step.atom().args))
    effects = [rename_atom(c, ren) for c in prim.causes]
    return effects, ren.get(prim.modifies, prim.modifies)


def action_rules(spec: DataStructureSpec, step: LinkAction, trigger: tuple, gate=None) -> list:
    """Rules making ``step`` take effect from T to T2 whenever ``trigger`` holds at T.

    ``gate`` lists nodes that must all be unlocked at T for the effect to
    happen; the string ``"modified"`` gates on the node the step writes.
    """
    effects, modified = step_effects(spec, step)
    nodes = [modified] if gate == "modified" else list(gate or ())
    guard = tuple(Literal(Atom("locked", (n, T)), False) for n in nodes)
    out = []
    for e in effects:
        body = tuple(trigger) + guard
        out.append(Rule(at(e, T2), body + (Literal(Atom("next_time", (T, T2))),)))
        out.append(Rule(Atom(overwritten_pred(e.pred), e.args[:-1] + (T,)), body))
    return out


def state_at(model, t: Const, fluents) -> set:
    """Untimed view of the fluents that hold at ``t``."""
    return {Atom(a.pred, a.args[:-1]) for a in model if a.pred in fluents and a.args and a.args[-1] == t}


HORIZON_OVERRIDES: dict = {}


def horizon_for(task: str, block=None, depth: int = 0) -> int:
    """Time points a task needs; ``HORIZON_OVERRIDES`` replaces the interference, locks and keymove values."""
    if task in HORIZON_OVERRIDES and task != "order":
        return HORIZON_OVERRIDES[task]
    if task in ("interference", "locks"):
        return 2
    if task == "order":
        return len(block.steps) + 1
    if task == "keymove":
        return depth + 2
    raise ValueError(f"unknown task {task}")
