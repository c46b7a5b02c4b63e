"""Turn the task verdicts into lock-based code, or fall back to RCU."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .interference import classify_conjuncts, guess_locks, locks_adequate
from .kb import DataStructureSpec, LinkAction, atom_text, rename_literal
from .keymove import detect_key_movement
from .logic import Const, Literal
from .ordering import valid_program_orders
from .unfolder import find_least_common_instance, DEFAULT_MAX_DEPTH

NO_VALID_ORDER = "no-valid-order"
KEY_MOVEMENT = "key-movement"
LOCKS_INADEQUATE = "locks-inadequate"


@dataclass(frozen=True)
class ConcurrentCode:
    """Role-level code for one block: names are the block's own (x, y, target ...)."""

    operation: str
    block_id: str
    pre: tuple
    locks: tuple
    validation: tuple
    steps: tuple
    unlocks: tuple
    post: tuple
    unfalsifiable: tuple = ()


@dataclass(frozen=True)
class RcuRecommendation:
    operation: str
    block_id: str
    reason: str
    detail: str = ""


@dataclass
class SynthesisResult:
    operation: str
    block_id: str
    outcome: Union[ConcurrentCode, RcuRecommendation]
    verdicts: dict = field(default_factory=dict)

    @property
    def is_rcu(self) -> bool:
        return isinstance(self.outcome, RcuRecommendation)


def _role_of(witness, node) -> object:
    for p, v in witness.binding:
        if v == node:
            return p
    return node


def unlock_order(locks, target=Const("target")) -> tuple:
    """Target first, then the remaining locks in reverse."""
    rest = [n for n in locks if n != target]
    return tuple(([target] if target in locks else []) + rest[::-1])


class Synthesizer:
    """Runs the gates for every block of a spec, sharing the least instance and key-movement checks."""

    def __init__(self, spec: DataStructureSpec, max_depth: int = DEFAULT_MAX_DEPTH):
        self.spec = spec
        self.max_depth = max_depth
        self._delta = None
        self._keymove: dict = {}

    @property
    def delta(self):
        if self._delta is None:
            self._delta = find_least_common_instance(self.spec, self.max_depth)
        return self._delta

    def key_movement(self, op: str):
        if op not in self._keymove:
            spec = self.spec
            self._keymove[op] = None if spec.end_node is None else detect_key_movement(spec, self.delta[0], op)
        return self._keymove[op]

    def block(self, op: str, block) -> SynthesisResult:
        spec = self.spec
        witness = self.delta[1][(op, block.block_id)]
        verdicts: dict = {"witness": witness}

        orders = valid_program_orders(spec, witness)
        verdicts["order"] = orders
        if not orders.ok:
            return SynthesisResult(op, block.block_id, RcuRecommendation(op, block.block_id, NO_VALID_ORDER), verdicts)

        moved = self.key_movement(op)
        verdicts["keymove"] = moved
        if moved is not None and moved.moved:
            missed = ", ".join(str(n) for n in moved.missed)
            rcu = RcuRecommendation(op, block.block_id, KEY_MOVEMENT, f"traversal to {moved.target} can miss {missed}")
            return SynthesisResult(op, block.block_id, rcu, verdicts)

        locks = guess_locks(spec, witness)
        lock_verdict = locks_adequate(spec, witness, locks)
        verdicts["locks"] = lock_verdict
        if not lock_verdict.adequate:
            bad = ", ".join(atom_text(l.atom) for l in lock_verdict.falsified)
            rcu = RcuRecommendation(op, block.block_id, LOCKS_INADEQUATE, f"still falsifiable: {bad}")
            return SynthesisResult(op, block.block_id, rcu, verdicts)

        falsify = classify_conjuncts(spec, witness)
        verdicts["falsify"] = falsify
        return SynthesisResult(op, block.block_id, self._assemble(op, block, witness, orders, locks, falsify), verdicts)

    def _assemble(self, op, block, witness, orders, locks, falsify) -> ConcurrentCode:
        mapping = witness.mapping
        bound = [rename_literal(l, mapping) for l in block.pre]
        keep = set(falsify.falsifiable)
        validation = tuple(l for l, b in zip(block.pre, bound) if b in keep or l.is_builtin)
        unfalsifiable = tuple(l for l, b in zip(block.pre, bound) if b not in keep and not l.is_builtin)
        role_steps = {s.substitute(mapping): s for s in block.steps}
        steps = tuple(role_steps[s] for s in orders.valid_orders[0])
        role_locks = tuple(_role_of(witness, n) for n in locks)
        return ConcurrentCode(
            op,
            block.block_id,
            validation,
            role_locks,
            validation,
            steps,
            unlock_order(role_locks),
            tuple(block.post),
            unfalsifiable,
        )

    def operation(self, op: str) -> list:
        return [self.block(op, b) for b in self.spec.operation(op).blocks]

    def run(self, ops=None) -> list:
        names = [o.name for o in self.spec.operations] if ops is None else list(ops)
        out = []
        for name in names:
            out += self.operation(name)
        return out


def generate_concurrent_code(spec: DataStructureSpec, operation: str, max_depth: int = DEFAULT_MAX_DEPTH) -> list:
    return Synthesizer(spec, max_depth).operation(operation)


def synthesize(spec: DataStructureSpec, ops=None, max_depth: int = DEFAULT_MAX_DEPTH) -> list:
    return Synthesizer(spec, max_depth).run(ops)


# --------------------------------------------------------------------------
# rendering


def _lit(l: Literal) -> str:
    return atom_text(l.atom) if l.positive else f"not {atom_text(l.atom)}"


def render_text(result: SynthesisResult) -> str:
    o = result.outcome
    if isinstance(o, RcuRecommendation):
        line = f"RCU recommended for {o.operation} {o.block_id}: {o.reason}"
        return line + (f" ({o.detail})\n" if o.detail else "\n")
    out = [f"Concurrent {o.operation} {o.block_id}"]
    out.append("  {" + ", ".join(_lit(l) for l in o.pre) + "}")
    out += [f"  lock({n})" for n in o.locks]
    out.append("  if validate(" + " & ".join(_lit(l) for l in o.validation) + ") {")
    out += [f"    {s}" for s in o.steps]
    out.append("  }")
    out += [f"  unlock({n})" for n in o.unlocks]
    out.append("  {" + ", ".join(_lit(l) for l in o.post) + "}")
    return "\n".join(out) + "\n"


def to_dict(result: SynthesisResult, verbose: bool = False) -> dict:
    o = result.outcome
    d: dict = {"operation": result.operation, "block": result.block_id}
    if isinstance(o, RcuRecommendation):
        d.update(outcome="rcu", reason=o.reason, detail=o.detail)
    else:
        d.update(
            outcome="code",
            pre=[_lit(l) for l in o.pre],
            locks=[str(n) for n in o.locks],
            validate=[_lit(l) for l in o.validation],
            steps=[str(s) for s in o.steps],
            unlocks=[str(n) for n in o.unlocks],
            post=[_lit(l) for l in o.post],
        )
    if verbose:
        d["verdicts"] = verdict_summary(result)
    return d


def verdict_summary(result: SynthesisResult) -> dict:
    """The gate verdicts that were computed, in role names."""
    v = result.verdicts
    w = v.get("witness")
    role = (lambda n: _role_of(w, n)) if w is not None else (lambda n: n)
    out: dict = {}
    if "order" in v:
        out["valid_orders"] = [
            [str(LinkAction(role(s.source), s.field, role(s.dest))) for s in order] for order in v["order"].valid_orders
        ]
    if v.get("keymove") is not None:
        km = v["keymove"]
        out["key_movement"] = {"detected": km.moved, "target": str(km.target), "missed": [str(n) for n in km.missed]}
    if "locks" in v:
        out["locks_adequate"] = v["locks"].adequate
    if isinstance(result.outcome, ConcurrentCode):
        out["unfalsifiable"] = [_lit(l) for l in result.outcome.unfalsifiable]
    return out


def _summary_text(result: SynthesisResult) -> str:
    s = verdict_summary(result)
    out = []
    if "valid_orders" in s:
        out.append("  % valid orders: " + " | ".join(", ".join(o) for o in s["valid_orders"]))
    if "key_movement" in s:
        km = s["key_movement"]
        out.append(f"  % key movement: {'detected' if km['detected'] else 'none'} (target {km['target']})")
    if "locks_adequate" in s:
        out.append(f"  % locks adequate: {'yes' if s['locks_adequate'] else 'no'}")
    if "unfalsifiable" in s:
        out.append("  % unfalsifiable: " + ", ".join(s["unfalsifiable"]))
    return "".join(line + "\n" for line in out)


def render(results, fmt: str = "text", verbose: bool = False) -> str:
    """Text mirrors the generated-code listing; json carries the same fields."""
    if fmt == "json":
        return json.dumps([to_dict(r, verbose) for r in results], indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt}")
    return "\n".join(render_text(r) + (_summary_text(r) if verbose else "") for r in results)


def exit_code(results) -> int:
    return 2 if any(r.is_rcu for r in results) else 0
