"""Can a lock-free traversal miss a key that never left the structure?

An asynchronous traversal advances one node per transition while the
environment keeps running the operation.  It is compared against the
synchronous traversal recomputed on every intermediate state: a key moves
when the asynchronous walk reaches the end without visiting some node that
the synchronous walk saw continuously all along.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import solver
from .kb import DataStructureSpec
from .logic import Atom, Const, Literal, Rule, Var
from .reifier import T, T2, horizon_for
from .interference import build_interference

X, Y, T1 = Var("X"), Var("Y"), Var("T1")


@dataclass
class KeyMoveVerdict:
    moved: bool
    target: Optional[Const] = None
    missed: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def traversal_target(spec: DataStructureSpec, inst) -> Const:
    """Deepest node of the instance, the hardest one to reach."""
    dist = inst.distance(spec.start_node)
    cands = [n for n in dist if n not in (spec.start_node, spec.end_node)]
    if not cands:
        raise ValueError("instance has no interior node to traverse to")
    return max(cands, key=lambda n: (dist[n], n.name))


def keymove_horizon(spec: DataStructureSpec, inst) -> int:
    """Instance depth plus two: one traversal around one interference step."""
    return horizon_for("keymove", depth=inst.depth)


def _lit(pred, *args, positive=True) -> Literal:
    return Literal(Atom(pred, tuple(args)), positive)


def traversal_rules(spec: DataStructureSpec, tau: Const, chain) -> list:
    start, first = spec.start_node, chain.first
    return [
        Rule(Atom("sync_visit", (start, T)), (_lit("time", T),)),
        Rule(Atom("sync_visit", (Y, T)), (_lit("sync_visit", X, T), _lit("next_node", X, Y, tau, T))),
        Rule(Atom("async_visit", (start, first))),
        Rule(
            Atom("async_visit", (X, T2)),
            (_lit("async_visit", Y, T), _lit("next_time", T, T2), _lit("next_node", Y, X, tau, T2)),
        ),
        Rule(Atom("cont", (Y, first)), (_lit("sync_visit", Y, first),)),
        Rule(Atom("cont", (Y, T2)), (_lit("cont", Y, T), _lit("next_time", T, T2), _lit("sync_visit", Y, T2))),
        Rule(Atom("async_seen", (Y, T)), (_lit("async_visit", Y, T1), _lit("leq", T1, T))),
        Rule(
            Atom("missed", (Y, T)),
            (_lit("async_visit", spec.end_node, T), _lit("cont", Y, T), _lit("async_seen", Y, T, positive=False)),
        ),
        Rule(Atom("key_move"), (_lit("missed", Y, T),)),
    ]


def detect_key_movement(spec: DataStructureSpec, inst, op: str) -> KeyMoveVerdict:
    """Look for key movement on ``inst`` while other threads run ``op``."""
    if spec.end_node is None:
        raise ValueError("key movement needs an end node")
    tau = traversal_target(spec, inst)
    theory = build_interference(spec, inst, horizon=keymove_horizon(spec, inst), ops={op})
    gp = theory.ground(traversal_rules(spec, tau, theory.chain), roots={"key_move"})
    model = solver.first_model_with(gp, Atom("key_move"), theory.abducibles)
    if model is None:
        return KeyMoveVerdict(False, tau)
    missed = sorted({a.args[0] for a in model.with_pred("missed")})
    trace = sorted(
        (str(a) for a in model if a.pred.startswith("interfere_") or a.pred == "async_visit"),
        key=lambda s: (s.rsplit(",", 1)[-1], s),
    )
    return KeyMoveVerdict(True, tau, missed, trace)
