"""Environment interference: other threads running the same operations.

Each block of an operation becomes an abducible atomic action that may fire
whenever its precondition holds, at most one per transition.  On top of this
theory we ask which precondition literals an interferer can falsify, and
whether a given lock set prevents every such falsification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from . import solver
from .kb import DataStructureSpec, block_params, lift, param_sorts, rename_literal
from .logic import Atom, Const, Literal, LogicProgram, Rule, Var
from .reifier import T, T2, action_rules, at, horizon_for, initial_state, reify, step_effects
from .unfolder import InstanceModel, key_name


def env_node_count(spec: DataStructureSpec) -> int:
    extras = set(spec.extra_nodes)
    used = [sum(1 for p in block_params(spec, b) if p in extras) for _, b in spec.blocks()]
    return max(used, default=0)


def with_environment(spec: DataStructureSpec, inst: InstanceModel) -> InstanceModel:
    """Add fresh nodes e1, e2, ... with keys in every gap of the key order."""
    per_gap = env_node_count(spec)
    order = list(inst.key_order)
    fresh = []
    out = [order[0]] if order else []
    n = 0
    for k in order[1:]:
        for _ in range(per_gap):
            n += 1
            node = Const(f"e{n}")
            fresh.append(node)
            out.append(key_name(node))
        out.append(k)
    return inst.with_extras(tuple(inst.extra_nodes) + tuple(fresh), out)


def block_tag(op: str, block_id: str) -> str:
    return f"{op}_{block_id}"


@dataclass(frozen=True)
class EnvAction:
    op: str
    block_id: str
    params: tuple
    variables: tuple
    sorts: tuple

    @property
    def pred(self) -> str:
        return "interfere_" + block_tag(self.op, self.block_id)

    def atom(self, vs=None, t=T) -> Atom:
        return Atom(self.pred, tuple(vs if vs is not None else self.variables) + (t,))


def env_action_rules(spec: DataStructureSpec, op: str, block, gate: Optional[str]) -> tuple:
    """Abducible action for one block.  With ``gate="locks"`` the action needs
    every node of its precondition unlocked (a cautious interferer that takes
    its own locks); with ``gate="modified"`` only the written node."""
    params = block_params(spec, block)
    ren = lift(block, params)
    vs = tuple(ren[p] for p in params)
    sorts = param_sorts(spec, block)
    act = EnvAction(op, block.block_id, tuple(params), vs, tuple(sorts[p] for p in params))
    tag = block_tag(op, block.block_id)
    pre = Atom("pre_" + tag, vs + (T,))
    body = [Literal(Atom("time", (T,)))]
    for l in block.pre:
        l = rename_literal(l, ren)
        body.append(Literal(at(l.atom, T), l.positive) if l.atom.pred in spec.fluents else l)
    for p in params:
        if sorts[p] == "node":
            body.append(Literal(Atom("private", (ren[p],)), False))
    neg = Atom("neg_interfere_" + tag, vs + (T,))
    nt = Literal(Atom("next_time", (T, T2)))
    rules = [
        Rule(pre, tuple(body)),
        Rule(act.atom(), (Literal(pre), nt, Literal(neg, False))),
        Rule(neg, (Literal(pre), nt, Literal(act.atom(), False))),
    ]
    nodes = [ren[p] for p in params if sorts[p] == "node"]
    for s in block.steps:
        step = s.substitute(ren)
        g = gate
        if gate == "locks":
            modified = step_effects(spec, step)[1]
            g = nodes + ([modified] if modified not in nodes else [])
        rules += action_rules(spec, step, (Literal(act.atom()),), g)
    return act, rules


def at_most_one(actions) -> list:
    out = []
    for a, b in itertools.combinations_with_replacement(actions, 2):
        xs = a.variables
        ys = tuple(Var(v.name + "_2") for v in b.variables)
        both = (Literal(a.atom(xs)), Literal(b.atom(ys)))
        if a is not b:
            out.append(Rule(None, both))
            continue
        for x, y, sort in zip(xs, ys, a.sorts):
            eq = "eq_num" if sort == "key" else "eq_node"
            out.append(Rule(None, both + (Literal(Atom(eq, (x, y)), False),)))
    return out


@dataclass
class InterferenceTheory:
    program: LogicProgram
    chain: object
    instance: InstanceModel
    actions: tuple

    @property
    def abducibles(self) -> frozenset:
        return frozenset(a.pred for a in self.actions)

    def ground(self, extra=(), roots=None) -> solver.GroundProgram:
        """Ground with ``extra`` rules, restricted to what ``roots`` depend on."""
        prog = self.program.extend(extra)
        if roots is not None:
            prog = solver.relevant_slice(prog, roots)
        return solver.ground(prog, self.instance.all_nodes(), self.instance.key_order)


def build_interference(
    spec: DataStructureSpec,
    inst: InstanceModel,
    horizon: Optional[int] = None,
    locks=(),
    ops=None,
    gate: str = "locks",
    pairwise: bool = False,
) -> InterferenceTheory:
    """Reified theory over ``inst`` plus environment actions for the blocks of ``ops`` (default all).

    At most one action fires per transition.  By default this is declared to
    the solver as an exclusive group; ``pairwise`` spells it out as explicit
    constraints instead (quadratic, kept as a cross-check).
    """
    env = with_environment(spec, inst)
    if horizon is None:
        horizon = horizon_for("locks" if locks else "interference")
    prog, chain = reify(spec, horizon)
    rules = initial_state(spec, env, chain)
    rules += [Rule(Atom("private", (x,))) for x in inst.extra_nodes]
    if not locks:
        gate = None
    for n in locks or ():
        rules += [Rule(Atom("locked", (n, t))) for t in chain.times]
    actions = []
    for op, b in spec.blocks():
        if ops is not None and op.name not in ops:
            continue
        act, rs = env_action_rules(spec, op.name, b, gate)
        actions.append(act)
        rules += rs
    preds = frozenset(a.pred for a in actions)
    if pairwise:
        rules += at_most_one(actions)
        program = LogicProgram(prog.rules + tuple(rules), preds)
    else:
        program = LogicProgram(prog.rules + tuple(rules), preds, exclusive=preds)
    return InterferenceTheory(program, chain, env, tuple(actions))


# --------------------------------------------------------------------------
# falsification


def is_rigid(spec: DataStructureSpec, l: Literal) -> bool:
    return l.atom.pred not in spec.fluents


def falsification_rules(spec: DataStructureSpec, preds) -> dict:
    """Predicate-level rules ``falsify_p :- p(X,T), not p(X,T2), next_time(T,T2)``."""
    arities = {}
    for r in spec.rules:
        for a in [r.head] + [l.atom for l in r.body]:
            if a is not None:
                arities.setdefault(a.pred, a.arity)
    out = {}
    for p in sorted(preds):
        xs = tuple(Var(f"A{i}") for i in range(arities.get(p, 0)))
        head = Atom("falsify_" + p)
        out[p] = (
            head,
            Rule(
                head,
                (Literal(at(Atom(p, xs), T)), Literal(Atom("next_time", (T, T2))), Literal(at(Atom(p, xs), T2), False)),
            ),
        )
    return out


def literal_falsifier(l: Literal, name: str) -> tuple:
    """Ground rule deriving ``name`` when the bound literal ``l`` goes from true to false."""
    head = Atom(name)
    was = Literal(at(l.atom, T), l.positive)
    now = Literal(at(l.atom, T2), not l.positive)
    return head, Rule(head, (Literal(Atom("next_time", (T, T2))), was, now))


@dataclass
class FalsifyVerdict:
    falsifiable: list
    unfalsifiable: list


def classify_conjuncts(spec: DataStructureSpec, witness) -> FalsifyVerdict:
    """Split the witness-bound precondition into falsifiable and unfalsifiable literals."""
    theory = build_interference(spec, witness.instance)
    lits = [rename_literal(l, witness.mapping) for l in witness.block.pre]
    queries = {}
    extra = []
    positive = {l.atom.pred for l in lits if l.positive and not is_rigid(spec, l)}
    rules = falsification_rules(spec, positive)
    for p, (head, rule) in rules.items():
        extra.append(rule)
        queries[p] = head
    for i, l in enumerate(lits):
        if not l.positive and not is_rigid(spec, l):
            head, rule = literal_falsifier(l, f"falsify_lit_{i}")
            extra.append(rule)
            queries[i] = head
    gp = theory.ground(extra, roots={q.pred for q in queries.values()})
    hit = solver.brave_atoms(gp, queries.values(), theory.abducibles)
    falsifiable, safe = [], []
    for i, l in enumerate(lits):
        if is_rigid(spec, l):
            safe.append(l)
        elif l.positive:
            (falsifiable if queries[l.atom.pred] in hit else safe).append(l)
        else:
            (falsifiable if queries[i] in hit else safe).append(l)
    return FalsifyVerdict(falsifiable, safe)


def unfalsifiable_conjuncts(spec: DataStructureSpec, witness) -> list:
    return classify_conjuncts(spec, witness).unfalsifiable


def validation_set(spec: DataStructureSpec, witness) -> list:
    """Literals to re-check under locks: key-order literals and falsifiable ones, in precondition order."""
    verdict = classify_conjuncts(spec, witness)
    keep = set(verdict.falsifiable)
    return [l for l in (rename_literal(x, witness.mapping) for x in witness.block.pre) if l in keep or l.is_builtin]


# --------------------------------------------------------------------------
# locks


def guess_locks(spec: DataStructureSpec, witness) -> list:
    """Node parameters of the block, nearest to the start node first."""
    dist = witness.instance.distance(spec.start_node)
    sorts = param_sorts(spec, witness.block)
    nodes = []
    for p in block_params(spec, witness.block):
        v = witness.mapping[p]
        if sorts[p] == "node" and v not in nodes:
            nodes.append(v)
    reach = sorted((n for n in nodes if n in dist), key=lambda n: (dist[n], nodes.index(n)))
    return reach + [n for n in nodes if n not in dist]


@dataclass
class LockVerdict:
    adequate: bool
    falsified: list = field(default_factory=list)
    counterexample: Optional[list] = None


def locks_adequate(spec: DataStructureSpec, witness, locks, gate: str = "locks") -> LockVerdict:
    """Whether holding ``locks`` keeps every bound precondition literal from being falsified."""
    theory = build_interference(spec, witness.instance, locks=tuple(locks), gate=gate)
    lits = [rename_literal(l, witness.mapping) for l in witness.block.pre]
    extra, heads = [], {}
    for i, l in enumerate(lits):
        if is_rigid(spec, l):
            continue
        head, rule = literal_falsifier(l, f"falsify_lit_{i}")
        extra.append(rule)
        heads[head] = l
    gp = theory.ground(extra, roots={h.pred for h in heads})
    hit = solver.brave_atoms(gp, heads, theory.abducibles)
    falsified = [heads[h] for h in heads if h in hit]
    cex = None
    if falsified:
        first = next(h for h in heads if h in hit)
        model = solver.first_model_with(gp, first, theory.abducibles)
        cex = sorted(str(a) for a in model if a.pred.startswith("interfere_"))
    return LockVerdict(not falsified, falsified, cex)
