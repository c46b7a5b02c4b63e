"""Enumerate small instances of a recursive structural definition.

The structural rules are run top-down as a meta-interpreter: ``edge``,
``key`` and ``node`` goals are abduced as facts, ``lt`` goals are collected
as order constraints over symbolic keys, and every application of a
recursive rule counts as one unfolding.  Each resulting skeleton is named,
given a total key order, and re-checked bottom-up with the solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

from . import solver
from .kb import BASE_PREDICATES, DataStructureSpec, block_params, lift, rename_literal
from .logic import Atom, Const, Literal, LogicProgram, Rule, Var, fact, rename_apart

DEFAULT_MAX_DEPTH = 4


class NoInstanceError(RuntimeError):
    pass


@dataclass(frozen=True)
class InstanceModel:
    depth: int
    nodes: tuple
    edges: tuple
    keys: tuple  # (node, key) pairs
    key_order: tuple
    extra_nodes: tuple = ()

    @property
    def key_of(self) -> dict:
        return dict(self.keys)

    def all_nodes(self) -> tuple:
        return self.nodes + tuple(n for n in self.extra_nodes if n not in self.nodes)

    def facts(self) -> list:
        out = [fact("node", n.name) for n in self.all_nodes()]
        out += [fact("key", n.name, k.name) for n, k in self.keys]
        out += [fact("edge", a.name, f.name, b.name) for a, f, b in self.edges]
        return out

    def with_extras(self, extras, key_order) -> "InstanceModel":
        keys = dict(self.keys)
        for x in extras:
            keys.setdefault(x, key_name(x))
        return InstanceModel(self.depth, self.nodes, self.edges, tuple(keys.items()), tuple(key_order), tuple(extras))

    def successors(self, node) -> list:
        return [b for a, f, b in self.edges if a == node]

    def distance(self, start: Const) -> dict:
        """Breadth-first distance from ``start`` along edges."""
        dist = {start: 0}
        frontier = [start]
        while frontier:
            nxt = []
            for a in frontier:
                for b in sorted(self.successors(a)):
                    if b not in dist:
                        dist[b] = dist[a] + 1
                        nxt.append(b)
            frontier = nxt
        return dist

    def dump(self) -> str:
        return "".join(f"{r}\n" for r in self.facts()) + "".join(
            f"lt({a},{b}).\n" for a, b in zip(self.key_order, self.key_order[1:])
        )

    def describe(self) -> str:
        es = ", ".join(f"{a}-{f}->{b}" if f.name != "default" else f"{a}->{b}" for a, f, b in self.edges)
        return f"depth {self.depth}: {es}; keys {' < '.join(k.name for k in self.key_order)}"


def key_name(node: Const) -> Const:
    n = node.name
    if n.startswith("n") and n[1:].isdigit():
        return Const("k" + n[1:])
    return Const("k" + n)


# --------------------------------------------------------------------------
# meta-interpretation


def _recursive_rules(rules) -> set:
    graph: dict = {}
    for r in rules:
        graph.setdefault(r.head.pred, set()).update(l.atom.pred for l in r.body)

    def reaches(a, b):
        seen, todo = set(), [a]
        while todo:
            p = todo.pop()
            for q in graph.get(p, ()):
                if q == b:
                    return True
                if q not in seen:
                    seen.add(q)
                    todo.append(q)
        return False

    return {i for i, r in enumerate(rules) if any(reaches(l.atom.pred, r.head.pred) or l.atom.pred == r.head.pred for l in r.body)}


def _deref(t, s):
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


def _unify(a, b, s) -> Optional[dict]:
    a, b = _deref(a, s), _deref(b, s)
    if a == b:
        return s
    if isinstance(a, Var):
        s = dict(s)
        s[a] = b
        return s
    if isinstance(b, Var):
        s = dict(s)
        s[b] = a
        return s
    return None


def _unify_args(xs, ys, s):
    for x, y in zip(xs, ys):
        s = _unify(x, y, s)
        if s is None:
            return None
    return s


@dataclass
class _Skeleton:
    subst: dict
    abduced: list
    lts: list


def _skeletons(spec: DataStructureSpec, depth: int) -> Iterator[_Skeleton]:
    rules = list(spec.structural_rules)
    rec = _recursive_rules(rules)
    by_pred: dict = {}
    for i, r in enumerate(rules):
        by_pred.setdefault(r.head.pred, []).append(i)
    for p in by_pred:
        by_pred[p].sort(key=lambda i: (i in rec, i))
    counter = itertools.count()

    def run(goals, s, abduced, lts, used):
        if not goals:
            if used == depth:
                yield _Skeleton(s, abduced, lts)
            return
        lit, rest = goals[0], goals[1:]
        a = lit.atom
        if not lit.positive:
            # checked bottom-up once the instance is built
            yield from run(rest, s, abduced, lts, used)
            return
        if a.pred in BASE_PREDICATES:
            yield from run(rest, s, abduced + [a], lts, used)
            return
        if a.pred == "lt":
            yield from run(rest, s, abduced, lts + [a], used)
            return
        if a.pred in ("eq_num", "eq_node"):
            s2 = _unify(a.args[0], a.args[1], s)
            if s2 is not None:
                yield from run(rest, s2, abduced, lts, used)
            return
        for i in by_pred.get(a.pred, ()):
            cost = 1 if i in rec else 0
            if used + cost > depth:
                continue
            r = rename_apart(rules[i], f"u{next(counter)}")
            s2 = _unify_args(r.head.args, a.args, s) if r.head.arity == a.arity else None
            if s2 is None:
                continue
            yield from run(tuple(r.body) + rest, s2, abduced, lts, used + cost)

    goal = (Literal(Atom(spec.invariant, ()), True),)
    yield from run(goal, {}, [], [], 0)


def _close(sk: _Skeleton) -> Optional[tuple]:
    """Resolve the substitution and merge functional facts (one key per node, one edge per slot)."""
    s = sk.subst
    changed = True
    while changed:
        changed = False
        keys: dict = {}
        slots: dict = {}
        for a in sk.abduced:
            args = [_deref(t, s) for t in a.args]
            if a.pred == "key":
                other = keys.get(args[0])
                if other is not None and other != args[1]:
                    s = _unify(other, args[1], s)
                    if s is None:
                        return None
                    changed = True
                    break
                keys[args[0]] = args[1]
            elif a.pred == "edge":
                slot = (args[0], args[1])
                other = slots.get(slot)
                if other is not None and other != args[2]:
                    s = _unify(other, args[2], s)
                    if s is None:
                        return None
                    changed = True
                    break
                slots[slot] = args[2]
    atoms = {Atom(a.pred, tuple(_deref(t, s) for t in a.args)) for a in sk.abduced}
    lts = {(_deref(a.args[0], s), _deref(a.args[1], s)) for a in sk.lts}
    return atoms, lts


def _name_nodes(spec: DataStructureSpec, atoms) -> dict:
    edges = sorted(
        ((a.args[0], a.args[1], a.args[2]) for a in atoms if a.pred == "edge"),
        key=lambda e: (str(e[1]),),
    )
    labelled = any(f.name != "default" for _, f, _ in edges if isinstance(f, Const))
    names: dict = {}
    path = {spec.start_node: ""}
    frontier = [spec.start_node]
    count = itertools.count(1)
    while frontier:
        nxt = []
        for a in frontier:
            for x, f, b in edges:
                if x != a:
                    continue
                if isinstance(b, Var) and b not in names:
                    if labelled:
                        names[b] = Const(path[a] + f.name[0])
                    else:
                        names[b] = Const(f"n{next(count)}")
                if b not in path:
                    path[b] = names[b].name if isinstance(b, Var) else b.name
                    nxt.append(b)
        frontier = nxt
    nodes = {a.args[0] for a in atoms if a.pred in ("node", "key")} | {e[0] for e in edges} | {e[2] for e in edges}
    spare = itertools.count(1)
    for n in sorted((n for n in nodes if isinstance(n, Var) and n not in names), key=str):
        names[n] = Const(f"u{next(spare)}")
    return names


def _linear_extensions(items, lts) -> Iterator[tuple]:
    items = sorted(items, key=str)
    preds = {x: {a for a, b in lts if b == x} for x in items}

    def go(placed, remaining):
        if not remaining:
            yield tuple(placed)
            return
        for x in remaining:
            if preds[x] <= set(placed):
                yield from go(placed + [x], [y for y in remaining if y != x])

    yield from go([], items)


def _instances_from(spec, depth, sk) -> list:
    closed = _close(sk)
    if closed is None:
        return []
    atoms, lts = closed
    names = _name_nodes(spec, atoms)

    def nm(t):
        return names.get(t, t)

    keys: dict = {}
    for a in atoms:
        if a.pred == "key":
            keys[nm(a.args[0])] = a.args[1]
    key_names = {}
    for node, k in keys.items():
        key_names[k] = key_name(node) if isinstance(k, Var) else k

    def kn(t):
        return key_names.get(t, t)

    for a, b in lts:
        for k in (a, b):
            if isinstance(k, Var) and k not in key_names:
                return []
    order_lts = {(kn(a), kn(b)) for a, b in lts}
    all_keys = set(key_names.values()) | {k for pair in order_lts for k in pair}
    edges = tuple(sorted((nm(a.args[0]), a.args[1], nm(a.args[2])) for a in atoms if a.pred == "edge"))
    node_set = {nm(a.args[0]) for a in atoms if a.pred in ("node", "key")} | {e[0] for e in edges} | {e[2] for e in edges}
    nodes = tuple(sorted(node_set))
    key_pairs = tuple(sorted((n, kn(k)) for n, k in keys.items()))
    out = []
    for order in _linear_extensions(all_keys, order_lts):
        out.append(InstanceModel(depth, nodes, edges, key_pairs, order))
    return out


def evaluate(spec: DataStructureSpec, inst: InstanceModel, extra_rules=()) -> solver.AnswerSet:
    """The unique model of the spec's rules over ``inst``'s facts."""
    program = LogicProgram(tuple(spec.rules) + tuple(inst.facts()) + tuple(extra_rules))
    gp = solver.ground(program, inst.all_nodes(), inst.key_order)
    models = solver.answer_sets(gp)
    if len(models) != 1:
        raise RuntimeError(f"expected exactly one model, found {len(models)}")
    return models[0]


def unfold(spec: DataStructureSpec, depth: int) -> list:
    """Structurally distinct instances built with exactly ``depth`` unfoldings."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    seen = set()
    out = []
    for sk in _skeletons(spec, depth):
        for inst in _instances_from(spec, depth, sk):
            sig = (inst.edges, inst.keys, inst.key_order)
            if sig in seen:
                continue
            seen.add(sig)
            if Atom(spec.invariant, ()) in evaluate(spec, inst):
                out.append(inst)
    out.sort(key=lambda i: (len(i.nodes), [tuple(map(str, e)) for e in i.edges]))
    return out


# --------------------------------------------------------------------------
# least common instance


@dataclass(frozen=True)
class Witness:
    """A block's parameter binding on an instance whose key order places the extra nodes."""

    instance: InstanceModel
    binding: tuple  # (param, value) pairs in parameter order
    block: object = None

    @property
    def mapping(self) -> dict:
        return dict(self.binding)


def placements(base_order, extra_keys) -> Iterator[tuple]:
    """Every way to slot ``extra_keys`` strictly inside ``base_order``, leftmost gaps first.

    The outermost keys act as sentinels, so nothing goes below the first or
    above the last.
    """
    base = list(base_order)
    if not extra_keys:
        yield tuple(base)
        return
    if len(base) < 2:
        return
    inner = base[1:-1]
    n, m = len(inner), len(extra_keys)
    for positions in itertools.combinations(range(n + m), m):
        for perm in itertools.permutations(extra_keys):
            order, it_b, it_e = [], iter(inner), iter(perm)
            for i in range(n + m):
                order.append(next(it_e) if i in positions else next(it_b))
            yield (base[0],) + tuple(order) + (base[-1],)


def precondition_query(spec, block, name="pre_query") -> tuple:
    params = block_params(spec, block)
    ren = lift(block, params)
    head = Atom(name, tuple(ren[p] for p in params))
    body = tuple(rename_literal(l, ren) for l in block.pre)
    return Rule(head, body), params


def block_bindings(spec, block, inst: InstanceModel) -> list:
    rule, params = precondition_query(spec, block)
    model = evaluate(spec, inst, [rule])
    return [tuple(zip(params, a.args)) for a in model.with_pred(rule.head.pred)]


def find_witness(spec, block, inst: InstanceModel) -> Optional[Witness]:
    extras = tuple(spec.extra_nodes)
    for order in placements(inst.key_order, tuple(key_name(x) for x in extras)):
        aug = inst.with_extras(extras, order)
        # an extra node only stands for the parameter of the same name
        found = [b for b in block_bindings(spec, block, aug) if all(v == p or v not in extras for p, v in b)]
        if found:
            return Witness(aug, found[0], block)
    return None


def find_least_common_instance(spec: DataStructureSpec, max_depth: int = DEFAULT_MAX_DEPTH):
    """Smallest instance on which every block of every operation applies."""
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    blocks = list(spec.blocks())
    last_missing = None
    for d in range(max_depth + 1):
        for inst in unfold(spec, d):
            witnesses = {}
            for op, b in blocks:
                w = find_witness(spec, b, inst)
                if w is None:
                    last_missing = f"{op.name}/{b.block_id}"
                    break
                witnesses[(op.name, b.block_id)] = w
            else:
                extras = tuple(spec.extra_nodes)
                order = next(placements(inst.key_order, tuple(key_name(x) for x in extras)))
                return inst.with_extras(extras, order), witnesses
    raise NoInstanceError(f"no instance up to depth {max_depth} satisfies the precondition of {last_missing}")


def overlapping_blocks(spec: DataStructureSpec, depth: int = 2) -> list:
    """Pairs of blocks of one operation whose preconditions hold together somewhere."""
    out = []
    for op in spec.operations:
        for b1, b2 in itertools.combinations(op.blocks, 2):
            both = type(b1)(f"{b1.block_id}+{b2.block_id}", b1.pre + b2.pre, b1.steps + b2.steps, ())
            hit = False
            for d in range(depth + 1):
                for inst in unfold(spec, d):
                    if find_witness(spec, both, inst) is not None:
                        hit = True
                        break
                if hit:
                    break
            if hit:
                out.append((op.name, b1.block_id, b2.block_id))
    return out
