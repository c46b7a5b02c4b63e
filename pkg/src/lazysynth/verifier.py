"""Concrete execution of synthesized code against interleaved interference.

This module is a second route to the same answers the reasoning tasks give,
so it deliberately avoids the solver, the reifier and the interference
theory.  It evaluates the spec's rules with its own stratified bottom-up
evaluator over explicit heaps, runs the subject thread statement by
statement, and lets other threads fire whole blocks atomically between
statements.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

from .kb import DataStructureSpec, LinkAction, atom_text, block_params, lift, param_sorts
from .logic import Atom, Const, Literal, Var
from .unfolder import InstanceModel, key_name, placements, unfold

DEFAULT_STATE_CAP = 2_000_000


class VerificationLimit(RuntimeError):
    """Raised when exploration exceeds the state cap; carries partial coverage."""

    def __init__(self, msg: str, stats: dict):
        super().__init__(msg)
        self.stats = stats


# --------------------------------------------------------------------------
# a small stratified evaluator


def _strata(rules) -> list:
    preds = {r.head.pred for r in rules}
    level = {p: 0 for p in preds}
    for _ in range(len(preds) + 1):
        changed = False
        for r in rules:
            h = r.head.pred
            for l in r.body:
                q = l.atom.pred
                if q not in level:
                    continue
                need = level[q] + (0 if l.positive else 1)
                if need > level[h]:
                    level[h] = need
                    changed = True
        if not changed:
            break
    else:
        raise ValueError("rules are not stratified")
    out: dict = {}
    for r in rules:
        out.setdefault(level[r.head.pred], []).append(r)
    return [out[k] for k in sorted(out)]


class _Rel:
    """A set of tuples with hash indexes on whichever positions get queried."""

    def __init__(self):
        self.rows: set = set()
        self._idx: dict = {}

    def __contains__(self, row) -> bool:
        return row in self.rows

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def add(self, row) -> bool:
        if row in self.rows:
            return False
        self.rows.add(row)
        for pos, idx in self._idx.items():
            idx.setdefault(tuple(row[i] for i in pos), []).append(row)
        return True

    def lookup(self, pattern) -> list:
        pos = tuple(i for i, p in enumerate(pattern) if not isinstance(p, Var))
        if not pos:
            return list(self.rows)
        idx = self._idx.get(pos)
        if idx is None:
            idx = self._idx[pos] = {}
            for row in self.rows:
                if len(row) == len(pattern):
                    idx.setdefault(tuple(row[i] for i in pos), []).append(row)
        return list(idx.get(tuple(pattern[i] for i in pos), ()))


def _walk(t, s):
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


class Evaluator:
    """Stratified model of the spec rules over a concrete heap.

    Predicates in ``lazy`` (the shape definition) are not materialized: their
    rules range over key intervals, so they are proved top-down for ground
    goals only, with tabling.  Everything else is computed bottom-up.
    """

    def __init__(self, rules, key_rank: dict, nodes=(), lazy=frozenset()):
        rules = list(rules)
        self.lazy = frozenset(lazy)
        self.strata = [[r for r in st if r.head.pred not in self.lazy] for st in _strata(rules)]
        self.lazy_rules: dict = {}
        for r in rules:
            if r.head.pred in self.lazy:
                self.lazy_rules.setdefault(r.head.pred, []).append(r)
        self.rank = key_rank
        self.nodes = tuple(nodes)
        self._stack: set = set()
        self._hits: set = set()

    def _builtin(self, a: Atom, s) -> bool:
        x, y = (_walk(t, s) for t in a.args)
        if a.pred == "lt":
            return self.rank[x] < self.rank[y]
        return x == y

    def _ground(self, lit: Literal, s) -> bool:
        return all(not isinstance(_walk(t, s), Var) for t in lit.atom.args)

    def _deferred(self, lit: Literal) -> bool:
        return lit.is_builtin or not lit.positive or lit.atom.pred in self.lazy

    def _check(self, lit: Literal, s, db) -> bool:
        if lit.is_builtin:
            return self._builtin(lit.atom, s) == lit.positive
        args = tuple(_walk(t, s) for t in lit.atom.args)
        if lit.atom.pred in self.lazy:
            return self.prove(Atom(lit.atom.pred, args), db) == lit.positive
        return (args in db.get(lit.atom.pred, ())) == lit.positive

    def solve(self, body, db, s=None):
        """Substitutions satisfying ``body`` in ``db`` (pred -> set of arg tuples)."""
        s = {} if s is None else s
        if not body:
            yield s
            return
        # cheap filters first; shape proofs only once plain lookups are exhausted
        pick = None
        for i, lit in enumerate(body):
            if self._deferred(lit) and lit.atom.pred not in self.lazy and self._ground(lit, s):
                pick = i
                break
        if pick is None:
            plain = [i for i, lit in enumerate(body) if not self._deferred(lit)]
            ground = [i for i in plain if self._ground(body[i], s)]
            if ground or not plain:
                pick = ground[0] if ground else next(
                    (i for i, lit in enumerate(body) if lit.atom.pred in self.lazy and self._ground(lit, s)), None
                )
        if pick is not None:
            lit = body[pick]
            if self._check(lit, s, db) if self._deferred(lit) else self._ground_fact(lit, s, db):
                yield from self.solve(body[:pick] + body[pick + 1 :], db, s)
            return
        plain = [i for i, lit in enumerate(body) if not self._deferred(lit)]
        if plain:
            i = min(plain, key=lambda j: len(db.get(body[j].atom.pred, ())))
            lit = body[i]
        else:
            # only builtins left with free variables: range them over their sort
            lit = next((l for l in body if l.is_builtin), None)
            if lit is None:
                raise ValueError(f"unsafe body {body}")
            v = next(_walk(t, s) for t in lit.atom.args if isinstance(_walk(t, s), Var))
            for c in self.nodes if lit.atom.pred == "eq_node" else self.rank:
                yield from self.solve(body, db, {**s, v: c})
            return
        rest = body[:i] + body[i + 1 :]
        pattern = [_walk(t, s) for t in lit.atom.args]
        rel = db.get(lit.atom.pred)
        for tup in rel.lookup(pattern) if rel is not None else ():
            if len(tup) != len(pattern):
                continue
            s2 = dict(s)
            for p, v in zip(pattern, tup):
                if isinstance(p, Var):
                    p = _walk(p, s2)
                    if isinstance(p, Var):
                        s2[p] = v
                        continue
                if p != v:
                    break
            else:
                yield from self.solve(rest, db, s2)

    def _ground_fact(self, lit: Literal, s, db) -> bool:
        return tuple(_walk(t, s) for t in lit.atom.args) in db.get(lit.atom.pred, ())

    def prove(self, goal: Atom, db) -> bool:
        """Top-down proof of a ground shape goal.

        A goal met again on its own proof path counts as false there; a false
        result that relied on such an open goal is not tabled.
        """
        memo = db.setdefault(("memo",), {})
        if goal in memo:
            return memo[goal]
        if goal in self._stack:
            self._hits.add(goal)
            return False
        outer, self._hits = self._hits, set()
        self._stack.add(goal)
        found = False
        for r in self.lazy_rules.get(goal.pred, ()):
            if len(r.head.args) != len(goal.args):
                continue
            s: Optional[dict] = {}
            for h, g in zip(r.head.args, goal.args):
                if isinstance(h, Var):
                    if s.get(h, g) != g:
                        s = None
                        break
                    s[h] = g
                elif h != g:
                    s = None
                    break
            if s is not None and next(self.solve(tuple(r.body), db, s), None) is not None:
                found = True
                break
        self._stack.discard(goal)
        hits = self._hits - {goal}
        if found or not hits:
            memo[goal] = found
        self._hits = outer | hits
        return found

    def model(self, facts) -> dict:
        db: dict = {}
        for a in facts:
            db.setdefault(a.pred, _Rel()).add(a.args)
        for stratum in self.strata:
            here = {r.head.pred for r in stratum}
            delta = self._fire(stratum, db, [(r, tuple(r.body)) for r in stratum])
            # semi-naive: later rounds join at least one literal against last round's news
            while delta:
                jobs = []
                for r in stratum:
                    for i, l in enumerate(r.body):
                        if l.positive and l.atom.pred in here and l.atom.pred in delta:
                            d = "\u0394" + l.atom.pred
                            db[d] = delta[l.atom.pred]
                            jobs.append((r, r.body[:i] + (Literal(Atom(d, l.atom.args)),) + r.body[i + 1 :]))
                delta = self._fire(stratum, db, jobs)
            for k in [k for k in db if isinstance(k, str) and k.startswith("\u0394")]:
                del db[k]
        return db

    def _fire(self, stratum, db, jobs) -> dict:
        new: dict = {}
        for r, body in jobs:
            for s in list(self.solve(body, db)):
                args = tuple(_walk(t, s) for t in r.head.args)
                if db.setdefault(r.head.pred, _Rel()).add(args):
                    new.setdefault(r.head.pred, _Rel()).add(args)
        return new

    def holds(self, lit: Literal, db) -> bool:
        return self._check(lit, {}, db)


# --------------------------------------------------------------------------
# heaps and statements


@dataclass(frozen=True)
class Heap:
    edges: frozenset  # (source, field, dest)

    def link(self, s: LinkAction) -> "Heap":
        kept = {e for e in self.edges if not (e[0] == s.source and e[1] == s.field)}
        kept.add((s.source, s.field, s.dest))
        return Heap(frozenset(kept))

    def reachable(self, start) -> set:
        seen, todo = {start}, [start]
        while todo:
            a = todo.pop()
            for x, _, b in self.edges:
                if x == a and b not in seen:
                    seen.add(b)
                    todo.append(b)
        return seen

    def atoms(self) -> list:
        return sorted(atom_text(Atom("edge", e)) for e in self.edges)


@dataclass(frozen=True)
class Stmt:
    kind: str  # lock, validate, step, unlock
    arg: object = None

    def __str__(self) -> str:
        if self.kind == "validate":
            return "validate"
        return f"{self.kind}({self.arg})" if self.kind != "step" else str(self.arg)


def statements(code, mapping: dict) -> list:
    out = [Stmt("lock", mapping.get(n, n)) for n in code.locks]
    out.append(Stmt("validate"))
    out += [Stmt("step", s.substitute(mapping)) for s in code.steps]
    out += [Stmt("unlock", mapping.get(n, n)) for n in code.unlocks]
    return out


def schedules(n: int, k: int):
    """Every placement of ``k`` interference slots among ``n`` subject statements."""
    for slots in itertools.combinations(range(n + k), k):
        yield tuple("E" if i in slots else "S" for i in range(n + k))


# --------------------------------------------------------------------------
# reports


@dataclass
class Counterexample:
    instance: str
    binding: dict
    violation: str
    trace: list  # (time, label, edge atoms)

    def render(self) -> str:
        out = [f"violation: {self.violation}", f"instance: {self.instance}"]
        out.append("binding: " + ", ".join(f"{k}={v}" for k, v in self.binding.items()))
        for t, label, atoms in self.trace:
            out.append(f"  {t} {label}: {' '.join(atoms)}")
        return "\n".join(out) + "\n"


@dataclass
class VerificationReport:
    ok: bool
    counterexample: Optional[Counterexample] = None
    stats: dict = field(default_factory=dict)


class _Found(Exception):
    def __init__(self, cex):
        self.cex = cex


# --------------------------------------------------------------------------
# exploration


@dataclass(frozen=True)
class _EnvBlock:
    op: str
    block: object
    params: tuple
    query: tuple
    nodes: tuple
    extras: tuple


def _env_blocks(spec: DataStructureSpec) -> list:
    out = []
    extras = set(spec.extra_nodes)
    for op, b in spec.blocks():
        params = tuple(block_params(spec, b))
        ren = lift(b, params)
        sorts = param_sorts(spec, b)
        query = tuple(Literal(Atom(l.atom.pred, tuple(ren.get(t, t) for t in l.atom.args)), l.positive) for l in b.pre)
        nodes = tuple(p for p in params if sorts[p] == "node")
        out.append(_EnvBlock(op.name, b, params, query, nodes, tuple(p for p in params if p in extras)))
    return out


def _with_pool(spec, inst: InstanceModel, per_gap: int) -> tuple:
    """Add fresh nodes for other threads in every key gap; returns (instance, pool)."""
    order = list(inst.key_order)
    out, pool = order[:1], []
    for k in order[1:]:
        for _ in range(per_gap):
            node = Const(f"e{len(pool) + 1}")
            pool.append(node)
            out.append(key_name(node))
        out.append(k)
    return inst.with_extras(tuple(inst.extra_nodes) + tuple(pool), out), tuple(pool)


class _Run:
    def __init__(self, spec, code, block, inst, pool, interferers, hostile, cap, stats):
        self.spec, self.code, self.block = spec, code, block
        self.inst, self.pool = inst, set(pool)
        self.k, self.hostile, self.cap, self.stats = interferers, hostile, cap, stats
        rank = {k: i for i, k in enumerate(inst.key_order)}
        shape = {r.head.pred for r in spec.structural_rules}
        self.ev = Evaluator(spec.rules, rank, inst.all_nodes(), lazy=shape)
        self.static = [Atom("node", (n,)) for n in inst.all_nodes()] + [Atom("key", (n, k)) for n, k in inst.keys]
        self.private = set(inst.extra_nodes) - self.pool
        self.nodes = set(inst.all_nodes())
        self.env = _env_blocks(spec)
        self._cache: dict = {}
        self._inv: dict = {}
        self._moves: dict = {}
        self.inv = Atom(spec.invariant, ())

    def model(self, heap: Heap) -> dict:
        m = self._cache.get(heap.edges)
        if m is None:
            facts = self.static + [Atom("edge", e) for e in heap.edges]
            m = self._cache[heap.edges] = self.ev.model(facts)
        return m

    def subject_bindings(self, heap) -> list:
        eb = next(e for e in self.env if e.block is self.block)
        out = []
        for s in self.ev.solve(eb.query, self.model(heap)):
            m = {p: s[Var(p.name.upper())] for p in eb.params}
            # an extra node only plays its own role, and other threads' nodes are off limits
            if all(v == p or v not in self.private for p, v in m.items()) and not any(v in self.pool for v in m.values()):
                out.append(m)
        return out

    def invariant(self, heap) -> bool:
        v = self._inv.get(heap.edges)
        if v is None:
            v = self._inv[heap.edges] = self.ev.holds(Literal(self.inv), self.model(heap))
        return v

    def _candidates(self, heap) -> list:
        """Every environment move enabled on ``heap``, ignoring locks: (label, steps, nodes it needs)."""
        out = self._moves.get(heap.edges)
        if out is not None:
            return out
        db = self.model(heap)
        # unlinked nodes are retired; only live ones and unused fresh ones are fair game
        live = heap.reachable(self.spec.start_node)
        out = []
        for eb in self.env:
            for s in self.ev.solve(eb.query, db):
                m = {p: s[Var(p.name.upper())] for p in eb.params}
                if any(v in self.private or (isinstance(v, Const) and v in self.nodes and v not in live and v not in self.pool) for v in m.values()):
                    continue
                steps = [st.substitute(m) for st in eb.block.steps]
                needs = frozenset({m[p] for p in eb.nodes} | {st.source for st in steps})
                out.append((f"{eb.op}/{eb.block.block_id}" + str(tuple(str(m[p]) for p in eb.params)), steps, needs))
        self._moves[heap.edges] = out
        return out

    def env_moves(self, heap, held) -> list:
        return [(label, steps) for label, steps, needs in self._candidates(heap) if self.hostile or not needs & held]

    def explore(self, heap0: Heap, mapping: dict):
        """Depth-first over every interleaving of the subject with up to ``k`` atomic environment moves."""
        bind = lambda l: Literal(Atom(l.atom.pred, tuple(mapping.get(t, t) for t in l.atom.args)), l.positive)
        ctx = _Ctx(
            statements(self.code, mapping),
            [bind(l) for l in self.code.validation],
            [bind(l) for l in self.code.post],
            [l for l in map(bind, self.code.unfalsifiable) if self.ev.holds(l, self.model(heap0))],
            mapping,
        )
        self._go(ctx, 0, 0, heap0, frozenset(), None, [("t0", "start", heap0)], set())

    def _fail(self, msg, trace, mapping):
        rows = [(t, label, h.atoms()) for t, label, h in trace]
        raise _Found(Counterexample(self.inst.describe(), {str(k): str(v) for k, v in mapping.items()}, msg, rows))

    def _go(self, ctx, pc, used, heap, held, validated, trace, seen):
        key = (pc, used, heap.edges, held, validated)
        if key in seen:
            return
        seen.add(key)
        self.stats["states"] += 1
        if self.stats["states"] > self.cap:
            raise VerificationLimit("state cap exceeded", dict(self.stats))
        if not self.invariant(heap):
            self._fail(f"invariant {self.inv.pred} false", trace, ctx.mapping)
        t = f"t{len(trace)}"
        moves = self.env_moves(heap, held) if used < self.k else []
        if pc == len(ctx.stmts) and not moves:
            self.stats["runs"] += 1
        for label, steps in moves:
            h = heap
            for st in steps:
                h = h.link(st)
            self._go(ctx, pc, used + 1, h, held, validated, trace + [(t, "env " + label, h)], seen)
        if pc < len(ctx.stmts):
            self._subject(ctx, pc, used, heap, held, validated, trace, seen, t)

    def _subject(self, ctx, pc, used, heap, held, validated, trace, seen, t):
        st = ctx.stmts[pc]
        nxt = lambda h, held2, v: self._go(ctx, pc + 1, used, h, held2, v, trace + [(t, str(st), h)], seen)
        if st.kind == "lock":
            return nxt(heap, held | {st.arg}, validated)
        if st.kind == "unlock":
            return nxt(heap, held - {st.arg}, validated)
        if st.kind == "validate":
            db = self.model(heap)
            for l in ctx.start_true:
                if not self.ev.holds(l, db):
                    self._fail(f"unfalsifiable conjunct {l} became false", trace, ctx.mapping)
            return nxt(heap, held, all(self.ev.holds(l, db) for l in ctx.validation))
        # a link step: skipped when validation failed
        if not validated:
            return nxt(heap, held, validated)
        h = heap.link(st.arg)
        last = pc + 1 == len(ctx.stmts) or ctx.stmts[pc + 1].kind != "step"
        if last:
            db = self.model(h)
            bad = [l for l in ctx.post if not self.ev.holds(l, db)]
            if bad:
                msg = "postcondition " + ", ".join(str(l) for l in bad) + " false after the last step"
                self._fail(msg, trace + [(t, str(st), h)], ctx.mapping)
        return nxt(h, held, validated)


@dataclass
class _Ctx:
    stmts: list
    validation: list
    post: list
    start_true: list
    mapping: dict


def _block_of(spec, code):
    for b in spec.operation(code.operation).blocks:
        if b.block_id == code.block_id:
            return b
    raise ValueError(f"no block {code.block_id} in {code.operation}")


def verify(
    code,
    spec: DataStructureSpec,
    max_depth: int = 3,
    interferers: int = 1,
    hostile: bool = False,
    cap: int = DEFAULT_STATE_CAP,
) -> VerificationReport:
    """Run ``code`` on every instance up to ``max_depth`` against ``interferers`` atomic operations."""
    if interferers < 1:
        raise ValueError("need at least one interferer")
    block = _block_of(spec, code)
    extras = tuple(spec.extra_nodes)
    per_gap = interferers * max(
        (sum(1 for p in block_params(spec, b) if p in set(extras)) for _, b in spec.blocks()), default=0
    )
    stats = {"instances": 0, "bindings": 0, "runs": 0, "states": 0}
    try:
        for d in range(max_depth + 1):
            for base in unfold(spec, d):
                for order in placements(base.key_order, tuple(key_name(x) for x in extras)):
                    inst, pool = _with_pool(spec, base.with_extras(extras, order), per_gap)
                    stats["instances"] += 1
                    run = _Run(spec, code, block, inst, pool, interferers, hostile, cap, stats)
                    heap0 = Heap(frozenset(inst.edges))
                    bindings = run.subject_bindings(heap0)
                    for mapping in bindings:
                        stats["bindings"] += 1
                        run.explore(heap0, mapping)
                    # extras the subject never binds are private and idle, so their keys cannot matter
                    if bindings and not any(v in run.private for m in bindings for v in m.values()):
                        break
    except _Found as f:
        return VerificationReport(False, f.cex, stats)
    return VerificationReport(True, None, stats)


# --------------------------------------------------------------------------
# mutations


MUTATIONS = ("dropped-lock", "swapped-steps", "skipped-validation")


def mutate(code, kind: str):
    """A deliberately broken copy of ``code``."""
    if kind == "dropped-lock":
        # one missing lock is often covered by its neighbours, so drop the first two
        gone = set(code.locks[:2])
        return replace(
            code,
            locks=tuple(n for n in code.locks if n not in gone),
            unlocks=tuple(n for n in code.unlocks if n not in gone),
        )
    if kind == "swapped-steps":
        return replace(code, steps=tuple(reversed(code.steps)))
    if kind == "skipped-validation":
        return replace(code, validation=())
    raise ValueError(f"unknown mutation {kind}")
