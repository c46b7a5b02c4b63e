"""Bounded stable-model engine.

Programs are grounded bottom-up over a finite constant domain, then answer
sets are enumerated for programs that are stratified once the abducible
(choice) atoms are fixed.  Choice pairs look like::

    a :- B, not na.
    na :- B, not a.

with ``a``'s predicate declared abducible.  The search walks the ground
dependency graph in topological order and branches only on abducible atoms
whose body holds, so the usual generate-and-test blowup is avoided.
"""

from __future__ import annotations

import itertools
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .logic import (
    Atom,
    Const,
    Literal,
    LogicProgram,
    Rule,
    StructuralError,
    Var,
    unsafe_variables,
)

log = logging.getLogger(__name__)

DEFAULT_CAP = 2 ** 20


_settings: dict = {"cap": DEFAULT_CAP, "dump_dir": None, "dumped": 0}


def configure(cap: Optional[int] = None, dump_dir=None) -> None:
    """Process-wide enumeration cap and an optional directory receiving every program passed to ``ground``."""
    if cap is not None:
        if cap < 1:
            raise ValueError("cap must be positive")
        _settings["cap"] = cap
    _settings["dump_dir"] = dump_dir


def _dump(program: LogicProgram, key_order) -> None:
    d = _settings["dump_dir"]
    if d is None:
        return
    os.makedirs(d, exist_ok=True)
    _settings["dumped"] += 1
    path = os.path.join(d, f"theory_{_settings['dumped']:04d}.lp")
    with open(path, "w") as fh:
        fh.write("% key order: " + " < ".join(str(k) for k in key_order) + "\n")
        fh.write(str(program))


class GroundingError(StructuralError):
    pass


class StratificationError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


@dataclass
class GroundProgram:
    rules: list
    atoms: list
    abducibles: frozenset = frozenset()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    exclusive: frozenset = frozenset()

    def index(self) -> dict:
        return {a: i for i, a in enumerate(self.atoms)}

    def __str__(self) -> str:
        return "".join(f"{r}\n" for r in self.rules)


@dataclass(frozen=True)
class AnswerSet:
    atoms: frozenset

    def __contains__(self, item) -> bool:
        return item in self.atoms

    def __iter__(self):
        return iter(sorted(self.atoms))

    def __len__(self) -> int:
        return len(self.atoms)

    def with_pred(self, pred: str) -> list:
        return sorted(a for a in self.atoms if a.pred == pred)


# --------------------------------------------------------------------------
# grounding


class _KeyOrder:
    def __init__(self, keys: Sequence[Const]):
        self.rank = {k: i for i, k in enumerate(keys)}
        self.keys = list(keys)

    def check(self, c, pred):
        if c not in self.rank:
            raise GroundingError(f"builtin {pred} applied to non-key constant {c}")

    def evaluate(self, a: Atom) -> bool:
        x, y = a.args
        if a.pred == "lt":
            self.check(x, "lt")
            self.check(y, "lt")
            return self.rank[x] < self.rank[y]
        if a.pred == "eq_num":
            self.check(x, "eq_num")
            self.check(y, "eq_num")
            return x == y
        if a.pred == "eq_node":
            return x == y
        raise GroundingError(f"unknown builtin {a.pred}")


class _Store:
    """Ground atoms indexed by predicate and by (predicate, position, value)."""

    def __init__(self):
        self.by_pred: dict = {}
        self.by_arg: dict = {}
        self.all: set = set()

    def add(self, a: Atom) -> bool:
        if a in self.all:
            return False
        self.all.add(a)
        self.by_pred.setdefault(a.pred, []).append(a)
        for i, t in enumerate(a.args):
            self.by_arg.setdefault((a.pred, i, t), []).append(a)
        return True

    def candidates(self, pattern: Atom, binding: dict) -> list:
        best = None
        for i, t in enumerate(pattern.args):
            if isinstance(t, Var):
                t = binding.get(t)
                if t is None:
                    continue
            bucket = self.by_arg.get((pattern.pred, i, t), ())
            if best is None or len(bucket) < len(best):
                best = bucket
                if not best:
                    break
        if best is None:
            best = self.by_pred.get(pattern.pred, ())
        return best


def _match(pattern: Atom, fact: Atom, binding: dict) -> Optional[dict]:
    if len(pattern.args) != len(fact.args):
        return None
    out = binding
    for p, f in zip(pattern.args, fact.args):
        if isinstance(p, Var):
            bound = out.get(p)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[p] = f
            elif bound != f:
                return None
        elif p != f:
            return None
    return out


class _RulePlan:
    def __init__(self, rule: Rule):
        self.rule = rule
        self.positive = [l.atom for l in rule.body if l.positive and not l.is_builtin]
        self.builtins = [l for l in rule.body if l.is_builtin]
        self.negative = [l.atom for l in rule.body if not l.positive and not l.is_builtin]
        bound = set()
        for a in self.positive:
            bound.update(a.variables())
        self.free = sorted((v for v in rule.variables() if v not in bound), key=lambda v: v.name)
        key_vars = set()
        for l in self.builtins:
            if l.atom.pred in ("lt", "eq_num"):
                key_vars.update(l.atom.variables())
        self.free_is_key = [v in key_vars for v in self.free]
        # the rest are checked during the join
        self.free_builtins = [l for l in self.builtins if any(v in self.free for v in l.atom.variables())]
        self._orders: dict = {}

    def order(self, first: Optional[int]) -> list:
        """Join order of positive literals, starting from ``first`` if given."""
        if first in self._orders:
            return self._orders[first]
        remaining = list(range(len(self.positive)))
        seq = []
        bound: set = set()
        if first is not None:
            remaining.remove(first)
            seq.append(first)
            bound.update(self.positive[first].variables())
        while remaining:
            def score(i):
                a = self.positive[i]
                unbound = sum(1 for t in a.args if isinstance(t, Var) and t not in bound)
                return (unbound, i)
            nxt = min(remaining, key=score)
            remaining.remove(nxt)
            seq.append(nxt)
            bound.update(self.positive[nxt].variables())
        self._orders[first] = seq
        return seq

    def checks(self, first: Optional[int]) -> list:
        """Builtins to test after k literals of the join, as soon as their variables are bound."""
        key = ("checks", first)
        if key in self._orders:
            return self._orders[key]
        seq = self.order(first)
        out = [[] for _ in range(len(seq) + 1)]
        bound: set = set()
        pending = [l for l in self.builtins if not any(v in self.free for v in l.atom.variables())]
        for k in range(len(seq) + 1):
            if k:
                bound.update(self.positive[seq[k - 1]].variables())
            for l in list(pending):
                if set(l.atom.variables()) <= bound:
                    out[k].append(l)
                    pending.remove(l)
        self._orders[key] = out
        return out


def _joins(plan: _RulePlan, store: _Store, delta: Optional[_Store], first: Optional[int], order_: "_KeyOrder" = None) -> Iterator[dict]:
    order = plan.order(first)
    checks = plan.checks(first) if order_ is not None else [()] * (len(order) + 1)

    def walk(k: int, binding: dict):
        for lit in checks[k]:
            if order_.evaluate(lit.atom.substitute(binding)) != lit.positive:
                return
        if k == len(order):
            yield binding
            return
        i = order[k]
        pattern = plan.positive[i]
        if first is not None and i == first:
            source, skip = delta, None
        else:
            # earlier positions read only old atoms so each join is found once
            source, skip = store, (delta.all if first is not None and i < first else None)
        for f in list(source.candidates(pattern, binding)):
            if skip is not None and f in skip:
                continue
            b = _match(pattern, f, binding)
            if b is not None:
                yield from walk(k + 1, b)

    yield from walk(0, {})


def relevant_slice(program: LogicProgram, roots: Iterable[str]) -> LogicProgram:
    """Keep only rules whose head predicate some root or constraint depends on.

    Dropped rules never influence the kept atoms, so brave and cautious
    answers about the roots are unchanged as long as the dropped part has a
    model (always the case for the stratified theories built here).
    """
    deps: dict = {}
    todo = list(roots)
    for r in program.rules:
        body = [l.atom.pred for l in r.body]
        if r.head is None:
            todo.extend(body)
        else:
            deps.setdefault(r.head.pred, set()).update(body)
    keep: set = set()
    while todo:
        p = todo.pop()
        if p in keep:
            continue
        keep.add(p)
        todo.extend(deps.get(p, ()))
    rules = tuple(r for r in program.rules if r.head is None or r.head.pred in keep)
    return LogicProgram(rules, program.abducibles & keep, program.builtins, program.exclusive & keep)


def ground(program: LogicProgram, domain: Iterable[Const], key_order: Sequence[Const]) -> GroundProgram:
    """Instantiate ``program`` bottom-up; builtins are evaluated away."""
    for r in program.rules:
        bad = unsafe_variables(r)
        if bad:
            raise GroundingError(f"unsafe rule {r}: variable {sorted(v.name for v in bad)[0]}")
    program.predicates()
    _dump(program, key_order)

    order = _KeyOrder(key_order)
    domain = sorted(set(domain) | program.constants() | set(key_order))
    plans = [_RulePlan(r) for r in program.rules]

    possible = _Store()
    seen_rules: set = set()
    out_rules: list = []
    certain: set = set()

    def emit(plan: _RulePlan, binding: dict, new: _Store):
        choices = []
        for v, is_key in zip(plan.free, plan.free_is_key):
            choices.append(order.keys if is_key else domain)
        for combo in itertools.product(*choices) if choices else [()]:
            b = dict(binding)
            b.update(zip(plan.free, combo))
            ok = True
            for lit in plan.free_builtins:
                if order.evaluate(lit.atom.substitute(b)) != lit.positive:
                    ok = False
                    break
            if not ok:
                continue
            head = plan.rule.head.substitute(b) if plan.rule.head is not None else None
            pos = tuple(a.substitute(b) for a in plan.positive)
            negs = tuple(a.substitute(b) for a in plan.negative)
            if any(a in certain for a in negs):
                continue
            g = Rule(head, tuple(Literal(a, True) for a in pos) + tuple(Literal(a, False) for a in negs))
            if g in seen_rules:
                continue
            seen_rules.add(g)
            out_rules.append(g)
            if head is not None and not negs and all(a in certain for a in pos):
                certain.add(head)
            if head is not None and head not in possible.all and new is not None:
                new.add(head)

    # Rules without naf run to saturation first, so that atoms they make
    # certain can cut naf rules before those spawn spurious instances.
    rule_plans = [p for p in plans if p.rule.head is not None]
    strict = [p for p in rule_plans if not p.negative]
    loose = [p for p in rule_plans if p.negative]
    delta = _Store()
    for plan in rule_plans:
        if not plan.positive:
            for b in _joins(plan, possible, None, None, order):
                emit(plan, b, delta)
    pending = _Store()
    while True:
        while delta.all:
            for a in delta.all:
                possible.add(a)
                pending.add(a)
            new = _Store()
            for plan in strict:
                for i, pattern in enumerate(plan.positive):
                    if pattern.pred in delta.by_pred:
                        for b in _joins(plan, possible, delta, i, order):
                            emit(plan, b, new)
            delta = new
        if not pending.all:
            break
        new = _Store()
        for plan in loose:
            for i, pattern in enumerate(plan.positive):
                if pattern.pred in pending.by_pred:
                    for b in _joins(plan, possible, pending, i, order):
                        emit(plan, b, new)
        pending = _Store()
        delta = new

    # Prune with the well-founded model before grounding constraints, whose
    # pairwise joins are the expensive part.
    true, maybe = well_founded(out_rules)
    kept = _simplify(out_rules, true, maybe)
    store = _Store()
    for a in maybe:
        store.add(a)
    out_rules = []
    for plan in plans:
        if plan.rule.head is None:
            for b in _joins(plan, store, None, None, order):
                emit(plan, b, None)
    kept += _simplify(out_rules, true, maybe)
    atoms = sorted({r.head for r in kept if r.head is not None} | {l.atom for r in kept for l in r.body})
    return GroundProgram(kept, atoms, program.abducibles, exclusive=program.exclusive)


def well_founded(rules) -> tuple:
    """Alternating fixpoint: (atoms true in every stable model, atoms possibly true)."""
    rules = [r for r in rules if r.head is not None]
    maybe = _least(rules, lambda neg: True)
    true: set = set()
    while True:
        t2 = _least(rules, lambda neg, m=maybe: not any(a in m for a in neg))
        m2 = _least(rules, lambda neg, t=t2: not any(a in t for a in neg))
        if t2 == true and m2 == maybe:
            return true, maybe
        true, maybe = t2, m2


def _least(rules, neg_ok) -> set:
    """Least model of the rules whose negative body passes ``neg_ok``."""
    watch: dict = {}
    count = []
    heads = []
    out: set = set()
    todo = []
    for i, r in enumerate(rules):
        if not neg_ok([l.atom for l in r.body if not l.positive]):
            count.append(-1)
            heads.append(None)
            continue
        pos = {l.atom for l in r.body if l.positive}
        count.append(len(pos))
        heads.append(r.head)
        for a in pos:
            watch.setdefault(a, []).append(i)
        if not pos:
            todo.append(r.head)
    while todo:
        a = todo.pop()
        if a in out:
            continue
        out.add(a)
        for i in watch.get(a, ()):
            count[i] -= 1
            if count[i] == 0:
                todo.append(heads[i])
    return out


def _simplify(rules, true: set, maybe: set) -> list:
    """Drop rules that can never fire; naf on atoms that can never hold is trivially true."""
    out = []
    for r in rules:
        if any((l.positive and l.atom not in maybe) or (not l.positive and l.atom in true) for l in r.body):
            continue
        body = tuple(l for l in r.body if l.positive or l.atom in maybe)
        out.append(Rule(r.head, body) if len(body) != len(r.body) else r)
    return out


# --------------------------------------------------------------------------
# answer sets


class _Compiled:
    """Integer form of a ground program plus the search order."""

    def __init__(self, gp: GroundProgram, abducibles: frozenset):
        atoms = list(gp.atoms)
        idx = {a: i for i, a in enumerate(atoms)}

        def ensure(a):
            if a not in idx:
                idx[a] = len(atoms)
                atoms.append(a)
            return idx[a]

        raw = []
        for r in gp.rules:
            h = ensure(r.head) if r.head is not None else -1
            p = tuple(ensure(l.atom) for l in r.body if l.positive)
            n = tuple(ensure(l.atom) for l in r.body if not l.positive)
            raw.append((h, p, n))
        self.atoms = atoms
        self.idx = idx
        n_atoms = len(atoms)

        heads_by_atom: dict = {}
        for h, p, n in raw:
            if h >= 0:
                heads_by_atom.setdefault(h, []).append((p, n))

        # choice atoms and their partners
        declared = {i for i in heads_by_atom if atoms[i].pred in abducibles}
        naf_in_rules_of = {h: {x for _, n in rs for x in n} for h, rs in heads_by_atom.items()}
        choice: dict = {}
        partners: set = set()
        for a in sorted(declared, key=lambda i: atoms[i]):
            if a in partners:
                continue
            bodies = []
            for p, n in heads_by_atom[a]:
                partner = [x for x in n if a in naf_in_rules_of.get(x, ())]
                if partner:
                    partners.update(partner)
                bodies.append((p, tuple(x for x in n if x not in partner)))
            choice[a] = bodies
        self.choice = choice
        self.group = {a: atoms[a].args[-1] for a in choice if atoms[a].pred in gp.exclusive and atoms[a].args}

        normal_rules: dict = {}
        constraints = []
        for h, p, n in raw:
            if h < 0:
                constraints.append((p, n))
            elif h not in choice:
                normal_rules.setdefault(h, []).append((p, n))
        self.rules = normal_rules

        deps: list = [set() for _ in range(n_atoms)]
        for h, rs in normal_rules.items():
            for p, n in rs:
                deps[h].update(p)
                deps[h].update(n)
        for a, rs in choice.items():
            for p, n in rs:
                deps[a].update(p)
                deps[a].update(n)

        sccs = _tarjan(n_atoms, deps, key=lambda i: atoms[i])
        pos_of = [0] * n_atoms
        for k, comp in enumerate(sccs):
            for a in comp:
                pos_of[a] = k
        for k, comp in enumerate(sccs):
            members = set(comp)
            for a in comp:
                if a in choice and (len(comp) > 1 or a in deps[a]):
                    raise StratificationError(
                        f"abducible {atoms[a]} depends on itself: " + ", ".join(str(atoms[x]) for x in comp)
                    )
                for p, n in normal_rules.get(a, ()):
                    for x in n:
                        if x in members:
                            cyc = ", ".join(sorted(str(atoms[y]) for y in comp))
                            raise StratificationError(f"negation cycle through {atoms[x]}: {cyc}")
        self.sccs = sccs
        self.recursive = [len(c) > 1 or c[0] in deps[c[0]] for c in sccs]

        checks: dict = {}
        for p, n in constraints:
            at = max((pos_of[x] for x in p + n), default=-1)
            checks.setdefault(at, []).append((p, n))
        self.checks = checks


def _tarjan(n: int, deps: list, key) -> list:
    """SCCs in dependency-first order, deterministic by ``key``."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list = []
    out: list = []
    counter = 0
    sorted_deps = [sorted(d, key=key) for d in deps]
    for root in sorted(range(n), key=key):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        while work:
            v, i = work[-1]
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            succ = sorted_deps[v]
            if i < len(succ):
                work[-1] = (v, i + 1)
                w = succ[i]
                if index[w] < 0:
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp, key=key))
    return out


def _compiled(gp: GroundProgram, abducibles: Optional[Iterable[str]]) -> _Compiled:
    abd = frozenset(gp.abducibles if abducibles is None else abducibles)
    if abd not in gp._cache:
        gp._cache[abd] = _Compiled(gp, abd)
    return gp._cache[abd]


def _search(c: _Compiled, cap: Optional[int]) -> Iterator[list]:
    cap = _settings["cap"] if cap is None else cap
    truth = [False] * len(c.atoms)
    sccs, rules, choice, checks, recursive = c.sccs, c.rules, c.choice, c.checks, c.recursive
    n = len(sccs)
    budget = [0]

    def holds(p, q):
        for x in p:
            if not truth[x]:
                return False
        for x in q:
            if truth[x]:
                return False
        return True

    def checks_ok(k):
        for p, q in checks.get(k, ()):
            if holds(p, q):
                return False
        return True

    group = c.group
    used: set = set()

    def run(k: int):
        while k < n:
            comp = sccs[k]
            if len(comp) == 1 and comp[0] in choice:
                a = comp[0]
                if any(holds(p, q) for p, q in choice[a]):
                    g = group.get(a)
                    for value in (False, True):
                        if value and g is not None and g in used:
                            continue
                        budget[0] += 1
                        if budget[0] > cap:
                            raise ResourceError(f"more than {cap} abducible assignments explored")
                        truth[a] = value
                        if value and g is not None:
                            used.add(g)
                        if checks_ok(k):
                            yield from run(k + 1)
                        if value and g is not None:
                            used.discard(g)
                    return
                truth[a] = False
            elif not recursive[k]:
                a = comp[0]
                truth[a] = any(holds(p, q) for p, q in rules.get(a, ()))
            else:
                for a in comp:
                    truth[a] = False
                changed = True
                while changed:
                    changed = False
                    for a in comp:
                        if not truth[a] and any(holds(p, q) for p, q in rules.get(a, ())):
                            truth[a] = True
                            changed = True
            if not checks_ok(k):
                return
            k += 1
        yield truth

    if not checks_ok(-1):
        return
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10000))
    try:
        yield from run(0)
    finally:
        sys.setrecursionlimit(old)


def iter_answer_sets(gp: GroundProgram, abducibles=None, cap: Optional[int] = None) -> Iterator[AnswerSet]:
    c = _compiled(gp, abducibles)
    for truth in _search(c, cap):
        yield AnswerSet(frozenset(c.atoms[i] for i, t in enumerate(truth) if t))


def answer_sets(gp: GroundProgram, abducibles=None, cap: Optional[int] = None) -> list:
    return list(iter_answer_sets(gp, abducibles, cap))


def first_model_with(gp: GroundProgram, query: Atom, abducibles=None, cap: Optional[int] = None) -> Optional[AnswerSet]:
    """The first answer set containing ``query``, or None."""
    c = _compiled(gp, abducibles)
    i = c.idx.get(query)
    if i is None:
        return None
    for truth in _search(c, cap):
        if truth[i]:
            return AnswerSet(frozenset(c.atoms[j] for j, t in enumerate(truth) if t))
    return None


def entails_bravely(gp: GroundProgram, query: Atom, abducibles=None, cap: Optional[int] = None) -> bool:
    return first_model_with(gp, query, abducibles, cap) is not None


def entails_cautiously(gp: GroundProgram, query: Atom, abducibles=None, cap: Optional[int] = None) -> bool:
    c = _compiled(gp, abducibles)
    i = c.idx.get(query)
    found = False
    for truth in _search(c, cap):
        found = True
        if i is None or not truth[i]:
            return False
    return found


def satisfiable(gp: GroundProgram, abducibles=None, cap: Optional[int] = None) -> bool:
    c = _compiled(gp, abducibles)
    for _ in _search(c, cap):
        return True
    return False


def brave_atoms(gp: GroundProgram, queries: Iterable[Atom], abducibles=None, cap: Optional[int] = None) -> set:
    """Which of ``queries`` hold in some answer set; one pass over the models."""
    c = _compiled(gp, abducibles)
    wanted = {c.idx[q]: q for q in queries if q in c.idx}
    found = set()
    for truth in _search(c, cap):
        for i in [i for i in wanted if truth[i]]:
            found.add(wanted.pop(i))
        if not wanted:
            break
    return found


def dump_models(models: Iterable[AnswerSet]) -> str:
    """One atom per line, models separated by ``---``."""
    return "---\n".join("".join(f"{a}\n" for a in m) for m in models)
