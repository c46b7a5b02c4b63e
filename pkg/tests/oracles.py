"""Independent reference implementations used by the tests.

Nothing here imports the solver, the unfolder or the verifier: the stable
model oracle enumerates subsets and applies the reduct test directly, and the
shape oracle counts trees by recursion on their size.
"""

from __future__ import annotations

import random

from lazysynth.logic import Atom, Literal, Rule


def stable_models(rules, atoms) -> set:
    """All stable models of a ground propositional program, by brute force."""
    atoms = sorted(set(atoms))
    bit = {a: 1 << i for i, a in enumerate(atoms)}

    def mask(lits):
        m = 0
        for l in lits:
            m |= bit[l.atom]
        return m

    compiled = []
    for r in rules:
        pos = mask(l for l in r.body if l.positive)
        neg = mask(l for l in r.body if not l.positive)
        compiled.append((bit[r.head] if r.head is not None else 0, pos, neg))
    normal = [c for c in compiled if c[0]]
    constraints = [c for c in compiled if not c[0]]

    out = set()
    for m in range(1 << len(atoms)):
        if any(pos & m == pos and not neg & m for _, pos, neg in constraints):
            continue
        reduct = [(h, pos) for h, pos, neg in normal if not neg & m]
        least, changed = 0, True
        while changed:
            changed = False
            for h, pos in reduct:
                if pos & least == pos and not h & least:
                    least |= h
                    changed = True
        if least == m:
            out.add(frozenset(a for a in atoms if bit[a] & m))
    return out


def random_program(rng: random.Random, max_atoms: int = 12, arg=None):
    """A random ground program that is stratified once its choice atoms are fixed.

    Returns (rules, atoms, abducible predicate names).  Choice atoms come in
    pairs ``a :- B, not na.  na :- B, not a.``; ordinary atoms sit in levels,
    negation only looks at lower levels and positive recursion is allowed
    inside a level.  Every atom takes the single argument ``arg`` if given.
    """
    n_atoms = rng.randint(1, max_atoms)
    n_pairs = rng.randint(0, n_atoms // 2)
    mk = (lambda p: Atom(p, (arg,))) if arg is not None else (lambda p: Atom(p, ()))
    units = []  # (level, kind, atoms)
    level = 0
    for i in range(n_pairs):
        units.append(("choice", (mk(f"a{i}"), mk(f"na{i}"))))
    for j in range(n_atoms - 2 * n_pairs):
        units.append(("plain", (mk(f"p{j}"),)))
    rng.shuffle(units)
    placed = []  # (level, kind, atoms)
    for kind, atoms in units:
        if placed and rng.random() < 0.5:
            level += 1
        if kind == "choice":
            level += 1
        placed.append((level, kind, atoms))

    def body(candidates_pos, candidates_neg):
        out = []
        for a in rng.sample(candidates_pos, min(len(candidates_pos), rng.randint(0, 2))):
            out.append(Literal(a, True))
        for a in rng.sample(candidates_neg, min(len(candidates_neg), rng.randint(0, 2))):
            out.append(Literal(a, False))
        return tuple(out)

    rules = []
    for lvl, kind, atoms in placed:
        lower = [a for l2, _, xs in placed if l2 < lvl for a in xs]
        if kind == "choice":
            a, na = atoms
            b = body(lower, lower)
            rules.append(Rule(a, b + (Literal(na, False),)))
            rules.append(Rule(na, b + (Literal(a, False),)))
            continue
        same = [x for l2, k2, xs in placed if l2 == lvl and k2 == "plain" for x in xs]
        for _ in range(rng.randint(0, 3)):
            rules.append(Rule(atoms[0], body(lower + same, lower)))
    every = [a for _, _, xs in placed for a in xs]
    for _ in range(rng.randint(0, 2)):
        b = body(every, every)
        if b:
            rules.append(Rule(None, b))
    abducibles = frozenset(a.pred for lvl, kind, xs in placed if kind == "choice" for a in xs[:1])
    return rules, every, abducibles


# --------------------------------------------------------------------------
# shapes


def full_binary_trees(leaves: int) -> int:
    """Trees where every inner node has two children, by number of leaves (Catalan numbers)."""
    if leaves == 1:
        return 1
    return sum(full_binary_trees(i) * full_binary_trees(leaves - i) for i in range(1, leaves))


def binary_trees(nodes: int) -> int:
    """Binary trees with ``nodes`` nodes, each child optional (Catalan numbers)."""
    if nodes == 0:
        return 1
    return sum(binary_trees(i) * binary_trees(nodes - 1 - i) for i in range(nodes))
