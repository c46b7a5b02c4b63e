"""Reader for data-structure specifications.

A specification is a Prolog-flavoured fact file::

    rule(suffix(X), [edge(X,Y), key(X,KX), key(Y,KY), lt(KX,KY), suffix(Y)]).
    code(insert, block1, [reach(x), ...], [link(x,target), ...], [reach(target)]).

Uppercase names are variables, lowercase names constants.  ``not(p)`` is
negation as failure and ``a < b`` is sugar for ``lt(a,b)``.  Unlabelled
``edge/2`` and ``link/2`` mean the single default field.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .logic import BUILTINS, Atom, Const, Literal, LogicProgram, Rule, StructuralError, Var

DEFAULT_FIELD = Const("default")
BASE_PREDICATES = frozenset({"edge", "key", "node"})


class SpecSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LinkAction:
    source: object
    field: object
    dest: object

    def atom(self) -> Atom:
        return Atom("link", (self.source, self.field, self.dest))

    def substitute(self, binding) -> "LinkAction":
        return LinkAction(*(binding.get(t, t) for t in (self.source, self.field, self.dest)))

    def __str__(self) -> str:
        if self.field == DEFAULT_FIELD:
            return f"link({self.source}, {self.dest})"
        return f"link({self.source}, {self.field}, {self.dest})"


@dataclass(frozen=True)
class PrimitiveDecl:
    action: Atom
    modifies: object
    causes: tuple = ()


@dataclass(frozen=True)
class BlockSpec:
    block_id: str
    pre: tuple
    steps: tuple
    post: tuple


@dataclass(frozen=True)
class OperationSpec:
    name: str
    blocks: tuple


@dataclass(frozen=True)
class DataStructureSpec:
    name: str
    structural_rules: tuple
    derived_rules: tuple
    fluents: frozenset
    invariant: str
    start_node: Const
    end_node: Optional[Const]
    operations: tuple = ()
    primitives: tuple = ()
    extra_nodes: tuple = (Const("target"),)

    @property
    def rules(self) -> tuple:
        return self.structural_rules + self.derived_rules

    @property
    def next_node_rules(self) -> tuple:
        return tuple(r for r in self.derived_rules if r.head is not None and r.head.pred == "next_node")

    def program(self) -> LogicProgram:
        return LogicProgram(self.rules)

    def operation(self, name: str) -> OperationSpec:
        for op in self.operations:
            if op.name == name:
                return op
        raise SpecError(f"no operation named {name}")

    def blocks(self):
        for op in self.operations:
            for b in op.blocks:
                yield op, b

    def global_constants(self) -> set:
        out = set(self.program().constants()) | {self.start_node, DEFAULT_FIELD}
        if self.end_node is not None:
            out.add(self.end_node)
        return out

    def base_fluents(self) -> frozenset:
        """Fluents written directly by primitive actions."""
        return frozenset(a.pred for p in self.primitives for a in p.causes)

    def primitive_for(self, step: LinkAction) -> PrimitiveDecl:
        action = step.atom()
        for p in self.primitives:
            if p.action.pred == action.pred and p.action.arity == action.arity:
                return p
        raise SpecError(f"no primitive declared for {action.pred}/{action.arity}")


# --------------------------------------------------------------------------
# tokenizer and term reader

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>%[^\n]*)"
    r"|(?P<name>[a-z][A-Za-z0-9_]*)|(?P<var>[A-Z_][A-Za-z0-9_]*)|(?P<num>[0-9]+)"
    r"|(?P<punct>:-|[()\[\],.<=])"
)


def _tokens(text: str):
    line, col_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise SpecSyntaxError(f"unexpected character {text[i]!r}", line, i - col_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            col_start = m.end()
        elif kind not in ("ws", "comment"):
            yield kind, m.group(), line, i - col_start + 1
        i = m.end()
    yield "eof", "", line, i - col_start + 1


# parsed term shapes: ("const", name) ("var", name) ("cmp", name, args) ("list", items)


class _Reader:
    def __init__(self, text: str):
        self.toks = list(_tokens(text))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value: Optional[str] = None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise SpecSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def clauses(self):
        while self.peek()[0] != "eof":
            tok = self.peek()
            term = self.term()
            self.take(".")
            yield term, tok[2], tok[3]

    def term(self):
        left = self.primary()
        if self.peek()[1] in ("<", "="):
            op = self.take()[1]
            right = self.primary()
            return ("cmp", "lt" if op == "<" else "eq_num", [left, right])
        return left

    def primary(self):
        kind, value, line, col = self.take()
        if kind == "var":
            return ("var", value)
        if kind in ("name", "num"):
            if self.peek()[1] == "(":
                self.take("(")
                args = [self.term()]
                while self.peek()[1] == ",":
                    self.take(",")
                    args.append(self.term())
                self.take(")")
                return ("cmp", value, args)
            return ("const", value)
        if value == "[":
            items = []
            if self.peek()[1] != "]":
                items.append(self.term())
                while self.peek()[1] == ",":
                    self.take(",")
                    items.append(self.term())
            self.take("]")
            return ("list", items)
        raise SpecSyntaxError(f"unexpected {value or 'end of input'!r}", line, col)


def _flat(t, where) -> object:
    if t[0] == "const":
        return Const(t[1])
    if t[0] == "var":
        return Var(t[1])
    raise SpecError(f"{where}: nested term {_show(t)} not allowed")


def _show(t) -> str:
    if t[0] in ("const", "var"):
        return t[1]
    if t[0] == "list":
        return "[" + ",".join(_show(x) for x in t[1]) + "]"
    return f"{t[1]}(" + ",".join(_show(x) for x in t[2]) + ")"


def _atom(t, where) -> Atom:
    if t[0] == "const":
        return Atom(t[1], ())
    if t[0] != "cmp":
        raise SpecError(f"{where}: expected an atom, found {_show(t)}")
    args = tuple(_flat(a, where) for a in t[2])
    if t[1] in ("edge", "link") and len(args) == 2:
        args = (args[0], DEFAULT_FIELD, args[1])
    return Atom(t[1], args)


def _literal(t, where) -> Literal:
    if t[0] == "cmp" and t[1] == "not" and len(t[2]) == 1:
        return Literal(_atom(t[2][0], where), False)
    return Literal(_atom(t, where), True)


def _list(t, where) -> list:
    if t[0] != "list":
        raise SpecError(f"{where}: expected a list, found {_show(t)}")
    return t[1]


def parse_spec(text: str) -> DataStructureSpec:
    name = "spec"
    rules, fluents, extras = [], [], []
    invariant = start = end = None
    prims: dict = {}
    causes: list = []
    ops: dict = {}
    for term, line, col in _Reader(text).clauses():
        where = f"line {line}"
        if term[0] == "const":
            raise SpecSyntaxError(f"unknown declaration {term[1]}", line, col)
        if term[0] != "cmp":
            raise SpecSyntaxError(f"expected a fact, found {_show(term)}", line, col)
        head, args = term[1], term[2]
        if head == "rule" and len(args) == 2:
            body = tuple(_literal(x, where) for x in _list(args[1], where))
            rules.append(Rule(_atom(args[0], where), body))
        elif head == "name" and len(args) == 1:
            name = args[0][1]
        elif head == "fluent" and len(args) == 1:
            fluents.append(args[0][1])
        elif head == "invariant" and len(args) == 1:
            invariant = args[0][1]
        elif head == "start_node" and len(args) == 1:
            start = _flat(args[0], where)
        elif head == "end_node" and len(args) == 1:
            end = _flat(args[0], where)
        elif head == "extra_node" and len(args) == 1:
            extras.append(_flat(args[0], where))
        elif head == "primitive" and len(args) == 2:
            action = _atom(args[0], where)
            mod = args[1]
            if not (mod[0] == "cmp" and mod[1] == "modifies" and len(mod[2]) == 1):
                raise SpecSyntaxError("primitive needs modifies(Node)", line, col)
            prims[(action.pred, action.arity)] = (action, _flat(mod[2][0], where))
        elif head == "causes" and len(args) == 2:
            causes.append((_atom(args[0], where), _atom(args[1], where), line, col))
        elif head == "code" and len(args) == 5:
            op_name, block_id = args[0][1], args[1][1]
            pre = tuple(_literal(x, where) for x in _list(args[2], where))
            steps = []
            for s in _list(args[3], where):
                a = _atom(s, where)
                if a.pred != "link" or a.arity != 3:
                    raise SpecSyntaxError(f"step {_show(s)} is not a link action", line, col)
                steps.append(LinkAction(*a.args))
            post = tuple(_literal(x, where) for x in _list(args[4], where))
            ops.setdefault(op_name, []).append(BlockSpec(block_id, pre, tuple(steps), post))
        else:
            raise SpecSyntaxError(f"unknown declaration {head}/{len(args)}", line, col)

    if invariant is None:
        raise SpecError("missing invariant/1 declaration")
    if start is None:
        raise SpecError("missing start_node/1 declaration")

    prim_decls = []
    for (pred, arity), (action, mod) in prims.items():
        caused = []
        for effect, act, line, col in causes:
            if act.pred == pred and act.arity == arity:
                caused.append(_rename_schema(effect, act, action))
        prim_decls.append(PrimitiveDecl(action, mod, tuple(caused)))
    for effect, act, line, col in causes:
        if (act.pred, act.arity) not in prims:
            raise SpecSyntaxError(f"causes refers to undeclared primitive {act.pred}", line, col)
        if effect.pred not in fluents:
            raise SpecError(f"line {line}: caused atom {effect.pred} is not a declared fluent")

    LogicProgram(tuple(rules)).predicates()
    structural, derived = _split_rules(rules, invariant)
    return DataStructureSpec(
        name=name,
        structural_rules=tuple(structural),
        derived_rules=tuple(derived),
        fluents=frozenset(fluents),
        invariant=invariant,
        start_node=start,
        end_node=end,
        operations=tuple(OperationSpec(k, tuple(v)) for k, v in ops.items()),
        primitives=tuple(prim_decls),
        extra_nodes=tuple(extras) if extras else (Const("target"),),
    )


def _rename_schema(effect: Atom, act: Atom, action: Atom) -> Atom:
    ren = dict(zip(act.args, action.args))
    return Atom(effect.pred, tuple(ren.get(a, a) for a in effect.args))


def _split_rules(rules, invariant):
    """Rules reachable from the invariant's definition are structural."""
    by_head: dict = {}
    for r in rules:
        by_head.setdefault(r.head.pred, []).append(r)
    reach, todo = set(), [invariant]
    while todo:
        p = todo.pop()
        if p in reach:
            continue
        reach.add(p)
        for r in by_head.get(p, ()):
            todo.extend(l.atom.pred for l in r.body if l.atom.pred in by_head)
    structural = [r for r in rules if r.head.pred in reach]
    derived = [r for r in rules if r.head.pred not in reach]
    return structural, derived


# --------------------------------------------------------------------------
# printing


def _term_text(t) -> str:
    return str(t)


def _atom_text(a: Atom) -> str:
    args = a.args
    if a.pred in ("edge", "link") and len(args) == 3 and args[1] == DEFAULT_FIELD:
        args = (args[0], args[2])
    if a.pred == "lt" and len(args) == 2:
        return f"{args[0]} < {args[1]}"
    if not args:
        return a.pred
    return f"{a.pred}({','.join(_term_text(x) for x in args)})"


def atom_text(a: Atom) -> str:
    """Surface syntax of an atom: default fields hidden, ``lt`` infix."""
    return _atom_text(a)


def literal_text(l: Literal) -> str:
    return _atom_text(l.atom) if l.positive else f"not({_atom_text(l.atom)})"


def format_spec(spec: DataStructureSpec) -> str:
    out = [f"name({spec.name})."]
    for r in spec.rules:
        out.append(f"rule({_atom_text(r.head)}, [{', '.join(literal_text(l) for l in r.body)}]).")
    out.append(f"start_node({spec.start_node}).")
    if spec.end_node is not None:
        out.append(f"end_node({spec.end_node}).")
    out.append(f"invariant({spec.invariant}).")
    for f in sorted(spec.fluents):
        out.append(f"fluent({f}).")
    for x in spec.extra_nodes:
        out.append(f"extra_node({x}).")
    for p in spec.primitives:
        out.append(f"primitive({_atom_text(p.action)}, modifies({p.modifies})).")
        for c in p.causes:
            out.append(f"causes({_atom_text(c)}, {_atom_text(p.action)}).")
    for op in spec.operations:
        for b in op.blocks:
            pre = ", ".join(literal_text(l) for l in b.pre)
            steps = ", ".join(_atom_text(s.atom()) for s in b.steps)
            post = ", ".join(literal_text(l) for l in b.post)
            out.append(f"code({op.name}, {b.block_id}, [{pre}], [{steps}], [{post}]).")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# block parameters


def block_params(spec: DataStructureSpec, block: BlockSpec) -> list:
    """Role constants of a block (x, y, target, kx, ...) in first-use order."""
    glob = spec.global_constants()
    seen: list = []
    atoms = [l.atom for l in block.pre] + [s.atom() for s in block.steps] + [l.atom for l in block.post]
    for a in atoms:
        for t in a.args:
            if isinstance(t, Const) and t not in glob and t not in seen:
                seen.append(t)
    return seen


def param_sorts(spec: DataStructureSpec, block: BlockSpec) -> dict:
    """Classify each role constant as 'node', 'key' or 'field'."""
    sorts = {}
    atoms = [l.atom for l in block.pre] + [s.atom() for s in block.steps] + [l.atom for l in block.post]
    for a in atoms:
        for i, t in enumerate(a.args):
            if not isinstance(t, Const):
                continue
            if a.pred == "key" and i == 1 or a.pred in ("lt", "eq_num"):
                sorts[t] = "key"
            elif a.pred in ("edge", "link") and i == 1:
                sorts[t] = "field"
    return {p: sorts.get(p, "node") for p in block_params(spec, block)}


def lift(block: BlockSpec, params) -> dict:
    """Variable for each role constant: x -> X, ktarget -> KTARGET."""
    return {p: Var(p.name.upper()) for p in params}


def validate_spec(spec: DataStructureSpec, depth: int = 2) -> list:
    """Diagnostics for a parsed spec; empty when everything checks out."""
    diags = []
    if spec.invariant not in spec.fluents:
        diags.append(f"invariant {spec.invariant} is not declared a fluent")
    consts = spec.program().constants()
    for label, node in (("start node", spec.start_node), ("end node", spec.end_node)):
        if node is not None and node not in consts:
            diags.append(f"{label} {node} does not occur in any rule")
    try:
        arities = LogicProgram(spec.rules).predicates()
    except StructuralError as e:
        diags.append(str(e))
        arities = {}
    known = set(arities) | BUILTINS | BASE_PREDICATES
    for p in spec.primitives:
        for c in p.causes:
            if c.pred not in spec.fluents:
                diags.append(f"caused atom {c.pred} is not a fluent")
    for op, b in spec.blocks():
        tag = f"{op.name}/{b.block_id}"
        if not b.steps:
            diags.append(f"{tag}: no steps")
        for l in b.pre + b.post:
            if l.atom.pred not in known:
                diags.append(f"{tag}: unknown predicate {l.atom.pred}")
        pre_consts = {t for l in b.pre for t in l.atom.args}
        for s in b.steps:
            for t in (s.source, s.dest):
                if t not in pre_consts and t not in spec.global_constants() and t not in spec.extra_nodes:
                    diags.append(f"{tag}: step node {t} not mentioned in the precondition")
            try:
                spec.primitive_for(s)
            except SpecError as e:
                diags.append(f"{tag}: {e}")
    if not diags:
        from .unfolder import overlapping_blocks

        for op, b1, b2 in overlapping_blocks(spec, depth):
            diags.append(f"{op}: preconditions of {b1} and {b2} are not mutually exclusive")
    return diags


def rename_atom(a: Atom, ren: dict) -> Atom:
    """Replace constants (or variables) of ``a`` according to ``ren``."""
    return Atom(a.pred, tuple(ren.get(t, t) for t in a.args))


def rename_literal(l: Literal, ren: dict) -> Literal:
    return Literal(rename_atom(l.atom, ren), l.positive)
