"""Command-line front end.

Settings come from flags, then ``LAZYSYNTH_*`` environment variables, then a
JSON config file (``--config`` or ``LAZYSYNTH_CONFIG``), then defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import interference, keymove, ordering, reifier, solver, synthesizer, unfolder, verifier
from .kb import DEFAULT_FIELD, LinkAction, SpecError, literal_text, parse_spec, rename_literal
from .logic import Const

FIXTURES = Path(__file__).parent / "fixtures"
ENV_PREFIX = "LAZYSYNTH_"
EXIT_OK, EXIT_ERROR, EXIT_RCU, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3


@dataclass
class RunConfig:
    spec: Optional[str] = None
    max_depth: int = unfolder.DEFAULT_MAX_DEPTH
    cap: int = solver.DEFAULT_CAP
    format: str = "text"
    verbose: bool = False
    horizons: dict = field(default_factory=dict)


_CASTS = {"max_depth": int, "cap": int, "format": str, "spec": str, "verbose": lambda v: str(v).lower() in ("1", "true", "yes")}


def _parse_horizons(items) -> dict:
    out = {}
    for item in items or ():
        task, _, n = item.partition("=")
        if not n.isdigit():
            raise ValueError(f"bad horizon override {item!r}, expected TASK=N")
        out[task] = int(n)
    return out


def load_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Merge defaults, config file, environment and flags, in rising priority."""
    environ = os.environ if environ is None else environ
    cfg = asdict(RunConfig())
    path = getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG")
    if path:
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(data)
    for key, cast in _CASTS.items():
        v = environ.get(ENV_PREFIX + key.upper())
        if v is not None:
            cfg[key] = cast(v)
    if environ.get(ENV_PREFIX + "HORIZONS"):
        cfg["horizons"] = {**cfg["horizons"], **_parse_horizons(environ[ENV_PREFIX + "HORIZONS"].split(","))}
    for key in _CASTS:
        v = getattr(args, key, None)
        if v not in (None, False):
            cfg[key] = v
    cfg["horizons"] = {**cfg["horizons"], **_parse_horizons(getattr(args, "horizon", None))}
    if cfg["format"] not in ("text", "json"):
        raise ValueError(f"unknown format {cfg['format']}")
    return RunConfig(**cfg)


def resolve_spec_path(path: str) -> Path:
    """A spec path as given, or relative to the bundled fixtures."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (FIXTURES / p, FIXTURES / p.name, FIXTURES / (p.name + ".spec")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"spec file not found: {path}")


def load_spec(path: str):
    return parse_spec(resolve_spec_path(path).read_text())


_STEP = re.compile(r"link\(\s*(\w+)\s*,\s*(\w+)\s*(?:,\s*(\w+)\s*)?\)")


def parse_steps(text: str) -> list:
    """``link(x,target); link(target,y)`` -> role-level LinkActions."""
    out = []
    for part in filter(None, (p.strip() for p in re.split(r";|\)\s*,", text))):
        if not part.endswith(")"):
            part += ")"
        m = _STEP.fullmatch(part)
        if not m:
            raise ValueError(f"cannot parse step {part!r}")
        a, b, c = m.groups()
        out.append(LinkAction(Const(a), DEFAULT_FIELD, Const(b)) if c is None else LinkAction(Const(a), Const(b), Const(c)))
    return out


# --------------------------------------------------------------------------
# output helpers


def _emit(cfg: RunConfig, doc, text: str, out=None) -> None:
    body = json.dumps(doc, indent=2) + "\n" if cfg.format == "json" else text
    if out:
        Path(out).write_text(body)
    else:
        sys.stdout.write(body)


def _witness(spec, cfg, op: str, block_id: Optional[str]):
    _, ws = unfolder.find_least_common_instance(spec, cfg.max_depth)
    ids = [b.block_id for b in spec.operation(op).blocks]
    bid = block_id or ids[0]
    if bid not in ids:
        raise SpecError(f"operation {op} has no block {bid}")
    return ws[(op, bid)]


def _roles(w) -> dict:
    """Instance node -> role name, first role wins."""
    out = {}
    for p, v in w.binding:
        out.setdefault(v, p)
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    ops = [args.op] if args.op else None
    results = synthesizer.Synthesizer(spec, cfg.max_depth).run(ops)
    body = synthesizer.render(results, cfg.format, cfg.verbose)
    if args.out:
        Path(args.out).write_text(body)
    else:
        sys.stdout.write(body)
    return synthesizer.exit_code(results)


def cmd_unfold(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    insts = unfolder.unfold(spec, args.depth)
    doc = [
        {
            "depth": i.depth,
            "edges": [[str(a), str(f), str(b)] for a, f, b in i.edges],
            "keys": {str(n): str(k) for n, k in i.keys},
            "key_order": [str(k) for k in i.key_order],
        }
        for i in insts
    ]
    text = "".join(f"{unfolder_chain(spec, i)}\n" for i in insts)
    _emit(cfg, doc, text)
    return EXIT_OK


def unfolder_chain(spec, inst) -> str:
    """``h→n1→t`` for single-successor structures, the instance description otherwise."""
    succ = {}
    for a, f, b in inst.edges:
        if a in succ:
            return inst.describe()
        succ[a] = b
    path, n = [spec.start_node], spec.start_node
    while n in succ and succ[n] not in path:
        n = succ[n]
        path.append(n)
    if len(path) != len(inst.nodes):
        return inst.describe()
    keys = " < ".join(str(k) for k in inst.key_order)
    return "→".join(str(p) for p in path) + f"  ({keys})"


def cmd_check_falsify(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    w = _witness(spec, cfg, args.op, args.block)
    v = interference.classify_conjuncts(spec, w)
    bad = set(v.falsifiable)
    rows = []
    for role, bound in zip(w.block.pre, (rename_literal(l, w.mapping) for l in w.block.pre)):
        rows.append((literal_text(role), literal_text(bound), "falsifiable" if bound in bad else "unfalsifiable"))
    doc = [{"literal": r, "bound": b, "verdict": x} for r, b, x in rows]
    width = max((len(r) for r, _, _ in rows), default=0)
    text = "".join(f"{r.ljust(width)}  {x}\n" for r, _, x in rows)
    _emit(cfg, doc, text)
    return EXIT_OK


def cmd_check_locks(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    w = _witness(spec, cfg, args.op, args.block)
    if args.locks is not None:
        m = w.mapping
        names = [x.strip() for x in args.locks.split(",") if x.strip()]
        locks = [m.get(Const(x), Const(x)) for x in names]
    else:
        locks = interference.guess_locks(spec, w)
    v = interference.locks_adequate(spec, w, locks)
    roles = _roles(w)
    bad = set(v.falsified)
    rows = []
    for role, bound in zip(w.block.pre, (rename_literal(l, w.mapping) for l in w.block.pre)):
        if interference.is_rigid(spec, bound):
            verdict = "rigid"
        else:
            verdict = "falsified" if bound in bad else "protected"
        rows.append((literal_text(role), verdict))
    lock_names = [str(roles.get(n, n)) for n in locks]
    doc = {
        "locks": lock_names,
        "adequate": v.adequate,
        "literals": [{"literal": r, "verdict": x} for r, x in rows],
        "counterexample": v.counterexample,
    }
    width = max((len(r) for r, _ in rows), default=0)
    text = f"locks: {', '.join(lock_names)}\nadequate: {str(v.adequate).lower()}\n"
    text += "".join(f"  {r.ljust(width)}  {x}\n" for r, x in rows)
    if v.counterexample:
        text += "interference: " + " ".join(v.counterexample) + "\n"
    _emit(cfg, doc, text)
    return EXIT_OK


def _order_doc(r) -> dict:
    return {
        "steps": [str(s) for s in r.steps],
        "valid": r.valid,
        "reason": r.reason,
        "trace": [{"time": st.time, "invariant": st.invariant, "edges": list(st.edges)} for st in r.trace],
    }


def _order_text(r, verbose: bool) -> str:
    head = f"[{', '.join(str(s) for s in r.steps)}] {'valid' if r.valid else 'invalid'}"
    if r.reason:
        head += f": {r.reason}"
    lines = [head]
    if verbose or not r.valid:
        for i, st in enumerate(r.trace):
            label = "initial" if i == 0 else f"after step {i}"
            lines.append(f"  {st.time} ({label}) invariant={str(st.invariant).lower()} {' '.join(st.edges)}")
    return "\n".join(lines) + "\n"


def cmd_check_order(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    w = _witness(spec, cfg, args.op, args.block)
    roles = _roles(w)
    if args.steps:
        results = [ordering.check_order(spec, w, [s.substitute(w.mapping) for s in parse_steps(args.steps)])]
    else:
        results = ordering.valid_program_orders(spec, w).results
    # report in role names: bound steps are mapped back through the witness
    named = []
    for r in results:
        steps = tuple(LinkAction(roles.get(s.source, s.source), s.field, roles.get(s.dest, s.dest)) for s in r.steps)
        named.append(ordering.OrderResult(steps, r.valid, r.trace, r.reason))
    doc = [_order_doc(r) for r in named]
    _emit(cfg, doc, "".join(_order_text(r, cfg.verbose) for r in named))
    return EXIT_OK


def cmd_check_keymove(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    inst, _ = unfolder.find_least_common_instance(spec, cfg.max_depth)
    ops = [args.op] if args.op else [o.name for o in spec.operations]
    doc, text = [], ""
    for op in ops:
        v = keymove.detect_key_movement(spec, inst, op)
        doc.append(
            {
                "operation": op,
                "detected": v.moved,
                "target": str(v.target),
                "missed": [str(n) for n in v.missed],
                "trace": v.trace,
            }
        )
        text += f"{op}: detected={str(v.moved).lower()} target={v.target}"
        if v.moved:
            text += f" missed={','.join(str(n) for n in v.missed)}\n"
            text += "".join(f"  {t}\n" for t in v.trace)
        else:
            text += "\n"
    _emit(cfg, doc, text)
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    spec = load_spec(cfg.spec)
    results = synthesizer.Synthesizer(spec, cfg.max_depth).run([args.op] if args.op else None)
    doc, text, failed = [], "", False
    for r in results:
        if r.is_rcu:
            doc.append({"operation": r.operation, "block": r.block_id, "skipped": "rcu"})
            text += f"{r.operation} {r.block_id}: skipped (RCU)\n"
            continue
        code = r.outcome if not args.mutate else verifier.mutate(r.outcome, args.mutate)
        rep = verifier.verify(code, spec, args.verify_depth, args.interferers, hostile=args.hostile)
        failed |= not rep.ok
        entry = {"operation": r.operation, "block": r.block_id, "ok": rep.ok, "stats": rep.stats}
        text += f"{r.operation} {r.block_id}: {'no counterexample' if rep.ok else 'counterexample'} {rep.stats}\n"
        if rep.counterexample:
            entry["counterexample"] = asdict(rep.counterexample)
            text += rep.counterexample.render()
        doc.append(entry)
    _emit(cfg, doc, text)
    return EXIT_COUNTEREXAMPLE if failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="spec file (bundled fixtures are found by name)")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--format", choices=("text", "json"))
    common.add_argument("--max-unfold-depth", dest="max_depth", type=int, help="depth cap for the least instance")
    common.add_argument("--cap", type=int, help="solver enumeration cap")
    common.add_argument("--horizon", action="append", metavar="TASK=N", help="override a task horizon")
    common.add_argument("--dump-theories", metavar="DIR", help="write every grounded program to DIR")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="lazysynth", description="Synthesize lock-based concurrent code from sequential specs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate concurrent code or an RCU recommendation")
    s.add_argument("--op")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("unfold", parents=[common], help="list instances of one unfolding depth")
    s.add_argument("--depth", type=int, required=True)
    s.set_defaults(func=cmd_unfold)

    for name, func, helptext in (
        ("check-falsify", cmd_check_falsify, "classify precondition literals"),
        ("check-locks", cmd_check_locks, "check a lock set"),
        ("check-order", cmd_check_order, "check step orders"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--op", required=True)
        s.add_argument("--block")
        if name == "check-locks":
            s.add_argument("--locks", help="comma-separated role names; default is the guessed set")
        if name == "check-order":
            s.add_argument("--steps", help="e.g. 'link(x,target); link(target,y)'; default tries every order")
        s.set_defaults(func=func)

    s = sub.add_parser("check-keymove", parents=[common], help="look for key movement")
    s.add_argument("--op")
    s.set_defaults(func=cmd_check_keymove)

    s = sub.add_parser("verify", parents=[common], help="run emitted code against interleaved interference")
    s.add_argument("--op")
    s.add_argument("--max-depth", dest="verify_depth", type=int, default=3, help="largest instance depth to explore")
    s.add_argument("--interferers", type=int, default=1)
    s.add_argument("--hostile", action="store_true", help="interference ignores locks")
    s.add_argument("--mutate", choices=verifier.MUTATIONS)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        cfg = load_config(args)
        if not cfg.spec:
            raise ValueError("no spec given (use --spec or LAZYSYNTH_SPEC)")
        solver.configure(cap=cfg.cap, dump_dir=args.dump_theories)
        reifier.HORIZON_OVERRIDES.clear()
        reifier.HORIZON_OVERRIDES.update(cfg.horizons)
        return args.func(args, cfg)
    except (SpecError, ValueError, FileNotFoundError, unfolder.NoInstanceError, solver.ResourceError, verifier.VerificationLimit) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        solver.configure(cap=solver.DEFAULT_CAP, dump_dir=None)
        reifier.HORIZON_OVERRIDES.clear()


if __name__ == "__main__":
    sys.exit(main())
