import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lazysynth.cli import FIXTURES, load_spec  # noqa: E402
from lazysynth.synthesizer import Synthesizer  # noqa: E402

SPECS = ("linked_list", "external_bst", "internal_bst")


@pytest.fixture(scope="session")
def specs():
    return {name: load_spec(name) for name in SPECS}


@pytest.fixture(scope="session")
def list_spec(specs):
    return specs["linked_list"]


@pytest.fixture(scope="session")
def list_synth(list_spec):
    return Synthesizer(list_spec)


@pytest.fixture(scope="session")
def table():
    """Synthesis over all three fixtures, timed end to end (spec loading included)."""
    start = time.perf_counter()
    out = {}
    for name in SPECS:
        spec = load_spec(name)
        out[name] = (spec, Synthesizer(spec).run())
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def golden_dir():
    return FIXTURES / "golden"


_VERDICTS: list = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion; shown in the terminal summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(_VERDICTS, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
