"""Acceptance criteria 1-11 at their stated scale and tolerance.

Each criterion prints one ``[PASS]``/``[FAIL]`` line.  Criteria 1-10 run the
full-scale checks in :mod:`kgadiabatic.acceptance`; criterion 11 runs the
``kgadiabatic verify`` command twice with the shipped default configuration
and compares the result files byte for byte.

Run directly with ``python3 tests/test_acceptance.py`` for the summary lines
alone.
"""

import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import pytest

from kgadiabatic.acceptance import CHECKS, TITLES, Check

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 0
RESULT_FILES = ("verify_results.json", "verify.csv")


def run_verify(out: Path) -> tuple:
    """One ``kgadiabatic verify`` run with the default configuration."""
    env = dict(os.environ, PYTHONHASHSEED="0")
    env.pop("KGADIABATIC_OUT", None)
    proc = subprocess.run([sys.executable, "-m", "kgadiabatic.cli", "verify", "--out", str(out)],
                          capture_output=True, text=True, env=env)
    manifest = json.loads((out / "manifest.json").read_text())
    return proc.returncode, manifest


def determinism_check() -> Check:
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        code_a, man_a = run_verify(a)
        code_b, man_b = run_verify(b)
        same = {name: (a / name).read_bytes() == (b / name).read_bytes() for name in RESULT_FILES}
        tasks_ok = all(t["status"] == "passed" for m in (man_a, man_b) for t in m["tasks"])
        details = {"exit_codes": [code_a, code_b], "identical": same, "all_tasks_passed": tasks_ok,
                   "tasks": [t["task"] for t in man_a["tasks"]]}
    passed = code_a == code_b == 0 and all(same.values()) and tasks_ok
    return Check(11, passed, details, time.perf_counter() - t0)


def run_criterion(k: int) -> Check:
    if k == 11:
        return determinism_check()
    return CHECKS[k](seed=SEED, scale="full")


@pytest.mark.parametrize("k", list(range(1, 12)), ids=lambda k: f"criterion_{k:02d}")
def test_criterion(k, capsys):
    chk = run_criterion(k)
    with capsys.disabled():
        print("\n" + chk.line(), flush=True)
    assert chk.passed, json.dumps(chk.body(), default=str, indent=1)


def test_every_criterion_has_a_title():
    assert sorted(TITLES) == list(range(1, 12))


if __name__ == "__main__":
    failures = 0
    for k in range(1, 12):
        chk = run_criterion(k)
        print(chk.line(), flush=True)
        failures += not chk.passed
    sys.exit(1 if failures else 0)
