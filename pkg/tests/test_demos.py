from __future__ import annotations

import runpy
from pathlib import Path

import pytest

DEMOS = sorted((Path(__file__).resolve().parent.parent / "demos").glob("*.py"))

EXPECTED = {
    "01_golden_run.py": "outcome: Accepted after 1 attempt(s)",
    "02_repair_loop.py": "attempt 2: clean",
    "03_step_by_step.py": "record round-tripped",
}


@pytest.mark.parametrize("path", DEMOS, ids=[p.name for p in DEMOS])
def test_demo_runs(path, capsys):
    runpy.run_path(str(path), run_name="__main__")
    assert EXPECTED[path.name] in capsys.readouterr().out
