import runpy
from pathlib import Path

import pytest

from fvo.harness import run
from fvo.scenario import parse_scenario, resolve_path

pytest.importorskip("matplotlib")
SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "plot_trace.py"


def test_plot_trace_writes_png(tmp_path, small_doc):
    small_doc["horizon"] = 0.6
    res = run(parse_scenario(small_doc, resolve_path("ieee14_dc_step").parent, "small"), tmp_path)
    mod = runpy.run_path(str(SCRIPT))
    mod["main"]([str(res.trace_path)])
    assert (tmp_path / "aru1.png").stat().st_size > 0
