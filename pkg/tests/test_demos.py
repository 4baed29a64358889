import runpy
from pathlib import Path

import pytest

from consensus_pd.harness import main

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("script", ["desk_walkthrough.py", "certificate_walkthrough.py",
                                    "centralized_vs_distributed.py", "invariant_checks.py"])
def test_demo_script_runs(script, capsys):
    runpy.run_path(str(DEMOS / script), run_name="__main__")
    assert capsys.readouterr().out


@pytest.mark.parametrize("config", sorted((DEMOS / "configs").glob("*.yaml")), ids=lambda p: p.stem)
def test_demo_configs_solve(config, tmp_path):
    assert main(["solve", "--config", str(config), "--out", str(tmp_path)]) == 0
