import json
import sys
from pathlib import Path

import numpy as np
import pytest

from fisdim import fif
from fisdim.cli import load
from fisdim.grid import NodeGrid

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = sorted((ROOT / "configs").glob("*.json"))

# non-coplanar node data shared by the N=2 examples
Z2 = np.array([[0.0, 0.6, 0.2], [0.5, 1.0, -0.3], [0.1, 0.4, 0.3]])


def make_system(S: str, z=Z2, N: int = 2, domain=(0.0, 1.0, 0.0, 1.0), g=None, h=None, **kw):
    grid = NodeGrid(N, *domain, np.asarray(z, dtype=float))
    return fif.FisSystem.from_strings(grid, S, g or fif.bilinear_corner_expr(grid),
                                      h or fif.lagrange_expr(grid), **kw)


def config_system(name: str):
    return load(ROOT / "configs" / f"{name}.json").system()


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="cfg.json"):
        p = tmp_path / name
        p.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
        return p
    return _write


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
