import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from typimp.dataset import BinaryFeature, FeatureMatrix, Language  # noqa: E402

# Filled by the acceptance tests and echoed in the terminal summary.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_matrix(cells, families=None, coords=None):
    """Matrix with one yes-column per raw feature and optional family paths."""
    cells = np.asarray(cells, dtype=np.int8)
    n, f = cells.shape
    langs = []
    for i in range(n):
        fam = () if families is None else tuple(families[i])
        lat, lon = (None, None) if coords is None else coords[i]
        langs.append(Language(f"L{i}", f"Lang{i}", lat, lon, fam))
    feats = [BinaryFeature(f"f{j}", "yes") for j in range(f)]
    return FeatureMatrix(langs, feats, cells)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


RAW_HEADER = "id,name,latitude,longitude,family,subfamily,genus"


@pytest.fixture
def write_csv(tmp_path):
    def _write(rows, features, name="data.csv"):
        path = tmp_path / name
        lines = [RAW_HEADER + "," + ",".join(features)]
        lines += [r if isinstance(r, str) else ",".join(r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write
