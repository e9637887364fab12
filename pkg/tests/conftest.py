import json

import numpy as np
import pytest

from qgtools.graph import generate_graph
from qgtools.manifold import star_embedding
from qgtools.quantum import assemble_kirchhoff


@pytest.fixture(scope="session")
def star3():
    return generate_graph("star", n_edges=3, length=1.0)


@pytest.fixture(scope="session")
def star3_system(star3):
    return assemble_kirchhoff(star3, 1e-3)


@pytest.fixture(scope="session")
def k4():
    return generate_graph("complete_k4", length=1.0)


@pytest.fixture(scope="session")
def star_eg():
    """Star with three unit edges at 120 degrees and cross-section radius 0.5."""
    return star_embedding(n_edges=3, length=1.0, radius=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def star3_json(tmp_path):
    d = {
        "vertices": [
            {"id": 0, "x": 0.0, "y": 0.0},
            {"id": 1, "x": 1.0, "y": 0.0},
            {"id": 2, "x": -0.5, "y": float(np.sqrt(3) / 2)},
            {"id": 3, "x": -0.5, "y": float(-np.sqrt(3) / 2)},
        ],
        "edges": [
            {
                "id": i,
                "tail": 0,
                "head": i + 1,
                "length": 1.0,
                "density": {"type": "const", "value": 0.5},
            }
            for i in range(3)
        ],
    }
    fpath = tmp_path / "star3.json"
    fpath.write_text(json.dumps(d))
    return fpath
