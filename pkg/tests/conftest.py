import numpy as np
import pytest
from hypothesis import settings
from scipy.spatial.distance import pdist, squareform

from dmw.spaces import FiniteMetricMeasureSpace

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def planar_space(rng, m, weights=None):
    D = squareform(pdist(rng.random((m, 2))))
    if weights is None:
        return FiniteMetricMeasureSpace.uniform(D)
    return FiniteMetricMeasureSpace(D, np.asarray(weights))


def write_tu(directory, name, graphs, labels):
    """Write graphs (lists of 0-based edges with node counts) in TU layout."""
    edges, indicator = [], []
    offset = 0
    for g, (n_nodes, elist) in enumerate(graphs, start=1):
        indicator += [g] * n_nodes
        for u, v in elist:
            edges.append((u + offset + 1, v + offset + 1))
            edges.append((v + offset + 1, u + offset + 1))
        offset += n_nodes
    (directory / f"{name}_A.txt").write_text("".join(f"{u}, {v}\n" for u, v in edges))
    (directory / f"{name}_graph_indicator.txt").write_text("".join(f"{g}\n" for g in indicator))
    (directory / f"{name}_graph_labels.txt").write_text("".join(f"{lab}\n" for lab in labels))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tu_fixture(tmp_path):
    # triangle (label 1) and 4-path (label -1)
    write_tu(tmp_path, "TOY", [(3, [(0, 1), (1, 2), (0, 2)]), (4, [(0, 1), (1, 2), (2, 3)])], [1, -1])
    return tmp_path


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
