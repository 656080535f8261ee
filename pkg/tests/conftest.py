import numpy as np
import pytest

from netspde.graph import path_graph, star_graph
from netspde.spatial import EdgeCoefficient, NodeMatrixB, assemble_a_frak


@pytest.fixture
def p3():
    return path_graph(3)


@pytest.fixture
def star3():
    return star_graph(3)


def afrak(g, n_x=11, c=1.0, b=0.0):
    coeff = EdgeCoefficient.from_profiles([c] * g.n_edges, n_x)
    return assemble_a_frak(g, coeff, NodeMatrixB(np.full(g.n_vertices, b) if np.isscalar(b) else np.asarray(b, float)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
