"""Stochastic reaction-diffusion on metric graphs with delayed dynamic boundary conditions."""

__version__ = "0.1.0"

from .catalog import CatalogFunction, DriftSpec, NoiseSpec  # noqa: E402
from .delay import (  # noqa: E402
    BlockGenerator, DelayMeasure, SegmentBuffer, assemble_full_generator, delay_integral, dirac,
    miyadera_voigt_bound, push_segment, uniform, zero_measure,
)
from .graph import MetricGraph, build_graph, incidence, incident_edges, path_graph, star_graph  # noqa: E402
from .semigroup import dyson_phillips, explicit_unperturbed, expm, spectral_abscissa  # noqa: E402
from .spatial import EdgeCoefficient, NodeMatrixB, assemble_a_frak, boundary_trace, flux_operator  # noqa: E402
from .state import FullState, make_state  # noqa: E402
