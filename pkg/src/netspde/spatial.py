"""Finite-difference discretization of the edge diffusion and node dynamics.

Unknowns of the (u, d) block are ordered edge-major over interior grid points,
followed by the n node values. Edge endpoints are not unknowns: they are the
node values themselves, so continuity holds by construction.

The discrete inner product puts weight h on interior points and weight 1 on
node entries. The node rows use the compact two-point flux
``c_{1/2} (u_1 - u_0) / h``; with it the assembled matrix is exactly
self-adjoint for that inner product and the mass vector is an exact left
null vector when b = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import NonPositiveCoefficient, ShapeMismatch, TraceMismatch
from .graph import MetricGraph, incidence


@dataclass(frozen=True)
class EdgeCoefficient:
    """Samples of c_j on the n_x-point grid of each edge, shape (m, n_x)."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] < 3:
            raise ShapeMismatch(f"coefficient samples must be (m, n_x>=3), got {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise NonPositiveCoefficient("diffusion coefficients must be strictly positive")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n_x(self) -> int:
        return self.samples.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / (self.n_x - 1)

    @classmethod
    def from_profiles(cls, profiles, n_x: int) -> "EdgeCoefficient":
        """Each profile is a positive number or a callable x -> c(x)."""
        x = np.linspace(0.0, 1.0, n_x)
        rows = []
        for p in profiles:
            rows.append(np.asarray(p(x), dtype=float) * np.ones(n_x) if callable(p) else np.full(n_x, float(p)))
        return cls(np.array(rows))

    @classmethod
    def constant(cls, m: int, n_x: int, value: float = 1.0) -> "EdgeCoefficient":
        return cls(np.full((m, n_x), float(value)))


@dataclass(frozen=True)
class NodeMatrixB:
    """Diagonal of B. ``require_stable`` demands at least one strictly negative entry."""

    b: np.ndarray
    require_stable: bool = False

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if np.any(b > 0) or not np.all(np.isfinite(b)):
            raise ValueError("node coefficients b must be finite and <= 0")
        if self.require_stable and not np.any(b < 0):
            raise ValueError("exponential-stability mode needs some b < 0")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.b)


@dataclass(frozen=True)
class EdgeBlock:
    """Second-order stencil of (c u')' on the interior points of one edge.

    ``interior`` couples interior unknowns, ``tail_col``/``head_col`` are the
    columns multiplying the tail and head node values.
    """

    interior: np.ndarray
    tail_col: np.ndarray
    head_col: np.ndarray


def midpoint_coefficients(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c[..., 1:] + c[..., :-1])


def assemble_edge_operator(c) -> EdgeBlock:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size < 3:
        raise ShapeMismatch("need the samples of one edge (length >= 3)")
    if np.any(c <= 0):
        raise NonPositiveCoefficient("diffusion coefficients must be strictly positive")
    n_x = c.size
    h = 1.0 / (n_x - 1)
    cm = midpoint_coefficients(c)  # c_{k+1/2}, k = 0..n_x-2
    k = n_x - 2
    lower, upper = cm[:-1], cm[1:]   # c_{k-1/2}, c_{k+1/2} for interior k = 1..n_x-2
    T = np.diag(-(lower + upper))
    T += np.diag(upper[:-1], 1) + np.diag(lower[1:], -1)
    tail = np.zeros(k)
    head = np.zeros(k)
    tail[0] = lower[0]
    head[-1] = upper[-1]
    return EdgeBlock(T / h**2, tail / h**2, head / h**2)


@dataclass(frozen=True)
class AssembledAfrak:
    matrix: np.ndarray
    weights: np.ndarray
    graph: MetricGraph
    coeff: EdgeCoefficient
    b: NodeMatrixB

    @property
    def n_x(self) -> int:
        return self.coeff.n_x

    @property
    def h(self) -> float:
        return self.coeff.h

    @property
    def n_interior(self) -> int:
        return self.graph.n_edges * (self.n_x - 2)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def interior_index(self, edge: int, k: int) -> int:
        """Row of grid point k (1..n_x-2) on 0-based ``edge``."""
        return edge * (self.n_x - 2) + (k - 1)

    def node_index(self, vertex: int) -> int:
        """Row of 0-based ``vertex``."""
        return self.n_interior + vertex

    def pack(self, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        lead = u.shape[:-2]
        return np.concatenate([u[..., 1:-1].reshape(*lead, -1), d], axis=-1)

    def unpack(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.graph
        lead = y.shape[:-1]
        d = y[..., self.n_interior:]
        u = np.empty(lead + (g.n_edges, self.n_x))
        u[..., 1:-1] = y[..., : self.n_interior].reshape(*lead, g.n_edges, self.n_x - 2)
        u[..., 0] = d[..., g.tails]
        u[..., -1] = d[..., g.heads]
        return u, d.copy()


def assemble_a_frak(g: MetricGraph, coeff: EdgeCoefficient, b: NodeMatrixB) -> AssembledAfrak:
    if coeff.samples.shape[0] != g.n_edges:
        raise ShapeMismatch(f"{coeff.samples.shape[0]} coefficient rows for {g.n_edges} edges")
    if b.b.size != g.n_vertices:
        raise ShapeMismatch(f"{b.b.size} node coefficients for {g.n_vertices} vertices")
    n_x, h = coeff.n_x, coeff.h
    ni = g.n_edges * (n_x - 2)
    D = ni + g.n_vertices
    A = np.zeros((D, D))
    for j in range(g.n_edges):
        blk = assemble_edge_operator(coeff.samples[j])
        sl = slice(j * (n_x - 2), (j + 1) * (n_x - 2))
        A[sl, sl] = blk.interior
        tail, head = ni + g.tails[j], ni + g.heads[j]
        A[sl, tail] += blk.tail_col
        A[sl, head] += blk.head_col

        cm = midpoint_coefficients(coeff.samples[j])
        first, last = sl.start, sl.stop - 1
        A[tail, first] += cm[0] / h
        A[tail, tail] -= cm[0] / h
        A[head, last] += cm[-1] / h
        A[head, head] -= cm[-1] / h
    A[ni:, ni:] += np.diag(b.b)
    weights = np.concatenate([np.full(ni, h), np.ones(g.n_vertices)])
    A.flags.writeable = False
    weights.flags.writeable = False
    return AssembledAfrak(A, weights, g, coeff, b)


def weighted_inner(weights: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sum(weights * x * y, axis=-1)


def symmetry_residual(a: AssembledAfrak) -> float:
    """Relative size of the antisymmetric part of W A."""
    WA = a.weights[:, None] * a.matrix
    return float(np.linalg.norm(WA - WA.T) / np.linalg.norm(WA))


def boundary_trace(state, g: MetricGraph, tol: float = 1e-12) -> np.ndarray:
    """Common endpoint value at each vertex, checking that incident edges agree."""
    u = np.asarray(state.u)
    n = g.n_vertices
    lead = u.shape[:-2]
    out = np.full(lead + (n,), np.nan)
    for j in range(g.n_edges):
        for v, val in ((g.tails[j], u[..., j, 0]), (g.heads[j], u[..., j, -1])):
            prev = out[..., v]
            seen = ~np.isnan(prev)
            if np.any(np.abs(prev[seen] - np.broadcast_to(val, prev.shape)[seen]) > tol * (1 + np.abs(prev[seen]))):
                raise TraceMismatch(f"incident edges disagree at vertex {v + 1}")
            out[..., v] = val
    return out


def flux_operator(state, g: MetricGraph, coeff: EdgeCoefficient) -> np.ndarray:
    """Node flux sum_j phi_{alpha j} c_j(v) u_j'(v) with one-sided 3-point derivatives.

    Positive flux means heat flowing from the edges into the node.
    """
    u = np.asarray(state.u)
    if u.shape[-2:] != coeff.samples.shape:
        raise ShapeMismatch(f"edge field {u.shape[-2:]} vs coefficients {coeff.samples.shape}")
    h = coeff.h
    du0 = (-3 * u[..., 0] + 4 * u[..., 1] - u[..., 2]) / (2 * h)
    du1 = (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * h)
    phi = incidence(g).phi
    out = np.zeros(u.shape[:-2] + (g.n_vertices,))
    for j in range(g.n_edges):
        t, hd = g.tails[j], g.heads[j]
        out[..., t] += phi[t, j] * coeff.samples[j, 0] * du0[..., j]
        out[..., hd] += phi[hd, j] * coeff.samples[j, -1] * du1[..., j]
    return out


def form_energy(X, Y, coeff: EdgeCoefficient, b: NodeMatrixB, g: MetricGraph | None = None) -> float:
    """sum_j int c_j u_j' v_j' dx + sum_alpha b_alpha d^alpha h^alpha (trapezoid rule)."""
    if g is not None:
        dX = boundary_trace(X, g)
        dY = boundary_trace(Y, g)
        if np.any(np.abs(dX - X.d) > 1e-12 * (1 + np.abs(X.d))) or np.any(np.abs(dY - Y.d) > 1e-12 * (1 + np.abs(Y.d))):
            raise TraceMismatch("edge endpoints differ from node values")
    h = coeff.h
    du = np.gradient(X.u, h, axis=-1, edge_order=2)
    dv = np.gradient(Y.u, h, axis=-1, edge_order=2)
    integrand = coeff.samples * du * dv
    edge_part = trapezoid(integrand, dx=h, axis=-1).sum(axis=-1)
    return edge_part + np.sum(b.b * X.d * Y.d, axis=-1)
