"""Discretized full state (edge profiles, node values, delay segments)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, TraceMismatch


@dataclass
class FullState:
    """State X = (u, d, eta), optionally with leading batch axes.

    u   : (..., m, n_x)       edge profiles on the uniform grid of [0, 1]
    d   : (..., n)            node values
    eta : (..., n, n_theta+1) node histories on [-r, 0]; the last column is theta=0
    """

    u: np.ndarray
    d: np.ndarray
    eta: np.ndarray

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.d.shape[:-1]

    def copy(self) -> "FullState":
        return FullState(self.u.copy(), self.d.copy(), self.eta.copy())

    def check(self, g, tol: float = 1e-12) -> None:
        """Raise if shapes, trace compatibility or segment alignment are off."""
        n, m = g.n_vertices, g.n_edges
        if self.u.shape[-2] != m or self.d.shape[-1] != n or self.eta.shape[-2] != n:
            raise ShapeMismatch(
                f"state shapes u{self.u.shape} d{self.d.shape} eta{self.eta.shape} "
                f"do not match a graph with n={n}, m={m}"
            )
        for name, a in (("u", self.u), ("d", self.d), ("eta", self.eta)):
            if not np.all(np.isfinite(a)):
                raise ShapeMismatch(f"non-finite entries in {name}")
        scale = 1.0 + np.abs(self.d)
        tail_gap = np.abs(self.u[..., 0] - self.d[..., g.tails]) / (1.0 + np.abs(self.d[..., g.tails]))
        head_gap = np.abs(self.u[..., -1] - self.d[..., g.heads]) / (1.0 + np.abs(self.d[..., g.heads]))
        if tail_gap.size and max(tail_gap.max(), head_gap.max()) > tol:
            raise TraceMismatch("edge endpoint values disagree with node values")
        if np.max(np.abs(self.eta[..., -1] - self.d) / scale) > tol:
            raise TraceMismatch("segment value at theta=0 differs from the node value")


def refresh_trace(u: np.ndarray, d: np.ndarray, g) -> None:
    """Overwrite edge endpoint values in place with the node values."""
    u[..., 0] = d[..., g.tails]
    u[..., -1] = d[..., g.heads]


def make_state(g, n_x: int, n_theta: int, d0, profile=None, history="constant") -> FullState:
    """Build a trace-compatible state.

    Edge j is the linear interpolant between its end nodes plus ``profile(j, x)``
    (which must vanish at x=0 and x=1). ``history`` is "constant" (eta = d0) or
    "zero" (eta = 0 except the theta=0 slot), or an array of shape (n, n_theta+1).
    """
    d0 = np.asarray(d0, dtype=float)
    x = np.linspace(0.0, 1.0, n_x)
    u = (1.0 - x) * d0[g.tails][:, None] + x * d0[g.heads][:, None]
    if profile is not None:
        for j in range(g.n_edges):
            u[j] += np.asarray(profile(j, x), dtype=float)
    refresh_trace(u, d0, g)
    if isinstance(history, str):
        if history == "constant":
            eta = np.repeat(d0[:, None], n_theta + 1, axis=1)
        elif history == "zero":
            eta = np.zeros((g.n_vertices, n_theta + 1))
        else:
            raise ValueError(f"unknown history kind {history!r}")
    else:
        eta = np.array(history, dtype=float)
        if eta.shape != (g.n_vertices, n_theta + 1):
            raise ShapeMismatch(f"history must have shape {(g.n_vertices, n_theta + 1)}")
    eta[:, -1] = d0
    return FullState(u, d0.copy(), eta)
