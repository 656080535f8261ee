"""Delay measure, segment buffers and the full block generator.

The segment of node alpha is sampled on theta_i = -r + i*dtheta, i = 0..n_theta,
so column n_theta is theta = 0 and always equals the current node value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .errors import HorizonMismatch, NonPositiveT0, StepNotMultipleOfDelayGrid
from .spatial import AssembledAfrak, NodeMatrixB

GRID_TOL = 1e-9


@dataclass(frozen=True)
class DelayMeasure:
    """mu = sum_k w_k delta_{theta_k} + density(theta) dtheta on [-r, 0]."""

    r: float
    atoms: tuple[tuple[float, float], ...] = ()
    density: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"delay horizon must be positive, got {self.r}")
        atoms = tuple((float(th), float(w)) for th, w in self.atoms)
        for th, _ in atoms:
            if not -self.r - GRID_TOL <= th <= GRID_TOL:
                raise ValueError(f"atom location {th} outside [-{self.r}, 0]")
        object.__setattr__(self, "atoms", atoms)

    @property
    def total_variation(self) -> float:
        tv = sum(abs(w) for _, w in self.atoms)
        if self.density is not None:
            tv += quad(lambda s: abs(float(self.density(np.array(s)))), -self.r, 0.0, limit=200)[0]
        return tv

    @property
    def is_zero(self) -> bool:
        return self.density is None and all(w == 0 for _, w in self.atoms)


def dirac(r: float, weight: float = 1.0, at: float | None = None) -> DelayMeasure:
    """Point delay; defaults to the discrete delay at theta = -r."""
    return DelayMeasure(r, ((-r if at is None else at, weight),))


def uniform(r: float, mass: float = 1.0) -> DelayMeasure:
    return DelayMeasure(r, (), lambda th: np.full(np.shape(th), mass / r))


def zero_measure(r: float) -> DelayMeasure:
    return DelayMeasure(r)


def delay_grid(r: float, n_theta: int) -> np.ndarray:
    return np.linspace(-r, 0.0, n_theta + 1)


def quadrature_weights(mu: DelayMeasure, n_theta: int) -> np.ndarray:
    """Weights q with Phi(eta) = eta @ q on the n_theta+1 point delay grid."""
    dth = mu.r / n_theta
    q = np.zeros(n_theta + 1)
    for th, w in mu.atoms:
        pos = (th + mu.r) / dth
        i = int(round(pos))
        if abs(pos - i) < GRID_TOL:
            q[min(max(i, 0), n_theta)] += w  # on-grid atom (incl. delta_{-r}): exact slot read
            continue
        i = int(math.floor(pos))
        frac = pos - i
        q[i] += w * (1 - frac)
        q[i + 1] += w * frac
    if mu.density is not None:
        tw = np.full(n_theta + 1, dth)
        tw[0] = tw[-1] = 0.5 * dth
        q += tw * np.asarray(mu.density(delay_grid(mu.r, n_theta)), dtype=float)
    return q


@dataclass(frozen=True)
class SegmentBuffer:
    r: float
    eta: np.ndarray

    @property
    def n_theta(self) -> int:
        return self.eta.shape[-1] - 1

    @property
    def dtheta(self) -> float:
        return self.r / self.n_theta

    @property
    def grid(self) -> np.ndarray:
        return delay_grid(self.r, self.n_theta)

    @classmethod
    def from_history(cls, r: float, n_theta: int, history: Callable, d0) -> "SegmentBuffer":
        """Sample ``history(theta)`` (returning shape (n,) per theta) and pin theta=0 to d0."""
        th = delay_grid(r, n_theta)
        eta = np.stack([np.asarray(history(t), dtype=float) for t in th], axis=-1)
        eta[..., -1] = d0
        return cls(r, eta)


def delay_integral(mu: DelayMeasure, seg: SegmentBuffer) -> np.ndarray:
    if abs(seg.r - mu.r) > GRID_TOL * max(1.0, mu.r):
        raise HorizonMismatch(f"segment horizon {seg.r} != measure horizon {mu.r}")
    return seg.eta @ quadrature_weights(mu, seg.n_theta)


def grid_steps(dt: float, dtheta: float) -> int:
    """Number of delay slots covered by ``dt``; raises unless dt = k*dtheta, k >= 1."""
    k = dt / dtheta
    kr = int(round(k))
    if kr < 1 or abs(k - kr) > GRID_TOL * max(1.0, k):
        raise StepNotMultipleOfDelayGrid(f"dt={dt} is not a positive multiple of dtheta={dtheta}")
    return kr


def shift_history(eta: np.ndarray, new_value: np.ndarray, k: int) -> np.ndarray:
    """Left shift by k slots; the k new slots interpolate linearly up to new_value."""
    n_slots = eta.shape[-1]
    out = np.empty_like(eta)
    if k >= n_slots:
        # whole window replaced; interpolate between the old present and the new value
        old = eta[..., -1:]
        frac = (np.arange(n_slots) + k - n_slots + 1) / k
        out[...] = old + (new_value[..., None] - old) * frac
        return out
    out[..., : n_slots - k] = eta[..., k:]
    old = eta[..., -1:]
    frac = np.arange(1, k + 1) / k
    out[..., n_slots - k :] = old + (new_value[..., None] - old) * frac
    out[..., -1] = new_value
    return out


def push_segment(seg: SegmentBuffer, new_value, dt: float) -> SegmentBuffer:
    k = grid_steps(dt, seg.dtheta)
    return SegmentBuffer(seg.r, shift_history(seg.eta, np.asarray(new_value, dtype=float), k))


@dataclass(frozen=True)
class BlockGenerator:
    """Discretized generator on (interior u, d, eta) with eta flattened node-major.

    ``unperturbed`` is A_0 (delay row zeroed), ``matrix`` is A = A_0 + A_1.
    The theta=0 slot of each segment carries a copy of its node row, so a state
    with eta(0) = d keeps that property under the flow.
    """

    afrak: AssembledAfrak
    mu: DelayMeasure
    n_theta: int
    unperturbed: np.ndarray
    matrix: np.ndarray
    q: np.ndarray

    @property
    def dtheta(self) -> float:
        return self.mu.r / self.n_theta

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_a(self) -> int:
        return self.afrak.dim

    @property
    def n(self) -> int:
        return self.afrak.graph.n_vertices

    @property
    def perturbation(self) -> np.ndarray:
        return self.matrix - self.unperturbed

    def segment_index(self, vertex: int, slot: int) -> int:
        return self.dim_a + vertex * (self.n_theta + 1) + slot

    @property
    def segment_slice(self) -> slice:
        return slice(self.dim_a, self.dim)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights of the discrete E^2 inner product."""
        tw = np.full(self.n_theta + 1, self.dtheta)
        tw[0] = tw[-1] = 0.5 * self.dtheta
        return np.concatenate([self.afrak.weights, np.tile(tw, self.n)])

    def pack(self, X) -> np.ndarray:
        lead = X.eta.shape[:-2]
        return np.concatenate([self.afrak.pack(X.u, X.d), X.eta.reshape(*lead, -1)], axis=-1)

    def unpack(self, v: np.ndarray):
        from .state import FullState

        u, d = self.afrak.unpack(v[..., : self.dim_a])
        eta = v[..., self.dim_a :].reshape(*v.shape[:-1], self.n, self.n_theta + 1).copy()
        return FullState(u, d, eta)


def without_flux(a: AssembledAfrak) -> AssembledAfrak:
    """Copy of A_a with the flux operator C removed (node rows only see B)."""
    A = np.array(a.matrix)
    ni = a.n_interior
    A[ni:, :] = 0.0
    A[ni:, ni:] = np.diag(a.b.b)
    A.flags.writeable = False
    return replace(a, matrix=A)


def assemble_full_generator(a: AssembledAfrak, mu: DelayMeasure, n_theta: int,
                            zero_flux: bool = False) -> BlockGenerator:
    if n_theta < 1:
        raise ValueError("n_theta must be >= 1")
    if zero_flux:
        a = without_flux(a)
    n, Da = a.graph.n_vertices, a.dim
    S = n_theta + 1
    D = Da + n * S
    dth = mu.r / n_theta
    A0 = np.zeros((D, D))
    A0[:Da, :Da] = a.matrix
    for alpha in range(n):
        base = Da + alpha * S
        idx = np.arange(base, base + n_theta)
        A0[idx, idx] = -1.0 / dth
        A0[idx, idx + 1] = 1.0 / dth  # upwind: information travels from theta=0 toward -r
        A0[base + n_theta, :Da] = a.matrix[a.node_index(alpha)]
    q = quadrature_weights(mu, n_theta)
    A1 = np.zeros((D, D))
    for alpha in range(n):
        base = Da + alpha * S
        A1[a.node_index(alpha), base : base + S] = q
        A1[base + n_theta, base : base + S] = q
    A = A0 + A1
    for M in (A0, A, q):
        M.flags.writeable = False
    return BlockGenerator(a, mu, n_theta, A0, A, q)


def miyadera_voigt_bound(mu: DelayMeasure, b: NodeMatrixB, t0: float) -> float:
    """q = sqrt(t0) * sup_{s in [0, r]} |e^{sB}| * |mu|."""
    if not t0 > 0:
        raise NonPositiveT0(f"t0 must be positive, got {t0}")
    # diagonal B: |e^{sB}|_2 = max_alpha e^{s b_alpha}, monotone in s, so the sup is at an end
    bb = np.asarray(b.b, dtype=float)
    K = max(1.0, float(np.max(np.exp(mu.r * bb))))
    return math.sqrt(t0) * K * mu.total_variation
