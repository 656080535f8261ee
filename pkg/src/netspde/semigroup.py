"""Matrix exponentials, the block-explicit unperturbed semigroup and Dyson-Phillips sums."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .delay import BlockGenerator, grid_steps
from .errors import EigenFailure, NonFiniteEntries, StepNotMultipleOfDelayGrid
from .spatial import AssembledAfrak

# numerator coefficients of the [13/13] Pade approximant of exp
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


@dataclass(frozen=True)
class SemigroupOperator:
    matrix: np.ndarray
    t: float
    provenance: str


def _expm_pade13(A: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(A, 1)
    s = max(0, int(math.ceil(math.log2(norm / _THETA13)))) if norm > 0 else 0
    A = A / 2.0**s
    b = _PADE13
    I = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def expm(M, t: float = 1.0) -> SemigroupOperator:
    """e^{tM} by scaling and squaring with the order-13 diagonal Pade approximant."""
    M = np.asarray(M, dtype=float)
    if t < 0:
        raise ValueError("semigroups are only defined for t >= 0")
    if not np.all(np.isfinite(M)):
        raise NonFiniteEntries("matrix has non-finite entries")
    out = _expm_pade13(t * M) if t > 0 and np.any(M) else np.eye(M.shape[0])
    if not np.all(np.isfinite(out)):
        raise NonFiniteEntries("matrix exponential overflowed")
    return SemigroupOperator(out, float(t), "expm")


def spectral_abscissa(M) -> float:
    try:
        ev = np.linalg.eigvals(np.asarray(M, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return float(np.max(ev.real))


def weighted_norm(M: np.ndarray, weights: np.ndarray) -> float:
    """Operator 2-norm of M in the inner product <x, y> = sum w x y."""
    sw = np.sqrt(weights)
    return float(np.linalg.norm(sw[:, None] * M / sw[None, :], 2))


def _node_history_rows(a: AssembledAfrak, n_theta: int, dtheta: float, k: int) -> list[np.ndarray]:
    """Node rows of T_a(j*dtheta), j = 0..k."""
    E = expm(a.matrix, dtheta).matrix
    ni = a.n_interior
    P = np.eye(a.dim)
    rows = [P[ni:].copy()]
    for _ in range(k):
        P = E @ P
        rows.append(P[ni:].copy())
    return rows


def explicit_unperturbed(t: float, a: AssembledAfrak, n_theta: int, r: float,
                         history: str = "coupled") -> SemigroupOperator:
    """Assemble T_0(t) block by block.

    Top-left: T_a(t) = e^{t A_a}. Segment slots with theta <= -t take the old
    segment shifted by t (the nilpotent left shift, zero once t > r). Slots
    with -t < theta <= 0 hold the node values generated since time 0:

    history="coupled"  node rows of T_a(t + theta), so T_0 is a semigroup;
    history="node"     e^{(t + theta) B} d, ignoring the flux coupling.

    The two agree when the flux is removed.
    """
    if history not in ("coupled", "node"):
        raise ValueError("history must be 'coupled' or 'node'")
    dth = r / n_theta
    if t < 0:
        raise ValueError("t must be >= 0")
    K = 0 if t == 0 else grid_steps(t, dth)
    n, Da, S = a.graph.n_vertices, a.dim, n_theta + 1
    D = Da + n * S
    M = np.zeros((D, D))
    M[:Da, :Da] = expm(a.matrix, t).matrix if K else np.eye(Da)
    hist = None
    if K and history == "coupled":
        hist = _node_history_rows(a, n_theta, dth, K)
    elif K:
        ni = a.n_interior
        hist = []
        for j in range(K + 1):
            rows = np.zeros((n, Da))
            rows[np.arange(n), ni + np.arange(n)] = np.exp(j * dth * a.b.b)
            hist.append(rows)
    for alpha in range(n):
        base = Da + alpha * S
        for i in range(S):
            if i + K <= n_theta:
                M[base + i, base + i + K] = 1.0
            else:
                # theta_i + t = (i - n_theta + K) * dtheta > 0
                M[base + i, :Da] = hist[i - n_theta + K][alpha]
    return SemigroupOperator(M, float(t), "explicit-blocks")


def dyson_phillips(gen: BlockGenerator, t: float, N: int, terms: bool = False):
    """Truncated Dyson-Phillips sum  sum_{k<=N} T^k(t).

    T^k(t) = int_0^t T^{k-1}(t-s) A_1 T_0(s) ds is evaluated by the composite
    trapezoid rule on the delay grid. With ``terms=True`` the list of partial
    sums for 0..N is returned instead.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    dth = gen.dtheta
    K = 0 if t == 0 else grid_steps(t, dth)
    a, r = gen.afrak, gen.mu.r
    T0 = [explicit_unperturbed(k * dth, a, gen.n_theta, r).matrix for k in range(K + 1)]
    A1 = gen.perturbation
    rows = np.flatnonzero(np.any(A1 != 0, axis=1))
    A1T0 = [A1[rows] @ T for T in T0]  # only the rows hit by the delay functional

    prev = T0  # T^{k-1}(s_j) for all grid times
    total = T0[K].copy()
    partial = [total.copy()]
    for _ in range(N):
        cur = [np.zeros_like(T0[0])]
        for kk in range(1, K + 1):
            acc = np.zeros_like(T0[0])
            for i in range(kk + 1):
                w = 0.5 if i in (0, kk) else 1.0
                acc += w * (prev[kk - i][:, rows] @ A1T0[i])
            cur.append(dth * acc)
        total = total + cur[K]
        partial.append(total.copy())
        prev = cur
    if terms:
        return [SemigroupOperator(P, float(t), f"dyson-phillips({n})") for n, P in enumerate(partial)]
    return SemigroupOperator(total, float(t), f"dyson-phillips({N})")


def check_semigroup_property(gen: BlockGenerator, t: float, s: float, unperturbed: bool = False) -> float:
    """||T(t+s) - T(t)T(s)|| / ||T(t+s)|| in the weighted norm, via expm."""
    A = gen.unperturbed if unperturbed else gen.matrix
    w = gen.weights
    Tts = expm(A, t + s).matrix
    prod = expm(A, t).matrix @ expm(A, s).matrix
    return weighted_norm(Tts - prod, w) / weighted_norm(Tts, w)


__all__ = [
    "SemigroupOperator", "expm", "spectral_abscissa", "weighted_norm",
    "explicit_unperturbed", "dyson_phillips", "check_semigroup_property",
    "StepNotMultipleOfDelayGrid",
]
