"""Boundary control: Hamiltonian argmin, linear costate proxies and policy evaluation.

The control z in R^n enters the drift as G(t, X) R z, where R embeds the
control into the node rows. Costs are l = q_X |X|^2 + q_z |z|^2 (or q_z |z|_1)
and phi = q_T |X(T)|^2, with |.| the discrete E^2 norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_continuous_are

from .errors import EmptyControlDomain
from .sde import IncrementSource, SDEProblem, Stat, Trajectory, run_chunks, step
from .state import FullState

RUNNING = ("quadratic", "l1")


@dataclass(frozen=True)
class ControlProblem:
    R: np.ndarray          # (D_a, n): control -> packed (interior, node) rows
    q_X: float = 0.0
    q_z: float = 1.0
    q_T: float = 0.0
    z_max: float = 1.0
    running: str = "quadratic"
    weights: Optional[np.ndarray] = None  # E^2 weights for |X|^2 (full packed layout)
    horizon: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "R", R)
        if not np.all(np.isfinite(R)):
            raise ValueError("R must be finite")
        if not (self.z_max >= 0) or not math.isfinite(self.z_max):
            raise EmptyControlDomain(f"box [-{self.z_max}, {self.z_max}] is empty")
        if self.running not in RUNNING:
            raise ValueError(f"running cost must be one of {RUNNING}")
        if self.q_X < 0 or self.q_z < 0 or self.q_T < 0:
            raise ValueError("cost weights must be >= 0")
        if self.running == "quadratic" and self.q_z == 0:
            raise ValueError("quadratic running cost needs q_z > 0")

    @property
    def n_controls(self) -> int:
        return self.R.shape[1]

    def state_norm2(self, v) -> np.ndarray:
        if self.weights is None:
            return np.zeros(np.shape(v)[:-1])
        return (np.asarray(v) ** 2) @ self.weights

    def control_cost(self, z) -> np.ndarray:
        if self.running == "quadratic":
            return self.q_z * np.sum(z**2, axis=-1)
        return self.q_z * np.sum(np.abs(z), axis=-1)

    def running_cost(self, t, v, z) -> np.ndarray:
        """l(t, X, z); ``v`` is the packed full state (ignored when q_X = 0)."""
        base = self.q_X * self.state_norm2(v) if self.q_X else 0.0
        return base + self.control_cost(z)


def boundary_immersion(gen, scale=1.0) -> np.ndarray:
    """R mapping z_alpha onto the node row of vertex alpha (scaled)."""
    a = gen.afrak
    n = a.graph.n_vertices
    R = np.zeros((a.dim, n))
    R[a.n_interior + np.arange(n), np.arange(n)] = scale
    return R


def _golden(f, lo, hi, tol=1e-12, it=200):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(it):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def hamiltonian(prob: ControlProblem, t, X, Y):
    """Return (psi, z_star) with psi = -min_z {l(t, X, z) + Y . R z} over the box.

    X is a packed full state (or None when q_X = 0); Y has the length of R's rows.
    Works on leading batch axes.
    """
    if not prob.z_max >= 0:
        raise EmptyControlDomain("empty control box")
    Y = np.asarray(Y, dtype=float)
    s = Y @ prob.R  # (R^T Y)
    zm = prob.z_max
    if prob.running == "quadratic":
        z = np.clip(-s / (2 * prob.q_z), -zm, zm)
    else:
        flat = np.atleast_1d(s).reshape(-1)
        out = np.empty_like(flat)
        for i, si in enumerate(flat):
            h = lambda zz, si=si: prob.q_z * abs(zz) + si * zz
            cands = [-zm, 0.0, zm, _golden(h, -zm, zm)]
            out[i] = min(cands, key=h)
        z = out.reshape(np.shape(s))
    v = np.zeros(np.shape(Y)[:-1] + (1,)) if X is None else X
    psi = -(prob.running_cost(t, v, z) + np.sum(s * z, axis=-1))
    return psi, z


# ---------------------------------------------------------------- proxies


def _fold(gen, v: np.ndarray) -> np.ndarray:
    """Project a full-layout covector onto the (interior, node) layout.

    The theta=0 slot mirrors the node value, so its component adds to the node.
    """
    Da, n = gen.dim_a, gen.n
    out = v[..., :Da].copy()
    slots = [gen.segment_index(al, gen.n_theta) for al in range(n)]
    out[..., gen.afrak.n_interior :] += v[..., slots]
    return out


def _lift(gen, M: np.ndarray) -> np.ndarray:
    """Embed (interior, node)-layout columns into the full layout (node rows copied to theta=0 slots)."""
    out = np.zeros((gen.dim,) + M.shape[1:])
    out[: gen.dim_a] = M
    ni = gen.afrak.n_interior
    for al in range(gen.n):
        out[gen.segment_index(al, gen.n_theta)] = M[ni + al]
    return out


def noise_scaling(sde: SDEProblem, t, X: FullState) -> np.ndarray:
    """Diagonal of G(t, X) on the packed (interior, node) layout."""
    a = sde.gen.afrak
    phi = X.eta @ sde.gen.q
    ge, gn = sde.noise.coefficients(t, sde.xgrid, X.u, X.d, phi)
    lead = X.d.shape[:-1]
    return np.concatenate([ge[..., 1:-1].reshape(*lead, -1), gn], axis=-1)


def controlled_drift(prob: ControlProblem, sde: SDEProblem, t, X: FullState, z) -> np.ndarray:
    return noise_scaling(sde, t, X) * (z @ prob.R.T)


def riccati_gain(prob: ControlProblem, sde: SDEProblem) -> np.ndarray:
    """P solving the algebraic Riccati equation of the deterministic LQ problem on the full generator.

    The input matrix is G R evaluated at the zero state, so this is exact for additive noise.
    The theta=0 slots duplicate the node values (their difference is a neutral,
    uncontrollable mode), so the equation is solved in coordinates where each
    slot is identified with its node and P is zero on the slot rows/columns.
    """
    gen = sde.gen
    zero = FullState(np.zeros_like(sde.x0.u), np.zeros_like(sde.x0.d), np.zeros_like(sde.x0.eta))
    G0 = noise_scaling(sde, 0.0, zero)
    slots = np.array([gen.segment_index(al, gen.n_theta) for al in range(gen.n)])
    keep = np.setdiff1d(np.arange(gen.dim), slots)
    L = np.eye(gen.dim)[:, keep]  # reduced -> full, copying node values into the slots
    L[slots, gen.afrak.n_interior + np.arange(gen.n)] = 1.0  # node columns precede all slots in keep
    A = gen.matrix[keep] @ L
    B = (_lift(gen, G0[:, None] * prob.R))[keep]
    w = prob.weights if prob.weights is not None else gen.weights
    Q = L.T @ np.diag(max(prob.q_X, 1e-12) * w) @ L
    Rm = prob.q_z * np.eye(prob.n_controls)
    Pr = solve_continuous_are(A, B, Q, Rm)
    P = np.zeros((gen.dim, gen.dim))
    P[np.ix_(keep, keep)] = 0.5 * (Pr + Pr.T)
    return P


def costate_proxy(P: np.ndarray, sde: SDEProblem, t, X: FullState) -> np.ndarray:
    """Y = G(t, X)^T (2 P X) folded onto the (interior, node) layout."""
    v = 2.0 * (sde.gen.pack(X) @ P.T)
    return noise_scaling(sde, t, X) * _fold(sde.gen, v)


# ---------------------------------------------------------------- policies


@dataclass(frozen=True)
class Policy:
    kind: str                       # "constant" | "feedback"
    zbar: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, zbar) -> "Policy":
        return cls("constant", zbar=np.atleast_1d(np.asarray(zbar, dtype=float)))

    @classmethod
    def feedback(cls, P) -> "Policy":
        return cls("feedback", P=np.asarray(P, dtype=float))

    def act(self, prob: ControlProblem, sde: SDEProblem, t, X: FullState) -> np.ndarray:
        lead = X.d.shape[:-1]
        zm = prob.z_max
        if self.kind == "constant":
            z = np.broadcast_to(self.zbar, lead + (prob.n_controls,))
            return np.clip(z, -zm, zm)
        if self.kind == "feedback":
            Y = costate_proxy(self.P, sde, t, X)
            return hamiltonian(prob, t, sde.gen.pack(X), Y)[1]
        raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass
class ClosedLoopResult:
    trajectory: Trajectory
    controls: np.ndarray   # (steps+1, batch, n)
    running: np.ndarray    # (steps+1, batch)
    cost: np.ndarray       # (batch,)


def simulate_closed_loop(prob: ControlProblem, policy: Policy, sde: SDEProblem, paths,
                         record: bool = True) -> ClosedLoopResult:
    """Controlled dynamics on a batch of paths; cost by the trapezoid rule plus terminal cost."""
    cfg = sde.cfg
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    src = IncrementSource(cfg.master_seed, paths, sde.dims, sde.gen.afrak.h)
    X = sde.initial(len(paths))
    N = cfg.n_steps
    times, states, zs, ls = [], [], [], []
    for s in range(N + 1):
        t = s * cfg.dt
        z = policy.act(prob, sde, t, X)
        zs.append(np.array(z))
        ls.append(prob.running_cost(t, sde.gen.pack(X), z))
        if record and (s % cfg.stride == 0 or s == N):
            times.append(t)
            states.append(X.copy())
        if s == N:
            break
        inc = None if sde.noise.is_zero else src.get(s, cfg.dt)
        X = step(sde, X, t, cfg.dt, inc, control=controlled_drift(prob, sde, t, X, z))
    ls = np.array(ls)
    J = (trapezoid(ls, dx=cfg.dt, axis=0) if N else np.zeros(len(paths)))
    J = J + prob.q_T * prob.state_norm2(sde.gen.pack(X))
    if not record:
        times, states = [N * cfg.dt], [X]
    return ClosedLoopResult(Trajectory(np.array(times), states), np.array(zs), ls, J)


def cost_estimate(prob: ControlProblem, policy: Policy, sde: SDEProblem, n_paths: int) -> Stat:
    """Monte Carlo J over paths 1..n_paths with a 95% normal CI."""
    def work(chunk):
        return simulate_closed_loop(prob, policy, sde, chunk, record=False).cost

    return Stat.from_samples(np.concatenate(run_chunks(work, np.arange(1, n_paths + 1))))


@dataclass(frozen=True)
class TournamentRow:
    policy: str
    J: Stat
    rank: int


def policy_tournament(prob: ControlProblem, policies: dict, sde: SDEProblem, n_paths: int) -> list[TournamentRow]:
    """Common-random-number comparison; equal means share a rank."""
    if len(policies) < 2:
        raise ValueError("a tournament needs at least two policies")
    stats = {name: cost_estimate(prob, pol, sde, n_paths) for name, pol in policies.items()}
    means = sorted({s.mean for s in stats.values()})
    rows = [TournamentRow(name, st, 1 + sum(m < st.mean for m in means)) for name, st in stats.items()]
    return sorted(rows, key=lambda r: (r.rank, r.policy))


def ci_separated(a: Stat, b: Stat) -> bool:
    """True when a's 95% CI lies strictly below b's."""
    return a.ci_hi < b.ci_lo
