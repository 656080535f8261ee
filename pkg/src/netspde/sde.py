"""Stochastic integrators, keyed Wiener increments and the Monte Carlo harness.

States may carry leading batch axes (one per path); every step function is
vectorized over them. The segment block is always advanced by the exact shift,
and the edge endpoints are re-synchronized with the node values after a step.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .catalog import DriftSpec, NoiseSpec
from .delay import BlockGenerator, grid_steps, shift_history
from .errors import BlowupDetected, ShapeMismatch
from .semigroup import expm
from .state import FullState, refresh_trace

BLOWUP = 1e12
CHUNK = 250  # paths per work unit; fixed so results never depend on the worker count
SCHEMES = ("em", "exp-euler")


def n_threads() -> int:
    env = os.environ.get("NETSPDE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------- increments


@dataclass(frozen=True)
class WienerIncrement:
    dW1: np.ndarray  # (..., m, n_x), variance dt/h
    dW2: np.ndarray  # (..., n), variance dt

    def __add__(self, other: "WienerIncrement") -> "WienerIncrement":
        return WienerIncrement(self.dW1 + other.dW1, self.dW2 + other.dW2)


def _generator(master_seed: int, path: int) -> tuple[np.random.Philox, np.random.Generator]:
    bg = np.random.Philox(key=[int(master_seed) & (2**64 - 1), int(path)])
    return bg, np.random.Generator(bg)


def _seek(bg: np.random.Philox, step: int) -> None:
    # the step lives in the third counter word, so the draws of one step can
    # never run into those of the next
    st = bg.state
    st["state"]["counter"][:] = [0, 0, int(step), 0]
    st["buffer_pos"] = 4
    st["has_uint32"] = 0
    bg.state = st


def sample_increment(seed_key, dims, dt: float, h: float) -> WienerIncrement:
    """Increment for key (master_seed, path_index, step_index); dims = (m, n_x, n)."""
    if not (dt > 0 and h > 0):
        raise ValueError("dt and h must be positive")
    master, path, step = seed_key
    m, n_x, n = dims
    bg, gen = _generator(master, path)
    _seek(bg, step)
    z = gen.standard_normal(m * n_x + n)
    return WienerIncrement(z[: m * n_x].reshape(m, n_x) * np.sqrt(dt / h), z[m * n_x :] * np.sqrt(dt))


class IncrementSource:
    """Batched keyed increments for a fixed set of paths."""

    def __init__(self, master_seed: int, paths, dims, h: float):
        self.paths = np.asarray(paths, dtype=np.int64)
        self.dims = tuple(dims)
        self.h = h
        self._gens = [_generator(master_seed, p) for p in self.paths]

    def standard(self, step: int) -> WienerIncrement:
        m, n_x, n = self.dims
        z = np.empty((len(self.paths), m * n_x + n))
        for i, (bg, gen) in enumerate(self._gens):
            _seek(bg, step)
            z[i] = gen.standard_normal(m * n_x + n)
        return WienerIncrement(z[:, : m * n_x].reshape(-1, m, n_x), z[:, m * n_x :])

    def get(self, step: int, dt: float) -> WienerIncrement:
        s = self.standard(step)
        return WienerIncrement(s.dW1 * np.sqrt(dt / self.h), s.dW2 * np.sqrt(dt))


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class SDEConfig:
    dt: float
    t_final: float
    n_paths: int = 100
    master_seed: int = 0
    scheme: str = "em"
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be >= 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.stride < 1 or self.n_paths < 1:
            raise ValueError("stride and n_paths must be >= 1")

    @property
    def n_steps(self) -> int:
        k = self.t_final / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, k):
            raise ValueError(f"t_final={self.t_final} is not a multiple of dt={self.dt}")
        return kr


@dataclass
class SDEProblem:
    gen: BlockGenerator
    noise: NoiseSpec
    drift: DriftSpec
    x0: FullState
    cfg: SDEConfig
    _E: dict = field(default_factory=dict, repr=False)

    @property
    def graph(self):
        return self.gen.afrak.graph

    @property
    def dims(self):
        g = self.graph
        return (g.n_edges, self.gen.afrak.n_x, g.n_vertices)

    @property
    def xgrid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.gen.afrak.n_x)

    def propagator(self, dt: float) -> np.ndarray:
        key = round(dt, 15)
        if key not in self._E:
            self._E[key] = expm(self.gen.afrak.matrix, dt).matrix
        return self._E[key]

    def initial(self, batch: int) -> FullState:
        x = self.x0
        rep = lambda a: np.broadcast_to(a, (batch,) + a.shape).copy()
        return FullState(rep(x.u), rep(x.d), rep(x.eta))


# ---------------------------------------------------------------- steps


def delay_values(gen: BlockGenerator, X: FullState) -> np.ndarray:
    return X.eta @ gen.q


def apply_noise(gspec: NoiseSpec, t, X: FullState, inc: WienerIncrement, phi=None, x=None) -> FullState:
    """G(t, X) dW: edge part g_j dW1 pointwise, node part g~_alpha dW2, segment zero."""
    if inc.dW1.shape[-2:] != X.u.shape[-2:] or inc.dW2.shape[-1] != X.d.shape[-1]:
        raise ShapeMismatch(f"increment {inc.dW1.shape}/{inc.dW2.shape} vs state {X.u.shape}/{X.d.shape}")
    if len(gspec.edge) != X.u.shape[-2] or len(gspec.node) != X.d.shape[-1]:
        raise ShapeMismatch("noise spec does not match the number of edges/nodes")
    if x is None:
        x = np.linspace(0.0, 1.0, X.u.shape[-1])
    if phi is None:
        phi = np.zeros_like(X.d)
    ge, gn = gspec.coefficients(t, x, X.u, X.d, phi)
    return FullState(ge * inc.dW1, gn * inc.dW2, np.zeros_like(X.eta))


def _finish(gen: BlockGenerator, X: FullState, y: np.ndarray, k: int) -> FullState:
    a = gen.afrak
    u, d = a.unpack(y)
    refresh_trace(u, d, a.graph)
    eta = shift_history(X.eta, d, k)
    if not (np.all(np.isfinite(y)) and np.max(np.abs(y), initial=0.0) <= BLOWUP
            and np.max(np.abs(eta), initial=0.0) <= BLOWUP):
        raise BlowupDetected("state exceeded 1e12")
    return FullState(u, d, eta)


def _forcing(gen, fspec, gspec, t, dt, X, inc, control, x):
    """Pieces shared by both schemes: delay term, drift and noise in packed form."""
    a = gen.afrak
    ni = a.n_interior
    phi = delay_values(gen, X)
    lead = X.d.shape[:-1]
    f = np.zeros(lead + (a.dim,))
    f[..., ni:] = phi
    if fspec is not None and not fspec.is_zero:
        f[..., :ni] = fspec(t, x, X.u)[..., 1:-1].reshape(*lead, -1)
    if control is not None:
        f = f + control
    if gspec is None or gspec.is_zero or inc is None:
        noise = 0.0
    else:
        dn = apply_noise(gspec, t, X, inc, phi, x)
        noise = a.pack(dn.u, dn.d)
    return f, noise


def em_step(X: FullState, t: float, dt: float, gen: BlockGenerator, fspec, gspec, inc,
            control=None) -> FullState:
    """Euler-Maruyama step for the (u, d) block, exact shift for the segments.

    ``control`` is an optional extra drift in packed (interior, node) layout.
    """
    k = grid_steps(dt, gen.dtheta)
    a = gen.afrak
    x = np.linspace(0.0, 1.0, a.n_x)
    y = a.pack(X.u, X.d)
    f, noise = _forcing(gen, fspec, gspec, t, dt, X, inc, control, x)
    y_new = y + dt * (y @ a.matrix.T + f) + noise
    return _finish(gen, X, y_new, k)


def exp_euler_step(X: FullState, t: float, dt: float, gen: BlockGenerator, fspec, gspec, inc,
                   control=None, E: Optional[np.ndarray] = None) -> FullState:
    """Exponential Euler: y+ = e^{dt A}(y + dt (delay + F + control) + G dW).

    The delay term is frozen at the left point like the drift; ``E`` is
    e^{dt A_a} and should be precomputed once per run.
    """
    k = grid_steps(dt, gen.dtheta)
    a = gen.afrak
    if E is None:
        E = expm(a.matrix, dt).matrix
    x = np.linspace(0.0, 1.0, a.n_x)
    y = a.pack(X.u, X.d)
    f, noise = _forcing(gen, fspec, gspec, t, dt, X, inc, control, x)
    y_new = (y + dt * f + noise) @ E.T
    return _finish(gen, X, y_new, k)


def step(prob: SDEProblem, X, t, dt, inc, scheme=None, control=None) -> FullState:
    scheme = scheme or prob.cfg.scheme
    if scheme == "em":
        return em_step(X, t, dt, prob.gen, prob.drift, prob.noise, inc, control)
    if scheme == "exp-euler":
        return exp_euler_step(X, t, dt, prob.gen, prob.drift, prob.noise, inc, control, prob.propagator(dt))
    raise ValueError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------- paths


@dataclass
class Trajectory:
    times: np.ndarray
    states: list  # FullState per recorded time (batched if several paths)

    @property
    def final(self) -> FullState:
        return self.states[-1]


def integrate(prob: SDEProblem, paths, record: bool = True, control: Optional[Callable] = None,
              on_step: Optional[Callable] = None) -> Trajectory:
    """Integrate a batch of paths over [0, T] with the configured scheme.

    ``control(t, X)`` may return a packed extra drift; ``on_step(t, X)`` is
    called on every grid time including 0 and T.
    """
    cfg = prob.cfg
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    src = IncrementSource(cfg.master_seed, paths, prob.dims, prob.gen.afrak.h)
    X = prob.initial(len(paths))
    n_steps = cfg.n_steps
    times, states = [0.0], [X.copy()]
    for s in range(n_steps):
        t = s * cfg.dt
        if on_step is not None:
            on_step(t, X)
        ctl = control(t, X) if control is not None else None
        inc = None if prob.noise.is_zero else src.get(s, cfg.dt)
        X = step(prob, X, t, cfg.dt, inc, control=ctl)
        if record and ((s + 1) % cfg.stride == 0 or s + 1 == n_steps):
            times.append((s + 1) * cfg.dt)
            states.append(X.copy())
    if on_step is not None:
        on_step(n_steps * cfg.dt, X)
    if not record and n_steps:
        times, states = [n_steps * cfg.dt], [X]
    return Trajectory(np.array(times), states)


def simulate_path(prob: SDEProblem, path_index: int = 1) -> Trajectory:
    """Single path keyed by (master_seed, path_index); snapshots at the configured stride."""
    tr = integrate(prob, [path_index])
    return Trajectory(tr.times, [FullState(s.u[0], s.d[0], s.eta[0]) for s in tr.states])


def run_chunks(fn: Callable, paths: np.ndarray) -> list:
    """Apply ``fn`` to fixed-size chunks of ``paths``; results come back in chunk order."""
    chunks = [paths[i : i + CHUNK] for i in range(0, len(paths), CHUNK)]
    workers = min(n_threads(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, chunks))


# ---------------------------------------------------------------- statistics


@dataclass(frozen=True)
class Stat:
    mean: float
    var: float
    ci_lo: float
    ci_hi: float
    n: int

    @classmethod
    def from_samples(cls, v) -> "Stat":
        v = np.asarray(v, dtype=float)
        n = v.size
        mean = float(np.mean(v))
        var = float(np.var(v, ddof=1)) if n > 1 else 0.0
        half = 1.959963984540054 * np.sqrt(var / n)
        return cls(mean, var, mean - half, mean + half, n)

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo


def default_functionals(prob: SDEProblem) -> dict[str, Callable]:
    a = prob.gen.afrak
    w = a.weights
    out = {f"d{al + 1}": (lambda X, al=al: X.d[..., al]) for al in range(prob.graph.n_vertices)}
    out["mass"] = lambda X: a.pack(X.u, X.d) @ w
    out["energy"] = lambda X: (a.pack(X.u, X.d) ** 2) @ w
    return out


def monte_carlo(prob: SDEProblem, n_paths: Optional[int] = None, functionals=None) -> dict[str, Stat]:
    """Mean, variance and 95% normal CI of terminal functionals over paths 1..n_paths."""
    n_paths = n_paths or prob.cfg.n_paths
    if n_paths < 2:
        raise ValueError("monte_carlo needs n_paths >= 2")
    functionals = functionals or default_functionals(prob)
    names = list(functionals)

    def work(chunk):
        X = integrate(prob, chunk, record=False).final
        return np.stack([np.asarray(functionals[k](X), dtype=float) for k in names], axis=-1)

    vals = np.concatenate(run_chunks(work, np.arange(1, n_paths + 1)), axis=0)
    return {k: Stat.from_samples(vals[:, i]) for i, k in enumerate(names)}


# ---------------------------------------------------------------- convergence


def _lockstep_terminal(prob: SDEProblem, runs, dt_fine: float, paths) -> list[np.ndarray]:
    """Terminal packed states for several (dt, scheme) runs driven by one Brownian path.

    Each coarse increment is the sum of the fine increments it covers.
    """
    T = prob.cfg.t_final
    n_fine = SDEConfig(dt_fine, T).n_steps
    ratios = []
    for dt, _ in runs:
        rr = dt / dt_fine
        if abs(rr - round(rr)) > 1e-9 * rr:
            raise ValueError(f"dt={dt} is not a multiple of the finest step {dt_fine}")
        ratios.append(int(round(rr)))
    src = IncrementSource(prob.cfg.master_seed, paths, prob.dims, prob.gen.afrak.h)
    states = [prob.initial(len(paths)) for _ in runs]
    acc = [None] * len(runs)
    for s in range(n_fine):
        inc = None if prob.noise.is_zero else src.get(s, dt_fine)
        for i, ((dt, scheme), q) in enumerate(zip(runs, ratios)):
            if inc is not None:
                acc[i] = inc if acc[i] is None else acc[i] + inc
            if (s + 1) % q == 0:
                t = ((s + 1) // q - 1) * dt
                states[i] = step(prob, states[i], t, dt, acc[i], scheme=scheme)
                acc[i] = None
    return [prob.gen.pack(X) for X in states]


@dataclass(frozen=True)
class ConvergenceResult:
    slope: float
    dts: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray
    dt_ref: float


def _fit(dts, errs) -> float:
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def _error_table(prob, runs, ref_index, dt_fine, n_paths, pairs):
    w = prob.gen.weights

    def work(chunk):
        term = _lockstep_terminal(prob, runs, dt_fine, chunk)
        return np.stack([np.sqrt(((term[i] - term[j]) ** 2) @ w) for i, j in pairs], axis=-1)

    e = np.concatenate(run_chunks(work, np.arange(1, n_paths + 1)), axis=0)
    return e.mean(axis=0), e.std(axis=0, ddof=1) / np.sqrt(e.shape[0])


def strong_order_estimate(prob: SDEProblem, dt_list, n_paths: int, scheme: Optional[str] = None,
                          dt_ref: Optional[float] = None) -> ConvergenceResult:
    """Slope of log E|X_dt(T) - X_ref(T)|_W against log dt under shared Brownian paths.

    The reference uses ``dt_ref`` (default: the smallest entry of ``dt_list``,
    which is then dropped from the fit).
    """
    scheme = scheme or prob.cfg.scheme
    dts = sorted(dt_list, reverse=True)
    if dt_ref is None:
        dt_ref, dts = dts[-1], dts[:-1]
    if len(dts) < 2:
        raise ValueError("need at least two step sizes besides the reference")
    runs = [(dt, scheme) for dt in dts] + [(dt_ref, scheme)]
    ref = len(runs) - 1
    mean, se = _error_table(prob, runs, ref, dt_ref, n_paths, [(i, ref) for i in range(len(dts))])
    return ConvergenceResult(_fit(dts, mean), np.array(dts), mean, se, float(dt_ref))


def scheme_gap(prob: SDEProblem, dt_list, n_paths: int) -> ConvergenceResult:
    """Paired terminal distance between exp-euler and em at each dt (same increments)."""
    dts = sorted(dt_list, reverse=True)
    runs = [(dt, s) for dt in dts for s in ("exp-euler", "em")]
    pairs = [(2 * i, 2 * i + 1) for i in range(len(dts))]
    mean, se = _error_table(prob, runs, None, dts[-1], n_paths, pairs)
    return ConvergenceResult(_fit(dts, mean), np.array(dts), mean, se, float(dts[-1]))
