"""Bounded, Lipschitz coefficient functions for noise and drift.

Every entry carries its sup bound and Lipschitz constant in the state argument,
so the boundedness/Lipschitz contract can be checked empirically.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

KINDS = ("zero", "constant", "clipped-linear", "sin-modulated")


@dataclass(frozen=True)
class CatalogFunction:
    """f(t, x, y) for one of the catalog kinds.

    zero            0
    constant        sigma
    clipped-linear  clip(sigma * y, -cap, cap)
    sin-modulated   sigma * sin(y)
    """

    kind: str = "zero"
    sigma: float = 0.0
    cap: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown catalog kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "clipped-linear" and not self.cap > 0:
            raise ValueError("clipped-linear needs cap > 0")

    def __call__(self, t, x, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "constant":
            return np.full_like(y, self.sigma)
        if self.kind == "clipped-linear":
            return np.clip(self.sigma * y, -self.cap, self.cap)
        return self.sigma * np.sin(y)

    @property
    def bound(self) -> float:
        if self.kind == "clipped-linear":
            return self.cap
        return abs(self.sigma) if self.kind != "zero" else 0.0

    @property
    def lipschitz(self) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        return abs(self.sigma)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind != "clipped-linear" and self.sigma == 0.0)


_ENTRY = re.compile(r"^\s*([a-z-]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_entry(text: str) -> CatalogFunction:
    """Parse 'zero', 'constant(0.3)', 'clipped-linear(1, 0.5)', 'sin-modulated(0.2)'."""
    mt = _ENTRY.match(str(text))
    if not mt:
        raise ValueError(f"cannot parse catalog entry {text!r}")
    kind, args = mt.group(1), mt.group(2)
    vals = [float(v) for v in args.split(",")] if args and args.strip() else []
    expected = {"zero": 0, "constant": 1, "clipped-linear": 2, "sin-modulated": 1}
    if kind not in expected:
        raise ValueError(f"unknown catalog kind {kind!r}")
    if len(vals) != expected[kind]:
        raise ValueError(f"{kind} takes {expected[kind]} parameter(s), got {len(vals)}")
    if kind == "clipped-linear":
        return CatalogFunction(kind, vals[0], vals[1])
    return CatalogFunction(kind, vals[0] if vals else 0.0)


ZERO = CatalogFunction()


@dataclass(frozen=True)
class NoiseSpec:
    """Per-edge g_j(t, x, u) and per-node g~_alpha(t, d, Phi(eta)).

    The node functions see the segment only through y = d + kappa * Phi(eta)_alpha,
    so their Lipschitz constant in (d, eta) is K * max(1, |kappa| |mu|).
    """

    edge: tuple[CatalogFunction, ...]
    node: tuple[CatalogFunction, ...]
    kappa: float = 0.0

    @classmethod
    def uniform(cls, m: int, n: int, g=ZERO, g_tilde=ZERO, kappa: float = 0.0) -> "NoiseSpec":
        return cls((g,) * m, (g_tilde,) * n, kappa)

    @property
    def is_zero(self) -> bool:
        return all(f.is_zero for f in self.edge + self.node)

    def coefficients(self, t, x, u, d, phi):
        """Return (edge coefficients (..., m, n_x), node coefficients (..., n))."""
        ge = np.stack([f(t, x, u[..., j, :]) for j, f in enumerate(self.edge)], axis=-2)
        y = d + self.kappa * phi
        gn = np.stack([f(t, None, y[..., a]) for a, f in enumerate(self.node)], axis=-1)
        return ge, gn


@dataclass(frozen=True)
class DriftSpec:
    edge: tuple[CatalogFunction, ...]

    @classmethod
    def uniform(cls, m: int, f=ZERO) -> "DriftSpec":
        return cls((f,) * m)

    @property
    def is_zero(self) -> bool:
        return all(f.is_zero for f in self.edge)

    def __call__(self, t, x, u):
        return np.stack([f(t, x, u[..., j, :]) for j, f in enumerate(self.edge)], axis=-2)
