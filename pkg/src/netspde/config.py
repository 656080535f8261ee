"""YAML run configuration with strict validation.

Every field is checked before any computation; unknown keys are rejected and
errors name the offending field path (e.g. ``delay.atoms[0]``).
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from . import catalog
from .catalog import DriftSpec, NoiseSpec
from .control import ControlProblem, Policy, boundary_immersion, riccati_gain
from .delay import DelayMeasure, assemble_full_generator, uniform
from .errors import ConfigParseError, NetSPDEError, ValidationError
from .graph import build_graph
from .sde import SCHEMES, SDEConfig, SDEProblem
from .spatial import EdgeCoefficient, NodeMatrixB, assemble_a_frak
from .state import make_state

SCHEMA_VERSION = "1"

_SECTIONS = {
    "schema": False, "graph": True, "grid": True, "coefficients": False, "boundary": False,
    "delay": True, "noise": False, "drift": False, "initial": False, "sde": True,
    "control": False, "analysis": False, "convergence": False,
}


# ---------------------------------------------------------------- helpers


def _keys(d, path: str, allowed: set, required: set = frozenset()):
    if not isinstance(d, dict):
        raise ValidationError(path, "expected a mapping")
    for k in d:
        if k not in allowed:
            raise ValidationError(f"{path}.{k}" if path else str(k), "unknown field")
    for k in required:
        if k not in d:
            raise ValidationError(f"{path}.{k}" if path else k, "missing required field")


def _num(v, path, lo=None, hi=None, strict_lo=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(path, f"expected a number, got {v!r}")
    if integer and (not isinstance(v, int) and not float(v).is_integer()):
        raise ValidationError(path, f"expected an integer, got {v!r}")
    v = int(v) if integer else float(v)
    if not np.isfinite(v):
        raise ValidationError(path, "must be finite")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ValidationError(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ValidationError(path, f"must be <= {hi}, got {v}")
    return v


def _vector(v, path, length, **kw):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.full(length, _num(v, path, **kw))
    if not isinstance(v, list) or len(v) != length:
        raise ValidationError(path, f"expected a number or a list of length {length}")
    return np.array([_num(x, f"{path}[{i}]", **kw) for i, x in enumerate(v)])


def _entry(v, path):
    try:
        return catalog.parse_entry(v)
    except ValueError as exc:
        raise ValidationError(path, str(exc)) from None


def _entries(v, path, length):
    if isinstance(v, list):
        if len(v) != length:
            raise ValidationError(path, f"expected {length} entries, got {len(v)}")
        return tuple(_entry(x, f"{path}[{i}]") for i, x in enumerate(v))
    return (_entry(v, path),) * length


_CALL = re.compile(r"^\s*([a-z-]+)\s*\(([^)]*)\)\s*$")


def _call(v, path, name, nargs):
    mt = _CALL.match(str(v))
    if not mt or mt.group(1) != name:
        raise ValidationError(path, f"expected {name}(...) , got {v!r}")
    try:
        args = [float(a) for a in mt.group(2).split(",")] if mt.group(2).strip() else []
    except ValueError:
        raise ValidationError(path, f"non-numeric argument in {v!r}") from None
    if len(args) != nargs:
        raise ValidationError(path, f"{name} takes {nargs} argument(s)")
    return args


# ---------------------------------------------------------------- config


@dataclass
class ControlConfig:
    q_X: float
    q_z: float
    q_T: float
    z_max: float
    running: str
    policy: str                  # "feedback" | "constant"
    zbar: Optional[np.ndarray]
    P: Optional[np.ndarray]      # explicit matrix, else Riccati
    g_scale: float = 1.0


@dataclass
class RunConfig:
    raw: dict
    graph: Any
    coeff: EdgeCoefficient
    b: NodeMatrixB
    zero_flux: bool
    mu: DelayMeasure
    n_theta: int
    noise: NoiseSpec
    drift: DriftSpec
    d0: np.ndarray
    bump: float
    history: str
    sde: SDEConfig
    control: Optional[ControlConfig] = None
    analysis: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_yaml(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"malformed YAML in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping")
    return doc


def validate(doc: dict, seed: Optional[int] = None, paths: Optional[int] = None) -> RunConfig:
    doc = json.loads(json.dumps(doc, default=str))  # detach and normalize
    if seed is not None:
        doc.setdefault("sde", {})["master_seed"] = int(seed)
    if paths is not None:
        doc.setdefault("sde", {})["n_paths"] = int(paths)
    _keys(doc, "", set(_SECTIONS), {k for k, req in _SECTIONS.items() if req})
    if str(doc.get("schema", SCHEMA_VERSION)) != SCHEMA_VERSION:
        raise ValidationError("schema", f"unsupported schema version {doc['schema']!r}")

    gs = doc["graph"]
    _keys(gs, "graph", {"n_vertices", "edges"}, {"n_vertices", "edges"})
    n = _num(gs["n_vertices"], "graph.n_vertices", lo=2, integer=True)
    if not isinstance(gs["edges"], list):
        raise ValidationError("graph.edges", "expected a list of [tail, head] pairs")
    edges = []
    for i, e in enumerate(gs["edges"]):
        if not (isinstance(e, list) and len(e) == 2):
            raise ValidationError(f"graph.edges[{i}]", "expected [tail, head]")
        edges.append(tuple(_num(x, f"graph.edges[{i}]", integer=True) for x in e))
    try:
        g = build_graph(n, edges)
    except NetSPDEError as exc:
        raise ValidationError("graph", str(exc)) from None
    m = g.n_edges

    _keys(doc["grid"], "grid", {"n_x"}, {"n_x"})
    n_x = _num(doc["grid"]["n_x"], "grid.n_x", lo=3, integer=True)

    cs = doc.get("coefficients", {"c": 1.0})
    _keys(cs, "coefficients", {"c"})
    cspec = cs.get("c", 1.0)
    cl = cspec if isinstance(cspec, list) else [cspec] * m
    if len(cl) != m:
        raise ValidationError("coefficients.c", f"expected {m} entries")
    profiles = []
    for j, c in enumerate(cl):
        p = f"coefficients.c[{j}]" if isinstance(cspec, list) else "coefficients.c"
        if isinstance(c, str):
            a0, a1 = _call(c, p, "affine", 2)
            if a0 <= 0 or a0 + a1 <= 0:
                raise ValidationError(p, "affine(a, b) = a + b x must be positive on [0, 1]")
            profiles.append(lambda x, a0=a0, a1=a1: a0 + a1 * x)
        else:
            profiles.append(_num(c, p, lo=0, strict_lo=True))
    coeff = EdgeCoefficient.from_profiles(profiles, n_x)

    bs = doc.get("boundary", {})
    _keys(bs, "boundary", {"b", "zero_flux"})
    bvec = _vector(bs.get("b", 0.0), "boundary.b", n, hi=0.0)
    zero_flux = bs.get("zero_flux", False)
    if not isinstance(zero_flux, bool):
        raise ValidationError("boundary.zero_flux", "expected true/false")

    ds = doc["delay"]
    _keys(ds, "delay", {"r", "n_theta", "atoms", "density"}, {"r", "n_theta"})
    r = _num(ds["r"], "delay.r", lo=0, strict_lo=True)
    n_theta = _num(ds["n_theta"], "delay.n_theta", lo=1, integer=True)
    atoms = []
    for i, at in enumerate(ds.get("atoms", []) or []):
        p = f"delay.atoms[{i}]"
        if not (isinstance(at, list) and len(at) == 2):
            raise ValidationError(p, "expected [theta, weight]")
        atoms.append((_num(at[0], p, lo=-r - 1e-12, hi=0.0), _num(at[1], p)))
    dens = ds.get("density", "none")
    if dens in (None, "none"):
        mu = DelayMeasure(r, tuple(atoms))
    else:
        (mass,) = _call(dens, "delay.density", "uniform", 1)
        mu = DelayMeasure(r, tuple(atoms), uniform(r, mass).density)

    ns = doc.get("noise", {})
    _keys(ns, "noise", {"g", "g_tilde", "kappa"})
    noise = NoiseSpec(_entries(ns.get("g", "zero"), "noise.g", m),
                      _entries(ns.get("g_tilde", "zero"), "noise.g_tilde", n),
                      _num(ns.get("kappa", 0.0), "noise.kappa"))
    fs = doc.get("drift", {})
    _keys(fs, "drift", {"f"})
    drift = DriftSpec(_entries(fs.get("f", "zero"), "drift.f", m))

    ins = doc.get("initial", {})
    _keys(ins, "initial", {"d0", "bump", "history"})
    d0 = _vector(ins.get("d0", 0.0), "initial.d0", n)
    bump = _num(ins.get("bump", 0.0), "initial.bump")
    history = ins.get("history", "constant")
    if history not in ("constant", "zero"):
        raise ValidationError("initial.history", "expected 'constant' or 'zero'")

    ss = doc["sde"]
    _keys(ss, "sde", {"dt", "t_final", "n_paths", "master_seed", "scheme", "stride"}, {"dt", "t_final"})
    dt = _num(ss["dt"], "sde.dt", lo=0, strict_lo=True)
    t_final = _num(ss["t_final"], "sde.t_final", lo=0)
    scheme = ss.get("scheme", "em")
    if scheme not in SCHEMES:
        raise ValidationError("sde.scheme", f"expected one of {SCHEMES}")
    k = dt / (r / n_theta)
    if abs(k - round(k)) > 1e-9 * max(1, k) or round(k) < 1:
        raise ValidationError("sde.dt", f"must be a positive multiple of the delay step r/n_theta = {r / n_theta}")
    if t_final and abs(t_final / dt - round(t_final / dt)) > 1e-9 * max(1, t_final / dt):
        raise ValidationError("sde.t_final", "must be a multiple of sde.dt")
    sde = SDEConfig(dt, t_final,
                    _num(ss.get("n_paths", 100), "sde.n_paths", lo=1, integer=True),
                    _num(ss.get("master_seed", 0), "sde.master_seed", lo=0, hi=2**64 - 1, integer=True),
                    scheme,
                    _num(ss.get("stride", 1), "sde.stride", lo=1, integer=True))

    control = None
    if "control" in doc:
        control = _control(doc["control"], n, g, n_x, n_theta)

    an = doc.get("analysis", {})
    _keys(an, "analysis", {"times", "dp_terms", "t0"})
    times = an.get("times", [0.25, 0.5, 1.0])
    if not isinstance(times, list) or not times:
        raise ValidationError("analysis.times", "expected a non-empty list")
    analysis = {
        "times": [_num(t, f"analysis.times[{i}]", lo=0, strict_lo=True) for i, t in enumerate(times)],
        "dp_terms": _num(an.get("dp_terms", 4), "analysis.dp_terms", lo=0, hi=12, integer=True),
        "t0": _num(an.get("t0", 1.0), "analysis.t0", lo=0, strict_lo=True),
    }
    for i, t in enumerate(analysis["times"]):
        if abs(t / (r / n_theta) - round(t / (r / n_theta))) > 1e-9 * max(1, t * n_theta / r):
            raise ValidationError(f"analysis.times[{i}]", "must be a multiple of the delay step")

    cv = doc.get("convergence", {})
    _keys(cv, "convergence", {"dt_list", "dt_ref", "n_paths", "mode"})
    convergence = {}
    if cv:
        dl = cv.get("dt_list")
        if not isinstance(dl, list) or len(dl) < 2:
            raise ValidationError("convergence.dt_list", "expected at least two step sizes")
        convergence["dt_list"] = [_num(x, f"convergence.dt_list[{i}]", lo=0, strict_lo=True) for i, x in enumerate(dl)]
        if "dt_ref" in cv:
            convergence["dt_ref"] = _num(cv["dt_ref"], "convergence.dt_ref", lo=0, strict_lo=True)
        convergence["n_paths"] = _num(cv.get("n_paths", sde.n_paths), "convergence.n_paths", lo=2, integer=True)
        mode = cv.get("mode", "strong")
        if mode not in ("strong", "gap"):
            raise ValidationError("convergence.mode", "expected 'strong' or 'gap'")
        convergence["mode"] = mode
        for i, x in enumerate(convergence["dt_list"] + [convergence.get("dt_ref", convergence["dt_list"][0])]):
            kk = x / (r / n_theta)
            if abs(kk - round(kk)) > 1e-9 * max(1, kk) or round(kk) < 1:
                raise ValidationError("convergence.dt_list", f"{x} is not a multiple of the delay step")

    return RunConfig(doc, g, coeff, NodeMatrixB(bvec), zero_flux, mu, n_theta, noise, drift, d0,
                     bump, history, sde, control, analysis, convergence)


def _control(cs, n, g, n_x, n_theta) -> ControlConfig:
    _keys(cs, "control", {"l", "phi", "z_max", "policy", "P"}, {"z_max"})
    ls = cs.get("l", {})
    _keys(ls, "control.l", {"kind", "q_X", "q_z"})
    kind = ls.get("kind", "quadratic")
    if kind not in ("quadratic", "l1"):
        raise ValidationError("control.l.kind", "expected 'quadratic' or 'l1'")
    q_X = _num(ls.get("q_X", 0.0), "control.l.q_X", lo=0)
    q_z = _num(ls.get("q_z", 1.0), "control.l.q_z", lo=0, strict_lo=(kind == "quadratic"))
    ps = cs.get("phi", {})
    _keys(ps, "control.phi", {"q_T"})
    q_T = _num(ps.get("q_T", 0.0), "control.phi.q_T", lo=0)
    z_max = _num(cs["z_max"], "control.z_max", lo=0)
    pol = str(cs.get("policy", "feedback(riccati)")).strip()
    zbar, P = None, None
    if pol.startswith("constant"):
        (zb,) = _call(pol, "control.policy", "constant", 1)
        zbar, pol = np.full(n, zb), "constant"
    else:
        mt = re.match(r"^feedback\((riccati|explicit)\)$", pol)
        if not mt:
            raise ValidationError("control.policy", "expected constant(z) | feedback(riccati) | feedback(explicit)")
        if mt.group(1) == "explicit":
            D = g.n_edges * (n_x - 2) + n + n * (n_theta + 1)
            if "P" not in cs:
                raise ValidationError("control.P", "feedback(explicit) needs a matrix")
            P = np.array(cs["P"], dtype=float) if isinstance(cs["P"], list) else None
            if P is None or P.shape != (D, D) or not np.all(np.isfinite(P)):
                raise ValidationError("control.P", f"expected a finite {D}x{D} matrix")
        pol = "feedback"
    return ControlConfig(q_X, q_z, q_T, z_max, kind, pol, zbar, P)


def load_config(path, seed=None, paths=None) -> RunConfig:
    return validate(load_yaml(path), seed=seed, paths=paths)


# ---------------------------------------------------------------- builders


def build_generator(cfg: RunConfig):
    a = assemble_a_frak(cfg.graph, cfg.coeff, cfg.b)
    return assemble_full_generator(a, cfg.mu, cfg.n_theta, zero_flux=cfg.zero_flux)


def build_problem(cfg: RunConfig, sde: Optional[SDEConfig] = None) -> SDEProblem:
    gen = build_generator(cfg)
    prof = None
    if cfg.bump:
        prof = lambda j, x: cfg.bump * np.sin(np.pi * x)
    x0 = make_state(cfg.graph, cfg.coeff.n_x, cfg.n_theta, cfg.d0, profile=prof, history=cfg.history)
    return SDEProblem(gen, cfg.noise, cfg.drift, x0, sde or cfg.sde)


def build_control(cfg: RunConfig, sde: SDEProblem):
    """ControlProblem and the tournament policies {configured, zero, +z_max, -z_max}."""
    cc = cfg.control
    if cc is None:
        raise ValidationError("control", "this command needs a control section")
    prob = ControlProblem(boundary_immersion(sde.gen), cc.q_X, cc.q_z, cc.q_T, cc.z_max, cc.running,
                          sde.gen.weights, (0.0, cfg.sde.t_final))
    n = cfg.graph.n_vertices
    if cc.policy == "constant":
        main = Policy.constant(cc.zbar)
    else:
        main = Policy.feedback(cc.P if cc.P is not None else riccati_gain(prob, sde))
    policies = {
        cc.policy: main,
        "zero": Policy.constant(np.zeros(n)),
        "plus-max": Policy.constant(np.full(n, cc.z_max)),
        "minus-max": Policy.constant(np.full(n, -cc.z_max)),
    }
    return prob, policies
