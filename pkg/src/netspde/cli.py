"""Command line entry point.

    netspde <command> --config <file.yaml> --out <dir> [--seed N] [--paths N]

Commands: simulate, analyze-semigroup, converge, control-tournament, validate-config.
Exit codes: 0 ok, 2 config could not be read/parsed, 3 validation error, 4 compute error.
Outputs are staged in a temporary directory and moved into ``--out`` only
after the command has finished, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .config import build_control, build_generator, build_problem, load_config
from .control import policy_tournament
from .delay import miyadera_voigt_bound
from .errors import ComputeError, ConfigParseError, NetSPDEError, ValidationError
from .sde import CHUNK, integrate, monte_carlo, run_chunks, scheme_gap, strong_order_estimate
from .semigroup import dyson_phillips, expm, explicit_unperturbed, spectral_abscissa, weighted_norm

COMMANDS = ("simulate", "analyze-semigroup", "converge", "control-tournament", "validate-config")
EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_COMPUTE = 0, 2, 3, 4


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode()


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg):
    """paths.csv: path_id, t, d1..dn, u1_mid..um_mid; mc_summary.csv: terminal statistics."""
    prob = build_problem(cfg)
    g = prob.graph
    n_paths = cfg.sde.n_paths
    mid = prob.gen.afrak.n_x // 2

    def work(chunk):
        return integrate(prob, chunk)

    rows = []
    paths = np.arange(1, n_paths + 1)
    for chunk, tr in zip([paths[i : i + CHUNK] for i in range(0, n_paths, CHUNK)], run_chunks(work, paths)):
        for b, pid in enumerate(chunk):
            for t, X in zip(tr.times, tr.states):
                rows.append([int(pid), float(t), *X.d[b], *X.u[b, :, mid]])
    header = ["path_id", "t"] + [f"d{a + 1}" for a in range(g.n_vertices)] + [f"u{j + 1}_mid" for j in range(g.n_edges)]
    out = {"paths.csv": csv_bytes(header, rows)}
    if n_paths >= 2:
        stats = monte_carlo(prob, n_paths)
        out["mc_summary.csv"] = csv_bytes(
            ["functional", "mean", "var", "ci_lo", "ci_hi"],
            [[k, s.mean, s.var, s.ci_lo, s.ci_hi] for k, s in stats.items()],
        )
    return out


def cmd_analyze_semigroup(cfg):
    """semigroup.csv: t, norm_T, spectral_abscissa, explicit_gap, dp_residual_N0..NK, mv_q."""
    gen = build_generator(cfg)
    w = gen.weights
    K = cfg.analysis["dp_terms"]
    sa = spectral_abscissa(gen.matrix)
    q = miyadera_voigt_bound(cfg.mu, cfg.b, cfg.analysis["t0"])
    rows = []
    for t in cfg.analysis["times"]:
        T = expm(gen.matrix, t).matrix
        T0 = expm(gen.unperturbed, t).matrix
        gap = weighted_norm(explicit_unperturbed(t, gen.afrak, gen.n_theta, gen.mu.r).matrix - T0, w)
        dps = dyson_phillips(gen, t, K, terms=True)
        res = [weighted_norm(S.matrix - T, w) for S in dps]
        rows.append([t, weighted_norm(T, w), sa, gap, *res, q])
    header = ["t", "norm_T", "spectral_abscissa", "explicit_gap"] + [f"dp_residual_N{k}" for k in range(K + 1)] + ["mv_q"]
    return {"semigroup.csv": csv_bytes(header, rows)}


def cmd_converge(cfg):
    """convergence.csv: dt, mean_error, stderr, slope, dt_ref, mode."""
    cv = cfg.convergence
    if not cv:
        raise ValidationError("convergence", "the converge command needs a convergence section")
    prob = build_problem(cfg)
    if cv["mode"] == "strong":
        res = strong_order_estimate(prob, cv["dt_list"], cv["n_paths"], dt_ref=cv.get("dt_ref"))
    else:
        res = scheme_gap(prob, cv["dt_list"], cv["n_paths"])
    rows = [[dt, e, s, res.slope, res.dt_ref, cv["mode"]] for dt, e, s in zip(res.dts, res.errors, res.stderr)]
    return {"convergence.csv": csv_bytes(["dt", "mean_error", "stderr", "slope", "dt_ref", "mode"], rows)}


def cmd_control_tournament(cfg):
    """tournament.csv: policy, J_mean, ci_lo, ci_hi, rank."""
    prob_sde = build_problem(cfg)
    prob, policies = build_control(cfg, prob_sde)
    rows = policy_tournament(prob, policies, prob_sde, cfg.sde.n_paths)
    return {"tournament.csv": csv_bytes(["policy", "J_mean", "ci_lo", "ci_hi", "rank"],
                                        [[r.policy, r.J.mean, r.J.ci_lo, r.J.ci_hi, r.rank] for r in rows])}


HANDLERS = {
    "simulate": cmd_simulate,
    "analyze-semigroup": cmd_analyze_semigroup,
    "converge": cmd_converge,
    "control-tournament": cmd_control_tournament,
}


# ---------------------------------------------------------------- driver


def _commit(outputs: dict, out_dir: str) -> None:
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".netspde-", dir=parent)
    try:
        for name, data in outputs.items():
            with open(os.path.join(stage, name), "wb") as fh:
                fh.write(data)
        os.makedirs(out_dir, exist_ok=True)
        for name in outputs:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def run(command: str, config_path: str, output_dir: str | None, seed=None, paths=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    if command not in COMMANDS:
        print(f"error: unknown command {command!r}", file=stderr)
        return EXIT_CONFIG
    t_start = time.perf_counter()
    try:
        cfg = load_config(config_path, seed=seed, paths=paths)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation error: {exc}", file=stderr)
        return EXIT_VALIDATION
    except (NetSPDEError, ValueError) as exc:
        print(f"validation error: {exc}", file=stderr)
        return EXIT_VALIDATION
    if command == "validate-config":
        return EXIT_OK
    if output_dir is None:
        print("error: --out is required for this command", file=stderr)
        return EXIT_CONFIG
    try:
        try:
            outputs = HANDLERS[command](cfg)
        except ValidationError:
            raise
        except (NetSPDEError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise ComputeError(f"{type(exc).__name__}: {exc}") from exc
    except ValidationError as exc:
        print(f"validation error: {exc}", file=stderr)
        return EXIT_VALIDATION
    except ComputeError as exc:
        print(f"compute error: {exc}", file=stderr)
        return EXIT_COMPUTE
    manifest = {
        "command": command,
        "config_sha256": cfg.digest,
        "master_seed": cfg.sde.master_seed,
        "version": __version__,
        "wall_clock_s": round(time.perf_counter() - t_start, 3),
        "outputs": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(outputs.items())},
    }
    outputs["manifest.json"] = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    try:
        _commit(outputs, output_dir)
    except OSError as exc:
        print(f"compute error: cannot write outputs: {exc}", file=stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="netspde", description="Stochastic diffusion on metric graphs with delayed dynamic boundaries.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--paths", type=int)
    args = ap.parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.paths)


if __name__ == "__main__":
    sys.exit(main())
