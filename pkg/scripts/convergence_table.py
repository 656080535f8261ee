"""Print em and exp-euler strong errors plus the paired scheme gap on the benchmark config."""
import argparse
from pathlib import Path

from netspde.config import build_problem, load_config
from netspde.sde import scheme_gap, strong_order_estimate

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "strong_order.yaml"))
    ap.add_argument("--paths", type=int, default=200)
    args = ap.parse_args()
    cfg = load_config(args.config)
    cv = cfg.convergence
    prob = build_problem(cfg)
    for scheme in ("em", "exp-euler"):
        res = strong_order_estimate(prob, cv["dt_list"], args.paths, scheme=scheme, dt_ref=cv["dt_ref"])
        print(f"{scheme:10s} slope {res.slope:.3f}")
        for dt, e, s in zip(res.dts, res.errors, res.stderr):
            print(f"    dt={dt:.6g}  err={e:.4e} +- {s:.1e}")
    gap = scheme_gap(prob, cv["dt_list"], args.paths)
    print(f"{'gap':10s} slope {gap.slope:.3f}")


if __name__ == "__main__":
    main()
