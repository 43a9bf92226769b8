"""Command line front end for the experiment drivers."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import (ExperimentConfig, run_convergence_det,
                          run_convergence_stoch, run_projection_study,
                          run_spacetime, run_support_study)

_EXPERIMENTS = {
    "project": run_projection_study,
    "converge-det": run_convergence_det,
    "converge-stoch": run_convergence_stoch,
    "support": run_support_study,
    "spacetime": run_spacetime,
}


def _int_list(text: str):
    return tuple(int(v) for v in text.split(",") if v)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pmfem",
        description="Experiment harness for the very-weak porous-medium solver")
    ap.add_argument("--config", help="JSON file with ExperimentConfig fields; "
                                     "flags override it")
    ap.add_argument("--experiment", choices=sorted(_EXPERIMENTS))
    ap.add_argument("--J-list", type=_int_list, dest="J_list",
                    help="comma separated cell counts, e.g. 32,64,128")
    ap.add_argument("--N-list", type=_int_list, dest="N_list",
                    help="comma separated step counts")
    ap.add_argument("--p", type=float)
    ap.add_argument("--d", type=int, choices=(1, 2))
    ap.add_argument("--L", type=float)
    ap.add_argument("--T", type=float)
    ap.add_argument("--t-lo", type=float, dest="t_lo")
    ap.add_argument("--sigma", choices=("none", "linear", "spacetime"))
    ap.add_argument("--sigma0", type=float)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--quad-order", type=int, dest="quad_order")
    return ap


def config_from_args(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    fields = {}
    if args.config:
        with open(args.config) as fh:
            fields.update(json.load(fh))
    for key in ("experiment", "J_list", "N_list", "p", "d", "L", "T", "t_lo",
                "sigma", "sigma0", "samples", "seed", "out", "quad_order"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if "J_list" in fields:
        fields["J_list"] = tuple(fields["J_list"])
    if "N_list" in fields:
        fields["N_list"] = tuple(fields["N_list"])
    return ExperimentConfig(**fields)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        result = _EXPERIMENTS[cfg.experiment](cfg)
    except Exception as exc:  # surface solver/config failures as exit status
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg.experiment == "project":
        _, slopes = result
        for (target, op), (slope, res) in sorted(slopes.items()):
            print(f"{target} {op}: slope {slope:.3f} (lsq residual {res:.2e})")
    elif cfg.experiment == "converge-det":
        _, _, slopes = result
        for name, (slope, res) in sorted(slopes.items()):
            print(f"{name} slope {slope:.3f} (lsq residual {res:.2e})")
    elif cfg.experiment == "converge-stoch":
        for N, J, mean, stderr, samples, failures in result:
            print(f"N={N} J={J} mean {mean:.6g} +/- {stderr:.2g} "
                  f"({samples} samples, {failures} failures)")
    if cfg.out:
        print(f"wrote {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
