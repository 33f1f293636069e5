"""Command line entry point: ``fracftle <command> [options]``.

Exit status is 0 on success, 1 when a run completes but one of its checks
fails, and 2 for configuration errors. Outputs go to ``--out``; without it
they land in ``$FRACFTLE_OUT/<command>.<format>`` when that variable is set,
and are printed as JSON otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from . import checks, experiments
from .experiments import ConfigError, RegimeConfig
from .fbm import FbmError, GridError, HilbertNoiseSpec, hilbert_increments
from .model import ModelSpec, basis_vector
from .spde import SolverConfig, simulate, write_trajectory
from .variation import Propagator, ftle, iterate_with_variation, write_propagator

OUT_ENV = "FRACFTLE_OUT"


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def _destination(args, suffix: str | None = None) -> Path | None:
    if args.out:
        return Path(args.out)
    root = os.environ.get(OUT_ENV)
    if root:
        Path(root).mkdir(parents=True, exist_ok=True)
        return Path(root) / f"{args.command}.{suffix or args.format}"
    return None


def _emit(args, result: dict, rows: list | None = None) -> None:
    """JSON of ``result`` or CSV of ``rows`` to the destination, else JSON to stdout."""
    dest = _destination(args)
    clean = experiments._clean(result)
    if dest is None:
        print(json.dumps(clean, indent=2, sort_keys=True))
        return
    if args.format == "csv" and rows is not None:
        keys, table = experiments._flatten(rows)
        with dest.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            w.writerows(table)
    else:
        dest.write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    print(f"wrote {dest}")


def _pick(cfg: dict, args, names) -> dict:
    """Merge config-file values with explicitly given command line values."""
    out = dict(cfg)
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    return out


def cmd_fbm_check(args, cfg) -> int:
    opts = _pick(cfg, args, ["seed", "replicas"])
    hursts = args.hurst or opts.pop("hurst", [0.25, 0.5, 0.75])
    opts.pop("hurst", None)
    results = [checks.fbm_check(h, **opts) for h in np.atleast_1d(hursts)]
    _emit(args, {"results": results}, results)
    return 0 if all(r["passed"] for r in results) else 1


def cmd_model_check(args, cfg) -> int:
    opts = _pick(cfg, args, ["seed"])
    if args.replicas is not None:
        opts["pairs"] = args.replicas
    res = checks.model_check(**opts)
    _emit(args, res, [res])
    return 0 if res["passed"] else 1


def _model_and_solver(cfg: dict, args):
    spec = ModelSpec(
        n_modes=int(cfg.get("n_modes", 32)),
        nu=float(cfg.get("nu", 0.0)),
        sigma=float(cfg.get("sigma", 0.0)),
        hurst=float(cfg.get("hurst", 0.5)),
    )
    solver = SolverConfig(
        dt_fast=float(cfg.get("dt_fast", 1e-3)),
        t_end=float(cfg.get("t_end", 1.0)),
        scheme=cfg.get("scheme", "exponential_euler"),
        store_stride=int(cfg.get("store_stride", 1)),
    )
    u0 = float(cfg.get("b0", 0.0)) * basis_vector(1, spec.n_modes)
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 12345))
    noise = None
    if spec.sigma != 0:
        ns = HilbertNoiseSpec(spec.n_modes, spec.hurst, solver.n_steps, solver.dt_fast, seed)
        noise = (hilbert_increments(ns, [int(cfg.get("replica", 0))])[0], solver.dt_fast)
    return spec, solver, u0, noise, seed


_MODEL_FLAGS = ["n_modes", "nu", "sigma", "hurst", "dt_fast", "t_end", "b0", "scheme",
                "store_stride"]


def cmd_simulate(args, cfg) -> int:
    cfg = _pick(cfg, args, _MODEL_FLAGS)
    spec, solver, u0, noise, seed = _model_and_solver(cfg, args)
    traj = simulate(u0, spec, solver, noise)
    dest = _destination(args, "csv")
    provenance = {"model": spec, "solver": solver, "seed": seed}
    if dest is None:
        print(json.dumps({"t_end": float(traj.times[-1]), "final_state": traj.states[-1].tolist(),
                          "seed": seed}, indent=2))
    elif args.format == "json":
        dest.write_text(json.dumps({"times": traj.times.tolist(), "states": traj.states.tolist(),
                                    **experiments._clean(_as_dict(provenance))}, sort_keys=True))
        print(f"wrote {dest}")
    else:
        write_trajectory(traj, dest, **provenance)
        print(f"wrote {dest}")
    return 0


def _as_dict(d: dict) -> dict:
    return {k: asdict(v) if is_dataclass(v) else v for k, v in d.items()}


def cmd_ftle(args, cfg) -> int:
    cfg = _pick(cfg, args, _MODEL_FLAGS)
    spec, solver, u0, noise, seed = _model_and_solver(cfg, args)
    for _, v in iterate_with_variation(u0, spec, solver, noise):
        pass
    prop = Propagator(v.T, solver.n_steps * solver.dt_fast)
    res = {"time": prop.time, "ftle": ftle(prop), "seed": seed, "nu": spec.nu}
    dest = _destination(args)
    if dest is not None and args.format == "csv":
        write_propagator(prop, dest)
        print(f"wrote {dest}")
    else:
        _emit(args, res)
    return 0


def cmd_regime(args, cfg) -> int:
    data = dict(cfg)
    data["case_id"] = args.case
    for name in ("seed", "replicas", "threads", "epsilon", "hurst"):
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    report = experiments.run_case(RegimeConfig.from_mapping(data))
    dest = _destination(args)
    if dest is None:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        experiments.write_report(report, dest, args.format)
        print(f"wrote {dest}")
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_approx_scaling(args, cfg) -> int:
    data = dict(cfg)
    eps = args.eps or data.pop("eps_list", [0.2, 0.14, 0.1])
    hurst = args.hurst if args.hurst is not None else data.pop("hurst", 0.3)
    data.pop("hurst", None)
    kwargs = {k: data.pop(k) for k in ("b0", "sigma_factor", "nu_factor") if k in data}
    for name in ("seed", "replicas", "threads"):
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    data.setdefault("replicas", 20)
    res = experiments.approx_error_study(eps, hurst, RegimeConfig.from_mapping(data), **kwargs)
    res["passed"] = res["slope"] is not None and abs(res["slope"] - res["expected_slope"]) <= 0.3
    _emit(args, res, res["records"])
    return 0 if res["passed"] else 1


def cmd_sup_scaling(args, cfg) -> int:
    data = dict(cfg)
    hurst = args.hurst if args.hurst is not None else data.pop("hurst", 0.5)
    data.pop("hurst", None)
    for name in ("seed", "replicas"):
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    res = experiments.sup_scaling_check(hurst, **data)
    res["passed"] = abs(res["kernel_slope"] - hurst) <= 0.1 and res["stable_slope"] <= 0.2
    rows = [{"T": t, "mean_sup_kernel": c, "mean_sup_stable": s}
            for t, c, s in zip(res["t_grid"], res["mean_sup_kernel"], res["mean_sup_stable"])]
    _emit(args, res, rows)
    return 0 if res["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON file with parameters")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--replicas", type=int, help="number of Monte Carlo replicas")
    common.add_argument("--out", help=f"output file (default: ${OUT_ENV}/<command>.<format>)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, help="worker threads for replica chunks")

    parser = argparse.ArgumentParser(prog="fracftle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fbm-check", parents=[common], help="covariance and self-similarity of fBm")
    p.add_argument("--hurst", type=float, nargs="+")
    p.set_defaults(func=cmd_fbm_check)

    p = sub.add_parser("model-check", parents=[common], help="properties of the cubic model")
    p.set_defaults(func=cmd_model_check)

    for name, func, text in (("simulate", cmd_simulate, "integrate one trajectory"),
                             ("ftle", cmd_ftle, "FTLE of one trajectory")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--n-modes", dest="n_modes", type=int)
        p.add_argument("--nu", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--hurst", type=float)
        p.add_argument("--dt-fast", dest="dt_fast", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--b0", type=float, help="initial kernel amplitude")
        p.add_argument("--scheme", choices=("exponential_euler", "semi_implicit"))
        p.add_argument("--store-stride", dest="store_stride", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("regime", parents=[common], help="Monte Carlo run of one regime")
    p.add_argument("--case", required=True, choices=("I", "II", "III", "IV", "IV-shifted"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--hurst", type=float)
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("approx-scaling", parents=[common], help="amplitude-equation error vs eps")
    p.add_argument("--hurst", type=float)
    p.add_argument("--eps", type=float, nargs="+")
    p.set_defaults(func=cmd_approx_scaling)

    p = sub.add_parser("sup-scaling", parents=[common], help="sup growth of the noise")
    p.add_argument("--hurst", type=float)
    p.set_defaults(func=cmd_sup_scaling)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, FbmError, GridError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
