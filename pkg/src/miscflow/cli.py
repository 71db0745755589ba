"""Command-line driver: ``miscflow {run, verify, sweep-eps, sweep-k}``.

Exit status is 0 when every checked invariant holds, 1 when an invariant or
convergence flag fails, and 2 on configuration or solver errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PRESETS, SimConfig, build_config, load_config, preset
from .errors import ConfigError, MaximumPrincipleError, SolverError
from .io import snapshot_steps, write_fields
from .transport import simulate, time_levels
from .verify import audit_run, manufactured_convergence, regularization_sweep, truncation_sweep

log = logging.getLogger("miscflow")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _load(args) -> SimConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset, args.n)
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.T is not None or args.dt is not None:
        doc = dict(cfg.raw)
        doc["time"] = {"T": args.T if args.T is not None else cfg.T,
                       "dt": args.dt if args.dt is not None else cfg.dt}
        cfg = build_config(doc)
    return cfg


def _out_dir(args, cfg: SimConfig) -> Path:
    out = Path(args.out if args.out else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    model = cfg.model()
    n_steps = len(time_levels(cfg.T, cfg.dt))
    wanted = set(snapshot_steps(n_steps, cfg.cadence))

    def snap(state):
        if state.step in wanted:
            write_fields(state, out / f"fields_{state.step:05d}", cfg.grid)

    history = simulate(model, cfg.c0, cfg.T, cfg.dt, callback=snap)
    report = audit_run(history, model)
    report.to_csv(out / "report.csv")
    print(report.summary())
    for k, v in report.details.items():
        print(f"  {k} = {v:.6g}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    out = Path(args.out or "out")
    ok = True
    for case in ("pressure", "transport", "temporal"):
        rep = manufactured_convergence(case)
        rep.to_csv(out / f"mms_{case}.csv")
        orders = ", ".join(f"{o:.3f}" for v in rep.orders.values() for o in v)
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status}  {case}: orders [{orders}]")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def _print_sweep(rep) -> None:
    for name, vals in rep.diffs.items():
        print(f"  {name}: " + ", ".join(f"{v:.6e}" for v in vals))
    for name, ok in rep.flags.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")


def cmd_sweep_eps(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    h = max(cfg.grid.hx, cfg.grid.hy)
    eps = [float(e) * h for e in args.eps_cells]
    rep = regularization_sweep(cfg.model(), cfg.c0, cfg.T, cfg.dt, eps, jobs=args.jobs)
    rep.to_csv(out / "sweep_eps.csv")
    _print_sweep(rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep_k(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    rep = truncation_sweep(cfg.model(), cfg.c0, cfg.T, cfg.dt, args.k, jobs=args.jobs)
    rep.to_csv(out / "sweep_k.csv")
    print(f"  max cell speed of the untruncated run: {rep.max_speed:.6g}")
    _print_sweep(rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="miscflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_case_args(p):
        p.add_argument("--config", type=str, help="TOML configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in case")
        p.add_argument("--n", type=int, default=16, help="cells per axis for presets")
        p.add_argument("--T", type=float, default=None, help="override final time")
        p.add_argument("--dt", type=float, default=None, help="override time step")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    p = sub.add_parser("run", help="simulate one configuration and audit it")
    add_case_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="manufactured-solution convergence suite")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep-eps", help="mollification-radius sweep")
    add_case_args(p)
    p.add_argument("--eps-cells", type=float, nargs="+", default=[8, 4, 2, 0],
                   help="radii in multiples of the cell width, descending")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("sweep-k", help="dispersion truncation sweep")
    add_case_args(p)
    p.add_argument("--k", type=float, nargs="+", default=[0.1, 1.0, 10.0, 1e6],
                   help="truncation levels, ascending")
    p.set_defaults(func=cmd_sweep_k)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SolverError, MaximumPrincipleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
