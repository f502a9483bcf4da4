"""``robust-explore`` command line.

Exit status is 0 on success, 2 for usage or configuration errors and 3 for
unexpected internal failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .explore import POLICIES
from .lqr import SdpFailure
from .sim import CostModel
from .synthesis import minmax_controller, relaxed_sls, robust_lqr, robust_sls
from .sysid import EllipsoidRegion

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _dims(text: str) -> tuple[int, int]:
    try:
        dx, du = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("dims must look like DX,DU") from exc
    if dx < 1 or du < 1:
        raise argparse.ArgumentTypeError("dims must be positive")
    return dx, du


def _lam(text: str):
    if text == "heuristic":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("lambda must be a number or 'heuristic'") from exc


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _dump(obj, path: Path | None) -> None:
    text = json.dumps(_jsonable(obj), indent=1, sort_keys=True)
    if path is None:
        print(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")


def _write_rows(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in r.items()})


# -- config handling ---------------------------------------------------------------

def _load_config(args) -> bench.ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    overrides = {
        "preset": args.preset, "policy": args.policy, "synthesis": args.synthesis,
        "stopping": args.stopping, "region": args.region, "trials": args.trials,
        "seed_base": args.seed, "max_horizon": args.max_horizon, "lam": args.lam,
        "delta": args.delta, "C": args.C,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if not any(k in data for k in ("preset", "A", "random_C")):
        data["preset"] = "dean"
    try:
        return bench.ExperimentConfig.from_dict(data)
    except (bench.ConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _add_config_flags(p, with_grid_fields: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--preset", choices=sorted(bench.PRESETS))
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="seed of the first trial")
    p.add_argument("--max-horizon", type=int)
    p.add_argument("--lam", type=_lam, help="prior precision or 'heuristic'")
    p.add_argument("--C", type=float, help="norm bound used by the heuristic lambda")
    p.add_argument("--delta", type=float)
    p.add_argument("--synthesis", choices=bench.SYNTHESES)
    if with_grid_fields:
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--stopping", choices=bench.STOPPING)
        p.add_argument("--region", choices=bench.REGIONS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))


# -- subcommands ---------------------------------------------------------------------

def cmd_explore(args) -> int:
    cfg = _load_config(args)
    logs = bench.run_trials(cfg, args.workers)
    out = args.out
    log_dir = out / "logs" / cfg.config_hash()
    log_dir.mkdir(parents=True, exist_ok=True)
    for k, lg in enumerate(logs):
        _dump(lg.to_json(), log_dir / f"trial_{cfg.seed_base + k:05d}.json")
    _dump(cfg.to_json(), log_dir / "config.json")
    summary = bench.summarize(cfg, logs)
    bench.write_summary_csv(out / "summary.csv", [summary])
    print(",".join(bench.SUMMARY_COLUMNS))
    print(",".join(str(v) for v in summary.row()))
    return EXIT_OK


def cmd_table1(args) -> int:
    args.policy = args.stopping = args.region = None
    base = _load_config(args)

    def progress(cfg, s):
        print(f"  {s.policy:<12} {s.region:<10} median steps {s.median_steps:g}",
              file=sys.stderr)

    results = bench.table1(base, args.workers, on_cell=progress)
    summaries = [s for _, s, _ in results]
    args.out.mkdir(parents=True, exist_ok=True)
    bench.write_summary_csv(args.out / "table1.csv", summaries)
    table = bench.format_table1(summaries)
    (args.out / "table1.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_coverage(args) -> int:
    rows = []
    for dims in args.dims:
        for scale in args.lam_scale:
            rows += bench.coverage_study(dims[0], dims[1], args.C, lam_scale=scale,
                                         delta=args.delta, n_systems=args.systems,
                                         n_steps=args.steps, seed=args.seed)
    _write_rows(args.out / "coverage.csv", rows)
    for r in rows:
        print(f"dims=({r['dx']},{r['du']}) C={r['C']:g} lam_scale={r['lam_scale']:g} "
              f"coverage={r['coverage']:.3f}")
    return EXIT_OK


def cmd_radius_compare(args) -> int:
    rows = bench.radius_compare(args.systems, args.radii, args.perturbations, args.seed)
    _write_rows(args.out / "radius_compare.csv", rows)
    for k in range(args.systems):
        rc = bench.stabilized_radius(rows, k, "cec_cost")
        rr = bench.stabilized_radius(rows, k, "robust_cost")
        print(f"system {k}: CEC radius {rc:g}, robust radius {rr:g}")
    return EXIT_OK


def cmd_equivalence(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    report = bench.equivalence_study(args.trials, args.seed, dims=tuple(args.dims))
    _dump(report, args.out / "equivalence.json")
    for key in ("trials", "marginal_fraction", "agreement", "worst_sls_to_lqr_min_eig",
                "worst_lqr_to_sls_min_eig", "worst_roundtrip_residual"):
        print(f"{key}: {report[key]}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        region = EllipsoidRegion.from_json(json.loads(Path(args.region_json).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read region {args.region_json}: {exc}") from exc
    cost = CostModel.identity(region.dx, region.du)
    result: dict = {"method": args.method}
    if args.method in ("robust_sls", "robust_lqr"):
        out = (robust_sls(region) if args.method == "robust_sls"
               else robust_lqr(region, cost, args.sigma_w_sq))
        result.update(status=out.status, marginal=out.marginal, solver_status=out.solver_status)
        if out.feasible:
            result["certificate"] = out.certificate.to_json()
    else:
        try:
            if args.method == "relaxed_sls":
                cert, t = relaxed_sls(region)
                result.update(status="feasible", t=t, certificate=cert.to_json())
            else:
                K, t = minmax_controller(region)
                result.update(status="feasible", t=t, K=K.tolist())
        except SdpFailure as exc:
            result.update(status=exc.status)
    _dump(result, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-explore",
                                     description="Robust stabilization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run seeded exploration trials for one config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("table1", help="policy x stopping-rule grid on a preset system")
    _add_config_flags(p, with_grid_fields=False)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("coverage", help="empirical credibility-region coverage")
    p.add_argument("--dims", type=_dims, action="append",
                   help="DX,DU (repeatable, default 1,1)")
    p.add_argument("--C", type=_floats, default=[0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    p.add_argument("--lam-scale", type=_floats, default=[1.0])
    p.add_argument("--systems", type=int, default=200)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("radius-compare", help="worst-case cost of CEC vs robust LQR on balls")
    p.add_argument("--systems", type=int, default=5)
    p.add_argument("--radii", type=_floats, default=None)
    p.add_argument("--perturbations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_radius_compare)

    p = sub.add_parser("equivalence", help="agreement of the two robust syntheses")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--dims", type=lambda s: [int(v) for v in s.split(",")], default=[1, 2, 3])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_equivalence)

    p = sub.add_parser("synth", help="one-shot synthesis for a region JSON")
    p.add_argument("region_json")
    p.add_argument("--method", default="robust_sls",
                   choices=["robust_sls", "robust_lqr", "relaxed_sls", "minmax"])
    p.add_argument("--sigma-w-sq", type=float, default=1.0)
    p.add_argument("--out", type=Path, default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "dims", None) is None and args.command == "coverage":
        args.dims = [(1, 1)]
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit status 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
