"""Command line entry point: ``kselearn run|sweep|order-study``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import load_spec, section_values
from .harness import (
    ORDER_COLUMNS,
    SWEEP_AXES,
    SWEEP_COLUMNS,
    order_of_accuracy_study,
    parameter_sweep,
    run_twin_experiment,
    write_csv,
    write_metadata,
)

__all__ = ["main", "build_parser"]


def _number_list(text: str) -> List[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kselearn",
        description="Twin experiments for concurrent state and coefficient estimation "
                    "in the generalized Kuramoto-Sivashinsky equation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style experiment file (all keys optional)")
    common.add_argument("--out", help="output directory (default: [output] path or ./out)")
    common.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE",
                        help="override a setting, e.g. estimator.alpha=10 (repeatable)")
    common.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single twin experiment")

    sweep = sub.add_parser("sweep", parents=[common], help="vary one setting")
    sweep.add_argument("--axis", choices=SWEEP_AXES)
    sweep.add_argument("--values", type=_number_list, help="comma separated values")

    order = sub.add_parser("order-study", parents=[common], help="BDF order of accuracy")
    order.add_argument("--dts", type=_number_list, help="comma separated time steps")
    order.add_argument("--orders", type=_number_list, help="BDF orders, e.g. 1,2,3")
    order.add_argument("--saturation", type=float, default=None,
                       help="errors below this are left out of the fit (default 1e-11)")
    return parser


def _out_dir(args, spec) -> Path:
    out = Path(args.out or spec.output or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args, spec) -> dict:
    out = _out_dir(args, spec)
    progress = None
    if args.verbose:
        def progress(j, n):
            logging.getLogger("kselearn").info("step %d / %d", j, n)
    result = run_twin_experiment(spec, progress)
    series = result.series
    csv_path = write_csv(series.rows(), out / "timeseries.csv", series.columns())
    s = result.summary
    summary = {
        "t_c": s.t_c, "beta": s.beta, "beta_defined": s.beta_defined,
        "final_error": s.final_error, "final_errors": list(s.final_errors),
        "converged": s.converged, "completed": s.completed, "failure": s.failure,
        "lambda_hat": dict(zip(map(str, spec.unknown), result.lambda_hat)),
    }
    write_metadata(csv_path.with_suffix(".meta.json"), spec, summary=summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _cmd_sweep(args, spec) -> dict:
    extra = section_values(args.config, "sweep")
    axis = args.axis or extra.get("axis")
    values = args.values or (_number_list(extra["values"]) if "values" in extra else None)
    if axis is None or not values:
        raise SystemExit("sweep needs --axis and --values (or a [sweep] section)")
    out = _out_dir(args, spec)
    rows = parameter_sweep(spec, axis, values, workers=args.workers)
    csv_path = write_csv([r.row() for r in rows], out / f"sweep_{axis}.csv", SWEEP_COLUMNS)
    failures = {str(r.axis_value): r.failure for r in rows if r.failure}
    write_metadata(csv_path.with_suffix(".meta.json"), spec, axis=axis, values=values,
                   failures=failures)
    return {"axis": axis, "rows": [r.row() for r in rows], "failures": failures}


def _cmd_order(args, spec) -> dict:
    extra = section_values(args.config, "order_study")
    dts = args.dts or _number_list(extra.get("dts", "1e-2, 5e-3, 2e-3, 1e-3"))
    orders = [int(p) for p in (args.orders or _number_list(extra.get("orders", "1, 2, 3")))]
    saturation = args.saturation
    if saturation is None:
        saturation = float(extra.get("saturation", 1e-11))
    out = _out_dir(args, spec)
    study = order_of_accuracy_study(spec, dts, orders, saturation, workers=args.workers)
    csv_path = write_csv(study.rows, out / "order_study.csv", ORDER_COLUMNS)
    slopes = {str(p): v for p, v in study.slopes.items()}
    write_metadata(csv_path.with_suffix(".meta.json"), spec, dts=dts, orders=orders,
                   saturation=saturation, slopes=slopes)
    (out / "order_slopes.json").write_text(json.dumps(slopes, indent=2))
    return {"slopes": slopes}


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "order-study": _cmd_order}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_spec(args.config, args.override)
        spec.validate()
    except (KeyError, ValueError, OSError) as exc:
        print(f"kselearn: configuration error: {exc}", file=sys.stderr)
        return 2
    report = _COMMANDS[args.command](args, spec)
    print(json.dumps(report, indent=2, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
