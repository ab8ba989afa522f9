"""
Command-line pipeline: estimate -> bootstrap -> calibrate -> simulate -> validate.

Every subcommand accepts ``--seed``, ``--threads``, ``--step`` (grid step
in years, e.g. ``1/360``) and ``--config FILE``.  The config file is TOML
with option names as keys, either at top level or inside a table named
after the subcommand; flags given on the command line win.

Exit codes: 0 success, 1 invalid data or a failed invariant, 2 file I/O
error, 3 bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from fractions import Fraction
from pathlib import Path

from . import __version__
from .aalen_johansen import EstimationError, add_months, default_end, estimate_grid
from .calibration import CalibrationError, calibrate, params_from_result
from .lie import InvariantError
from .moments import MomentError, MomentSet, ObjectiveConfig, estimate_moments, write_moments
from .rating_data import (
    MatrixSeries,
    RatingDataError,
    RatingScale,
    parse_history,
    parse_matrix_series,
    series_from_dict,
    write_matrix_series,
)
from .reporting import DEFAULT_BINS, beta_curve_csv, histogram_csv, histograms, trajectory_csvs
from .sde import DRIVERS, FAMILIES, SimulationGrid, simulate
from .synth import BootstrapError, bootstrap_series
from .validator import report as property_report

EXIT_OK, EXIT_DATA, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3

GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "step": "1/360"}
DEFAULTS = {
    "estimate": {
        "start": None,
        "end": None,
        "spans": "1,3,6,12",
        "labels": "A,B,C,D",
        "out": "pools.json",
        "overlapping": False,
    },
    "bootstrap": {"n": 10000, "out": "targets.json", "filter_irs": False, "moments": 4, "moments_out": None},
    "calibrate": {
        "family": None,
        "moments": 4,
        "weights": "1,10,1,1",
        "times": "12",
        "m_model": 1000,
        "out": "result.json",
        "starts": 1,
        "max_iter": 200,
        "driver": "common",
    },
    "simulate": {"paths": 1000, "times": "1,3,6,12", "bins": DEFAULT_BINS, "max_paths": None, "driver": None},
    "validate": {"out": None},
    "report": {
        "paths": 1000,
        "times": "1,3,6,12",
        "bins": DEFAULT_BINS,
        "max_paths": None,
        "driver": None,
        "targets": None,
    },
}


class UsageError(Exception):
    """Bad command-line arguments (exit code 3)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- helpers


def _items(value) -> list[str]:
    """Comma-separated text, or a list from a config file, as stripped strings."""
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return [str(x).strip() for x in items if str(x).strip()]


def _ints(text, what: str) -> list[int]:
    try:
        vals = [int(x) for x in _items(text)]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{what} is empty")
    return vals


def _floats(text, what: str) -> list[float]:
    try:
        vals = [float(x) for x in _items(text)]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{what} is empty")
    return vals


def _steps_per_year(step: str) -> int:
    try:
        h = Fraction(str(step))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--step must be a fraction like 1/360, got {step!r}") from None
    if h <= 0 or (1 / h).denominator != 1:
        raise UsageError(f"--step must be 1/N for a positive integer N, got {step!r}")
    return int(1 / h)


def _months_to_times(months: list[float]) -> tuple[float, ...]:
    if any(m <= 0 for m in months) or any(b <= a for a, b in zip(months, months[1:])):
        raise UsageError("observation months must be positive and increasing")
    return tuple(m / 12 for m in months)


def _date(text: str) -> date:
    try:
        return date.fromisoformat(str(text))
    except ValueError:
        raise UsageError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from None
    def key(k: str) -> str:
        return k.replace("-", "_").lower()

    flat = {key(k): v for k, v in data.items() if not isinstance(v, dict)}
    flat.update({key(k): v for k, v in data.get(command, {}).items()})
    known = set(GLOBAL_DEFAULTS) | set(DEFAULTS[command])
    unknown = sorted(set(flat) - known)
    if unknown:
        raise UsageError(f"config {path}: unknown option(s) for {command}: {', '.join(unknown)}")
    return flat


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill options left unset on the command line from config, then defaults."""
    cfg = _load_config(args.config, args.command)
    for key, default in {**GLOBAL_DEFAULTS, **DEFAULTS[args.command]}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, default))
    return args


def _read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RatingDataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise RatingDataError(f"{path}: top-level JSON value must be an object")
    return obj


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_targets(path: str, order: int) -> tuple[MomentSet, tuple[str, ...] | None]:
    """Target moments from a moment JSON or a matrix-series JSON, plus labels if known."""
    obj = _read_json(path)
    if "moments" in obj:
        ms, labels = MomentSet.from_dict(obj), None
    else:
        series = series_from_dict(obj)
        if order >= 2 and series.n_samples < 2:
            raise UsageError("variance needs at least two target samples (M >= 2)")
        ms, labels = estimate_moments(series, order), series.scale.labels
    if ms.order < order:
        raise UsageError(f"{path} holds {ms.order} moment orders, --moments {order} requested")
    return ms, labels


# ---------------------------------------------------------------- commands


def cmd_estimate(args) -> int:
    scale = RatingScale(tuple(_items(args.labels)))
    spans = _ints(args.spans, "--spans")
    history = parse_history(args.history, scale)
    first, _ = history.date_range()
    start = _date(args.start) if args.start else first.replace(day=1)
    end = _date(args.end) if args.end else default_end(history)
    if start < first.replace(day=1) or start >= end:
        raise UsageError(f"--start {start} lies outside the data period {first}..{end}")
    for span in spans:
        if span < 1 or add_months(start, span) > end:
            raise UsageError(f"a {span}-month window does not fit in {start}..{end}")
    pools = estimate_grid(history, start, spans, disjoint=not args.overlapping, end=end)
    out = Path(args.out)
    for span, series in pools.items():
        target = out.with_name(f"{out.stem}_{span}m{out.suffix or '.json'}")
        target.parent.mkdir(parents=True, exist_ok=True)
        write_matrix_series(series, target)
        print(f"{target}: {series.n_samples} matrices ({span} months)")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be positive")
    pools = [parse_matrix_series(p) for p in args.pools]
    if any(len(p.times) != 1 for p in pools):
        raise UsageError("every pool file must hold a single observation time")
    series = bootstrap_series(pools, args.n, seed=args.seed, filter_irs=args.filter_irs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_series(series, out)
    print(f"{out}: {series.n_samples} series at months {[round(12 * t, 6) for t in series.times]}")
    if args.moments_out:
        if args.n < 2 and args.moments >= 2:
            raise UsageError("variance needs at least two samples (M >= 2)")
        write_moments(estimate_moments(series, args.moments), args.moments_out)
        print(f"{args.moments_out}: moments up to order {args.moments}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"--family must be one of {', '.join(FAMILIES)}")
    if args.moments < 1:
        raise UsageError("--moments must be at least 1")
    if args.m_model < 1:
        raise UsageError("--M-model must be positive")
    if args.moments >= 2 and args.m_model < 2:
        raise UsageError("variance needs at least two model trajectories (--M-model >= 2)")
    weights = _floats(args.weights, "--weights")
    if len(weights) != args.moments:
        raise UsageError(f"--weights needs {args.moments} values, got {len(weights)}")
    times = _months_to_times(_floats(args.times, "--times"))
    target, labels = _load_targets(args.targets, args.moments)
    try:
        config = ObjectiveConfig(args.moments, tuple(weights), times)
        target.at(times)
    except MomentError as exc:
        raise UsageError(str(exc)) from None
    result = calibrate(
        args.family,
        target,
        config,
        n_paths=args.m_model,
        seed=args.seed,
        steps_per_year=_steps_per_year(args.step),
        starts=args.starts,
        max_iter=args.max_iter,
        threads=args.threads,
        driver=args.driver,
    )
    out = Path(args.out)
    doc = result.to_dict(labels)
    doc["driver"] = args.driver
    if labels is not None:
        doc["labels"] = list(labels)
    _write_text(out, json.dumps(doc, indent=2) + "\n")
    _write_text(out.with_suffix(".txt"), result.table_text(labels))
    sys.stdout.write(result.table_text(labels))
    return EXIT_OK


def _simulate_from(args, result_path: str):
    obj = _read_json(result_path)
    try:
        params = params_from_result(obj)
    except (KeyError, TypeError) as exc:
        raise RatingDataError(f"{result_path}: not a calibration result ({exc})") from None
    if args.paths < 1:
        raise UsageError("--paths must be positive")
    driver = args.driver or obj.get("driver", "common")
    grid = SimulationGrid(
        args.paths,
        _months_to_times(_floats(args.times, "--times")),
        _steps_per_year(args.step),
        args.seed,
        driver=driver,
    )
    ens = simulate(params, grid, threads=args.threads)
    labels = obj.get("labels")
    return params, ens, ens.to_series(RatingScale(tuple(labels)) if labels else None)


def _write_plot_data(series: MatrixSeries, out_dir: Path, bins: int, max_paths: int | None) -> None:
    write_dir = out_dir / "trajectories"
    write_dir.mkdir(parents=True, exist_ok=True)
    for name, text in trajectory_csvs(series, max_paths).items():
        _write_text(write_dir / f"{name}.csv", text)
    hists = histograms(series, bins)
    _write_text(out_dir / "histograms.csv", histogram_csv(hists))
    _write_text(out_dir / "beta_curves.csv", beta_curve_csv(hists))


def cmd_simulate(args) -> int:
    _, ens, series = _simulate_from(args, args.params)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_series(series, out / "ensemble.json")
    _write_plot_data(series, out, args.bins, args.max_paths)
    print(f"{out}: {ens.n_paths} trajectories at months {[round(12 * t, 6) for t in series.times]}")
    return EXIT_OK


def cmd_validate(args) -> int:
    series = parse_matrix_series(args.series)
    rep = property_report(series)
    if args.out:
        out = Path(args.out)
        _write_text(out, rep.to_csv())
        _write_text(out.with_suffix(".txt"), rep.to_text())
    sys.stdout.write(rep.to_text())
    return EXIT_OK


def cmd_report(args) -> int:
    params, ens, series = _simulate_from(args, args.result)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj = _read_json(args.result)
    _write_text(out / "result.json", json.dumps(obj, indent=2) + "\n")
    table = ["From-To          a          b      sigma"]
    table += [f"{ft:>7} {a:10.2e} {b:10.2e} {s:10.2e}" for ft, a, b, s in params.table(series.scale.labels)]
    _write_text(out / "parameters.txt", "\n".join(table) + "\n")
    write_matrix_series(series, out / "ensemble.json")
    _write_plot_data(series, out, args.bins, args.max_paths)
    rep = property_report(series)
    _write_text(out / "properties_model.csv", rep.to_csv())
    _write_text(out / "properties_model.txt", rep.to_text())
    sys.stdout.write("model\n" + rep.to_text())
    if args.targets:
        trep = property_report(parse_matrix_series(args.targets))
        _write_text(out / "properties_targets.csv", trep.to_csv())
        _write_text(out / "properties_targets.txt", trep.to_text())
        sys.stdout.write("targets\n" + trep.to_text())
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, help="master random seed (default 0)")
    g.add_argument("--threads", type=int, help="worker threads (default 1)")
    g.add_argument("--step", help="time step in years (default 1/360)")
    g.add_argument("--config", help="TOML file with option defaults")

    parser = _Parser(prog="ratingsde", description="Rating-matrix SDE pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common], help="Aalen-Johansen pools per time span")
    p.add_argument("history", help="history CSV (entity_id,date,rating)")
    p.add_argument("--start", help="first window start, YYYY-MM-DD")
    p.add_argument("--end", help="end of the data period (exclusive)")
    p.add_argument("--spans", help="window lengths in months (default 1,3,6,12)")
    p.add_argument("--labels", help="rating labels best to default (default A,B,C,D)")
    p.add_argument("--overlapping", action="store_const", const=True, help="start a window every month")
    p.add_argument("--out", help="output name; spans are appended as _<span>m")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bootstrap", parents=[common], help="recombine pools into target series")
    p.add_argument("pools", nargs="+", help="single-time matrix-series JSON files")
    p.add_argument("--n", type=int, help="number of series (default 10000)")
    p.add_argument("--filter-irs", action="store_const", const=True, help="redraw series violating iRS")
    p.add_argument("--moments", type=int, help="moment order for --moments-out (default 4)")
    p.add_argument("--moments-out", help="also write the target moments here")
    p.add_argument("--out", help="target series JSON (default targets.json)")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("calibrate", parents=[common], help="fit SDE parameters to target moments")
    p.add_argument("--family", help="cir or gem")
    p.add_argument("--targets", required=True, help="matrix-series or moment JSON")
    p.add_argument("--moments", type=int, help="highest moment order (default 4)")
    p.add_argument("--weights", help="moment weights (default 1,10,1,1)")
    p.add_argument("--times", help="observation months to match (default 12)")
    p.add_argument("--M-model", dest="m_model", type=int, help="model trajectories (default 1000)")
    p.add_argument("--starts", type=int, help="optimizer starts (default 1)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="evaluation budget per start (default 200)")
    p.add_argument("--driver", choices=DRIVERS, help="Brownian driver (default common)")
    p.add_argument("--out", help="result JSON; the table goes next to it as .txt")
    p.set_defaults(func=cmd_calibrate)

    for name, fn, key, helptext in (
        ("simulate", cmd_simulate, "params", "simulate a calibrated model and write plot data"),
        ("report", cmd_report, "result", "simulate, validate and collect everything in one directory"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument(f"--{key}", required=True, help="calibration result JSON")
        p.add_argument("--paths", type=int, help="trajectories (default 1000)")
        p.add_argument("--times", help="observation months (default 1,3,6,12)")
        p.add_argument("--bins", type=int, help="histogram bins (default 30)")
        p.add_argument("--max-paths", dest="max_paths", type=int, help="trajectories written to CSV (default all)")
        p.add_argument("--driver", choices=DRIVERS, help="Brownian driver (default: as calibrated)")
        p.add_argument("--out-dir", dest="out_dir", required=True, help="output directory")
        if name == "report":
            p.add_argument("--targets", help="target series JSON to validate alongside")
        p.set_defaults(func=fn)

    p = sub.add_parser("validate", parents=[common], help="property table of a matrix series")
    p.add_argument("series", help="matrix-series JSON")
    p.add_argument("--out", help="CSV output; the text table goes next to it as .txt")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve(args)
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        _steps_per_year(args.step)
        return args.func(args)
    except UsageError as exc:
        print(f"ratingsde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = exc.filename or ""
        print(f"ratingsde: error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (
        RatingDataError,
        EstimationError,
        InvariantError,
        MomentError,
        BootstrapError,
        CalibrationError,
        ValueError,
    ) as exc:
        print(f"ratingsde: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
