"""
Command-line interface.

Exit codes: 0 success, 1 I/O error, 2 invalid input or configuration,
3 partial results (some test cells degenerate).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from fbds import __version__
from fbds.bds import bds_grid, grid_to_csv, grid_to_json
from fbds.curves import CurveNorm, read_series_csv, read_tick_csv, cidr_transform, write_series_csv
from fbds.errors import FbdsError, ValidationError
from fbds.experiments import CampaignSpec, default_workers, run_campaign
from fbds.fit import Far1Fit, far1_residuals, fit_far1, log_squared_standardized
from fbds.simulate import Process, SimSpec, simulate

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2, 3

DEFAULT_M = "2..7"
DEFAULT_R = "1.0,1.25,1.5"


class _Run:
    """Collects what a command did and writes the run manifest."""

    def __init__(self, argv: list[str], config: dict, seed: int | None = None):
        self.argv = list(argv)
        self.config = config
        self.seed = seed
        self.outputs: list[str] = []
        self.started = datetime.now(timezone.utc).isoformat()

    def output(self, path, text: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.outputs.append(str(path))

    def series(self, path, series) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_series_csv(series, path)
        self.outputs.append(str(path))

    def finish(self, manifest_path) -> None:
        doc = {
            "command": self.argv,
            "config": self.config,
            "config_digest": config_digest(self.config),
            "master_seed": self.seed,
            "version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": self.outputs,
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON form; insensitive to key order."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def parse_int_list(text: str) -> list[int]:
    """``"2..7"``, ``"2-7"`` or ``"2,3,5"``."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            for sep in ("..", "-"):
                if sep in part:
                    lo, hi = part.split(sep)
                    out.extend(range(int(lo), int(hi) + 1))
                    break
            else:
                out.append(int(part))
    except ValueError:
        raise ValidationError(f"cannot parse integer list {text!r}") from None
    if not out:
        raise ValidationError("empty integer list")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None
    if not vals:
        raise ValidationError("empty number list")
    return vals


def parse_clock_time(text: str) -> float:
    """Seconds since midnight from ``HH:MM[:SS]`` or a plain number of seconds."""
    if ":" not in text:
        return float(text)
    parts = [float(p) for p in text.split(":")]
    if len(parts) == 2:
        parts.append(0.0)
    h, m, s = parts
    return h * 3600 + m * 60 + s


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, argv) -> int:
    config = _load_json(args.config)
    spec = SimSpec.from_dict(config)
    run = _Run(argv, spec.to_dict(), spec.seed)
    out = Path(args.out)
    result = simulate(spec)
    if spec.process is Process.FGARCH11:
        returns, sigma = result
        run.series(out, returns)
        run.series(out.with_name(out.stem + "_sigma" + out.suffix), sigma)
    else:
        run.series(out, result)
    run.finish(_manifest_path(out))
    return EXIT_OK


def cmd_test(args, argv) -> int:
    series = read_series_csv(args.series)
    m_values = parse_int_list(args.m)
    r_values = parse_float_list(args.r)
    norm = CurveNorm.parse(args.norm)
    if series.n < 3:
        raise ValidationError(
            f"{args.series}: {series.n} curve(s) is insufficient length for a BDS test (need at least min(m) + 2)"
        )
    cells = bds_grid(series, m_values, r_values, norm, r_in_sd_units=(args.r_units == "sd"))
    config = {"series": str(args.series), "m": m_values, "r": r_values, "norm": norm.value,
              "r_units": args.r_units}
    run = _Run(argv, config)
    out = Path(args.out)
    run.output(out, grid_to_csv(cells))
    meta = {"source": str(args.series), "n": series.n, "p": series.p}
    run.output(out.with_suffix(".json"), grid_to_json(cells, norm, meta) + "\n")
    run.finish(_manifest_path(out))
    failed = [c for c in cells if not c.ok]
    for c in failed:
        print(f"m={c.m} r={c.r_multiplier}: {c.error}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_cidr(args, argv) -> int:
    start = parse_clock_time(args.start)
    if args.stop is not None:
        stop = parse_clock_time(args.stop)
        clock = np.linspace(start, stop, args.points)
    else:
        clock = start + args.step * np.arange(args.points)
    ticks = read_tick_csv(args.ticks, clock)
    series = cidr_transform(ticks)
    config = {"ticks": str(args.ticks), "start": start, "step": args.step, "points": args.points,
              "stop": args.stop}
    run = _Run(argv, config)
    run.series(args.out, series)
    run.output(Path(args.out).with_suffix(".days.txt"), "\n".join(series.metadata["days"]) + "\n")
    run.finish(_manifest_path(args.out))
    return EXIT_OK


def cmd_fit_far1(args, argv) -> int:
    series = read_series_csv(args.series)
    if args.d is not None and args.d > series.p:
        raise ValidationError(f"--d {args.d} exceeds the grid size {series.p}")
    fit = fit_far1(series, args.d)
    prefix = Path(args.out_prefix)
    run = _Run(argv, {"series": str(args.series), "d": args.d})
    run.output(prefix.with_name(prefix.name + "_fit.json"), fit.to_json() + "\n")
    if args.residuals:
        run.series(prefix.with_name(prefix.name + "_residuals.csv"), far1_residuals(series, fit))
    run.finish(prefix.with_name(prefix.name + ".manifest.json"))
    return EXIT_OK


def cmd_residuals(args, argv) -> int:
    series = read_series_csv(args.series)
    with open(args.fit, encoding="utf-8") as fh:
        fit = Far1Fit.from_json(fh.read())
    run = _Run(argv, {"series": str(args.series), "fit": str(args.fit)})
    run.series(args.out, far1_residuals(series, fit))
    run.finish(_manifest_path(args.out))
    return EXIT_OK


def cmd_log_sq_std(args, argv) -> int:
    returns = read_series_csv(args.returns)
    sigma = read_series_csv(args.sigma)
    run = _Run(argv, {"returns": str(args.returns), "sigma": str(args.sigma), "floor": args.floor})
    run.series(args.out, log_squared_standardized(returns, sigma, args.floor))
    run.finish(_manifest_path(args.out))
    return EXIT_OK


def cmd_campaign(args, argv) -> int:
    config = _load_json(args.config)
    spec = CampaignSpec.from_dict(config)
    if args.raw:
        from dataclasses import replace

        spec = replace(spec, emit_raw=True)
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise ValidationError("--workers must be >= 1")
    report = run_campaign(spec, workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(argv, spec.to_dict(), spec.master_seed)
    run.output(out / "report.csv", report.to_csv())
    run.output(out / "report.json", report.to_json() + "\n")
    if spec.emit_raw:
        run.output(out / "raw_statistics.csv", report.raw_csv())
    run.finish(out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbds", description="Functional BDS independence test toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a functional series from a JSON spec")
    s.add_argument("config")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("test", help="run the functional BDS test over an (m, r) grid")
    s.add_argument("series")
    s.add_argument("--m", default=DEFAULT_M, help="embedding dimensions, e.g. 2..7 or 2,3,5")
    s.add_argument("--r", default=DEFAULT_R, help="radii, comma separated")
    s.add_argument("--norm", default="l2", choices=[n.value for n in CurveNorm])
    s.add_argument("--r-units", default="sd", choices=["sd", "absolute"])
    s.add_argument("-o", "--out", required=True, help="CSV path; a .json twin is written alongside")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("cidr", help="cumulative intraday return curves from tick data")
    s.add_argument("ticks")
    s.add_argument("--start", default="09:31:10", help="first clock time (HH:MM:SS or seconds)")
    s.add_argument("--step", type=float, default=15.0, help="clock spacing in seconds")
    s.add_argument("--points", type=int, default=1616)
    s.add_argument("--stop", default=None, help="last clock time; overrides --step")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_cidr)

    s = sub.add_parser("fit-far1", help="fit an fAR(1) model by FPCA least squares")
    s.add_argument("series")
    s.add_argument("--d", type=int, default=None, help="retained components (default: 95%% variance, max 10)")
    s.add_argument("--residuals", action="store_true", help="also write residual curves")
    s.add_argument("-o", "--out-prefix", required=True)
    s.set_defaults(func=cmd_fit_far1)

    s = sub.add_parser("residuals", help="fAR(1) residuals from a saved fit")
    s.add_argument("series")
    s.add_argument("fit")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_residuals)

    s = sub.add_parser("log-sq-std", help="log squared standardized returns")
    s.add_argument("returns")
    s.add_argument("sigma")
    s.add_argument("--floor", type=float, default=1e-12)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_log_sq_std)

    s = sub.add_parser("campaign", help="run a Monte-Carlo campaign from a JSON spec")
    s.add_argument("config")
    s.add_argument("-o", "--out-dir", required=True)
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: $FBDS_WORKERS or 1)")
    s.add_argument("--raw", action="store_true", help="also write per-path statistics")
    s.set_defaults(func=cmd_campaign)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args, ["fbds"] + argv)
    except (FbdsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
