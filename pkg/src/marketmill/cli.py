"""Command-line entry point: ``marketmill {simulate,millness,pattern,portrait,ingest}``.

Exit codes: 0 success, 2 configuration error, 3 I/O or input-data error,
4 numerical/statistical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .analysis import (
    AsymmetryAxis,
    StatisticsError,
    accumulate_histogram,
    asymmetric_component,
    millness_reports,
)
from .core import ConfigError, MillConfig
from .io import (
    PRESETS,
    DataFileError,
    RunManifest,
    format_config,
    ingest_csv,
    iter_batch_dir,
    load_batch_config,
    load_config,
    preset_config,
    read_series,
    series_filename,
    write_grid_csv,
    write_millness_table,
    write_series_bin,
    write_series_csv,
)
from .kernel import StrategyMix
from .simulator import SimDiagnostics, iter_batch

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

PORTRAIT_PRESETS = ("dis-like", "hdi-like", "de-like")


class UsageError(ConfigError):
    pass


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    vals = _floats(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _resolve_config(args, default_preset: str = "elementary") -> MillConfig:
    overrides = {}
    for name in ("n_series", "series_len", "n_groups"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, **overrides)
    preset = getattr(args, "preset", None) or default_preset
    return preset_config(preset, **overrides)


def _mkdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _source_stream(args, cfg_default: str = "elementary"):
    """(label, config-or-None, array iterator factory, group_size, n_groups) for the analysis commands."""
    if args.input:
        paths = [Path(p) for p in args.input]
        if len(paths) == 1 and paths[0].is_dir() and (paths[0] / "config.txt").exists():
            cfg = load_batch_config(paths[0])
            return (paths[0].name, cfg, lambda: iter_batch_dir(paths[0]), cfg.group_size, cfg.n_groups)
        files = []
        for p in paths:
            if p.is_dir():
                files.extend(sorted(p.glob("*.csv")) + sorted(p.glob("*.bin")))
            elif p.exists():
                files.append(p)
            else:
                raise FileNotFoundError(f"{p}: no such file or directory")
        if not files:
            raise FileNotFoundError("no series files among the inputs")
        n_groups = min(args.groups, len(files))
        order = np.random.default_rng(args.seed or 0).permutation(len(files))
        files = [files[i] for i in order]
        group_size = -(-len(files) // n_groups)
        n_groups = -(-len(files) // group_size)
        return ("data", None, lambda: (read_series(f) for f in files), group_size, n_groups)
    cfg = _resolve_config(args, cfg_default)
    label = args.preset or (Path(args.config).stem if args.config else cfg_default)
    return (label, cfg, lambda: (inc for _, inc, _ in iter_batch(cfg, args.threads)), cfg.group_size, cfg.n_groups)


# --- subcommands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    out = _mkdir(args.output_dir)
    sdir = _mkdir(out / "series")
    print(format_config(cfg), end="")
    (out / "config.txt").write_text(format_config(cfg))
    manifest = RunManifest(config=_config_dict(cfg), produced_at=_now())
    manifest.add(out, out / "config.txt")
    diag = SimDiagnostics.empty(len(cfg.nus()))
    t0 = time.perf_counter()
    for i, inc, d in iter_batch(cfg, args.threads):
        path = sdir / series_filename(i, args.format)
        (write_series_bin if args.format == "bin" else write_series_csv)(path, inc)
        manifest.add(out, path)
        diag += d
    summary = {"n_series": cfg.n_series, "series_len": cfg.series_len, "nu": cfg.nus().tolist(),
               "diagnostics": diag.to_dict()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    manifest.add(out, out / "summary.json")
    manifest.write(out / "manifest.json")
    print(f"# wrote {cfg.n_series} series to {sdir} in {time.perf_counter() - t0:.1f}s; "
          f"dropped deposit fraction {diag.dropped_fraction:.2e}")
    return EXIT_OK


def cmd_millness(args) -> int:
    label, cfg, stream, group_size, n_groups = _source_stream(args)
    label = args.source or label
    dps = args.delta_p_star
    dt0 = cfg.dt0_minutes if cfg else 1.0
    reports = millness_reports(stream(), args.dt, dps, group_size, n_groups, dt0)
    rows = []
    for k in args.dt:
        rows.append((label, "mean_rho", reports[k].dt, reports[k].mean_rho))
    for k in args.dt:
        rows.append((label, "std_rho", reports[k].dt, reports[k].std_rho))
    print(_table(rows, [reports[k].dt for k in args.dt]))
    if args.out:
        write_millness_table(args.out, rows)
    if args.figure:
        from .plotting import render_millness

        render_millness({label: reports}, args.figure)
    return EXIT_OK


def _write_pattern(out: Path, stem: str, pattern, image: bool, title: str):
    paths = [out / f"{stem}_asym.csv", out / f"{stem}_mill.csv"]
    write_grid_csv(paths[0], pattern.centers, pattern.p_asym)
    write_grid_csv(paths[1], pattern.centers, pattern.p_mill_component)
    if image:
        from .plotting import render_pattern

        paths.append(out / f"{stem}.png")
        render_pattern(pattern, paths[-1], title=title)
    return paths


def cmd_pattern(args) -> int:
    label, _, stream, _, _ = _source_stream(args)
    out = _mkdir(args.out)
    h = accumulate_histogram(stream(), args.dt, args.bin, args.extent)
    axes = list(AsymmetryAxis) if args.axis == "all" else [AsymmetryAxis(args.axis)]
    patterns = {}
    for ax in axes:
        pat = asymmetric_component(h, ax)
        patterns[ax.value] = pat
        for p in _write_pattern(out, f"pattern_{ax.value}", pat, args.image, f"{label}: axis {ax.value}"):
            print(p)
    if args.image and len(patterns) > 1:
        from .plotting import render_patterns

        render_patterns(patterns, out / "patterns.png", title=label)
        print(out / "patterns.png")
    return EXIT_OK


def cmd_portrait(args) -> int:
    if args.weights is not None:
        if len(args.weights) != 3:
            raise UsageError("--weights takes three values: mill, contrarian, trend-following")
        mix = StrategyMix.normalized(*args.weights)
    else:
        preset = args.preset or "hdi-like"
        mix = StrategyMix(*PRESETS[preset]["strategy_weights"])
    base = _resolve_config(args, "elementary")
    cfg = base.replace(strategy_weights=mix.weights)
    out = _mkdir(args.out)
    h = accumulate_histogram((inc for _, inc, _ in iter_batch(cfg, args.threads)), 1, args.bin, args.extent)
    pat = asymmetric_component(h, AsymmetryAxis.X0)
    title = "portrait w=(%.2f, %.2f, %.2f)" % mix.weights
    for p in _write_pattern(out, "portrait_x0", pat, args.image, title):
        print(p)
    within = 3 * cfg.base_scale
    summary = {
        "weights": mix.weights,
        "same_sign_fraction": pat.quadrant_fraction(True, within),
        "opposite_sign_fraction": pat.quadrant_fraction(False, within),
        "even_wedge_fraction": pat.wedge_fraction(within=within),
    }
    (out / "portrait_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _mkdir(args.out)
    session = None if args.session.lower() == "none" else tuple(args.session.split("-", 1))
    if session is not None and len(session) != 2:
        raise UsageError(f"--session must be OPEN-CLOSE or 'none', got {args.session!r}")
    for src in args.input:
        series = ingest_csv(src, dt0=args.dt0, session=session)
        dest = out / (Path(src).stem + ".csv")
        write_series_csv(dest, series)
        print(f"{dest}: {len(series)} increments in {len(series.breaks) + 1} segment(s)")
    return EXIT_OK


# --- plumbing ------------------------------------------------------------------------

def _config_dict(cfg: MillConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["strategy_weights"] = list(d["strategy_weights"])
    return d


def _now() -> str:
    import datetime as dt

    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _table(rows, dts) -> str:
    head = ["Source", "Quantity"] + [f"dT={dt:g} min" for dt in dts]
    body = []
    n = len(dts)
    for r in range(0, len(rows), n):
        chunk = rows[r:r + n]
        body.append([chunk[0][0], chunk[0][1]] + ["-" if v is None else f"{v:.2f}" for *_, v in chunk])
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    fmt = " | ".join("{:<%d}" % w for w in widths)
    lines = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*row) for row in body]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: all cores)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")

    p = argparse.ArgumentParser(prog="marketmill", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    def sizing(sp):
        sp.add_argument("--n-series", type=int, dest="n_series")
        sp.add_argument("--series-len", type=int, dest="series_len")
        sp.add_argument("--n-groups", type=int, dest="n_groups")

    sp = sub.add_parser("simulate", parents=[common], help="simulate a batch and write it to disk")
    sp.add_argument("output_dir")
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--format", choices=("bin", "csv"), default="bin")
    sizing(sp)
    sp.set_defaults(func=cmd_simulate)

    def source(sp):
        sp.add_argument("input", nargs="*", help="batch directory, or ingested series files/directories")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="simulate on the fly instead of reading input")
        sp.add_argument("--groups", type=int, default=20, help="groups for ingested series sets")
        sizing(sp)

    sp = sub.add_parser("millness", parents=[common], help="Table-1 style millness per time scale")
    source(sp)
    sp.add_argument("--dt", type=_ints, default=[1, 3, 6], help="aggregation factors, e.g. 1,3,6")
    sp.add_argument("--delta-p-star", type=float, default=0.30, dest="delta_p_star")
    sp.add_argument("--source", help="row label")
    sp.add_argument("--out", help="CSV table path")
    sp.add_argument("--figure", help="PNG of millness against dT")
    sp.set_defaults(func=cmd_millness)

    sp = sub.add_parser("pattern", parents=[common], help="asymmetric-component grids")
    source(sp)
    sp.add_argument("--axis", choices=[a.value for a in AsymmetryAxis] + ["all"], default="all")
    sp.add_argument("--bin", type=float, default=0.01)
    sp.add_argument("--extent", type=float, default=0.30)
    sp.add_argument("--dt", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--image", action="store_true", help="also render PNG heatmaps")
    sp.set_defaults(func=cmd_pattern)

    sp = sub.add_parser("portrait", parents=[common], help="individual-stock portrait from a strategy mix")
    sp.add_argument("--weights", type=_floats, help="w_mill,w_contrarian,w_trend")
    sp.add_argument("--preset", choices=PORTRAIT_PRESETS)
    sp.add_argument("--bin", type=float, default=0.01)
    sp.add_argument("--extent", type=float, default=0.30)
    sp.add_argument("--out", required=True)
    sp.add_argument("--image", action="store_true")
    sizing(sp)
    sp.set_defaults(func=cmd_portrait)

    sp = sub.add_parser("ingest", parents=[common], help="tick CSV to increment series")
    sp.add_argument("input", nargs="+")
    sp.add_argument("--dt0", type=float, default=1.0, help="base interval in minutes")
    sp.add_argument("--session", default="09:30-16:00", help="OPEN-CLOSE local times, or 'none'")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StatisticsError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DataFileError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # remaining value errors come from user-supplied parameters
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
