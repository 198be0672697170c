"""File formats: config text, binary/CSV series, tick CSV ingestion, grid and table CSVs, run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .core import ConfigError, IncrementSeries, MillConfig

MAGIC = b"MMILL1"

# config-file key -> (MillConfig field, parser)
_CONFIG_KEYS = {
    "sigma0_dollars": ("sigma0", float),
    "nu0": ("nu0", float),
    "l_scale_intervals": ("l_scale", float),
    "n_scales": ("n_scales", int),
    "scale_decay": ("scale_decay", float),
    "series_len_intervals": ("series_len", int),
    "n_series": ("n_series", int),
    "n_groups": ("n_groups", int),
    "seed": ("seed", int),
    "strategy_weights": ("strategy_weights", lambda s: tuple(float(v) for v in s.split(","))),
    "sigma_reading": ("sigma_reading", str),
    "dt0_minutes": ("dt0_minutes", float),
}
_FIELD_TO_KEY = {f: k for k, (f, _) in _CONFIG_KEYS.items()}

PRESETS: Dict[str, dict] = {
    "elementary": {"n_scales": 1},
    "composite": {"n_scales": 64, "scale_decay": 0.8},
    "dis-like": {"n_scales": 1, "strategy_weights": (0.3, 0.0, 0.7)},
    "hdi-like": {"n_scales": 1, "strategy_weights": (0.8, 0.1, 0.1)},
    "de-like": {"n_scales": 1, "strategy_weights": (0.3, 0.7, 0.0)},
}


class DataFileError(ValueError):
    """Malformed input data file."""


class ConfigFileError(ConfigError):
    def __init__(self, messages: Sequence[str]):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


def preset_config(name: str, **overrides) -> MillConfig:
    if name not in PRESETS:
        raise ConfigFileError([f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    return MillConfig(**{**PRESETS[name], **overrides})


def parse_config_text(text: str, source: str = "<config>", base: Optional[dict] = None) -> MillConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    A ``preset = name`` line seeds defaults from a named preset. All problems
    are collected and reported together, each with its line number.
    """
    values = dict(base or {})
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        if key == "preset":
            if val not in PRESETS:
                errors.append(f"{source}:{lineno}: unknown preset {val!r}")
            else:
                values = {**PRESETS[val], **values}
            continue
        if key not in _CONFIG_KEYS:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        name, conv = _CONFIG_KEYS[key]
        try:
            values[name] = conv(val)
        except ValueError:
            errors.append(f"{source}:{lineno}: cannot parse {val!r} for {key}")
    if errors:
        raise ConfigFileError(errors)
    try:
        return MillConfig(**values)
    except ConfigError as exc:
        raise ConfigFileError([f"{source}: {msg}" for msg in str(exc).split("; ")]) from None


def load_config(path, **overrides) -> MillConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError([f"{path}: {exc.strerror}"]) from None
    cfg = parse_config_text(text, str(path))
    return cfg.replace(**overrides) if overrides else cfg


def format_config(cfg: MillConfig) -> str:
    lines = []
    for name, value in asdict(cfg).items():
        if name == "strategy_weights":
            value = ",".join(repr(float(w)) for w in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{_FIELD_TO_KEY[name]} = {value}")
    nus = cfg.nus()
    lines.append("# active nu_i: " + ", ".join(f"{v:.6g}" for v in nus))
    return "\n".join(lines) + "\n"


# --- series files ----------------------------------------------------------------

def write_series_bin(path, increments: np.ndarray) -> None:
    arr = np.ascontiguousarray(increments, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", arr.size))
        fh.write(arr.tobytes())


def read_series_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise DataFileError(f"{path}: not a series file (bad magic {head!r})")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n:
        raise DataFileError(f"{path}: header says {n} values, found {data.size}")
    return data.astype(np.float64)


def write_series_csv(path, series) -> None:
    """One increment per row; series with breaks get a leading ``segment`` column."""
    if not isinstance(series, IncrementSeries):
        series = IncrementSeries(series)
    with open(path, "w", newline="") as fh:
        if series.breaks:
            fh.write("segment,increment\n")
            for seg_no, seg in enumerate(series.segments()):
                for v in seg:
                    fh.write(f"{seg_no},{float(v)!r}\n")
        else:
            fh.write("increment\n")
            for v in series.increments:
                fh.write(repr(float(v)) + "\n")


def read_series_csv(path, dt0: float = 1.0) -> IncrementSeries:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from None
    if header == ["increment"]:
        return IncrementSeries(data[:, 0], dt0=dt0)
    if header == ["segment", "increment"]:
        seg = data[:, 0]
        breaks = tuple((np.nonzero(np.diff(seg))[0] + 1).tolist())
        return IncrementSeries(data[:, 1], dt0=dt0, breaks=breaks)
    raise DataFileError(f"{path}:1: unexpected header {','.join(header)!r}")


def read_series(path, dt0: float = 1.0) -> IncrementSeries:
    path = Path(path)
    if path.suffix == ".csv":
        return read_series_csv(path, dt0)
    return IncrementSeries(read_series_bin(path), dt0=dt0)


# --- tick ingestion ----------------------------------------------------------------

def _parse_time(s: str) -> _dt.time:
    return _dt.time.fromisoformat(s)


def ingest_csv(path, dt0: float = 1.0, session: Optional[Tuple[str, str]] = ("09:30", "16:00")) -> IncrementSeries:
    """Tick file (``timestamp,price``) to increments on a ``dt0``-minute grid.

    Each bucket takes the last traded price, empty buckets are forward-filled,
    and increments are first differences. With ``session = (open, close)``
    ticks outside the session are ignored and each trading day becomes its own
    segment, so no pair spans an overnight gap. ``session = None`` treats the
    file as one continuous segment.
    """
    path = Path(path)
    stamps, prices = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFileError(f"{path}: empty file")
        if [h.strip().lower() for h in header] != ["timestamp", "price"]:
            raise DataFileError(f"{path}:1: expected header 'timestamp,price', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataFileError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                ts = pd.Timestamp(row[0].strip())
                price = float(row[1])
            except (ValueError, TypeError) as exc:
                raise DataFileError(f"{path}:{lineno}: unparseable row {row!r}: {exc}") from None
            if ts is pd.NaT or not np.isfinite(price) or price <= 0:
                raise DataFileError(f"{path}:{lineno}: invalid timestamp or non-positive price in {row!r}")
            if stamps and ts < stamps[-1]:
                raise DataFileError(f"{path}:{lineno}: timestamps must be non-decreasing")
            stamps.append(ts)
            prices.append(price)
    if not stamps:
        raise DataFileError(f"{path}: no ticks")
    ticks = pd.Series(prices, index=pd.DatetimeIndex(stamps))
    freq = pd.Timedelta(minutes=dt0)

    def resample(part: pd.Series, origin) -> np.ndarray:
        bars = part.resample(freq, origin=origin, label="left", closed="left").last().ffill()
        return np.diff(bars.to_numpy(dtype=float))

    segments = []
    if session is None:
        segments.append(resample(ticks, "start_day"))
    else:
        t_open, t_close = _parse_time(session[0]), _parse_time(session[1])
        tod = ticks.index.time
        inside = ticks[(tod >= t_open) & (tod <= t_close)]
        for day, part in inside.groupby(inside.index.normalize()):
            origin = day + pd.Timedelta(hours=t_open.hour, minutes=t_open.minute, seconds=t_open.second)
            # a print exactly at the close belongs to the last bucket
            close_ts = day + pd.Timedelta(hours=t_close.hour, minutes=t_close.minute, seconds=t_close.second)
            idx = part.index.where(part.index < close_ts, close_ts - pd.Timedelta(microseconds=1))
            part = pd.Series(part.to_numpy(), index=idx)
            inc = resample(part, origin)
            if inc.size:
                segments.append(inc)
    segments = [s for s in segments if s.size]
    if not segments:
        raise DataFileError(f"{path}: fewer than two price buckets, no increments")
    breaks = tuple(np.cumsum([s.size for s in segments[:-1]]).tolist())
    return IncrementSeries(np.concatenate(segments), dt0=dt0, breaks=breaks)


def export_price_csv(series: IncrementSeries, path, start_price: float = 50.0,
                     start: str = "2005-01-03T09:30:00-05:00") -> None:
    """Write increments as a one-tick-per-interval price path (inverse of ``ingest_csv`` with no sessions)."""
    t0 = pd.Timestamp(start)
    prices = start_price + np.concatenate([[0.0], np.cumsum(series.increments)])
    step = pd.Timedelta(minutes=series.dt0)
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,price\n")
        for j, p in enumerate(prices):
            fh.write(f"{(t0 + j * step).isoformat()},{float(p)!r}\n")


# --- grids and tables --------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_grid_csv(path, centers: np.ndarray, grid: np.ndarray) -> None:
    """Rows ``x_center,y_center,value`` with 9 significant digits; grid indexed [x, y]."""
    with open(path, "w", newline="") as fh:
        fh.write("x_center,y_center,value\n")
        for i, cx in enumerate(centers):
            for j, cy in enumerate(centers):
                fh.write(f"{_fmt(cx)},{_fmt(cy)},{_fmt(grid[i, j])}\n")


def read_grid_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of ``write_grid_csv``: (centers, grid)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    grid = np.full((xs.size, ys.size), np.nan)
    grid[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
    return xs, grid


def write_millness_table(path, rows: Sequence[Tuple[str, str, float, Optional[float]]]) -> None:
    """``source,quantity,dt_minutes,value_percent``; absent values are left empty."""
    with open(path, "w", newline="") as fh:
        fh.write("source,quantity,dt_minutes,value_percent\n")
        for source, quantity, dt, value in rows:
            val = "" if value is None else _fmt(value)
            fh.write(f"{source},{quantity},{_fmt(dt)},{val}\n")


def read_millness_table(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- batch directories and manifests -------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    produced_at: str
    tool_version: str = __version__
    outputs: List[dict] = field(default_factory=list)

    def add(self, root: Path, path: Path) -> None:
        self.outputs.append({"path": str(Path(path).relative_to(root)), "sha256": sha256_file(path)})

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, root) -> List[str]:
        """Paths whose current hash differs from the recorded one."""
        root = Path(root)
        return [o["path"] for o in self.outputs
                if not (root / o["path"]).exists() or sha256_file(root / o["path"]) != o["sha256"]]


def series_filename(index: int, fmt: str = "bin") -> str:
    return f"series_{index:05d}.{fmt}"


def batch_series_paths(batch_dir) -> List[Path]:
    d = Path(batch_dir) / "series"
    paths = sorted(list(d.glob("series_*.bin")) + list(d.glob("series_*.csv")))
    if not paths:
        raise FileNotFoundError(f"{batch_dir}: no series files under series/")
    return paths


def load_batch_config(batch_dir) -> MillConfig:
    return load_config(Path(batch_dir) / "config.txt")


def iter_batch_dir(batch_dir) -> Iterator[np.ndarray]:
    """Raw increment arrays of a simulated batch, in series order."""
    for p in batch_series_paths(batch_dir):
        yield read_series_bin(p) if p.suffix == ".bin" else read_series_csv(p).increments
