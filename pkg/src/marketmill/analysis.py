"""Observables of increment series: push-response pairs, bivariate histograms,
asymmetric components, the conditional mean response and millness."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numba
import numpy as np

from .core import IncrementSeries, Money
from .kernel import sector_of

EVEN_SECTORS = (2, 4, 6, 8)


class StatisticsError(ValueError):
    """An observable is undefined for the data given (e.g. no pairs in the square)."""


def aggregate(series: IncrementSeries, k: int) -> IncrementSeries:
    """Non-overlapping sums of ``k`` consecutive increments; trailing remainders dropped.

    Each segment is aggregated on its own, so windows never cross a break.
    """
    if k < 1:
        raise ValueError(f"aggregation factor must be >= 1, got {k}")
    if k > len(series):
        raise ValueError(f"aggregation factor {k} exceeds series length {len(series)}")
    if k == 1:
        return series
    parts, breaks, pos = [], [], 0
    for seg in series.segments():
        m = seg.size // k
        if m == 0:
            continue
        if parts:
            breaks.append(pos)
        parts.append(seg[: m * k].reshape(m, k).sum(axis=1))
        pos += m
    if not parts:
        raise ValueError(f"no segment is at least {k} intervals long")
    return IncrementSeries(np.concatenate(parts), dt0=series.dt0 * k, breaks=tuple(breaks))


@dataclass(frozen=True)
class PairSet:
    """Push-response pairs (x[j], y[j]) of adjacent windows at scale ``dt`` minutes."""

    dt: float
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.x.size

    @classmethod
    def concat(cls, parts: Sequence["PairSet"]) -> "PairSet":
        return cls(parts[0].dt, np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


def make_pairs(series: IncrementSeries, lag: int = 1) -> PairSet:
    """Pairs (increment[j], increment[j + lag]) within each segment.

    ``lag = 1`` is the adjacent-window case t2 = t1 + dt used throughout.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if len(series) < lag + 1:
        raise ValueError("series too short to form a pair")
    xs, ys = [], []
    for seg in series.segments():
        if seg.size > lag:
            xs.append(seg[:-lag])
            ys.append(seg[lag:])
    if not xs:
        return PairSet(series.dt0, np.empty(0), np.empty(0))
    return PairSet(series.dt0, np.concatenate(xs), np.concatenate(ys))


# --- sector counting -----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _sector_counts(x, y, dps, out):
    # same boundary rule as kernel.sector_of; zero coordinates are skipped
    for j in range(x.size):
        a = x[j]
        b = y[j]
        if a == 0.0 or b == 0.0 or abs(a) > dps or abs(b) > dps:
            continue
        if a > 0:
            if b > 0:
                s = 1 if b <= a else 2
            elif b > -a:
                s = 8
            else:
                s = 7
        else:
            if b > 0:
                s = 3 if b >= -a else 4
            elif b >= a:
                s = 5
            else:
                s = 6
        out[s - 1] += 1
    return out


def sector_counts(x, y, delta_p_star: Money) -> np.ndarray:
    """Occupancies n_1..n_8 within the closed square |x|, |y| <= delta_p_star.

    Pairs with x = 0 or y = 0 lie on no open sector and are not counted.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    return _sector_counts(x, y, float(delta_p_star), np.zeros(8, dtype=np.int64))


def millness_from_counts(counts) -> float:
    n = np.asarray(counts, dtype=np.int64)
    tot = int(n.sum())
    if tot == 0:
        raise StatisticsError("no pairs inside the millness square")
    alt = (n[7] - n[0]) + (n[1] - n[6]) + (n[5] - n[2]) + (n[3] - n[4])
    return 100.0 * float(alt) / tot


def millness_stderr(n_tot: int) -> float:
    """Standard error (percent) of millness for a sector-symmetric distribution."""
    return 100.0 / math.sqrt(n_tot)


def millness(pairs: PairSet, delta_p_star: Money = 0.3) -> float:
    """Even-minus-odd sector occupancy over the total, in percent."""
    if not delta_p_star > 0:
        raise ValueError("delta_p_star must be positive")
    return millness_from_counts(sector_counts(pairs.x, pairs.y, delta_p_star))


@dataclass(frozen=True)
class MillnessReport:
    dt: float
    rho_per_group: tuple
    mean_rho: float
    std_rho: Optional[float]
    delta_p_star: Money
    n_pairs: int = 0

    @classmethod
    def from_group_counts(cls, dt: float, group_counts: np.ndarray, delta_p_star: Money) -> "MillnessReport":
        rhos = tuple(millness_from_counts(c) for c in group_counts)
        std = float(np.std(rhos, ddof=1)) if len(rhos) > 1 else None
        return cls(dt, rhos, float(np.mean(rhos)), std, delta_p_star, int(np.sum(group_counts)))


def _series_counts(inc: np.ndarray, ks: Sequence[int], dps: float) -> np.ndarray:
    out = np.zeros((len(ks), 8), dtype=np.int64)
    for r, k in enumerate(ks):
        m = inc.size // k
        a = inc[: m * k].reshape(m, k).sum(axis=1) if k > 1 else inc
        _sector_counts(a[:-1], a[1:], dps, out[r])
    return out


def group_sector_counts(arrays: Iterable, ks: Sequence[int], delta_p_star: Money, group_size: int,
                        n_groups: int) -> np.ndarray:
    """Pooled sector counts, shape (len(ks), n_groups, 8), from a stream of series.

    ``arrays`` yields increment arrays (or IncrementSeries) in batch order; series
    ``j`` belongs to group ``j // group_size``.
    """
    counts = np.zeros((len(ks), n_groups, 8), dtype=np.int64)
    for j, inc in enumerate(arrays):
        g = j // group_size
        if isinstance(inc, IncrementSeries):
            for r, k in enumerate(ks):
                pairs = make_pairs(aggregate(inc, k))
                counts[r, g] += sector_counts(pairs.x, pairs.y, delta_p_star)
        else:
            counts[:, g] += _series_counts(np.asarray(inc, dtype=np.float64), ks, float(delta_p_star))
    return counts


def millness_reports(arrays: Iterable, ks: Sequence[int], delta_p_star: Money, group_size: int, n_groups: int,
                     dt0: float = 1.0) -> Dict[int, MillnessReport]:
    counts = group_sector_counts(arrays, ks, delta_p_star, group_size, n_groups)
    return {k: MillnessReport.from_group_counts(k * dt0, counts[r], delta_p_star) for r, k in enumerate(ks)}


def millness_report(batch, k: int, delta_p_star: Money = 0.3) -> MillnessReport:
    """Per-group millness of a SimBatch at aggregation ``k``; mean and spread over groups."""
    if not len(batch):
        raise ValueError("empty batch")
    cfg = batch.config
    return millness_reports(batch.series, [k], delta_p_star, cfg.group_size, cfg.n_groups, cfg.dt0_minutes)[k]


# --- bivariate histogram and asymmetry --------------------------------------------

class AsymmetryAxis(enum.Enum):
    X0 = "x0"
    Y0 = "y0"
    DIAG = "diag"
    ANTIDIAG = "antidiag"

    def reflect_points(self, x, y):
        if self is AsymmetryAxis.X0:
            return -x, y
        if self is AsymmetryAxis.Y0:
            return x, -y
        if self is AsymmetryAxis.DIAG:
            return y, x
        return -y, -x

    def reflect_grid(self, g: np.ndarray) -> np.ndarray:
        """Grid indexed [x_bin, y_bin] evaluated at the reflected bin."""
        if self is AsymmetryAxis.X0:
            return g[::-1, :]
        if self is AsymmetryAxis.Y0:
            return g[:, ::-1]
        if self is AsymmetryAxis.DIAG:
            return g.T
        return g[::-1, ::-1].T


@dataclass(frozen=True)
class BivariateHistogram:
    """Counts on the square [-extent, extent]^2 with ``counts[i, j]`` for x bin i, y bin j.

    ``n_total`` includes pairs falling outside the square.
    """

    bin_width: Money
    extent: Money
    counts: np.ndarray
    n_total: int

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.counts.sum() > self.n_total:
            raise ValueError("in-square count exceeds n_total")

    @classmethod
    def from_pairs(cls, pairs: PairSet, bin_width: Money = 0.01, extent: Money = 0.3) -> "BivariateHistogram":
        nb = int(round(2 * extent / bin_width))
        if nb < 1 or not math.isclose(nb * bin_width, 2 * extent, rel_tol=1e-9):
            raise ValueError(f"extent {extent} is not a whole number of half-bins of width {bin_width}")
        edges = np.linspace(-extent, extent, nb + 1)
        counts, _, _ = np.histogram2d(pairs.x, pairs.y, bins=[edges, edges])
        return cls(bin_width, extent, counts.astype(np.int64), len(pairs))

    @property
    def centers(self) -> np.ndarray:
        nb = self.counts.shape[0]
        return -self.extent + self.bin_width * (np.arange(nb) + 0.5)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_total * self.bin_width ** 2) if self.n_total else np.zeros(self.counts.shape)

    def __add__(self, other: "BivariateHistogram") -> "BivariateHistogram":
        if (self.bin_width, self.extent, self.counts.shape) != (other.bin_width, other.extent, other.counts.shape):
            raise ValueError("histograms on different grids")
        return BivariateHistogram(self.bin_width, self.extent, self.counts + other.counts,
                                  self.n_total + other.n_total)


@dataclass(frozen=True)
class AsymmetryPattern:
    axis: AsymmetryAxis
    centers: np.ndarray
    p_asym: np.ndarray
    p_mill_component: np.ndarray

    def wedge_fraction(self, wedges=EVEN_SECTORS, within: Optional[Money] = None) -> float:
        """Share of positive mass in bins whose centre lies inside ``wedges``.

        Bins centred on a sector boundary are ambiguous and left out of both
        numerator and denominator; ``within`` restricts to |x|, |y| <= within.
        """
        cx, cy = np.meshgrid(self.centers, self.centers, indexing="ij")
        nb = self.centers.size
        i, j = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
        keep = (i != j) & (i != nb - 1 - j)
        if within is not None:
            keep &= (np.abs(cx) <= within) & (np.abs(cy) <= within)
        mass = np.where(keep, self.p_mill_component, 0.0)
        total = mass.sum()
        if total == 0:
            return float("nan")
        inside = np.isin(sector_of(cx, cy), wedges)
        return float(mass[inside].sum() / total)

    def quadrant_fraction(self, same_sign: bool, within: Optional[Money] = None) -> float:
        """Share of positive mass in quadrants sign(x) = sign(y) (or opposite)."""
        cx, cy = np.meshgrid(self.centers, self.centers, indexing="ij")
        keep = np.ones(cx.shape, bool) if within is None else (np.abs(cx) <= within) & (np.abs(cy) <= within)
        mass = np.where(keep, self.p_mill_component, 0.0)
        total = mass.sum()
        if total == 0:
            return float("nan")
        sel = (np.sign(cx) == np.sign(cy)) if same_sign else (np.sign(cx) == -np.sign(cy))
        return float(mass[sel].sum() / total)


def asymmetric_component(h: BivariateHistogram, axis) -> AsymmetryPattern:
    """Half the difference between the density and its mirror image under ``axis``.

    The positive part is the mill component of the pattern.
    """
    axis = AsymmetryAxis(axis)
    g = h.density
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("histogram grid is not square, so it is not closed under reflection")
    c = h.centers
    if not np.allclose(c, -c[::-1], rtol=0, atol=1e-12 * max(1.0, h.extent)):
        raise ValueError("histogram grid is not symmetric about the origin")
    pa = 0.5 * (g - axis.reflect_grid(g))
    return AsymmetryPattern(axis, c, pa, np.maximum(pa, 0.0))


def symmetry_chi2(h: BivariateHistogram, axis) -> tuple:
    """Chi-square test that counts are symmetric under ``axis``.

    Each unordered bin pair {b, reflect(b)} with n_b + n_r > 0 contributes
    (n_b - n_r)^2 / (n_b + n_r); under symmetry the sum is chi-square with one
    degree of freedom per pair. Returns (statistic, dof, p-value).
    """
    from scipy import stats

    axis = AsymmetryAxis(axis)
    n = h.counts.astype(float)
    r = axis.reflect_grid(n)
    idx = np.arange(n.size).reshape(n.shape)
    ridx = axis.reflect_grid(idx)
    # each unordered pair once, fixed points excluded
    sel = (idx < ridx) & (n + r > 0)
    stat = float(np.sum((n[sel] - r[sel]) ** 2 / (n[sel] + r[sel])))
    dof = int(sel.sum())
    return stat, dof, float(stats.chi2.sf(stat, dof))


# --- conditional mean --------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalMean:
    x_center: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    count: np.ndarray
    low_confidence: np.ndarray

    def rows(self) -> List[tuple]:
        return list(zip(self.x_center.tolist(), self.mean.tolist(), self.stderr.tolist()))


MIN_BIN_PAIRS = 30


class ConditionalMeanAccumulator:
    """Running per-bin moments of y given x, for streaming many pair sets.

    Bin edges sit on multiples of ``x_bin_width`` so bins pair up under x -> -x.
    """

    def __init__(self, x_bin_width: Money, x_range: Optional[Money] = None):
        if not x_bin_width > 0:
            raise ValueError("x_bin_width must be positive")
        self.width = float(x_bin_width)
        self.x_range = x_range
        self._n: Dict[int, int] = {}
        self._s1: Dict[int, float] = {}
        self._s2: Dict[int, float] = {}

    def add(self, pairs: PairSet) -> "ConditionalMeanAccumulator":
        x, y = pairs.x, pairs.y
        if self.x_range is not None:
            keep = np.abs(x) <= self.x_range
            x, y = x[keep], y[keep]
        if x.size == 0:
            return self
        b = np.floor(x / self.width).astype(np.int64)
        lo = int(b.min())
        idx = b - lo
        n = np.bincount(idx)
        s1 = np.bincount(idx, weights=y)
        s2 = np.bincount(idx, weights=y * y)
        for j in np.nonzero(n)[0]:
            key = int(j) + lo
            self._n[key] = self._n.get(key, 0) + int(n[j])
            self._s1[key] = self._s1.get(key, 0.0) + float(s1[j])
            self._s2[key] = self._s2.get(key, 0.0) + float(s2[j])
        return self

    def result(self) -> "ConditionalMean":
        if not self._n:
            raise StatisticsError("empty pair set")
        keys = np.array(sorted(self._n))
        nn = np.array([self._n[k] for k in keys], dtype=float)
        s1 = np.array([self._s1[k] for k in keys])
        s2 = np.array([self._s2[k] for k in keys])
        mean = s1 / nn
        var = np.where(nn > 1, (s2 - nn * mean ** 2) / np.maximum(nn - 1, 1), np.nan)
        stderr = np.sqrt(np.maximum(var, 0.0) / nn)
        count = nn.astype(np.int64)
        return ConditionalMean((keys + 0.5) * self.width, mean, stderr, count, count < MIN_BIN_PAIRS)


def conditional_mean_response(pairs: PairSet, x_bin_width: Money, x_range: Optional[Money] = None) -> ConditionalMean:
    """Mean response per push bin, with standard errors.

    Bins holding fewer than 30 pairs are flagged low-confidence; empty bins are
    omitted.
    """
    if len(pairs) == 0:
        raise StatisticsError("empty pair set")
    return ConditionalMeanAccumulator(x_bin_width, x_range).add(pairs).result()


def accumulate_histogram(arrays: Iterable, k: int = 1, bin_width: Money = 0.01,
                         extent: Money = 0.3) -> BivariateHistogram:
    """Pooled push-response histogram at aggregation ``k`` over a stream of series."""
    total = None
    for inc in arrays:
        series = inc if isinstance(inc, IncrementSeries) else IncrementSeries(inc)
        h = BivariateHistogram.from_pairs(make_pairs(aggregate(series, k)), bin_width, extent)
        total = h if total is None else total + h
    if total is None:
        raise StatisticsError("no series to histogram")
    return total
