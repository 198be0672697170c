"""Increment-series generation: pure noise, elementary mill, composite (multiscale) mill.

Every series owns the stream ``series_rng(config.seed, index)``, so a batch is
bit-identical whatever the number of worker threads. The forward pass is a
numba kernel that releases the GIL; batches are parallelized over series with a
thread pool.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .core import ConfigError, DelayParams, IncrementSeries, MillConfig, series_rng
from .kernel import _mode_draw, _pick_mode


@dataclass(frozen=True)
class ScaleSpec:
    index: int
    nu: float
    push_window: int
    delay: DelayParams
    response_sigma: float


def scale_specs(config: MillConfig) -> List[ScaleSpec]:
    """Active mill components, truncated where nu_i drops below the noise floor."""
    return [
        ScaleSpec(
            index=i,
            nu=float(nu),
            push_window=i,
            delay=DelayParams(i * config.l_scale),
            response_sigma=math.sqrt(i) * config.base_scale,
        )
        for i, nu in enumerate(config.nus(), start=1)
    ]


@dataclass
class SimDiagnostics:
    """Per-scale event counts of one or more forward passes."""

    evaluations: np.ndarray
    activations: np.ndarray
    zero_pushes: np.ndarray
    deposits: np.ndarray
    dropped: np.ndarray

    @classmethod
    def empty(cls, n_scales: int) -> "SimDiagnostics":
        z = lambda: np.zeros(n_scales, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z(), z(), z())

    def __iadd__(self, other: "SimDiagnostics") -> "SimDiagnostics":
        for name in ("evaluations", "activations", "zero_pushes", "deposits", "dropped"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    @property
    def dropped_fraction(self) -> float:
        sent = int(self.deposits.sum() + self.dropped.sum())
        return float(self.dropped.sum()) / sent if sent else 0.0

    def to_dict(self) -> dict:
        return {
            "evaluations": self.evaluations.tolist(),
            "activations": self.activations.tolist(),
            "zero_pushes": self.zero_pushes.tolist(),
            "deposits": self.deposits.tolist(),
            "dropped": self.dropped.tolist(),
            "dropped_fraction": self.dropped_fraction,
        }


@numba.njit(cache=True, nogil=True)
def _forward_pass(inc, nus, delay_p, resp_scale, wcum, rng, record, counts, log):
    """Single causal pass over ``inc`` (modified in place).

    At each boundary t (end of interval t-1), scale i fires with probability
    nus[i]; its push is the sum of the i+1 latest realized increments and its
    response lands in interval t-1+l. Activation times are drawn as geometric
    gaps, which is the same Bernoulli process as a per-step coin flip.
    ``counts`` rows: evaluations, activations, zero pushes, deposits, dropped.
    Returns the number of rows written to ``log``.
    """
    n = inc.size
    ns = nus.size
    start = ns
    nlog = 0
    nxt = np.empty(ns, dtype=np.int64)
    for i in range(ns):
        if nus[i] > 0.0:
            nxt[i] = start - 1 + rng.geometric(nus[i])
        else:
            nxt[i] = n + 1
        counts[0, i] += n - start + 1
    for t in range(start, n + 1):
        for i in range(ns):
            if nxt[i] != t:
                continue
            nxt[i] = t + rng.geometric(nus[i])
            counts[1, i] += 1
            x = 0.0
            for j in range(t - i - 1, t):
                x += inc[j]
            if x == 0.0:
                counts[2, i] += 1
                continue
            mode = _pick_mode(wcum, rng)
            lag = rng.geometric(delay_p[i])
            y = _mode_draw(mode, x, resp_scale[i], rng)
            target = t - 1 + lag
            if target < n:
                inc[target] += y
                counts[3, i] += 1
                if record:
                    log[nlog, 0] = i + 1
                    log[nlog, 1] = t - 1
                    log[nlog, 2] = target
                    log[nlog, 3] = x
                    log[nlog, 4] = y
                    nlog += 1
            else:
                counts[4, i] += 1
    return nlog


def _kernel_args(config: MillConfig):
    specs = scale_specs(config)
    nus = np.array([s.nu for s in specs])
    delay_p = np.array([s.delay.p_first for s in specs])
    resp = np.array([s.response_sigma for s in specs])
    wcum = np.cumsum(np.asarray(config.strategy_weights, dtype=float))
    return nus, delay_p, resp, wcum


def generate(config: MillConfig, index: int = 0, record: bool = False):
    """Raw forward pass for series ``index``.

    Returns ``(increments, noise, diagnostics, deposit_log)``. The log is a
    ``(k, 5)`` array of (scale, push_end, target, push, response) rows when
    ``record`` is set, else None.
    """
    rng = series_rng(config.seed, index)
    noise = rng.laplace(0.0, config.base_scale, config.series_len)
    nus, delay_p, resp, wcum = _kernel_args(config)
    counts = np.zeros((5, nus.size), dtype=np.int64)
    log = np.empty(((config.series_len + 1) * nus.size if record else 0, 5))
    inc = noise.copy()
    if nus.max(initial=0.0) > 0.0:
        nlog = _forward_pass(inc, nus, delay_p, resp, wcum, rng, record, counts, log)
    else:
        nlog = 0
        counts[0] += config.series_len - nus.size + 1
    diag = SimDiagnostics(*counts)
    deposits = log[:nlog].copy() if record else None
    return inc, noise, diag, deposits


def simulate_noise(config: MillConfig, index: int = 0) -> IncrementSeries:
    """I.i.d. Laplace increments; the exact noise underlying ``simulate_composite``."""
    rng = series_rng(config.seed, index)
    return IncrementSeries(rng.laplace(0.0, config.base_scale, config.series_len), dt0=config.dt0_minutes)


def simulate_composite(config: MillConfig, index: int = 0) -> IncrementSeries:
    inc, _, _, _ = generate(config, index)
    return IncrementSeries(inc, dt0=config.dt0_minutes)


def simulate_elementary(config: MillConfig, index: int = 0) -> IncrementSeries:
    """Single-scale mill; identical to ``simulate_composite`` with one scale."""
    if config.n_scales != 1:
        raise ConfigError(f"elementary mill needs n_scales = 1, got {config.n_scales}")
    return simulate_composite(config, index)


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def iter_batch(config: MillConfig, threads: Optional[int] = None,
               indices: Optional[Sequence[int]] = None) -> Iterator[Tuple[int, np.ndarray, SimDiagnostics]]:
    """Yield ``(index, increments, diagnostics)`` in index order.

    At most a few series per worker are held in memory, so full-size batches
    can be streamed into analysis or onto disk.
    """
    indices = list(range(config.n_series)) if indices is None else list(indices)
    threads = default_threads() if threads is None else max(1, int(threads))

    def work(i):
        inc, _, diag, _ = generate(config, i)
        return i, inc, diag

    if threads == 1:
        for i in indices:
            yield work(i)
        return
    window = 2 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = [pool.submit(work, i) for i in indices[:window]]
        nxt = window
        while pending:
            res = pending.pop(0).result()
            if nxt < len(indices):
                pending.append(pool.submit(work, indices[nxt]))
                nxt += 1
            yield res


@dataclass
class SimBatch:
    config: MillConfig
    series: Tuple[IncrementSeries, ...]
    diagnostics: SimDiagnostics = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.series)

    def groups(self) -> List[Tuple[IncrementSeries, ...]]:
        """Consecutive blocks of ``config.group_size`` series."""
        g = self.config.group_size
        return [self.series[k:k + g] for k in range(0, len(self.series), g)]


def simulate_batch(config: MillConfig, threads: Optional[int] = None) -> SimBatch:
    """All ``config.n_series`` series, held in memory."""
    series = []
    diag = SimDiagnostics.empty(len(config.nus()))
    for _, inc, d in iter_batch(config, threads):
        series.append(IncrementSeries(inc, dt0=config.dt0_minutes))
        diag += d
    return SimBatch(config, tuple(series), diag)
