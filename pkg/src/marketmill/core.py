"""Shared vocabulary: increment series, Laplace noise, response delays, model configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as _replace
from typing import Tuple

import numpy as np

Money = float

# Scales whose activation probability falls below this floor are dropped.
NU_FLOOR = 1e-3


class ConfigError(ValueError):
    """Raised for model parameters that violate a stated constraint."""


def series_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent deterministic stream for series ``index`` of a batch.

    The stream is Philox keyed by ``SeedSequence(seed, spawn_key=(index,))``,
    i.e. the ``index``-th child of ``SeedSequence(seed).spawn(...)``. It depends
    only on ``(seed, index)``, never on execution order.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class IncrementSeries:
    """Uniformly spaced price increments (dollars) at base scale ``dt0`` minutes.

    ``breaks`` lists indices where a new segment (e.g. trading session) starts;
    pairs and aggregation windows never straddle a break.
    """

    increments: np.ndarray
    dt0: float = 1.0
    breaks: Tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.array(self.increments, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("increment series must be one-dimensional and non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("increment series contains NaN or Inf")
        if self.dt0 <= 0:
            raise ValueError("dt0 must be positive")
        b = tuple(sorted({int(i) for i in self.breaks if 0 < int(i) < arr.size}))
        arr.setflags(write=False)
        object.__setattr__(self, "increments", arr)
        object.__setattr__(self, "breaks", b)

    def __len__(self) -> int:
        return self.increments.size

    def segments(self):
        """Yield the increment arrays of each unbroken segment."""
        edges = (0,) + self.breaks + (self.increments.size,)
        for a, b in zip(edges[:-1], edges[1:]):
            yield self.increments[a:b]


@dataclass(frozen=True)
class LaplaceParams:
    sigma: Money

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"Laplace scale must be positive and finite, got {self.sigma!r}")


@dataclass(frozen=True)
class DelayParams:
    l_scale: float

    def __post_init__(self):
        if not (self.l_scale > 0 and math.isfinite(self.l_scale)):
            raise ConfigError(f"delay scale L must be positive, got {self.l_scale!r}")

    @property
    def p_first(self) -> float:
        """P(l = 1): success probability of the geometric law on {1, 2, ...}."""
        return -math.expm1(-1.0 / self.l_scale)

    @property
    def mean(self) -> float:
        return 1.0 / self.p_first

    def pmf(self, l):
        l = np.asarray(l)
        q = math.exp(-1.0 / self.l_scale)
        return np.where(l >= 1, self.p_first * q ** (np.maximum(l, 1) - 1), 0.0)


def sample_laplace(params: LaplaceParams, rng: np.random.Generator, size=None):
    """Two-sided exponential draws with mean 0 and scale ``sigma`` (variance 2 sigma^2)."""
    return rng.laplace(0.0, params.sigma, size)


def laplace_pdf(y, params: LaplaceParams):
    s = params.sigma
    return np.exp(-np.abs(y) / s) / (2.0 * s)


def laplace_cdf(y, params: LaplaceParams):
    y = np.asarray(y, dtype=float)
    e = 0.5 * np.exp(-np.abs(y) / params.sigma)
    return np.where(y < 0, e, 1.0 - e)


def sample_delay(params: DelayParams, rng: np.random.Generator, size=None):
    """Response delay l >= 1 with P(l) = (1 - e^{-1/L}) e^{-(l-1)/L}."""
    return rng.geometric(params.p_first, size)


@dataclass(frozen=True)
class MillConfig:
    """All parameters of one simulated batch.

    ``sigma_reading`` selects how ``sigma0`` is interpreted: ``"scale"`` uses it
    as the Laplace scale parameter directly, ``"std"`` as the standard deviation
    of the base noise (scale = sigma0 / sqrt 2).
    """

    sigma0: Money = 0.02
    nu0: float = 0.12
    l_scale: float = 3.0
    n_scales: int = 1
    scale_decay: float = 0.8
    series_len: int = 195_000
    n_series: int = 2000
    n_groups: int = 20
    seed: int = 0
    strategy_weights: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    sigma_reading: str = "scale"
    dt0_minutes: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "strategy_weights", tuple(float(w) for w in self.strategy_weights))
        errors = self.problems()
        if errors:
            raise ConfigError("; ".join(errors))

    def problems(self) -> list:
        out = []
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            out.append("sigma0 must be positive")
        if not 0.0 <= self.nu0 <= 1.0:
            out.append("nu0 must lie in [0, 1]")
        if not self.l_scale > 0:
            out.append("l_scale must be positive")
        if int(self.n_scales) != self.n_scales or self.n_scales < 1:
            out.append("n_scales must be an integer >= 1")
        if not 0.0 < self.scale_decay <= 1.0:
            out.append("scale_decay must lie in (0, 1]")
        if self.series_len <= self.n_scales:
            out.append("series_len must exceed n_scales")
        if self.n_series < 1 or self.n_groups < 1:
            out.append("n_series and n_groups must be >= 1")
        elif self.n_series % self.n_groups:
            out.append("n_series must be divisible by n_groups")
        if len(self.strategy_weights) != 3:
            out.append("strategy_weights needs three entries (mill, contrarian, trend)")
        elif min(self.strategy_weights) < 0 or abs(sum(self.strategy_weights) - 1.0) > 1e-12:
            out.append("strategy_weights must be non-negative and sum to 1")
        if self.sigma_reading not in ("scale", "std"):
            out.append("sigma_reading must be 'scale' or 'std'")
        if not out and self.nus().sum() > 1.0 + 1e-12:
            out.append(f"cumulative activation probability {self.nus().sum():.6g} exceeds 1")
        return out

    @property
    def base_scale(self) -> Money:
        """Laplace scale parameter of the base-interval noise."""
        return self.sigma0 if self.sigma_reading == "scale" else self.sigma0 / math.sqrt(2.0)

    def nus(self) -> np.ndarray:
        """Activation probabilities per scale, truncated at the noise floor.

        Scale 1 is always kept so that ``nu0 = 0`` still describes a (silent) elementary mill.
        """
        out = []
        for i in range(int(self.n_scales)):
            nu = self.nu0 * self.scale_decay ** i
            if i > 0 and nu < NU_FLOOR:
                break
            out.append(nu)
        return np.array(out, dtype=np.float64)

    @property
    def group_size(self) -> int:
        return self.n_series // self.n_groups

    def replace(self, **changes) -> "MillConfig":
        return _replace(self, **changes)


def elementary_config(**overrides) -> MillConfig:
    """Single-scale mill: nu0 = 0.12, L = 3, sigma0 = $0.02."""
    return MillConfig(**{"n_scales": 1, **overrides})


def composite_config(**overrides) -> MillConfig:
    """Multiscale mill with nu_i = 0.12 * 0.8^(i-1), truncated at the noise floor."""
    return MillConfig(**{"n_scales": 64, "scale_decay": 0.8, **overrides})
