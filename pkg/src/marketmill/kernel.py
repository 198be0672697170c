"""Asymmetry-generating responses: the sector mask, the mill kernel and its strategy modes.

All samplers take a ``numpy.random.Generator``. The scalar draw routines are
numba-compiled and shared with the simulator, so the Python-level samplers and
the batch engine draw from exactly the same code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import integrate

from .core import LaplaceParams, Money, laplace_pdf

LN2 = math.log(2.0)


class StrategyMode(enum.IntEnum):
    MILL = 0
    CONTRARIAN = 1
    TREND_FOLLOWING = 2


@dataclass(frozen=True)
class StrategyMix:
    """Weights of the three response modes; non-negative, summing to one."""

    w_mill: float = 1.0
    w_contrarian: float = 0.0
    w_trend: float = 0.0

    def __post_init__(self):
        w = self.weights
        if min(w) < 0:
            raise ValueError(f"strategy weights must be non-negative, got {w}")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"strategy weights must sum to 1, got {sum(w)!r}")

    @property
    def weights(self):
        return (float(self.w_mill), float(self.w_contrarian), float(self.w_trend))

    @classmethod
    def normalized(cls, w_mill, w_contrarian, w_trend) -> "StrategyMix":
        w = np.array([w_mill, w_contrarian, w_trend], dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError(f"strategy weights must be non-negative with a positive sum, got {tuple(w)}")
        w = w / w.sum()
        # absorb rounding so the sum is exactly 1
        w[int(np.argmax(w))] += 1.0 - w.sum()
        return cls(*w)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.weights)


PURE_MILL = StrategyMix(1.0, 0.0, 0.0)


# --- geometry ---------------------------------------------------------------

def f_mill(x, y):
    """Normalized sector mask: 2 on the mill support, 0 elsewhere.

    For x > 0 the support is y > x or -x <= y < 0; for x < 0 it is the mirror
    image y < x or 0 < y <= -x. ``x == 0`` is not a valid push.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x == 0):
        raise ValueError("f_mill is undefined at x = 0; zero pushes carry no asymmetric response")
    pos = ((y > x) | ((y >= -x) & (y < 0))) & (x > 0)
    neg = ((y < x) | ((y <= -x) & (y > 0))) & (x < 0)
    out = np.where(pos | neg, 2, 0)
    return int(out) if out.ndim == 0 else out


def sector_of(x, y):
    """Sector index 1..8, counterclockwise from S1 = {x > 0, 0 < y < x}.

    Even sectors coincide with the mill support. Points on a boundary ray go to
    the lower-index neighbour (the origin to S1).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    conds = [
        (x > 0) & (y >= 0) & (y <= x),
        (y > 0) & (x >= 0),
        (x < 0) & (y > 0) & (y >= -x),
        (x < 0) & (y >= 0),
        (x < 0) & (y >= x),
        (y < 0) & (x <= 0),
        (x > 0) & (y <= -x),
        (x > 0) & (y < 0),
    ]
    out = np.select(conds, np.arange(1, 9), default=1)
    return int(out) if out.ndim == 0 else out


# --- compiled draws ----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _positive_exponential(scale, rng):
    e = rng.standard_exponential()
    while e == 0.0:
        e = rng.standard_exponential()
    return scale * e


@numba.njit(cache=True, nogil=True)
def _mill_draw_branch(x, scale, rng):
    ax = abs(x)
    if rng.random() < math.exp(-ax / scale):
        mag = ax + _positive_exponential(scale, rng)
        trend = True
    else:
        # exponential magnitude truncated to (0, |x|], response against the push
        w = 1.0 - rng.random()
        mag = -min(-scale * math.log1p(w * math.expm1(-ax / scale)), ax)
        trend = False
    return (mag if x > 0 else -mag), trend


@numba.njit(cache=True, nogil=True)
def _mill_draw(x, scale, rng):
    return _mill_draw_branch(x, scale, rng)[0]


@numba.njit(cache=True, nogil=True)
def _mode_draw(mode, x, scale, rng):
    if mode == 0:
        return _mill_draw(x, scale, rng)
    mag = _positive_exponential(scale, rng)
    same_sign = mode == 2
    if (x > 0) == same_sign:
        return mag
    return -mag


@numba.njit(cache=True, nogil=True)
def _pick_mode(wcum, rng):
    # deterministic mixes consume no randomness
    if wcum[0] >= 1.0:
        return 0
    if wcum[0] <= 0.0 and wcum[1] >= 1.0:
        return 1
    if wcum[1] <= 0.0:
        return 2
    u = rng.random() * wcum[2]
    if u < wcum[0]:
        return 0
    if u < wcum[1]:
        return 1
    return 2


@numba.njit(cache=True, nogil=True)
def _asym_draw(wcum, nu, x, scale, rng):
    if x == 0.0:
        return 0.0
    if rng.random() >= nu:
        return 0.0
    return _mode_draw(_pick_mode(wcum, rng), x, scale, rng)


@numba.njit(cache=True, nogil=True)
def _many_mode(mode, x, scale, rng, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = _mode_draw(mode, x, scale, rng)
    return out


@numba.njit(cache=True, nogil=True)
def _many_mill_branch(x, scale, rng, n):
    out = np.empty(n)
    trend = np.empty(n, dtype=np.bool_)
    for k in range(n):
        out[k], trend[k] = _mill_draw_branch(x, scale, rng)
    return out, trend


@numba.njit(cache=True, nogil=True)
def _many_asym(wcum, nu, x, scale, rng, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = _asym_draw(wcum, nu, x, scale, rng)
    return out


def _check_push(x):
    if x == 0 or not math.isfinite(x):
        raise ValueError(f"push must be finite and non-zero, got {x!r}")


def _finish(out, size):
    return float(out[0]) if size is None else out.reshape(size)


def _count(size):
    return 1 if size is None else int(np.prod(size))


def sample_mill(x: Money, base: LaplaceParams, rng: np.random.Generator, size=None):
    """Draw from the mill response density f_mill(x, y) * P0(y).

    For x > 0 the trend-preserving branch (y = x + Exp(sigma)) fires with
    probability exp(-x / sigma); otherwise y is drawn from the base density
    restricted to [-x, 0). Negative pushes are mirrored.
    """
    _check_push(x)
    return _finish(_many_mode(0, float(x), base.sigma, rng, _count(size)), size)


def sample_mill_with_branch(x: Money, base: LaplaceParams, rng: np.random.Generator, n: int):
    """Mill draws together with a boolean mask of the trend-preserving branch."""
    _check_push(x)
    return _many_mill_branch(float(x), base.sigma, rng, int(n))


def trend_branch_probability(x: Money, base: LaplaceParams) -> float:
    return math.exp(-abs(x) / base.sigma)


def mill_mean(x: Money, base: LaplaceParams) -> float:
    """Closed-form mean of the mill response at push x."""
    s = base.sigma
    a = abs(x)
    m = 2.0 * math.exp(-a / s) * (a + s) - s
    return m if x > 0 else -m


def sample_mode(mode: StrategyMode, x: Money, base: LaplaceParams, rng: np.random.Generator, size=None):
    """Response under one strategy mode.

    Contrarian and trend-following responses are the halves of the base density
    with sign opposite to, or equal to, the push, renormalized.
    """
    _check_push(x)
    mode = StrategyMode(mode)
    return _finish(_many_mode(int(mode), float(x), base.sigma, rng, _count(size)), size)


def step_nu(nu0: float):
    """Activation probability nu0 for any non-zero push and 0 at x = 0."""
    return lambda x: nu0 if x != 0 else 0.0


def sample_asym(mix: StrategyMix, nu: float, x: Money, base: LaplaceParams, rng: np.random.Generator,
                size=None, nu_fn=None):
    """Randomized asymmetric contribution: 0 with probability 1 - nu, else a mode draw.

    ``nu_fn`` optionally replaces the step activation law with nu(x).
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"push must be finite, got {x!r}")
    p = float(nu_fn(x)) if nu_fn is not None else (float(nu) if x != 0 else 0.0)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"activation probability must lie in [0, 1], got {p!r}")
    return _finish(_many_asym(mix.cumulative(), p, x, base.sigma, rng, _count(size)), size)


# --- densities and the convolution oracle -------------------------------------

def mode_density(mode: StrategyMode, y, x: Money, base: LaplaceParams):
    """Density of ``sample_mode(mode, x, ...)`` evaluated at y."""
    _check_push(x)
    y = np.asarray(y, dtype=float)
    p0 = laplace_pdf(y, base)
    mode = StrategyMode(mode)
    if mode is StrategyMode.MILL:
        return f_mill(np.full_like(y, x), y) * p0
    same = np.sign(y) == np.sign(x)
    if mode is StrategyMode.TREND_FOLLOWING:
        return np.where(same & (y != 0), 2.0 * p0, 0.0)
    return np.where(~same & (y != 0), 2.0 * p0, 0.0)


def mode_support(mode: StrategyMode, x: Money):
    """Intervals carrying the mode's mass, as (lo, hi) pairs."""
    a = abs(x)
    mode = StrategyMode(mode)
    if mode is StrategyMode.MILL:
        pieces = [(a, math.inf), (-a, 0.0)]
    elif mode is StrategyMode.TREND_FOLLOWING:
        pieces = [(0.0, math.inf)]
    else:
        pieces = [(-math.inf, 0.0)]
    if x < 0:
        pieces = [(-hi, -lo) for lo, hi in pieces]
    return pieces


class OracleError(RuntimeError):
    pass


def _quad(fn, lo, hi, points=()):
    inner = sorted(p for p in points if lo < p < hi)
    if inner and (math.isinf(lo) or math.isinf(hi)):
        # quad takes no breakpoints on infinite ranges; split at the kinks instead
        edges = [lo] + inner + [hi]
        return sum(_quad(fn, a, b) for a, b in zip(edges[:-1], edges[1:]))
    res = integrate.quad(fn, lo, hi, points=inner or None, epsabs=1e-13, epsrel=1e-11, limit=200,
                         full_output=1)
    if len(res) > 3:
        raise OracleError(f"quadrature on [{lo}, {hi}] failed: {res[3]} (value={res[0]}, abserr={res[1]})")
    return res[0]


def conditional_density_oracle(y: Money, x: Money, nu: float, base: LaplaceParams,
                               mix: StrategyMix = PURE_MILL) -> float:
    """P(y | x) of noise plus randomized asymmetric response, by numeric convolution.

    Test oracle only: the noise density is convolved with
    (1 - nu) delta + nu * (mode mixture), integrating each mode over its support.
    """
    _check_push(x)
    y = float(y)
    p0 = laplace_pdf(y, base)
    if nu == 0:
        return float(p0)
    s = base.sigma

    def integrand(mode):
        return lambda m: math.exp(-abs(y - m) / s) / (2 * s) * float(mode_density(mode, m, x, base))

    conv = 0.0
    for mode, w in zip(StrategyMode, mix.weights):
        if w == 0:
            continue
        for lo, hi in mode_support(mode, x):
            conv += w * _quad(integrand(mode), lo, hi, points=(y,))
    return float((1.0 - nu) * p0 + nu * conv)
