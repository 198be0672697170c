import math

import numpy as np
import pytest

from marketmill.core import DelayParams, IncrementSeries, elementary_config
from marketmill.analysis import (
    AsymmetryAxis,
    BivariateHistogram,
    MillnessReport,
    PairSet,
    StatisticsError,
    aggregate,
    asymmetric_component,
    ConditionalMeanAccumulator,
    conditional_mean_response,
    make_pairs,
    millness,
    millness_reports,
    millness_stderr,
    sector_counts,
    symmetry_chi2,
)
from marketmill.kernel import sector_of
from marketmill.simulator import iter_batch, simulate_batch, simulate_noise


def test_aggregate_examples():
    s = IncrementSeries([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    a = aggregate(s, 3)
    assert a.increments.tolist() == [6.0, 15.0]
    assert a.dt0 == 3.0
    assert aggregate(s, 1) is s
    with pytest.raises(ValueError):
        aggregate(s, 8)
    with pytest.raises(ValueError):
        aggregate(s, 0)


def test_aggregate_respects_breaks():
    s = IncrementSeries([1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0], breaks=(3,))
    a = aggregate(s, 2)
    assert a.increments.tolist() == [2.0, 4.0, 4.0]
    assert a.breaks == (1,)


def test_make_pairs():
    s = IncrementSeries([1.0, 2.0, 3.0, 4.0], breaks=(2,))
    p = make_pairs(s)
    assert p.x.tolist() == [1.0, 3.0] and p.y.tolist() == [2.0, 4.0]
    p2 = make_pairs(IncrementSeries([1.0, 2.0, 3.0, 4.0]), lag=2)
    assert p2.x.tolist() == [1.0, 2.0] and p2.y.tolist() == [3.0, 4.0]


def test_sector_counts_match_brute_force():
    rng = np.random.default_rng(0)
    x, y = rng.laplace(0, 0.1, size=(2, 10**5))
    x[:50] = 0.0
    y[50:100] = x[50:100]
    y[100:150] = -x[100:150]
    dps = 0.2
    keep = (x != 0) & (y != 0) & (np.abs(x) <= dps) & (np.abs(y) <= dps)
    want = np.bincount(sector_of(x[keep], y[keep]), minlength=9)[1:]
    assert np.array_equal(sector_counts(x, y, dps), want)


def test_millness_hand_example():
    # two points in each even sector, one in each odd sector
    ang = np.deg2rad(22.5 + 45 * np.arange(8))
    reps = np.array([1, 2, 1, 2, 1, 2, 1, 2])
    x = np.repeat(0.1 * np.cos(ang), reps)
    y = np.repeat(0.1 * np.sin(ang), reps)
    assert millness(PairSet(1.0, x, y), 0.3) == pytest.approx(100 * 4 / 12)


def test_millness_square_is_closed():
    p = PairSet(1.0, np.array([0.3, 0.31]), np.array([-0.1, -0.1]))
    assert millness(p, 0.3) == pytest.approx(100.0)
    with pytest.raises(StatisticsError):
        millness(PairSet(1.0, np.array([0.5]), np.array([0.1])), 0.3)


def test_noise_millness_is_zero():
    cfg = elementary_config(series_len=200_000, seed=1)
    for k in (1, 3, 6):
        pairs = make_pairs(aggregate(simulate_noise(cfg), k))
        assert abs(millness(pairs)) < 3 * millness_stderr(len(pairs))


def test_single_group_has_no_spread():
    cfg = elementary_config(series_len=5_000, n_series=2, n_groups=1)
    batch = simulate_batch(cfg, threads=1)
    rep = millness_reports(batch.series, [1], 0.3, 2, 1)[1]
    assert rep.std_rho is None and len(rep.rho_per_group) == 1
    # streaming arrays and IncrementSeries give the same counts
    rep2 = millness_reports((s.increments for s in batch.series), [1], 0.3, 2, 1)[1]
    assert rep2.mean_rho == rep.mean_rho


def test_report_from_counts():
    counts = np.array([[1, 2, 1, 2, 1, 2, 1, 2], [1, 1, 1, 1, 1, 1, 1, 1]])
    rep = MillnessReport.from_group_counts(3.0, counts, 0.3)
    assert rep.rho_per_group == pytest.approx((100 / 3, 0.0))
    assert rep.mean_rho == pytest.approx(50 / 3)
    assert rep.std_rho == pytest.approx(np.std([100 / 3, 0.0], ddof=1))


@pytest.fixture(scope="module")
def hist():
    rng = np.random.default_rng(4)
    x, y = rng.laplace(0, 0.05, size=(2, 200_000))
    y = y + np.where(rng.random(x.size) < 0.3, -0.5 * x, 0.0)
    return BivariateHistogram.from_pairs(PairSet(1.0, x, y), 0.01, 0.3)


class TestPatterns:
    @pytest.mark.parametrize("axis", list(AsymmetryAxis))
    def test_antisymmetric(self, hist, axis):
        pat = asymmetric_component(hist, axis)
        assert np.allclose(pat.p_asym, -axis.reflect_grid(pat.p_asym), atol=1e-12)
        assert np.all(pat.p_mill_component >= 0)

    @pytest.mark.parametrize("axis", list(AsymmetryAxis))
    def test_reflection_is_involution_and_matches_points(self, axis):
        g = np.arange(36.0).reshape(6, 6)
        assert np.array_equal(axis.reflect_grid(axis.reflect_grid(g)), g)
        centers = -0.3 + 0.1 * (np.arange(6) + 0.5)
        cx, cy = np.meshgrid(centers, centers, indexing="ij")
        rx, ry = axis.reflect_points(cx, cy)
        ix = np.rint((rx + 0.3) / 0.1 - 0.5).astype(int)
        iy = np.rint((ry + 0.3) / 0.1 - 0.5).astype(int)
        assert np.array_equal(axis.reflect_grid(g), g[ix, iy])

    def test_contrarian_cloud_is_asymmetric_about_y0(self, hist):
        _, _, p = symmetry_chi2(hist, "y0")
        assert p < 1e-6
        pat = asymmetric_component(hist, "y0")
        assert pat.quadrant_fraction(same_sign=False) > 0.8

    def test_symmetric_cloud_passes_chi2(self):
        rng = np.random.default_rng(5)
        x, y = rng.laplace(0, 0.05, size=(2, 200_000))
        h = BivariateHistogram.from_pairs(PairSet(1.0, x, y), 0.01, 0.3)
        for axis in AsymmetryAxis:
            assert symmetry_chi2(h, axis)[2] > 1e-3

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            BivariateHistogram.from_pairs(PairSet(1.0, np.zeros(3), np.zeros(3)), 0.07, 0.3)


def test_conditional_mean_z_shape():
    cfg = elementary_config(series_len=400_000, n_series=1, n_groups=1, seed=2)
    _, inc, _ = next(iter_batch(cfg, threads=1))
    cm = conditional_mean_response(make_pairs(IncrementSeries(inc)), 0.01, x_range=0.12)
    ok = ~cm.low_confidence
    c, m, se = cm.x_center[ok], cm.mean[ok], cm.stderr[ok]
    small = (c > 0) & (c < 0.02)
    large = c > 0.06
    assert np.all(m[small] > 0) and np.all(m[large] < 0)
    # antisymmetry of paired bins
    for xc in c[c > 0]:
        j = np.flatnonzero(np.isclose(c, -xc))
        if j.size:
            i = np.flatnonzero(c == xc)[0]
            assert abs(m[i] + m[j[0]]) < 3 * math.hypot(se[i], se[j[0]])


def test_noise_conditional_mean_is_flat():
    cfg = elementary_config(series_len=400_000, seed=3)
    cm = conditional_mean_response(make_pairs(simulate_noise(cfg)), 0.01)
    ok = ~cm.low_confidence
    assert np.all(np.abs(cm.mean[ok]) < 3 * cm.stderr[ok])


def test_conditional_mean_bins():
    p = PairSet(1.0, np.array([-0.015, -0.005, 0.005, 0.004]), np.array([1.0, 2.0, 3.0, 5.0]))
    cm = conditional_mean_response(p, 0.01)
    assert cm.x_center.tolist() == pytest.approx([-0.015, -0.005, 0.005])
    assert cm.mean.tolist() == pytest.approx([1.0, 2.0, 4.0])
    assert cm.low_confidence.all()


def test_streamed_conditional_mean_matches_one_shot():
    rng = np.random.default_rng(7)
    x, y = rng.laplace(0, 0.02, size=(2, 50_000))
    whole = conditional_mean_response(PairSet(1.0, x, y), 0.01, 0.06)
    acc = ConditionalMeanAccumulator(0.01, 0.06)
    for part in np.array_split(np.arange(x.size), 7):
        acc.add(PairSet(1.0, x[part], y[part]))
    got = acc.result()
    assert np.array_equal(got.count, whole.count)
    assert np.allclose(got.mean, whole.mean, rtol=1e-10, atol=1e-15)
    assert np.allclose(got.stderr, whole.stderr, rtol=1e-8)


def _single_channel_rho(mode, q, n, seed, sigma=0.02):
    """Millness of one push-response step with a response added with probability q.

    Independent of the package: x and the noise are Laplace; the mode response is
    a one-sided exponential whose sign follows (trend) or opposes (contrarian) x.
    """
    rng = np.random.default_rng(seed)
    x = rng.laplace(0, sigma, n)
    y = rng.laplace(0, sigma, n)
    s = np.sign(x) if mode == "trend" else -np.sign(x)
    y = y + np.where(rng.random(n) < q, s * rng.exponential(sigma, n), 0.0)
    even = ((x * y < 0) & (np.abs(y) <= np.abs(x))) | ((x * y > 0) & (np.abs(y) > np.abs(x)))
    return 100.0 * (2 * even.mean() - 1)


@pytest.mark.parametrize("mode,weights", [("trend", (0, 0, 1)), ("contrarian", (0, 1, 0))])
def test_pure_strategy_millness_matches_single_channel(mode, weights):
    cfg = elementary_config(strategy_weights=weights, series_len=200_000, n_series=10, n_groups=1, seed=8)
    rep = millness_reports((inc for _, inc, _ in iter_batch(cfg, threads=1)), [1], 0.3, 10, 1)[1]
    q = cfg.nu0 * DelayParams(cfg.l_scale).p_first
    oracle = _single_channel_rho(mode, q, 4_000_000, seed=1)
    se = math.hypot(millness_stderr(rep.n_pairs), millness_stderr(4_000_000))
    assert abs(rep.mean_rho - oracle) < 4 * se
    # a pure strategy is not mill-neutral: trend feeds the even wedges, contrarian the odd
    assert (rep.mean_rho > 0) == (mode == "trend")
    assert abs(rep.mean_rho) > 5 * millness_stderr(rep.n_pairs)
