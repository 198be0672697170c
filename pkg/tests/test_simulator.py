import math

import numpy as np
import pytest

from marketmill.core import ConfigError, MillConfig, composite_config, elementary_config
from marketmill.simulator import (
    generate,
    iter_batch,
    scale_specs,
    simulate_batch,
    simulate_composite,
    simulate_elementary,
    simulate_noise,
)

SMALL = dict(series_len=20_000, n_series=4, n_groups=2, seed=3)


def test_scale_specs():
    specs = scale_specs(composite_config())
    assert len(specs) == 22
    assert specs[0].push_window == 1 and specs[2].push_window == 3
    assert specs[3].response_sigma == pytest.approx(2 * 0.02)
    assert specs[1].delay.l_scale == pytest.approx(6.0)


def test_silent_mill_is_noise():
    cfg = elementary_config(nu0=0.0, **SMALL)
    assert np.array_equal(simulate_composite(cfg, 1).increments, simulate_noise(cfg, 1).increments)


def test_one_scale_composite_is_elementary():
    cfg = composite_config(n_scales=1, **SMALL)
    assert np.array_equal(simulate_composite(cfg, 2).increments,
                          simulate_elementary(elementary_config(**SMALL), 2).increments)
    with pytest.raises(ConfigError):
        simulate_elementary(composite_config(**SMALL))


def test_noise_moments():
    cfg = elementary_config(series_len=400_000, seed=9)
    y = simulate_noise(cfg).increments
    assert y.std() == pytest.approx(math.sqrt(2) * 0.02, rel=0.02)
    r1 = np.corrcoef(y[:-1], y[1:])[0, 1]
    assert abs(r1) < 4 / math.sqrt(y.size)


def test_mass_accounting_and_causality():
    cfg = composite_config(**SMALL)
    inc, noise, diag, log = generate(cfg, 0, record=True)
    assert len(log) == diag.deposits.sum()
    scale, push_end, target, x, y = log.T
    assert np.all(target > push_end)
    # replay the deposits in order; each push equals the realized sum at its time
    cur = noise.copy()
    for i, pe, tg, xv, yv in zip(scale.astype(int), push_end.astype(int), target.astype(int), x, y):
        assert xv == pytest.approx(cur[pe - i + 1: pe + 1].sum(), rel=1e-9, abs=1e-12)
        cur[tg] += yv
    assert np.allclose(cur, inc, rtol=0, atol=1e-12)


def test_activation_rates():
    cfg = composite_config(series_len=200_000, n_series=1, n_groups=1, seed=4)
    _, _, diag, _ = generate(cfg)
    rate = diag.activations / diag.evaluations
    nus = cfg.nus()
    se = np.sqrt(nus * (1 - nus) / diag.evaluations)
    assert np.all(np.abs(rate - nus) < 4 * se)
    assert 0 <= diag.dropped_fraction < 0.01


def test_truncation_does_not_change_output():
    a = composite_config(n_scales=22, **SMALL)
    b = composite_config(n_scales=64, **SMALL)
    assert np.array_equal(simulate_composite(a, 1).increments, simulate_composite(b, 1).increments)


def test_cumulative_nu_rejected():
    with pytest.raises(ConfigError):
        MillConfig(nu0=0.5, n_scales=5, scale_decay=0.9)


def test_thread_count_does_not_change_batch():
    cfg = composite_config(series_len=5_000, n_series=6, n_groups=3, seed=5)
    one = [inc for _, inc, _ in iter_batch(cfg, threads=1)]
    many = [inc for _, inc, _ in iter_batch(cfg, threads=4)]
    assert all(np.array_equal(a, b) for a, b in zip(one, many))
    assert len(one) == 6


def test_batch_stream_zero_is_single_series():
    cfg = composite_config(series_len=5_000, n_series=1, n_groups=1, seed=6)
    batch = simulate_batch(cfg, threads=2)
    assert np.array_equal(batch.series[0].increments, simulate_composite(cfg, 0).increments)


def test_groups():
    cfg = elementary_config(series_len=200, n_series=2000, n_groups=20)
    batch = simulate_batch(cfg, threads=1)
    groups = batch.groups()
    assert len(groups) == 20 and all(len(g) == 100 for g in groups)


def test_seed_changes_output():
    a = simulate_composite(composite_config(**SMALL), 0).increments
    b = simulate_composite(composite_config(**{**SMALL, "seed": 4}), 0).increments
    assert not np.array_equal(a, b)
