import numpy as np
import pytest

from marketmill.core import ConfigError, IncrementSeries, elementary_config
from marketmill.io import (
    MAGIC,
    ConfigFileError,
    DataFileError,
    RunManifest,
    export_price_csv,
    format_config,
    ingest_csv,
    load_config,
    parse_config_text,
    preset_config,
    read_grid_csv,
    read_millness_table,
    read_series,
    read_series_bin,
    write_grid_csv,
    write_millness_table,
    write_series_bin,
    write_series_csv,
)
from marketmill.simulator import simulate_composite


def _ticks(tmp_path, rows, name="ticks.csv"):
    p = tmp_path / name
    p.write_text("timestamp,price\n" + "".join(f"{t},{v}\n" for t, v in rows))
    return p


class TestConfig:
    def test_parse(self):
        cfg = parse_config_text("# comment\nsigma0_dollars = 0.03\nnu0=0.1  # inline\n"
                                "strategy_weights = 0.5,0.25,0.25\n")
        assert cfg.sigma0 == 0.03 and cfg.nu0 == 0.1
        assert cfg.strategy_weights == (0.5, 0.25, 0.25)

    def test_preset_line(self):
        cfg = parse_config_text("preset = composite\nseed = 4\n")
        assert cfg.n_scales == 64 and cfg.seed == 4

    def test_errors_carry_line_numbers(self):
        with pytest.raises(ConfigFileError) as exc:
            parse_config_text("nu0 = 0.1\nbogus = 3\nsigma0_dollars = abc\nno equals sign\n", "run.txt")
        msgs = exc.value.messages
        assert [m.split(":")[1] for m in msgs] == ["2", "3", "4"]
        assert isinstance(exc.value, ConfigError)

    def test_semantic_errors(self):
        with pytest.raises(ConfigFileError, match="nu0"):
            parse_config_text("nu0 = 2.0\n")

    def test_round_trip_through_format(self, tmp_path):
        cfg = preset_config("dis-like", seed=11, series_len=1234)
        p = tmp_path / "c.txt"
        p.write_text(format_config(cfg))
        assert load_config(p) == cfg

    def test_echo(self):
        text = format_config(elementary_config())
        assert "nu0 = 0.12" in text and "l_scale_intervals = 3.0" in text and "sigma0_dollars = 0.02" in text
        comp = format_config(preset_config("composite"))
        assert "# active nu_i: 0.12, 0.096, 0.0768, 0.06144" in comp

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError):
            load_config(tmp_path / "nope.txt")

    def test_unknown_preset(self):
        with pytest.raises(ConfigFileError):
            preset_config("nonesuch")


class TestSeriesFiles:
    def test_binary_round_trip(self, tmp_path):
        x = np.random.default_rng(0).normal(size=1000)
        p = tmp_path / "s.bin"
        write_series_bin(p, x)
        raw = p.read_bytes()
        assert raw[:6] == MAGIC
        assert int.from_bytes(raw[6:14], "little") == 1000
        assert np.array_equal(read_series_bin(p), x)

    def test_binary_rejects_bad_files(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTMIL" + b"\0" * 16)
        with pytest.raises(DataFileError):
            read_series_bin(p)
        write_series_bin(p, np.ones(4))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(DataFileError):
            read_series_bin(p)

    def test_csv_round_trip_with_breaks(self, tmp_path):
        s = IncrementSeries([0.1, -0.2, 0.3, 1 / 3], breaks=(1, 3))
        p = tmp_path / "s.csv"
        write_series_csv(p, s)
        back = read_series(p)
        assert np.array_equal(back.increments, s.increments)
        assert back.breaks == s.breaks


class TestIngest:
    def test_single_increment(self, tmp_path):
        p = _ticks(tmp_path, [("2005-03-01T09:30:10-05:00", "10.00"), ("2005-03-01T09:31:10-05:00", "10.02")])
        s = ingest_csv(p)
        assert s.increments == pytest.approx([0.02], abs=1e-12)

    def test_gap_forward_fills(self, tmp_path):
        p = _ticks(tmp_path, [("2005-03-01T09:30:00-05:00", "10.00"), ("2005-03-01T09:34:00-05:00", "10.05")])
        s = ingest_csv(p)
        assert s.increments[:3].tolist() == [0.0, 0.0, 0.0]
        assert s.increments[3] == pytest.approx(0.05)
        assert len(s) == 4

    def test_last_price_per_bucket(self, tmp_path):
        p = _ticks(tmp_path, [("2005-03-01T09:30:00-05:00", "10.00"), ("2005-03-01T09:30:40-05:00", "10.10"),
                              ("2005-03-01T09:31:05-05:00", "10.15")])
        assert ingest_csv(p).increments == pytest.approx([0.05])

    def test_sessions_make_segments(self, tmp_path):
        p = _ticks(tmp_path, [
            ("2005-03-01T09:30:00-05:00", "10.00"), ("2005-03-01T09:32:00-05:00", "10.01"),
            ("2005-03-01T17:00:00-05:00", "12.00"),  # after hours, ignored
            ("2005-03-02T09:30:00-05:00", "11.00"), ("2005-03-02T09:31:00-05:00", "10.99"),
        ])
        s = ingest_csv(p)
        assert len(s) == 3 and s.breaks == (2,)
        assert s.increments == pytest.approx([0.0, 0.01, -0.01])

    def test_close_tick_is_kept(self, tmp_path):
        p = _ticks(tmp_path, [("2005-03-01T15:58:30-05:00", "10.00"), ("2005-03-01T16:00:00-05:00", "10.04")])
        assert ingest_csv(p).increments == pytest.approx([0.04])

    def test_errors(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(DataFileError, match="empty"):
            ingest_csv(empty)
        bad = _ticks(tmp_path, [("2005-03-01T09:30:00-05:00", "10.00"), ("garbage", "x")], "bad.csv")
        with pytest.raises(DataFileError, match=":3:"):
            ingest_csv(bad)
        neg = _ticks(tmp_path, [("2005-03-01T09:30:00-05:00", "-1")], "neg.csv")
        with pytest.raises(DataFileError, match=":2:"):
            ingest_csv(neg)
        back = _ticks(tmp_path, [("2005-03-01T09:31:00-05:00", "1"), ("2005-03-01T09:30:00-05:00", "1")], "b.csv")
        with pytest.raises(DataFileError, match="non-decreasing"):
            ingest_csv(back)

    def test_round_trip(self, tmp_path):
        cfg = elementary_config(series_len=3000, seed=2)
        s = simulate_composite(cfg)
        p = tmp_path / "prices.csv"
        export_price_csv(s, p, start_price=50.0)
        back = ingest_csv(p, session=None)
        assert len(back) == len(s)
        assert np.max(np.abs(back.increments - s.increments)) < 1e-12


def test_grid_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    centers = -0.3 + 0.01 * (np.arange(60) + 0.5)
    grid = rng.normal(size=(60, 60)) * 1e3
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_grid_csv(p1, centers, grid)
    c, g = read_grid_csv(p1)
    assert np.allclose(g, grid, rtol=1e-8, atol=0)
    write_grid_csv(p2, c, g)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[0] == "x_center,y_center,value"


def test_millness_table(tmp_path):
    p = tmp_path / "t.csv"
    write_millness_table(p, [("model", "mean_rho", 1.0, 1.234567891234), ("model", "std_rho", 1.0, None)])
    rows = read_millness_table(p)
    assert rows[0] == {"source": "model", "quantity": "mean_rho", "dt_minutes": "1", "value_percent": "1.23456789"}
    assert rows[1]["value_percent"] == ""


def test_manifest_verify(tmp_path):
    f = tmp_path / "x.txt"
    f.write_text("hello")
    m = RunManifest(config={"seed": 1}, produced_at="now")
    m.add(tmp_path, f)
    m.write(tmp_path / "manifest.json")
    back = RunManifest.read(tmp_path / "manifest.json")
    assert back.verify(tmp_path) == []
    f.write_text("changed")
    assert back.verify(tmp_path) == ["x.txt"]
