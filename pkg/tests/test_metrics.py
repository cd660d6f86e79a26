import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from merkleguard.metrics import CSV_COLUMNS, ClockError, MetricsSeries, export_csv
from merkleguard.scenario import parse_scenario
from merkleguard.simulation import run_scenario
from merkleguard.cli import locate_scenario


def test_empty_run_exports_zero_bins(tmp_path):
    path = export_csv(MetricsSeries(60.0), tmp_path / "empty.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 7
    for row in lines[1:]:
        assert all(float(v) == 0.0 for v in row.split(",")[1:])


def test_sixty_bins_for_600_seconds():
    assert len(MetricsSeries(600.0, 10.0).rows()) == 60


def test_partial_last_bin_uses_its_width():
    series = MetricsSeries(25.0, 10.0)
    series.record_sent(24.0)
    assert series.rows()[-1][1] == pytest.approx(1 / 5.0)


def test_negative_delay_rejected():
    with pytest.raises(ClockError):
        MetricsSeries(10.0).record_delay(5.0, 4.0)


def test_idle_network_has_no_load():
    assert MetricsSeries(600.0).mean_load_bps() == 0.0
    assert math.isnan(MetricsSeries(600.0).mean_delay())


@given(st.lists(st.tuples(st.floats(0, 100), st.integers(1, 5000)), max_size=200))
def test_load_is_conserved_across_bins(samples):
    series = MetricsSeries(100.0)
    for t, bits in samples:
        series.record_load(bits, t)
    total = sum(bits for _, bits in samples)
    assert sum(series.load_bits) == total
    assert sum(r[4] * series.bin_duration(i) for i, r in enumerate(series.rows())) == pytest.approx(total)


def test_same_seed_byte_identical(tmp_path):
    config = parse_scenario(locate_scenario("single-external_defense"))
    a = export_csv(run_scenario(config, seed=4).metrics, tmp_path / "a.csv").read_bytes()
    b = export_csv(run_scenario(config, seed=4).metrics, tmp_path / "b.csv").read_bytes()
    assert a == b


def test_dropped_packets_leave_no_delay_sample():
    config = parse_scenario(locate_scenario("single-external_nodefense"))
    result = run_scenario(config, seed=1)
    assert len(result.metrics.delay_samples) == result.delivered
    assert result.counters["data_dropped"] > 0
