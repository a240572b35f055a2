import math

import numpy as np
import pytest

from fedgs.availability import AvailabilityModel, active_rate, availability_trace, sample_active_set, write_trace_csv
from fedgs.domain import ClientProfile, ConfigError


def _profiles(sizes, labels=None):
    labels = labels or [frozenset({0})] * len(sizes)
    return [ClientProfile(k, n, frozenset(lab)) for k, (n, lab) in enumerate(zip(sizes, labels))]


def test_idl_always_one():
    m = AvailabilityModel.build("IDL", 0.0, _profiles([3, 4]), 0)
    assert all(active_rate(m, k, t) == 1.0 for k in range(2) for t in range(5))


def test_mdf_ldf_examples():
    p = _profiles([10, 20, 40])
    np.testing.assert_allclose(AvailabilityModel.build("MDF", 1.0, p, 0).rates(0), [0.25, 0.5, 1.0], rtol=1e-15)
    np.testing.assert_allclose(AvailabilityModel.build("LDF", 1.0, p, 0).rates(0), [1.0, 0.5, 0.25], rtol=1e-15)


def test_ymf_example():
    p = _profiles([5, 5], [{2, 5}, {9}])
    m = AvailabilityModel.build("YMF", 0.9, p, 0)
    assert active_rate(m, 0, 0) == pytest.approx(0.3, abs=1e-12)
    assert active_rate(m, 1, 0) == pytest.approx(1.0, abs=1e-12)


def test_yc_bins():
    p = _profiles([5, 5], [{0}, {1, 3}])
    m = AvailabilityModel.build("YC", 1.0, p, 0, period=4, num_y=4)
    # phases are 1/4, 2/4, 3/4, 1 for t = 0..3
    assert [active_rate(m, 0, t) for t in range(4)] == [0.0, 0.0, 0.0, 0.0]
    assert [active_rate(m, 1, t) for t in range(4)] == [1.0, 0.0, 1.0, 0.0]


def test_yc_client_without_matching_label_never_active():
    m = AvailabilityModel.build("YC", 1.0, _profiles([5, 5], [{0}, {1}]), 0, period=4, num_y=4)
    trace = availability_trace(m, 200, availability_seed=3)
    assert all(0 not in A for A in trace)


def test_ln_and_sln():
    m = AvailabilityModel.build("LN", 0.5, _profiles([1] * 5), 8)
    c = m.c
    assert active_rate(m, 2, 0) == pytest.approx(c[2] / c.max(), abs=1e-12)
    s = AvailabilityModel.build("SLN", 0.5, _profiles([1] * 5), 8, period=40)
    np.testing.assert_array_equal(s.c, c)
    # phase 10/40 = 0.25, sin(pi/2) = 1
    assert active_rate(s, 2, 9) == pytest.approx(c[2] / c.max() * 0.9, abs=1e-12)
    assert active_rate(s, 2, 29) == pytest.approx(c[2] / c.max() * 0.1, abs=1e-12)


def test_lognormal_parameter_reading():
    std = AvailabilityModel.build("LN", 0.5, _profiles([1] * 4000), 1)
    var = AvailabilityModel.build("LN", 0.5, _profiles([1] * 4000), 1, lognormal_param="var")
    assert np.log(std.c).std() == pytest.approx(math.log(2), rel=0.05)
    assert np.log(var.c).std() == pytest.approx(math.sqrt(math.log(2)), rel=0.05)


@pytest.mark.parametrize("mode", ["LN", "SLN"])
def test_lognormal_modes_reject_beta_one(mode):
    with pytest.raises(ConfigError):
        AvailabilityModel(mode=mode, beta=1.0)


@pytest.mark.parametrize("kw", [{"mode": "XYZ"}, {"mode": "MDF", "beta": 1.5}, {"mode": "YC", "period": 0}])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        AvailabilityModel(**kw)


@pytest.mark.parametrize("mode", ["IDL", "MDF", "LDF", "YMF", "YC", "LN", "SLN"])
def test_rates_in_unit_interval_and_periodic(mode):
    rng = np.random.default_rng(0)
    labels = [set(rng.choice(10, 2, replace=False).tolist()) for _ in range(12)]
    p = _profiles(rng.integers(1, 500, 12).tolist(), labels)
    m = AvailabilityModel.build(mode, 0.7, p, 2, period=7, num_y=10)
    for t in range(20):
        r = m.rates(t)
        assert np.all((r >= 0) & (r <= 1))
        np.testing.assert_array_equal(r, m.rates(t + 7))


def test_empirical_frequency():
    p = _profiles([5, 10, 20, 40, 80, 160, 320, 640, 1280, 2560])
    m = AvailabilityModel.build("MDF", 0.7, p, 0)
    trace = availability_trace(m, 10_000, availability_seed=1)
    freq = np.zeros(10)
    for A in trace:
        freq[A] += 1
    np.testing.assert_allclose(freq / 10_000, m.rates(0), atol=0.02)


def test_draws_are_keyed_per_round_and_client():
    m = AvailabilityModel.build("MDF", 0.7, _profiles([5, 50, 500]), 0)
    assert sample_active_set(m, 17, 4) == sample_active_set(m, 17, 4)
    assert availability_trace(m, 30, 4)[17] == sample_active_set(m, 17, 4)


def test_trace_csv(tmp_path):
    write_trace_csv([[0, 2], []], 3, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "round,client_id,active"
    assert len(lines) == 7
    assert lines[1:4] == ["0,0,1", "0,1,0", "0,2,1"]
