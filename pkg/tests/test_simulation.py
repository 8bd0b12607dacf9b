import json

import numpy as np
import pytest

from extremes.errors import ConfigError, ParameterError
from extremes.pgf_core import Pgf, make_pgf
from extremes.simulation import (
    BLOCK,
    count_consistency,
    ks_critical_value,
    ks_distance,
    read_data,
    read_sample,
    regenerate,
    sidecar_path,
    simulate_stopped,
    write_sample,
)
from extremes.transforms import stopped_max, stopped_min


def test_sample_shape(exponential, log95):
    sample = simulate_stopped(log95, exponential, 150, seed=1)
    assert sample.m == 150
    assert sample.counts.min() >= 1
    assert np.all(sample.values > 0)
    assert sample.generator_spec["m"] == 150
    assert sample.generator_spec["block"] == BLOCK


def test_sample_does_not_depend_on_workers(exponential, log95):
    m = 2 * BLOCK + 17
    serial = simulate_stopped(log95, exponential, m, seed=4)
    threaded = simulate_stopped(log95, exponential, m, seed=4, workers=3)
    np.testing.assert_array_equal(serial.values, threaded.values)
    np.testing.assert_array_equal(serial.counts, threaded.counts)


def test_seed_changes_the_sample(exponential, log95):
    first = simulate_stopped(log95, exponential, 50, seed=1)
    second = simulate_stopped(log95, exponential, 50, seed=2)
    assert not np.array_equal(first.values, second.values)


def test_degenerate_stopping_draws_the_base(exponential):
    sample = simulate_stopped(Pgf("degenerate"), exponential, 4000, seed=3)
    assert np.all(sample.counts == 1)
    assert ks_distance(sample.values, exponential.cdf) < ks_critical_value(sample.m)
    minima = simulate_stopped(Pgf("degenerate"), exponential, 4000, mode="min", seed=3)
    np.testing.assert_array_equal(sample.values, minima.values)


def test_extremes_follow_the_model(exponential, log95):
    maxima = simulate_stopped(log95, exponential, 5000, seed=1)
    assert ks_distance(maxima.values, stopped_max(log95, exponential).cdf) < ks_critical_value(5000)
    minima = simulate_stopped(log95, exponential, 5000, mode="min", seed=1)
    assert ks_distance(minima.values, stopped_min(log95, exponential).cdf) < ks_critical_value(5000)


def test_wrong_model_is_far(exponential, log95):
    sample = simulate_stopped(log95, exponential, 2000, seed=1)
    assert ks_distance(sample.values, exponential.cdf) > 0.2


def test_counts_follow_the_stopping_pmf(exponential):
    pgf = make_pgf("zt_geometric", p=0.4)
    sample = simulate_stopped(pgf, exponential, 5000, seed=12)
    table = count_consistency(sample, pgf, n_max=6)
    assert list(table.columns) == ["n", "empirical", "expected", "stderr", "z"]
    assert list(table["n"]) == [1, 2, 3, 4, 5, 6]
    assert table["expected"].iloc[0] == pytest.approx(0.4)
    assert np.all(np.abs(table["z"]) < 5)


def test_count_consistency_needs_counts(exponential, log95):
    sample = simulate_stopped(log95, exponential, 10, keep_counts=False)
    assert sample.counts is None
    with pytest.raises(ParameterError):
        count_consistency(sample, log95)


def test_degenerate_counts_are_exact(exponential):
    degenerate = Pgf("degenerate")
    table = count_consistency(simulate_stopped(degenerate, exponential, 20), degenerate, n_max=3)
    assert list(table["z"]) == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("m, mode", [(0, "max"), (2.5, "max"), (10, "median")])
def test_invalid_requests(m, mode, exponential, log95):
    with pytest.raises(ParameterError):
        simulate_stopped(log95, exponential, m, mode=mode)


def test_regenerate(exponential, log95):
    sample = simulate_stopped(log95, exponential, 300, mode="min", seed=21)
    again = regenerate(sample)
    np.testing.assert_array_equal(again.values, sample.values)
    assert again.mode == "min"
    with pytest.raises(ParameterError):
        regenerate(sample.generator_spec)


def test_write_and_read_sample(tmp_path, exponential, log95):
    sample = simulate_stopped(log95, exponential, 40, seed=5)
    path = write_sample(sample, tmp_path / "out" / "sample.csv")
    assert sidecar_path(path).exists()
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["seed"] == 5
    loaded = read_sample(path)
    np.testing.assert_array_equal(loaded.values, sample.values)
    np.testing.assert_array_equal(loaded.counts, sample.counts)
    np.testing.assert_array_equal(regenerate(loaded.generator_spec, seed=loaded.seed).values, sample.values)


def test_read_data_plain_values(tmp_path):
    path = tmp_path / "data.txt"
    path.write_text("1.5\n2.5\n4\n")
    np.testing.assert_array_equal(read_data(path), [1.5, 2.5, 4.0])


def test_read_data_keeps_full_precision(tmp_path, exponential, log95):
    sample = simulate_stopped(log95, exponential, 40, seed=5)
    path = write_sample(sample, tmp_path / "sample.csv")
    np.testing.assert_array_equal(read_data(path), sample.values)
    plain = tmp_path / "plain.txt"
    np.savetxt(plain, sample.values, fmt="%.17g")
    np.testing.assert_array_equal(read_data(plain), sample.values)


def test_read_data_with_header(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("y,n\n3.0,2\n7.5,1\n")
    np.testing.assert_array_equal(read_data(path), [3.0, 7.5])


@pytest.mark.parametrize("content", ["", "value\n1.0\n", "1.0\nabc\n"])
def test_read_data_errors(content, tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(content)
    with pytest.raises(ConfigError):
        read_data(path)


def test_ks_distance_of_a_single_point(exponential):
    assert ks_distance([exponential.quantile(0.5)], exponential.cdf) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        ks_distance([], exponential.cdf)


def test_ks_critical_value():
    assert ks_critical_value(100) == pytest.approx(0.163, abs=1e-3)


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["max", "min"])
def test_ks_over_seeds(mode, exponential, log95):
    stopping = log95 if mode == "max" else make_pgf("zt_geometric", p=0.3)
    model = (stopped_max if mode == "max" else stopped_min)(stopping, exponential)
    critical = ks_critical_value(20000, level=0.01)
    passed = sum(
        ks_distance(
            simulate_stopped(stopping, exponential, 20000, mode=mode, seed=seed, keep_counts=False).values,
            model.cdf,
        )
        < critical
        for seed in range(100)
    )
    assert passed >= 98
