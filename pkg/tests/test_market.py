import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgeledger.market import (GbmSpec, InvalidInputError, NumeraireRate, SeedSpec, TimeGrid, expected_increment,
                                from_currency_units, simulate_gbm_path, simulate_gbm_paths, to_currency_units)


def test_grid_pins_last_time_to_end():
    g = TimeGrid(0.0, 0.7, 3)
    assert g.times[-1] == 0.7
    assert g.times.size == 4
    assert np.isclose(g.dt, 0.7 / 3)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0), (1.0, 1.0, 4), (0.0, float("inf"), 4), (0.0, 1.0, 2.5)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(InvalidInputError):
        TimeGrid(*args)


@pytest.mark.parametrize("kw", [{"f0": 0.0}, {"f0": 100.0, "sigma0": -0.1}, {"f0": 1.0, "mu0": float("nan")}])
def test_gbm_spec_rejects_bad_input(kw):
    with pytest.raises(InvalidInputError):
        GbmSpec(**kw)


def test_path_is_a_function_of_seed_and_index_only():
    spec, grid = GbmSpec(100.0, 0.05, 0.3), TimeGrid(0.0, 1.0, 50)
    block = simulate_gbm_paths(spec, grid, 99, [4, 1, 7])
    for row, i in enumerate([4, 1, 7]):
        single = simulate_gbm_path(spec, grid, SeedSpec(99, i)).values
        assert np.array_equal(block[row], single)
    assert not np.array_equal(block[0], block[1])


def test_zero_vol_path_is_deterministic():
    grid = TimeGrid(0.0, 2.0, 8)
    flat = simulate_gbm_paths(GbmSpec(50.0, 0.0, 0.0), grid, 1, [0])
    assert np.all(flat == 50.0)
    grow = simulate_gbm_paths(GbmSpec(50.0, 0.1, 0.0), grid, 1, [0])[0]
    np.testing.assert_allclose(grow, 50.0 * np.exp(0.1 * grid.times), rtol=1e-13)


def test_terminal_mean_matches_drift():
    n = 40_000
    grid = TimeGrid(0.0, 1.0, 4)
    for mu in (0.0, 0.1):
        FT = simulate_gbm_paths(GbmSpec(100.0, mu, 0.3), grid, 3, np.arange(n))[:, -1]
        se = FT.std(ddof=1) / np.sqrt(n)
        assert abs(FT.mean() - 100.0 * np.exp(mu)) < 4 * se


def test_log_increment_variance():
    n, sigma = 20_000, 0.25
    grid = TimeGrid(0.0, 1.0, 16)
    logs = np.diff(np.log(simulate_gbm_paths(GbmSpec(10.0, 0.0, sigma), grid, 8, np.arange(n))), axis=1)
    v = logs.var(ddof=1)
    # variance of a sample variance of normals is 2 s^4 / (m - 1)
    se = np.sqrt(2.0 / (logs.size - 1)) * sigma**2 * grid.dt
    assert abs(v - sigma**2 * grid.dt) < 4 * se


def test_expected_increment():
    assert expected_increment(GbmSpec(100.0, 0.1, 0.2), 120.0, 0.5) == pytest.approx(6.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(0.0, 30.0), st.floats(-0.2, 0.2))
def test_numeraire_round_trip(value, t, r):
    rate = NumeraireRate(r)
    back = from_currency_units(to_currency_units(value, t, rate), t, rate)
    assert back == pytest.approx(value, rel=1e-12, abs=1e-9)


def test_numeraire_growth():
    assert to_currency_units(1.0, 2.0, NumeraireRate(0.05)) == pytest.approx(np.exp(0.1))
