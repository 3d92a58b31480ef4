import numpy as np
import pytest

from etf2d.errors import ConfigurationError
from etf2d.etm import run_etm
from etf2d.filtering import bound_predict, run_bounds
from etf2d.harness import check_ordered, cmd_monotonicity, monotonicity_run, s0_box
from etf2d.pipeline import seeds
from etf2d.scenario import load_raw, load_scenario
from etf2d.system2d import simulate_trajectory

from scalar_oracle import FIXTURE, scalar_bounds


def test_hand_value_of_first_prediction_bound():
    sc = load_scenario(FIXTURE)
    Xi_b = sc.model.boundary_cov((0, 1))
    # (1+1)(1+1) 0.25 0.2 + (1+1)(1+1) 0.09 0.2 + 0.1 + 0.1
    assert bound_predict(sc.filter, sc.model, Xi_b, Xi_b, (1, 1))[0, 0] == pytest.approx(0.472)


def test_scalar_oracle_matches_matrix_recursion():
    sc = load_scenario(FIXTURE)
    plant, _, _ = seeds(sc.seed)
    traj = simulate_trajectory(sc.model, sc.grid, plant, trials=sc.trials)
    delta = run_etm(sc.etm, traj).delta[0].mean(axis=0)
    b = run_bounds(sc.filter, sc.model, sc.codec, [delta], sc.grid)
    raw, _ = load_raw(FIXTURE)
    ref = scalar_bounds(raw, delta[:, :, 0].tolist())
    for l in range(sc.grid + 1):
        for k in range(sc.grid + 1):
            assert b.Xi_u[l, k, 0, 0] == pytest.approx(ref[l][k], rel=1e-12)


def test_scalar_oracle_is_monotone_in_delta():
    raw, _ = load_raw(FIXTURE)
    P = raw["grid"]
    lo = [[0.01 * (l + k) for k in range(P + 1)] for l in range(P + 1)]
    hi = [[v + 0.05 for v in row] for row in lo]
    a, b = scalar_bounds(raw, lo), scalar_bounds(raw, hi)
    for l in range(1, P + 1):
        for k in range(1, P + 1):
            assert b[l][k] > a[l][k]


@pytest.mark.parametrize("config", ["linear_small", "nonlinear_small", str(FIXTURE)])
def test_monotonicity_command_passes(config, tmp_path):
    rep = cmd_monotonicity(config, trials=300, out=tmp_path)
    assert rep.passed, rep.lines()
    assert (tmp_path / "monotonicity.csv").exists()


def test_identical_sets_give_equal_bounds():
    sc = load_scenario("linear_small", trials=50)
    b1, b2, d1, d2, _ = monotonicity_run(sc, sc.etm, sc.etm)
    assert np.array_equal(b1.Xi_u, b2.Xi_u)
    assert all(np.array_equal(x, y) for x, y in zip(d1, d2))


def test_misordered_sets_rejected():
    sc = load_scenario("linear_small")
    low = sc.with_etm(sigma=[[0.95], [0.95]]).etm
    with pytest.raises(ConfigurationError, match="sigma"):
        check_ordered(low, sc.etm)
    with pytest.raises(ConfigurationError, match="rho"):
        check_ordered(sc.with_etm(rho=[[2.1], [2.5]]).etm, sc.etm)
    with pytest.raises(ConfigurationError, match="xi0"):
        check_ordered(sc.with_etm(xi0=[0.1, 0.5]).etm, sc.etm)


def test_configured_pair_used(tmp_path):
    rep = cmd_monotonicity(
        "linear_small", trials=200, out=tmp_path,
        overrides=["checks.monotonicity={low: {rho: [[4.0], [4.0]]}, high: {}}"])
    assert rep.passed, rep.lines()


def test_s0_box():
    assert s0_box([(0, 0), (1, 2)], 10, 10) == (9, 8)
    assert s0_box([(0, 0)], 4, 4) == (4, 4)
