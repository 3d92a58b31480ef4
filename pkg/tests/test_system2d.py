import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etf2d.errors import ConfigurationError
from etf2d.system2d import (GridIndex, LinearMap, SineResidual, constant, sector_gap,
                            simulate_trajectory, step_state, validate_delays)

from conftest import make_model


def scalar_model(A=0.5, **kw):
    return make_model(n=1, m=1, delays=((0, 0),), A1=[[A]], A2=[[A]], **kw)


def test_step_state_scalar_hand_value():
    m = scalar_model()
    out = step_state(m, np.array([2.0]), np.array([4.0]), np.zeros(1), np.zeros(1), (1, 1))
    assert out == pytest.approx([3.0])


def test_step_state_zero_inputs():
    m = make_model(n=3)
    z = np.zeros(3)
    assert np.all(step_state(m, z, z, z, z, (2, 2)) == 0)


def test_step_state_identity_dynamics():
    m = make_model(n=3, A1=np.eye(3), A2=np.eye(3))
    e = np.eye(3)
    out = step_state(m, e[0], e[1], e[0], np.zeros(3), (1, 1))
    assert np.array_equal(out, [2.0, 1.0, 0.0])


def test_step_state_dimension_mismatch():
    m = make_model(n=2)
    with pytest.raises(ConfigurationError):
        step_state(m, np.zeros(3), np.zeros(2), np.zeros(2), np.zeros(2), (1, 1))


@pytest.mark.parametrize("delays", [
    [(1, 1)], [(0, 0), (0, 1)], [(0, 0), (2, 1)], [(0, 0), (1, 2), (2, 3)][::-1], [],
    [(0, 0), (1, 3), (2, 3)],
])
def test_bad_delays_rejected(delays):
    with pytest.raises(ConfigurationError):
        validate_delays(delays)


def test_delays_sorted_and_anchored():
    d = validate_delays([[0, 0], [1, 1], [2, 3]])
    assert d[0] == (0, 0)
    assert list(d) == sorted(d)


def test_grid_too_small():
    m = make_model(delays=((0, 0), (2, 3)))
    with pytest.raises(ConfigurationError, match="grid"):
        simulate_trajectory(m, 3, 0)


def test_zero_dynamics_give_zero_fields():
    m = make_model(A1=np.zeros((2, 2)), A2=np.zeros((2, 2)), Q=0.0, R=0.0,
                   mean=np.zeros(2), cov=0.0)
    tr = simulate_trajectory(m, 5, 1, trials=2, check=False)
    assert np.all(tr.states == 0)
    for s, y in enumerate(tr.measurements):
        act = tr.active(s)
        assert np.all(y[:, act] == 0)
        assert np.all(np.isnan(y[:, ~act]))


def test_channel_zero_is_delay_free():
    m = make_model()
    tr = simulate_trajectory(m, 6, 3, trials=4)
    C = m.C(0, (0, 0))
    lhs = tr.measurements[0] - tr.measurement_noise[0]
    rhs = np.einsum("mn,tijn->tijm", C, tr.states)
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_delayed_channel_reads_shifted_state():
    m = make_model(delays=((0, 0), (1, 2)))
    tr = simulate_trajectory(m, 6, 3, trials=2)
    C = m.C(1, (0, 0))
    lhs = (tr.measurements[1] - tr.measurement_noise[1])[:, 1:, 2:]
    rhs = np.einsum("mn,tijn->tijm", C, tr.states[:, :-1, :-2])
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_same_seed_bit_identical():
    m = make_model()
    a = simulate_trajectory(m, 8, 42, trials=3)
    b = simulate_trajectory(m, 8, 42, trials=3)
    assert a.states.tobytes() == b.states.tobytes()
    for ya, yb in zip(a.measurements, b.measurements):
        assert ya.tobytes() == yb.tobytes()


def test_boundary_mean_converges():
    mean = np.array([0.7, -0.2])
    m = make_model(mean=mean, cov=0.3)
    T = 10_000
    tr = simulate_trajectory(m, 2, 5, trials=T)
    sample = tr.states[:, 2, 0]
    se = np.sqrt(0.3 / T)
    assert np.all(np.abs(sample.mean(axis=0) - mean) < 4 * se)


def test_process_noise_covariance_and_whiteness():
    Q = np.array([[0.5, 0.1], [0.1, 0.3]])
    m = make_model()
    m.Q = constant(Q)
    T = 100_000
    tr = simulate_trajectory(m, 2, 9, trials=T)
    w = tr.process_noise
    emp = np.einsum("ti,tj->ij", w[:, 1, 1], w[:, 1, 1]) / T
    assert np.linalg.norm(emp - Q) / np.linalg.norm(Q) < 0.05
    cross = np.einsum("ti,tj->ij", w[:, 1, 1], w[:, 2, 1]) / T
    assert np.linalg.norm(cross) / np.linalg.norm(Q) < 0.05


def test_non_pd_noise_rejected():
    m = make_model(Q=0.0)
    with pytest.raises(ConfigurationError, match="model.Q"):
        m.validate(4)


def test_boundary_cov_must_be_psd():
    m = make_model(cov=-0.1)
    with pytest.raises(ConfigurationError, match="boundary"):
        m.validate(4)


def test_sector_condition_on_sine_residual():
    rng = np.random.default_rng(0)
    A = constant(np.array([[0.4, 0.1], [0.0, 0.3]]))
    a = constant(0.2)
    f = SineResidual(A, a)
    assert np.all(f((0, 0), np.zeros(2)) == 0)
    for _ in range(1000):
        x1, x2 = rng.normal(size=2) * 5, rng.normal(size=2) * 5
        assert sector_gap(f, A((0, 0)), a((0, 0)), (0, 0), x1, x2) <= 1e-12


def test_sector_violation_detected():
    A = constant(np.eye(2) * 0.3)
    m = make_model(A1=np.eye(2) * 0.3, a1=constant(0.01),
                   f1=SineResidual(A, constant(0.5)))
    with pytest.raises(ConfigurationError, match="sector"):
        m.validate(4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_grid_index_within(i, j, P):
    assert GridIndex(i, j).within(P) == (i <= P and j <= P)


def test_linear_map_batched():
    A = constant(np.array([[1.0, 2.0], [3.0, 4.0]]))
    x = np.arange(6.0).reshape(3, 2)
    assert np.allclose(LinearMap(A)((0, 0), x), x @ A((0, 0)).T)
