from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from gmixprop.dynamics import (
    BoucWenParams,
    DEFAULT_STORY_MASSES,
    GroundMotionRecord,
    bouc_wen_frame_model,
    duffing_model,
    integrate_flow,
    integrate_path,
    linear_map_model,
    nonlinear_map_model,
    synthetic_record,
)
from gmixprop.errors import IntegrationBlowupError
from gmixprop.grids import GridSpec


# -- linear map -------------------------------------------------------------------


def test_linear_map_values():
    model, oracle = linear_map_model()
    np.testing.assert_array_equal(model(np.array([[0.0, 0.0]]))[0], [0.0, 0.0])
    np.testing.assert_array_equal(model(np.array([[1.0, 1.0]]))[0], [8.0, 3.0])
    assert oracle.density(np.zeros(2))[0] == pytest.approx(1.0 / (2 * math.pi), rel=1e-12)


def test_linear_oracle_normalizes():
    _, oracle = linear_map_model()
    grid = GridSpec.from_step((-25.0, -25.0), (25.0, 25.0), 0.1)
    assert oracle.grid(grid).integral() == pytest.approx(1.0, abs=0.01)


# -- nonlinear map ----------------------------------------------------------------


def test_nonlinear_map_values():
    model, oracle = nonlinear_map_model()
    np.testing.assert_allclose(model(np.array([[3.0, 4.0]]))[0], [5.0, 3.0], atol=1e-14)
    assert oracle.density(np.array([1.0, 0.0]))[0] == pytest.approx(
        math.exp(-0.5) / math.pi, rel=1e-12
    )
    assert oracle.density(np.array([1.0, 2.0]))[0] == 0.0
    # boundary has measure zero and a singular Jacobian: defined as 0
    assert oracle.density(np.array([1.0, 1.0]))[0] == 0.0
    assert oracle.density(np.array([-1.0, 0.0]))[0] == 0.0


def test_nonlinear_oracle_normalizes_under_quadrature():
    # the 1/sqrt Jacobian ridge needs singularity-aware quadrature; plain
    # Riemann sums converge like sqrt(mesh) here
    _, oracle = nonlinear_map_model()

    def column(x1):
        val, _ = quad(
            lambda x2: oracle.density(np.array([[x1, x2]]))[0],
            -x1,
            x1,
            points=[-x1 * (1 - 1e-9), x1 * (1 - 1e-9)],
            limit=200,
        )
        return val

    total, _ = quad(column, 1e-12, 8.0, limit=200)
    assert total == pytest.approx(1.0, abs=0.01)


# -- Duffing oscillator -------------------------------------------------------------


def test_duffing_drift_value():
    model, _ = duffing_model()
    out = model.drift(0.0, np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(out[0], [0.0, 0.9], atol=1e-14)


def test_duffing_drift_is_odd():
    model, _ = duffing_model()
    rng = np.random.default_rng(1)
    x = rng.standard_normal((64, 2))
    np.testing.assert_allclose(model.drift(0.0, -x), -model.drift(0.0, x), atol=1e-14)


def test_duffing_oracle_symmetry_and_peaks():
    _, oracle = duffing_model()
    pts = np.array([[1.3, 0.4]])
    assert oracle.density(pts * [-1, 1])[0] == oracle.density(pts)[0]
    assert oracle.density(pts * [1, -1])[0] == oracle.density(pts)[0]
    # the x1 exponent x1^2/2 - x1^4/40 is stationary at +-sqrt(10)
    m = math.sqrt(10.0)
    h = 1e-6
    grad = (
        oracle.density(np.array([m + h, 0.0])) - oracle.density(np.array([m - h, 0.0]))
    )[0] / (2 * h)
    assert abs(grad) < 1e-6


def test_duffing_oracle_normalizes():
    # validates the closed-form normalization constant by quadrature
    _, oracle = duffing_model()
    grid = GridSpec.from_step((-8.0, -6.0), (8.0, 6.0), 0.05)
    assert oracle.grid(grid).integral() == pytest.approx(1.0, abs=0.01)


# -- hysteretic law and frame --------------------------------------------------------


def test_bouc_wen_scalar_rate_and_fixed_point():
    # dz/dt = 1.2 xdot - 1.4 |xdot| z - 0.2 xdot |z| with constant xdot = 1:
    # initial rate 1.2, stationary level 1.2 / (1.4 + 0.2) = 0.75
    p = BoucWenParams()

    def rate(t, z):
        return p.amplitude * 1.0 - p.beta * abs(1.0) * z - p.gamma * 1.0 * np.abs(z)

    z0 = np.array([[0.0]])
    assert rate(0.0, z0)[0, 0] == pytest.approx(1.2, abs=1e-14)
    z_end = integrate_flow(rate, z0, 0.0, 20.0, 0.005)
    assert z_end[0, 0] == pytest.approx(0.75, abs=1e-6)


def test_bouc_wen_dissipativity_bound():
    # |z| stays below amplitude / (beta - gamma) = 1 for any bounded xdot
    p = BoucWenParams()
    rng = np.random.default_rng(5)
    freqs = rng.uniform(0.3, 3.0, 8)
    phases = rng.uniform(0, 2 * math.pi, 8)
    amps = rng.uniform(0.2, 2.0, 8)

    def xdot(t):
        return float(np.sum(amps * np.sin(2 * math.pi * freqs * t + phases)))

    def rate(t, z):
        v = xdot(t)
        return p.amplitude * v - p.beta * abs(v) * z - p.gamma * v * np.abs(z)

    zs = integrate_path(rate, np.array([[0.0]]), np.arange(0.0, 30.0, 0.5), 0.005)
    bound = p.amplitude / (p.beta - p.gamma)
    assert max(abs(z[0, 0]) for z in zs) <= bound + 1e-9


def test_frame_zero_record_stays_at_rest():
    record = GroundMotionRecord(0.02, np.zeros(501))
    frame = bouc_wen_frame_model(record)
    state = frame.initial_state(np.array([[3.0e10, 2.0]]))
    out = integrate_flow(frame.field_fn, state, 0.0, 2.0, 0.005)
    np.testing.assert_array_equal(out[0, 2:], np.zeros(30))
    # random parameters ride along unchanged
    assert out[0, 0] == 3.0e10 and out[0, 1] == 2.0


def test_frame_elastic_restoring_slope():
    # with z = 0 and v = 0 the field reduces to -alpha K x / m
    record = GroundMotionRecord(0.02, np.zeros(11))
    frame = bouc_wen_frame_model(record)
    e_mod = 3.0e10
    state = np.zeros((1, 32))
    state[0, 0] = e_mod
    state[0, 1] = 2.0
    state[0, 2] = 1.0  # unit displacement of the first floor
    out = frame.field_fn(0.0, state)
    inertia = 0.5**4 / 12.0
    k1 = 3 * 12 * e_mod * inertia / 4.0**3
    k2 = 3 * 12 * e_mod * inertia / 3.0**3
    alpha = 0.01
    m = DEFAULT_STORY_MASSES
    assert out[0, 12] == pytest.approx(-alpha * (k1 + k2) / m[0], rel=1e-12)
    assert out[0, 13] == pytest.approx(alpha * k2 / m[1], rel=1e-12)
    # hysteretic rate follows the drift velocities, which are zero here
    np.testing.assert_array_equal(out[0, 22:], np.zeros(10))


def test_frame_observable_is_top_displacement():
    record = GroundMotionRecord(0.02, np.zeros(11))
    frame = bouc_wen_frame_model(record)
    state = np.zeros((1, 32))
    state[0, 11] = 0.123
    assert frame.output(state)[0, 0] == 0.123


# -- integrator -----------------------------------------------------------------------


def test_integrate_zero_field():
    out = integrate_flow(lambda t, x: np.zeros_like(x), np.array([[1.0, 2.0]]), 0.0, 1.0, 0.1)
    np.testing.assert_array_equal(out, [[1.0, 2.0]])


def test_integrate_exponential_flow():
    out = integrate_flow(lambda t, x: x, np.array([[1.0]]), 0.0, 1.0, 1e-3)
    assert out[0, 0] == pytest.approx(math.e, abs=1e-9)


def test_integrate_matches_matrix_exponential():
    rng = np.random.default_rng(3)
    j = rng.standard_normal((2, 2))
    x0 = rng.standard_normal((4, 2))
    out = integrate_flow(lambda t, x: x @ j.T, x0, 0.0, 0.5, 1e-3)
    exact = x0 @ expm(0.5 * j).T
    np.testing.assert_allclose(out, exact, atol=1e-8)


def test_rk4_fourth_order_convergence():
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        out = integrate_flow(lambda t, x: x, np.array([[1.0]]), 0.0, 1.0, h)
        errs.append(abs(out[0, 0] - math.e))
    for e_coarse, e_fine in zip(errs, errs[1:]):
        ratio = e_coarse / e_fine
        assert 16.0 / 4.0 <= ratio <= 16.0 * 4.0


def test_integrate_step_must_divide_interval():
    with pytest.raises(ValueError):
        integrate_flow(lambda t, x: x, np.array([[1.0]]), 0.0, 1.0, 0.3)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_integration_blowup_reports_time():
    with pytest.raises(IntegrationBlowupError) as err:
        integrate_flow(lambda t, x: x**2, np.array([[5.0]]), 0.0, 2.0, 0.01)
    assert err.value.time is not None and 0.0 < err.value.time <= 2.0


# -- ground motion records --------------------------------------------------------------


def test_synthetic_record_properties():
    rec = synthetic_record(duration=20.0, dt=0.02, seed=2011, pga=2.0)
    assert rec.pga == pytest.approx(2.0)
    assert rec.dt == 0.02
    assert rec.duration == pytest.approx(20.0)
    again = synthetic_record(duration=20.0, dt=0.02, seed=2011, pga=2.0)
    np.testing.assert_array_equal(rec.accelerations, again.accelerations)


def test_record_scaling_and_window():
    rec = synthetic_record(seed=3)
    scaled = rec.scaled(3.0)
    assert scaled.pga == pytest.approx(3.0)
    w0, w1 = rec.strong_motion_window()
    assert 0.0 <= w0 < w1 <= rec.duration


def test_record_csv_roundtrip(tmp_path):
    rec = synthetic_record(seed=4)
    path = tmp_path / "motion.csv"
    rec.to_csv(path)
    back = GroundMotionRecord.from_csv(path)
    assert back.dt == pytest.approx(rec.dt)
    np.testing.assert_allclose(back.accelerations, rec.accelerations, atol=1e-12)


def test_record_rejects_nonuniform_times(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,accel\n0.0,1.0\n0.1,2.0\n0.3,1.0\n")
    with pytest.raises(ValueError):
        GroundMotionRecord.from_csv(path)


def test_record_rejects_empty():
    with pytest.raises(ValueError):
        GroundMotionRecord(0.02, np.array([]))
