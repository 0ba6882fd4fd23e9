from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from gmixprop.dynamics import ODEFlow, SDEModel, StaticMap, duffing_model
from gmixprop.evolution import (
    EvolutionTrace,
    assemble_density,
    evolve_conservative,
    evolve_markov,
    evolve_static,
    second_order_statistics,
)
from gmixprop.grids import GridSpec
from gmixprop.mixture import MixtureModel


def _mixture(weights, means, covs):
    return MixtureModel(weights, means, np.asarray(covs, dtype=float))


def _single(mean=(1.0, 2.0), cov=((2.0, 0.3), (0.3, 1.0))):
    return _mixture([1.0], [list(mean)], [np.asarray(cov)])


J = np.array([[0.0, 1.0], [-1.0, -0.3]])


def _linear_flow(step=0.001):
    return ODEFlow(lambda t, x: x @ J.T, state_dim=2, step=step)


def _linear_sde(noise=0.0, step=0.005):
    return SDEModel(
        lambda t, x: x @ J.T, 2, np.eye(2), noise * np.eye(2), step=step
    )


# -- static maps -----------------------------------------------------------------


def test_static_identity_preserves_mixture():
    m = _mixture([0.4, 0.6], [[1.0, 0.0], [-1.0, 0.5]], [np.eye(2), 0.5 * np.eye(2)])
    out = evolve_static(StaticMap(lambda p: p, 2, 2), m)
    np.testing.assert_allclose(out.means, m.means, atol=1e-12)
    np.testing.assert_allclose(out.covariances, m.covariances, atol=1e-12)
    np.testing.assert_array_equal(out.weights, m.weights)


def test_static_linear_map_component():
    a = np.array([[3.0, 5.0], [1.0, 2.0]])
    out = evolve_static(StaticMap(lambda p: p @ a.T, 2, 2), _mixture([1.0], [[0.0, 0.0]], [np.eye(2)]))
    np.testing.assert_allclose(out.covariances[0], [[34.0, 13.0], [13.0, 5.0]], atol=1e-12)


def test_static_dimension_check():
    with pytest.raises(ValueError):
        evolve_static(StaticMap(lambda p: p, 3, 3), _single())


# -- conservative evolution --------------------------------------------------------


def test_conservative_zero_field_keeps_mixture():
    flow = ODEFlow(lambda t, x: np.zeros_like(x), state_dim=2, step=0.01)
    m = _mixture([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], [np.eye(2), 2 * np.eye(2)])
    trace = evolve_conservative(flow, m, [0.0, 0.5, 1.0])
    for snap in trace.snapshots:
        np.testing.assert_allclose(snap.means, m.means, atol=1e-12)
        np.testing.assert_allclose(snap.covariances, m.covariances, atol=1e-12)


def test_conservative_linear_flow_matches_matrix_exponential():
    m = _single()
    trace = evolve_conservative(_linear_flow(), m, [0.0, 0.5, 1.0])
    for t, snap in zip(trace.times, trace.snapshots):
        e = expm(J * t)
        np.testing.assert_allclose(snap.means[0], e @ m.means[0], atol=1e-8)
        np.testing.assert_allclose(
            snap.covariances[0], e @ m.covariances[0] @ e.T, atol=1e-8
        )


def test_conservative_run_count_matches_component_count():
    # 2q trajectories per component: K=350 components in q=2 gives 1400
    rows_seen = []

    def counting_field(t, x):
        rows_seen.append(x.shape[0])
        return np.zeros_like(x)

    flow = ODEFlow(counting_field, state_dim=2, step=0.05)
    rng = np.random.default_rng(0)
    means = rng.standard_normal((350, 2))
    m = _mixture(np.full(350, 1 / 350), means, np.tile(0.01 * np.eye(2), (350, 1, 1)))
    evolve_conservative(flow, m, [0.0, 0.05])
    assert set(rows_seen) == {1400}


def test_conservative_threads_bit_identical():
    m = _mixture(
        np.full(8, 1 / 8),
        np.random.default_rng(1).standard_normal((8, 2)),
        np.tile(0.3 * np.eye(2), (8, 1, 1)),
    )
    t1 = evolve_conservative(_linear_flow(0.01), m, [0.0, 0.3], threads=1)
    t4 = evolve_conservative(_linear_flow(0.01), m, [0.0, 0.3], threads=4)
    for a, b in zip(t1.snapshots, t4.snapshots):
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.covariances, b.covariances)


# -- markov evolution ---------------------------------------------------------------


def test_markov_pure_brownian_one_step():
    sde = SDEModel(lambda t, x: np.zeros_like(x), 2, np.eye(2), 0.25 * np.eye(2), step=0.005)
    m = _mixture([1.0], [[0.0, 0.0]], [np.eye(2)])
    n_b = 400
    trace = evolve_markov(sde, m, [0.0, 0.015], noise_samples=n_b, seed=5)
    snap = trace.snapshots[-1]
    np.testing.assert_array_equal(snap.means[0], [0.0, 0.0])
    expected = 1.0 + 0.25 * 0.015
    tol = 3.0 / np.sqrt(n_b) * 0.25 * 0.015
    assert abs(snap.covariances[0][0, 0] - expected) < tol
    assert abs(snap.covariances[0][1, 1] - expected) < tol


def test_markov_noise_free_equals_conservative():
    m = _single()
    times = np.linspace(0.0, 0.45, 31)
    markov = evolve_markov(_linear_sde(0.0), m, times, noise_samples=2, seed=0)
    conservative = evolve_conservative(_linear_flow(0.005), m, times)
    for a, b in zip(markov.snapshots, conservative.snapshots):
        np.testing.assert_allclose(a.means, b.means, atol=1e-12)
        np.testing.assert_allclose(a.covariances, b.covariances, atol=1e-12)


def test_markov_mean_invariant_to_noise_configuration():
    # single step of a nonlinear drift: the mean path carries no noise term
    model, _ = duffing_model()
    m = _mixture([0.5, 0.5], [[0.3, 0.0], [-0.5, 0.2]], [0.1 * np.eye(2)] * 2)
    reference = None
    for n_b, seed in ((2, 0), (20, 1), (100, 123)):
        trace = evolve_markov(model, m, [0.0, 0.015], noise_samples=n_b, seed=seed)
        means = trace.snapshots[-1].means
        if reference is None:
            reference = means
        else:
            np.testing.assert_array_equal(means, reference)


def test_markov_mean_invariance_multistep_linear():
    m = _single()
    times = np.linspace(0.0, 0.3, 21)
    runs = [
        evolve_markov(_linear_sde(0.4), m, times, noise_samples=n_b, seed=seed)
        for n_b, seed in ((4, 0), (64, 9))
    ]
    for a, b in zip(runs[0].snapshots, runs[1].snapshots):
        np.testing.assert_allclose(a.means, b.means, atol=1e-12)


def test_markov_matches_lyapunov_solution():
    # linear SDE: mean follows the matrix exponential; covariance follows
    # the Lyapunov ODE, up to integrator bias and noise-sampling error
    a = np.array([[0.0], [1.0]])
    d = np.array([[0.5]])
    sde = SDEModel(lambda t, x: x @ J.T, 2, a, d, step=0.005)
    m = _mixture([1.0], [[0.3, -0.2]], [0.2 * np.eye(2)])
    t_end = 2.0
    times = np.arange(0.0, t_end + 1e-12, 0.01)
    trace = evolve_markov(sde, m, times, noise_samples=40000, seed=3,
                          snapshot_every=len(times) - 1)
    final = trace.snapshots[-1]
    np.testing.assert_allclose(final.means[0], expm(J * t_end) @ m.means[0], atol=1e-9)
    s = 0.2 * np.eye(2)
    q = a @ d @ a.T
    h = 1e-4
    for _ in range(int(t_end / h)):
        k1 = J @ s + s @ J.T + q
        s2 = s + 0.5 * h * k1
        k2 = J @ s2 + s2 @ J.T + q
        s3 = s + 0.5 * h * k2
        k3 = J @ s3 + s3 @ J.T + q
        s4 = s + h * k3
        k4 = J @ s4 + s4 @ J.T + q
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    rel = np.abs(final.covariances[0] - s).max() / np.abs(s).max()
    assert rel < 0.02


def test_markov_rejects_zero_noise_samples():
    with pytest.raises(ValueError):
        evolve_markov(_linear_sde(0.1), _single(), [0.0, 0.01], noise_samples=0, seed=0)


def test_markov_odd_noise_samples_rounded_up(caplog):
    with caplog.at_level("INFO"):
        evolve_markov(_linear_sde(0.1), _single(), [0.0, 0.01], noise_samples=3, seed=0)
    assert "antithetic" in caplog.text


def test_markov_requires_uniform_grid():
    with pytest.raises(ValueError):
        evolve_markov(_linear_sde(0.1), _single(), [0.0, 0.01, 0.05], noise_samples=2, seed=0)


def test_weight_conservation_everywhere():
    w = np.array([0.2, 0.3, 0.5])
    means = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    covs = np.tile(0.2 * np.eye(2), (3, 1, 1))
    m = _mixture(w, means, covs)
    out = evolve_static(StaticMap(lambda p: p @ J.T, 2, 2), m)
    np.testing.assert_array_equal(out.weights, w)
    trace = evolve_markov(_linear_sde(0.3), m, np.linspace(0, 0.1, 6), noise_samples=4, seed=2)
    for snap in trace.snapshots:
        np.testing.assert_array_equal(snap.weights, w)


def test_markov_deterministic_given_seed():
    m = _single()
    times = np.linspace(0.0, 0.2, 11)
    a = evolve_markov(_linear_sde(0.5), m, times, noise_samples=8, seed=7)
    b = evolve_markov(_linear_sde(0.5), m, times, noise_samples=8, seed=7)
    for sa, sb in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(sa.means, sb.means)
        np.testing.assert_array_equal(sa.covariances, sb.covariances)


# -- traces and summaries -------------------------------------------------------------


def test_trace_validation():
    m = _single()
    with pytest.raises(ValueError):
        EvolutionTrace(np.array([0.0, 0.0]), (m, m))
    with pytest.raises(ValueError):
        EvolutionTrace(np.array([0.0, 1.0]), (m,))


def test_trace_save_load_roundtrip(tmp_path):
    m = _single()
    trace = evolve_conservative(_linear_flow(0.01), m, [0.0, 0.2, 0.4])
    trace.save(tmp_path / "trace")
    back = EvolutionTrace.load(tmp_path / "trace")
    np.testing.assert_array_equal(back.times, trace.times)
    for a, b in zip(back.snapshots, trace.snapshots):
        np.testing.assert_allclose(a.means, b.means, atol=1e-15)
        np.testing.assert_allclose(a.covariances, b.covariances, atol=1e-15)


def test_assemble_density_single_component():
    m = _mixture([1.0], [[0.0, 0.0]], [np.eye(2)])
    trace = EvolutionTrace(np.array([0.0]), (m,))
    grid = GridSpec((-4.0, -4.0), (4.0, 4.0), (41, 41))
    dg = assemble_density(trace, 0, grid)
    np.testing.assert_allclose(dg.values.ravel(), m.density(grid.points()), atol=1e-15)
    assert dg.integral() == pytest.approx(1.0, abs=0.01)


def test_ridge_direction_of_linear_example():
    # through the linear benchmark map, the dominant covariance direction
    # has slope about 0.38 in the output plane
    a = np.array([[3.0, 5.0], [1.0, 2.0]])
    out = evolve_static(StaticMap(lambda p: p @ a.T, 2, 2), _mixture([1.0], [[0.0, 0.0]], [np.eye(2)]))
    vals, vecs = np.linalg.eigh(out.covariance())
    slope = vecs[1, -1] / vecs[0, -1]
    assert slope == pytest.approx(0.3826, abs=1e-3)


def test_second_order_statistics_identities():
    single = _single()
    trace = EvolutionTrace(np.array([0.0]), (single,))
    means, covs = second_order_statistics(trace)
    np.testing.assert_allclose(means[0], single.means[0], atol=1e-15)
    np.testing.assert_allclose(covs[0], single.covariances[0], atol=1e-15)

    two = _mixture([0.5, 0.5], [[1.0], [-1.0]], [np.eye(1), np.eye(1)])
    trace = EvolutionTrace(np.array([0.0]), (two,))
    means, covs = second_order_statistics(trace)
    assert means[0][0] == pytest.approx(0.0, abs=1e-15)
    assert covs[0][0, 0] == pytest.approx(2.0, abs=1e-14)
