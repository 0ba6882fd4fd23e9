from __future__ import annotations

import json

import numpy as np
import pytest

from gmixprop.errors import NumericalInversionError, UnsupportedDimensionError
from gmixprop.rep_points import (
    clustering_objective,
    f_discrepancy,
    generate_glp,
    generate_halton,
    generate_random,
    kmeans_iterations,
    kmeans_rep_points,
    transform_to_target,
)
from gmixprop.targets import (
    IndependentMarginals,
    NormalMarginal,
    UniformMarginal,
    standard_gaussian,
)

STD1 = IndependentMarginals((NormalMarginal(),))
STD2 = IndependentMarginals((NormalMarginal(), NormalMarginal()))


# -- lattice and sequence generation ------------------------------------------


def test_glp_89_points_distinct_in_unit_square():
    u = generate_glp(89, 2)
    assert u.count == 89
    assert np.all(u.points >= 0.0) and np.all(u.points < 1.0)
    assert len(np.unique(u.points, axis=0)) == 89


def test_glp_rejects_degenerate_count():
    with pytest.raises(ValueError):
        generate_glp(1, 2)


def test_glp_fibonacci_formula():
    # lattice (144; 1, 89): point i has coordinates ({i/144}, {89 i/144})
    u = generate_glp(144, 2)
    np.testing.assert_allclose(u.points[0], [1 / 144, 89 / 144], atol=1e-15)
    i = 57
    np.testing.assert_allclose(
        u.points[i - 1], [(i / 144) % 1.0, (89 * i / 144) % 1.0], atol=1e-13
    )


def test_glp_fallback_and_refusal(caplog):
    with caplog.at_level("WARNING"):
        u = generate_glp(100, 2)
    assert "falling back" in caplog.text
    assert u.count == 100
    with pytest.raises(UnsupportedDimensionError):
        generate_glp(100, 2, allow_fallback=False)


def test_halton_base2_sequence():
    u = generate_halton(3, 1)
    np.testing.assert_allclose(u.points.ravel(), [0.5, 0.25, 0.75], atol=1e-15)


def test_halton_first_point_two_dims():
    u = generate_halton(1, 2)
    np.testing.assert_allclose(u.points[0], [0.5, 1 / 3], atol=1e-15)


def test_halton_rejects_empty():
    with pytest.raises(ValueError):
        generate_halton(0, 2)


def test_halton_skip_shifts_sequence():
    a = generate_halton(5, 2, skip=2).points
    b = generate_halton(7, 2).points[2:]
    np.testing.assert_array_equal(a, b)


def test_generators_deterministic():
    for make in (
        lambda: generate_glp(89, 2).points,
        lambda: generate_halton(64, 3, skip=5).points,
        lambda: generate_random(64, 3, seed=11).points,
    ):
        np.testing.assert_array_equal(make(), make())


# -- transformation ------------------------------------------------------------


def test_transform_median_maps_to_mean():
    from gmixprop.rep_points import UnitPointSet

    u = UnitPointSet(np.array([[0.5, 0.5]]), "halton")
    rp = transform_to_target(u, STD2)
    np.testing.assert_allclose(rp.points[0], [0.0, 0.0], atol=1e-14)


def test_transform_uniform_midpoint():
    from gmixprop.rep_points import UnitPointSet

    u = UnitPointSet(np.array([[0.5]]), "halton")
    rp = transform_to_target(u, IndependentMarginals((UniformMarginal(2, 6),)))
    assert rp.points[0, 0] == pytest.approx(4.0, abs=1e-14)


def test_glp_gaussian_layout():
    # all 89 points within radius 4, counts symmetric about each axis
    rp = transform_to_target(generate_glp(89, 2), standard_gaussian(2))
    r = np.linalg.norm(rp.points, axis=1)
    assert r.max() < 4.0
    for j in range(2):
        pos = int((rp.points[:, j] > 0).sum())
        neg = int((rp.points[:, j] < 0).sum())
        assert abs(pos - neg) <= 2


def test_transform_roundtrip_recovers_unit_coordinates():
    target = IndependentMarginals(
        (NormalMarginal(1.0, 2.0), UniformMarginal(-1, 3), NormalMarginal())
    )
    u = generate_halton(200, 3)
    rp = transform_to_target(u, target)
    back = target.marginal_cdfs(rp.points)
    np.testing.assert_allclose(back, u.points, atol=1e-10)


def test_transform_rejects_lattice_zero_through_normal_inverse():
    # the lattice contains a coordinate of exactly 0, where the normal
    # quantile has no finite value
    with pytest.raises(NumericalInversionError):
        transform_to_target(generate_glp(89, 2), STD2)


def test_box_muller_odd_dimension_pairs_auxiliary_coordinate():
    rp = transform_to_target(generate_halton(500, 3), standard_gaussian(3))
    assert rp.points.shape == (500, 3)
    np.testing.assert_allclose(rp.points.mean(axis=0), 0.0, atol=0.15)
    np.testing.assert_allclose(np.cov(rp.points.T), np.eye(3), atol=0.15)


def test_transform_dimension_mismatch():
    with pytest.raises(ValueError):
        transform_to_target(generate_halton(8, 3), STD2)


# -- k-means --------------------------------------------------------------------


def test_kmeans_single_center_is_sample_mean():
    rp = kmeans_rep_points(standard_gaussian(2), 1, auxiliary_count=5000, seed=1)
    np.testing.assert_allclose(rp.points[0], [0.0, 0.0], atol=3.0 / np.sqrt(5000))


class _TwoPointCloud:
    """Discrete test distribution putting equal mass on -1 and +1."""

    dimension = 1

    def sample(self, n, rng):
        vals = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)
        return vals[rng.permutation(n), None]

    def contains(self, theta):
        return np.ones(np.asarray(theta).shape[:-1], dtype=bool)

    def std(self):
        return np.array([1.0])


def test_kmeans_two_separated_clusters():
    rp = kmeans_rep_points(_TwoPointCloud(), 2, auxiliary_count=200, seed=4)
    np.testing.assert_allclose(sorted(rp.points.ravel()), [-1.0, 1.0], atol=1e-12)


def test_kmeans_beats_random_points():
    target = standard_gaussian(2)
    eval_pts = target.sample(20000, np.random.default_rng(999))
    wins = 0
    for seed in range(100):
        rp = kmeans_rep_points(target, 16, auxiliary_count=5000, seed=seed)
        rand = target.sample(16, np.random.default_rng(10_000 + seed))
        if clustering_objective(eval_pts, rp.points) < clustering_objective(eval_pts, rand):
            wins += 1
    assert wins >= 95


def test_kmeans_objective_monotone():
    target = standard_gaussian(2)
    rng = np.random.default_rng(3)
    aux = target.sample(4000, rng)
    centers = target.sample(12, rng)
    objectives = [obj for _, obj in kmeans_iterations(aux, centers, 1e-8, 200)]
    assert len(objectives) > 2
    diffs = np.diff(objectives)
    assert np.all(diffs <= 1e-9)


def test_kmeans_deterministic_given_seed():
    a = kmeans_rep_points(standard_gaussian(2), 8, auxiliary_count=2000, seed=5)
    b = kmeans_rep_points(standard_gaussian(2), 8, auxiliary_count=2000, seed=5)
    np.testing.assert_array_equal(a.points, b.points)


def test_kmeans_enforces_auxiliary_floor():
    with pytest.raises(ValueError):
        kmeans_rep_points(standard_gaussian(2), 10, auxiliary_count=400, seed=0)


# -- discrepancy -----------------------------------------------------------------


def test_f_discrepancy_single_median_point():
    assert f_discrepancy(np.array([[0.0]]), STD1) == pytest.approx(0.5)


def test_f_discrepancy_midpoint_quantiles():
    k = 10
    q = (2 * np.arange(1, k + 1) - 1) / (2 * k)
    pts = NormalMarginal().ppf(q)[:, None]
    assert f_discrepancy(pts, STD1) == pytest.approx(0.05, abs=1e-12)


def test_f_discrepancy_duplicated_point():
    x = NormalMarginal().ppf(0.3)
    pts = np.full((7, 1), x)
    assert f_discrepancy(pts, STD1) == pytest.approx(0.7, abs=1e-12)


def test_f_discrepancy_whitens_correlated_gaussian():
    from gmixprop.targets import MultivariateGaussian

    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    target = MultivariateGaussian(np.zeros(2), cov)
    rng = np.random.default_rng(8)
    good = target.sample(400, rng)
    d = f_discrepancy(good, target)
    assert 0.0 < d < 0.2


# -- serialization ---------------------------------------------------------------


def test_rep_point_csv_sidecar(tmp_path):
    rp = transform_to_target(generate_halton(20, 2), standard_gaussian(2))
    path = tmp_path / "points.csv"
    rp.save_csv(path, sidecar={"generator": "halton", "seed": 0})
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows, rp.points)
    header = path.read_text().splitlines()[0]
    assert header == "theta_1,theta_2"
    meta = json.loads((tmp_path / "points.csv.json").read_text())
    assert meta["generator"] == "halton"
    assert meta["count"] == 20
    assert meta["target"]["kind"] == "gaussian"
