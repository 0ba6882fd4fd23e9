"""Representative-point generation for mixture means.

Component locations come either from a low-discrepancy sequence mapped
onto the target distribution (inverse CDF per marginal, or Box-Muller
for multivariate Gaussians) or from K-means cluster centroids of a large
auxiliary sample.  Point-set quality is scored by the sup distance
between empirical and target CDF, which equals the Kolmogorov-Smirnov
distance.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalInversionError, UnsupportedDimensionError
from .targets import (
    DistributionSpec,
    IndependentMarginals,
    MultivariateGaussian,
    NormalMarginal,
)

logger = logging.getLogger(__name__)

GENERATOR_GLP = "glp"
GENERATOR_HALTON = "halton"
GENERATOR_RANDOM = "random"

PROVENANCE_LDS = "lds-transform"
PROVENANCE_KMEANS = "kmeans"

# Lattice generating vectors, keyed by (point count, dimension).  The 2-D
# entries are Fibonacci lattices (n = F_k, h = F_{k-1}); higher dimensions
# come from standard number-theoretic tables.  Anything else falls back to
# Halton with a logged warning.
_GLP_VECTORS = {
    (89, 2): (1, 55),
    (144, 2): (1, 89),
    (233, 2): (1, 144),
    (377, 2): (1, 233),
    (610, 2): (1, 377),
    (35, 3): (1, 11, 16),
    (101, 3): (1, 40, 85),
    (135, 3): (1, 29, 42),
    (185, 3): (1, 26, 64),
    (266, 3): (1, 27, 69),
    (418, 3): (1, 90, 130),
    (1010, 3): (1, 140, 237),
    (307, 4): (1, 42, 229, 101),
    (562, 4): (1, 53, 89, 221),
    (701, 4): (1, 82, 415, 382),
    (1019, 4): (1, 71, 765, 865),
    (1069, 5): (1, 63, 762, 970, 177),
    (1543, 5): (1, 58, 278, 694, 134),
    (3001, 5): (1, 408, 1409, 1681, 1620),
}

_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149,
    151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
)

MAX_HALTON_DIMENSION = len(_PRIMES)


@dataclass(frozen=True)
class UnitPointSet:
    """Points in the unit hypercube [0, 1)^q plus how they were generated.

    ``meta`` records whatever is needed to regenerate the set (seed, skip),
    which the Gaussian transform uses to obtain an auxiliary coordinate for
    odd dimensions.
    """

    points: np.ndarray
    generator: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if np.any(pts < 0.0) or np.any(pts >= 1.0):
            raise ValueError("unit points must lie in [0, 1)")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("unit points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RepPointSet:
    """Mixture-mean candidates in the target's own coordinates."""

    points: np.ndarray
    provenance: str
    target: DistributionSpec

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("at least one representative point required")
        if not np.all(np.isfinite(pts)):
            raise ValueError("representative points must be finite")
        if not np.all(self.target.contains(pts)):
            raise ValueError("representative points outside target support")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def save_csv(self, path, sidecar: dict | None = None) -> None:
        """Write points as CSV plus a JSON sidecar with provenance."""
        path = str(path)
        q = self.dimension
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"theta_{j + 1}" for j in range(q)])
            writer.writerows(self.points.tolist())
        info = {"provenance": self.provenance, "count": self.count}
        try:
            info["target"] = self.target.to_dict()
        except ValueError:
            info["target"] = "custom"
        if sidecar:
            info.update(sidecar)
        with open(path + ".json", "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)


def generate_glp(count: int, dimension: int, allow_fallback: bool = True) -> UnitPointSet:
    """Good-lattice-point set {i h / n} for i = 1..n.

    Returns the lattice for configured (count, dimension) pairs; otherwise
    falls back to a Halton set of the same size (with a warning), or raises
    :class:`UnsupportedDimensionError` when ``allow_fallback`` is false.
    """
    if count < 2:
        raise ValueError("lattice needs at least 2 points")
    if dimension < 1:
        raise ValueError("dimension must be at least 1")
    if dimension == 1:
        vector = (1,)
    else:
        vector = _GLP_VECTORS.get((count, dimension))
    if vector is None:
        if not allow_fallback:
            raise UnsupportedDimensionError(
                f"no generating vector for n={count}, q={dimension} and fallback disabled"
            )
        logger.warning(
            "no lattice vector for n=%d, q=%d; falling back to Halton", count, dimension
        )
        halton = generate_halton(count, dimension)
        return UnitPointSet(halton.points, GENERATOR_GLP, {"fallback": "halton", "skip": 0})
    i = np.arange(1, count + 1)[:, None]
    pts = np.mod(i * np.asarray(vector, dtype=float) / count, 1.0)
    return UnitPointSet(pts, GENERATOR_GLP, {"vector": list(vector)})


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(len(indices))
    scale = 1.0 / base
    work = indices.copy()
    while np.any(work > 0):
        out += (work % base) * scale
        work //= base
        scale /= base
    return out


def generate_halton(count: int, dimension: int, skip: int = 0) -> UnitPointSet:
    """Halton points in the first ``dimension`` prime bases, starting at index 1 + skip."""
    if count < 1:
        raise ValueError("at least one point required")
    if dimension < 1 or dimension > MAX_HALTON_DIMENSION:
        raise ValueError(f"dimension must be in [1, {MAX_HALTON_DIMENSION}]")
    if skip < 0:
        raise ValueError("skip must be non-negative")
    idx = np.arange(1 + skip, 1 + skip + count, dtype=np.int64)
    cols = [_radical_inverse(idx, _PRIMES[j]) for j in range(dimension)]
    return UnitPointSet(np.column_stack(cols), GENERATOR_HALTON, {"skip": skip})


def generate_random(count: int, dimension: int, seed: int) -> UnitPointSet:
    """Pseudo-random uniform points; the baseline all LDS sets are judged against."""
    if count < 1:
        raise ValueError("at least one point required")
    rng = np.random.default_rng(seed)
    pts = rng.random((count, dimension))
    return UnitPointSet(pts, GENERATOR_RANDOM, {"seed": int(seed)})


def _regenerate(unit: UnitPointSet, dimension: int) -> UnitPointSet:
    """Regenerate ``unit`` with one more coordinate, for Box-Muller pairing."""
    if unit.generator == GENERATOR_HALTON or unit.meta.get("fallback") == "halton":
        return generate_halton(unit.count, dimension, skip=unit.meta.get("skip", 0))
    if unit.generator == GENERATOR_GLP:
        return generate_glp(unit.count, dimension)
    if unit.generator == GENERATOR_RANDOM and "seed" in unit.meta:
        return generate_random(unit.count, dimension, unit.meta["seed"])
    raise ValueError(
        "odd-dimension Gaussian transform needs a regenerable unit set "
        "(halton, glp, or random with recorded seed)"
    )


def _box_muller(unit_pts: np.ndarray) -> np.ndarray:
    """Map unit-square pairs to independent standard normals.

    The radial coordinate uses 1 - u so a lattice coordinate of exactly 0
    maps to radius 0 rather than infinity; u -> 1 - u preserves uniformity.
    """
    n, q = unit_pts.shape
    z = np.empty((n, q))
    for j in range(0, q, 2):
        u1 = 1.0 - unit_pts[:, j]
        u2 = unit_pts[:, j + 1]
        r = np.sqrt(-2.0 * np.log(u1))
        z[:, j] = r * np.cos(2.0 * math.pi * u2)
        z[:, j + 1] = r * np.sin(2.0 * math.pi * u2)
    return z


def transform_to_target(unit: UnitPointSet, target: DistributionSpec) -> RepPointSet:
    """Map unit-hypercube points onto the target distribution.

    Independent marginals invert each marginal CDF coordinate-wise; a
    multivariate Gaussian goes through Box-Muller and the covariance
    Cholesky factor.  Raises :class:`NumericalInversionError` when a
    marginal has no finite quantile at a requested coordinate.
    """
    if unit.dimension != target.dimension:
        raise ValueError(
            f"unit dimension {unit.dimension} != target dimension {target.dimension}"
        )
    if isinstance(target, MultivariateGaussian):
        q = target.dimension
        pts = unit.points
        if q % 2 == 1:
            pts = _regenerate(unit, q + 1).points
        z = _box_muller(pts)[:, :q]
        theta = target.mean_vector + z @ target.cholesky.T
        return RepPointSet(theta, PROVENANCE_LDS, target)
    theta = np.empty_like(unit.points)
    for j, marginal in enumerate(target.marginals):
        vals = np.asarray(marginal.ppf(unit.points[:, j]), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericalInversionError(f"marginal {j} has no finite quantile")
        theta[:, j] = vals
    return RepPointSet(theta, PROVENANCE_LDS, target)


def clustering_objective(samples: np.ndarray, centers: np.ndarray) -> float:
    """Sum of squared distances from each sample to its nearest center."""
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def _assign(samples: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def kmeans_iterations(aux: np.ndarray, centers: np.ndarray, tol: float, max_iter: int):
    """Lloyd iteration generator; one update round per step.

    Yields (updated centers, assignment objective).  The objective is the
    sum of squared distances of every auxiliary point to its nearest
    pre-update center; the sequence is non-increasing even across
    empty-cluster re-seeds, because a center that served no points can
    only improve the next assignment by moving.
    """
    count = centers.shape[0]
    scale = max(float(aux.std(axis=0).max()), 1e-30)
    for _ in range(max_iter):
        d2 = ((aux[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        objective = float(d2[np.arange(len(aux)), labels].sum())
        new_centers = centers.copy()
        for k in range(count):
            mask = labels == k
            if mask.any():
                new_centers[k] = aux[mask].mean(axis=0)
            else:
                far = np.argmax(((aux - centers[k]) ** 2).sum(axis=1))
                new_centers[k] = aux[far]
                logger.warning("k-means: cluster %d empty, reseeded to farthest point", k)
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        yield centers, objective
        if shift < tol * scale:
            return


def kmeans_rep_points(
    target: DistributionSpec,
    count: int,
    auxiliary_count: int | None = None,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> RepPointSet:
    """Cluster centroids of an auxiliary sample, used as mixture means.

    Lloyd iteration on ``auxiliary_count`` samples (default 200 per center,
    at least 50 per center enforced).  An empty cluster is re-seeded with
    the auxiliary point farthest from its current center, so the number of
    centers never shrinks.  Deterministic for a fixed seed; stops when no
    center moves more than ``tol`` times the sample scale.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if auxiliary_count is None:
        auxiliary_count = min(200 * count, 1_000_000)
    if auxiliary_count < 50 * count:
        raise ValueError(f"auxiliary_count must be at least {50 * count} (50 per center)")
    rng = np.random.default_rng(seed)
    centers = np.atleast_2d(target.sample(count, rng))
    aux = np.atleast_2d(target.sample(auxiliary_count, rng))
    for centers, _objective in kmeans_iterations(aux, centers, tol, max_iter):
        pass
    return RepPointSet(centers, PROVENANCE_KMEANS, target)


def _standardize_for_cdf(points: np.ndarray, target: DistributionSpec):
    """Return (points, marginal CDF evaluator) in coordinates where the
    target has independent marginals.

    Correlated Gaussians are whitened first (an exact distributional
    transform), so the returned value is the KS distance of the whitened
    set against the standard normal product.
    """
    if isinstance(target, IndependentMarginals):
        return points, target.marginal_cdfs
    white = np.linalg.solve(target.cholesky, (points - target.mean_vector).T).T
    std = IndependentMarginals(tuple(NormalMarginal() for _ in range(target.dimension)))
    return white, std.marginal_cdfs


def f_discrepancy(points, target: DistributionSpec) -> float:
    """Sup distance between the point set's empirical CDF and the target CDF.

    Exact in one dimension (evaluated on both sides of every jump).  In
    higher dimensions the sup is approximated from below over the points
    themselves, the staircase corners they induce, and 10^4 quasi-random
    probes; see module notes.
    """
    pts = points.points if isinstance(points, RepPointSet) else np.atleast_2d(np.asarray(points, dtype=float))
    pts, cdf_eval = _standardize_for_cdf(pts, target)
    n, q = pts.shape
    if q == 1:
        x = np.sort(pts[:, 0])
        f = cdf_eval(x[:, None])[:, 0]
        upper = np.arange(1, n + 1) / n
        lower = np.arange(0, n) / n
        return float(max(np.abs(upper - f).max(), np.abs(lower - f).max()))
    candidates = [pts]
    if n * n <= 20_000:
        axes = [np.unique(pts[:, j]) for j in range(q)]
        mesh = np.meshgrid(*axes, indexing="ij")
        candidates.append(np.stack([m.ravel() for m in mesh], axis=-1))
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    probes = generate_halton(10_000, q, skip=1000).points * (hi - lo) + lo
    candidates.append(probes)
    best = 0.0
    for cand in candidates:
        marg = cdf_eval(cand)
        f = marg.prod(axis=1)
        le = np.all(pts[None, :, :] <= cand[:, None, :], axis=2).sum(axis=1) / n
        lt = np.all(pts[None, :, :] < cand[:, None, :], axis=2).sum(axis=1) / n
        best = max(best, float(np.abs(le - f).max()), float(np.abs(lt - f).max()))
    return best
