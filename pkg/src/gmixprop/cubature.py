"""Third-degree spherical-radial cubature.

For a Gaussian with mean mu and covariance Sigma = L L^T, the rule places
2q points mu +/- sqrt(q) L e_j with equal weights 1/(2q).  It integrates
every polynomial of total degree <= 3 exactly under the Gaussian weight,
which is what makes the per-component moment propagation cheap: the
weighted point mean reproduces mu and the weighted scatter reproduces
Sigma without any further correction.

Maps are batched: a map is called once with an (m, q) array of points and
must return an (m, n) array of images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteMapError, SPDViolationError
from .mixture import GaussianComponent

__all__ = [
    "CubatureSet",
    "MomentPair",
    "cubature_points",
    "propagate_moments",
    "gauss_expectation",
    "unit_directions",
    "batch_cubature_points",
    "batch_moments",
]


@dataclass(frozen=True)
class CubatureSet:
    """2q weighted evaluation points for one Gaussian component."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        q = pts.shape[1]
        if pts.shape[0] != 2 * q or w.shape != (2 * q,):
            raise ValueError("cubature set must hold exactly 2q points and weights")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class MomentPair:
    """Propagated mean and symmetrized PSD covariance."""

    mean: np.ndarray
    covariance: np.ndarray


def unit_directions(q: int) -> np.ndarray:
    """The 2q standardized cubature points sqrt(q) * (+-e_j), stacked (2q, q)."""
    eye = np.eye(q)
    return math.sqrt(q) * np.concatenate([eye, -eye], axis=0)


def cubature_points(component: GaussianComponent) -> CubatureSet:
    """Cubature points of one component: mu +/- sqrt(q) L e_j, weights 1/(2q)."""
    q = component.dimension
    xi = unit_directions(q)
    pts = component.mean + xi @ component.cholesky.T
    return CubatureSet(pts, np.full(2 * q, 1.0 / (2 * q)))


def batch_cubature_points(means: np.ndarray, cholesky: np.ndarray) -> np.ndarray:
    """Cubature points for K components at once; returns (K, 2q, q)."""
    q = means.shape[1]
    xi = unit_directions(q)
    return means[:, None, :] + np.einsum("kij,pj->kpi", cholesky, xi)


def batch_moments(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Equal-weight mean and scatter of mapped cubature points.

    ``images`` is (K, 2q, n); returns means (K, n) and symmetrized
    covariances (K, n, n).
    """
    means = images.mean(axis=1)
    dev = images - means[:, None, :]
    covs = np.einsum("kpi,kpj->kij", dev, dev) / images.shape[1]
    return means, 0.5 * (covs + covs.transpose(0, 2, 1))


def _clamp_psd(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return (vecs * np.maximum(vals, 0.0)) @ vecs.T


def _evaluate(map_fn, points: np.ndarray) -> np.ndarray:
    images = np.asarray(map_fn(points), dtype=float)
    if images.ndim == 1:
        images = images[:, None]
    bad = ~np.all(np.isfinite(images), axis=1)
    if np.any(bad):
        where = int(np.argmax(bad))
        raise NonFiniteMapError(
            f"map returned non-finite value at cubature point {points[where]}",
            point=points[where],
        )
    return images


def propagate_moments(component: GaussianComponent, map_fn) -> MomentPair:
    """First two moments of map(theta) under the component's Gaussian.

    Mean and covariance are the weighted point statistics of the mapped
    cubature points; the covariance is symmetrized and eigenvalue-clamped
    to positive semidefinite.
    """
    cset = cubature_points(component)
    images = _evaluate(map_fn, cset.points)
    mean = cset.weights @ images
    dev = images - mean
    cov = np.einsum("p,pi,pj->ij", cset.weights, dev, dev)
    return MomentPair(mean, _clamp_psd(cov))


def gauss_expectation(map_fn, component: GaussianComponent) -> np.ndarray:
    """Gaussian expectation of the map: the weighted sum over cubature points."""
    cset = cubature_points(component)
    images = _evaluate(map_fn, cset.points)
    return cset.weights @ images
