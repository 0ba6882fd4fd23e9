"""Gaussian mixture models with fixed weights and means.

The mixture carries equal weights 1/K and means pinned to a
representative point set; only the component covariances are free.  They
are set by a kernel policy: a shared scale, a per-component scale from
nearest-neighbor distances, or a reduced EM fit that updates covariances
alone while weights and means stay untouched.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import SPDViolationError
from .grids import DensityGrid, GridSpec
from .rep_points import PROVENANCE_KMEANS, RepPointSet, generate_halton, transform_to_target
from .targets import DistributionSpec

logger = logging.getLogger(__name__)

# Relative eigenvalue floor applied after covariance updates.
EIGENVALUE_FLOOR = 1e-8

_DENSITY_FLOOR = np.finfo(float).tiny  # returned instead of a hard underflow to 0


def regularize_covariance(cov: np.ndarray, rel_floor: float = EIGENVALUE_FLOOR) -> np.ndarray:
    """Clamp eigenvalues from below at ``rel_floor * trace / q``.

    Accepts a single matrix or a (K, q, q) batch.  Matrices that already
    admit a Cholesky factorization are returned unchanged; clamping is
    logged because it signals degenerating components.
    """
    cov = np.asarray(cov, dtype=float)
    single = cov.ndim == 2
    batch = cov[None] if single else cov
    try:
        np.linalg.cholesky(batch)
        return cov
    except np.linalg.LinAlgError:
        pass
    q = batch.shape[-1]
    out = batch.copy()
    for k in range(len(batch)):
        try:
            np.linalg.cholesky(batch[k])
            continue
        except np.linalg.LinAlgError:
            pass
        sym = 0.5 * (batch[k] + batch[k].T)
        vals, vecs = np.linalg.eigh(sym)
        floor = rel_floor * max(np.trace(sym), 0.0) / q
        if floor <= 0.0:
            raise SPDViolationError("covariance has non-positive trace; cannot regularize")
        vals = np.maximum(vals, floor)
        out[k] = (vecs * vals) @ vecs.T
        logger.warning("covariance %d clamped to eigenvalue floor %.3e", k, floor)
    return out[0] if single else out


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: weight, mean, SPD covariance, cached Cholesky."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SPDViolationError(f"component covariance not SPD: {exc}") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", chol)

    @property
    def dimension(self) -> int:
        return self.mean.size


class MixtureModel:
    """Immutable Gaussian mixture over a q-dimensional space.

    Stored as stacked arrays for vectorized evaluation; ``components``
    yields the per-component view.  Weights must sum to one.
    """

    def __init__(self, weights, means, covariances, _cholesky=None):
        weights = np.asarray(weights, dtype=float).copy()
        means = np.atleast_2d(np.asarray(means, dtype=float)).copy()
        covs = np.asarray(covariances, dtype=float).copy()
        if covs.ndim == 2:
            covs = covs[None]
        k, q = means.shape
        if weights.shape != (k,) or covs.shape != (k, q, q):
            raise ValueError("inconsistent component shapes")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        if np.any(weights < 0.0) or np.any(weights > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if _cholesky is None:
            try:
                _cholesky = np.linalg.cholesky(covs)
            except np.linalg.LinAlgError as exc:
                bad = []
                for idx in range(k):
                    try:
                        np.linalg.cholesky(covs[idx])
                    except np.linalg.LinAlgError:
                        bad.append(idx)
                raise SPDViolationError(
                    f"component covariance not SPD at index {bad}"
                ) from exc
        for arr in (weights, means, covs, _cholesky):
            arr.setflags(write=False)
        self.weights = weights
        self.means = means
        self.covariances = covs
        self.cholesky = _cholesky

    @classmethod
    def from_components(cls, components) -> "MixtureModel":
        comps = list(components)
        return cls(
            [c.weight for c in comps],
            np.stack([c.mean for c in comps]),
            np.stack([c.covariance for c in comps]),
        )

    @property
    def count(self) -> int:
        return self.means.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> tuple:
        return tuple(
            GaussianComponent(w, m, c)
            for w, m, c in zip(self.weights, self.means, self.covariances)
        )

    def _log_pdfs(self, x: np.ndarray) -> np.ndarray:
        """Log density of every component at every point; x is (N, q)."""
        return _component_log_pdfs(self.means, self.cholesky, x)

    def log_density(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dimension:
            raise ValueError("point dimension does not match mixture")
        out = np.empty(pts.shape[0])
        logw = np.log(self.weights)
        chunk = 65536
        for s in range(0, pts.shape[0], chunk):
            lp = self._log_pdfs(pts[s : s + chunk])
            out[s : s + chunk] = logsumexp(lp + logw, axis=1)
        return float(out[0]) if single else out

    def density(self, x) -> np.ndarray | float:
        """Mixture density, accumulated in log space.

        Floored at the smallest positive normal float so extreme tail
        queries stay strictly positive instead of underflowing to zero.
        """
        ld = self.log_density(x)
        return np.maximum(np.exp(ld), _DENSITY_FLOOR)

    def density_grid(self, grid: GridSpec) -> DensityGrid:
        values = self.density(grid.points())
        return DensityGrid(grid, np.asarray(values).reshape(grid.shape))

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        second = np.einsum("k,kij->ij", self.weights, self.covariances)
        second += np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        return second - np.outer(mu, mu)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "components": [
                {
                    "weight": float(w),
                    "mean": m.tolist(),
                    "covariance": c.ravel().tolist(),
                }
                for w, m, c in zip(self.weights, self.means, self.covariances)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureModel":
        q = int(data["dimension"])
        comps = data["components"]
        weights = [c["weight"] for c in comps]
        means = [c["mean"] for c in comps]
        covs = [np.asarray(c["covariance"], dtype=float).reshape(q, q) for c in comps]
        return cls(weights, means, np.stack(covs))

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "MixtureModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- kernel policies ---------------------------------------------------------


@dataclass(frozen=True)
class Homogeneous:
    """Shared isotropic scale for every component; scale=None uses the
    K^(-1/q) * mean-target-std heuristic."""

    scale: float | None = None


@dataclass(frozen=True)
class Inscribed:
    """Per-component isotropic scale, half the nearest-neighbor distance."""


@dataclass(frozen=True)
class Adaptive:
    """Full per-component covariances fitted by reduced EM."""


KernelPolicy = Homogeneous | Inscribed | Adaptive


@dataclass(frozen=True)
class EMConfig:
    """Settings for the reduced EM fit.

    ``sampler`` picks how the auxiliary set is drawn ("random" via the
    seed, or "halton" for a deterministic low-discrepancy sample, which
    removes shot noise from the fitted covariances).  ``initializer``
    picks the starting covariances for LDS rep-point sets: a shared
    scale ("scale", the default), per-point local-density scaling
    ("local"), or nearest-cell scatter ("cell").
    """

    auxiliary_count: int | None = None
    tol: float | None = None  # default 1e-8 * M
    max_iter: int = 300
    seed: int = 0
    sampler: str = "random"
    initializer: str = "scale"
    initial_scale: float | None = None


@dataclass(frozen=True)
class EMResult:
    covariances: np.ndarray
    log_likelihoods: tuple
    n_iter: int
    frozen: tuple


def _component_log_pdfs(means: np.ndarray, chols: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-component Gaussian log densities at x; returns (len(x), K).

    Vectorized over components via the inverse Cholesky factors, chunked
    over evaluation points to bound memory.
    """
    n, q = x.shape
    k = len(means)
    linv = np.linalg.inv(chols)
    mu_white = np.einsum("kij,kj->ki", linv, means).reshape(k * q)
    # one BLAS product per chunk: x (m, q) times all whitening rows (k*q, q)
    rows = linv.reshape(k * q, q)
    logdet = np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
    const = -0.5 * q * math.log(2.0 * math.pi) - logdet
    out = np.empty((n, k))
    step = max(1, 4_000_000 // (k * q))
    for s in range(0, n, step):
        w = x[s : s + step] @ rows.T - mu_white
        w = w.reshape(-1, k, q)
        out[s : s + step] = const - 0.5 * (w * w).sum(axis=2)
    return out


def responsibilities(means: np.ndarray, covariances: np.ndarray, auxiliary: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for each auxiliary point (rows sum to 1)."""
    covs = np.asarray(covariances, dtype=float)
    if covs.ndim == 2:
        covs = covs[None]
    chols = np.linalg.cholesky(covs)
    lp = _component_log_pdfs(np.atleast_2d(means), chols, np.atleast_2d(auxiliary))
    lp -= lp.max(axis=1, keepdims=True)
    lam = np.exp(lp)
    lam /= lam.sum(axis=1, keepdims=True)
    return lam


def fit_covariances_em(
    means: np.ndarray,
    initial_covariances: np.ndarray,
    auxiliary: np.ndarray,
    config: EMConfig = EMConfig(),
) -> EMResult:
    """Reduced EM: optimize component covariances with weights and means fixed.

    Each iteration evaluates responsibilities, re-estimates every covariance
    as the responsibility-weighted scatter about its fixed mean, applies the
    eigenvalue floor, and re-evaluates the log likelihood.  A component whose
    responsibility mass underflows keeps its last SPD covariance and is
    reported in ``frozen``.  Stops when the likelihood gain drops below
    ``tol`` (default 1e-8 per auxiliary point) or after ``max_iter`` rounds.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    aux = np.atleast_2d(np.asarray(auxiliary, dtype=float))
    k, q = means.shape
    m = aux.shape[0]
    if m < 50 * k:
        raise ValueError(f"need at least {50 * k} auxiliary points for {k} components")
    covs = np.asarray(initial_covariances, dtype=float).reshape(k, q, q).copy()
    covs = regularize_covariance(covs)
    tol = config.tol if config.tol is not None else 1e-8 * m
    log_uniform = -math.log(k)
    outer = (aux[:, :, None] * aux[:, None, :]).reshape(m, q * q)
    lls: list[float] = []
    frozen: set[int] = set()
    n_iter = 0
    for n_iter in range(config.max_iter + 1):
        lp = _component_log_pdfs(means, np.linalg.cholesky(covs), aux)
        shift = lp.max(axis=1, keepdims=True)
        lam = np.exp(lp - shift)
        norms = lam.sum(axis=1, keepdims=True)
        lls.append(float(np.sum(np.log(norms) + shift) + m * log_uniform))
        if n_iter >= config.max_iter or (
            n_iter > 0 and abs(lls[-1] - lls[-2]) < tol
        ):
            break
        lam /= norms
        beta = lam.sum(axis=0)
        # scatter about the fixed means, by weighted moments
        s1 = lam.T @ aux
        s2 = (lam.T @ outer).reshape(k, q, q)
        new_covs = covs.copy()
        alive = beta > 1e-12 * m
        for j in np.flatnonzero(~alive):
            if j not in frozen:
                logger.warning("EM component %d orphaned; covariance frozen", j)
                frozen.add(int(j))
        b = beta[alive, None, None]
        mu = means[alive]
        m1 = s1[alive] / beta[alive, None]
        new_covs[alive] = (
            s2[alive] / b
            - np.einsum("ki,kj->kij", m1, mu)
            - np.einsum("ki,kj->kij", mu, m1)
            + np.einsum("ki,kj->kij", mu, mu)
        )
        covs = regularize_covariance(new_covs)
    return EMResult(covs, tuple(lls), n_iter, tuple(sorted(frozen)))


def _nearest_neighbor_distances(points: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1))


def _homogeneous_scale(count: int, dimension: int, target: DistributionSpec) -> float:
    return count ** (-1.0 / dimension) * float(np.mean(target.std()))


def build_mixture(
    points: RepPointSet,
    policy: KernelPolicy,
    target: DistributionSpec,
    em_config: EMConfig | None = None,
) -> MixtureModel:
    """Assemble the mixture for a representative point set.

    Weights are 1/K, means are the points themselves, and covariances
    follow the kernel policy.  Duplicate points are dropped with a warning
    since coincident means make the EM responsibilities ill conditioned.
    """
    _, first = np.unique(points.points, axis=0, return_index=True)
    if len(first) != points.count:
        logger.warning(
            "dropped %d duplicate representative points", points.count - len(first)
        )
        pts = points.points[np.sort(first)]
    else:
        pts = points.points.copy()
    k, q = pts.shape
    weights = np.full(k, 1.0 / k)
    if isinstance(policy, Homogeneous):
        scale = policy.scale if policy.scale is not None else _homogeneous_scale(k, q, target)
        if scale <= 0:
            raise ValueError("homogeneous scale must be positive")
        covs = np.tile(scale**2 * np.eye(q), (k, 1, 1))
        return MixtureModel(weights, pts, covs)
    if isinstance(policy, Inscribed):
        if k == 1:
            logger.warning("inscribed policy with one component; using homogeneous scale")
            scale = _homogeneous_scale(k, q, target)
            return MixtureModel(weights, pts, (scale**2 * np.eye(q))[None])
        radii = 0.5 * _nearest_neighbor_distances(pts)
        covs = radii[:, None, None] ** 2 * np.eye(q)
        return MixtureModel(weights, pts, covs)
    if isinstance(policy, Adaptive):
        config = em_config or EMConfig()
        aux = _auxiliary_sample(target, k, config)
        if points.provenance == PROVENANCE_KMEANS or config.initializer == "cell":
            initial = _cluster_scatter_init(pts, aux, target)
        elif config.initializer == "local":
            # half the local inter-point spacing, (K p)^(-1/q), measured in
            # per-axis standardized units so unequal axis scales survive
            std = np.asarray(target.std(), dtype=float)
            dens = np.maximum(target.pdf(pts) * np.prod(std), 1e-300)
            sig = 0.5 * (k * dens) ** (-1.0 / q)
            initial = sig[:, None, None] ** 2 * np.diag(std**2)
        elif config.initializer == "scale":
            scale = config.initial_scale or _homogeneous_scale(k, q, target)
            initial = np.tile(scale**2 * np.eye(q), (k, 1, 1))
        else:
            raise ValueError(f"unknown EM initializer {config.initializer!r}")
        result = fit_covariances_em(pts, initial, aux, config)
        return MixtureModel(weights, pts, result.covariances)
    raise TypeError(f"unknown kernel policy {policy!r}")


def _auxiliary_sample(target: DistributionSpec, k: int, config: EMConfig) -> np.ndarray:
    m = config.auxiliary_count or min(200 * k, 1_000_000)
    if config.sampler == "halton":
        return transform_to_target(generate_halton(m, target.dimension, skip=10), target).points
    if config.sampler == "random":
        rng = np.random.default_rng(config.seed)
        return np.atleast_2d(target.sample(m, rng))
    raise ValueError(f"unknown EM sampler {config.sampler!r}")


def _cluster_scatter_init(points, aux, target):
    """Initial covariances from per-cluster scatter about each center."""
    k, q = points.shape
    d2 = ((aux[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    fallback = _homogeneous_scale(k, q, target) ** 2 * np.eye(q)
    covs = np.empty((k, q, q))
    for j in range(k):
        mask = labels == j
        if mask.sum() >= 2:
            d = aux[mask] - points[j]
            covs[j] = d.T @ d / mask.sum()
        else:
            covs[j] = fallback
    return regularize_covariance(covs)
