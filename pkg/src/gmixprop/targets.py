"""Input-distribution specifications.

A target is either a product of independent 1-D marginals or a full
multivariate Gaussian.  Targets know how to sample themselves, evaluate
their density, and (for independent marginals) evaluate and invert each
marginal CDF.  Quantile inversion falls back to bisection plus a Newton
polish when no closed form is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NumericalInversionError, SPDViolationError

INVERSION_TOL = 1e-12


def invert_cdf(cdf, u, bracket, pdf=None, tol=INVERSION_TOL, max_bisect=200):
    """Solve cdf(x) = u by bisection, then polish with Newton if a pdf is given.

    ``bracket`` is a (lo, hi) pair with cdf(lo) <= u <= cdf(hi).  Infinite
    bracket ends are first shrunk by doubling from 0.  Raises
    :class:`NumericalInversionError` when no finite solution exists.
    """
    lo, hi = bracket
    if not 0.0 <= u <= 1.0:
        raise NumericalInversionError(f"quantile {u} outside [0, 1]")
    # expand/clip infinite bracket ends to finite values
    if not math.isfinite(lo):
        lo = -1.0
        while cdf(lo) > u:
            lo *= 2.0
            if lo < -1e300:
                raise NumericalInversionError(f"no finite lower solution for u={u}")
    if not math.isfinite(hi):
        hi = 1.0
        while cdf(hi) < u:
            hi *= 2.0
            if hi > 1e300:
                raise NumericalInversionError(f"no finite upper solution for u={u}")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)):
            break
    x = 0.5 * (lo + hi)
    if pdf is not None:
        for _ in range(8):
            err = cdf(x) - u
            if abs(err) <= tol:
                break
            slope = pdf(x)
            if slope <= 0.0 or not math.isfinite(slope):
                break
            step = err / slope
            x_new = min(max(x - step, lo), hi)
            if x_new == x:
                break
            x = x_new
    if abs(cdf(x) - u) > max(tol, 1e-9):
        raise NumericalInversionError(f"CDF inversion stalled at u={u} (residual {cdf(x) - u:.3e})")
    return x


class Marginal:
    """One-dimensional marginal distribution.

    Subclasses provide ``cdf``; ``ppf`` defaults to numeric inversion.
    """

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        return invert_cdf(self.cdf, float(u), self.support(), pdf=self._pdf_or_none())

    def _pdf_or_none(self):
        try:
            self.pdf(0.0)
        except NotImplementedError:
            return None
        except Exception:
            pass
        return self.pdf

    def support(self):
        return (-math.inf, math.inf)

    def sample(self, n, rng):
        u = rng.random(n)
        return np.array([self.ppf(v) for v in u])

    def mean(self):
        raise NotImplementedError

    def std(self):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NormalMarginal(Marginal):
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def cdf(self, x):
        return ndtr((np.asarray(x) - self.loc) / self.scale)

    def pdf(self, x):
        z = (np.asarray(x) - self.loc) / self.scale
        return np.exp(-0.5 * z * z) / (self.scale * math.sqrt(2.0 * math.pi))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise NumericalInversionError("normal quantile undefined at u in {0, 1}")
        return self.loc + self.scale * ndtri(u)

    def sample(self, n, rng):
        return self.loc + self.scale * rng.standard_normal(n)

    def mean(self):
        return self.loc

    def std(self):
        return self.scale

    def to_dict(self):
        return {"kind": "normal", "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class UniformMarginal(Marginal):
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ValueError("upper must exceed lower")

    def cdf(self, x):
        return np.clip((np.asarray(x) - self.lower) / (self.upper - self.lower), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x)
        inside = (x >= self.lower) & (x <= self.upper)
        return np.where(inside, 1.0 / (self.upper - self.lower), 0.0)

    def ppf(self, u):
        return self.lower + (self.upper - self.lower) * np.asarray(u, dtype=float)

    def support(self):
        return (self.lower, self.upper)

    def sample(self, n, rng):
        return rng.uniform(self.lower, self.upper, n)

    def mean(self):
        return 0.5 * (self.lower + self.upper)

    def std(self):
        return (self.upper - self.lower) / math.sqrt(12.0)

    def to_dict(self):
        return {"kind": "uniform", "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class ExponentialMarginal(Marginal):
    rate: float = 1.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def cdf(self, x):
        x = np.asarray(x)
        return np.where(x < 0.0, 0.0, 1.0 - np.exp(-self.rate * np.maximum(x, 0.0)))

    def pdf(self, x):
        x = np.asarray(x)
        return np.where(x < 0.0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u >= 1.0):
            raise NumericalInversionError("exponential quantile undefined at u=1")
        return -np.log1p(-u) / self.rate

    def support(self):
        return (0.0, math.inf)

    def sample(self, n, rng):
        return rng.exponential(1.0 / self.rate, n)

    def mean(self):
        return 1.0 / self.rate

    def std(self):
        return 1.0 / self.rate

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class CustomMarginal(Marginal):
    """Marginal given by an arbitrary CDF; quantiles are inverted numerically."""

    cdf_fn: object
    pdf_fn: object = None
    lower: float = -math.inf
    upper: float = math.inf
    mean_value: float = 0.0
    std_value: float = 1.0

    def cdf(self, x):
        return self.cdf_fn(x)

    def pdf(self, x):
        if self.pdf_fn is None:
            raise NotImplementedError
        return self.pdf_fn(x)

    def ppf(self, u):
        return invert_cdf(self.cdf_fn, float(u), (self.lower, self.upper), pdf=self.pdf_fn)

    def support(self):
        return (self.lower, self.upper)

    def mean(self):
        return self.mean_value

    def std(self):
        return self.std_value

    def to_dict(self):
        raise ValueError("custom marginals are not serializable")


@dataclass(frozen=True)
class IndependentMarginals:
    """Product distribution of independent 1-D marginals."""

    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValueError("at least one marginal required")

    @property
    def dimension(self) -> int:
        return len(self.marginals)

    def sample(self, n, rng):
        cols = [m.sample(n, rng) for m in self.marginals]
        return np.column_stack(cols)

    def cdf(self, theta):
        """Joint CDF, the product of marginal CDFs.  ``theta``: (..., q)."""
        theta = np.asarray(theta, dtype=float)
        out = np.ones(theta.shape[:-1])
        for j, m in enumerate(self.marginals):
            out = out * m.cdf(theta[..., j])
        return out

    def marginal_cdfs(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([m.cdf(theta[..., j]) for j, m in enumerate(self.marginals)], axis=-1)

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.ones(theta.shape[:-1])
        for j, m in enumerate(self.marginals):
            out = out * m.pdf(theta[..., j])
        return out

    def mean(self):
        return np.array([m.mean() for m in self.marginals])

    def std(self):
        return np.array([m.std() for m in self.marginals])

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        ok = np.ones(theta.shape[:-1], dtype=bool)
        for j, m in enumerate(self.marginals):
            lo, hi = m.support()
            ok &= (theta[..., j] >= lo) & (theta[..., j] <= hi)
        return ok

    def to_dict(self):
        return {"kind": "independent", "marginals": [m.to_dict() for m in self.marginals]}


@dataclass(frozen=True)
class MultivariateGaussian:
    """Gaussian with full covariance; validated symmetric positive definite."""

    mean_vector: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean_vector, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise SPDViolationError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SPDViolationError(f"covariance not positive definite: {exc}") from exc
        object.__setattr__(self, "mean_vector", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", chol)

    @property
    def dimension(self) -> int:
        return self.mean_vector.size

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dimension))
        return self.mean_vector + z @ self.cholesky.T

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        d = np.atleast_2d(theta) - self.mean_vector
        w = np.linalg.solve(self.cholesky, d.T).T
        maha = np.einsum("ij,ij->i", w, w)
        logdet = 2.0 * np.sum(np.log(np.diag(self.cholesky)))
        out = np.exp(-0.5 * (maha + logdet + self.dimension * math.log(2.0 * math.pi)))
        return float(out[0]) if single else out

    def mean(self):
        return self.mean_vector.copy()

    def std(self):
        return np.sqrt(np.diag(self.covariance))

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.ones(theta.shape[:-1], dtype=bool)

    def to_dict(self):
        return {
            "kind": "gaussian",
            "mean": self.mean_vector.tolist(),
            "covariance": self.covariance.tolist(),
        }


# Union accepted anywhere a target distribution is expected.
DistributionSpec = IndependentMarginals | MultivariateGaussian

_MARGINAL_KINDS = {
    "normal": lambda d: NormalMarginal(d["loc"], d["scale"]),
    "uniform": lambda d: UniformMarginal(d["lower"], d["upper"]),
    "exponential": lambda d: ExponentialMarginal(d["rate"]),
}


def distribution_from_dict(data: dict) -> DistributionSpec:
    kind = data.get("kind")
    if kind == "independent":
        margs = [_MARGINAL_KINDS[m["kind"]](m) for m in data["marginals"]]
        return IndependentMarginals(tuple(margs))
    if kind == "gaussian":
        return MultivariateGaussian(np.asarray(data["mean"]), np.asarray(data["covariance"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def standard_gaussian(dimension: int) -> MultivariateGaussian:
    return MultivariateGaussian(np.zeros(dimension), np.eye(dimension))
