"""Reference methods: sample-trajectory propagation, KDE, grid metrics.

These exist to reproduce the comparisons the mixture scheme is judged
against.  Sample clouds ride through exactly the same integrator as the
mixture propagation so the comparison isolates the representation, not
the discretization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ODEFlow, SDEModel, StaticMap, integrate_flow
from .errors import IntegrationBlowupError
from .grids import DensityGrid, GridSpec, check_same_grid

logger = logging.getLogger(__name__)

ORIGIN_MC = "mc"
ORIGIN_QMC = "qmc"


@dataclass(frozen=True)
class SampleCloud:
    """Equal-weight sample ensemble."""

    samples: np.ndarray
    origin: str = ORIGIN_MC

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("cloud needs at least one sample")
        pts.setflags(write=False)
        object.__setattr__(self, "samples", pts)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def covariance(self) -> np.ndarray:
        d = self.samples - self.mean()
        return d.T @ d / self.count


def propagate_samples(model, cloud: SampleCloud, times=None, seed: int = 0):
    """Push every sample through the model.

    Static maps return a single cloud.  Flows and SDEs return one cloud
    per requested time (observables applied for flows); SDE samples get
    Euler-Maruyama noise increments per step.  Samples whose trajectory
    blows up are dropped with a warning and counted in the log.
    """
    if isinstance(model, StaticMap):
        return SampleCloud(model(cloud.samples), cloud.origin)
    times = np.asarray(list(times), dtype=float)
    states = cloud.samples.copy()
    if isinstance(model, ODEFlow):
        states = model.initial_state(states)
        out = [SampleCloud(model.output(states), cloud.origin)]
        for t0, t1 in zip(times[:-1], times[1:]):
            states = _integrate_dropping(model.field_fn, states, t0, t1, model.step)
            out.append(SampleCloud(model.output(states), cloud.origin))
        return out
    if isinstance(model, SDEModel):
        rng = np.random.default_rng(seed)
        chol_d = None if model.noise_free() else np.linalg.cholesky(model.noise_intensity)
        out = [SampleCloud(states, cloud.origin)]
        for j in range(1, len(times)):
            dt = times[j] - times[j - 1]
            states = _integrate_dropping(model.drift, states, times[j - 1], times[j], model.step)
            if chol_d is not None:
                raw = rng.standard_normal((states.shape[0], model.noise_dim))
                states = states + math.sqrt(dt) * raw @ chol_d.T @ model.diffusion.T
            out.append(SampleCloud(states, cloud.origin))
        return out
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _integrate_dropping(field_fn, states, t0, t1, step):
    try:
        return integrate_flow(field_fn, states, t0, t1, step)
    except IntegrationBlowupError:
        # retry row by row so only the diverging samples are excluded
        keep = []
        kept_rows = []
        for i in range(states.shape[0]):
            try:
                kept_rows.append(integrate_flow(field_fn, states[i : i + 1], t0, t1, step)[0])
                keep.append(i)
            except IntegrationBlowupError:
                continue
        dropped = states.shape[0] - len(keep)
        logger.warning("dropped %d diverging sample(s) in [%g, %g]", dropped, t0, t1)
        if not keep:
            raise
        return np.asarray(kept_rows)


def kde_density(cloud: SampleCloud, bandwidth: float, grid: GridSpec) -> DensityGrid:
    """Gaussian-kernel density estimate with a single isotropic bandwidth."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    pts = grid.points()
    q = cloud.dimension
    norm = 1.0 / (cloud.count * (2.0 * math.pi * bandwidth**2) ** (q / 2.0))
    values = np.zeros(pts.shape[0])
    for s in cloud.samples:
        d2 = ((pts - s) ** 2).sum(axis=1)
        values += np.exp(-0.5 * d2 / bandwidth**2)
    return DensityGrid(grid, norm * values.reshape(grid.shape))


_NORMS = ("l1", "l2", "linf")


def grid_error(a: DensityGrid, b: DensityGrid, norm: str = "l2") -> float:
    """Cell-volume-weighted norm of the difference between two grids."""
    check_same_grid(a, b)
    diff = a.values - b.values
    vol = a.spec.cell_volume
    norm = norm.lower()
    if norm == "l1":
        return float(np.abs(diff).sum() * vol)
    if norm == "l2":
        return float(math.sqrt((diff**2).sum() * vol))
    if norm == "linf":
        return float(np.abs(diff).max())
    raise ValueError(f"norm must be one of {_NORMS}")


def count_modes(values, rel_floor: float = 0.01) -> int:
    """Number of strict local maxima above ``rel_floor`` of the global max.

    1-D arrays use the two neighbors; 2-D arrays use all eight.  The floor
    suppresses numerical-noise bumps; the count is invariant to rescaling
    the values by any positive constant.
    """
    v = values.values if isinstance(values, DensityGrid) else np.asarray(values, dtype=float)
    floor = rel_floor * v.max()
    if v.ndim == 1:
        inner = v[1:-1]
        is_max = (inner > v[:-2]) & (inner > v[2:]) & (inner > floor)
        return int(is_max.sum())
    if v.ndim == 2:
        c = v[1:-1, 1:-1]
        neighbors = [
            v[:-2, :-2], v[:-2, 1:-1], v[:-2, 2:],
            v[1:-1, :-2], v[1:-1, 2:],
            v[2:, :-2], v[2:, 1:-1], v[2:, 2:],
        ]
        is_max = c > floor
        for nb in neighbors:
            is_max &= c > nb
        return int(is_max.sum())
    raise ValueError("mode counting implemented for 1-D and 2-D grids")
