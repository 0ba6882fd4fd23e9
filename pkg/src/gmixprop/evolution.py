"""Propagation of a mixture through dynamics, component by component.

Every mixture component is pushed through the model via its cubature
points and then summarized again as a Gaussian by its propagated mean
and covariance.  That re-Gaussianization is the scheme's core
approximation: it keeps multi-step evolution closed under the mixture
representation.  Component weights are never touched.

Three propagation modes:

* static maps: one cubature pass per component;
* deterministic flows with random initial conditions: the 2q cubature
  points of each t0 component travel along continuous trajectories, so a
  whole evolution costs 2q * K model runs regardless of how many
  snapshots are requested;
* additive-noise SDEs: per time step, each component's 2n state-space
  cubature points move through the drift alone (the noise increments
  average to zero in the mean), while sampled Wiener increments inflate
  the covariance.  Increments are drawn in antithetic pairs, which makes
  the per-component means exactly independent of the noise seed and
  sample count.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cubature import batch_cubature_points, batch_moments
from .dynamics import ODEFlow, SDEModel, StaticMap, integrate_flow
from .errors import NonFiniteMapError
from .grids import DensityGrid, GridSpec
from .mixture import MixtureModel, regularize_covariance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvolutionTrace:
    """Mixture snapshots at strictly increasing times."""

    times: np.ndarray
    snapshots: tuple
    provenance: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if len(times) != len(self.snapshots):
            raise ValueError("one snapshot required per time")
        counts = {s.count for s in self.snapshots}
        dims = {s.dimension for s in self.snapshots}
        if len(counts) > 1 or len(dims) > 1:
            raise ValueError("snapshots must share component count and dimension")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        meta = {
            "times": self.times.tolist(),
            "provenance": self.provenance,
            "snapshots": len(self.snapshots),
        }
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        for i, snap in enumerate(self.snapshots):
            snap.save_json(os.path.join(directory, f"snapshot_{i}.json"))

    @classmethod
    def load(cls, directory) -> "EvolutionTrace":
        with open(os.path.join(directory, "meta.json")) as fh:
            meta = json.load(fh)
        snaps = [
            MixtureModel.load_json(os.path.join(directory, f"snapshot_{i}.json"))
            for i in range(meta["snapshots"])
        ]
        return cls(np.asarray(meta["times"]), tuple(snaps), meta.get("provenance", ""))


def _checked_images(flat_images: np.ndarray, points_per_component: int) -> None:
    bad = ~np.all(np.isfinite(flat_images), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise NonFiniteMapError(
            f"model returned non-finite value for component {row // points_per_component}",
            point=None,
        )


def _snapshot(weights: np.ndarray, means: np.ndarray, covs: np.ndarray) -> MixtureModel:
    # A deterministic observable (all cubature images identical) gives an
    # exactly-zero scatter that no relative eigenvalue floor can fix; give
    # those components a tiny isotropic width so the snapshot stays a
    # valid mixture.
    trace = np.einsum("kii->k", covs)
    dead = trace <= 0.0
    if np.any(dead):
        scale = float(trace.max()) if trace.max() > 0.0 else 1.0
        covs = covs.copy()
        covs[dead] += 1e-12 * scale * np.eye(covs.shape[-1])
        logger.info("floored %d degenerate snapshot component(s)", int(dead.sum()))
    covs = regularize_covariance(covs)
    return MixtureModel(weights, means, covs)


def evolve_static(model: StaticMap, input_mixture: MixtureModel) -> MixtureModel:
    """Push a mixture through a static map; weights carry over unchanged."""
    if input_mixture.dimension != model.input_dim:
        raise ValueError("mixture dimension does not match map input dimension")
    k = input_mixture.count
    q = input_mixture.dimension
    pts = batch_cubature_points(input_mixture.means, input_mixture.cholesky)
    images = np.asarray(model(pts.reshape(k * 2 * q, q)), dtype=float)
    _checked_images(images, 2 * q)
    means, covs = batch_moments(images.reshape(k, 2 * q, -1))
    return _snapshot(input_mixture.weights, means, covs)


def _integrate_chunked(field_fn, states, t0, t1, step, threads):
    if threads <= 1 or states.shape[0] < 2 * threads:
        return integrate_flow(field_fn, states, t0, t1, step)
    chunks = np.array_split(np.arange(states.shape[0]), threads)
    out = np.empty_like(states)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(integrate_flow, field_fn, states[idx], t0, t1, step)
            for idx in chunks
        ]
        for idx, fut in zip(chunks, futures):
            out[idx] = fut.result()
    return out


def evolve_conservative(
    model: ODEFlow,
    input_mixture: MixtureModel,
    times,
    threads: int = 1,
    provenance: str = "",
) -> EvolutionTrace:
    """Deterministic flow of a random initial condition.

    The 2q cubature points of every input component are embedded into the
    full state and integrated once along the whole time grid; snapshots
    re-summarize the (optionally observed) trajectory values per component.
    """
    expected = model.input_dim if model.input_dim is not None else model.state_dim
    if input_mixture.dimension != expected:
        raise ValueError("mixture dimension does not match model input dimension")
    times = np.asarray(list(times), dtype=float)
    k = input_mixture.count
    q = input_mixture.dimension
    pts = batch_cubature_points(input_mixture.means, input_mixture.cholesky)
    states = model.initial_state(pts.reshape(k * 2 * q, q))
    snaps = []
    t_prev = times[0]
    for j, t in enumerate(times):
        if j > 0:
            states = _integrate_chunked(model.field_fn, states, t_prev, t, model.step, threads)
            t_prev = t
        outputs = model.output(states)
        _checked_images(outputs, 2 * q)
        means, covs = batch_moments(outputs.reshape(k, 2 * q, -1))
        snaps.append(_snapshot(input_mixture.weights, means, covs))
    return EvolutionTrace(times, tuple(snaps), provenance)


def _noise_pairs(noise_samples: int) -> int:
    if noise_samples < 1:
        raise ValueError("noise_samples must be at least 1")
    if noise_samples % 2:
        logger.info("noise_samples rounded up to %d to keep antithetic pairs", noise_samples + 1)
        noise_samples += 1
    return noise_samples // 2


def evolve_markov(
    model: SDEModel,
    input_mixture: MixtureModel,
    times,
    noise_samples: int = 20,
    seed: int = 0,
    threads: int = 1,
    snapshot_every: int = 1,
    provenance: str = "",
) -> EvolutionTrace:
    """Additive-noise SDE evolution on a uniform time grid.

    Per step and component, the 2n cubature points move through the drift
    alone; the noise enters only the covariance, as the average outer
    product of ``noise_samples`` sampled increments (antithetic pairs, so
    the mean path is exactly noise-free).  The updated components seed the
    next step directly; no new mixture is re-fitted between steps.
    """
    if input_mixture.dimension != model.state_dim:
        raise ValueError("mixture dimension does not match SDE state dimension")
    times = np.asarray(list(times), dtype=float)
    steps = np.diff(times)
    if len(steps) == 0:
        raise ValueError("need at least two times")
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=0.0, atol=1e-9 * max(1.0, abs(dt))):
        raise ValueError("markov evolution requires a uniform time grid")
    pairs = _noise_pairs(noise_samples)
    noisy = not model.noise_free()
    chol_d = np.linalg.cholesky(model.noise_intensity) if noisy else None
    a_mat = model.diffusion
    k = input_mixture.count
    n = model.state_dim
    weights = input_mixture.weights
    means = input_mixture.means.copy()
    covs = input_mixture.covariances.copy()
    chols = input_mixture.cholesky.copy()
    snaps = [_snapshot(weights, means, covs)]
    recorded = [times[0]]
    for j in range(1, len(times)):
        pts = batch_cubature_points(means, chols).reshape(k * 2 * n, n)
        moved = _integrate_chunked(model.drift, pts, times[j - 1], times[j], model.step, threads)
        _checked_images(moved, 2 * n)
        means, covs = batch_moments(moved.reshape(k, 2 * n, n))
        if noisy:
            rng = np.random.default_rng([seed, j])
            raw = rng.standard_normal((k, pairs, model.noise_dim))
            incr = math.sqrt(dt) * raw @ chol_d.T
            kicks = incr @ a_mat.T
            covs = covs + np.einsum("kpi,kpj->kij", kicks, kicks) / pairs
        covs = regularize_covariance(covs)
        chols = np.linalg.cholesky(covs)
        if j % snapshot_every == 0 or j == len(times) - 1:
            snaps.append(MixtureModel(weights, means, covs, _cholesky=chols))
            recorded.append(times[j])
    return EvolutionTrace(np.asarray(recorded), tuple(snaps), provenance)


def assemble_density(trace: EvolutionTrace, index: int, grid: GridSpec) -> DensityGrid:
    """Density grid of one snapshot."""
    return trace.snapshots[index].density_grid(grid)


def second_order_statistics(trace: EvolutionTrace) -> tuple[np.ndarray, np.ndarray]:
    """Mixture mean vector and covariance matrix at every snapshot time."""
    means = np.stack([s.mean() for s in trace.snapshots])
    covs = np.stack([s.covariance() for s in trace.snapshots])
    return means, covs
