"""Dynamical model abstractions and benchmark systems.

Three model flavors: a static vector map, a deterministic ODE flow
integrated by fixed-step RK4, and an SDE with additive white-noise
excitation.  Vector fields and maps are batched: they take an (m, n)
state block and return the (m, n) derivative or image, which keeps
many-trajectory propagation in vectorized numpy.

Benchmark systems ship with closed-form density oracles where the
stationary or transformed density is known.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationBlowupError
from .grids import DensityGrid, GridSpec

logger = logging.getLogger(__name__)


# -- model containers --------------------------------------------------------


@dataclass(frozen=True)
class StaticMap:
    """Time-independent vector map theta -> x."""

    fn: object
    input_dim: int
    output_dim: int
    name: str = "static"

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(np.asarray(theta, dtype=float)))


@dataclass(frozen=True)
class ODEFlow:
    """Deterministic flow dz/dt = field(t, z) with fixed-step RK4.

    ``embed`` maps a mixture-space input vector to the full initial state
    (identity when the mixture already lives in state space); ``observe``
    projects states to the quantities of interest.
    """

    field_fn: object
    state_dim: int
    step: float
    input_dim: int | None = None
    embed: object = None
    observe: object = None
    name: str = "ode"

    def initial_state(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if self.embed is None:
            return theta
        return np.asarray(self.embed(theta), dtype=float)

    def output(self, states: np.ndarray) -> np.ndarray:
        if self.observe is None:
            return states
        out = np.asarray(self.observe(states), dtype=float)
        return out[:, None] if out.ndim == 1 else out


@dataclass(frozen=True)
class SDEModel:
    """Ito model dX = drift(t, X) dt + diffusion dB with additive noise.

    The Wiener increment over dt has covariance ``noise_intensity * dt``;
    ``diffusion`` maps the noise space into state space and must not depend
    on the state.
    """

    drift: object
    state_dim: int
    diffusion: np.ndarray
    noise_intensity: np.ndarray
    step: float
    name: str = "sde"

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        d = np.atleast_2d(np.asarray(self.noise_intensity, dtype=float))
        if a.shape[0] != self.state_dim or d.shape != (a.shape[1], a.shape[1]):
            raise ValueError("diffusion/noise-intensity shapes inconsistent")
        object.__setattr__(self, "diffusion", a)
        object.__setattr__(self, "noise_intensity", d)

    @property
    def noise_dim(self) -> int:
        return self.diffusion.shape[1]

    def noise_free(self) -> bool:
        return not np.any(self.noise_intensity)


@dataclass(frozen=True)
class AnalyticOracle:
    """Closed-form density used to score approximate solutions."""

    pdf: object
    name: str = "oracle"

    def density(self, x) -> np.ndarray:
        return np.asarray(self.pdf(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)

    def grid(self, spec: GridSpec) -> DensityGrid:
        return DensityGrid(spec, self.density(spec.points()).reshape(spec.shape))


# -- fixed-step integration ---------------------------------------------------


def _substep_count(t0: float, t1: float, step: float) -> int:
    span = t1 - t0
    if span <= 0:
        raise ValueError("t1 must exceed t0")
    n = round(span / step)
    if n < 1 or abs(n * step - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"step {step} does not divide interval [{t0}, {t1}]")
    return int(n)


def integrate_flow(field_fn, states: np.ndarray, t0: float, t1: float, step: float) -> np.ndarray:
    """RK4 endpoint of every row of ``states`` from t0 to t1.

    Raises :class:`IntegrationBlowupError` with the offending time stamp
    if any state goes non-finite.
    """
    y = np.atleast_2d(np.asarray(states, dtype=float)).copy()
    n = _substep_count(t0, t1, step)
    t = t0
    for _ in range(n):
        k1 = field_fn(t, y)
        k2 = field_fn(t + 0.5 * step, y + 0.5 * step * k1)
        k3 = field_fn(t + 0.5 * step, y + 0.5 * step * k2)
        k4 = field_fn(t + step, y + step * k3)
        y += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += step
        if not np.all(np.isfinite(y)):
            raise IntegrationBlowupError(f"non-finite state at t={t:.6g}", time=t)
    return y


def integrate_path(field_fn, states: np.ndarray, times, step: float) -> list[np.ndarray]:
    """States at each requested time, starting from times[0]."""
    times = list(times)
    y = np.atleast_2d(np.asarray(states, dtype=float)).copy()
    out = [y.copy()]
    for t0, t1 in zip(times[:-1], times[1:]):
        y = integrate_flow(field_fn, y, t0, t1, step)
        out.append(y.copy())
    return out


# -- benchmark: linear transformation -----------------------------------------


def linear_map_model() -> tuple[StaticMap, AnalyticOracle]:
    """x1 = 3 a + 5 b, x2 = a + 2 b on a standard bivariate Gaussian input.

    The inverse has unit Jacobian determinant, so the output density is the
    standard Gaussian evaluated at (2 x1 - 5 x2, -x1 + 3 x2).
    """

    def fn(theta):
        return np.column_stack([3.0 * theta[:, 0] + 5.0 * theta[:, 1],
                                theta[:, 0] + 2.0 * theta[:, 1]])

    def pdf(x):
        a = 2.0 * x[:, 0] - 5.0 * x[:, 1]
        b = -x[:, 0] + 3.0 * x[:, 1]
        return np.exp(-0.5 * (a * a + b * b)) / (2.0 * math.pi)

    return StaticMap(fn, 2, 2, "linear-map"), AnalyticOracle(pdf, "linear-map")


def nonlinear_map_model() -> tuple[StaticMap, AnalyticOracle]:
    """x1 = sqrt(a^2 + b^2), x2 = a on a standard bivariate Gaussian input.

    The output density is (1/pi) x1 / sqrt(x1^2 - x2^2) exp(-x1^2 / 2) on
    the wedge {x1 > 0, |x2| < x1}, zero elsewhere (including the boundary,
    where the Jacobian is singular but carries no probability mass).
    """

    def fn(theta):
        return np.column_stack([np.hypot(theta[:, 0], theta[:, 1]), theta[:, 0]])

    def pdf(x):
        x1 = x[:, 0]
        x2 = x[:, 1]
        r2 = x1 * x1 - x2 * x2
        # the boundary |x2| = x1 carries no mass but has a singular
        # Jacobian; a relative band keeps float-noise cells at zero
        inside = (x1 > 0.0) & (r2 > 1e-9 * x1 * x1)
        out = np.zeros(len(x))
        out[inside] = (x1[inside] / (math.pi * np.sqrt(r2[inside]))) * np.exp(
            -0.5 * x1[inside] ** 2
        )
        return out

    return StaticMap(fn, 2, 2, "nonlinear-map"), AnalyticOracle(pdf, "nonlinear-map")


# -- benchmark: Duffing oscillator --------------------------------------------

DUFFING_STATIONARY_NORM = 47.9724


def duffing_model(
    zeta: float = 0.2,
    omega0: float = 1.0,
    epsilon: float = 0.10,
    gamma: float = -1.0,
    noise_intensity: float = 0.8,
    step: float = 0.005,
) -> tuple[SDEModel, AnalyticOracle]:
    """Randomly excited Duffing oscillator with its stationary density.

    Drift (x2, -2 zeta omega0 x2 - omega0^2 gamma x1 - omega0^2 eps x1^3)
    plus white noise on the velocity.  The stationary density (bimodal in
    x1 for gamma < 0) is only valid for the nominal parameter set; its
    normalization constant is taken verbatim and validated by quadrature
    in the tests rather than recomputed.  noise_intensity = 2 * (2 zeta
    omega0) makes the density below stationary.
    """
    if zeta <= 0 or omega0 <= 0:
        raise ValueError("zeta and omega0 must be positive")

    def drift(t, x):
        x1 = x[:, 0]
        x2 = x[:, 1]
        return np.column_stack(
            [x2, -2.0 * zeta * omega0 * x2 - omega0**2 * gamma * x1 - omega0**2 * epsilon * x1**3]
        )

    def pdf(x):
        x1 = x[:, 0]
        x2 = x[:, 1]
        expo = 0.5 * x1**2 - x1**4 / 40.0 - 0.5 * x2**2
        return np.exp(expo) / (DUFFING_STATIONARY_NORM * math.sqrt(2.0 * math.pi))

    model = SDEModel(
        drift,
        state_dim=2,
        diffusion=np.array([[0.0], [1.0]]),
        noise_intensity=np.array([[noise_intensity]]),
        step=step,
        name="duffing",
    )
    return model, AnalyticOracle(pdf, "duffing-stationary")


# -- benchmark: hysteretic shear frame -----------------------------------------

# Lumped story masses in kg, first story at index 0.
DEFAULT_STORY_MASSES = 1.0e5 * np.array([0.5, 1.1, 1.1, 1.0, 1.0, 1.1, 1.3, 1.2, 1.2, 1.2])


@dataclass(frozen=True)
class BoucWenParams:
    """Hysteresis law dz/dt = A dx - beta |dx| |z|^(n-1) z - gamma dx |z|^n."""

    alpha: float = 0.01       # post- to pre-yield stiffness ratio
    amplitude: float = 1.2    # A
    beta: float = 1.4
    gamma: float = 0.2
    exponent: float = 1.0     # n


@dataclass(frozen=True)
class GroundMotionRecord:
    """Uniformly sampled ground acceleration history."""

    dt: float
    accelerations: np.ndarray
    name: str = "record"

    def __post_init__(self):
        acc = np.asarray(self.accelerations, dtype=float).ravel()
        if acc.size == 0:
            raise ValueError("record must not be empty")
        if not np.all(np.isfinite(acc)) or self.dt <= 0:
            raise ValueError("record entries and dt must be finite and positive")
        acc.setflags(write=False)
        object.__setattr__(self, "accelerations", acc)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.accelerations.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.accelerations.size - 1)

    @property
    def pga(self) -> float:
        return float(np.abs(self.accelerations).max())

    def scaled(self, pga: float) -> "GroundMotionRecord":
        factor = pga / self.pga
        return GroundMotionRecord(self.dt, self.accelerations * factor, self.name)

    def accel_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.accelerations, left=0.0, right=0.0))

    def strong_motion_window(self, lo: float = 0.05, hi: float = 0.75) -> tuple[float, float]:
        """Times bracketing the [lo, hi] fractions of cumulative Arias intensity."""
        cum = np.cumsum(self.accelerations**2)
        cum = cum / cum[-1]
        t = self.times
        return float(t[np.searchsorted(cum, lo)]), float(t[np.searchsorted(cum, hi)])

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.accelerations])
        np.savetxt(path, data, delimiter=",", header="t,accel", comments="")

    @classmethod
    def from_csv(cls, path) -> "GroundMotionRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        t = data[:, 0]
        dts = np.diff(t)
        if dts.size and not np.allclose(dts, dts[0], rtol=1e-6, atol=1e-12):
            raise ValueError(f"{path}: time column is not uniformly sampled")
        return cls(float(dts[0]) if dts.size else 1.0, data[:, 1], name=str(path))


def synthetic_record(
    duration: float = 20.0,
    dt: float = 0.02,
    seed: int = 2011,
    pga: float = 2.0,
) -> GroundMotionRecord:
    """Band-limited sum of sinusoids under a rise/sustain/decay envelope.

    A deterministic stand-in for a recorded accelerogram: 40 components
    with frequencies in [0.5, 10] Hz and random phases, scaled to the
    requested peak ground acceleration.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    freqs = rng.uniform(0.5, 10.0, 40)
    phases = rng.uniform(0.0, 2.0 * math.pi, 40)
    amps = rng.uniform(0.3, 1.0, 40) / np.sqrt(freqs)
    a = np.sum(
        amps[:, None] * np.sin(2.0 * math.pi * freqs[:, None] * t[None, :] + phases[:, None]),
        axis=0,
    )
    rise, decay_from = 0.2 * duration, 0.6 * duration
    env = np.minimum((t / rise) ** 2, 1.0)
    env = np.where(t > decay_from, np.exp(-0.35 * (t - decay_from)), env)
    a *= env
    a *= pga / np.abs(a).max()
    return GroundMotionRecord(dt, a, name=f"synthetic(seed={seed})")


def bouc_wen_frame_model(
    record: GroundMotionRecord,
    masses: np.ndarray | None = None,
    params: BoucWenParams = BoucWenParams(),
    damping_mass: float = 0.01,
    damping_stiffness: float = 0.005,
    first_story_height: float = 4.0,
    story_height: float = 3.0,
    column_side: float = 0.5,
    columns_per_story: int = 3,
    reference_pga: float = 2.0,
    step: float = 0.005,
) -> ODEFlow:
    """Ten-story hysteretic shear frame under scaled ground motion.

    State layout (32 entries per row): [E, PGA, x(10), v(10), z(10)] with
    displacements relative to the ground.  Young's modulus E and the peak
    ground acceleration enter through the state so that random parameters
    ride along as constants of the motion (zero derivative).  Story
    stiffness is ``columns_per_story * 12 E I / h^3`` per story (rigid
    beams, fixed-fixed columns); damping is Rayleigh in the initial
    stiffness; the restoring force splits into an elastic fraction
    ``alpha k x`` plus the hysteretic part ``(1 - alpha) k z``.
    """
    m = np.asarray(DEFAULT_STORY_MASSES if masses is None else masses, dtype=float)
    ns = m.size
    inertia = column_side**4 / 12.0
    heights = np.full(ns, story_height)
    heights[0] = first_story_height
    # per-story stiffness per unit E
    k_unit = columns_per_story * 12.0 * inertia / heights**3
    p = params
    times = record.times
    accs = record.accelerations

    def shear_product(story_k: np.ndarray, drifts: np.ndarray) -> np.ndarray:
        # [K u]_i = k_i d_i - k_{i+1} d_{i+1}; top story has no upper neighbor
        upper = story_k[:, 1:] * drifts[:, 1:]
        out = story_k * drifts
        out[:, :-1] -= upper
        return out

    def field(t, state):
        e = state[:, 0:1]
        pga = state[:, 1:2]
        x = state[:, 2 : 2 + ns]
        v = state[:, 2 + ns : 2 + 2 * ns]
        z = state[:, 2 + 2 * ns :]
        story_k = e * k_unit
        d_vel = np.empty_like(v)
        d_vel[:, 0] = v[:, 0]
        d_vel[:, 1:] = v[:, 1:] - v[:, :-1]
        drift_x = np.empty_like(x)
        drift_x[:, 0] = x[:, 0]
        drift_x[:, 1:] = x[:, 1:] - x[:, :-1]
        restoring = p.alpha * story_k * drift_x + (1.0 - p.alpha) * story_k * z
        floor_force = restoring.copy()
        floor_force[:, :-1] -= restoring[:, 1:]
        damp = damping_mass * m * v + damping_stiffness * shear_product(story_k, d_vel)
        ground = np.interp(t, times, accs, left=0.0, right=0.0) * (pga / reference_pga)
        acc = -ground - (damp + floor_force) / m
        zn = np.abs(z) ** (p.exponent - 1.0) * z if p.exponent != 1.0 else z
        zabs = np.abs(z) ** p.exponent
        dz = p.amplitude * d_vel - p.beta * np.abs(d_vel) * zn - p.gamma * d_vel * zabs
        return np.concatenate(
            [np.zeros_like(e), np.zeros_like(pga), v, acc, dz], axis=1
        )

    def embed(theta):
        # theta columns: (E, PGA)
        out = np.zeros((theta.shape[0], 2 + 3 * ns))
        out[:, 0] = theta[:, 0]
        out[:, 1] = theta[:, 1]
        return out

    def observe(state):
        return state[:, 2 + ns - 1]  # top floor displacement

    return ODEFlow(
        field_fn=field,
        state_dim=2 + 3 * ns,
        step=step,
        input_dim=2,
        embed=embed,
        observe=observe,
        name="bouc-wen-frame",
    )
