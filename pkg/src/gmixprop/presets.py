"""Built-in experiment configurations for the four benchmark studies."""

from __future__ import annotations

EXAMPLE_IDS = ("example1", "example2", "example3", "example4")


def preset_config(example_id: str) -> dict:
    """Full default configuration for one of the built-in examples."""
    if example_id == "example1":
        return {
            "example": "example1",
            "rep_points": {"method": "glp", "count": 89},
            "kernel": {"policy": "adaptive"},
            "em": {"sampler": "halton", "initializer": "local", "max_iter": 120},
            "grid": {"lower": [-15.0, -15.0], "upper": [15.0, 15.0], "step": 0.05},
            "baselines": {"kde_bandwidths": [0.3, 0.5, 0.8, 1.2]},
            "output": {"write_grids": True, "grid_format": "csv"},
        }
    if example_id == "example2":
        return {
            "example": "example2",
            "rep_points": {"method": "glp", "count": 89},
            "kernel": {"policy": "adaptive"},
            "em": {"sampler": "halton", "initializer": "local", "max_iter": 300},
            "grid": {"lower": [-0.5, -3.0], "upper": [3.5, 3.0], "step": 0.05},
            "slice_x1": 1.0,
            "baselines": {"kde_bandwidths": [0.8]},
            "output": {"write_grids": True, "grid_format": "csv"},
        }
    if example_id == "example3":
        return {
            "example": "example3",
            "rep_points": {"method": "halton", "count": 350},
            "kernel": {"policy": "inscribed"},
            "evolution": {
                "t_end": 30.0,
                "dt": 0.015,
                "noise_samples": 20,
                "seed": 7,
                "integrator_step": 0.005,
                "snapshot_every": 200,
            },
            "grid": {"lower": [-6.0, -6.0], "upper": [6.0, 6.0], "step": 0.1},
            "output": {"write_grids": True, "grid_format": "csv"},
        }
    if example_id == "example4":
        return {
            "example": "example4",
            "rep_points": {"method": "halton", "count": 89},
            "kernel": {"policy": "adaptive"},
            "em": {"sampler": "halton", "initializer": "local", "max_iter": 60},
            "evolution": {
                "t_end": 20.0,
                "dt": 0.05,
                "integrator_step": 0.005,
            },
            "record": {"path": None, "seed": 2011, "pga": 2.0, "duration": 20.0, "dt": 0.02},
            "parameters": {
                "modulus_mean": 3.0e10,
                "modulus_cov": 0.1,
                "pga_mean": 2.0,
                "pga_cov": 0.1,
            },
            "baselines": {"qmc_count": 512, "qmc_skip": 1000},
            "grid": {"lower": [-0.25], "upper": [0.25], "step": 0.002},
            "output": {"write_grids": True, "grid_format": "csv"},
        }
    raise KeyError(f"unknown example id {example_id!r}")


_DESCRIPTIONS = {
    "example1": """\
example1: linear transformation of a standard bivariate Gaussian.
  Map:        x1 = 3 a + 5 b,  x2 = a + 2 b
  Input:      theta ~ N(0, I) in 2 dimensions
  Exact PDF:  p(x) = (1/2pi) exp(-[(2 x1 - 5 x2)^2 + (-x1 + 3 x2)^2] / 2)
  Mixture:    89 lattice points, adaptive covariances, component-wise
              cubature propagation; compared against the exact density and
              a kernel density estimate of the same 89 pushed points (the
              KDE invents extra modes on the thin ridge, the mixture does not).
""",
    "example2": """\
example2: nonlinear (polar-type) transformation of a standard Gaussian.
  Map:        x1 = sqrt(a^2 + b^2),  x2 = a
  Exact PDF:  p(x) = (1/pi) x1 / sqrt(x1^2 - x2^2) exp(-x1^2/2)
              on {x1 > 0, |x2| < x1}, zero elsewhere
  Mesh:       0.05 x 0.05; the slice at x1 = 1 has two sharp ridges at
              x2 -> +-1.  A Gaussian KDE with bandwidth 0.8 merges them
              into a single false mode; the mixture keeps both.
""",
    "example3": """\
example3: randomly excited Duffing oscillator, run to stationarity.
  Dynamics:   dx1 = x2 dt
              dx2 = (-2 zeta w0 x2 - w0^2 gamma x1 - w0^2 eps x1^3) dt + dB
  Defaults:   zeta = 0.2, w0 = 1.0, eps = 0.10, gamma = -1.0,
              noise intensity D = 0.8 (consistent with the stationary
              density below), x0 ~ N(0, 0.5 I)
  Stationary: p(x) = exp(x1^2/2 - x1^4/40 - x2^2/2) / (47.9724 sqrt(2pi)),
              bimodal in x1 with peaks at +-sqrt(10)
  Scheme:     350 components, time step 0.015 s, 4 cubature points per
              component (1400 dynamics evaluations per step); noise enters
              the covariances only, through antithetic Wiener increments.
""",
    "example4": """\
example4: 10-story hysteretic shear frame under scaled ground motion.
  Stories:    lumped masses (x1e5 kg): 0.5, 1.1, 1.1, 1.0, 1.0, 1.1,
              1.3, 1.2, 1.2, 1.2; first story 4 m, others 3 m;
              3 columns of 500 mm x 500 mm square section per story;
              rigid beams; Rayleigh damping C = a M + b K with a = 0.01,
              b = 0.005.
  Hysteresis: restoring force R = alpha k x + (1 - alpha) k z with
              dz/dt = A dx - beta |dx| |z|^(n-1) z - gamma dx |z|^n,
              alpha = 0.01, A = 1.2, beta = 1.4, gamma = 0.2, n = 1.
  Random:     E ~ Normal(mean 3.0e10 Pa, c.o.v. 0.1),
              PGA ~ Normal(mean 2.0 m/s^2, c.o.v. 0.1) scaling a bundled
              synthetic accelerogram (or a user CSV via record.path).
  Outputs:    top-floor displacement statistics from the mixture scheme
              and from a quasi-Monte Carlo baseline sharing the same
              integrator, plus mixture density snapshots of the top-floor
              displacement (which the sample baseline cannot provide).
""",
}


def describe_text(example_id: str) -> str:
    if example_id not in _DESCRIPTIONS:
        raise KeyError(f"unknown example id {example_id!r}")
    return _DESCRIPTIONS[example_id]
