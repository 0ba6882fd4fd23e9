"""Gaussian-mixture propagation of probability densities through dynamics."""

from .baselines import SampleCloud, count_modes, grid_error, kde_density, propagate_samples
from .cubature import (
    CubatureSet,
    MomentPair,
    cubature_points,
    gauss_expectation,
    propagate_moments,
)
from .dynamics import (
    AnalyticOracle,
    BoucWenParams,
    GroundMotionRecord,
    ODEFlow,
    SDEModel,
    StaticMap,
    bouc_wen_frame_model,
    duffing_model,
    integrate_flow,
    linear_map_model,
    nonlinear_map_model,
    synthetic_record,
)
from .evolution import (
    EvolutionTrace,
    assemble_density,
    evolve_conservative,
    evolve_markov,
    evolve_static,
    second_order_statistics,
)
from .grids import DensityGrid, GridSpec
from .mixture import (
    Adaptive,
    EMConfig,
    EMResult,
    GaussianComponent,
    Homogeneous,
    Inscribed,
    MixtureModel,
    build_mixture,
    fit_covariances_em,
    responsibilities,
)
from .rep_points import (
    RepPointSet,
    UnitPointSet,
    clustering_objective,
    f_discrepancy,
    generate_glp,
    generate_halton,
    generate_random,
    kmeans_iterations,
    kmeans_rep_points,
    transform_to_target,
)
from .targets import (
    ExponentialMarginal,
    IndependentMarginals,
    MultivariateGaussian,
    NormalMarginal,
    UniformMarginal,
    standard_gaussian,
)

__version__ = "0.1.0"
