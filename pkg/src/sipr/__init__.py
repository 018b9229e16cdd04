"""Scale-invariant process regression.

Polyharmonic minimum-norm interpolation with Student-t pointwise posteriors,
and full regression over the data-spanned subspace via MAP + Hamiltonian
Monte Carlo, for small noisy datasets with a single regularity knob eta.
"""

from .geometry import (
    Regularity,
    eta_norm_constant,
    greens_matrix,
    greens_vector,
    kernel_system,
    monomial_matrix,
    monomial_vector,
    multi_indices,
    nullspace_dim,
)
from .interpolate import (
    InterpolationModel,
    PointwisePosterior,
    TestFunction,
    draw_sample_path,
    eta_norm_sq,
    pointwise_posterior,
    solve_interpolation,
    test_function,
)

__version__ = "0.1.0"

# these import `__version__` back from the package, so they come after it
from .basis import SubspaceBasis, build_orthonormal_basis, eval_functional, to_subspace
from .data import (
    Dataset,
    add_jitter,
    higdon,
    higdon_truth,
    kfold,
    load_csv,
    load_probe_csv,
    minmax_scale,
    rmse,
)
from .pipeline import (
    RegressionFit,
    crossval,
    fit_dataset,
    fit_regression,
    load_archive,
    save_archive,
)
from .posterior import (
    KnownNoise,
    PosteriorDensity,
    UnknownNoise,
    build_density,
    laplace_precondition,
    log_posterior,
    log_posterior_grad,
    log_posterior_hessian,
    map_estimate,
)
from .predict import CredibleBand, credible_band, predictive_mean
from .sampler import (
    Diagnostics,
    Regime,
    RegressionPosterior,
    SamplerConfig,
    detect_poles,
    posterior_moments,
    run_mcmc,
)

__all__ = [
    "Regularity",
    "multi_indices",
    "nullspace_dim",
    "eta_norm_constant",
    "greens_matrix",
    "greens_vector",
    "monomial_matrix",
    "monomial_vector",
    "kernel_system",
    "InterpolationModel",
    "solve_interpolation",
    "eta_norm_sq",
    "TestFunction",
    "test_function",
    "PointwisePosterior",
    "pointwise_posterior",
    "draw_sample_path",
    "SubspaceBasis",
    "build_orthonormal_basis",
    "to_subspace",
    "eval_functional",
    "KnownNoise",
    "UnknownNoise",
    "PosteriorDensity",
    "build_density",
    "log_posterior",
    "log_posterior_grad",
    "log_posterior_hessian",
    "map_estimate",
    "laplace_precondition",
    "SamplerConfig",
    "Regime",
    "RegressionPosterior",
    "Diagnostics",
    "run_mcmc",
    "posterior_moments",
    "detect_poles",
    "CredibleBand",
    "predictive_mean",
    "credible_band",
    "Dataset",
    "load_csv",
    "load_probe_csv",
    "minmax_scale",
    "add_jitter",
    "higdon",
    "higdon_truth",
    "kfold",
    "rmse",
    "RegressionFit",
    "fit_regression",
    "fit_dataset",
    "save_archive",
    "load_archive",
    "crossval",
    "__version__",
]
