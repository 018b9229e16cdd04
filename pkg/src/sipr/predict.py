"""Predictive means and credible bands for normal-regime regression fits.

The predictive mean at x_t is the function at the posterior mean coordinates,
e(x_t) . h_hat. Its uncertainty has two parts that add in quadrature:

    sigma_t  -- the t-process band around any fixed h*, from the norm ratio
                of the fitted function to the probe's test function, with
                dof nu = Nh (sd exists only for nu > 2; the scale always does)
    sigma_s  -- the spread of the sampled coordinates, e^T Sigma_hat e

sigma_f^2 = sigma_t^2 + sigma_s^2 is the function band and
sigma_d^2 = sigma_f^2 + sigma_y^2 the observation band. Central intervals use
t quantiles at dof nu applied to the scale version of the combined width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

from .basis import SubspaceBasis, eval_functional
from .errors import SingularSystem, WrongRegime
from .geometry import DUPLICATE_TOL, as_points, as_regularity
from .interpolate import eta_norm_sq, test_function, _nearest_datapoint
from .sampler import Regime


@dataclass(eq=False)
class CredibleBand:
    """Pointwise posterior summary along a set of probe points.

    sigma_t entries are NaN when dof <= 2 (no standard deviation exists);
    scale_t, the t scale parameter, is always finite and is what the
    intervals are built from.
    """

    probes: np.ndarray  # (P, D)
    mean: np.ndarray  # (P,)
    sigma_s: np.ndarray
    sigma_t: np.ndarray
    sigma_f: np.ndarray
    sigma_d: np.ndarray
    scale_t: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    dof: float
    level: float


def _require_normal(posterior) -> None:
    regime = getattr(posterior, "regime", Regime.NORMAL)
    if regime != Regime.NORMAL:
        raise WrongRegime(
            f"regime is {getattr(regime, 'value', regime)}: use the polynomial mean for the "
            "nullspace pole or the interpolation posterior for the interpolation pole"
        )


def predictive_mean(posterior, basis: SubspaceBasis, probes) -> np.ndarray:
    """Posterior-mean prediction at probe points (normal regime only)."""
    _require_normal(posterior)
    P = as_points(probes)
    return np.array([float(eval_functional(basis, p) @ posterior.h_hat) for p in P])


def band_halfwidth(level: float, dof: float, scale: np.ndarray) -> np.ndarray:
    """Half-width of the central interval: t quantile at dof times the scale."""
    if not 0.0 < level < 1.0:
        raise WrongRegime(f"level must be in (0, 1), got {level}")
    q = float(student_t.ppf(0.5 + level / 2.0, dof))
    return q * np.asarray(scale, dtype=float)


def credible_band(
    posterior,
    basis: SubspaceBasis,
    X,
    y,
    eta,
    probes,
    level: float = 0.95,
    sigma_y: float | None = None,
) -> CredibleBand:
    """Bands of the normal-regime regression posterior at probe points.

    sigma_y feeds only sigma_d; when None it is taken from the posterior's
    noise draws (unknown-noise fits) or as 0.
    """
    _require_normal(posterior)
    reg = as_regularity(eta)
    X = as_points(X)
    P = as_points(probes)
    nu = float(posterior.n_basis)

    if sigma_y is None:
        med = getattr(posterior, "sigma_y_median", None)
        sigma_y = float(med) if med is not None else 0.0

    a, _ = basis.spline_coefficients(posterior.h_hat)
    norm_mean = eta_norm_sq(a, basis.G, reg, basis.dim, M=basis.M)
    norm_mean = max(norm_mean, 0.0)

    mean = np.empty(P.shape[0])
    sigma_s = np.empty(P.shape[0])
    scale_t = np.empty(P.shape[0])
    sigma_t = np.empty(P.shape[0])
    for i, p in enumerate(P):
        e = eval_functional(basis, p)
        mean[i] = float(e @ posterior.h_hat)
        sigma_s[i] = math.sqrt(max(float(e @ posterior.Sigma_hat @ e), 0.0))
        _, dist = _nearest_datapoint(X, p)
        if dist < DUPLICATE_TOL:
            ratio = 0.0  # probing a datapoint: the t component vanishes
        else:
            try:
                ratio = norm_mean / test_function(X, p, reg).norm_sq
            except SingularSystem:
                ratio = 0.0  # numerically on a datapoint: same limit
        scale_t[i] = math.sqrt(ratio / nu)
        sigma_t[i] = math.sqrt(ratio / (nu - 2.0)) if nu > 2 else float("nan")

    sigma_f = np.sqrt(sigma_t**2 + sigma_s**2)
    sigma_d = np.sqrt(sigma_f**2 + sigma_y**2)
    half = band_halfwidth(level, nu, np.sqrt(scale_t**2 + sigma_s**2))
    return CredibleBand(
        probes=P,
        mean=mean,
        sigma_s=sigma_s,
        sigma_t=sigma_t,
        sigma_f=sigma_f,
        sigma_d=sigma_d,
        scale_t=scale_t,
        lower=mean - half,
        upper=mean + half,
        dof=nu,
        level=level,
    )
