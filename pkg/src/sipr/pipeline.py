"""End-to-end regression: scale, basis, MAP, precondition, sample, classify.

fit_regression runs the full chain on one dataset and returns a RegressionFit
that knows its regime:

    normal              -- sampled posterior; bands combine t and sampling parts
    nullspace_pole      -- the data is (or collapses to) a polynomial; the fit
                           is weighted polynomial least squares
    interpolation_pole  -- the noise collapses to zero; the fit is the exact
                           interpolation posterior

Fits can be serialized to a versioned JSON archive and reloaded for
prediction; a reloaded model predicts bit-identically to the fresh fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from ._io import atomic_write_text
from .basis import SubspaceBasis, build_orthonormal_basis
from .data import Dataset, FeatureScaling, minmax_scale
from .errors import ArchiveVersionError, IOError_, PoleCollapse, ValidationError
from .geometry import Regularity, as_points, as_regularity, monomial_matrix, monomial_vector
from .interpolate import (
    POLYNOMIAL_TOL,
    InterpolationModel,
    pointwise_posterior,
    solve_interpolation,
)
from .posterior import KnownNoise, UnknownNoise, build_density, laplace_precondition, map_estimate
from .predict import CredibleBand, band_halfwidth, credible_band
from .sampler import Regime, RegressionPosterior, SamplerConfig, run_mcmc

ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class PosteriorSummary:
    """The slice of a sampled posterior that prediction needs (archives store this)."""

    h_hat: np.ndarray
    Sigma_hat: np.ndarray
    n_basis: int
    regime: Regime
    sigma_y_median: float | None = None


@dataclass(eq=False)
class RegressionFit:
    """A fitted model in model coordinates, plus the transform back to user units."""

    eta: Regularity
    regime: Regime
    X: np.ndarray  # (N, D) model-space inputs (scaled if scaling is set)
    y: np.ndarray
    noise_known: bool
    sigma_y: float  # known value, posterior median, or residual estimate
    mean_a: np.ndarray  # kernel coefficients of the predictive mean
    mean_c: np.ndarray  # polynomial coefficients of the predictive mean
    scaling: FeatureScaling | None = None
    feature_names: tuple[str, ...] | None = None
    target_name: str = "y"
    basis: SubspaceBasis | None = None
    posterior: RegressionPosterior | PosteriorSummary | None = None
    interp_model: InterpolationModel | None = None
    config: SamplerConfig | None = field(default=None, repr=False)
    diagnostics_summary: dict | None = None

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def to_model_space(self, probes) -> np.ndarray:
        P = as_points(probes)
        if P.shape[1] != self.dim:
            raise ValidationError(f"probes have {P.shape[1]} features, model has {self.dim}")
        return self.scaling.apply(P) if self.scaling is not None else P

    def predict_mean(self, probes) -> np.ndarray:
        """Predictive mean at probes given in original units."""
        return self.predict(probes).mean

    def predict(self, probes, level: float = 0.95) -> CredibleBand:
        """Credible band at probes given in original units."""
        P = self.to_model_space(probes)
        if self.regime == Regime.NORMAL:
            return credible_band(
                self.posterior,
                self.basis,
                self.X,
                self.y,
                self.eta,
                P,
                level=level,
                sigma_y=self.sigma_y,
            )
        if self.regime == Regime.INTERPOLATION_POLE:
            return self._interpolation_band(P, level)
        return self._polynomial_band(P, level)

    def _interpolation_band(self, P: np.ndarray, level: float) -> CredibleBand:
        model = self.interp_model
        pps = [pointwise_posterior(None, None, self.eta, p, model=model) for p in P]
        mean = np.array([pp.mean for pp in pps])
        scale_t = np.array([pp.scale for pp in pps])
        sigma_t = np.array([pp.sd for pp in pps])
        dof = float(model.n_points - model.n_null)
        sigma_s = np.zeros_like(mean)
        sigma_f = sigma_t.copy()
        sigma_d = np.sqrt(sigma_f**2 + self.sigma_y**2)
        half = band_halfwidth(level, dof, scale_t)
        return CredibleBand(
            probes=P, mean=mean, sigma_s=sigma_s, sigma_t=sigma_t, sigma_f=sigma_f,
            sigma_d=sigma_d, scale_t=scale_t, lower=mean - half, upper=mean + half,
            dof=dof, level=level,
        )

    def _polynomial_band(self, P: np.ndarray, level: float) -> CredibleBand:
        # classical least-squares posterior restricted to the polynomial space
        M = monomial_matrix(self.X, self.eta)
        N0, N = M.shape
        gram_inv = np.linalg.pinv(M @ M.T)
        resid = self.y - M.T @ self.mean_c
        rss = float(resid @ resid)
        nu_resid = max(N - N0, 1)
        if self.noise_known:
            s2 = self.sigma_y**2
            dof = float("inf")
        else:
            s2 = rss / nu_resid
            dof = float(nu_resid)
        mvecs = np.array([monomial_vector(p, self.eta, dim=self.dim) for p in P])
        mean = mvecs @ self.mean_c
        sigma_s = np.sqrt(np.maximum(np.einsum("pi,ij,pj->p", mvecs, gram_inv, mvecs) * s2, 0.0))
        zero = np.zeros_like(mean)
        sigma_f = sigma_s.copy()
        sigma_d = np.sqrt(sigma_f**2 + self.sigma_y**2)
        half = band_halfwidth(level, dof, sigma_s)
        return CredibleBand(
            probes=P, mean=mean, sigma_s=sigma_s, sigma_t=zero, sigma_f=sigma_f,
            sigma_d=sigma_d, scale_t=zero, lower=mean - half, upper=mean + half,
            dof=dof, level=level,
        )

    @property
    def fitted(self) -> np.ndarray:
        """Predictive mean at the training inputs (model space)."""
        if self.regime == Regime.NORMAL:
            return self.basis.Estar @ np.asarray(self.posterior.h_hat)
        if self.regime == Regime.INTERPOLATION_POLE:
            return self.interp_model.evaluate(self.X)
        M = monomial_matrix(self.X, self.eta)
        return M.T @ self.mean_c


def _polynomial_fit(X, y, eta) -> np.ndarray:
    M = monomial_matrix(X, eta)
    c, *_ = np.linalg.lstsq(M.T, y, rcond=None)
    return c


def _residual_sigma(X, y, eta, c) -> float:
    M = monomial_matrix(X, eta)
    resid = y - M.T @ c
    nu = max(y.shape[0] - M.shape[0], 1)
    return float(np.sqrt(resid @ resid / nu))


def fit_regression(X, y, eta, noise="unknown", config: SamplerConfig | None = None) -> RegressionFit:
    """Fit the regression posterior on (X, y) in the given coordinates.

    noise is a positive float (known sd), 0 (exact data), or "unknown".
    Inputs are used as-is; use fit_dataset for the scaled protocol.
    """
    reg = as_regularity(eta)
    X = as_points(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    config = config or SamplerConfig()

    if isinstance(noise, str):
        if noise != "unknown":
            raise ValidationError(f"noise must be a number or 'unknown', got {noise!r}")
        known = False
        sigma_known = None
    else:
        known = True
        sigma_known = float(noise)
        if not (math.isfinite(sigma_known) and sigma_known >= 0.0):
            raise ValidationError(f"known noise sd must be >= 0, got {noise!r}")

    model = solve_interpolation(X, y, reg)
    common = dict(eta=reg, X=X, y=y, noise_known=known, config=config)

    if model.norm_sq <= POLYNOMIAL_TOL * float(y @ y):
        # exactly polynomial data: nothing for the kernel part to do
        c = _polynomial_fit(X, y, reg)
        sigma = sigma_known if known else _residual_sigma(X, y, reg, c)
        return RegressionFit(
            regime=Regime.NULLSPACE_POLE, sigma_y=sigma,
            mean_a=np.zeros(X.shape[0]), mean_c=c, **common,
        )

    if known and sigma_known == 0.0:
        return RegressionFit(
            regime=Regime.INTERPOLATION_POLE, sigma_y=0.0,
            mean_a=model.a, mean_c=model.c, interp_model=model, **common,
        )

    basis = build_orthonormal_basis(X, reg)
    if known:
        noise_model = KnownNoise(sigma_known)
    else:
        sd = float(np.std(y))
        if sd <= 0.0:
            raise ValidationError("target is constant; cannot initialize the noise scale")
        noise_model = UnknownNoise(sd / 10.0)
    density = build_density(basis, y, noise_model)

    try:
        h_map = map_estimate(density)
    except PoleCollapse:
        c = _polynomial_fit(X, y, reg)
        sigma = sigma_known if known else _residual_sigma(X, y, reg, c)
        return RegressionFit(
            regime=Regime.NULLSPACE_POLE, sigma_y=sigma,
            mean_a=np.zeros(X.shape[0]), mean_c=c, basis=basis, **common,
        )

    init = density.initial_state(h_map)
    L = laplace_precondition(init, density)
    posterior = run_mcmc(density, config, init=init, precond=L)
    diag = posterior.diagnostics
    diag_summary = {
        "accept_rates": [c.accept_rate for c in diag.chains],
        "divergence_rates": [c.divergence_rate for c in diag.chains],
        "step_sizes": [c.step_size for c in diag.chains],
        "rhat_max": diag.rhat_max,
    }

    if posterior.regime == Regime.NULLSPACE_POLE:
        c = _polynomial_fit(X, y, reg)
        sigma = sigma_known if known else _residual_sigma(X, y, reg, c)
        return RegressionFit(
            regime=Regime.NULLSPACE_POLE, sigma_y=sigma,
            mean_a=np.zeros(X.shape[0]), mean_c=c, basis=basis,
            posterior=posterior, diagnostics_summary=diag_summary, **common,
        )
    if posterior.regime == Regime.INTERPOLATION_POLE:
        sigma = sigma_known if known else float(posterior.sigma_y_median)
        return RegressionFit(
            regime=Regime.INTERPOLATION_POLE, sigma_y=sigma,
            mean_a=model.a, mean_c=model.c, interp_model=model, basis=basis,
            posterior=posterior, diagnostics_summary=diag_summary, **common,
        )

    a, c = basis.spline_coefficients(posterior.h_hat)
    sigma = sigma_known if known else float(posterior.sigma_y_median)
    return RegressionFit(
        regime=Regime.NORMAL, sigma_y=sigma, mean_a=a, mean_c=c,
        basis=basis, posterior=posterior, diagnostics_summary=diag_summary, **common,
    )


def fit_dataset(dataset: Dataset, eta, noise="unknown", config: SamplerConfig | None = None) -> RegressionFit:
    """Scale features to [0, 1], fit, and attach the transform and names."""
    scaled = minmax_scale(dataset) if dataset.scaling is None else dataset
    fit = fit_regression(scaled.X, scaled.y, eta, noise=noise, config=config)
    fit.scaling = scaled.scaling
    fit.feature_names = dataset.feature_names
    fit.target_name = dataset.target_name
    return fit


# --- archives ---------------------------------------------------------------


def _arr(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def archive_dict(fit: RegressionFit) -> dict:
    """JSON-ready description of a fit, sufficient to reproduce predictions."""
    post = fit.posterior
    sigma_summary: dict = {"mode": "known" if fit.noise_known else "unknown", "value": fit.sigma_y}
    if isinstance(post, RegressionPosterior) and post.sigma_y_samples is not None:
        qs = np.quantile(post.sigma_y_samples, [0.05, 0.5, 0.95])
        sigma_summary.update(q05=float(qs[0]), median=float(qs[1]), q95=float(qs[2]))
    cfg = fit.config or SamplerConfig()
    return {
        "format_version": ARCHIVE_VERSION,
        "package_version": _pkg_version,
        "eta": fit.eta.value,
        "regime": fit.regime.value,
        "feature_names": list(fit.feature_names or [f"x{i}" for i in range(fit.dim)]),
        "target_name": fit.target_name,
        "scaling": None
        if fit.scaling is None
        else {"mins": _arr(fit.scaling.mins), "ranges": _arr(fit.scaling.ranges)},
        "X": _arr(fit.X),
        "y": _arr(fit.y),
        "spline": {"a": _arr(fit.mean_a), "c": _arr(fit.mean_c)},
        "basis_H": None if fit.basis is None or fit.regime != Regime.NORMAL else _arr(fit.basis.H),
        "h_hat": None if fit.regime != Regime.NORMAL else _arr(post.h_hat),
        "Sigma_hat": None if fit.regime != Regime.NORMAL else _arr(post.Sigma_hat),
        "sigma_y": sigma_summary,
        "config": {
            "chains": cfg.chains,
            "samples_per_chain": cfg.samples_per_chain,
            "burn_in": cfg.burn_in,
            "seed": cfg.seed,
            "leapfrog_steps": cfg.leapfrog_steps,
            "target_accept": cfg.target_accept,
        },
        "diagnostics": fit.diagnostics_summary,
        "fitted": _arr(fit.fitted),
    }


def save_archive(fit: RegressionFit, path: str) -> None:
    atomic_write_text(path, json.dumps(archive_dict(fit), indent=1) + "\n")


def load_archive(path: str) -> RegressionFit:
    """Rebuild a predicting fit from an archive written by save_archive."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IOError_(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArchiveVersionError(f"{path} is not a model archive: {exc}") from exc
    version = doc.get("format_version")
    if version != ARCHIVE_VERSION:
        raise ArchiveVersionError(
            f"{path} has archive format {version!r}; this build reads {ARCHIVE_VERSION}"
        )
    reg = Regularity(float(doc["eta"]))
    regime = Regime(doc["regime"])
    X = np.asarray(doc["X"], dtype=float)
    y = np.asarray(doc["y"], dtype=float)
    scaling = None
    if doc.get("scaling") is not None:
        scaling = FeatureScaling(
            mins=np.asarray(doc["scaling"]["mins"], dtype=float),
            ranges=np.asarray(doc["scaling"]["ranges"], dtype=float),
        )
    mean_a = np.asarray(doc["spline"]["a"], dtype=float)
    mean_c = np.asarray(doc["spline"]["c"], dtype=float)
    sigma_info = doc["sigma_y"]
    known = sigma_info["mode"] == "known"
    cfg_doc = doc.get("config") or {}
    config = SamplerConfig(**cfg_doc) if cfg_doc else None

    basis = None
    posterior = None
    interp_model = None
    if regime == Regime.NORMAL:
        H = np.asarray(doc["basis_H"], dtype=float)
        from .geometry import greens_matrix  # local to avoid import noise at top

        basis = SubspaceBasis(X=X, eta=reg, H=H, G=greens_matrix(X, reg), M=monomial_matrix(X, reg))
        posterior = PosteriorSummary(
            h_hat=np.asarray(doc["h_hat"], dtype=float),
            Sigma_hat=np.asarray(doc["Sigma_hat"], dtype=float),
            n_basis=H.shape[1],
            regime=regime,
            sigma_y_median=None if known else float(sigma_info["value"]),
        )
    elif regime == Regime.INTERPOLATION_POLE:
        interp_model = solve_interpolation(X, y, reg)

    return RegressionFit(
        eta=reg,
        regime=regime,
        X=X,
        y=y,
        noise_known=known,
        sigma_y=float(sigma_info["value"]),
        mean_a=mean_a,
        mean_c=mean_c,
        scaling=scaling,
        feature_names=tuple(doc["feature_names"]),
        target_name=doc["target_name"],
        basis=basis,
        posterior=posterior,
        interp_model=interp_model,
        config=config,
        diagnostics_summary=doc.get("diagnostics"),
    )


# --- cross-validation --------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    fold: int
    n_test: int
    rmse: float
    regime: str


@dataclass(frozen=True)
class CrossvalResult:
    folds: tuple[FoldResult, ...]
    pooled_rmse: float


def crossval(
    dataset: Dataset,
    eta,
    noise="unknown",
    k: int = 5,
    seed: int = 0,
    config: SamplerConfig | None = None,
    jobs: int = 1,
) -> CrossvalResult:
    """k-fold CV of the full pipeline; pooled RMSE over all held-out points.

    Each fold scales its own training features, fits, and predicts the
    held-out rows in original units. Fold seeds are split from the master
    seed, so results do not depend on execution order.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .data import kfold, rmse as _rmse

    base = config or SamplerConfig()
    splits = kfold(dataset.n, k, seed=seed)
    fold_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]

    def run_fold(j: int):
        train_idx, test_idx = splits[j]
        train = Dataset(
            X=dataset.X[train_idx],
            y=dataset.y[train_idx],
            feature_names=dataset.feature_names,
            target_name=dataset.target_name,
        )
        cfg = SamplerConfig(
            chains=base.chains,
            samples_per_chain=base.samples_per_chain,
            burn_in=base.burn_in,
            seed=fold_seeds[j],
            leapfrog_steps=base.leapfrog_steps,
            target_accept=base.target_accept,
            jobs=base.jobs,
        )
        fit = fit_dataset(train, eta, noise=noise, config=cfg)
        pred = fit.predict_mean(dataset.X[test_idx])
        return pred, dataset.y[test_idx], fit.regime

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, k)) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(j) for j in range(k)]

    folds = []
    sq_errors = []
    for j, (pred, actual, regime) in enumerate(results):
        folds.append(FoldResult(fold=j, n_test=len(actual), rmse=_rmse(pred, actual), regime=regime.value))
        sq_errors.append((pred - actual) ** 2)
    pooled = float(np.sqrt(np.mean(np.concatenate(sq_errors))))
    return CrossvalResult(folds=tuple(folds), pooled_rmse=pooled)
