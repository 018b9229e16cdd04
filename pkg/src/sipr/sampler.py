"""Hamiltonian Monte Carlo over the preconditioned posterior.

Plain leapfrog HMC with a fixed number of integrator steps and dual-averaging
step-size adaptation during burn-in. Chains are seeded by splitting one master
seed, so results are bit-reproducible for a fixed configuration and invariant
to how chains are scheduled. The sampler is generic: any target exposing
``dim``, ``log_density(state)`` and ``grad(state)`` can be sampled; regression
densities additionally get MAP initialization, Laplace preconditioning, noise
extraction, and pole classification.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from ._io import atomic_write_text
from .errors import DivergentChains, DomainError, TooFewSamples, ValidationError
from .posterior import PosteriorDensity, laplace_precondition, map_estimate

# A proposal whose energy error exceeds this is counted as divergent.
ENERGY_ERROR_MAX = 1e3
# The occasional short step: probability per iteration and log-spaced range.
_SHORT_PROB = 0.2
_LOG_SHORT_LO = math.log(0.08)
_LOG_SHORT_HI = math.log(0.8)
# Trace-statistic thresholds for pole classification (relative).
NULLSPACE_POLE_TOL = 1e-3
INTERPOLATION_POLE_TOL = 1e-3


class Regime(str, Enum):
    NORMAL = "normal"
    NULLSPACE_POLE = "nullspace_pole"
    INTERPOLATION_POLE = "interpolation_pole"


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling budget and tuning targets.

    samples_per_chain counts all iterations including burn-in, so each chain
    keeps samples_per_chain - burn_in draws.
    """

    chains: int = 2
    samples_per_chain: int = 1000
    burn_in: int = 500
    seed: int = 0
    leapfrog_steps: int = 32
    target_accept: float = 0.8
    jobs: int = 1
    trace_path: str | None = None

    def __post_init__(self):
        if self.chains < 1:
            raise ValidationError(f"chains must be >= 1, got {self.chains}")
        if self.burn_in < 0:
            raise ValidationError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.samples_per_chain <= self.burn_in:
            raise TooFewSamples(
                f"samples_per_chain ({self.samples_per_chain}) must exceed burn_in ({self.burn_in})"
            )
        if self.leapfrog_steps < 1:
            raise ValidationError(f"leapfrog_steps must be >= 1, got {self.leapfrog_steps}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValidationError(f"target_accept must be in (0, 1), got {self.target_accept}")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def kept_per_chain(self) -> int:
        return self.samples_per_chain - self.burn_in


@dataclass(frozen=True)
class ChainStats:
    accept_rate: float  # post-burn-in acceptance fraction
    divergence_rate: float  # post-burn-in divergent fraction
    step_size: float  # frozen step size used after burn-in


@dataclass(frozen=True)
class Diagnostics:
    chains: tuple[ChainStats, ...]
    rhat_max: float

    @property
    def divergence_rate(self) -> float:
        return float(np.mean([c.divergence_rate for c in self.chains]))

    @property
    def mixed(self) -> bool:
        """Split-chain scale reduction below the conventional 1.1 flag."""
        return bool(np.isfinite(self.rhat_max) and self.rhat_max < 1.1)


@dataclass(eq=False)
class RegressionPosterior:
    """Pooled MCMC output in original state coordinates."""

    samples: np.ndarray  # (kept draws, state dim), chain-major
    log_posteriors: np.ndarray  # (kept draws,)
    h_hat: np.ndarray  # posterior mean of h*
    Sigma_hat: np.ndarray  # posterior covariance of h* (1/N normalization)
    regime: Regime
    diagnostics: Diagnostics
    sigma_y_samples: np.ndarray | None = None  # unknown-noise mode only
    n_basis: int | None = None
    n_null: int | None = None
    config: SamplerConfig | None = field(default=None, repr=False)

    @property
    def sigma_y_median(self) -> float | None:
        if self.sigma_y_samples is None:
            return None
        return float(np.median(self.sigma_y_samples))


def posterior_moments(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the draws, covariance normalized by 1/N."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValidationError(f"samples must be a non-empty 2-D array, got shape {samples.shape}")
    mean = samples.mean(axis=0)
    dev = samples - mean
    cov = dev.T @ dev / samples.shape[0]
    return mean, cov


def detect_poles(
    h_norms,
    sigma_draws,
    h_mu_norm: float,
    y_sd: float | None = None,
) -> Regime:
    """Classify the run from trace statistics over each chain's last quarter.

    h_norms / sigma_draws are sequences of per-chain traces (sigma_draws may
    be None in known-noise mode). Collapse of ||h|| relative to the
    interpolant's flags the nullspace pole; collapse of sigma_y relative to
    the data spread flags the interpolation pole. A single collapsed chain is
    enough: the pole is a property of the posterior, and chains fall into it
    at different speeds, so pooling medians across chains would let a slow
    chain mask one that already sits on the pole.
    """

    def tail_medians(chains_arr) -> list[float]:
        out = []
        for t in chains_arr:
            t = np.asarray(t, dtype=float)
            k = max(1, t.shape[0] // 4)
            out.append(float(np.median(t[-k:])))
        return out

    if h_mu_norm > 0 and any(m < NULLSPACE_POLE_TOL * h_mu_norm for m in tail_medians(h_norms)):
        return Regime.NULLSPACE_POLE
    if sigma_draws is not None and y_sd is not None and y_sd > 0:
        if any(m < INTERPOLATION_POLE_TOL * y_sd for m in tail_medians(sigma_draws)):
            return Regime.INTERPOLATION_POLE
    return Regime.NORMAL


# --- HMC internals --------------------------------------------------------


class _ZTarget:
    """The target expressed in preconditioned coordinates z = L^T x."""

    def __init__(self, target, L: np.ndarray):
        self.target = target
        self.L = L
        self.Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True)

    def to_z(self, x: np.ndarray) -> np.ndarray:
        return self.L.T @ x

    def to_x(self, z: np.ndarray) -> np.ndarray:
        return self.Linv.T @ z

    def log_density(self, z: np.ndarray) -> float:
        try:
            lp = float(self.target.log_density(self.to_x(z)))
        except (DomainError, FloatingPointError, OverflowError):
            return -math.inf
        return lp if math.isfinite(lp) else -math.inf

    def grad(self, z: np.ndarray) -> np.ndarray | None:
        try:
            g = self.Linv @ self.target.grad(self.to_x(z))
        except (DomainError, FloatingPointError, OverflowError):
            return None
        return g if np.all(np.isfinite(g)) else None


def _leapfrog(zt: _ZTarget, z, r, eps: float, n_steps: int):
    """n_steps of leapfrog; returns (z, r, logp) or None on a non-finite state."""
    g = zt.grad(z)
    if g is None:
        return None
    r = r + 0.5 * eps * g
    for i in range(n_steps):
        z = z + eps * r
        g = zt.grad(z)
        if g is None or not np.all(np.isfinite(z)):
            return None
        if i < n_steps - 1:
            r = r + eps * g
    r = r + 0.5 * eps * g
    lp = zt.log_density(z)
    if not math.isfinite(lp):
        return None
    return z, r, lp


def _find_initial_step(zt: _ZTarget, z0: np.ndarray, rng: np.random.Generator) -> float:
    """Double/halve a unit step until one leapfrog step crosses 50% acceptance."""
    eps = 1.0
    lp0 = zt.log_density(z0)
    if not math.isfinite(lp0):
        return 0.1
    r0 = rng.standard_normal(z0.shape[0])
    h0 = -lp0 + 0.5 * float(r0 @ r0)

    def log_accept(eps: float) -> float:
        out = _leapfrog(zt, z0, r0, eps, 1)
        if out is None:
            return -math.inf
        z1, r1, lp1 = out
        return -((-lp1 + 0.5 * float(r1 @ r1)) - h0)

    la = log_accept(eps)
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * la <= -direction * math.log(2.0):
            break
        eps *= 2.0**direction
        if not 1e-12 < eps < 1e12:
            break
        la = log_accept(eps)
    return eps


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_stat: float) -> None:
        self.m += 1
        frac = 1.0 / (self.m + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.m) / self.gamma * self.h_bar
        w = self.m**-self.kappa
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar

    @property
    def adapted(self) -> float:
        return math.exp(self.log_eps_bar if self.m > 0 else self.log_eps)


def _run_chain(zt: _ZTarget, x0: np.ndarray, config: SamplerConfig, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    dim = x0.shape[0]
    z = zt.to_z(x0)
    lp = zt.log_density(z)
    eps0 = _find_initial_step(zt, z, rng)
    da = _DualAveraging(eps0, config.target_accept)
    eps = eps0
    # Unknown-noise targets get a conjugate update of log sigma between
    # trajectories; composing the two kernels keeps the joint invariant.
    noise_update = None
    if isinstance(zt.target, PosteriorDensity) and not zt.target.noise.is_known:
        noise_update = zt.target.draw_log_sigma

    kept = np.empty((config.kept_per_chain, dim))
    kept_lp = np.empty(config.kept_per_chain)
    accepted_post = 0
    divergent_post = 0
    k = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(config.samples_per_chain):
            warmup = it < config.burn_in
            r = rng.standard_normal(dim)
            # Jitter the step: mostly +-20%, which breaks the resonance a fixed
            # trajectory length has on near-Gaussian targets, with occasional
            # much shorter steps so a chain sliding into a pole funnel can keep
            # descending after the base step froze. Only the base step adapts.
            if rng.uniform() < 1.0 - _SHORT_PROB:
                eps_it = eps * rng.uniform(0.8, 1.2)
            else:
                eps_it = eps * math.exp(rng.uniform(_LOG_SHORT_LO, _LOG_SHORT_HI))
            h0 = -lp + 0.5 * float(r @ r)
            out = _leapfrog(zt, z, r, eps_it, config.leapfrog_steps)
            if out is None:
                delta = math.inf
            else:
                z1, r1, lp1 = out
                delta = (-lp1 + 0.5 * float(r1 @ r1)) - h0
            divergent = not math.isfinite(delta) or abs(delta) > ENERGY_ERROR_MAX
            accept_stat = 0.0 if not math.isfinite(delta) else min(1.0, math.exp(-min(delta, 700.0)))
            accept = (not divergent) and (math.log(max(rng.uniform(), 1e-300)) < -delta)
            if accept:
                z, lp = z1, lp1
            if noise_update is not None:
                x = zt.to_x(z)
                x[-1] = noise_update(x[:-1], rng)
                z = zt.to_z(x)
                lp = zt.log_density(z)
            if warmup:
                da.update(accept_stat)
                eps = math.exp(da.log_eps)
                if it == config.burn_in - 1:
                    eps = da.adapted
            else:
                accepted_post += int(accept)
                divergent_post += int(divergent and not accept)
                kept[k] = zt.to_x(z)
                kept_lp[k] = lp
                k += 1
    n_post = max(1, config.kept_per_chain)
    stats = ChainStats(
        accept_rate=accepted_post / n_post,
        divergence_rate=divergent_post / n_post,
        step_size=eps,
    )
    return kept, kept_lp, stats


def _split_rhat(chains: list[np.ndarray]) -> float:
    """Max over dimensions of the split-chain potential scale reduction."""
    halves = []
    for c in chains:
        half = c.shape[0] // 2
        if half >= 2:
            halves.append(c[:half])
            halves.append(c[-half:])
    if len(halves) < 2:
        return float("nan")
    n = min(h.shape[0] for h in halves)
    stack = np.stack([h[:n] for h in halves])  # (m, n, dim)
    means = stack.mean(axis=1)
    within = stack.var(axis=1, ddof=1).mean(axis=0)
    between = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * within + between / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / within)
    rhat = np.where(within > 0, rhat, np.where(between > 0, np.inf, 1.0))
    return float(np.max(rhat))


def _write_trace(path: str, samples: np.ndarray, log_posts: np.ndarray) -> None:
    dim = samples.shape[1]
    lines = [",".join([f"state_{i}" for i in range(dim)] + ["log_posterior"])]
    for row, lp in zip(samples, log_posts):
        lines.append(",".join(repr(float(v)) for v in row) + f",{float(lp)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def run_mcmc(
    density,
    config: SamplerConfig,
    *,
    init: np.ndarray | None = None,
    precond: np.ndarray | None = None,
) -> RegressionPosterior:
    """Sample the density and summarize the draws.

    For a regression PosteriorDensity, init defaults to the MAP point (plus
    the initial log sigma in unknown-noise mode) and precond to its Laplace
    factor; pole regimes are classified from the traces. Generic targets must
    pass init and are always reported as the normal regime.
    """
    is_regression = isinstance(density, PosteriorDensity)
    if init is None:
        if not is_regression:
            raise ValidationError("generic targets require an explicit init state")
        h_map = map_estimate(density)
        init = density.initial_state(h_map)
    init = np.asarray(init, dtype=float).reshape(-1)
    dim = getattr(density, "dim", init.shape[0])
    if init.shape[0] != dim:
        raise ValidationError(f"init has length {init.shape[0]}, target dimension is {dim}")
    if precond is None:
        precond = laplace_precondition(init, density) if is_regression else np.eye(dim)
    zt = _ZTarget(density, np.asarray(precond, dtype=float))

    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    if config.jobs > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=min(config.jobs, config.chains)) as pool:
            results = list(pool.map(lambda s: _run_chain(zt, init, config, s), seeds))
    else:
        results = [_run_chain(zt, init, config, s) for s in seeds]

    chain_draws = [r[0] for r in results]
    samples = np.vstack(chain_draws)
    log_posts = np.concatenate([r[1] for r in results])
    stats = tuple(r[2] for r in results)
    diagnostics = Diagnostics(chains=stats, rhat_max=_split_rhat(chain_draws))

    if is_regression:
        n_state = density.n_points
        sigma_samples = None if density.noise.is_known else np.exp(samples[:, -1])
        h_norm_chains = [np.linalg.norm(c[:, : density.n_basis], axis=1) for c in chain_draws]
        sigma_chains = None if density.noise.is_known else [np.exp(c[:, -1]) for c in chain_draws]
        y_sd = float(np.std(density.y))
        regime = detect_poles(h_norm_chains, sigma_chains, density.h_mu_norm, y_sd)
    else:
        n_state = samples.shape[1]
        sigma_samples = None
        regime = Regime.NORMAL

    # A pole explains the divergences; only an unexplained majority is an error.
    if regime == Regime.NORMAL:
        total_post = sum(c.shape[0] for c in chain_draws)
        n_div = round(sum(s.divergence_rate * c.shape[0] for s, c in zip(stats, chain_draws)))
        if total_post > 0 and n_div / total_post > 0.5:
            raise DivergentChains(
                f"{n_div}/{total_post} post-burn-in proposals diverged; "
                "the posterior is badly scaled or sits on a pole"
            )

    h_hat, Sigma_hat = posterior_moments(samples[:, :n_state])
    if config.trace_path is not None:
        _write_trace(config.trace_path, samples, log_posts)
    return RegressionPosterior(
        samples=samples,
        log_posteriors=log_posts,
        h_hat=h_hat,
        Sigma_hat=Sigma_hat,
        regime=regime,
        diagnostics=diagnostics,
        sigma_y_samples=sigma_samples,
        n_basis=density.n_basis if is_regression else None,
        n_null=density.n_null if is_regression else None,
        config=config,
    )
