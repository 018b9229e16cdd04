"""Minimum-norm interpolation and the pointwise t-posterior built on it.

The interpolant through (X, y) is

    f(x) = sum_n a_n ||x - x_n||^(2 eta) + sum_v c_v x^v,   M a = 0,

obtained from the saddle system [[G, M^T], [M, 0]] [a; c] = [y; 0]. Among all
functions of finite norm that hit the data it minimizes the norm, and the
posterior of the function value at any other point is a Student-t centered on
it. Solves run in unit-box coordinates for conditioning; coefficients are
mapped back, so everything reported here is in the caller's original units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from ._linalg import solve_symmetric
from .errors import (
    CoincidesWithDatapoint,
    ConstraintViolated,
    DimensionMismatch,
    SingularSystem,
    TooFewPoints,
)
from .geometry import (
    DUPLICATE_TOL,
    KernelMatrices,
    Regularity,
    as_points,
    as_regularity,
    check_distinct,
    eta_norm_constant,
    greens_matrix,
    kernel_system,
    monomial_matrix,
    multi_indices,
    nullspace_dim,
    pairwise_sq_dists,
    unit_box_map,
)

# An interpolant whose squared norm falls below this fraction of ||y||^2 is
# treated as exactly polynomial data: the posterior collapses to a point mass.
POLYNOMIAL_TOL = 1e-12


def _rebase_polynomial(
    c: np.ndarray, indices: list[tuple[int, ...]], shift: np.ndarray, scale: float
) -> np.ndarray:
    """Re-express sum_v c_v ((x - shift)/scale)^v over plain monomials x^v.

    The substitution is affine, so the result lives on the same index set
    (every sub-index of an admissible index is admissible).
    """
    pos = {v: i for i, v in enumerate(indices)}
    out = np.zeros_like(c)
    for v, cv in zip(indices, c):
        if cv == 0.0:
            continue
        base = cv * scale ** (-sum(v))
        # expand prod_d (x_d - u_d)^(v_d) term by term
        per_dim = [
            [(k, math.comb(vd, k) * (-shift[d]) ** (vd - k)) for k in range(vd + 1)]
            for d, vd in enumerate(v)
        ]
        for combo in product(*per_dim):
            target = tuple(k for k, _ in combo)
            coeff = base
            for _, w in combo:
                coeff *= w
            out[pos[target]] += coeff
    return out


@dataclass(eq=False)
class InterpolationModel:
    """Fitted interpolant in original coordinates."""

    X: np.ndarray  # (N, D) datapoint locations
    y: np.ndarray  # (N,) values
    eta: Regularity
    a: np.ndarray  # (N,) kernel coefficients, M a = 0
    c: np.ndarray  # (N0,) polynomial coefficients over `indices`
    indices: list[tuple[int, ...]] = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_null(self) -> int:
        return len(self.indices)

    @cached_property
    def kernels(self) -> KernelMatrices:
        return kernel_system(self.X, self.eta)

    @cached_property
    def norm_sq(self) -> float:
        """Squared norm of the interpolant, eta_norm_sq of its coefficients."""
        return eta_norm_sq(self.a, self.kernels.G, self.eta, self.dim, M=self.kernels.M)

    def evaluate(self, probes) -> np.ndarray:
        """Interpolant values at probe points, shape (P,)."""
        P = as_points(probes)
        if P.shape[1] != self.dim:
            raise DimensionMismatch(f"probes have {P.shape[1]} features, data has {self.dim}")
        d2 = pairwise_sq_dists(P, self.X)
        vals = (d2**self.eta.value) @ self.a
        for v, cv in zip(self.indices, self.c):
            vals += cv * np.prod(P ** np.asarray(v, dtype=float), axis=1)
        return vals

    __call__ = evaluate


def solve_interpolation(X, y, eta) -> InterpolationModel:
    """Fit the minimum-norm interpolant through (X, y)."""
    reg = as_regularity(eta)
    X = as_points(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    N, D = X.shape
    if y.shape[0] != N:
        raise DimensionMismatch(f"{N} points but {y.shape[0]} values")
    if not np.all(np.isfinite(y)):
        raise DimensionMismatch("values contain non-finite entries")
    N0 = nullspace_dim(D, reg)
    if N < N0 + 1:
        raise TooFewPoints(
            f"need at least {N0 + 1} points for eta={reg.value:g} in {D} dimension(s), got {N}"
        )
    check_distinct(X)

    box = unit_box_map(X)
    U = box.forward(X)
    sys = kernel_system(U, reg)
    rhs = np.concatenate([y, np.zeros(N0)])
    sol = solve_symmetric(sys.saddle, rhs)
    a_u, c_u = sol[:N], sol[N:]

    indices = multi_indices(D, reg)
    a = a_u * box.scale ** (-2.0 * reg.value)
    c = _rebase_polynomial(c_u, indices, box.shift, box.scale)
    return InterpolationModel(X=X, y=y, eta=reg, a=a, c=c, indices=indices)


def evaluate(model: InterpolationModel, probes) -> np.ndarray:
    """Module-level alias for InterpolationModel.evaluate."""
    return model.evaluate(probes)


def eta_norm_sq(a, G, eta, dim: int, M=None) -> float:
    """Squared norm of the function with kernel coefficients a on matrix G.

    Requires the growth-rate constraint M a = 0; pass M to have it checked
    (violations beyond 1e-6 raise ConstraintViolated, since the quadratic
    form has no norm meaning off the constraint set).
    """
    reg = as_regularity(eta)
    a = np.asarray(a, dtype=float).reshape(-1)
    G = np.asarray(G, dtype=float)
    if G.shape != (a.shape[0], a.shape[0]):
        raise DimensionMismatch(f"G has shape {G.shape}, coefficients have length {a.shape[0]}")
    if M is not None:
        resid = np.abs(np.asarray(M) @ a)
        scale = max(float(np.abs(a).max(initial=0.0)), 1.0)
        if resid.size and resid.max() > 1e-6 * scale:
            raise ConstraintViolated(
                f"coefficients violate the growth-rate constraint (|M a| up to {resid.max():.3e})"
            )
    return eta_norm_constant(dim, reg) * float(a @ G @ a)


# --- test functions -------------------------------------------------------


@dataclass(eq=False)
class TestFunction:
    """Minimum-norm function with value 1 at x_t and 0 at every datapoint.

    Internally just the interpolant through the augmented points [x_t; X]
    with values [1, 0, ..., 0]; a_t is the coefficient on the probe's kernel.
    """

    x_t: np.ndarray
    model: InterpolationModel  # over augmented points, probe first

    @property
    def a_t(self) -> float:
        return float(self.model.a[0])

    @property
    def a(self) -> np.ndarray:
        return self.model.a[1:]

    @property
    def c(self) -> np.ndarray:
        return self.model.c

    @cached_property
    def norm_sq(self) -> float:
        return self.model.norm_sq

    def evaluate(self, probes) -> np.ndarray:
        return self.model.evaluate(probes)

    __call__ = evaluate


def _nearest_datapoint(X: np.ndarray, x_t: np.ndarray) -> tuple[int, float]:
    """Index and unit-box distance of the datapoint closest to x_t."""
    box = unit_box_map(X)
    du = box.forward(X) - box.forward(x_t[None, :])
    d = np.sqrt(np.einsum("nd,nd->n", du, du))
    n = int(np.argmin(d))
    return n, float(d[n])


def test_function(X, x_t, eta) -> TestFunction:
    """Build the test function of probe x_t against datapoints X."""
    X = as_points(X)
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    if x_t.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"probe has {x_t.shape[0]} features, data has {X.shape[1]}")
    n, dist = _nearest_datapoint(X, x_t)
    if dist < DUPLICATE_TOL:
        raise CoincidesWithDatapoint(f"probe coincides with datapoint {n}")
    X_aug = np.vstack([x_t[None, :], X])
    y_aug = np.zeros(X_aug.shape[0])
    y_aug[0] = 1.0
    model = solve_interpolation(X_aug, y_aug, eta)
    return TestFunction(x_t=x_t, model=model)


# --- pointwise posterior --------------------------------------------------


@dataclass(frozen=True)
class PointwisePosterior:
    """Student-t posterior of the function value at one probe point.

    scale is the t scale parameter; sd is the standard deviation and exists
    only for dof > 2 (NaN otherwise). scale == 0 marks a point mass (probe at
    a datapoint, or data that is exactly polynomial).
    """

    mean: float
    scale: float
    dof: int
    sd: float

    @property
    def is_point_mass(self) -> bool:
        return self.scale == 0.0


def _t_posterior(mean: float, dof: int, norm_ratio_sq: float) -> PointwisePosterior:
    scale = math.sqrt(norm_ratio_sq / dof)
    sd = math.sqrt(norm_ratio_sq / (dof - 2)) if dof > 2 else float("nan")
    if norm_ratio_sq == 0.0:
        sd = 0.0
    return PointwisePosterior(mean=mean, scale=scale, dof=dof, sd=sd)


def pointwise_posterior(X, y, eta, x_t, model: InterpolationModel | None = None) -> PointwisePosterior:
    """Posterior of f(x_t) given exact observations (X, y).

    dof = N - N0. Pass a pre-fitted model to avoid re-solving when probing
    many points against the same data.
    """
    if model is None:
        model = solve_interpolation(X, y, eta)
    X, y = model.X, model.y
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    dof = model.n_points - model.n_null

    n, dist = _nearest_datapoint(X, x_t)
    if dist < DUPLICATE_TOL:
        return PointwisePosterior(mean=float(y[n]), scale=0.0, dof=dof, sd=0.0)

    norm_f = model.norm_sq
    mean = float(model.evaluate(x_t[None, :])[0])
    if norm_f <= POLYNOMIAL_TOL * float(y @ y):
        # data lies exactly on a polynomial: zero norm, degenerate posterior
        return PointwisePosterior(mean=mean, scale=0.0, dof=dof, sd=0.0)
    try:
        tf = test_function(X, x_t, eta)
    except SingularSystem:
        # The data system itself solved, so the one-row augmentation can only
        # degenerate when the probe sits numerically on a datapoint; take the
        # coincident limit, where the scale vanishes.
        return PointwisePosterior(mean=mean, scale=0.0, dof=dof, sd=0.0)
    return _t_posterior(mean, dof, norm_f / tf.norm_sq)


def draw_sample_path(X, y, eta, grid, seed) -> np.ndarray:
    """One posterior sample path over grid points, drawn sequentially.

    Each grid value is drawn from its pointwise t-posterior and then added to
    the conditioning set, so later grid points see earlier draws. Grid points
    that land on existing points reproduce their value exactly and add
    nothing. Deterministic for a fixed seed.
    """
    reg = as_regularity(eta)
    grid = as_points(grid)
    rng = np.random.default_rng(seed)
    X_cur = as_points(X).copy()
    y_cur = np.asarray(y, dtype=float).reshape(-1).copy()
    out = np.empty(grid.shape[0])
    model = solve_interpolation(X_cur, y_cur, reg)
    for i, g in enumerate(grid):
        pp = pointwise_posterior(None, None, reg, g, model=model)
        if pp.is_point_mass:
            out[i] = pp.mean
            continue
        out[i] = pp.mean + pp.scale * rng.standard_t(pp.dof)
        X_cur = np.vstack([X_cur, g[None, :]])
        y_cur = np.append(y_cur, out[i])
        model = solve_interpolation(X_cur, y_cur, reg)
    return out
