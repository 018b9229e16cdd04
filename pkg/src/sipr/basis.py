"""Orthonormal coordinates for the data-spanned function subspace.

The N datapoints span an (N - N0)-dimensional space of kernel combinations
satisfying the growth constraint, plus the N0-dimensional polynomial
nullspace. This module builds a norm-orthonormal basis H for the kernel part
(iteratively: each new point contributes its test function against the
points before it, giving H a staircase zero pattern), and the extended
objects used by regression:

    H* = [[H, 0], [0, I_N0]]          (N + N0, N)
    E* = [G, M^T] H* = [G H, M^T]     (N, N), invertible

Observed values y correspond to subspace coordinates h* with y = E* h*, and a
Gaussian noise covariance pulls back to Sigma_inv = E*^T Sigma_y^-1 E*.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, null_space, solve_triangular

from ._linalg import solve_square
from .errors import NotPositiveDefinite, SingularSystem, TooFewPoints
from .geometry import (
    Regularity,
    as_points,
    as_regularity,
    eta_norm_constant,
    greens_matrix,
    greens_vector,
    monomial_matrix,
    monomial_vector,
    nullspace_dim,
)
from .interpolate import test_function


@dataclass(eq=False)
class SubspaceBasis:
    """Norm-orthonormal basis of the data-spanned subspace for one point set."""

    X: np.ndarray  # (N, D)
    eta: Regularity
    H: np.ndarray  # (N, Nh) coefficient columns, M H = 0, C H^T G H = I
    G: np.ndarray = field(repr=False)  # (N, N)
    M: np.ndarray = field(repr=False)  # (N0, N)

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_null(self) -> int:
        return self.M.shape[0]

    @property
    def n_basis(self) -> int:
        return self.H.shape[1]

    @cached_property
    def Hstar(self) -> np.ndarray:
        """Block-diagonal extension of H by the polynomial identity."""
        N0 = self.n_null
        top = np.hstack([self.H, np.zeros((self.n_points, N0))])
        bot = np.hstack([np.zeros((N0, self.n_basis)), np.eye(N0)])
        return np.vstack([top, bot])

    @cached_property
    def Estar(self) -> np.ndarray:
        """Map from subspace coordinates to function values at the datapoints."""
        return np.hstack([self.G @ self.H, self.M.T])

    def spline_coefficients(self, h_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Kernel and polynomial coefficients (a, c) of the function at h*."""
        h_star = np.asarray(h_star, dtype=float).reshape(-1)[: self.n_points]
        return self.H @ h_star[: self.n_basis], h_star[self.n_basis :]


def _fix_sign(h: np.ndarray) -> np.ndarray:
    """Flip the column so its last nonzero entry is positive."""
    mag = np.abs(h)
    tol = 1e-12 * mag.max(initial=0.0)
    nz = np.nonzero(mag > tol)[0]
    if nz.size and h[nz[-1]] < 0:
        return -h
    return h


def build_orthonormal_basis(X, eta) -> SubspaceBasis:
    """Construct the basis column by column in datapoint order.

    Column 0 spans the one-dimensional subspace of the first N0 + 1 points
    (the kernel of their monomial matrix); column j is the test function of
    point N0 + 1 + j against all earlier points. Each column is scaled to
    unit norm and sign-fixed so the construction is deterministic.
    """
    reg = as_regularity(eta)
    X = as_points(X)
    N, D = X.shape
    N0 = nullspace_dim(D, reg)
    if N < N0 + 1:
        raise TooFewPoints(f"need at least {N0 + 1} points, got {N}")
    G = greens_matrix(X, reg)
    M = monomial_matrix(X, reg)
    C = eta_norm_constant(D, reg)
    Nh = N - N0

    H = np.zeros((N, Nh))
    ker = null_space(M[:, : N0 + 1])
    if ker.shape[1] != 1:
        raise SingularSystem(
            "the first N0 + 1 points do not span a one-dimensional subspace "
            "(their monomial matrix is rank-deficient)"
        )
    H[: N0 + 1, 0] = ker[:, 0]
    for j in range(1, Nh):
        i = N0 + j  # 0-based index of the point this column adds
        tf = test_function(X[:i], X[i], reg)
        H[i, j] = tf.a_t
        H[:i, j] = tf.a

    for j in range(Nh):
        q = C * float(H[:, j] @ G @ H[:, j])
        if not np.isfinite(q) or q <= 0.0:
            raise SingularSystem(f"basis column {j} has non-positive squared norm ({q:.3e})")
        H[:, j] = _fix_sign(H[:, j] / np.sqrt(q))

    # The column solves leave O(eps * cond) cross terms at large N and high
    # eta, so re-orthonormalize once against the computed Gram matrix. R is
    # upper triangular with a positive diagonal: H @ inv(R) only mixes
    # earlier columns into later ones, which keeps the staircase pattern and
    # the sign convention intact.
    gram = C * (H.T @ G @ H)
    try:
        R = cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("basis Gram matrix lost positive definiteness") from exc
    H = solve_triangular(R.T, H.T, lower=True).T

    return SubspaceBasis(X=X, eta=reg, H=H, G=G, M=M)


def to_subspace(basis: SubspaceBasis, y, sigma_y) -> tuple[np.ndarray, np.ndarray]:
    """Pull the observations and their noise model into subspace coordinates.

    Returns (h_mu_star, Sigma_inv): the coordinates of the interpolant
    (E* h* = y) and the precision E*^T Sigma_y^-1 E*. sigma_y may be a
    positive scalar standard deviation or a full SPD covariance matrix.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != basis.n_points:
        raise SingularSystem(f"{basis.n_points} points but {y.shape[0]} values")
    E = basis.Estar
    h_mu_star = solve_square(E, y)
    sig = np.asarray(sigma_y, dtype=float)
    if sig.ndim == 0:
        s = float(sig)
        if not np.isfinite(s) or s <= 0.0:
            raise NotPositiveDefinite(f"noise standard deviation must be positive, got {s!r}")
        Sigma_inv = (E.T @ E) / s**2
    else:
        if sig.shape != (basis.n_points, basis.n_points):
            raise NotPositiveDefinite(f"noise covariance has shape {sig.shape}")
        try:
            cf = cho_factor(sig)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("noise covariance is not positive definite") from exc
        Sigma_inv = E.T @ cho_solve(cf, E)
    Sigma_inv = 0.5 * (Sigma_inv + Sigma_inv.T)
    return h_mu_star, Sigma_inv


def eval_functional(basis: SubspaceBasis, x_t) -> np.ndarray:
    """Vector e with e . h* = value at x_t of the function with coordinates h*."""
    g = greens_vector(basis.X, x_t, basis.eta)
    m = monomial_vector(np.asarray(x_t, dtype=float).reshape(-1), basis.eta, dim=basis.dim)
    return np.concatenate([basis.H.T @ g, m])
