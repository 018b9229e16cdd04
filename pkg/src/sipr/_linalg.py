"""Dense solves with an explicit condition-number gate.

Both helpers factor once, estimate the reciprocal condition number from the
factorization, and raise SingularSystem below RCOND_MIN instead of returning
garbage. The saddle systems are symmetric indefinite, so they go through the
Bunch-Kaufman path; general square systems use LU.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import get_lapack_funcs

from .errors import SingularSystem

RCOND_MIN = 1e-14


def solve_symmetric(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric indefinite A, gating on rcond."""
    A = np.ascontiguousarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    sytrf, sycon, sytrs = get_lapack_funcs(("sytrf", "sycon", "sytrs"), (A,))
    anorm = np.linalg.norm(A, 1)
    ldu, ipiv, info = sytrf(A)
    if info != 0:
        raise SingularSystem(f"symmetric factorization failed (info={info})")
    rcond, info = sycon(ldu, ipiv, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise SingularSystem(f"system too ill-conditioned to solve (rcond={rcond:.3e})")
    x, info = sytrs(ldu, ipiv, b)
    if info != 0:
        raise SingularSystem(f"symmetric solve failed (info={info})")
    return x


def solve_square(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for general square A, gating on rcond."""
    A = np.ascontiguousarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    getrf, gecon, getrs = get_lapack_funcs(("getrf", "gecon", "getrs"), (A,))
    anorm = np.linalg.norm(A, 1)
    lu, piv, info = getrf(A)
    if info != 0:
        raise SingularSystem(f"LU factorization failed (info={info})")
    rcond, info = gecon(lu, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise SingularSystem(f"system too ill-conditioned to solve (rcond={rcond:.3e})")
    x, info = getrs(lu, piv, b)
    if info != 0:
        raise SingularSystem(f"LU solve failed (info={info})")
    return x
