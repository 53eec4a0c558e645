"""Direct solution of velocity/pressure saddle-point systems.

The full block system

    [ A   B^T ] [ w ]   [ rhs_u ]
    [ B   0   ] [ q ] = [ rhs_p ]

is reduced over the Dirichlet mask, the constant pressure mode is pinned by
a mean-zero constraint row (weights c_i = int(psi_i)), and the augmented
sparse matrix is factorized directly.  Desk-scale systems stay well inside
what a sparse LU handles, and the energy audit needs residuals near
round-off, which an exact factorization delivers.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError, SolverError


@dataclass
class SaddleSystem:
    """Velocity block, divergence block, right-hand sides and Dirichlet mask."""

    A: sp.spmatrix
    B: sp.spmatrix
    rhs_u: np.ndarray
    dirichlet: np.ndarray
    rhs_p: np.ndarray = None
    mean_weights: np.ndarray = field(default=None)  # pressure integral weights

    def __post_init__(self):
        n_u = self.A.shape[0]
        if self.A.shape != (n_u, n_u):
            raise ValueError("velocity block must be square")
        if self.B.shape[1] != n_u:
            raise ValueError("divergence block must map velocity dofs")
        if self.rhs_u.shape != (n_u,):
            raise ValueError("velocity rhs has wrong length")
        if self.dirichlet.shape != (n_u,):
            raise ValueError("Dirichlet mask has wrong length")
        if self.rhs_p is None:
            self.rhs_p = np.zeros(self.B.shape[0])


def solve_saddle(system, tol=1e-10):
    """Solve the saddle system to a relative residual <= tol.

    Returns (velocity, pressure) as plain coefficient arrays; the velocity
    carries zeros on Dirichlet dofs and the pressure integrates to zero.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    free = ~system.dirichlet
    A = system.A.tocsr()
    B = system.B.tocsr()
    a_red = A[free][:, free].tocsc()
    b_red = B[:, free].tocsc()
    f_red = system.rhs_u[free]
    n_f, n_p = a_red.shape[0], B.shape[0]

    if n_p == 0:
        blocks = a_red
        rhs = f_red
    else:
        c = system.mean_weights
        if c is None:
            c = np.ones(n_p)
        c_col = sp.csc_matrix(c.reshape(-1, 1))
        blocks = sp.bmat(
            [
                [a_red, b_red.T, None],
                [b_red, None, c_col],
                [None, c_col.T, None],
            ],
            format="csc",
        )
        rhs = np.concatenate([f_red, system.rhs_p, [0.0]])

    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.MatrixRankWarning)
        try:
            solution = spla.spsolve(blocks, rhs)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SingularSystemError(f"saddle system factorization failed: {exc}")
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError("saddle system is singular (non-finite solution)")

    u_red = solution[:n_f]
    p = solution[n_f : n_f + n_p]

    resid_u = a_red @ u_red - f_red
    if n_p:
        resid_u = resid_u + b_red.T @ p
        resid_p = b_red @ u_red - system.rhs_p
    else:
        resid_p = np.zeros(0)
    res = np.sqrt(np.dot(resid_u, resid_u) + np.dot(resid_p, resid_p))
    rhs_scale = np.sqrt(np.dot(f_red, f_red) + np.dot(system.rhs_p, system.rhs_p))
    rel = res / rhs_scale if rhs_scale > 0.0 else res
    if rel > tol:
        raise SolverError(
            f"saddle solve reached relative residual {rel:.3e} > tol {tol:.1e}",
            achieved=rel,
        )

    u_full = np.zeros(system.A.shape[0])
    u_full[free] = u_red
    return u_full, p
