"""Solvers for the symmetric positive definite systems produced by assembly.

1D matrices are narrowly banded (ascending dof numbering), so they get a
banded Cholesky factorization.  2D systems are solved with Jacobi-preconditioned
conjugate gradients.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["LinearSolveError", "spd_solver"]


class LinearSolveError(RuntimeError):
    """A symmetric positive definite solve failed (factorization or iteration)."""


def _banded_cholesky(A: sp.csr_matrix) -> Callable[[np.ndarray], np.ndarray]:
    coo = A.tocoo()
    bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    n = A.shape[0]
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        ab[bw - k, k:] = A.diagonal(k)
    try:
        fac = scipy.linalg.cholesky_banded(ab)
    except scipy.linalg.LinAlgError as exc:
        raise LinearSolveError(f"banded Cholesky failed: {exc}") from exc

    def solve(b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve_banded((fac, False), b)

    return solve


def _jacobi_pcg(A: sp.csr_matrix, rtol: float) -> Callable[[np.ndarray], np.ndarray]:
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise LinearSolveError("non-positive diagonal entry; matrix is not SPD")
    M = spla.LinearOperator((n, n), matvec=lambda v: v / diag)

    def solve(b: np.ndarray) -> np.ndarray:
        x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=10 * n, M=M)
        if info != 0:
            raise LinearSolveError(f"PCG did not converge (info={info})")
        return x

    return solve


def spd_solver(
    A: sp.csr_matrix, dimension: int, rtol: float = 1e-12
) -> Callable[[np.ndarray], np.ndarray]:
    """Return a reusable solve callable for the SPD matrix ``A``."""
    if dimension == 1:
        return _banded_cholesky(A)
    return _jacobi_pcg(A, rtol)
