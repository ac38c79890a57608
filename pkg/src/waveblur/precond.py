"""Diagonal preconditioners for the wavelet-domain Hessian ``M = Theta_K^T Theta_K``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import chunk_bounds
from .errors import BadEpsilon, MemoryGuard

__all__ = ["DiagonalPreconditioner", "gram_diagonals", "identity", "jacobi", "spai"]

# cap on nnz(M) relative to nnz(Theta_K)
DEFAULT_GUARD_FACTOR = 50
_COLUMN_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class DiagonalPreconditioner:
    p: np.ndarray
    kind: str
    eps: float | None = None

    def __post_init__(self):
        if not np.all(self.p > 0):
            raise ValueError("preconditioner entries must be positive")

    @property
    def n(self) -> int:
        return len(self.p)


def identity(n: int) -> DiagonalPreconditioner:
    return DiagonalPreconditioner(np.ones(n), "identity")


def gram_diagonals(op, max_nnz: int | None = None):
    """Diagonals of ``M = A^T A`` and ``M^2`` for ``A = Theta_K``.

    ``M`` is formed explicitly, one block of columns at a time; the running
    count of its nonzeros is checked against ``max_nnz`` (default 50 times
    the nonzeros of ``A``).
    """
    A = op.csr
    n = op.n
    if max_nnz is None:
        max_nnz = DEFAULT_GUARD_FACTOR * max(op.nnz, 1)

    v2 = op.values**2
    diag_m = np.bincount(op.col_indices, weights=v2, minlength=n).astype(np.float64)

    At = op.csr_t
    diag_m2 = np.zeros(n)
    seen = 0
    for a, b in chunk_bounds(n, max(1, n // _COLUMN_BLOCK)):
        block = At @ A[:, a:b]
        seen += block.nnz
        if seen > max_nnz:
            raise MemoryGuard(
                f"M = Theta_K^T Theta_K exceeds {max_nnz} nonzeros; raise the cap or lower K"
            )
        block = block.tocsc()
        diag_m2[a:b] = np.asarray(block.multiply(block).sum(axis=0)).ravel()
    return diag_m, diag_m2


def jacobi(op, eps: float | None = None) -> DiagonalPreconditioner:
    """``p = max(diag(M), eps)``; ``eps`` defaults to ``1e-3 * max(diag(M))``."""
    diag_m = np.bincount(op.col_indices, weights=op.values**2, minlength=op.n).astype(np.float64)
    if eps is None:
        eps = 1e-3 * float(diag_m.max()) if diag_m.size and diag_m.max() > 0 else 1.0
    if not eps > 0:
        raise BadEpsilon(f"Jacobi epsilon must be positive, got {eps}")
    return DiagonalPreconditioner(np.maximum(diag_m, eps), "jacobi", eps)


def spai(op, max_nnz: int | None = None) -> DiagonalPreconditioner:
    """Diagonal minimizer of ``||I - P^{-1} M||_F``: ``p = M^2[i,i] / M[i,i]``.

    Coordinates with an empty column get ``p = 1``.
    """
    diag_m, diag_m2 = gram_diagonals(op, max_nnz)
    p = np.ones(op.n)
    nz = diag_m > 0
    p[nz] = diag_m2[nz] / diag_m[nz]
    return DiagonalPreconditioner(p, "spai")
