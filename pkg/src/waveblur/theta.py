"""Wavelet representation of convolution operators and its sparse truncations.

For a circular convolution ``H`` every block of ``Theta = Psi^* H Psi``
between two subbands is a rectangular circulant matrix, so the whole operator
is held by one generator vector per ordered pair of bands. Each generator is
read off a single forward transform of a blurred wavelet.

Matrix convention: rows index output coefficients, columns index input
coefficients, ``Theta[mu, lam] = <H psi_lam, psi_mu>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._parallel import chunk_bounds, get_threads, pmap
from .errors import BandNotFound, ShapeMismatch, TooLarge
from .operators import Psf, apply_adjoint, convolve
from .wavelet import Band, SubbandLayout, WaveletBasis, single_wavelet

__all__ = [
    "CirculantTheta",
    "SparseOperator",
    "WeightVector",
    "build_theta_conv",
    "brute_force_theta",
    "theta_of_matrix",
    "expand_block",
    "expand_theta",
    "threshold_naive",
    "threshold_weighted",
    "spmv",
    "spmv_t",
    "approx_gradient",
    "ops_per_pixel",
]

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class CirculantTheta:
    """Exact wavelet representation of a convolution.

    ``generators[(i, o)]`` is the generator of the block mapping input band
    ``i`` to output band ``o`` (indices into ``basis.layout.bands``), shaped
    like the larger of the two band grids.
    """

    basis: WaveletBasis
    generators: dict

    @property
    def layout(self) -> SubbandLayout:
        return self.basis.layout

    def block_ids(self):
        """Block pairs ``(in, out)`` in canonical order: by output band, then input band."""
        nb = len(self.layout.bands)
        return [(i, o) for o in range(nb) for i in range(nb)]

    def total_entries(self) -> int:
        """Number of nonzero entries in the fully expanded matrix."""
        bands = self.layout.bands
        total = 0
        for (i, o), g in self.generators.items():
            total += np.count_nonzero(g) * min(bands[i].size, bands[o].size)
        return total


def _block_geometry(b_in: Band, b_out: Band):
    fine_in = b_in.level <= b_out.level
    if fine_in:
        return fine_in, b_in.shape, b_out.shape, 1 << (b_out.level - b_in.level)
    return fine_in, b_out.shape, b_in.shape, 1 << (b_in.level - b_out.level)


def _block_entries(b_in: Band, b_out: Band, v: np.ndarray, trans: np.ndarray):
    """Global (row, col) of the entries carrying generator index ``v``.

    ``trans`` runs over the smaller band's translations; together with ``v`` it
    fixes the translation on the larger band through the circulant rule.
    """
    fine_in, big, small, r = _block_geometry(b_in, b_out)
    vm = np.unravel_index(v, big)
    tm = np.unravel_index(trans, small)
    other = tuple((vm[d] + r * tm[d]) % big[d] for d in range(len(big)))
    other_flat = np.ravel_multi_index(other, big)
    if fine_in:
        return b_out.offset + trans, b_in.offset + other_flat
    return b_out.offset + other_flat, b_in.offset + trans


def build_theta_conv(psf: Psf, basis: WaveletBasis) -> CirculantTheta:
    """Exact circulant representation of the convolution by ``psf``.

    Per band, one wavelet at translation 0 is blurred by ``H`` and ``H^*``
    and both results are decomposed; every block generator is a slice of one
    of these decompositions.
    """
    if psf.dims != basis.dims:
        raise ShapeMismatch(f"PSF dims {psf.dims} != basis dims {basis.dims}")
    bands = basis.layout.bands

    def per_band(b: Band):
        psi = single_wavelet(basis, b.level, b.orientation)
        return basis.analyze(convolve(psi, psf)), basis.analyze(apply_adjoint(psi, psf))

    blurred = pmap(per_band, bands)
    generators = {}
    for o, b_out in enumerate(bands):
        for i, b_in in enumerate(bands):
            if b_in.level <= b_out.level:
                # g[m] = <H psi_{in,m}, psi_{out,0}> = <psi_{in,m}, H^* psi_{out,0}>
                g = blurred[o][1][b_in.slice].reshape(b_in.shape)
            else:
                # g[n] = <H psi_{in,0}, psi_{out,n}>
                g = blurred[i][0][b_out.slice].reshape(b_out.shape)
            g = g.copy()
            g.setflags(write=False)
            generators[(i, o)] = g
    return CirculantTheta(basis, generators)


def expand_block(theta: CirculantTheta, in_band, out_band) -> np.ndarray:
    """Dense ``(out size, in size)`` block rebuilt from its generator."""
    layout = theta.layout
    i = in_band if isinstance(in_band, int) else layout.band_index(*in_band)
    o = out_band if isinstance(out_band, int) else layout.band_index(*out_band)
    if not (0 <= i < len(layout.bands) and 0 <= o < len(layout.bands)):
        raise BandNotFound(f"band pair ({in_band}, {out_band}) not in layout")
    b_in, b_out = layout.bands[i], layout.bands[o]
    g = theta.generators[(i, o)].ravel()
    _, big, small, _ = _block_geometry(b_in, b_out)
    nbig, nsmall = int(np.prod(big)), int(np.prod(small))
    v = np.repeat(np.arange(nbig), nsmall)
    t = np.tile(np.arange(nsmall), nbig)
    rows, cols = _block_entries(b_in, b_out, v, t)
    block = np.zeros((b_out.size, b_in.size))
    block[rows - b_out.offset, cols - b_in.offset] = g[v]
    return block


def expand_theta(theta: CirculantTheta, limit: int = BRUTE_FORCE_LIMIT) -> np.ndarray:
    """Materialize the full ``N x N`` matrix (test and oracle use only)."""
    n = theta.layout.size
    if n > limit:
        raise TooLarge(f"refusing to expand a {n}x{n} matrix (limit {limit})")
    out = np.zeros((n, n))
    bands = theta.layout.bands
    for i, o in theta.block_ids():
        out[bands[o].slice, bands[i].slice] = expand_block(theta, i, o)
    return out


def brute_force_theta(apply_H, apply_Hadj, basis: WaveletBasis, limit: int = BRUTE_FORCE_LIMIT):
    """Dense ``Psi^* H Psi`` by transforming every basis function.

    Columns come from ``apply_H``; when it is ``None`` the rows are built from
    ``apply_Hadj`` instead. Costs ``N`` operator applications.
    """
    n = basis.size
    if n > limit:
        raise TooLarge(f"brute-force Theta limited to N <= {limit}, got {n}")
    out = np.empty((n, n))
    e = np.zeros(n)
    for lam in range(n):
        e[lam] = 1.0
        psi = basis.synthesize(e)
        if apply_H is not None:
            out[:, lam] = basis.analyze(apply_H(psi))
        else:
            out[lam, :] = basis.analyze(apply_Hadj(psi))
        e[lam] = 0.0
    return out


def theta_of_matrix(H: np.ndarray, basis: WaveletBasis) -> np.ndarray:
    """Change of basis of an explicit 1D operator matrix."""
    n = basis.size
    if H.shape != (n, n) or len(basis.dims) != 1:
        raise ShapeMismatch(f"matrix of shape {H.shape} does not match a 1D basis of size {n}")
    return brute_force_theta(lambda u: H @ u, None, basis)


@dataclass(frozen=True)
class WeightVector:
    """Positive per-coefficient weights, constant on each band."""

    sigma: np.ndarray

    @classmethod
    def uniform(cls, layout: SubbandLayout) -> "WeightVector":
        return cls(np.ones(layout.size))

    @classmethod
    def dyadic(cls, layout: SubbandLayout) -> "WeightVector":
        """``2^{-k}`` with ``k`` the scale counted from the coarsest band (k = 0).

        Detail level ``t`` sits at scale ``k = J - t``; the approximation band
        shares scale 0 with the coarsest details.
        """
        J = layout.levels
        return cls(2.0 ** -(J - layout.level_map()).astype(np.float64))

    def per_band(self, layout: SubbandLayout) -> np.ndarray:
        vals = np.array([self.sigma[b.offset] for b in layout.bands])
        for b, s in zip(layout.bands, vals):
            if not np.all(self.sigma[b.slice] == s):
                raise ValueError(f"weights are not constant on band {b.key}")
        if np.any(vals <= 0):
            raise ValueError("weights must be positive")
        return vals


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Compressed-row ``K``-sparse approximation of ``Theta``."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    layout: SubbandLayout | None = None
    filter_name: str | None = None
    _chunks: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        ro = self.row_offsets
        if ro.shape != (self.n + 1,) or ro[0] != 0 or np.any(np.diff(ro) < 0):
            raise ShapeMismatch("row_offsets must be nondecreasing, start at 0, length n+1")
        if len(self.col_indices) != ro[-1] or len(self.values) != ro[-1]:
            raise ShapeMismatch("row_offsets[-1] must equal the number of stored entries")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @classmethod
    def from_coo(cls, n, rows, cols, vals, layout=None, filter_name=None) -> "SparseOperator":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        vals = np.asarray(vals, dtype=np.float64)[order]
        if len(rows) > 1:
            same = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(same):
                raise ValueError("duplicate (row, col) entries")
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(n, offsets, cols, vals, layout, filter_name)

    @classmethod
    def from_dense(cls, A: np.ndarray, layout=None) -> "SparseOperator":
        rows, cols = np.nonzero(A)
        return cls.from_coo(A.shape[0], rows, cols, A[rows, cols], layout)

    @classmethod
    def empty(cls, n: int, layout=None) -> "SparseOperator":
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0), layout)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    @cached_property
    def csr_t(self) -> sp.csr_matrix:
        t = self.csr.T.tocsr()
        t.sort_indices()
        return t

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def _row_chunks(self, transpose: bool, n_threads: int):
        key = (transpose, n_threads)
        if key not in self._chunks:
            m = self.csr_t if transpose else self.csr
            self._chunks[key] = [(a, b, m[a:b]) for a, b in chunk_bounds(self.n, n_threads)]
        return self._chunks[key]

    def _apply(self, x, transpose: bool) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ShapeMismatch(f"vector of shape {x.shape} for an operator of size {self.n}")
        n_threads = get_threads()
        if n_threads == 1:
            return (self.csr_t if transpose else self.csr) @ x
        out = np.empty(self.n)
        chunks = self._row_chunks(transpose, n_threads)

        def work(chunk):
            a, b, m = chunk
            out[a:b] = m @ x

        pmap(work, chunks, n_threads)
        return out

    def matvec(self, x) -> np.ndarray:
        return self._apply(x, False)

    def rmatvec(self, y) -> np.ndarray:
        return self._apply(y, True)

    def ops_per_pixel(self) -> float:
        return 2.0 * self.nnz / self.n if self.n else 0.0


def _select(theta: CirculantTheta, K: int, band_sigma: np.ndarray) -> SparseOperator:
    layout = theta.layout
    bands = layout.bands
    n = layout.size
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if K == 0:
        return SparseOperator.empty(n, layout)

    block_list = theta.block_ids()
    keys, blk, vidx, mult = [], [], [], []
    for bid, (i, o) in enumerate(block_list):
        g = theta.generators[(i, o)].ravel()
        nz = np.flatnonzero(g)
        keys.append(np.abs(g[nz]) * band_sigma[i])
        blk.append(np.full(len(nz), bid, dtype=np.int64))
        vidx.append(nz)
        mult.append(np.full(len(nz), min(bands[i].size, bands[o].size), dtype=np.int64))
    keys = np.concatenate(keys)
    blk = np.concatenate(blk)
    vidx = np.concatenate(vidx)
    mult = np.concatenate(mult)

    # descending weighted magnitude, ties by (block, generator index) ascending
    order = np.lexsort((vidx, blk, -keys))
    cum = np.cumsum(mult[order])
    n_full = int(np.searchsorted(cum, K, side="right"))
    taken = order[:n_full]
    counts = mult[taken].copy()
    remaining = K - (int(cum[n_full - 1]) if n_full else 0)
    if n_full < len(order) and remaining > 0:
        taken = np.append(taken, order[n_full])
        counts = np.append(counts, remaining)

    rows, cols, vals = [], [], []
    taken_blk = blk[taken]
    for bid in np.unique(taken_blk):
        i, o = block_list[bid]
        sel = taken_blk == bid
        v_sel = vidx[taken][sel]
        c_sel = counts[sel]
        v = np.repeat(v_sel, c_sel)
        # translation index restarts at 0 for every generator entry
        starts = np.cumsum(c_sel) - c_sel
        t = np.arange(len(v)) - np.repeat(starts, c_sel)
        r, c = _block_entries(bands[i], bands[o], v, t)
        rows.append(r)
        cols.append(c)
        vals.append(theta.generators[(i, o)].ravel()[v])
    return SparseOperator.from_coo(
        n,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
        layout,
        theta.basis.filters.name,
    )


def threshold_naive(theta: CirculantTheta, K: int) -> SparseOperator:
    """Keep the ``K`` largest-magnitude entries of ``Theta``.

    Works on (generator entry, multiplicity) pairs without expanding the
    matrix. Ties are broken by (block, generator index) ascending.
    """
    return _select(theta, K, np.ones(len(theta.layout.bands)))


def threshold_weighted(theta: CirculantTheta, K: int, sigma: WeightVector) -> SparseOperator:
    """Keep the entries with the ``K`` largest ``|sigma[col] * Theta[row, col]|``.

    Stored values are the unweighted entries of ``Theta``.
    """
    return _select(theta, K, sigma.per_band(theta.layout))


def spmv(op: SparseOperator, x) -> np.ndarray:
    return op.matvec(x)


def spmv_t(op: SparseOperator, x) -> np.ndarray:
    return op.rmatvec(x)


def approx_gradient(op, x, x0) -> np.ndarray:
    """Gradient ``Theta_K^T (Theta_K x - x0)`` of the approximate data term."""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x.shape != x0.shape:
        raise ShapeMismatch(f"x {x.shape} and x0 {x0.shape} differ")
    return op.rmatvec(op.matvec(x) - x0)


def ops_per_pixel(op: SparseOperator) -> float:
    return op.ops_per_pixel()
