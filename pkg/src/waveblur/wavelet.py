"""Orthogonal periodic separable wavelet transforms with a flat subband layout.

Coefficients are stored as one flat vector. Bands are ordered coarse to fine:
the approximation band of the deepest level first, then for each level from
``J`` down to 1 the detail orientations in lexicographic order of ``e``.
Within a band, translations are stored in row-major order.

Level ``t = 1`` is the finest. Orientation ``e`` holds one bit per axis, 1
meaning the highpass filter was applied along that axis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from . import _filter_tables
from .errors import BandNotFound, ShapeMismatch, UnsupportedFilter

__all__ = [
    "Family",
    "FilterPair",
    "Band",
    "SubbandLayout",
    "WaveletBasis",
    "WaveletCoeffs",
    "make_filters",
    "parse_filter",
    "analyze",
    "synthesize",
    "single_wavelet",
]


class Family(str, Enum):
    HAAR = "haar"
    DAUBECHIES = "daubechies"
    SYMMLET = "symmlet"


FAMILY_IDS = {Family.HAAR: 0, Family.DAUBECHIES: 1, Family.SYMMLET: 2}


@dataclass(frozen=True, eq=False)
class FilterPair:
    family: Family
    order: int
    lowpass: np.ndarray
    highpass: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FilterPair):
            return NotImplemented
        return (self.family, self.length, self.order) == (other.family, other.length, other.order)

    def __hash__(self):
        return hash((self.family, self.order))

    @property
    def name(self) -> str:
        if self.family is Family.HAAR:
            return "haar"
        return ("db" if self.family is Family.DAUBECHIES else "sym") + str(self.order)

    @property
    def length(self) -> int:
        return len(self.lowpass)

    def orthonormality_residual(self) -> float:
        """Largest violation of the double-shift orthonormality relations."""
        h = self.lowpass
        l = len(h)
        res = abs(h.sum() - math.sqrt(2.0))
        for k in range(0, l // 2 + 1):
            target = 1.0 if k == 0 else 0.0
            res = max(res, abs(np.dot(h[: l - 2 * k], h[2 * k :]) - target))
        return float(res)


def _quadrature_mirror(h: np.ndarray) -> np.ndarray:
    l = len(h)
    return np.array([(-1) ** k * h[l - 1 - k] for k in range(l)])


def make_filters(family, order: int = 1) -> FilterPair:
    """Return the orthogonal filter pair for ``family`` and ``order``.

    Supported: Haar; Daubechies 2-10; Symmlet 4-8. Orthonormality of the
    tabulated coefficients is checked here and must hold to 1e-12.
    """
    try:
        family = Family(family)
    except ValueError:
        raise UnsupportedFilter(f"unknown wavelet family {family!r}") from None
    if family is Family.HAAR:
        if order not in (1,):
            raise UnsupportedFilter(f"Haar has a single order (1), got {order}")
        coeffs = _filter_tables.HAAR
    elif family is Family.DAUBECHIES:
        if order == 1:
            coeffs = _filter_tables.HAAR
        elif order in _filter_tables.DAUBECHIES:
            coeffs = _filter_tables.DAUBECHIES[order]
        else:
            raise UnsupportedFilter(f"Daubechies order {order} not in 2..10")
    else:
        if order not in _filter_tables.SYMMLET:
            raise UnsupportedFilter(f"Symmlet order {order} not in 4..8")
        coeffs = _filter_tables.SYMMLET[order]

    h = np.array(coeffs, dtype=np.float64)
    h.setflags(write=False)
    g = _quadrature_mirror(h)
    g.setflags(write=False)
    pair = FilterPair(family, order, h, g)
    res = pair.orthonormality_residual()
    if res > 1e-12:
        raise UnsupportedFilter(
            f"{family.value}{order} coefficients fail orthonormality (residual {res:.2e})"
        )
    return pair


def parse_filter(name: str) -> FilterPair:
    """Parse CLI-style filter names: ``haar``, ``db4``, ``symmlet6``, ``sym6``."""
    s = name.strip().lower()
    if s == "haar":
        return make_filters(Family.HAAR, 1)
    for prefix, family in (
        ("symmlet", Family.SYMMLET),
        ("sym", Family.SYMMLET),
        ("daubechies", Family.DAUBECHIES),
        ("db", Family.DAUBECHIES),
    ):
        if s.startswith(prefix) and s[len(prefix) :].isdigit():
            return make_filters(family, int(s[len(prefix) :]))
    raise UnsupportedFilter(f"cannot parse filter name {name!r}")


@dataclass(frozen=True)
class Band:
    level: int
    orientation: tuple[int, ...]
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.level, self.orientation)


def _is_dyadic(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SubbandLayout:
    dims: tuple[int, ...]
    levels: int
    bands: tuple[Band, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims or len(dims) > 2:
            raise ShapeMismatch(f"only 1D and 2D grids are supported, got dims {dims}")
        if not all(_is_dyadic(n) for n in dims):
            raise ShapeMismatch(f"dims {dims} are not powers of two")
        J = self.levels
        if J < 1 or (1 << J) > min(dims):
            raise ShapeMismatch(f"depth J={J} too deep for dims {dims}")

        d = len(dims)
        bands = []
        offset = 0
        for t in range(J, 0, -1):
            shape = tuple(n >> t for n in dims)
            for e in itertools.product((0, 1), repeat=d):
                if not any(e) and t != J:
                    continue
                bands.append(Band(t, e, shape, offset))
                offset += math.prod(shape)
        object.__setattr__(self, "bands", tuple(bands))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @cached_property
    def _by_key(self) -> dict:
        return {b.key: i for i, b in enumerate(self.bands)}

    def band_index(self, level: int, orientation) -> int:
        key = (int(level), tuple(int(v) for v in np.atleast_1d(orientation)))
        try:
            return self._by_key[key]
        except KeyError:
            raise BandNotFound(f"no band at level {level}, orientation {key[1]}") from None

    def band(self, level: int, orientation) -> Band:
        return self.bands[self.band_index(level, orientation)]

    def locate(self, index: int) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
        """Map a flat coefficient index to (level, translation, orientation)."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        for b in self.bands:
            if index < b.offset + b.size:
                m = np.unravel_index(index - b.offset, b.shape)
                return b.level, tuple(int(v) for v in m), b.orientation
        raise AssertionError("unreachable")

    def flat_index(self, level: int, translation, orientation) -> int:
        b = self.band(level, orientation)
        m = tuple(int(v) % n for v, n in zip(np.atleast_1d(translation), b.shape))
        return b.offset + int(np.ravel_multi_index(m, b.shape))

    def level_map(self) -> np.ndarray:
        """Decomposition level of every flat coefficient."""
        out = np.empty(self.size, dtype=np.int64)
        for b in self.bands:
            out[b.slice] = b.level
        return out

    def is_approx(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        b = self.bands[0]
        out[b.slice] = True
        return out


@dataclass(frozen=True)
class WaveletBasis:
    filters: FilterPair
    dims: tuple[int, ...]
    levels: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))

    @cached_property
    def layout(self) -> SubbandLayout:
        return SubbandLayout(self.dims, self.levels)

    @property
    def size(self) -> int:
        return self.layout.size

    @cached_property
    def _index_cache(self) -> dict:
        # (signal length) -> list of gather indices, one per filter tap
        cache = {}
        l = self.filters.length
        for t in range(self.levels):
            for n in self.dims:
                L = n >> t
                if L not in cache:
                    base = 2 * np.arange(L // 2)
                    cache[L] = [(base + k) % L for k in range(l)]
        return cache

    def analyze(self, u) -> np.ndarray:
        """Flat coefficient vector of ``u`` (hot path, no wrapper)."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape != self.dims:
            raise ShapeMismatch(f"image shape {u.shape} != basis dims {self.dims}")
        out = np.empty(self.size, dtype=np.float64)
        bands = self.layout.bands
        d = len(self.dims)
        approx = u
        band_iter = {b.key: b for b in bands}
        for t in range(1, self.levels + 1):
            parts = {(): approx}
            for axis in range(d):
                nxt = {}
                for e, arr in parts.items():
                    lo, hi = self._analyze_axis(arr, axis)
                    nxt[e + (0,)] = lo
                    nxt[e + (1,)] = hi
                parts = nxt
            for e, arr in parts.items():
                if any(e):
                    out[band_iter[(t, e)].slice] = arr.ravel()
            approx = parts[(0,) * d]
        out[bands[0].slice] = approx.ravel()
        return out

    def synthesize(self, x) -> np.ndarray:
        x = np.asarray(getattr(x, "values", x), dtype=np.float64)
        if x.shape != (self.size,):
            raise ShapeMismatch(f"coefficient vector length {x.shape} != {self.size}")
        bands = self.layout.bands
        band_iter = {b.key: b for b in bands}
        d = len(self.dims)
        approx = x[bands[0].slice].reshape(bands[0].shape)
        for t in range(self.levels, 0, -1):
            shape = tuple(n >> t for n in self.dims)
            parts = {(0,) * d: approx}
            for e in itertools.product((0, 1), repeat=d):
                if any(e):
                    parts[e] = x[band_iter[(t, e)].slice].reshape(shape)
            # merge the two halves along each axis, last axis first
            for axis in range(d - 1, -1, -1):
                parts = {
                    e: self._synthesize_axis(parts[e + (0,)], parts[e + (1,)], axis)
                    for e in itertools.product((0, 1), repeat=axis)
                }
            approx = parts[()]
        return approx

    def _analyze_axis(self, x: np.ndarray, axis: int):
        x = np.moveaxis(x, axis, -1)
        L = x.shape[-1]
        idx = self._index_cache[L]
        h, g = self.filters.lowpass, self.filters.highpass
        lo = np.zeros(x.shape[:-1] + (L // 2,))
        hi = np.zeros_like(lo)
        for k in range(len(h)):
            xs = x[..., idx[k]]
            lo += h[k] * xs
            hi += g[k] * xs
        return np.moveaxis(lo, -1, axis), np.moveaxis(hi, -1, axis)

    def _synthesize_axis(self, lo: np.ndarray, hi: np.ndarray, axis: int):
        lo = np.moveaxis(lo, axis, -1)
        hi = np.moveaxis(hi, axis, -1)
        L = 2 * lo.shape[-1]
        idx = self._index_cache[L]
        h, g = self.filters.lowpass, self.filters.highpass
        out = np.zeros(lo.shape[:-1] + (L,))
        for k in range(len(h)):
            out[..., idx[k]] += h[k] * lo + g[k] * hi
        return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class WaveletCoeffs:
    layout: SubbandLayout
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.layout.size,):
            raise ShapeMismatch(
                f"{self.values.shape[0]} coefficients for a layout of size {self.layout.size}"
            )

    def band(self, level: int, orientation) -> np.ndarray:
        b = self.layout.band(level, orientation)
        return self.values[b.slice].reshape(b.shape)


def analyze(signal, basis: WaveletBasis) -> WaveletCoeffs:
    """Forward transform ``x = Psi^* u`` with periodic boundaries."""
    return WaveletCoeffs(basis.layout, basis.analyze(signal))


def synthesize(coeffs, basis: WaveletBasis) -> np.ndarray:
    """Inverse transform ``u = Psi x``; also the adjoint of :func:`analyze`."""
    if isinstance(coeffs, WaveletCoeffs) and coeffs.layout != basis.layout:
        raise ShapeMismatch("coefficient layout does not match basis")
    return basis.synthesize(coeffs)


def single_wavelet(basis: WaveletBasis, level: int, orientation) -> np.ndarray:
    """The synthesized basis function of band (level, orientation) at translation 0."""
    b = basis.layout.band(level, orientation)
    x = np.zeros(basis.size)
    x[b.offset] = 1.0
    return basis.synthesize(x)
