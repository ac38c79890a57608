"""Blur operators: PSF generators, circular convolution and the exact gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import j1

from .errors import BadSpec, ShapeMismatch
from .wavelet import WaveletBasis, WaveletCoeffs, _is_dyadic

__all__ = [
    "PsfSpec",
    "Psf",
    "DegradationModel",
    "ExactOperator",
    "generate_psf",
    "parse_psf_spec",
    "convolve",
    "apply_adjoint",
    "exact_gradient",
    "exact_ops_per_pixel",
    "add_noise",
    "psnr",
    "varying_blur_matrix",
]

KINDS = ("delta", "gaussian", "skewed", "motion", "airy", "defocus")


@dataclass(frozen=True)
class PsfSpec:
    """Parametric description of a point spread function.

    ``sigma`` is the Gaussian width in pixels (also the Airy scale), ``radius``
    the defocus disk radius. Motion blur uses ``points``, ``sigma1`` (spread of
    the control points), ``sigma2`` (width of the final smoothing) and ``seed``.
    """

    kind: str
    sigma: float = 0.0
    radius: float = 0.0
    points: int = 5
    sigma1: float = 8.0
    sigma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown PSF kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("gaussian", "skewed", "airy") and not self.sigma > 0:
            raise BadSpec(f"{self.kind} PSF needs sigma > 0, got {self.sigma}")
        if self.kind == "defocus" and not self.radius > 0:
            raise BadSpec(f"defocus PSF needs radius > 0, got {self.radius}")
        if self.kind == "motion":
            if self.points < 2:
                raise BadSpec(f"motion blur needs at least 2 points, got {self.points}")
            if not (self.sigma1 > 0 and self.sigma2 > 0):
                raise BadSpec("motion blur needs sigma1 > 0 and sigma2 > 0")

    def label(self) -> str:
        if self.kind == "delta":
            return "delta"
        if self.kind == "defocus":
            return f"defocus:{self.radius:g}"
        if self.kind == "motion":
            return f"motion:{self.points}:{self.sigma1:g}:{self.sigma2:g}:{self.seed}"
        return f"{self.kind}:{self.sigma:g}"


def parse_psf_spec(text: str) -> PsfSpec:
    """Parse ``kind[:args]`` strings, e.g. ``gaussian:5``, ``motion:5:8:1:42``."""
    parts = text.strip().lower().split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "delta":
            return PsfSpec("delta")
        if kind in ("gaussian", "skewed", "airy"):
            return PsfSpec(kind, sigma=float(args[0]))
        if kind == "defocus":
            return PsfSpec(kind, radius=float(args[0]))
        if kind == "motion":
            defaults = [5, 8.0, 1.0, 0]
            vals = args + [str(v) for v in defaults[len(args) :]]
            return PsfSpec(
                "motion",
                points=int(vals[0]),
                sigma1=float(vals[1]),
                sigma2=float(vals[2]),
                seed=int(vals[3]),
            )
    except (IndexError, ValueError) as exc:
        raise BadSpec(f"cannot parse PSF spec {text!r}: {exc}") from None
    raise BadSpec(f"unknown PSF kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Psf:
    kernel: np.ndarray
    spec: PsfSpec

    @property
    def dims(self) -> tuple[int, ...]:
        return self.kernel.shape

    @cached_property
    def otf(self) -> np.ndarray:
        return np.fft.rfftn(self.kernel)


@dataclass(frozen=True)
class DegradationModel:
    psf: Psf
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise BadSpec("noise_sigma must be nonnegative")

    def apply(self, u):
        return add_noise(convolve(u, self.psf), self.noise_sigma, self.seed)


def _signed_coords(dims) -> list[np.ndarray]:
    """Per-axis signed circular offsets in [-n/2, n/2), broadcastable grids."""
    grids = []
    d = len(dims)
    for axis, n in enumerate(dims):
        c = (np.arange(n) + n // 2) % n - n // 2
        shape = [1] * d
        shape[axis] = n
        grids.append(c.astype(np.float64).reshape(shape))
    return grids


def _normalized(k: np.ndarray) -> np.ndarray:
    s = k.sum()
    if not s > 0:
        raise BadSpec("PSF has no mass on this grid")
    return k / s


def _gaussian(dims, sigma: float) -> np.ndarray:
    r2 = sum(c**2 for c in _signed_coords(dims))
    return _normalized(np.exp(-r2 / (2 * sigma**2)))


def _skewed(dims, sigma: float) -> np.ndarray:
    coords = _signed_coords(dims)
    t1 = coords[0]
    a1 = np.where(t1 >= 0, t1**2, 4 * t1**2)
    r2 = a1 + sum(c**2 for c in coords[1:])
    return _normalized(np.exp(-r2 / (2 * sigma**2)))


def _airy(dims, scale: float) -> np.ndarray:
    r = np.sqrt(sum(c**2 for c in _signed_coords(dims)))
    z = np.pi * r / scale
    with np.errstate(invalid="ignore", divide="ignore"):
        amp = np.where(z == 0, 1.0, 2 * j1(z) / z)
    return _normalized(amp**2)


def _defocus(dims, radius: float) -> np.ndarray:
    r2 = sum(c**2 for c in _signed_coords(dims))
    return _normalized((r2 <= radius**2).astype(np.float64))


def _motion(dims, spec: PsfSpec) -> np.ndarray:
    d = len(dims)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    pts = rng.standard_normal((spec.points, d)) * spec.sigma1
    pts -= pts.mean(axis=0)

    s = np.arange(spec.points, dtype=np.float64)
    curve = CubicSpline(s, pts, axis=0)
    fine = curve(np.linspace(0, s[-1], 1000 * spec.points))
    length = np.linalg.norm(np.diff(fine, axis=0), axis=1).sum()
    n_samples = max(int(math.ceil(10 * length)), 10 * spec.points)
    samples = curve(np.linspace(0, s[-1], n_samples))

    # bilinear (multilinear) splatting onto the periodic grid
    acc = np.zeros(dims)
    base = np.floor(samples).astype(np.int64)
    frac = samples - base
    for corner in np.ndindex(*(2,) * d):
        w = np.ones(n_samples)
        idx = []
        for axis in range(d):
            c = corner[axis]
            w = w * (frac[:, axis] if c else 1 - frac[:, axis])
            idx.append((base[:, axis] + c) % dims[axis])
        np.add.at(acc, tuple(idx), w)
    acc = _normalized(acc)
    smooth = _gaussian(dims, spec.sigma2)
    blurred = np.fft.irfftn(np.fft.rfftn(acc) * np.fft.rfftn(smooth), s=dims, axes=range(d))
    # FFT round-off leaves ~1e-18 negatives far from the path
    return _normalized(np.clip(blurred, 0.0, None))


def generate_psf(spec: PsfSpec, dims) -> Psf:
    """Sample a normalized PSF on a periodic grid, centered at index 0."""
    dims = tuple(int(n) for n in np.atleast_1d(dims))
    if not all(_is_dyadic(n) for n in dims):
        raise ShapeMismatch(f"PSF dims {dims} are not powers of two")
    if spec.kind == "delta":
        k = np.zeros(dims)
        k[(0,) * len(dims)] = 1.0
    elif spec.kind == "gaussian":
        k = _gaussian(dims, spec.sigma)
    elif spec.kind == "skewed":
        k = _skewed(dims, spec.sigma)
    elif spec.kind == "airy":
        k = _airy(dims, spec.sigma)
    elif spec.kind == "defocus":
        k = _defocus(dims, spec.radius)
    else:
        k = _motion(dims, spec)
    k.setflags(write=False)
    return Psf(k, spec)


def _check(u, psf: Psf) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != psf.dims:
        raise ShapeMismatch(f"image shape {u.shape} != PSF shape {psf.dims}")
    return u


def convolve(u, psf: Psf) -> np.ndarray:
    """Circular convolution ``h * u`` computed through the FFT."""
    u = _check(u, psf)
    return np.fft.irfftn(np.fft.rfftn(u) * psf.otf, s=u.shape, axes=range(u.ndim))


def apply_adjoint(u, psf: Psf) -> np.ndarray:
    """Adjoint of :func:`convolve`: correlation with the kernel."""
    u = _check(u, psf)
    return np.fft.irfftn(np.fft.rfftn(u) * np.conj(psf.otf), s=u.shape, axes=range(u.ndim))


def exact_ops_per_pixel(n_pixels: int, filter_length: int) -> float:
    """Cost per pixel of one FFT + wavelet gradient evaluation."""
    return 2 * math.log2(n_pixels) + 2 * filter_length + 1


@dataclass(frozen=True, eq=False)
class ExactOperator:
    """Matrix-free ``Theta = Psi^* H Psi`` acting on flat coefficient vectors."""

    psf: Psf
    basis: WaveletBasis
    n: int = field(init=False)

    def __post_init__(self):
        if self.psf.dims != self.basis.dims:
            raise ShapeMismatch(f"PSF dims {self.psf.dims} != basis dims {self.basis.dims}")
        object.__setattr__(self, "n", self.basis.size)

    @property
    def layout(self):
        return self.basis.layout

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.basis.analyze(convolve(self.basis.synthesize(x), self.psf))

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.basis.analyze(apply_adjoint(self.basis.synthesize(y), self.psf))

    def ops_per_pixel(self) -> float:
        return exact_ops_per_pixel(self.n, self.basis.filters.length)


def exact_gradient(x, psf: Psf, basis: WaveletBasis, u0) -> WaveletCoeffs:
    """Gradient ``Psi^* H^* (H Psi x - u0)`` of the data term, via FFTs."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    u0 = _check(u0, psf)
    if psf.dims != basis.dims:
        raise ShapeMismatch(f"PSF dims {psf.dims} != basis dims {basis.dims}")
    residual = convolve(basis.synthesize(x), psf) - u0
    return WaveletCoeffs(basis.layout, basis.analyze(apply_adjoint(residual, psf)))


def add_noise(u, sigma: float, seed: int = 0) -> np.ndarray:
    """Add i.i.d. Gaussian noise from a seeded counter-based generator."""
    u = np.asarray(u, dtype=np.float64)
    if sigma == 0:
        return u.copy()
    rng = np.random.Generator(np.random.Philox(seed))
    return u + sigma * rng.standard_normal(u.shape)


def psnr(u, v) -> float:
    """Peak signal-to-noise ratio in dB for a peak value of 1."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeMismatch(f"shapes {u.shape} and {v.shape} differ")
    mse = np.mean((u - v) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(1.0 / mse))


def varying_blur_matrix(n: int) -> np.ndarray:
    """Dense 1D blur whose Gaussian width grows linearly across the domain.

    Column ``j`` holds a Gaussian centered at ``j`` with width
    ``4 + 10 * j / n`` pixels, evaluated at circular distances.
    """
    if not _is_dyadic(n):
        raise ShapeMismatch(f"n={n} is not a power of two")
    i = np.arange(n)
    dist = np.abs(i[:, None] - i[None, :])
    dist = np.minimum(dist, n - dist).astype(np.float64)
    sigma = 4 + 10 * i / n
    return np.exp(-(dist**2) / (2 * sigma[None, :] ** 2)) / (sigma[None, :] * math.sqrt(2 * math.pi))
