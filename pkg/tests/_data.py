"""Shared test fixtures: the 256x256 reference scene and small random inputs."""

import functools

import numpy as np
from skimage import data as skdata


@functools.lru_cache(maxsize=None)
def reference_image(size=256):
    """Sparse bright sources on a dark background, scaled to [0, 1].

    Center 2*size crop of the bundled deep-field frame, 2x2 block mean,
    channel mean for gray.
    """
    img = skdata.hubble_deep_field().astype(np.float64).mean(axis=2)
    h, w = img.shape
    c = 2 * size
    r0, c0 = (h - c) // 2, (w - c) // 2
    img = img[r0 : r0 + c, c0 : c0 + c].reshape(size, 2, size, 2).mean(axis=(1, 3))
    img = (img - img.min()) / (img.max() - img.min())
    img.setflags(write=False)
    return img


def smooth_image(n, seed=0):
    """Random smooth image in [0, 1] (for small, fast solver and CLI tests)."""
    rng = np.random.default_rng(seed)
    f = np.fft.fft2(rng.standard_normal((n, n)))
    k = np.fft.fftfreq(n)
    f *= np.exp(-(k[:, None] ** 2 + k[None, :] ** 2) * (n / 6.0) ** 2 / 2)
    u = np.real(np.fft.ifft2(f))
    return (u - u.min()) / (u.max() - u.min())


GAUSSIAN = "gaussian:5"
MOTION = "motion:5:8:1:42"
NOISE_SEED = 1


@functools.lru_cache(maxsize=None)
def reference_problem(psf_text, ops_per_pixel=6.0):
    """Reference fixture, its K-sparse operator and a long-run optimal energy.

    256x256, sigma=5e-3 noise, lambda=1e-4, Symmlet 6, J=4; K chosen from a
    target cost in ops/pixel; E* from 5000 SPAI-FISTA iterations.
    """
    from waveblur.bench import ExperimentSpec, make_fixture, threshold
    from waveblur.operators import parse_psf_spec
    from waveblur.precond import spai
    from waveblur.solver import DeblurProblem, SolverConfig, fista
    from waveblur.theta import build_theta_conv

    spec = ExperimentSpec(parse_psf_spec(psf_text), noise_sigma=5e-3, seed=NOISE_SEED,
                          filter_name="sym6", levels=4, lam=1e-4, K=[1])
    fx = make_fixture(reference_image(), spec)
    theta = build_theta_conv(fx.psf, fx.basis)
    op = threshold(theta, int(ops_per_pixel * fx.basis.size / 2), "dyadic")
    problem = DeblurProblem(op, fx.x0, fx.weights, spec.lam)
    ref = fista(problem, spai(op), SolverConfig(max_iters=5000))
    return fx, problem, min(ref.energies)
