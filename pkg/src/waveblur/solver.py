"""Proximal gradient solvers for ``min 1/2 ||A x - x0||^2 + lam * sum w |x|``.

``A`` is any object with ``matvec``/``rmatvec`` on flat coefficient vectors:
a :class:`~waveblur.theta.SparseOperator` or the matrix-free
:class:`~waveblur.operators.ExactOperator`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteEnergy, ShapeMismatch
from .precond import DiagonalPreconditioner, identity
from .wavelet import SubbandLayout

__all__ = [
    "DeblurProblem",
    "SolverConfig",
    "SolveReport",
    "scale_weights",
    "energy",
    "prox_weighted_l1_P",
    "estimate_step",
    "ista",
    "fista",
]

log = logging.getLogger(__name__)


def scale_weights(layout: SubbandLayout) -> np.ndarray:
    """Per-coefficient l1 weights equal to the scale index of each coefficient.

    The scale counts from the coarsest band (0) towards the finest (J - 1), so
    detail level ``t`` gets weight ``J - t`` and the approximation band 0.
    """
    return (layout.levels - layout.level_map()).astype(np.float64)


@dataclass(frozen=True, eq=False)
class DeblurProblem:
    op: object
    x0: np.ndarray
    weights: np.ndarray
    lam: float = 1e-4

    def __post_init__(self):
        n = self.op.n
        if self.x0.shape != (n,) or self.weights.shape != (n,):
            raise ShapeMismatch(f"x0 {self.x0.shape} / weights {self.weights.shape} vs operator size {n}")
        if np.any(self.weights < 0) or self.lam < 0:
            raise ValueError("weights and lambda must be nonnegative")

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def thresholds(self) -> np.ndarray:
        return self.lam * self.weights


@dataclass
class SolverConfig:
    max_iters: int = 500
    rel_energy_tol: float = 1e-3
    step_safety: float = 1.01
    track_support: bool = False
    # E(x*) for the stopping rule E(x_k) - E(x*) <= tol * E(x_0); None runs max_iters
    reference_energy: float | None = None
    step: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_energy_tol > 0:
            raise ValueError("rel_energy_tol must be > 0")
        if self.step_safety < 1:
            raise ValueError("step_safety must be >= 1")


@dataclass
class SolveReport:
    x_final: np.ndarray
    energies: list = field(default_factory=list)
    iters_used: int = 0
    support_sizes: list | None = None
    wall_time: float = 0.0
    ops_per_pixel_per_iter: float = 0.0
    initial_energy: float = 0.0
    converged: bool = False
    step: float = 0.0

    @property
    def final_energy(self) -> float:
        return self.energies[-1] if self.energies else self.initial_energy


def energy(x, problem: DeblurProblem) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.n,):
        raise ShapeMismatch(f"x of shape {x.shape} for a problem of size {problem.n}")
    r = problem.op.matvec(x) - problem.x0
    return 0.5 * float(r @ r) + float(problem.thresholds @ np.abs(x))


def prox_weighted_l1_P(z0, tau: float, weights, P: DiagonalPreconditioner | None = None):
    """Prox of ``tau * sum weights |z|`` in the metric of a diagonal ``P``.

    ``weights`` already includes the global regularization factor.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    thr = tau * np.asarray(weights, dtype=np.float64)
    if P is not None:
        thr = thr / P.p
    return np.sign(z0) * np.maximum(np.abs(z0) - thr, 0.0)


def estimate_step(op, P: DiagonalPreconditioner | None = None, step_safety: float = 1.01,
                  tol: float = 1e-6, max_iter: int = 200, seed: int = 0) -> float:
    """Step ``1 / (L * step_safety)`` with ``L = ||P^{-1/2} A^T A P^{-1/2}||_2``.

    ``L`` comes from power iteration, stopped when the eigenvalue estimate
    changes by less than ``tol`` relative.
    """
    n = op.n
    s = np.ones(n) if P is None else 1.0 / np.sqrt(P.p)
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    L = 0.0
    for _ in range(max_iter):
        w = s * op.rmatvec(op.matvec(s * v))
        L_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            log.warning("operator is zero; falling back to unit step")
            return 1.0
        v = w / nw
        if L > 0 and abs(L_new - L) <= tol * L_new:
            L = L_new
            break
        L = L_new
    if L <= 0:
        log.warning("operator is zero; falling back to unit step")
        return 1.0
    return 1.0 / (L * step_safety)


def _support(x) -> int:
    return int(np.count_nonzero(x))


def _iterate(problem: DeblurProblem, P, config: SolverConfig, momentum,
             x_init=None, callback=None) -> SolveReport:
    op = problem.op
    n = problem.n
    P = P if P is not None else identity(n)
    if P.n != n:
        raise ShapeMismatch(f"preconditioner size {P.n} != problem size {n}")
    start = time.perf_counter()
    tau = config.step if config.step is not None else estimate_step(op, P, config.step_safety)
    step = tau / P.p
    thr = problem.thresholds
    x_prev = np.array(problem.x0 if x_init is None else x_init, dtype=np.float64)
    y = x_prev
    e0 = energy(x_prev, problem)
    if not math.isfinite(e0):
        raise NonFiniteEnergy(f"initial energy is {e0}")
    target = None
    if config.reference_energy is not None:
        target = config.reference_energy + config.rel_energy_tol * e0

    report = SolveReport(x_prev, initial_energy=e0, step=tau)
    if config.track_support:
        report.support_sizes = []
    for k in range(1, config.max_iters + 1):
        grad = op.rmatvec(op.matvec(y) - problem.x0)
        z = y - step * grad
        x = prox_weighted_l1_P(z, tau, thr, P)
        if momentum is None:
            y = x
        else:
            y = x + momentum(k) * (x - x_prev)
        e = energy(x, problem)
        if not math.isfinite(e):
            raise NonFiniteEnergy(f"energy became {e} at iteration {k} (step {tau:.3e})")
        report.energies.append(e)
        if report.support_sizes is not None:
            report.support_sizes.append(_support(x))
        if callback is not None:
            callback(k, x, e)
        x_prev = x
        if target is not None and e <= target:
            report.converged = True
            break
    report.x_final = x_prev
    report.iters_used = len(report.energies)
    report.wall_time = time.perf_counter() - start
    report.ops_per_pixel_per_iter = op.ops_per_pixel()
    return report


def ista(problem: DeblurProblem, P: DiagonalPreconditioner | None = None,
         config: SolverConfig | None = None, **kw) -> SolveReport:
    """(Preconditioned) proximal gradient descent, no momentum."""
    return _iterate(problem, P, config or SolverConfig(), momentum=None, **kw)


def fista(problem: DeblurProblem, P: DiagonalPreconditioner | None = None,
          config: SolverConfig | None = None, momentum: bool = True, **kw) -> SolveReport:
    """Accelerated proximal gradient descent in the metric of ``P``.

    Starts from ``x0`` and uses the momentum ``(k - 1) / (k + 2)``. With
    ``P = None`` this is plain FISTA. ``momentum=False`` zeroes the
    extrapolation coefficient.
    """
    coef = _fista_momentum if momentum else _zero_momentum
    return _iterate(problem, P, config or SolverConfig(), momentum=coef, **kw)


def _fista_momentum(k: int) -> float:
    return (k - 1) / (k + 2)


def _zero_momentum(k: int) -> float:
    return 0.0
