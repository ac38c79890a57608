"""Accuracy/speed benchmark over the sparsity level K.

For every K the blur representation is thresholded, a long SPAI-FISTA run
estimates the optimal energy E*, then each method is run until
``E - E* <= tol * E(x0)``. A baseline row uses the exact FFT + wavelet
operator for a fixed number of FISTA iterations.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from ._parallel import pmap
from .errors import BadSpec
from .operators import ExactOperator, PsfSpec, add_noise, convolve, generate_psf, psnr
from .precond import jacobi, spai
from .solver import DeblurProblem, SolverConfig, fista, ista, scale_weights
from .theta import WeightVector, build_theta_conv, threshold_naive, threshold_weighted
from .wavelet import WaveletBasis, parse_filter

__all__ = [
    "METHODS",
    "CSV_HEADER",
    "ExperimentSpec",
    "BenchRow",
    "BenchReport",
    "Fixture",
    "make_fixture",
    "threshold",
    "run_method",
    "run_bench",
    "smallest_k_within",
    "cache_dir",
]

log = logging.getLogger(__name__)

METHODS = ("exact-fista", "ista", "fista", "jacobi-fista", "spai-fista")
SPARSE_METHODS = METHODS[1:]
SIGMA_MODES = ("uniform", "dyadic", "both")
CSV_HEADER = ["method", "K", "ops_per_pixel", "iterations", "wall_time_s", "psnr_db", "final_energy"]
# ops/pixel grid scanned in drop-target mode when no K list is given
DROP_SCAN_OPS = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128)


@dataclass
class ExperimentSpec:
    psf: PsfSpec
    noise_sigma: float = 5e-3
    seed: int = 0
    filter_name: str = "sym6"
    levels: int = 4
    lam: float = 1e-4
    K: list = field(default_factory=list)
    drop_db: float | None = None
    methods: list = field(default_factory=lambda: ["fista", "jacobi-fista", "spai-fista"])
    sigma_mode: str = "dyadic"
    eps_jacobi: float | None = None
    tol: float = 1e-3
    max_iters: int = 5000
    # iterations of the reference run; 0 runs every method for max_iters
    ref_iters: int = 5000
    exact_iters: int = 500

    def __post_init__(self):
        if not self.methods:
            raise BadSpec("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise BadSpec(f"unknown method(s) {unknown}; choose from {METHODS}")
        if not self.K and not (self.drop_db is not None and self.drop_db > 0):
            raise BadSpec("give a nonempty K list or a positive pSNR drop target")
        if any(int(k) < 1 for k in self.K):
            raise BadSpec("K values must be positive")
        if self.sigma_mode not in SIGMA_MODES:
            raise BadSpec(f"sigma mode must be one of {SIGMA_MODES}")
        if self.noise_sigma < 0 or self.lam < 0:
            raise BadSpec("noise sigma and lambda must be nonnegative")
        if self.max_iters < 1 or self.exact_iters < 1 or self.ref_iters < 0:
            raise BadSpec("iteration counts must be positive")
        parse_filter(self.filter_name)

    def key(self) -> dict:
        return {
            "psf": self.psf.label(),
            "noise": self.noise_sigma,
            "seed": self.seed,
            "filter": self.filter_name,
            "levels": self.levels,
            "lambda": self.lam,
        }


@dataclass
class BenchRow:
    method: str
    K: int
    ops_per_pixel: float
    iterations: int
    wall_time_s: float
    psnr_db: float
    final_energy: float

    def as_list(self):
        return [self.method, self.K, repr(self.ops_per_pixel), self.iterations,
                f"{self.wall_time_s:.4f}", repr(self.psnr_db), repr(self.final_energy)]


@dataclass
class BenchReport:
    rows: list
    degraded_psnr: float
    exact_psnr: float
    drop_k: dict = field(default_factory=dict)

    def method_rows(self, method: str) -> list:
        return sorted((r for r in self.rows if r.method == method), key=lambda r: r.K)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_HEADER)
            for r in self.rows:
                wr.writerow(r.as_list())

    def write_curve(self, path) -> None:
        """pSNR against ops/pixel, one line per (method, K), for external plotting."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "ops_per_pixel", "psnr_db", "psnr_drop_db"])
            for r in sorted(self.rows, key=lambda r: (r.method, r.ops_per_pixel)):
                wr.writerow([r.method, repr(r.ops_per_pixel), repr(r.psnr_db),
                             repr(self.exact_psnr - r.psnr_db)])


@dataclass
class Fixture:
    truth: np.ndarray
    observed: np.ndarray
    basis: WaveletBasis
    psf: object
    x0: np.ndarray
    weights: np.ndarray


def make_fixture(image, spec: ExperimentSpec) -> Fixture:
    u = np.asarray(image, dtype=np.float64)
    basis = WaveletBasis(parse_filter(spec.filter_name), u.shape, spec.levels)
    psf = generate_psf(spec.psf, u.shape)
    u0 = add_noise(convolve(u, psf), spec.noise_sigma, spec.seed)
    return Fixture(u, u0, basis, psf, basis.analyze(u0), scale_weights(basis.layout))


def cache_dir() -> Path | None:
    d = os.environ.get("WAVEBLUR_CACHE")
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:24]


def operator_cache_key(psf_spec: PsfSpec, basis: WaveletBasis, K: int, sigma_mode: str) -> str:
    return _digest({
        "psf": psf_spec.label(),
        "dims": list(basis.dims),
        "filter": basis.filters.name,
        "levels": basis.levels,
        "K": int(K),
        "sigma": sigma_mode,
    })


def threshold(theta, K: int, sigma_mode: str, psf_spec: PsfSpec | None = None):
    """Threshold ``theta`` to ``K`` entries, going through the operator cache when set."""
    basis = theta.basis
    cache = cache_dir()
    path = None
    if cache is not None and psf_spec is not None:
        path = cache / f"op-{operator_cache_key(psf_spec, basis, K, sigma_mode)}.wtheta"
        if path.exists():
            op, _ = io.read_operator(path)
            return op
    if sigma_mode == "uniform":
        op = threshold_naive(theta, K)
    else:
        op = threshold_weighted(theta, K, WeightVector.dyadic(basis.layout))
    if path is not None:
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        io.write_operator(tmp, op, basis.filters.family, basis.filters.order)
        tmp.replace(path)
    return op


def _preconditioner(method: str, op, eps_jacobi):
    if method == "jacobi-fista":
        return jacobi(op, eps_jacobi)
    if method == "spai-fista":
        return spai(op)
    return None


def run_method(method: str, op, fx: Fixture, lam: float, config: SolverConfig,
               eps_jacobi: float | None = None):
    problem = DeblurProblem(op, fx.x0, fx.weights, lam)
    if method == "ista":
        return ista(problem, None, config)
    return fista(problem, _preconditioner(method, op, eps_jacobi), config)


def _reference_energy(op, fx: Fixture, spec: ExperimentSpec, K: int, mode: str) -> float:
    cache = cache_dir()
    path = None
    if cache is not None:
        key = dict(spec.key(), K=int(K), sigma=mode, ref_iters=spec.ref_iters,
                   image=hashlib.sha256(fx.truth.tobytes()).hexdigest()[:24])
        path = cache / f"ref-{_digest(key)}.json"
        if path.exists():
            return float(json.loads(path.read_text())["energy"])
    problem = DeblurProblem(op, fx.x0, fx.weights, spec.lam)
    rep = fista(problem, spai(op), SolverConfig(max_iters=spec.ref_iters))
    e_star = min(rep.energies)
    if path is not None:
        path.write_text(json.dumps({"energy": e_star}))
    return e_star


def _row(method, K, rep, fx: Fixture) -> BenchRow:
    restored = fx.basis.synthesize(rep.x_final)
    return BenchRow(method, int(K), float(rep.ops_per_pixel_per_iter), rep.iters_used,
                    rep.wall_time, psnr(fx.truth, restored), float(rep.final_energy))


def _k_rows(theta, fx: Fixture, spec: ExperimentSpec, K: int) -> list:
    modes = ["dyadic", "uniform"] if spec.sigma_mode == "both" else [spec.sigma_mode]
    rows = []
    for mode in modes:
        op = threshold(theta, K, mode, spec.psf)
        config = SolverConfig(max_iters=spec.max_iters, rel_energy_tol=spec.tol)
        if spec.ref_iters > 0:
            config.reference_energy = _reference_energy(op, fx, spec, K, mode)
        suffix = ":naive" if spec.sigma_mode == "both" and mode == "uniform" else ""
        for m in spec.methods:
            if m == "exact-fista":
                continue
            rep = run_method(m, op, fx, spec.lam, config, spec.eps_jacobi)
            rows.append(_row(m + suffix, K, rep, fx))
    return rows


def smallest_k_within(rows, exact_psnr: float, drop_db: float, method: str):
    """Smallest K among ``method`` rows whose pSNR is at most ``drop_db`` below ``exact_psnr``."""
    ok = [r.K for r in rows if r.method == method and r.psnr_db >= exact_psnr - drop_db]
    return min(ok) if ok else None


def run_bench(image, spec: ExperimentSpec, jobs: int = 1) -> BenchReport:
    fx = make_fixture(image, spec)
    n = fx.basis.size

    exact_op = ExactOperator(fx.psf, fx.basis)
    exact_rep = fista(DeblurProblem(exact_op, fx.x0, fx.weights, spec.lam), None,
                      SolverConfig(max_iters=spec.exact_iters))
    exact_row = _row("exact-fista", n, exact_rep, fx)
    report = BenchReport([exact_row], psnr(fx.truth, fx.observed), exact_row.psnr_db)
    sparse = [m for m in spec.methods if m != "exact-fista"]
    if not sparse:
        return report

    theta = build_theta_conv(fx.psf, fx.basis)
    total = theta.total_entries()
    if spec.K:
        ks = sorted({min(int(k), total) for k in spec.K})
        for rows in pmap(lambda k: _k_rows(theta, fx, spec, k), ks, jobs):
            report.rows.extend(rows)
    else:
        # scan a fixed grid until the first sparse method reaches the target
        ks = sorted({min(int(o * n / 2), total) for o in DROP_SCAN_OPS})
        for k in ks:
            rows = _k_rows(theta, fx, spec, k)
            report.rows.extend(rows)
            if smallest_k_within(rows, report.exact_psnr, spec.drop_db, sparse[0]) is not None:
                break
    if spec.drop_db is not None:
        methods = sorted({r.method for r in report.rows if r.method != "exact-fista"})
        report.drop_k = {m: smallest_k_within(report.rows, report.exact_psnr, spec.drop_db, m)
                         for m in methods}
    return report
