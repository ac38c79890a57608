"""Command-line entry point: ``waveblur {psf,build-theta,deblur,bench}``.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from ._parallel import set_threads
from .bench import METHODS, ExperimentSpec, run_bench, threshold
from .errors import CorruptOperatorFile, MemoryGuard, NonFiniteEnergy, ShapeMismatch, WaveblurError
from .operators import ExactOperator, generate_psf, parse_psf_spec, psnr
from .precond import jacobi, spai
from .solver import DeblurProblem, SolverConfig, fista, ista, scale_weights
from .theta import build_theta_conv
from .wavelet import WaveletBasis, parse_filter

log = logging.getLogger("waveblur")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _method_list(text: str) -> list:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    if not methods:
        raise UsageError("empty method list")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    return methods


def _k_list(values) -> list:
    out = []
    for v in values or []:
        out.extend(int(s) for s in str(v).split(",") if s)
    return out


def _add_basis_args(p):
    p.add_argument("--filter", default="symmlet6", help="haar, dbN or symmletN (default symmlet6)")
    p.add_argument("--levels", type=int, default=4, help="decomposition depth J")


def _add_common(p):
    p.add_argument("--threads", type=int, default=None, help="threads for the sparse kernels")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="waveblur", description="Wavelet-domain deconvolution toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psf", help="generate a PSF and write it as an image or .npy array")
    p.add_argument("spec", help="e.g. gaussian:5, skewed:5, motion:5:8:1:42, airy:2.5, defocus:4")
    p.add_argument("--size", type=int, nargs="+", default=[256, 256])
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("build-theta", help="threshold the wavelet-domain blur operator to K entries")
    p.add_argument("--psf", required=True)
    p.add_argument("--size", type=int, nargs="+", default=[256, 256])
    _add_basis_args(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--sigma-mode", choices=["uniform", "dyadic"], default="dyadic")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("deblur", help="restore an observed image")
    p.add_argument("image")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--operator", help="operator file written by build-theta")
    src.add_argument("--psf", help="PSF spec; the operator is built on the fly")
    _add_basis_args(p)
    p.add_argument("--K", type=int, default=None, help="entries kept when building from --psf")
    p.add_argument("--sigma-mode", choices=["uniform", "dyadic"], default="dyadic")
    p.add_argument("--method", default="spai-fista")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--eps-jacobi", type=float, default=None)
    p.add_argument("--truth", help="clean image, for pSNR in the report")
    p.add_argument("--bits", type=int, choices=[8, 16], default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="JSON run report path (default: <out>.json)")
    _add_common(p)

    p = sub.add_parser("bench", help="pSNR / cost trade-off over K")
    p.add_argument("image", help="clean reference image")
    p.add_argument("--psf", required=True)
    p.add_argument("--noise", type=float, default=5e-3)
    p.add_argument("--seed", type=int, default=0)
    _add_basis_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--K", nargs="*", default=None, help="K values (space or comma separated)")
    p.add_argument("--drop-db", type=float, default=None)
    p.add_argument("--sigma-mode", choices=["uniform", "dyadic", "both"], default="dyadic")
    p.add_argument("--method", default="fista,jacobi-fista,spai-fista",
                   help="comma separated subset of " + ",".join(METHODS))
    p.add_argument("--eps-jacobi", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--ref-iters", type=int, default=5000)
    p.add_argument("--exact-iters", type=int, default=500)
    p.add_argument("--jobs", type=int, default=1, help="K values run concurrently")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    return ap


def _basis(args, dims) -> WaveletBasis:
    return WaveletBasis(parse_filter(args.filter), tuple(dims), args.levels)


def cmd_psf(args) -> int:
    psf = generate_psf(parse_psf_spec(args.spec), tuple(args.size))
    out = Path(args.out)
    if out.suffix == ".npy":
        np.save(out, psf.kernel)
    else:
        k = np.fft.fftshift(psf.kernel)
        io.write_image(out, k / k.max(), bits=16)
    print(f"{psf.spec.label()} dims={psf.dims} sum={psf.kernel.sum():.12f} -> {out}")
    return EXIT_OK


def cmd_build_theta(args) -> int:
    spec = parse_psf_spec(args.psf)
    basis = _basis(args, args.size)
    theta = build_theta_conv(generate_psf(spec, basis.dims), basis)
    op = threshold(theta, args.K, args.sigma_mode, spec)
    io.write_operator(args.out, op, basis.filters.family, basis.filters.order)
    print(f"nnz={op.nnz} ops_per_pixel={op.ops_per_pixel():.4f} -> {args.out}")
    return EXIT_OK


def cmd_deblur(args) -> int:
    methods = _method_list(args.method)
    if len(methods) != 1:
        raise UsageError("deblur takes a single method")
    method = methods[0]
    u0 = io.read_image(args.image)
    if args.operator:
        if method == "exact-fista":
            raise UsageError("exact-fista needs --psf")
        op, filters = io.read_operator(args.operator)
        basis = WaveletBasis(filters, op.layout.dims, op.layout.levels)
    else:
        spec = parse_psf_spec(args.psf)
        basis = _basis(args, u0.shape)
        psf = generate_psf(spec, basis.dims)
        if method == "exact-fista":
            op = ExactOperator(psf, basis)
        else:
            theta = build_theta_conv(psf, basis)
            K = args.K if args.K is not None else theta.total_entries()
            op = threshold(theta, K, args.sigma_mode, spec)
    if tuple(basis.dims) != u0.shape:
        raise ShapeMismatch(f"operator dims {basis.dims} != image shape {u0.shape}")

    x0 = basis.analyze(u0)
    problem = DeblurProblem(op, x0, scale_weights(basis.layout), args.lam)
    config = SolverConfig(max_iters=args.iters)
    if method == "ista":
        rep = ista(problem, None, config)
    else:
        P = None
        if method == "jacobi-fista":
            P = jacobi(op, args.eps_jacobi)
        elif method == "spai-fista":
            P = spai(op)
        rep = fista(problem, P, config)
    restored = basis.synthesize(rep.x_final)
    io.write_image(args.out, restored, bits=args.bits)

    report = {
        "method": method,
        "iterations": rep.iters_used,
        "ops_per_pixel": rep.ops_per_pixel_per_iter,
        "wall_time_s": rep.wall_time,
        "initial_energy": rep.initial_energy,
        "final_energy": rep.final_energy,
    }
    if args.truth:
        truth = io.read_image(args.truth)
        report["psnr_degraded_db"] = psnr(truth, u0)
        report["psnr_restored_db"] = psnr(truth, restored)
    report_path = args.report or str(args.out) + ".json"
    Path(report_path).write_text(json.dumps(report, indent=2))
    print(json.dumps(report))
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = _method_list(args.method)
    try:
        spec = ExperimentSpec(
            psf=parse_psf_spec(args.psf),
            noise_sigma=args.noise,
            seed=args.seed,
            filter_name=args.filter,
            levels=args.levels,
            lam=args.lam,
            K=_k_list(args.K),
            drop_db=args.drop_db,
            methods=methods,
            sigma_mode=args.sigma_mode,
            eps_jacobi=args.eps_jacobi,
            tol=args.tol,
            max_iters=args.max_iters,
            ref_iters=args.ref_iters,
            exact_iters=args.exact_iters,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    image = io.read_image(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_bench(image, spec, jobs=args.jobs)
    report.write_csv(out / "bench.csv")
    report.write_curve(out / "curve.csv")
    summary = {
        "psnr_degraded_db": report.degraded_psnr,
        "psnr_exact_db": report.exact_psnr,
        "drop_db": spec.drop_db,
        "smallest_K_within_drop": report.drop_k,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print((out / "bench.csv").read_text(), end="")
    if report.drop_k:
        for m, k in report.drop_k.items():
            print(f"# {m}: smallest K within {spec.drop_db} dB = {k}")
    return EXIT_OK


COMMANDS = {
    "psf": cmd_psf,
    "build-theta": cmd_build_theta,
    "deblur": cmd_deblur,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            set_threads(args.threads)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"waveblur: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteEnergy, MemoryGuard, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"waveblur: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CorruptOperatorFile) as exc:
        print(f"waveblur: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WaveblurError, ValueError, KeyError) as exc:
        print(f"waveblur: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
