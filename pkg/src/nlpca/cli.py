"""Command-line entry point: experiment demos, generic fits, and sampler checks.

Commands
--------
sphere-demo   noisy unit-sphere data, PCA baseline vs the Bayesian model
digits-demo   IDX digit images, latent scatter and NN-mismatch comparison
fit           fit a CSV matrix, with JSON checkpointing and bit-exact resume
vmf-diag      rejection-sampler health report for a given concentration

Every command honors --seed (env NLPCA_SEED as fallback) for full determinism
and writes only inside --out.  Exit codes: 0 success, 1 usage, 2 I/O,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__
from .datasets import (
    IdxFormatError,
    generate_sphere,
    import_matrix_csv,
    load_checkpoint,
    load_image_set,
    save_checkpoint,
    save_json,
    select_digit_subset,
    subsample_images,
    to_dataset,
    export_histogram_csv,
    export_matrix_csv,
)
from .gibbs import (
    default_hyperparams,
    reconstruct_nonlinear,
    run,
    state_from_checkpoint,
)
from .metrics import (
    distance_to_unit_sphere,
    histogram,
    nn_mismatch_count,
    reconstruction_errors,
)
from .pca import center, pca_fit, reconstruct_linear
from .vmf import VmfParam, vmf_sample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3

_HIST_BINS = 20

# Distinct stream tags keep data generation, subset selection, and diagnostics
# independent of the sweep streams derived from the same seed.
_DATA_STREAM_TAG = 7
_SUBSET_STREAM_TAG = 11
_DIAG_STREAM_TAG = 13

_DIGIT_CLASSES = (1, 2, 3)
_DIGIT_PER_CLASS = 50
_DIGIT_TARGET_SIDE = 14

# Published comparison values for the 150-digit experiment.
_REFERENCE_PCA_MISMATCH = 53
_REFERENCE_MODEL_MISMATCH = 25


class UsageError(Exception):
    """Bad flags or flag combinations; reported before any file is created."""


class InputFileError(Exception):
    """Unreadable or malformed input data file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NLPCA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"NLPCA_SEED must be an integer, got {env!r}") from None
    return 0


def _parse_a2(text: str):
    if text in ("auto", "inf"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise UsageError(
            f"--a2 must be 'auto', 'inf', or a positive number, got {text!r}"
        ) from None
    if not value > 0:
        raise UsageError(f"--a2 must be positive, got {value}")
    return value


def _validate_chain(args) -> None:
    if args.sweeps < 1:
        raise UsageError("--sweeps must be >= 1")
    if not 0 <= args.burn_in < args.sweeps:
        raise UsageError("--burn-in must satisfy 0 <= burn-in < sweeps")
    if args.thin < 1:
        raise UsageError("--thin must be >= 1")
    if args.dim < 1:
        raise UsageError("--dim must be >= 1")
    for name in ("c", "w"):
        value = getattr(args, name)
        if value is not None and not value > 0:
            raise UsageError(f"--{name} must be positive, got {value}")


def _add_chain_options(sub) -> None:
    sub.add_argument("--dim", type=int, default=2, help="latent dimension d")
    sub.add_argument("--sweeps", type=int, default=2000, help="total Gibbs sweeps")
    sub.add_argument("--burn-in", type=int, default=1000, dest="burn_in")
    sub.add_argument("--thin", type=int, default=5, help="keep every thin-th sweep")
    sub.add_argument(
        "--a2", type=str, default="auto", help="latent prior variance: auto|inf|<value>"
    )
    sub.add_argument("--c", type=float, default=None, help="override interaction strength")
    sub.add_argument("--w", type=float, default=None, help="override kernel bandwidth")


def _add_common_options(sub) -> None:
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (env NLPCA_SEED)")
    sub.add_argument("--out", type=str, default="out", help="output directory")


class _TraceWriter:
    """Streams per-sweep trace rows to a CSV file."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["sweep", "sigma2", "log_posterior", "fallbacks"])

    def __call__(self, t, state, stats) -> None:
        self._writer.writerow(
            [
                str(t),
                repr(float(stats.sigma2)),
                repr(float(stats.log_posterior)),
                str(stats.fallbacks),
            ]
        )

    def close(self) -> None:
        self._fh.close()


def _a2_json(hp):
    return "inf" if math.isinf(hp.a2) else hp.a2


def _hyper_summary(hp, seed: int) -> dict:
    return {
        "seed": seed,
        "d": hp.d,
        "sweeps": hp.n_sweeps,
        "burn_in": hp.burn_in,
        "thin": hp.thin,
        "a2": _a2_json(hp),
        "eta": hp.eta,
        "tau2": hp.tau2,
        "c_strength": hp.c_strength,
        "bandwidth": hp.bandwidth,
    }


def cmd_sphere_demo(args) -> int:
    _validate_chain(args)
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    if args.noise < 0:
        raise UsageError("--noise must be nonnegative")
    a2 = _parse_a2(args.a2)
    seed = _resolve_seed(args)

    rng = np.random.default_rng([_DATA_STREAM_TAG, seed])
    raw, data = generate_sphere(args.n, args.noise, rng)
    if args.dim > min(data.n, data.p):
        raise UsageError(f"--dim must be <= min(n, p) = {min(data.n, data.p)}")

    fit = pca_fit(data, args.dim)
    pca_recon = reconstruct_linear(fit)
    pca_errors = reconstruction_errors(data.y, pca_recon)
    # Rank-d optimum from the trailing singular values, cross-checking the fit.
    all_sv = np.linalg.svd(data.y / np.sqrt(data.n), compute_uv=False)
    pca_total_analytic = float(data.n * np.sum(all_sv[args.dim:] ** 2))

    hp = default_hyperparams(
        data,
        args.dim,
        n_sweeps=args.sweeps,
        burn_in=args.burn_in,
        thin=args.thin,
        a2=a2,
        c_strength=args.c,
        bandwidth=args.w,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = _TraceWriter(out / "trace.csv")
    try:
        summary = run(data, hp, seed, on_sweep=trace)
    finally:
        trace.close()

    model_recon = reconstruct_nonlinear(summary)
    model_errors = reconstruction_errors(data.y, model_recon)
    model_recon_raw = model_recon + data.column_means
    pca_recon_raw = pca_recon + data.column_means

    data_sphere = distance_to_unit_sphere(raw)
    model_sphere = distance_to_unit_sphere(model_recon_raw)
    pca_sphere = distance_to_unit_sphere(pca_recon_raw)

    export_matrix_csv(out / "raw_points.csv", raw, prefix="coord")
    export_matrix_csv(out / "reconstructions.csv", model_recon_raw, prefix="coord")
    export_histogram_csv(
        out / "hist_data_to_sphere.csv", histogram(data_sphere, _HIST_BINS)
    )
    export_histogram_csv(
        out / "hist_recon_to_sphere.csv", histogram(model_sphere, _HIST_BINS)
    )
    export_histogram_csv(
        out / "hist_recon_errors.csv", histogram(model_errors, _HIST_BINS)
    )

    doc = _hyper_summary(hp, seed)
    doc.update(
        {
            "n": data.n,
            "noise": args.noise,
            "kept_sweeps": summary.n_kept,
            "model_mean_reconstruction_error": float(model_errors.mean()),
            "pca_mean_reconstruction_error": float(pca_errors.mean()),
            "model_total_sq_error": float(np.sum(model_errors**2)),
            "pca_total_sq_error": float(np.sum(pca_errors**2)),
            "pca_total_sq_error_analytic": pca_total_analytic,
            "model_mean_sphere_distance": float(model_sphere.mean()),
            "pca_mean_sphere_distance": float(pca_sphere.mean()),
            "data_mean_sphere_distance": float(data_sphere.mean()),
            "fallback_draws": summary.diagnostics.fallbacks,
            "total_draws": summary.diagnostics.draws,
        }
    )
    save_json(out / "summary.json", doc)
    print(
        f"sphere-demo: model mean error {model_errors.mean():.6f} "
        f"vs PCA {pca_errors.mean():.6f}; artifacts in {out}"
    )
    return EXIT_OK


def cmd_digits_demo(args) -> int:
    _validate_chain(args)
    a2 = _parse_a2(args.a2)
    seed = _resolve_seed(args)

    try:
        image_set = load_image_set(args.images, args.labels)
    except OSError as err:
        raise InputFileError(f"cannot read IDX input: {err}") from err

    side = _DIGIT_TARGET_SIDE
    if (
        image_set.rows % side
        or image_set.cols % side
        or image_set.rows // side != image_set.cols // side
        or image_set.rows // side < 1
    ):
        raise UsageError(
            f"images are {image_set.rows}x{image_set.cols}, "
            f"not reducible to {side}x{side}"
        )
    factor = image_set.rows // side
    small = subsample_images(image_set, factor, mode=args.pool)
    subset = select_digit_subset(
        small,
        _DIGIT_CLASSES,
        _DIGIT_PER_CLASS,
        np.random.default_rng([_SUBSET_STREAM_TAG, seed]),
    )
    data = to_dataset(subset)
    if args.dim > min(data.n, data.p):
        raise UsageError(f"--dim must be <= min(n, p) = {min(data.n, data.p)}")

    fit = pca_fit(data, args.dim)
    pca_mismatch = nn_mismatch_count(fit.latents, data.labels)

    hp = default_hyperparams(
        data,
        args.dim,
        n_sweeps=args.sweeps,
        burn_in=args.burn_in,
        thin=args.thin,
        a2=a2,
        c_strength=args.c,
        bandwidth=args.w,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = _TraceWriter(out / "trace.csv")
    try:
        summary = run(data, hp, seed, on_sweep=trace)
    finally:
        trace.close()
    model_mismatch = nn_mismatch_count(summary.mean_latents, data.labels)

    export_matrix_csv(out / "pca_latents.csv", fit.latents, labels=data.labels)
    export_matrix_csv(
        out / "model_latents.csv", summary.mean_latents, labels=data.labels
    )

    doc = _hyper_summary(hp, seed)
    doc.update(
        {
            "n": data.n,
            "p": data.p,
            "classes": list(_DIGIT_CLASSES),
            "per_class": _DIGIT_PER_CLASS,
            "pool": args.pool,
            "kept_sweeps": summary.n_kept,
            "pca_nn_mismatch": pca_mismatch,
            "model_nn_mismatch": model_mismatch,
            "reference_pca_mismatch": _REFERENCE_PCA_MISMATCH,
            "reference_model_mismatch": _REFERENCE_MODEL_MISMATCH,
            "fallback_draws": summary.diagnostics.fallbacks,
            "total_draws": summary.diagnostics.draws,
        }
    )
    save_json(out / "summary.json", doc)
    print(
        f"digits-demo: NN mismatches model {model_mismatch} vs PCA {pca_mismatch} "
        f"(reference {_REFERENCE_MODEL_MISMATCH} vs {_REFERENCE_PCA_MISMATCH}); "
        f"artifacts in {out}"
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    _validate_chain(args)
    a2 = _parse_a2(args.a2)
    seed = _resolve_seed(args)

    try:
        matrix, labels = import_matrix_csv(args.input)
    except OSError as err:
        raise InputFileError(f"cannot read {args.input}: {err}") from err
    except ValueError as err:
        raise InputFileError(str(err)) from err
    if matrix.shape[0] < 2:
        raise UsageError(f"need at least 2 rows, got {matrix.shape[0]}")
    n, p = matrix.shape
    if args.dim > min(n, p):
        raise UsageError(f"--dim must be <= min(n, p) = {min(n, p)}")
    data = center(matrix, labels=labels)

    hp = default_hyperparams(
        data,
        args.dim,
        n_sweeps=args.sweeps,
        burn_in=args.burn_in,
        thin=args.thin,
        a2=a2,
        c_strength=args.c,
        bandwidth=args.w,
    )

    state = None
    start_sweep = 0
    if args.resume is not None:
        try:
            ck = load_checkpoint(args.resume)
        except OSError as err:
            raise InputFileError(f"cannot read {args.resume}: {err}") from err
        except ValueError as err:
            raise InputFileError(str(err)) from err
        if (ck.n, ck.p, ck.d) != (n, p, args.dim):
            raise UsageError(
                f"checkpoint is for n={ck.n}, p={ck.p}, d={ck.d}; "
                f"input gives n={n}, p={p}, d={args.dim}"
            )
        if ck.counter >= args.sweeps:
            raise UsageError(
                f"checkpoint already has {ck.counter} sweeps; --sweeps is {args.sweeps}"
            )
        state = state_from_checkpoint(ck.transformations, ck.latents, ck.sigma2, hp)
        start_sweep = ck.counter
        seed = ck.seed  # the original stream must continue

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = _TraceWriter(out / "trace.csv")
    try:
        summary = run(data, hp, seed, state=state, start_sweep=start_sweep, on_sweep=trace)
    finally:
        trace.close()

    final = summary.final_state
    save_checkpoint(
        out / "checkpoint.json",
        transformations=final.transformations,
        latents=final.latents,
        sigma2=final.sigma2,
        seed=seed,
        counter=hp.n_sweeps,
    )
    export_matrix_csv(out / "mean_latents.csv", summary.mean_latents, labels=data.labels)

    doc = _hyper_summary(hp, seed)
    doc.update(
        {
            "n": n,
            "p": p,
            "start_sweep": start_sweep,
            "kept_sweeps": summary.n_kept,
            "final_sigma2": float(final.sigma2),
            "final_log_posterior": float(summary.log_posterior_trace[-1]),
            "fallback_draws": summary.diagnostics.fallbacks,
            "total_draws": summary.diagnostics.draws,
        }
    )
    save_json(out / "summary.json", doc)
    print(f"fit: {hp.n_sweeps - start_sweep} sweeps done; artifacts in {out}")
    return EXIT_OK


def _circle_mean_resultant(kappa: float) -> float:
    """E[cos(theta)] under the circular density prop. to exp(kappa cos(theta)),
    by numerical quadrature of the exponent shifted for overflow safety."""

    def dens(theta):
        return math.exp(kappa * (math.cos(theta) - 1.0))

    num, _ = integrate.quad(lambda t: math.cos(t) * dens(t), -math.pi, math.pi)
    den, _ = integrate.quad(dens, -math.pi, math.pi)
    return num / den


def cmd_vmf_diag(args) -> int:
    if args.p < 2:
        raise UsageError("--p must be >= 2")
    if not 1 <= args.d_frame <= args.p:
        raise UsageError("--d-frame must satisfy 1 <= d <= p")
    if args.kappa < 0:
        raise UsageError("--kappa must be nonnegative")
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    seed = _resolve_seed(args)

    c = VmfParam(args.kappa * np.eye(args.p, args.d_frame))
    rng = np.random.default_rng([_DIAG_STREAM_TAG, seed])
    attempts = 0
    accepted = 0
    fallbacks = 0
    first_coord = np.empty(args.samples)
    for k in range(args.samples):
        x, info = vmf_sample(c, rng)
        attempts += info.attempts
        if info.fallback:
            fallbacks += 1
        else:
            accepted += 1
        first_coord[k] = x.matrix[0, 0]

    print(f"p: {args.p}")
    print(f"d: {args.d_frame}")
    print(f"kappa: {args.kappa}")
    print(f"samples: {args.samples}")
    print(f"rejection_attempts: {attempts}")
    if attempts > 0:
        print(f"acceptance_rate: {accepted / attempts:.6f}")
    else:
        print("acceptance_rate: n/a (rejection skipped)")
    print(f"fallback_fraction: {fallbacks / args.samples:.6f}")
    print(f"fallback_engaged: {fallbacks > 0}")
    if (args.p, args.d_frame) == (2, 1):
        empirical = float(first_coord.mean())
        se = float(first_coord.std(ddof=1) / math.sqrt(args.samples))
        oracle = _circle_mean_resultant(args.kappa)
        print(f"mean_resultant_empirical: {empirical:.6f}")
        print(f"mean_resultant_quadrature: {oracle:.6f}")
        print(f"standard_error: {se:.6f}")
        z = abs(empirical - oracle) / se if se > 0 else 0.0
        print(f"z_score: {z:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlpca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nlpca {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sphere = sub.add_parser("sphere-demo", help="noisy-sphere experiment")
    sphere.add_argument("--n", type=int, default=100, help="number of points")
    sphere.add_argument("--noise", type=float, default=0.05, help="noise level")
    _add_chain_options(sphere)
    _add_common_options(sphere)
    sphere.set_defaults(handler=cmd_sphere_demo)

    digits = sub.add_parser("digits-demo", help="handwritten-digit experiment")
    digits.add_argument("--images", type=str, required=True, help="IDX image file")
    digits.add_argument("--labels", type=str, required=True, help="IDX label file")
    digits.add_argument(
        "--pool", choices=("stride", "mean"), default="stride", help="downsampling mode"
    )
    _add_chain_options(digits)
    _add_common_options(digits)
    digits.set_defaults(handler=cmd_digits_demo)

    fit = sub.add_parser("fit", help="fit a CSV matrix")
    fit.add_argument("input", type=str, help="input CSV (optional trailing label column)")
    fit.add_argument("--resume", type=str, default=None, help="checkpoint to resume from")
    _add_chain_options(fit)
    _add_common_options(fit)
    fit.set_defaults(handler=cmd_fit)

    diag = sub.add_parser("vmf-diag", help="sampler diagnostics")
    diag.add_argument("--p", type=int, required=True, help="ambient dimension")
    diag.add_argument("--d-frame", type=int, default=1, dest="d_frame", help="frame dimension")
    diag.add_argument("--kappa", type=float, required=True, help="concentration")
    diag.add_argument("--samples", type=int, default=10_000)
    diag.add_argument("--seed", type=int, default=None)
    diag.set_defaults(handler=cmd_vmf_diag)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"nlpca: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    try:
        return args.handler(args)
    except UsageError as err:
        print(f"nlpca: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxFormatError, InputFileError) as err:
        print(f"nlpca: input error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"nlpca: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as err:
        print(f"nlpca: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
