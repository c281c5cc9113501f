"""Command-line entry point: ``python -m ltlab.cli <command> ...``.

Exit status is 0 when every asserted inequality holds, 1 when a run completed
with a failed assertion and 2 when the input was rejected or a stage failed.
"""

import argparse
import hashlib
import logging
import sys
from typing import Optional

from pydantic import ValidationError
from sqlalchemy.exc import SQLAlchemyError

from ltlab import database
from ltlab.band_geometry import Rectangle, verify_distortion
from ltlab.errors import LabError
from ltlab.lt_lab import (
    band_model,
    canonical_json,
    compute_spectrum,
    config_hash,
    epsilon_sweep,
    find_bands,
    run_experiment,
)
from ltlab.schemas import BandSetModel, ExperimentConfig
from ltlab.spectral_constants import (
    ExponentPack,
    c_integral,
    c_integral_quadrature,
    eta,
    identity_residual,
    omega0,
    weight_integral,
    weight_integral_quadrature,
)

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

IDENTITY_RTOL = 1e-12
QUADRATURE_RTOL = 1e-8


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.model_validate_json(fh.read())


def emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text + "\n")


def store(kind: str, digest: str, all_hold: bool, payload: str) -> None:
    database.init_db(database.engine)
    sessions = database.get_db()
    db = next(sessions)
    try:
        database.save_report(db, kind, digest, all_hold, payload)
    finally:
        sessions.close()


def args_hash(values: dict) -> str:
    return hashlib.sha256(canonical_json(values).encode("utf-8")).hexdigest()


def cmd_bands(args) -> int:
    cfg = load_config(args.config)
    bands = find_bands(cfg)
    emit(canonical_json(band_model(cfg, bands).model_dump(mode="json")), args.out)
    return 0


def cmd_distortion(args) -> int:
    with open(args.bands, encoding="utf-8") as fh:
        bands = BandSetModel.model_validate_json(fh.read()).to_band_set()
    region = Rectangle(args.re_min, args.re_max, args.im_min, args.im_max)
    report = verify_distortion(bands, args.omega, region, args.samples, args.seed, workers=args.workers)
    payload = canonical_json(report.to_dict())
    emit(payload, args.out)
    if args.store:
        region_key = [args.re_min, args.re_max, args.im_min, args.im_max]
        digest = args_hash(
            {"bands": bands.to_pairs(), "omega": args.omega, "region": region_key, "N": args.samples, "seed": args.seed}
        )
        store("distortion", digest, report.success, payload)
    return 0 if report.success else 1


def cmd_spectrum(args) -> int:
    _, _, eigs = compute_spectrum(load_config(args.config))
    rows = ["re,im"] + [f"{format(z.real, '.17g')},{format(z.imag, '.17g')}" for z in eigs]
    emit("\n".join(rows), args.out)
    return 0


def cmd_ltsum(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg)
    payload = canonical_json(report.model_dump(mode="json"))
    if not cfg.output.report_path:
        emit(payload, args.out)
    if args.store:
        store("ltsum", config_hash(cfg), report.all_hold, payload)
    return 0 if report.all_hold else 1


def cmd_constants(args) -> int:
    pack = ExponentPack(p=args.p, d=args.d, tau=args.tau)
    closed = c_integral(pack.p, pack.d)
    quadrature = c_integral_quadrature(pack.p, pack.d)
    weight = weight_integral(pack.alpha, pack.p)
    weight_quad = weight_integral_quadrature(pack.alpha, pack.p)
    result = {
        "p": pack.p,
        "d": pack.d,
        "tau": pack.tau,
        "q": pack.q,
        "alpha": pack.alpha,
        "eta": eta(pack.p, pack.d),
        "c_integral": closed,
        "c_integral_quadrature": quadrature,
        "identity_residual": identity_residual(pack.p, pack.d),
        "weight_integral": weight,
        "weight_integral_quadrature": weight_quad,
    }
    threshold = omega0(pack.p, pack.d, args.a1, args.v0_sup, args.v_norm)
    result["omega0"] = threshold.omega0
    result["omega0_magnitude"] = threshold.magnitude
    holds = (
        result["identity_residual"] <= IDENTITY_RTOL
        and abs(quadrature - closed) <= QUADRATURE_RTOL * closed
        and abs(weight_quad - weight) <= QUADRATURE_RTOL * weight
    )
    result["all_hold"] = holds
    payload = canonical_json(result)
    emit(payload, args.out)
    if args.store:
        store("constants", args_hash({"p": pack.p, "d": pack.d, "tau": pack.tau}), holds, payload)
    return 0 if holds else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sweep = epsilon_sweep(cfg, args.epsilons, workers=args.workers)
    payload = canonical_json(sweep.model_dump(mode="json"))
    if not cfg.output.report_path:
        emit(payload, args.out)
    if args.store:
        store("sweep", config_hash(cfg), sweep.all_hold, payload)
    return 0 if sweep.all_hold else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltlab", description="Lieb–Thirring bounds for perturbed band operators.")
    parser.add_argument("--store", action="store_true", help="also save the report in the report database")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bands", help="band set of the configured periodic potential")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bands)

    p = sub.add_parser("distortion-check", help="sampled check of the distortion bounds")
    p.add_argument("--bands", required=True, help="band set JSON")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--re-min", type=float, default=-5.0)
    p.add_argument("--re-max", type=float, required=True)
    p.add_argument("--im-min", type=float, default=-10.0)
    p.add_argument("--im-max", type=float, default=10.0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_distortion)

    p = sub.add_parser("spectrum", help="eigenvalues of the discretized operator as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("ltsum", help="full experiment report")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ltsum)

    p = sub.add_parser("constants", help="closed-form constants and their quadrature checks")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--a1", type=float, default=1.0, help="bottom of the shifted spectrum (1 after the automatic shift)")
    p.add_argument("--v0-sup", type=float, default=0.0)
    p.add_argument("--v-norm", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_constants)

    p = sub.add_parser("sweep", help="experiments over a descending list of scales of V")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilons", type=float, nargs="+", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        logger.error(f"Invalid input: {exc}")
        return 2
    except (LabError, OSError, SQLAlchemyError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
