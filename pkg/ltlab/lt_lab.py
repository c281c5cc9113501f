"""End-to-end experiments: model, spectrum, Lieb–Thirring sums and reproducible reports."""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy
from scipy import linalg

from ltlab import __version__
from ltlab.band_geometry import BandSet, dist_to_bands
from ltlab.errors import LabError, PreconditionFailed, StageFailure
from ltlab.hill_models import (
    DiscretizedOperator,
    PeriodicPotential,
    Perturbation,
    band_edges,
    discrete_spectrum_outside,
    discretize,
    discriminant_error,
    eigenvalues,
    within_truncation,
)
from ltlab.operator_calculus import kato_chain_report
from ltlab.schemas import (
    BandSetModel,
    ChainEntry,
    ClusterEntry,
    CorollaryWeights,
    ExperimentConfig,
    KatoChain,
    LtReport,
    OutputSpec,
    PerturbationSpec,
    PotentialSpec,
    SweepReport,
)
from ltlab.spectral_constants import (
    ExponentPack,
    corollary_scales,
    integrate_quad,
    lt_weight,
    omega0,
    weight_integral,
)

logger = logging.getLogger(__name__)

CHAIN_RTOL = 1e-8
CLUSTER_GAP = 1e-6
MONOTONE_SLACK = 0.05


def lt_sum_thm1(eigs: Iterable[complex], bands: BandSet, pack: ExponentPack, s0: float) -> float:
    """Sum of dist(z, I)^p / (s0 + |z|)^(d/2 + tau) over the eigenvalues."""
    return float(sum(lt_weight(complex(z), bands, pack, s0) for z in eigs))


def lt_sum_prop1(
    eigs: Iterable[complex],
    bands: BandSet,
    pack: ExponentPack,
    omega: float,
    a1: float,
    omega0: Optional[float] = None,
) -> float:
    """Sum of dist(z, I)^p / (|z - omega|^p (|z - omega| + a_1 - omega)^p)."""
    if omega0 is not None and omega > omega0:
        raise PreconditionFailed(f"omega={omega!r} must be <= omega0={omega0!r}")
    p = pack.p
    total = 0.0
    for z in eigs:
        zw = abs(complex(z) - omega)
        total += dist_to_bands(complex(z), bands) ** p / (zw**p * (zw + a1 - omega) ** p)
    return float(total)


def lt_sum_corollary(eigs: Iterable[complex], bands: BandSet, pack: ExponentPack) -> float:
    return lt_sum_thm1(eigs, bands, pack, 1.0)


def filter_tolerance(eigs: np.ndarray, mesh: float, factor: float = 5.0) -> np.ndarray:
    """Off-band tolerance factor * h^2 * max(1, (Re z)^2 / 12), the scale of the O(h^2) grid error."""
    eigs = np.atleast_1d(np.asarray(eigs, dtype=complex))
    return factor * mesh**2 * np.maximum(1.0, eigs.real**2 / 12.0)


def chain_entry(z: complex, bands: BandSet, pack: ExponentPack, s0: float) -> ChainEntry:
    """Shifted-point weight integrated over s >= s0 against 3^-p B(alpha+1, d/2+tau) times the main weight."""
    p, alpha, a1 = pack.p, pack.alpha, bands.a1
    dist_p = dist_to_bands(z, bands) ** p

    def integrand(s: float) -> float:
        zs = abs(z + s)
        return s**alpha / (zs**p * (zs + a1 + s) ** p)

    lhs = dist_p * integrate_quad(integrand, s0)
    rhs = 3.0 ** (-p) * weight_integral(alpha, p) * lt_weight(z, bands, pack, s0)
    return ChainEntry(z=(z.real, z.imag), lhs=lhs, rhs=rhs, holds=lhs >= rhs * (1.0 - CHAIN_RTOL))


def cluster_diagnostics(eigs: np.ndarray, gap: float = CLUSTER_GAP) -> list[ClusterEntry]:
    """Pairs of eigenvalues closer than ``gap``; possible splits of a multiple eigenvalue."""
    eigs = np.asarray(eigs, dtype=complex)
    if eigs.size < 2:
        return []
    distances = np.abs(eigs[:, None] - eigs[None, :])
    first, second = np.nonzero(np.triu(distances < gap, k=1))
    return [ClusterEntry(first=int(i), second=int(j), gap=float(distances[i, j])) for i, j in zip(first, second)]


def canonical_json(obj) -> str:
    """JSON with sorted keys and floats at 17 significant digits; complex numbers become [re, im]."""

    def encode(value) -> str:
        if isinstance(value, dict):
            items = sorted((str(k), v) for k, v in value.items())
            return "{" + ",".join(f"{json.dumps(k)}:{encode(v)}" for k, v in items) + "}"
        if isinstance(value, (list, tuple, np.ndarray)):
            return "[" + ",".join(encode(v) for v in value) + "]"
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if value is None:
            return "null"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (complex, np.complexfloating)):
            return encode([value.real, value.imag])
        if isinstance(value, (float, np.floating)):
            value = float(value)
            if not math.isfinite(value):
                return "null"
            return format(value, ".17g")
        return json.dumps(value)

    return encode(obj)


def config_hash(cfg: ExperimentConfig) -> str:
    payload = cfg.model_dump(mode="json", exclude={"output"})
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def build_potential(spec: PotentialSpec) -> PeriodicPotential:
    if spec.kind == "free":
        return PeriodicPotential.free(period=spec.period, shift=spec.shift)
    if spec.kind == "cosine":
        return PeriodicPotential.cosine(spec.amplitude, spec.period, shift=spec.shift)
    return PeriodicPotential.from_table(spec.table_path, spec.period, shift=spec.shift)


def build_perturbation(spec: PerturbationSpec) -> Perturbation:
    if spec.kind == "zero":
        base = Perturbation.zero()
    elif spec.kind == "bump":
        base = Perturbation.bump(spec.amplitude, spec.center, spec.width)
    elif spec.kind == "random":
        base = Perturbation.random_compact(spec.amplitude, spec.center, spec.width, spec.seed)
    else:
        base = Perturbation.from_table(spec.table_path)
    return base.scaled(spec.epsilon)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (LabError, linalg.LinAlgError, OSError) as exc:
        logger.error(f"Stage '{name}' failed: {exc}")
        raise StageFailure(name, exc) from exc


def find_bands(cfg: ExperimentConfig) -> BandSet:
    spec = cfg.bands
    with _stage("bands"):
        return band_edges(
            build_potential(cfg.potential),
            (spec.e_min, spec.e_max),
            spec.count,
            steps=spec.steps,
            grid=spec.grid,
        )


def band_model(cfg: ExperimentConfig, bands: BandSet) -> BandSetModel:
    """Band set with the largest Richardson error of the discriminant at its edges."""
    potential = build_potential(cfg.potential)
    potential = potential.shifted(bands.shift - potential.shift)
    edges = np.array(bands.to_pairs(), dtype=float).ravel()
    _, error = discriminant_error(potential, edges, steps=cfg.bands.steps)
    return BandSetModel.from_band_set(bands, discriminant_error=float(np.max(error)))


def compute_spectrum(
    cfg: ExperimentConfig, bands: Optional[BandSet] = None
) -> tuple[BandSet, DiscretizedOperator, np.ndarray]:
    """Bands, the discretized pair (H0, H) with the band shift applied, and all eigenvalues of H."""
    if bands is None:
        bands = find_bands(cfg)
    with _stage("discretize"):
        potential = build_potential(cfg.potential)
        potential = potential.shifted(bands.shift - potential.shift)
        op = discretize(potential, build_perturbation(cfg.perturbation), cfg.discretization.n, cfg.discretization.length)
    with _stage("eigenvalues"):
        eigs = eigenvalues(op.h)
    return bands, op, eigs


def _pairs(values: np.ndarray) -> list[tuple[float, float]]:
    return [(float(z.real), float(z.imag)) for z in values]


def run_experiment(cfg: ExperimentConfig, bands: Optional[BandSet] = None) -> LtReport:
    """band_edges -> discretize -> eigenvalues -> filter -> sums -> report."""
    bands, op, eigs = compute_spectrum(cfg, bands)

    with _stage("filter"):
        retained = within_truncation(eigs, bands)
        beyond = int(eigs.size - retained.size)
        sigma_d = discrete_spectrum_outside(retained, bands, filter_tolerance(retained, op.mesh, cfg.filter_factor))
        near = int(retained.size - sigma_d.size)
    logger.info(f"Kept {sigma_d.size} eigenvalue(s) off the bands, {near} near the bands, {beyond} beyond b_K")

    with _stage("sums"):
        pack = cfg.exponents.to_pack()
        p, q, tau = pack.p, pack.q, pack.tau
        v_norm = op.v_norm(p)
        v0_sup = op.v0_sup
        threshold = omega0(p, pack.d, bands.a1, v0_sup, v_norm).omega0
        s0 = abs(threshold)
        thm1 = lt_sum_thm1(sigma_d, bands, pack, s0)
        prop1 = lt_sum_prop1(sigma_d, bands, pack, threshold, bands.a1, omega0=threshold)
        vp = v_norm**p
        scale_thm1 = vp / s0**tau
        scale_prop1 = vp / s0 ** ((q + 1) * p)
        corollary_sum = lt_sum_corollary(sigma_d, bands, pack)
        first, second = corollary_scales(pack, s0, v0_sup, v_norm)
        chain = [chain_entry(complex(z), bands, pack, s0) for z in sigma_d]

    with _stage("kato_chain"):
        kato = kato_chain_report(op, 2.0 * threshold, pack, a1=bands.a1)

    cfg_hash = config_hash(cfg)
    report = LtReport(
        bands=band_model(cfg, bands),
        mesh=op.mesh,
        omega0=threshold,
        v_norm=v_norm,
        v0_sup=v0_sup,
        eigenvalues=_pairs(eigs),
        sigma_d=_pairs(sigma_d),
        beyond_truncation=beyond,
        near_bands=near,
        max_distance=float(np.max(dist_to_bands(sigma_d, bands))) if sigma_d.size else 0.0,
        lt_sum_thm1=thm1,
        lt_sum_prop1=prop1,
        rhs_scale_thm1=scale_thm1,
        rhs_scale_prop1=scale_prop1,
        empirical_constant_thm1=thm1 / scale_thm1 if vp > 0 else None,
        empirical_constant_prop1=prop1 / scale_prop1 if vp > 0 else None,
        corollary=CorollaryWeights(
            lt_sum=corollary_sum,
            scale_first=first,
            scale_second=second,
            constant_first=corollary_sum / first if first > 0 else None,
            constant_second=corollary_sum / second if second > 0 else None,
        ),
        chain=chain,
        chain_holds=all(c.holds for c in chain),
        clusters=cluster_diagnostics(sigma_d),
        kato_chain=KatoChain.model_validate(kato.to_dict()),
        provenance={
            "config_hash": cfg_hash,
            "seed": cfg.perturbation.seed,
            "versions": {"ltlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        },
    )
    if not report.chain_holds:
        logger.warning(f"Consistency chain failed for config {cfg_hash[:12]}")
    if not kato.asserted_hold:
        logger.warning(f"Asserted operator inequality failed for config {cfg_hash[:12]}")
    write_outputs(report, cfg.output)
    return report


def write_outputs(report: LtReport, output: OutputSpec) -> None:
    """JSON report and CSV plot data (eigenvalue cloud, band rectangles) where requested."""
    if output.report_path:
        with open(output.report_path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(report.model_dump(mode="json")))
        logger.info(f"Report written to {output.report_path}")
    if output.csv_dir:
        os.makedirs(output.csv_dir, exist_ok=True)
        cloud = np.array(report.eigenvalues, dtype=float).reshape(-1, 2)
        off = {tuple(z) for z in report.sigma_d}
        flags = np.array([[1.0 if tuple(z) in off else 0.0] for z in report.eigenvalues]).reshape(-1, 1)
        np.savetxt(
            os.path.join(output.csv_dir, "eigenvalues.csv"),
            np.hstack([cloud, flags]),
            delimiter=",",
            fmt="%.17g",
            header="re,im,off_bands",
            comments="",
        )
        rectangles = [(k, a, b) for k, (a, b) in enumerate(report.bands.edges, start=1)]
        np.savetxt(
            os.path.join(output.csv_dir, "bands.csv"),
            np.array(rectangles, dtype=float).reshape(-1, 3),
            delimiter=",",
            fmt="%.17g",
            header="k,a,b",
            comments="",
        )


def epsilon_sweep(cfg: ExperimentConfig, epsilons: Sequence[float], workers: int = 1) -> SweepReport:
    """One experiment per scale of V, sharing a single band computation."""
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise PreconditionFailed("the sweep needs at least one epsilon")
    if any(e <= 0 for e in epsilons) or any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise PreconditionFailed(f"epsilons must be positive and strictly descending, got {epsilons}")

    bands = find_bands(cfg)
    configs = [
        cfg.model_copy(
            update={
                "perturbation": cfg.perturbation.model_copy(update={"epsilon": e}),
                "output": OutputSpec(),
            }
        )
        for e in epsilons
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda c: run_experiment(c, bands=bands), configs))
    else:
        reports = [run_experiment(c, bands=bands) for c in configs]

    sums = np.array([r.lt_sum_thm1 for r in reports])
    positive = sums > 0
    slope = None
    if np.count_nonzero(positive) >= 2:
        slope = float(np.polyfit(np.log(np.array(epsilons)[positive]), np.log(sums[positive]), 1)[0])
    p = cfg.exponents.p
    meets = None if slope is None else slope >= p - 0.5
    monotone = bool(np.all(sums[1:] <= sums[:-1] * (1.0 + MONOTONE_SLACK)))
    constants = [r.empirical_constant_thm1 for r in reports if r.empirical_constant_thm1]
    spread = max(constants) / min(constants) if constants else None

    if not np.any(positive):
        logger.warning("Empty sweep: no eigenvalue off the bands at any epsilon")
    if meets is False:
        logger.warning(f"Fitted slope {slope:.4g} is below the expected {p - 0.5}")
    if not monotone:
        logger.warning("lt_sum_thm1 increased along the sweep beyond the allowed slack")

    sweep = SweepReport(
        epsilons=epsilons,
        reports=reports,
        slope=slope,
        slope_expected_min=p - 0.5,
        slope_meets_expectation=meets,
        monotone=monotone,
        constant_spread=spread,
    )
    if cfg.output.report_path:
        with open(cfg.output.report_path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(sweep.model_dump(mode="json")))
        logger.info(f"Sweep report written to {cfg.output.report_path}")
    return sweep
