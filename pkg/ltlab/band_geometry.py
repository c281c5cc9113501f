"""Geometry of truncated band sets and their images under z -> 1/(z - omega).

Band and gap indices are 1-based throughout, so ``InGap(k)`` is the gap between
band k and band k+1 and the region left of the spectrum is gap 0.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

from ltlab.errors import InvalidBandSet, InvalidShift, OnSpectrum, PreconditionFailed, TruncationExceeded, WrongRegion

logger = logging.getLogger(__name__)

TOL_GEOM = 1e-12  # absolute slack on distortion margins
SPECTRUM_GUARD = 1e-9  # samples closer than this to I are discarded

ComplexLike = Union[complex, float, np.ndarray]


@dataclass(frozen=True)
class GapStats:
    gap_lengths: tuple[float, ...]
    relative_bound: float


@dataclass(frozen=True)
class BandSet:
    """K retained bands [a_k, b_k] of an infinite band spectrum.

    ``shift`` records the constant added to the potential to make a_1 > 0.
    """

    edges: tuple[tuple[float, float], ...]
    shift: float = 0.0

    def __post_init__(self):
        edges = tuple((float(a), float(b)) for a, b in self.edges)
        if not edges:
            raise InvalidBandSet("a band set needs at least one band")
        if not edges[0][0] > 0:
            raise InvalidBandSet(f"a_1 must be positive, got {edges[0][0]!r}")
        for k, (a, b) in enumerate(edges, start=1):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise InvalidBandSet(f"band {k} has a non-finite edge")
            if not a < b:
                raise InvalidBandSet(f"band {k}: a_k={a!r} must be < b_k={b!r}")
            if k < len(edges) and not b < edges[k][0]:
                raise InvalidBandSet(f"band {k} overlaps or touches band {k + 1}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]], shift: float = 0.0) -> "BandSet":
        return cls(tuple((p[0], p[1]) for p in pairs), shift=shift)

    def to_pairs(self) -> list[list[float]]:
        return [[a, b] for a, b in self.edges]

    @property
    def K(self) -> int:
        return len(self.edges)

    @property
    def a1(self) -> float:
        return self.edges[0][0]

    @property
    def b_last(self) -> float:
        return self.edges[-1][1]

    @functools.cached_property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.edges])

    @functools.cached_property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.edges])

    def gap_stats(self) -> GapStats:
        gaps = tuple(self.edges[k + 1][0] - self.edges[k][1] for k in range(self.K - 1))
        ratios = [r / self.edges[k][1] for k, r in enumerate(gaps)]
        return GapStats(gap_lengths=gaps, relative_bound=max(ratios, default=0.0))


class Region(str, enum.Enum):
    LEFT_OF_SPECTRUM = "left_of_spectrum"
    ON_BAND_PROJECTION = "on_band_projection"
    IN_GAP = "in_gap"


@dataclass(frozen=True)
class RegionClass:
    region: Region
    k: int  # band index on a band, gap index in a gap, 0 left of the spectrum

    def __str__(self):
        if self.region is Region.IN_GAP:
            return f"InGap({self.k})"
        if self.region is Region.ON_BAND_PROJECTION:
            return "OnBandProjection"
        return "LeftOfSpectrum"


class BoundKind(str, enum.Enum):
    DISTOR1 = "distor1"
    DISTOR2 = "distor2"
    DISTOR3 = "distor3"


@dataclass(frozen=True)
class MobiusMap:
    omega: float

    def __call__(self, z: ComplexLike) -> ComplexLike:
        if np.ndim(z):
            return 1.0 / (np.asarray(z, dtype=complex) - self.omega)
        return 1.0 / (complex(z) - self.omega)


@dataclass(frozen=True)
class ImageBandSet:
    """Image intervals [beta_k, alpha_k], decreasing toward 0."""

    omega: float
    intervals: tuple[tuple[float, float], ...]

    @property
    def beta_last(self) -> float:
        return self.intervals[-1][0]


@dataclass(frozen=True)
class DistortionSample:
    z: complex
    omega: float
    dist_z: float
    dist_lambda: float
    ratio: float
    bound: float
    bound_kind: BoundKind
    margin: float


@dataclass(frozen=True)
class Rectangle:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if self.re_min > self.re_max or self.im_min > self.im_max:
            raise PreconditionFailed(f"empty rectangle {self}")


def _segment_distance(z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    x = z.real[..., None]
    y = z.imag[..., None]
    dx = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    return np.min(np.hypot(dx, y), axis=-1)


def dist_to_bands(z: ComplexLike, bands: BandSet) -> Union[float, np.ndarray]:
    """Euclidean distance from z to the union of the retained bands."""
    zz = np.asarray(z, dtype=complex)
    d = _segment_distance(zz, bands.lower, bands.upper)
    return float(d) if zz.ndim == 0 else d


def mobius_image(bands: BandSet, omega: float) -> ImageBandSet:
    if not omega < bands.a1:
        raise InvalidShift(f"omega={omega!r} must be < a_1={bands.a1!r}")
    intervals = tuple((1.0 / (b - omega), 1.0 / (a - omega)) for a, b in bands.edges)
    return ImageBandSet(omega=omega, intervals=intervals)


def image_distance(w: ComplexLike, image: ImageBandSet, close_tail: bool = False) -> Union[float, np.ndarray]:
    """Distance from w to the image bands.

    With ``close_tail`` the segment [0, beta_K] is added: every band beyond the
    truncation maps into it, so the result never exceeds the infinite-band distance.
    """
    lo = [beta for beta, _ in image.intervals]
    hi = [alpha for _, alpha in image.intervals]
    if close_tail:
        lo.append(0.0)
        hi.append(image.beta_last)
    ww = np.asarray(w, dtype=complex)
    d = _segment_distance(ww, np.array(lo), np.array(hi))
    return float(d) if ww.ndim == 0 else d


def band_index(x: float, bands: BandSet) -> int:
    """Number of bands with a_k <= x (the gap or band index of x)."""
    return int(np.searchsorted(bands.lower, x, side="right"))


def classify(x: float, bands: BandSet) -> RegionClass:
    if x >= bands.b_last:
        raise TruncationExceeded(x, bands.b_last)
    k = band_index(x, bands)
    if k == 0:
        return RegionClass(Region.LEFT_OF_SPECTRUM, 0)
    if x <= bands.edges[k - 1][1]:
        return RegionClass(Region.ON_BAND_PROJECTION, k)
    return RegionClass(Region.IN_GAP, k)


def crossing_ordinates(x: float, bands: BandSet, j: int) -> tuple[float, float]:
    """Heights u_j < v_j at which Re(1/z) on the line Re z = x meets alpha_j and beta_j."""
    if not 1 <= j <= bands.K:
        raise WrongRegion(f"band index j={j} outside 1..{bands.K}")
    a_j, b_j = bands.edges[j - 1]
    if not 0 < x < a_j:
        raise WrongRegion(f"need 0 < x < a_j, got x={x!r}, a_j={a_j!r}")
    return math.sqrt(x * (a_j - x)), math.sqrt(x * (b_j - x))


def gap_gamma(k: int, omega: float, bands: BandSet) -> float:
    rel = (bands.edges[k][0] - bands.edges[k - 1][1]) / (bands.edges[k - 1][1] - omega)
    return max(1.0 + rel, 1.0 + math.sqrt(rel))


def sharp_gap_bound(z: complex, omega: float, bands: BandSet) -> float:
    """1/(gamma_k |z - omega|^2) for Re z inside gap k >= 1."""
    region = classify(z.real, bands)
    if region.region is not Region.IN_GAP:
        raise WrongRegion(f"sharp gap bound needs an interior gap, got {region}")
    return 1.0 / (gap_gamma(region.k, omega, bands) * abs(z - omega) ** 2)


def distortion_bound(z: complex, omega: float, bands: BandSet, kind: Union[BoundKind, str]) -> float:
    kind = BoundKind(kind)
    if not omega < bands.a1:
        raise InvalidShift(f"omega={omega!r} must be < a_1={bands.a1!r}")
    z = complex(z)
    region = classify(z.real, bands)
    zw = abs(z - omega)
    if kind is BoundKind.DISTOR1:
        if region.region is Region.IN_GAP:
            raise WrongRegion(f"distor1 needs Re z left of the spectrum or on a band, got {region}")
        return 1.0 / (3.0 * zw * (zw + bands.a1 - omega))
    if kind is BoundKind.DISTOR2:
        if region.region is not Region.IN_GAP:
            raise WrongRegion(f"distor2 needs Re z inside an interior gap, got {region}")
        b_k = bands.edges[region.k - 1][1]
        r_k = bands.edges[region.k][0] - b_k
        return 1.0 / (2.0 * zw**2) / (1.0 + r_k / (b_k - omega))
    if not omega < 0:
        raise WrongRegion(f"distor3 needs omega < 0, got {omega!r}")
    r = bands.gap_stats().relative_bound
    return 1.0 / (5.0 * (1.0 + r)) / (zw * (zw + bands.a1 - omega))


def _preferred_kind(region: RegionClass, omega: float) -> BoundKind:
    if omega < 0:
        return BoundKind.DISTOR3
    if region.region is Region.IN_GAP:
        return BoundKind.DISTOR2
    return BoundKind.DISTOR1


def distortion_ratio(z: complex, omega: float, bands: BandSet, close_tail: bool = False) -> DistortionSample:
    z = complex(z)
    image = mobius_image(bands, omega)
    dist_z = dist_to_bands(z, bands)
    if dist_z == 0.0:
        raise OnSpectrum(f"z={z!r} lies on the band set")
    kind = _preferred_kind(classify(z.real, bands), omega)
    dist_lambda = image_distance(MobiusMap(omega)(z), image, close_tail=close_tail)
    ratio = dist_lambda / dist_z
    bound = distortion_bound(z, omega, bands, kind)
    return DistortionSample(
        z=z,
        omega=omega,
        dist_z=dist_z,
        dist_lambda=dist_lambda,
        ratio=ratio,
        bound=bound,
        bound_kind=kind,
        margin=ratio - bound,
    )


@dataclass(frozen=True)
class DistortionReport:
    """Outcome of a sampled distortion check; ``merge`` is associative and commutative."""

    omega: float
    seed: int
    n_requested: int = 0
    n_checked: int = 0
    n_discarded: int = 0
    min_margin: Optional[float] = None
    worst_z: Optional[complex] = None
    worst_kind: Optional[str] = None
    counts: dict = field(default_factory=dict)
    min_margin_by_kind: dict = field(default_factory=dict)
    tol: float = TOL_GEOM

    @property
    def success(self) -> bool:
        return self.min_margin is None or self.min_margin >= -self.tol

    def merge(self, other: "DistortionReport") -> "DistortionReport":
        worst = min(
            (r for r in (self, other) if r.min_margin is not None),
            key=lambda r: (r.min_margin, r.worst_z.real, r.worst_z.imag),
            default=self,
        )
        counts = dict(self.counts)
        for kind, n in other.counts.items():
            counts[kind] = counts.get(kind, 0) + n
        by_kind = dict(self.min_margin_by_kind)
        for kind, m in other.min_margin_by_kind.items():
            by_kind[kind] = min(by_kind.get(kind, m), m)
        return DistortionReport(
            omega=self.omega,
            seed=self.seed,
            n_requested=self.n_requested + other.n_requested,
            n_checked=self.n_checked + other.n_checked,
            n_discarded=self.n_discarded + other.n_discarded,
            min_margin=worst.min_margin,
            worst_z=worst.worst_z,
            worst_kind=worst.worst_kind,
            counts=counts,
            min_margin_by_kind=by_kind,
            tol=self.tol,
        )

    def to_dict(self) -> dict:
        return {
            "N": self.n_requested,
            "seed": self.seed,
            "omega": self.omega,
            "checked": self.n_checked,
            "discarded": self.n_discarded,
            "min_margin": self.min_margin,
            "worst_z": None if self.worst_z is None else [self.worst_z.real, self.worst_z.imag],
            "worst_kind": self.worst_kind,
            "counts": dict(sorted(self.counts.items())),
            "min_margin_by_kind": dict(sorted(self.min_margin_by_kind.items())),
            "success": self.success,
        }


def _check_chunk(z: np.ndarray, omega: float, bands: BandSet, seed: int, tol: float) -> DistortionReport:
    dist_z = dist_to_bands(z, bands)
    keep = dist_z > SPECTRUM_GUARD
    discarded = int(np.count_nonzero(~keep))
    z, dist_z = z[keep], dist_z[keep]
    if z.size == 0:
        return DistortionReport(omega=omega, seed=seed, n_requested=discarded, n_discarded=discarded, tol=tol)

    image = mobius_image(bands, omega)
    ratio = image_distance(MobiusMap(omega)(z), image, close_tail=True) / dist_z
    zw = np.abs(z - omega)
    a1 = bands.a1

    k = np.searchsorted(bands.lower, z.real, side="right")
    in_gap = (k >= 1) & (z.real > bands.upper[np.maximum(k - 1, 0)])
    left_or_band = ~in_gap

    margins: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    distor1 = 1.0 / (3.0 * zw * (zw + a1 - omega))
    margins[BoundKind.DISTOR1.value] = (ratio - distor1, left_or_band)
    if np.any(in_gap):
        kg = np.where(in_gap, k, 1)
        b_k = bands.upper[kg - 1]
        rel = (bands.lower[np.minimum(kg, bands.K - 1)] - b_k) / (b_k - omega)
        distor2 = 1.0 / (2.0 * zw**2) / (1.0 + rel)
        gamma = np.maximum(1.0 + rel, 1.0 + np.sqrt(np.abs(rel)))
        margins[BoundKind.DISTOR2.value] = (ratio - distor2, in_gap)
        margins["distor2_sharp"] = (ratio - 1.0 / (gamma * zw**2), in_gap)
    if omega < 0:
        r = bands.gap_stats().relative_bound
        distor3 = 1.0 / (5.0 * (1.0 + r)) / (zw * (zw + a1 - omega))
        margins[BoundKind.DISTOR3.value] = (ratio - distor3, np.ones_like(in_gap))

    counts, by_kind = {}, {}
    worst_margin, worst_z, worst_kind = math.inf, None, None
    for kind, (margin, mask) in margins.items():
        counts[kind] = int(np.count_nonzero(mask))
        if not counts[kind]:
            continue
        masked = np.where(mask, margin, np.inf)
        i = int(np.argmin(masked))
        by_kind[kind] = float(masked[i])
        if masked[i] < worst_margin:
            worst_margin, worst_z, worst_kind = float(masked[i]), complex(z[i]), kind
    return DistortionReport(
        omega=omega,
        seed=seed,
        n_requested=discarded + int(z.size),
        n_checked=int(z.size),
        n_discarded=discarded,
        min_margin=worst_margin,
        worst_z=worst_z,
        worst_kind=worst_kind,
        counts=counts,
        min_margin_by_kind=by_kind,
        tol=tol,
    )


def sample_rectangle(region: Rectangle, n: int, seed: int) -> np.ndarray:
    """Scrambled Halton points in the rectangle, reproducible for a given seed."""
    if n == 0:
        return np.empty(0, dtype=complex)
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    re = region.re_min + (region.re_max - region.re_min) * u[:, 0]
    im = region.im_min + (region.im_max - region.im_min) * u[:, 1]
    return re + 1j * im


def verify_distortion(
    bands: BandSet,
    omega: float,
    region: Rectangle,
    n: int,
    seed: int,
    workers: int = 1,
    tol: float = TOL_GEOM,
) -> DistortionReport:
    """Sample the rectangle and check every applicable distortion bound."""
    if n < 0:
        raise PreconditionFailed(f"sample count must be >= 0, got {n}")
    if region.re_max >= bands.b_last:
        raise TruncationExceeded(region.re_max, bands.b_last)
    if not omega < bands.a1:
        raise InvalidShift(f"omega={omega!r} must be < a_1={bands.a1!r}")

    empty = DistortionReport(omega=omega, seed=seed, tol=tol)
    z = sample_rectangle(region, n, seed)
    chunks = [c for c in np.array_split(z, max(1, workers)) if c.size]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _check_chunk(c, omega, bands, seed, tol), chunks))
    else:
        parts = [_check_chunk(c, omega, bands, seed, tol) for c in chunks]
    report = functools.reduce(DistortionReport.merge, parts, empty)

    logger.info(
        f"Distortion check omega={omega}: {report.n_checked} checked, "
        f"{report.n_discarded} discarded, min margin {report.min_margin}"
    )
    if not report.success:
        logger.warning(f"Distortion margin below -{tol} at z={report.worst_z} ({report.worst_kind})")
    return report
