"""Model operators with band spectrum: Hill discriminant, band edges and grid discretizations."""

from __future__ import annotations

import dataclasses
import functools
import logging
import os
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import linalg

from ltlab.band_geometry import BandSet, dist_to_bands
from ltlab.errors import (
    DenseLimitExceeded,
    FewerBandsFound,
    InvalidDiscretization,
    NonConvergence,
    PreconditionFailed,
)

logger = logging.getLogger(__name__)

DENSE_LIMIT = int(os.getenv("LTLAB_DENSE_LIMIT", "2048"))
DEFAULT_STEPS = 2048
EDGE_XTOL = 1e-11
MIN_GAP = 1e-6
RESIDUAL_TOL = 1e-8
CHECKED_PAIRS = 10

RealFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class PeriodicPotential:
    """Real periodic potential V0 with period L; ``shift`` is added to every value."""

    func: RealFunction
    period: float
    sup_norm: float
    shift: float = 0.0
    kind: str = "custom"

    def __post_init__(self):
        if not self.period > 0:
            raise PreconditionFailed(f"period must be positive, got {self.period!r}")
        x = np.linspace(0.0, self.period, 1025)
        values = np.asarray(self.func(x), dtype=float)
        if np.max(np.abs(values)) > self.sup_norm * (1 + 1e-12) + 1e-12:
            raise PreconditionFailed(f"potential exceeds its declared sup norm {self.sup_norm!r}")
        drift = np.max(np.abs(np.asarray(self.func(x + self.period), dtype=float) - values))
        if drift > 1e-12 * max(1.0, self.sup_norm):
            raise PreconditionFailed(f"potential is not {self.period}-periodic (drift {drift:.2e})")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float) + self.shift

    def shifted(self, c: float) -> "PeriodicPotential":
        return dataclasses.replace(self, shift=self.shift + c)

    @property
    def shifted_sup(self) -> float:
        """Sup norm of V0 + shift on a dense sample of one period."""
        return float(np.max(np.abs(self(np.linspace(0.0, self.period, 4097)))))

    @classmethod
    def free(cls, period: float = 1.0, shift: float = 0.0) -> "PeriodicPotential":
        return cls(func=np.zeros_like, period=period, sup_norm=0.0, shift=shift, kind="free")

    @classmethod
    def cosine(cls, amplitude: float, period: float, shift: float = 0.0) -> "PeriodicPotential":
        wave = 2.0 * np.pi / period
        return cls(
            func=lambda x: amplitude * np.cos(wave * x),
            period=period,
            sup_norm=abs(amplitude),
            shift=shift,
            kind="cosine",
        )

    @classmethod
    def from_table(cls, path: str, period: float, shift: float = 0.0) -> "PeriodicPotential":
        """Linear interpolation of CSV rows (x, V0(x)) sampled over one period."""
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        order = np.argsort(table[:, 0])
        xs, vs = table[order, 0], table[order, 1]
        return cls(
            func=lambda x: np.interp(x, xs, vs, period=period),
            period=period,
            sup_norm=float(np.max(np.abs(vs))),
            shift=shift,
            kind="table",
        )


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Complex potential V(x) on the line, zero far from its support."""

    func: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x), dtype=complex), x.shape).copy()

    def scaled(self, factor: complex) -> "Perturbation":
        return Perturbation(func=lambda x: factor * self(x), kind=self.kind)

    @classmethod
    def zero(cls) -> "Perturbation":
        return cls(func=lambda x: np.zeros_like(x, dtype=complex), kind="zero")

    @classmethod
    def bump(cls, amplitude: complex, center: float, width: float) -> "Perturbation":
        return cls(func=lambda x: amplitude * np.exp(-(((x - center) / width) ** 2)), kind="bump")

    @classmethod
    def random_compact(cls, amplitude: complex, center: float, width: float, seed: int, nodes: int = 16) -> "Perturbation":
        """Seeded complex noise on [center - width, center + width], piecewise linear, zero at the ends."""
        rng = np.random.default_rng(seed)
        xs = np.linspace(center - width, center + width, nodes)
        values = rng.standard_normal(nodes) + 1j * rng.standard_normal(nodes)
        values[0] = values[-1] = 0.0

        def func(x):
            re = np.interp(x, xs, values.real, left=0.0, right=0.0)
            im = np.interp(x, xs, values.imag, left=0.0, right=0.0)
            return amplitude * (re + 1j * im)

        return cls(func=func, kind="random")

    @classmethod
    def from_table(cls, path: str) -> "Perturbation":
        """CSV rows (x, Re V, Im V), linearly interpolated and zero outside the table."""
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        order = np.argsort(table[:, 0])
        xs, re, im = table[order, 0], table[order, 1], table[order, 2]
        return cls(
            func=lambda x: np.interp(x, xs, re, left=0.0, right=0.0) + 1j * np.interp(x, xs, im, left=0.0, right=0.0),
            kind="table",
        )


def _check_steps(steps: int) -> None:
    if steps < 100:
        raise InvalidDiscretization(f"need at least 100 integration steps, got {steps}")


def monodromy(potential: PeriodicPotential, energies: Union[float, np.ndarray], steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Monodromy matrices of -y'' + V0 y = E y over one period, shape (len(energies), 2, 2).

    Both fundamental solutions and all energies are advanced together with the
    classical fixed-step RK4 scheme.
    """
    _check_steps(steps)
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    h = potential.period / steps
    v = potential(np.arange(2 * steps + 1) * (h / 2))

    # rows: solution with (y, y') = (1, 0) and solution with (0, 1)
    y = np.zeros((2, energies.size))
    dy = np.zeros((2, energies.size))
    y[0] = 1.0
    dy[1] = 1.0
    half, sixth = h / 2, h / 6
    for i in range(steps):
        q0 = v[2 * i] - energies
        qm = v[2 * i + 1] - energies
        q1 = v[2 * i + 2] - energies
        k1y, k1p = dy, q0 * y
        k2y, k2p = dy + half * k1p, qm * (y + half * k1y)
        k3y, k3p = dy + half * k2p, qm * (y + half * k2y)
        k4y, k4p = dy + h * k3p, q1 * (y + h * k3y)
        y = y + sixth * (k1y + 2 * k2y + 2 * k3y + k4y)
        dy = dy + sixth * (k1p + 2 * k2p + 2 * k3p + k4p)

    matrices = np.empty((energies.size, 2, 2))
    matrices[:, 0, 0], matrices[:, 0, 1] = y[0], y[1]
    matrices[:, 1, 0], matrices[:, 1, 1] = dy[0], dy[1]
    return matrices


def discriminant_curve(potential: PeriodicPotential, energies: np.ndarray, steps: int = DEFAULT_STEPS) -> np.ndarray:
    m = monodromy(potential, energies, steps)
    return m[:, 0, 0] + m[:, 1, 1]


def discriminant(potential: PeriodicPotential, energy: float, steps: int = DEFAULT_STEPS) -> float:
    """Hill discriminant: trace of the monodromy matrix at one energy."""
    return float(discriminant_curve(potential, energy, steps)[0])


def discriminant_error(
    potential: PeriodicPotential, energy: Union[float, np.ndarray], steps: int = DEFAULT_STEPS
) -> tuple:
    """Discriminant at 2*steps and its Richardson error estimate from the steps/2*steps pair."""
    coarse = discriminant_curve(potential, energy, steps)
    fine = discriminant_curve(potential, energy, 2 * steps)
    error = np.abs(fine - coarse) / 15.0
    if np.ndim(energy) == 0:
        return float(fine[0]), float(error[0])
    return fine, error


def _bisect_edges(potential, lo, hi, target, steps):
    """Vectorized bisection of Delta(E) = target on brackets where Delta - target changes sign."""
    sign_lo = np.sign(discriminant_curve(potential, lo, steps) - target)
    for _ in range(200):
        if np.all(hi - lo <= EDGE_XTOL):
            break
        mid = 0.5 * (lo + hi)
        same = np.sign(discriminant_curve(potential, mid, steps) - target) == sign_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def band_edges(
    potential: PeriodicPotential,
    e_range: tuple[float, float],
    count: int,
    steps: int = DEFAULT_STEPS,
    grid: int = 4001,
    min_gap: float = MIN_GAP,
    auto_shift: bool = True,
) -> BandSet:
    """First ``count`` bands {E : |Delta(E)| <= 2} inside ``e_range``.

    A range that starts inside a band is widened down to below min V0,
    so the first band always starts at the true a_1. When the lowest edge
    is not positive the potential is shifted by c = 1 + |a_1| and the
    total shift is recorded on the band set.
    """
    if count < 1:
        raise FewerBandsFound(0, count)
    e_lo, e_hi = e_range
    energies = np.linspace(e_lo, e_hi, grid)
    delta = discriminant_curve(potential, energies, steps)
    inside = np.abs(delta) <= 2.0
    floor = potential.shift - potential.sup_norm
    if inside[0] and e_lo > floor:
        # spectrum starts at or above min V0, so floor - 1 lies below a_1
        logger.warning(f"Energy range starts inside a band at {e_lo}; rescanning from {floor - 1.0}")
        return band_edges(potential, (floor - 1.0, e_hi), count, steps, grid, min_gap, auto_shift)

    cross = np.flatnonzero(inside[:-1] != inside[1:])
    edges = np.empty(cross.size)
    outside_sign = np.where(inside[cross], np.sign(delta[cross + 1]), np.sign(delta[cross]))
    for target in (2.0, -2.0):
        sel = outside_sign == np.sign(target)
        if np.any(sel):
            edges[sel] = _bisect_edges(potential, energies[cross[sel]], energies[cross[sel] + 1], target, steps)

    intervals: list[list[float]] = []
    start = e_lo if inside[0] else None
    if inside[0]:
        logger.warning(f"Band open at the bottom of the energy range {e_lo}")
    for i, e in zip(cross, edges):
        if not inside[i]:
            start = e
        else:
            intervals.append([start, e])
            start = None
    if start is not None:
        logger.warning(f"Band open at the top of the energy range {e_hi}; b_K set to {e_hi}")
        intervals.append([start, e_hi])

    merged: list[list[float]] = []
    for band in intervals:
        if merged and band[0] - merged[-1][1] < min_gap:
            merged[-1][1] = band[1]
        else:
            merged.append(band)
    if len(merged) < count:
        raise FewerBandsFound(len(merged), count)
    merged = merged[:count]

    c = 0.0
    if auto_shift and merged[0][0] <= 0:
        c = 1.0 + abs(merged[0][0])
    logger.info(f"Found {count} band(s) of the {potential.kind} potential, shift c={c}")
    return BandSet.from_pairs([(a + c, b + c) for a, b in merged], shift=potential.shift + c)


def lp_norm(values: np.ndarray, mesh: float, p: float) -> float:
    """Mesh-weighted discrete L^p norm (h * sum |v_j|^p)^(1/p)."""
    return float((mesh * np.sum(np.abs(values) ** p)) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Dense H0 = -Delta_h + V0 and H = H0 + V on a periodic grid, with Kato factors of V."""

    h0: np.ndarray
    v: np.ndarray
    v0: np.ndarray
    mesh: float
    length: float

    @property
    def n(self) -> int:
        return self.h0.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n) * self.mesh

    @functools.cached_property
    def h(self) -> np.ndarray:
        return self.h0 + np.diag(self.v)

    @functools.cached_property
    def laplacian(self) -> np.ndarray:
        return self.h0 - np.diag(self.v0)

    @functools.cached_property
    def v1(self) -> np.ndarray:
        return np.sqrt(np.abs(self.v))

    @functools.cached_property
    def v2(self) -> np.ndarray:
        modulus = np.abs(self.v)
        phase = np.divide(self.v, modulus, out=np.zeros_like(self.v), where=modulus > 0)
        return phase * self.v1

    @property
    def V1(self) -> np.ndarray:
        return np.diag(self.v1.astype(complex))

    @property
    def V2(self) -> np.ndarray:
        return np.diag(self.v2)

    @property
    def v0_sup(self) -> float:
        return float(np.max(np.abs(self.v0)))

    def v_norm(self, p: float) -> float:
        return lp_norm(self.v, self.mesh, p)

    @functools.cached_property
    def h0_bottom(self) -> float:
        return float(linalg.eigvalsh(self.h0, subset_by_index=[0, 0])[0])

    @classmethod
    def from_matrices(cls, h0: np.ndarray, v: np.ndarray, mesh: float = 1.0) -> "DiscretizedOperator":
        """Wrap an arbitrary Hermitian H0 and diagonal V; the whole of H0 counts as the free part."""
        h0 = np.atleast_2d(np.asarray(h0))
        if h0.shape[0] != h0.shape[1] or not np.allclose(h0, h0.conj().T, atol=1e-14):
            raise PreconditionFailed("H0 must be a square Hermitian matrix")
        v = np.atleast_1d(np.asarray(v, dtype=complex))
        return cls(h0=h0, v=v, v0=np.zeros(h0.shape[0]), mesh=mesh, length=mesh * h0.shape[0])


def periodic_laplacian(n: int, mesh: float) -> np.ndarray:
    identity = np.eye(n)
    return (2.0 * identity - np.roll(identity, 1, axis=1) - np.roll(identity, -1, axis=1)) / mesh**2


def discretize(potential: PeriodicPotential, perturbation: Callable, n: int, length: float) -> DiscretizedOperator:
    if n < 16:
        raise InvalidDiscretization(f"need n >= 16 grid points, got {n}")
    periods = length / potential.period
    if round(periods) < 1 or abs(periods - round(periods)) > 1e-9 * max(1.0, periods):
        raise InvalidDiscretization(f"box length {length} is not a multiple of the period {potential.period}")
    mesh = length / n
    x = np.arange(n) * mesh
    v0 = potential(x)
    v = np.broadcast_to(np.asarray(perturbation(x), dtype=complex), (n,)).copy()
    h0 = periodic_laplacian(n, mesh) + np.diag(v0)
    logger.debug(f"Discretized on n={n}, length={length}, mesh={mesh:.4g}")
    return DiscretizedOperator(h0=h0, v=v, v0=v0, mesh=mesh, length=length)


def _residual(matrix: np.ndarray, value: complex, vector: np.ndarray, scale: float) -> float:
    return float(np.linalg.norm(matrix @ vector - value * vector) / scale)


def _inverse_iteration(matrix, value, vector, scale, max_steps=3):
    n = matrix.shape[0]
    offset = 1e-10 * scale * (1 + 1j)
    lu = linalg.lu_factor(matrix - (value + offset) * np.eye(n))
    for step in range(1, max_steps + 1):
        vector = linalg.lu_solve(lu, vector)
        vector /= np.linalg.norm(vector)
        value = complex(vector.conj() @ matrix @ vector)
        if _residual(matrix, value, vector, scale) <= RESIDUAL_TOL:
            return value, vector, step
    return value, vector, max_steps


def eigenvalues(matrix: np.ndarray, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """All eigenvalues of a dense complex matrix, sorted by (Re, Im).

    Backward error of ten sampled eigenpairs is checked, with inverse iteration
    refinement for pairs that miss the tolerance.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise PreconditionFailed(f"matrix must be square, got shape {matrix.shape}")
    if n > dense_limit:
        raise DenseLimitExceeded(f"n={n} exceeds the dense eigensolver limit {dense_limit}")
    try:
        values, vectors = linalg.eig(matrix)
    except linalg.LinAlgError as exc:
        raise NonConvergence(f"dense eigensolver failed: {exc}") from exc

    scale = float(np.max(np.linalg.norm(matrix, axis=0)))
    if scale > 0:
        for i in np.unique(np.linspace(0, n - 1, min(CHECKED_PAIRS, n)).astype(int)):
            vector = vectors[:, i] / np.linalg.norm(vectors[:, i])
            if _residual(matrix, values[i], vector, scale) <= RESIDUAL_TOL:
                continue
            refined, vector, used = _inverse_iteration(matrix, values[i], vector, scale)
            if _residual(matrix, refined, vector, scale) > RESIDUAL_TOL:
                raise NonConvergence(f"eigenpair {i} misses the backward error tolerance", iterations=used)
            values[i] = refined
    return values[np.lexsort((values.imag, values.real))]


def discrete_spectrum_outside(eigs: np.ndarray, bands: BandSet, tol: Union[float, np.ndarray]) -> np.ndarray:
    """Eigenvalues farther than ``tol`` from the bands: the numerical stand-ins for sigma_d(H)."""
    tol = np.asarray(tol, dtype=float)
    if np.any(~(tol > 0)):
        raise PreconditionFailed("the off-band tolerance must be positive")
    eigs = np.atleast_1d(np.asarray(eigs, dtype=complex))
    if eigs.size == 0:
        return eigs
    return eigs[dist_to_bands(eigs, bands) > np.broadcast_to(tol, eigs.shape)]


def within_truncation(eigs: np.ndarray, bands: BandSet) -> np.ndarray:
    eigs = np.atleast_1d(np.asarray(eigs, dtype=complex))
    return eigs[eigs.real < bands.b_last]
