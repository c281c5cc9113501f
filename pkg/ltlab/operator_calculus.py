"""Schatten-norm calculus on matrices and checks of the operator inequalities behind the bound.

Items computed on a grid that only mirror continuum statements are labelled
empirical and never fail a run; exact matrix identities and inequalities are
asserted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from ltlab.errors import MiddleFactorSingular, NearSpectrum, PreconditionFailed
from ltlab.hill_models import DiscretizedOperator, eigenvalues
from ltlab.spectral_constants import ExponentPack, eta, omega0

logger = logging.getLogger(__name__)

RESOLVENT_TOL = 1e-9
INEQUALITY_RTOL = 1e-12
NEAR_SPECTRUM = 1e-8
MIDDLE_SINGULAR = 1e-12


@dataclass(frozen=True, eq=False)
class SingularSpectrum:
    values: np.ndarray  # descending, nonnegative

    def schatten(self, p: float) -> float:
        if not (p >= 1 and math.isfinite(p)):
            raise PreconditionFailed(f"Schatten exponent must be finite and >= 1, got {p!r}")
        top = float(self.values[0]) if self.values.size else 0.0
        if top == 0.0:
            return 0.0
        return top * float(np.sum((self.values / top) ** p)) ** (1.0 / p)


def singular_spectrum(matrix: np.ndarray) -> SingularSpectrum:
    return SingularSpectrum(values=linalg.svdvals(np.atleast_2d(matrix)))


def schatten_norm(matrix: np.ndarray, p: float) -> float:
    return singular_spectrum(matrix).schatten(p)


def operator_norm(matrix: np.ndarray) -> float:
    values = linalg.svdvals(np.atleast_2d(matrix))
    return float(values[0]) if values.size else 0.0


def resolvent(matrix: np.ndarray, z: complex) -> np.ndarray:
    """R(z, T) = (T - z)^(-1)."""
    n = matrix.shape[0]
    return linalg.solve(matrix - z * np.eye(n), np.eye(n, dtype=complex))


class InequalityCheck(NamedTuple):
    lhs: float
    rhs: float

    def holds(self, rtol: float = INEQUALITY_RTOL) -> bool:
        return self.lhs <= self.rhs * (1.0 + rtol)


class NeumannCheck(NamedTuple):
    norm_t: float
    norm_inverse: float

    def holds(self, rtol: float = INEQUALITY_RTOL) -> bool:
        return self.norm_inverse <= 2.0 * (1.0 + rtol)


@dataclass(frozen=True)
class ResolventCheck:
    z: complex
    residual: float
    conditioning: tuple[float, float]  # smallest singular values of H - z and H0 - z

    @property
    def holds(self) -> bool:
        return self.residual <= RESOLVENT_TOL


def _smallest_singular(matrix: np.ndarray, side: str) -> float:
    values = linalg.svdvals(matrix)
    if values[-1] <= NEAR_SPECTRUM * values[0]:
        raise NearSpectrum(side, float(values[-1]))
    return float(values[-1])


def verify_resolvent_identity(op: DiscretizedOperator, z: complex) -> ResolventCheck:
    """Residual of R(z,H) = R(z,H0) - R(z,H0) V1 [I + V2 R(z,H0) V1]^(-1) V2 R(z,H0)."""
    n = op.n
    identity = np.eye(n, dtype=complex)
    shifted = op.h - z * identity
    shifted0 = op.h0 - z * identity
    conditioning = (_smallest_singular(shifted, "H"), _smallest_singular(shifted0, "H0"))

    r = linalg.solve(shifted, identity)
    r0 = linalg.solve(shifted0, identity)
    middle = identity + op.v2[:, None] * r0 * op.v1[None, :]
    middle_values = linalg.svdvals(middle)
    if middle_values[-1] <= MIDDLE_SINGULAR * middle_values[0]:
        raise MiddleFactorSingular(f"I + V2 R(z,H0) V1 is numerically singular at z={z!r}")
    rhs = r0 - (r0 * op.v1[None, :]) @ linalg.solve(middle, op.v2[:, None] * r0)

    residual = float(linalg.norm(r - rhs, 2) / linalg.norm(r, 2))
    return ResolventCheck(z=complex(z), residual=residual, conditioning=conditioning)


def contour_points(op: DiscretizedOperator, count: int = 20) -> np.ndarray:
    """Points on a circle enclosing the numerical ranges of H and H0."""
    n = op.n
    center = complex(np.trace(op.h)) / n
    identity = np.eye(n)
    radius = 1.5 * max(operator_norm(op.h - center * identity), operator_norm(op.h0 - center * identity)) + 1.0
    angles = 2.0 * np.pi * (np.arange(count) + 0.5) / count
    return center + radius * np.exp(1j * angles)


def verify_schatten_holder(a: np.ndarray, b: np.ndarray, p: float) -> InequalityCheck:
    """||AB||_p against ||A||_2p ||B||_2p."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.shape[1] != b.shape[0]:
        raise PreconditionFailed(f"incompatible shapes {a.shape} and {b.shape}")
    return InequalityCheck(lhs=schatten_norm(a @ b, p), rhs=schatten_norm(a, 2 * p) * schatten_norm(b, 2 * p))


def verify_neumann_bound(t: np.ndarray) -> NeumannCheck:
    """||(I+T)^(-1)|| <= 2 whenever ||T|| <= 1/2."""
    t = np.atleast_2d(t)
    norm_t = operator_norm(t)
    if norm_t > 0.5 * (1.0 + INEQUALITY_RTOL):
        raise PreconditionFailed(f"||T|| = {norm_t:.6g} > 1/2, Neumann check skipped")
    smallest = linalg.svdvals(np.eye(t.shape[0]) + t)[-1]
    return NeumannCheck(norm_t=norm_t, norm_inverse=float(1.0 / smallest))


def hansmann_ratio(a0: np.ndarray, a: np.ndarray, p: float) -> float:
    """Sum of dist(lambda, sigma(A0))^p over sigma(A), divided by ||A - A0||_p^p."""
    a0 = np.atleast_2d(a0)
    if not np.allclose(a0, a0.conj().T, rtol=1e-12, atol=1e-14 * max(1.0, operator_norm(a0))):
        raise PreconditionFailed("A0 must be Hermitian")
    denominator = schatten_norm(np.atleast_2d(a) - a0, p) ** p
    if denominator == 0.0:
        raise PreconditionFailed("A - A0 must be nonzero")
    reference = linalg.eigvalsh(a0)
    spectrum = eigenvalues(a)
    distances = np.min(np.abs(spectrum[:, None] - reference[None, :]), axis=1)
    return float(np.sum(distances**p) / denominator)


def _sqrt_free_resolvent(op: DiscretizedOperator, omega: float) -> np.ndarray:
    mu, u = linalg.eigh(op.laplacian)
    return (u * (mu - omega) ** -0.5) @ u.conj().T


def verify_free_factorization(op: DiscretizedOperator, omega: float) -> float:
    """Relative residual of R(w,H0) = R^1/2 (I + R^1/2 V0 R^1/2)^(-1) R^1/2 with R = R(w, -Delta)."""
    n = op.n
    rhalf = _sqrt_free_resolvent(op, omega)
    sandwich = rhalf @ (op.v0[:, None] * rhalf)
    factored = rhalf @ linalg.solve(np.eye(n) + sandwich, rhalf)
    r0 = resolvent(op.h0, omega)
    return float(linalg.norm(r0 - factored, 2) / linalg.norm(r0, 2))


@dataclass(frozen=True)
class EmpiricalItem:
    quantity: str
    value: float
    bound: Optional[float]
    empirical: bool = True

    @property
    def ratio(self) -> Optional[float]:
        if self.bound is None or self.bound == 0.0:
            return None
        return self.value / self.bound

    @property
    def verdict(self) -> str:
        if self.bound is None:
            return "empirical-only"
        return "within" if self.value <= self.bound * (1.0 + INEQUALITY_RTOL) else "exceeds"

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "value": self.value,
            "bound": self.bound,
            "ratio": self.ratio,
            "verdict": self.verdict,
            "empirical": self.empirical,
        }


@dataclass(frozen=True)
class KatoChainReport:
    omega: float
    omega0: float
    items: list[EmpiricalItem] = field(default_factory=list)

    def item(self, quantity: str) -> EmpiricalItem:
        return next(i for i in self.items if i.quantity == quantity)

    @property
    def asserted_hold(self) -> bool:
        return all(i.verdict == "within" for i in self.items if not i.empirical)

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "omega0": self.omega0,
            "items": [i.to_dict() for i in self.items],
            "asserted_hold": self.asserted_hold,
        }


def kato_chain_report(
    op: DiscretizedOperator, omega: float, pack: ExponentPack, a1: Optional[float] = None
) -> KatoChainReport:
    """Evaluate the resolvent-difference chain at a real point omega <= omega0 on the grid."""
    a1 = op.h0_bottom if a1 is None else a1
    if not a1 > 0:
        raise PreconditionFailed(f"a_1={a1!r} must be positive; shift the potential first")
    p, d, q = pack.p, pack.d, pack.q
    v_norm = op.v_norm(p)
    threshold = omega0(p, d, a1, op.v0_sup, v_norm).omega0
    if omega > threshold * (1.0 - 1e-12):
        raise PreconditionFailed(f"omega={omega!r} must be <= omega0={threshold!r}")

    r0 = resolvent(op.h0, omega)
    try:
        r = resolvent(op.h, omega)
    except linalg.LinAlgError as exc:
        raise NearSpectrum("H", 0.0) from exc
    e = eta(p, d)
    rhalf = _sqrt_free_resolvent(op, omega)
    scale = abs(omega)

    neumann = operator_norm(op.v2[:, None] * r0 * op.v1[None, :])
    items = [
        EmpiricalItem("neumann_factor", neumann, 0.5),
        EmpiricalItem("resolvent_difference_sp", schatten_norm(r - r0, p), 4.0 * e * e * v_norm / scale ** (q + 1)),
        EmpiricalItem(
            "birman_solomyak",
            schatten_norm(op.v2[:, None] * rhalf, 2 * p),
            e * math.sqrt(v_norm / scale**q),
        ),
        EmpiricalItem(
            "free_sandwich",
            operator_norm(rhalf @ (op.v0[:, None] * rhalf)),
            op.v0_sup / scale,
            empirical=False,
        ),
        EmpiricalItem("free_factorization", verify_free_factorization(op, omega), RESOLVENT_TOL, empirical=False),
    ]
    if v_norm > 0:
        # R(omega, H0) is selfadjoint for real omega; drop the solver's rounding asymmetry
        items.append(EmpiricalItem("hansmann_ratio", hansmann_ratio(0.5 * (r0 + r0.conj().T), r, p), None))
    if neumann > 0.5:
        logger.warning(f"||V2 R(omega,H0) V1|| = {neumann:.4g} exceeds 1/2 at omega={omega} on this mesh")
    return KatoChainReport(omega=omega, omega0=threshold, items=items)
