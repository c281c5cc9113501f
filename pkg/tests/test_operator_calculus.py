import numpy as np
import pytest

from ltlab.errors import NearSpectrum, PreconditionFailed
from ltlab.hill_models import DiscretizedOperator, PeriodicPotential, Perturbation, discretize
from ltlab.operator_calculus import (
    contour_points,
    hansmann_ratio,
    kato_chain_report,
    operator_norm,
    schatten_norm,
    verify_free_factorization,
    verify_neumann_bound,
    verify_resolvent_identity,
    verify_schatten_holder,
)
from ltlab.spectral_constants import ExponentPack, omega0


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def pack():
    return ExponentPack(p=2.0, d=1, tau=1.0)


@pytest.fixture(scope="module")
def random_operator():
    """Hermitian H0 with spectrum in about [-2, 2] and a complex diagonal V."""
    rng = np.random.default_rng(11)
    n = 64
    g = rng.standard_normal((n, n))
    h0 = (g + g.T) / (2 * np.sqrt(n))
    v = 0.5 * random_complex(rng, n)
    return DiscretizedOperator.from_matrices(h0, v)


@pytest.fixture(scope="module")
def free_operator():
    """-Delta + 1 on [0, 8] with V = 0, so a_1 = 1 and omega0 = -4 for p=2, d=1."""
    return discretize(PeriodicPotential.free(shift=1.0), Perturbation.zero(), 64, 8.0)


@pytest.fixture(scope="module")
def bumped_operator():
    return discretize(PeriodicPotential.free(shift=1.0), Perturbation.bump(0.2 + 0.2j, 4.0, 0.5), 64, 8.0)


class TestSchattenNorm:
    def test_identity(self):
        """||I_3||_2 = sqrt 3."""
        assert schatten_norm(np.eye(3), 2) == pytest.approx(np.sqrt(3))

    def test_diagonal(self):
        """||diag(3, 4)||_2 = 5 and ||.||_1 = 7."""
        a = np.diag([3.0, 4.0])
        assert schatten_norm(a, 2) == pytest.approx(5.0)
        assert schatten_norm(a, 1) == pytest.approx(7.0)
        assert operator_norm(a) == pytest.approx(4.0)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 7.0])
    def test_rank_one(self, p):
        """Every Schatten norm of u v* equals |u| |v|."""
        rng = np.random.default_rng(1)
        u, v = random_complex(rng, 6), random_complex(rng, 6)
        expected = np.linalg.norm(u) * np.linalg.norm(v)
        assert schatten_norm(np.outer(u, v.conj()), p) == pytest.approx(expected, rel=1e-12)

    def test_decreasing_in_p(self):
        """||A||_p is non-increasing in p."""
        a = random_complex(np.random.default_rng(2), (10, 10))
        norms = [schatten_norm(a, p) for p in (1, 1.5, 2, 3, 10)]
        assert all(x >= y for x, y in zip(norms, norms[1:]))
        assert norms[-1] >= operator_norm(a)

    def test_zero_matrix(self):
        assert schatten_norm(np.zeros((4, 4)), 2) == 0.0

    @pytest.mark.parametrize("p", [0.5, float("inf")])
    def test_rejects_exponent(self, p):
        """Only finite p >= 1."""
        with pytest.raises(PreconditionFailed):
            schatten_norm(np.eye(2), p)


class TestResolventIdentity:
    def test_scalar(self):
        """H0 = 2, V = -1 at z = i: R(z, H) = 1 / (1 - i)."""
        op = DiscretizedOperator.from_matrices([[2.0]], [-1.0])
        check = verify_resolvent_identity(op, 1j)
        assert check.holds
        assert check.residual <= 1e-14

    def test_random_matrix(self, random_operator):
        """Residual below 1e-9 at z = -5."""
        check = verify_resolvent_identity(random_operator, -5.0)
        assert check.holds
        assert min(check.conditioning) > 0

    def test_random_matrix_contour(self, random_operator):
        """Residual below 1e-9 at every contour point."""
        for z in contour_points(random_operator):
            assert verify_resolvent_identity(random_operator, z).holds

    def test_zero_perturbation(self, free_operator):
        """V = 0 makes both sides R(z, H0)."""
        assert verify_resolvent_identity(free_operator, 2.0 + 1.0j).residual <= 1e-15

    def test_mathieu_with_bump(self):
        """Shifted Mathieu potential with a complex bump, 20 contour points."""
        potential = PeriodicPotential.cosine(2.0, np.pi, shift=1.5)
        op = discretize(potential, Perturbation.bump(1 + 1j, 4 * np.pi, 1.0), 256, 8 * np.pi)
        points = contour_points(op, count=20)
        assert len(points) == 20
        assert max(verify_resolvent_identity(op, z).residual for z in points) <= 1e-9

    def test_point_in_spectrum(self):
        """z = 1 is an eigenvalue of H = diag(1, 2)."""
        op = DiscretizedOperator.from_matrices(np.diag([1.0, 2.0]), [0.0, 0.0])
        with pytest.raises(NearSpectrum) as exc:
            verify_resolvent_identity(op, 1.0)
        assert exc.value.side == "H"

    def test_contour_encloses_spectrum(self, random_operator):
        """Every eigenvalue of H lies strictly inside the contour."""
        points = contour_points(random_operator, count=8)
        center = np.trace(random_operator.h) / random_operator.n
        radius = abs(points[0] - center)
        assert np.max(np.abs(np.linalg.eigvals(random_operator.h) - center)) < radius


class TestSchattenHolder:
    def test_diagonal_example(self):
        """A = B = diag(1, 2), p = 1: equality, 5 = 5."""
        a = np.diag([1.0, 2.0])
        check = verify_schatten_holder(a, a, 1.0)
        assert check.lhs == pytest.approx(5.0)
        assert check.rhs == pytest.approx(5.0)
        assert check.holds()

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_random_pairs(self, p):
        """||AB||_p <= ||A||_2p ||B||_2p on 250 random pairs per exponent."""
        rng = np.random.default_rng(int(10 * p))
        for _ in range(250):
            a, b = random_complex(rng, (6, 5)), random_complex(rng, (5, 7))
            assert verify_schatten_holder(a, b, p).holds()

    def test_shape_mismatch(self):
        with pytest.raises(PreconditionFailed):
            verify_schatten_holder(np.eye(2), np.eye(3), 2.0)


class TestNeumannBound:
    def test_extremal(self):
        """T = -I/2 attains ||(I+T)^-1|| = 2."""
        check = verify_neumann_bound(-0.5 * np.eye(4))
        assert check.norm_inverse == pytest.approx(2.0)
        assert check.holds()

    def test_zero(self):
        assert verify_neumann_bound(np.zeros((3, 3))).norm_inverse == pytest.approx(1.0)

    def test_random(self):
        """Random T scaled to ||T|| = 1/2."""
        rng = np.random.default_rng(5)
        for _ in range(1000):
            t = random_complex(rng, (5, 5))
            t *= 0.5 / operator_norm(t)
            assert verify_neumann_bound(t).holds()

    def test_rejects_large_t(self):
        with pytest.raises(PreconditionFailed):
            verify_neumann_bound(0.6 * np.eye(2))


class TestHansmannRatio:
    def test_diagonal(self):
        """diag(0, 1) against diag(0, 1+i): one unit of distance over ||iE_22||_p^p = 1."""
        assert hansmann_ratio(np.diag([0.0, 1.0]), np.diag([0.0, 1 + 1j]), 2.0) == pytest.approx(1.0)

    def test_random_ensemble(self):
        """Selfadjoint A0 with small complex perturbations: the ratio is recorded, not bounded."""
        rng = np.random.default_rng(0)
        ratios = []
        for _ in range(10):
            g = rng.standard_normal((12, 12))
            a0 = g + g.T
            a = a0 + 0.1 * random_complex(rng, (12, 12))
            ratios.append(hansmann_ratio(a0, a, 2.0))
        largest = max(ratios)
        assert np.isfinite(largest)
        assert min(ratios) > 0

    def test_rejects_non_hermitian(self):
        with pytest.raises(PreconditionFailed):
            hansmann_ratio(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2), 2.0)

    def test_rejects_equal(self):
        with pytest.raises(PreconditionFailed):
            hansmann_ratio(np.eye(2), np.eye(2), 2.0)


class TestFreeFactorization:
    def test_periodic_potential(self):
        """Factorization through R(omega, -Delta)^(1/2) for the shifted Mathieu H0."""
        op = discretize(PeriodicPotential.cosine(2.0, np.pi, shift=1.5), Perturbation.zero(), 128, 2 * np.pi)
        assert verify_free_factorization(op, -10.0) <= 1e-9


class TestKatoChainReport:
    def test_unperturbed(self, free_operator, pack):
        """V = 0 at omega = 2 omega0: the asserted items hold and the chain vanishes."""
        report = kato_chain_report(free_operator, -8.0, pack)
        assert report.omega0 == pytest.approx(-4.0, rel=1e-9)
        assert report.asserted_hold
        assert all(item.verdict == "within" for item in report.items if not item.empirical)
        assert report.item("resolvent_difference_sp").value <= 1e-12
        assert report.item("neumann_factor").value == 0.0
        assert all(item.quantity != "hansmann_ratio" for item in report.items)

    def test_rejects_omega_above_threshold(self, free_operator, pack):
        with pytest.raises(PreconditionFailed):
            kato_chain_report(free_operator, -3.0, pack)

    def test_small_bump(self, bumped_operator, pack):
        """Neumann factor below 1/2 and decaying as omega moves left."""
        threshold = omega0(pack.p, pack.d, bumped_operator.h0_bottom, bumped_operator.v0_sup, bumped_operator.v_norm(pack.p))
        near = kato_chain_report(bumped_operator, 2 * threshold.omega0, pack)
        far = kato_chain_report(bumped_operator, 8 * near.omega0, pack)
        assert near.asserted_hold and far.asserted_hold
        assert near.item("neumann_factor").value <= 0.5
        assert far.item("neumann_factor").value < near.item("neumann_factor").value
        assert far.item("resolvent_difference_sp").value < near.item("resolvent_difference_sp").value
        assert near.item("hansmann_ratio").verdict == "empirical-only"
        payload = near.to_dict()
        assert payload["asserted_hold"] is True
        assert {item["quantity"] for item in payload["items"]} >= {"free_sandwich", "free_factorization"}

