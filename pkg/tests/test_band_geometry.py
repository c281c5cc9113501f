import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltlab.band_geometry import (
    BandSet,
    BoundKind,
    MobiusMap,
    Rectangle,
    Region,
    classify,
    crossing_ordinates,
    dist_to_bands,
    distortion_bound,
    distortion_ratio,
    gap_gamma,
    image_distance,
    mobius_image,
    sharp_gap_bound,
    verify_distortion,
)
from ltlab.errors import InvalidBandSet, InvalidShift, OnSpectrum, TruncationExceeded, WrongRegion

finite = st.floats(min_value=-20, max_value=20, allow_nan=False, allow_infinity=False)


@pytest.fixture
def two_bands():
    """I = [1,2] u [3,4]."""
    return BandSet.from_pairs([(1, 2), (3, 4)])


@pytest.fixture
def four_bands():
    """Band set with unequal gaps, used for the sampled distortion checks."""
    return BandSet.from_pairs([(1, 2), (3, 4), (5, 7), (8, 12)])


class TestBandSet:
    def test_rejects_nonpositive_first_edge(self):
        """a_1 must be strictly positive."""
        with pytest.raises(InvalidBandSet):
            BandSet.from_pairs([(0, 1)])

    def test_rejects_overlap_and_empty(self):
        """Bands must be disjoint and there must be at least one."""
        with pytest.raises(InvalidBandSet):
            BandSet.from_pairs([(1, 3), (2, 4)])
        with pytest.raises(InvalidBandSet):
            BandSet.from_pairs([(1, 2), (2, 4)])
        with pytest.raises(InvalidBandSet):
            BandSet.from_pairs([])

    def test_invalid_band_set_is_value_error(self):
        """Precondition errors also derive from ValueError."""
        with pytest.raises(ValueError):
            BandSet.from_pairs([(2, 1)])

    def test_gap_stats(self, two_bands):
        """Gap r_1 = 1 and relative bound r_1/b_1 = 1/2."""
        stats = two_bands.gap_stats()
        assert stats.gap_lengths == (1.0,)
        assert stats.relative_bound == pytest.approx(0.5)

    def test_pairs_round_trip(self, four_bands):
        """to_pairs gives back the edges in ascending order."""
        assert four_bands.to_pairs() == [[1, 2], [3, 4], [5, 7], [8, 12]]
        assert four_bands.K == 4
        assert four_bands.a1 == 1.0
        assert four_bands.b_last == 12.0


class TestDistToBands:
    def test_gap_midpoint(self, two_bands):
        """A real point in the middle of the gap."""
        assert dist_to_bands(2.5, two_bands) == pytest.approx(0.5)

    def test_nearest_endpoint(self, two_bands):
        """Above the gap the nearest point is an endpoint."""
        assert dist_to_bands(2.5 + 1j, two_bands) == pytest.approx(math.sqrt(1.25))

    def test_above_a_band(self, two_bands):
        """Over a band the distance is |Im z|."""
        assert dist_to_bands(1.5 + 0.3j, two_bands) == pytest.approx(0.3)

    def test_zero_on_the_bands(self, two_bands):
        """Points of I, edges included, are at distance 0."""
        for z in (1.0, 1.5, 2.0, 3.0, 4.0):
            assert dist_to_bands(z, two_bands) == 0.0

    def test_array_input(self, two_bands):
        """Arrays are handled elementwise."""
        result = dist_to_bands(np.array([2.5, 1.5 + 0.3j]), two_bands)
        np.testing.assert_allclose(result, [0.5, 0.3])

    @settings(derandomize=True, max_examples=200)
    @given(st.floats(min_value=-50, max_value=0.999))
    def test_left_of_spectrum_is_distance_to_a1(self, x):
        """For real x < a_1 the distance is a_1 - x."""
        bands = BandSet.from_pairs([(1, 2), (3, 4)])
        assert dist_to_bands(x, bands) == pytest.approx(1.0 - x)

    @settings(derandomize=True, max_examples=300)
    @given(finite, finite, finite, finite)
    def test_one_lipschitz(self, x1, y1, x2, y2):
        """|dist(z1) - dist(z2)| <= |z1 - z2|."""
        bands = BandSet.from_pairs([(1, 2), (3, 4), (5, 7)])
        z1, z2 = complex(x1, y1), complex(x2, y2)
        assert abs(dist_to_bands(z1, bands) - dist_to_bands(z2, bands)) <= abs(z1 - z2) + 1e-12


class TestMobiusImage:
    def test_single_band(self):
        """[1,2] maps to [1/2, 1] for omega=0 and to [1/3, 1/2] for omega=-1."""
        bands = BandSet.from_pairs([(1, 2)])
        image = mobius_image(bands, 0.0)
        assert len(image.intervals) == 1
        assert image.intervals[0] == pytest.approx((0.5, 1.0))
        assert mobius_image(bands, -1.0).intervals[0] == pytest.approx((1 / 3, 1 / 2))

    def test_two_bands(self, two_bands):
        """Images come out in decreasing order."""
        image = mobius_image(two_bands, 0.0)
        assert image.intervals[0] == pytest.approx((0.5, 1.0))
        assert image.intervals[1] == pytest.approx((0.25, 1 / 3))
        assert image.beta_last == pytest.approx(0.25)

    def test_rejects_omega_not_left_of_spectrum(self, two_bands):
        """omega >= a_1 breaks the ordering."""
        with pytest.raises(InvalidShift):
            mobius_image(two_bands, 1.0)

    @settings(derandomize=True, max_examples=200)
    @given(st.floats(min_value=-100, max_value=0.99))
    def test_image_intervals_are_ordered(self, omega):
        """alpha_k > beta_k > alpha_{k+1} > 0."""
        bands = BandSet.from_pairs([(1, 2), (3, 4), (5, 7), (8, 12)])
        image = mobius_image(bands, omega)
        for (beta, alpha), (beta_next, alpha_next) in zip(image.intervals, image.intervals[1:]):
            assert alpha > beta > alpha_next > beta_next > 0

    def test_closed_tail_adds_segment_to_zero(self, two_bands):
        """With the closed tail the segment [0, beta_K] counts as image."""
        image = mobius_image(two_bands, 0.0)
        assert image_distance(0.1, image) == pytest.approx(0.15)
        assert image_distance(0.1, image, close_tail=True) == 0.0


class TestClassify:
    def test_regions(self, two_bands):
        """Left of the spectrum, on a band and in the first gap."""
        assert classify(0.5, two_bands).region is Region.LEFT_OF_SPECTRUM
        assert classify(1.5, two_bands).region is Region.ON_BAND_PROJECTION
        gap = classify(2.7, two_bands)
        assert gap.region is Region.IN_GAP and gap.k == 1
        assert str(gap) == "InGap(1)"

    def test_edges_are_on_bands(self, two_bands):
        """a_k and b_k classify as OnBandProjection."""
        for x in (1.0, 2.0, 3.0):
            assert classify(x, two_bands).region is Region.ON_BAND_PROJECTION

    def test_beyond_truncation(self, two_bands):
        """x >= b_K needs bands that were not retained."""
        with pytest.raises(TruncationExceeded) as exc:
            classify(4.0, two_bands)
        assert exc.value.limit == 4.0


class TestCrossingOrdinates:
    @pytest.mark.parametrize(
        "x,edges,expected",
        [
            (1.0, (2.0, 5.0), (1.0, 2.0)),
            (2.0, (3.0, 4.0), (math.sqrt(2), 2.0)),
            (0.5, (1.0, 2.0), (0.5, math.sqrt(0.75))),
        ],
    )
    def test_values(self, x, edges, expected):
        """u_j = sqrt(x(a_j - x)), v_j = sqrt(x(b_j - x))."""
        u, v = crossing_ordinates(x, BandSet.from_pairs([edges]), 1)
        assert (u, v) == pytest.approx(expected)
        assert u < v

    def test_rejects_x_outside_range(self, two_bands):
        """0 < x < a_j is required."""
        with pytest.raises(WrongRegion):
            crossing_ordinates(1.0, two_bands, 1)
        with pytest.raises(WrongRegion):
            crossing_ordinates(0.0, two_bands, 2)


class TestDistortionBound:
    def test_distor1(self):
        """1/(3 |z-w| (|z-w| + a_1 - w)) at z=-1, w=0."""
        bands = BandSet.from_pairs([(1, 2)])
        assert distortion_bound(-1.0, 0.0, bands, "distor1") == pytest.approx(1 / 6)

    def test_distor2(self, two_bands):
        """Interior gap bound at z=2.5, w=0."""
        assert distortion_bound(2.5, 0.0, two_bands, BoundKind.DISTOR2) == pytest.approx(0.0533333, rel=1e-6)

    def test_distor3(self, two_bands):
        """Uniform bound for w < 0 with r(I) = 1/2."""
        expected = 1 / (5 * 1.5) / (3.5 * 5.5)
        assert distortion_bound(2.5, -1.0, two_bands, "distor3") == pytest.approx(expected)
        assert expected == pytest.approx(0.0069264, rel=1e-4)

    def test_wrong_region(self, two_bands):
        """Each bound only applies in its region."""
        with pytest.raises(WrongRegion):
            distortion_bound(2.5, 0.0, two_bands, "distor1")
        with pytest.raises(WrongRegion):
            distortion_bound(1.5, 0.0, two_bands, "distor2")
        with pytest.raises(WrongRegion):
            distortion_bound(1.5, 0.0, two_bands, "distor3")

    def test_sharp_gap_bound_dominates_distor2(self, two_bands):
        """gamma_k <= 2 (1 + rel) so the sharp bound is at least distor2."""
        z = 2.5 + 0.2j
        assert gap_gamma(1, 0.0, two_bands) == pytest.approx(1 + math.sqrt(0.5))
        assert sharp_gap_bound(z, 0.0, two_bands) >= distortion_bound(z, 0.0, two_bands, "distor2")


class TestDistortionRatio:
    def test_left_of_spectrum(self):
        """z=-1, w=0, I=[1,2]: dist 2, image distance 3/2."""
        sample = distortion_ratio(-1.0, 0.0, BandSet.from_pairs([(1, 2)]))
        assert sample.dist_z == pytest.approx(2.0)
        assert sample.dist_lambda == pytest.approx(1.5)
        assert sample.ratio == pytest.approx(0.75)
        assert sample.bound == pytest.approx(1 / 6)
        assert sample.bound_kind is BoundKind.DISTOR1
        assert sample.margin > 0

    def test_gap_point(self, two_bands):
        """z=2.5, w=0: lambda(z)=0.4, nearest image point 1/3."""
        sample = distortion_ratio(2.5, 0.0, two_bands)
        assert sample.dist_z == pytest.approx(0.5)
        assert sample.dist_lambda == pytest.approx(1 / 15)
        assert sample.ratio == pytest.approx(0.1333333, rel=1e-6)
        assert sample.bound_kind is BoundKind.DISTOR2
        assert sample.ratio >= sample.bound

    def test_negative_shift_prefers_distor3(self, two_bands):
        """z=2.5, w=-1: lambda(z)=2/7, nearest image point 1/4."""
        sample = distortion_ratio(2.5, -1.0, two_bands)
        assert sample.dist_lambda == pytest.approx(0.0357143, rel=1e-5)
        assert sample.ratio == pytest.approx(0.0714286, rel=1e-5)
        assert sample.bound_kind is BoundKind.DISTOR3
        assert sample.margin > 0

    def test_image_distance_matches_map(self, two_bands):
        """Mapping first and measuring in the image plane gives dist_lambda."""
        z, omega = 1.7 + 0.4j, -2.0
        sample = distortion_ratio(z, omega, two_bands)
        direct = image_distance(MobiusMap(omega)(z), mobius_image(two_bands, omega))
        assert direct == pytest.approx(sample.dist_lambda, rel=1e-14)

    def test_on_spectrum(self, two_bands):
        """Points of I have no ratio."""
        with pytest.raises(OnSpectrum):
            distortion_ratio(1.5, 0.0, two_bands)


class TestVerifyDistortion:
    def test_single_band_left_region(self):
        """Every sample left of [1,2] satisfies distor1."""
        report = verify_distortion(BandSet.from_pairs([(1, 2)]), 0.0, Rectangle(-3, 0, -2, 2), 10_000, seed=1)
        assert report.success
        assert report.n_checked + report.n_discarded == 10_000
        assert report.min_margin > 0

    def test_two_bands_negative_shift(self, two_bands):
        """With w=-5 every sample is checked against distor3."""
        report = verify_distortion(two_bands, -5.0, Rectangle(-2, 3.5, -5, 5), 100_000, seed=7)
        assert report.success
        assert report.counts["distor3"] == report.n_checked
        assert report.min_margin_by_kind["distor3"] > 0

    def test_empty_sample(self, two_bands):
        """N=0 is a vacuous success."""
        report = verify_distortion(two_bands, 0.0, Rectangle(-2, 3.5, -5, 5), 0, seed=0)
        assert report.success
        assert report.n_checked == 0
        assert report.min_margin is None
        assert report.to_dict()["worst_z"] is None

    def test_truncation_guard(self, two_bands):
        """The rectangle must stay left of b_K."""
        with pytest.raises(TruncationExceeded):
            verify_distortion(two_bands, 0.0, Rectangle(-2, 4.5, -1, 1), 10, seed=0)

    @pytest.mark.parametrize("omega", [0.0, -1.0, -10.0])
    def test_four_bands(self, four_bands, omega):
        """10^5 samples with Re z in [-5, 7.5] and |Im z| <= 10."""
        report = verify_distortion(four_bands, omega, Rectangle(-5, 7.5, -10, 10), 100_000, seed=2024)
        assert report.success, report.to_dict()
        assert report.min_margin >= -1e-12
        assert report.min_margin_by_kind["distor2_sharp"] >= -1e-12
        if omega < 0:
            assert report.counts["distor3"] == report.n_checked

    def test_workers_do_not_change_the_report(self, four_bands):
        """Merging chunk reports is order independent."""
        region = Rectangle(-5, 7.5, -10, 10)
        serial = verify_distortion(four_bands, -1.0, region, 20_000, seed=3)
        parallel = verify_distortion(four_bands, -1.0, region, 20_000, seed=3, workers=4)
        assert serial.to_dict() == parallel.to_dict()

    def test_reproducible(self, four_bands):
        """Same seed, same report."""
        region = Rectangle(-5, 7.5, -10, 10)
        first = verify_distortion(four_bands, 0.0, region, 5_000, seed=11)
        second = verify_distortion(four_bands, 0.0, region, 5_000, seed=11)
        assert first.to_dict() == second.to_dict()
