"""Tests for the elementary inequalities and the randomized oracle suite."""

import numpy as np
import pytest

from fxtsp.exceptions import InvalidParameterError, PreconditionError, ShapeError
from fxtsp.inequalities import (
    LEMMA_NAMES,
    alpha_pair,
    combine_pairs,
    karamata_gap,
    majorizes,
    middle_power_gap,
    published_alpha_pair,
    run_suite,
    signed_difference_gap,
    split_product_doubled_gap,
    split_product_gap,
    tilde_lower_constants,
    tilde_lower_gaps,
    upsilon,
    upsilon1_bound_gap,
    upsilon2_bound_gap,
    upsilon2_delta,
    weighted_amgm_gap,
)


class TestMajorization:
    """Tests for majorization and Karamata's inequality."""

    def test_majorizes(self) -> None:
        """Test prefix-sum dominance with equal totals."""
        assert majorizes([3.0, 0.0], [2.0, 1.0])
        assert not majorizes([2.0, 1.0], [3.0, 0.0])
        assert not majorizes([3.0, 1.0], [2.0, 1.0])

    def test_majorizes_requires_sorted_input(self) -> None:
        """Test that unsorted input raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="nonincreasing"):
            majorizes([1.0, 2.0], [2.0, 1.0])

    def test_majorizes_requires_equal_length(self) -> None:
        """Test that sequences of different lengths raise ShapeError."""
        with pytest.raises(ShapeError, match="equal length"):
            majorizes([2.0, 1.0], [3.0])

    def test_karamata_convex_and_concave(self) -> None:
        """Test that the gap is nonnegative on both sides of exponent 1."""
        assert karamata_gap(2.0, [3.0, 0.0], [2.0, 1.0]) == pytest.approx(9.0 - 5.0)
        assert karamata_gap(0.5, [3.0, 0.0], [2.0, 1.0]) == pytest.approx(2**0.5 + 1 - 3**0.5)

    def test_karamata_rejects_non_majorizing(self) -> None:
        """Test that a pair without majorization raises PreconditionError."""
        with pytest.raises(PreconditionError, match="does not majorize"):
            karamata_gap(2.0, [2.0, 1.0], [3.0, 0.0])


class TestPowerSandwichAndAmgm:
    """Tests for the middle-power bound and weighted AM-GM."""

    def test_middle_power_gap_positive(self) -> None:
        """Test x^a_low + x^a_high > x^a on both sides of 1."""
        assert middle_power_gap(0.01, 1.0, 0.5, 2.0) > 0
        assert middle_power_gap(100.0, 1.0, 0.5, 2.0) > 0
        assert middle_power_gap(1.0, 1.0, 0.5, 2.0) == pytest.approx(1.0)

    def test_middle_power_gap_rejects_misordered(self) -> None:
        """Test that a >= a_high raises PreconditionError."""
        with pytest.raises(PreconditionError, match="a_low < a < a_high"):
            middle_power_gap(2.0, 3.0, 0.5, 2.0)

    def test_amgm_equality_for_equal_values(self) -> None:
        """Test that equal values close the AM-GM gap."""
        assert weighted_amgm_gap([1.0, 2.0, 3.0], [4.0, 4.0, 4.0]) == pytest.approx(0.0, abs=1e-12)

    def test_amgm_known_value(self) -> None:
        """Test the unweighted pair (1, 4): mean 2.5, geometric mean 2."""
        assert weighted_amgm_gap([1.0, 1.0], [1.0, 4.0]) == pytest.approx(0.5)

    def test_amgm_rejects_zero_weight(self) -> None:
        """Test that a zero weight raises PreconditionError."""
        with pytest.raises(PreconditionError, match="weights must be positive"):
            weighted_amgm_gap([0.0, 1.0], [1.0, 2.0])


class TestUpsilon:
    """Tests for the Upsilon interconnection terms."""

    def test_zero_offset_vanishes(self) -> None:
        """Test that Upsilon(x, 0) = 0."""
        assert upsilon(1, 1 / 3, [1.0, 2.0], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
        assert upsilon(2, -2 / 3, [1.0, 2.0], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)

    def test_direct_value(self) -> None:
        """Test Upsilon_1 for x = 1, y = 1 in one dimension: 1 - 2^(1 - xi)."""
        assert upsilon(1, 0.5, [1.0], [1.0]) == pytest.approx(1.0 - 2.0**0.5)

    def test_small_offset_is_accurate(self) -> None:
        """Test that the series branch matches the linearization for tiny y."""
        xi, y = 1 / 3, 1e-10
        # d/dy of -(1 + y)^(1 - xi) at y = 0 is -(1 - xi).
        assert upsilon(1, xi, [1.0], [y]) == pytest.approx(-(1 - xi) * y, rel=1e-6)

    def test_rejects_wrong_exponent(self) -> None:
        """Test that xi2 >= 0 raises PreconditionError."""
        with pytest.raises(PreconditionError, match="xi < 0"):
            upsilon(2, 0.5, [1.0], [1.0])

    def test_delta(self) -> None:
        """Test Delta(-2/3) = 2 and growth for very negative xi2."""
        assert upsilon2_delta(-2 / 3) == pytest.approx(2.0)
        assert upsilon2_delta(-8.0) == pytest.approx(1.0 + 8.0 / 2**-7)

    def test_bounds_hold(self, rng: np.random.Generator) -> None:
        """Test both Upsilon magnitude bounds at random vector pairs."""
        x = rng.standard_normal((500, 3)) * 10.0 ** rng.uniform(-3, 3, size=(500, 1))
        y = rng.standard_normal((500, 3)) * 10.0 ** rng.uniform(-3, 3, size=(500, 1))
        assert np.all(upsilon1_bound_gap(1 / 3, x, y) >= 0)
        assert np.all(upsilon2_bound_gap(-2 / 3, x, y) >= 0)


class TestAlphaPairs:
    """Tests for the cross-term splitting maps."""

    def test_equal_exponents(self) -> None:
        """Test that equal exponents give (2q, q/4)."""
        pair = alpha_pair(1.0, 1.0)
        assert pair.lower(4.0) == pytest.approx(8.0)
        assert pair.upper(4.0) == pytest.approx(1.0)

    def test_cubic_pair_lower_map(self) -> None:
        """Test that (3, 1) gives lower(q) = min(2q, 2q^2)."""
        pair = alpha_pair(3.0, 1.0)
        assert pair.lower(0.25) == pytest.approx(2 * 0.25**2)
        assert pair.lower(3.0) == pytest.approx(6.0)
        assert pair.p == 4.0

    def test_published_pair(self) -> None:
        """Test the quoted maps 2q and q."""
        pair = published_alpha_pair()
        assert pair.lower(3000.0) == pytest.approx(6000.0)
        assert pair.upper(3000.0) == pytest.approx(3000.0)

    def test_combine_pairs_is_pointwise(self) -> None:
        """Test min of lower maps and max of upper maps."""
        combined = combine_pairs([alpha_pair(1.0, 1.0), published_alpha_pair()])
        assert combined.lower(2.0) == pytest.approx(4.0)
        assert combined.upper(2.0) == pytest.approx(2.0)

    def test_combine_pairs_rejects_empty(self) -> None:
        """Test that no pairs raise InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="at least one"):
            combine_pairs([])

    def test_splitting_holds(self, rng: np.random.Generator) -> None:
        """Test both splitting forms for an unequal pair over random magnitudes."""
        pair = alpha_pair(0.7, 1.9)
        x = 10.0 ** rng.uniform(-4, 4, size=1000)
        y = 10.0 ** rng.uniform(-4, 4, size=1000)
        q = 10.0 ** rng.uniform(-2, 2, size=1000)
        assert np.all(split_product_gap(pair, q, x, y) >= 0)
        assert np.all(split_product_doubled_gap(pair, q, x, y) >= 0)

    def test_rejects_nonpositive_exponent(self) -> None:
        """Test that p1 <= 0 raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="positive"):
            alpha_pair(0.0, 1.0)


class TestTildeBounds:
    """Tests for the r1, r2, r3 lower bounds."""

    def test_reference_constants(self) -> None:
        """Test r1 and r2 for lambda_min = 4 - sqrt(7), xi = (1/3, -2/3)."""
        r1, r2, _ = tilde_lower_constants(4 - 7**0.5, 1 / 3, -2 / 3)
        assert r1 == pytest.approx(0.7226, abs=1e-3)
        assert r2 == pytest.approx(0.5946, abs=1e-3)

    def test_isotropic_equality(self, rng: np.random.Generator) -> None:
        """Test that Q = lambda I makes the squared bounds tight up to the r3 term."""
        x = rng.standard_normal((200, 2))
        y = rng.standard_normal((200, 2))
        vv, ww, vw = tilde_lower_gaps(1.5, 1 / 3, -2 / 3, x, y)
        assert np.all(np.asarray(vv) >= -1e-12)
        assert np.all(np.asarray(ww) >= -1e-12)
        assert np.all(np.asarray(vw) >= -1e-12)

    def test_symmetric_matrix(self, rng: np.random.Generator) -> None:
        """Test the bounds with a symmetric Q whose smallest eigenvalue is used."""
        Q = np.array([[3.0, 1.0], [1.0, 5.0]])
        low = float(np.linalg.eigvalsh(Q)[0])
        x = rng.standard_normal((200, 2)) * 10.0 ** rng.uniform(-3, 3, size=(200, 1))
        y = rng.standard_normal((200, 2)) * 10.0 ** rng.uniform(-3, 3, size=(200, 1))
        for gap in tilde_lower_gaps(low, 1 / 3, -2 / 3, x, y, Q=Q):
            assert np.all(np.asarray(gap) >= 0)

    def test_rejects_bad_exponents(self) -> None:
        """Test that xi2 >= 0 raises PreconditionError."""
        with pytest.raises(PreconditionError, match="xi2 < 0"):
            tilde_lower_gaps(1.0, 1 / 3, 0.5, [1.0], [1.0])


class TestSignedPowerDifference:
    """Tests for the signed-power difference bound."""

    def test_sign_flip_case(self) -> None:
        """Test y = -2x, where y + x flips sign."""
        assert signed_difference_gap(0.5, 1.0, -2.0) == pytest.approx(2 * 2**0.5 - 2.0)

    def test_rejects_exponent(self) -> None:
        """Test that xi >= 1 raises PreconditionError."""
        with pytest.raises(PreconditionError, match="xi in \\(0, 1\\)"):
            signed_difference_gap(1.0, 1.0, 1.0)


class TestRunSuite:
    """Tests for the randomized oracle suite."""

    def test_all_lemmas_hold(self) -> None:
        """Test zero violations across every oracle at a modest sample size."""
        report = run_suite(samples=5000, seed=1)
        assert set(report.lemmas) == set(LEMMA_NAMES)
        assert report.violations == 0
        for lemma in report.lemmas.values():
            assert lemma.samples == 5000
            assert lemma.worst_gap >= -1e-9

    def test_deterministic_for_seed(self) -> None:
        """Test that the same seed reproduces the same report."""
        first = run_suite(samples=500, seed=7, lemmas=["karamata", "signed_difference"])
        second = run_suite(samples=500, seed=7, lemmas=["karamata", "signed_difference"])
        assert first.model_dump() == second.model_dump()

    def test_subset_matches_full_run(self) -> None:
        """Test that a lemma's samples do not depend on which other lemmas run."""
        alone = run_suite(samples=300, seed=3, lemmas=["upsilon1_bound"])
        together = run_suite(samples=300, seed=3, lemmas=["karamata", "upsilon1_bound"])
        assert alone.lemmas["upsilon1_bound"] == together.lemmas["upsilon1_bound"]

    def test_shards_and_workers(self) -> None:
        """Test that worker count does not change a sharded report."""
        serial = run_suite(samples=600, seed=5, lemmas=["weighted_amgm"], shards=3, workers=1)
        threaded = run_suite(samples=600, seed=5, lemmas=["weighted_amgm"], shards=3, workers=3)
        assert serial.lemmas == threaded.lemmas
        assert serial.lemmas["weighted_amgm"].samples == 600

    def test_unknown_lemma(self) -> None:
        """Test that an unknown name raises InvalidParameterError."""
        with pytest.raises(InvalidParameterError, match="unknown lemmas: nope"):
            run_suite(samples=10, seed=0, lemmas=["nope"])
