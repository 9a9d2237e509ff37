"""Thinning trials: expectations, splits, case labels, bad events, determinism."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newmanlab.poly import NewmanPolynomial, metrics, parse_polynomial, square
from newmanlab.sparsify import (
    BadEventFlags,
    KeepMask,
    SparsifyConfig,
    alpha_of,
    case_a_exclusion_threshold,
    classify_case,
    detect_bad_events,
    expectation_oracle,
    expectation_oracle_all,
    expected_l1,
    expected_l1_oracle,
    expected_square_coeff,
    sample,
    split_coefficient,
    theorem_conclusion_check,
)

RHO = Fraction(8, 9)
RHO_PRIME = Fraction(19, 20)


def masked_polynomial(p, mask):
    kept = [int(j) for j in p.support if mask.bits[j]]
    return NewmanPolynomial.from_support(kept) if kept else None


class TestAlphaOf:
    def test_power_of_two_is_exact(self):
        assert alpha_of(1024, Fraction(1, 10)) == Fraction(1, 2)
        assert alpha_of(2 ** 20, Fraction(1, 10)) == Fraction(1, 4)
        assert alpha_of(2 ** 20, Fraction(1, 5)) == Fraction(1, 16)

    def test_one(self):
        assert alpha_of(1, Fraction(1, 10)) == Fraction(1)
        assert alpha_of(1, Fraction(7, 9)) == Fraction(1)

    def test_power_of_ten(self):
        assert alpha_of(10 ** 10, Fraction(1, 10)) == Fraction(1, 10)

    def test_inexact_falls_back_to_float(self):
        a = alpha_of(1000, Fraction(1, 10))
        assert isinstance(a, float)
        assert a == pytest.approx(1000 ** -0.1, rel=1e-14)

    def test_range(self):
        for n in (2, 3, 17, 1000, 12345):
            a = alpha_of(n, Fraction(1, 10))
            assert 0 < float(a) <= 1

    def test_errors(self):
        with pytest.raises(ValueError):
            alpha_of(0, Fraction(1, 10))
        with pytest.raises(ValueError):
            alpha_of(10, Fraction(0))
        with pytest.raises(ValueError):
            alpha_of(10, Fraction(1))


class TestConfig:
    def test_epsilon_from_rhos(self):
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME)
        assert cfg.epsilon == pytest.approx(0.02208, abs=1e-5)

    def test_explicit_epsilon(self):
        cfg = SparsifyConfig(epsilon=0.3)
        assert cfg.epsilon == 0.3

    def test_epsilon_required_without_rhos(self):
        with pytest.raises(ValueError):
            SparsifyConfig()

    def test_inconsistent_epsilon_rejected(self):
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=0.5, rho=RHO, rho_prime=RHO_PRIME)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=0.1, alpha_exponent=Fraction(1))
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=1.0)
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=0.1, c0=Fraction(0))
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=0.1, seed=-1)
        with pytest.raises(ValueError):
            SparsifyConfig(epsilon=0.1, seed=2 ** 64)


class TestExpectations:
    def test_expected_l1_linear(self):
        p = parse_polynomial("111", "bitstring")
        assert expected_l1(p, Fraction(1, 2)) == Fraction(3, 2)

    def test_expected_l1_identity(self):
        p = parse_polynomial("0,5,9")
        assert expected_l1(p, Fraction(1)) == 3

    def test_expected_l1_all_ones_1024(self):
        p = NewmanPolynomial.all_ones(1024)
        alpha = alpha_of(1024, Fraction(1, 10))
        assert expected_l1(p, alpha) == Fraction(1025, 2)

    def test_odd_k_two_bits(self):
        p = parse_polynomial("11", "bitstring")
        value, theta = expected_square_coeff(p, Fraction(1, 2), 1)
        assert value == Fraction(1, 2)
        assert theta == 0

    def test_even_k_zero_is_alpha(self):
        p = parse_polynomial("11", "bitstring")
        for alpha in (Fraction(1, 2), Fraction(2, 7), Fraction(9, 10)):
            value, theta = expected_square_coeff(p, alpha, 0)
            assert value == alpha  # (q^2)_0 is the kept constant bit itself
            assert theta == alpha * (1 - alpha)

    def test_even_k_three_terms(self):
        # E[2 e0 e2 + e1] at alpha = 1/2: confirmed by the 8-mask enumeration.
        p = parse_polynomial("111", "bitstring")
        value, theta = expected_square_coeff(p, Fraction(1, 2), 2)
        assert value == 1
        assert theta == Fraction(1, 4)
        assert expectation_oracle(p, Fraction(1, 2), 2) == 1

    def test_oracle_two_term_example(self):
        p = parse_polynomial("0,3")
        assert expectation_oracle(p, Fraction(1, 3), 3) == Fraction(2, 9)
        value, _ = expected_square_coeff(p, Fraction(1, 3), 3)
        assert value == Fraction(2, 9)

    def test_k_out_of_range(self):
        p = parse_polynomial("111", "bitstring")
        with pytest.raises(ValueError):
            expected_square_coeff(p, Fraction(1, 2), 5)
        with pytest.raises(ValueError):
            expectation_oracle(p, Fraction(1, 2), -1)

    @pytest.mark.parametrize("alpha", [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)])
    def test_formula_matches_enumeration_degree_le_6(self, alpha):
        for degree in range(7):
            for bits in range(1 << degree):
                coeffs = [(bits >> j) & 1 for j in range(degree)] + [1]
                p = NewmanPolynomial(coeffs)
                sq = square(p)
                oracle = expectation_oracle_all(p, alpha)
                for k in range(2 * degree + 1):
                    value, _ = expected_square_coeff(p, alpha, k, square_coeffs=sq)
                    assert value == oracle[k], (coeffs, k, alpha)

    @given(
        st.sets(st.integers(min_value=0, max_value=8), min_size=1),
        st.fractions(min_value=Fraction(1, 12), max_value=Fraction(11, 12),
                     max_denominator=12),
    )
    @settings(max_examples=40, deadline=None)
    def test_formula_matches_enumeration_random(self, sup, alpha):
        p = NewmanPolynomial.from_support(sup)
        oracle = expectation_oracle_all(p, alpha)
        for k in range(2 * p.degree + 1):
            value, theta = expected_square_coeff(p, alpha, k)
            assert value == oracle[k]
            if k % 2 == 0:
                assert 0 <= theta < 1

    @given(
        st.sets(st.integers(min_value=0, max_value=10), min_size=1),
        st.fractions(min_value=Fraction(1, 12), max_value=Fraction(11, 12),
                     max_denominator=12),
    )
    @settings(max_examples=30, deadline=None)
    def test_l1_enumeration_matches_linearity(self, sup, alpha):
        p = NewmanPolynomial.from_support(sup)
        assert expected_l1_oracle(p, alpha) == alpha * p.l1

    def test_l1_enumeration_at_degree_ten(self):
        p = NewmanPolynomial.all_ones(10)
        for alpha in (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)):
            assert expected_l1_oracle(p, alpha) == alpha * 11

    def test_enumeration_cap(self):
        with pytest.raises(ValueError):
            expectation_oracle(NewmanPolynomial.all_ones(21), Fraction(1, 2), 0)


class TestSplit:
    def test_hand_convolution_1111(self):
        p = parse_polynomial("1111", "bitstring")
        mask = KeepMask(np.ones(4, dtype=np.uint8))
        s = split_coefficient(p, mask, 3)
        assert (s.first, s.second, s.diagonal) == (2, 2, 0)
        assert s.total == square(p)[3] == 4

    def test_even_diagonal_vanishes_without_center_term(self):
        p = parse_polynomial("0,3")  # p_2 = 0
        mask = KeepMask(np.ones(4, dtype=np.uint8))
        s = split_coefficient(p, mask, 4)
        assert s.diagonal == 0
        assert s.parity == "even"

    def test_theta_needs_alpha(self):
        p = parse_polynomial("111", "bitstring")
        mask = KeepMask(np.ones(3, dtype=np.uint8))
        assert split_coefficient(p, mask, 2).theta == 0
        s = split_coefficient(p, mask, 2, alpha=Fraction(1, 3))
        assert s.theta == Fraction(1, 3) * Fraction(2, 3)

    def test_errors(self):
        p = parse_polynomial("111", "bitstring")
        mask = KeepMask(np.ones(3, dtype=np.uint8))
        with pytest.raises(ValueError):
            split_coefficient(p, mask, 5)
        with pytest.raises(ValueError):
            split_coefficient(p, KeepMask(np.ones(2, dtype=np.uint8)), 1)

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_reconstruction_and_odd_symmetry(self, data):
        sup = data.draw(st.sets(st.integers(min_value=0, max_value=50), min_size=1))
        p = NewmanPolynomial.from_support(sup)
        bits = data.draw(
            st.lists(st.integers(0, 1), min_size=p.degree + 1, max_size=p.degree + 1)
        )
        mask = KeepMask(np.array(bits, dtype=np.uint8))
        q = masked_polynomial(p, mask)
        q_sq = square(q) if q is not None else None
        for k in range(2 * p.degree + 1):
            s = split_coefficient(p, mask, k)
            if q_sq is not None and k <= 2 * q.degree:
                assert s.total == q_sq[k]
            else:
                assert s.total == 0
            if k % 2 == 1:
                assert s.first == s.second


class TestClassify:
    def test_k_zero_is_a(self):
        p = NewmanPolynomial.all_ones(16)
        label = classify_case(p, alpha_of(16, Fraction(1, 10)), 0)
        assert label.label == "a"
        assert label.means == (0, 0)

    def test_dense_center_is_c(self):
        p = NewmanPolynomial.all_ones(1024)
        alpha = alpha_of(1024, Fraction(1, 10))  # exactly 1/2
        label = classify_case(p, alpha, 1023)
        # 512 unit products per half, each mean 128, threshold 2.
        assert label.threshold == Fraction(2)
        assert label.means == (Fraction(128), Fraction(128))
        assert label.label == "c"

    def test_sparse_is_a(self):
        p = parse_polynomial("0,50")
        alpha = alpha_of(50, Fraction(1, 10))
        label = classify_case(p, alpha, 50)
        assert label.label == "a"

    def test_exact_threshold_is_inverse_alpha(self):
        p = NewmanPolynomial.all_ones(64)
        alpha = alpha_of(64, Fraction(1, 6))  # 64**(1/6) = 2, exact
        assert alpha == Fraction(1, 2)
        label = classify_case(p, alpha, 64)
        assert label.threshold == 2

    @given(st.sets(st.integers(min_value=0, max_value=40), min_size=1))
    @settings(max_examples=50)
    def test_case_b_is_unreachable(self, sup):
        # The two half-ranges mirror each other under j -> k - j, so their
        # unit-product counts, hence their means, are always equal.
        p = NewmanPolynomial.from_support(sup)
        alpha = alpha_of(max(p.degree, 2), Fraction(1, 10))
        for k in range(2 * p.degree + 1):
            label = classify_case(p, alpha, k)
            assert label.means[0] == label.means[1]
            assert label.label in ("a", "c")


class TestExclusionThreshold:
    def test_reference_point(self):
        # Independent linear scan of the defining inequality.
        eps, c0, e = 0.02, Fraction(1), Fraction(1, 10)
        amplitude = (1 + eps) * 1.0 / 3.0

        def ok(n):
            return 2 * n ** 0.3 + 1 < amplitude * n ** 0.8

        scan = next(n for n in range(1, 1000) if ok(n))
        assert scan == 47
        result = case_a_exclusion_threshold(c0, eps, e)
        assert (result.n, result.capped) == (47, False)

    def test_small_exponent_small_threshold(self):
        tight = case_a_exclusion_threshold(Fraction(1), 0.5, Fraction(1, 100))
        loose = case_a_exclusion_threshold(Fraction(1), 0.5, Fraction(1, 10))
        assert tight.n < loose.n

    def test_tiny_c0_hits_cap(self):
        result = case_a_exclusion_threshold(Fraction(1, 10 ** 6), 0.02, Fraction(1, 10), cap=10 ** 6)
        assert result.capped and result.n == 10 ** 6

    def test_large_exponent_never_satisfied(self):
        result = case_a_exclusion_threshold(Fraction(1), 0.5, Fraction(1, 4), cap=10 ** 9)
        assert result.capped

    def test_errors(self):
        with pytest.raises(ValueError):
            case_a_exclusion_threshold(Fraction(0), 0.1, Fraction(1, 10))
        with pytest.raises(ValueError):
            case_a_exclusion_threshold(Fraction(1), 0.0, Fraction(1, 10))


class TestBadEvents:
    def test_all_ones_mask(self):
        p = NewmanPolynomial.all_ones(100)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=1)
        mask = KeepMask(np.ones(101, dtype=np.uint8))
        trial_like = sample(p, cfg, 0)
        flags = detect_bad_events(p, type(trial_like)(mask=mask, q_metrics=metrics(p),
                                                      q_degree=100, flags=trial_like.flags,
                                                      trial_seed=0), cfg)
        assert not flags.E
        assert not flags.D
        # keeping everything violates the height budget: (1+eps)*alpha^2 < 1
        alpha = float(alpha_of(100, Fraction(1, 10)))
        assert (1 + cfg.epsilon) * alpha ** 2 < 1
        assert flags.E_k_any
        assert 100 in flags.E_k_indices  # the peak coefficient overshoots

    def test_all_zeros_mask(self):
        p = NewmanPolynomial.all_ones(100)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=1)
        trial = sample(p, cfg, 0)
        zero_trial = type(trial)(mask=KeepMask(np.zeros(101, dtype=np.uint8)),
                                 q_metrics=None, q_degree=None,
                                 flags=trial.flags, trial_seed=0)
        flags = detect_bad_events(p, zero_trial, cfg)
        assert flags.E and flags.D
        assert not flags.E_k_any
        assert flags.l1_deviation

    def test_sample_flags_match_detect(self):
        p = NewmanPolynomial.all_ones(256)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=99)
        for t in range(8):
            trial = sample(p, cfg, t)
            assert detect_bad_events(p, trial, cfg) == trial.flags

    def test_mismatched_mask_rejected(self):
        p = NewmanPolynomial.all_ones(10)
        cfg = SparsifyConfig(epsilon=0.1)
        trial = sample(p, cfg, 0)
        q = NewmanPolynomial.all_ones(12)
        with pytest.raises(ValueError):
            detect_bad_events(q, trial, cfg)

    def test_flags_invariant(self):
        with pytest.raises(ValueError):
            BadEventFlags(E=False, E_k_any=True, E_k_indices=(), D=False,
                          l1_deviation=False)


class TestSample:
    def test_deterministic_replay(self):
        p = NewmanPolynomial.all_ones(300)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=123456789)
        a = sample(p, cfg, 7)
        b = sample(p, cfg, 7)
        assert a.trial_seed == b.trial_seed
        assert a.mask.same_as(b.mask)
        assert a.flags == b.flags
        assert a.q_metrics == b.q_metrics
        assert a.q_degree == b.q_degree

    def test_distinct_trials_differ(self):
        p = NewmanPolynomial.all_ones(300)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=5)
        assert not sample(p, cfg, 0).mask.same_as(sample(p, cfg, 1).mask)

    def test_trial_seed_is_uint64(self):
        p = NewmanPolynomial.all_ones(32)
        cfg = SparsifyConfig(epsilon=0.1, seed=2 ** 64 - 1)
        trial = sample(p, cfg, 3)
        assert 0 <= trial.trial_seed < 2 ** 64

    def test_negative_trial_index(self):
        p = NewmanPolynomial.all_ones(32)
        cfg = SparsifyConfig(epsilon=0.1)
        with pytest.raises(ValueError):
            sample(p, cfg, -1)

    def test_degree_one_alpha_is_one(self):
        # alpha_of(1, e) == 1, so every coefficient survives every trial.
        p = NewmanPolynomial.all_ones(1)
        cfg = SparsifyConfig(epsilon=0.5, alpha_exponent=Fraction(1, 10), seed=3)
        for t in range(50):
            trial = sample(p, cfg, t)
            assert not trial.is_empty
            assert trial.q_metrics.l1 == 2
            assert not trial.flags.E and not trial.flags.D

    def test_empty_survivor_via_detect(self):
        p = NewmanPolynomial.all_ones(50)
        cfg = SparsifyConfig(epsilon=0.5, seed=3)
        trial = sample(p, cfg, 0)
        zero = type(trial)(mask=KeepMask(np.zeros(51, dtype=np.uint8)),
                           q_metrics=None, q_degree=None, flags=trial.flags,
                           trial_seed=0)
        flags = detect_bad_events(p, zero, cfg)
        assert flags.E and flags.D and not flags.E_k_any

    def test_binomial_mean_of_kept_mass(self):
        # all-ones degree 1024, alpha exactly 1/2: mean mass 512.5, and the
        # 1e4-trial sample mean must land within 4 standard errors.
        p = NewmanPolynomial.all_ones(1024)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=20080613)
        trials = 10_000
        alpha = float(alpha_of(1024, Fraction(1, 10)))
        assert alpha == 0.5
        masses = np.empty(trials)
        for t in range(trials):
            seq = np.random.SeedSequence([cfg.seed, t])
            rng = np.random.Generator(np.random.PCG64(seq))
            masses[t] = int((rng.random(1025) < alpha).sum())
        # The direct stream above is exactly what sample() draws.
        for t in range(25):
            trial = sample(p, cfg, t)
            l1 = 0 if trial.is_empty else trial.q_metrics.l1
            assert l1 == masses[t]
        sd_one = math.sqrt(1025 * 0.25)
        band = 4 * sd_one / math.sqrt(trials)
        assert abs(masses.mean() - 512.5) <= band

    def test_sparsity_ratio_trend_small_ladder(self):
        # mean kept-mass / degree falls as the degree climbs (alpha shrinks).
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=11)
        means = []
        for degree in (2 ** 8, 2 ** 10, 2 ** 12):
            alpha = float(alpha_of(degree, Fraction(1, 10)))
            vals = []
            for t in range(200):
                seq = np.random.SeedSequence([cfg.seed, t])
                rng = np.random.Generator(np.random.PCG64(seq))
                bits = rng.random(degree + 1) < alpha
                kept = np.flatnonzero(bits)
                if kept.size:
                    vals.append(kept.size / kept[-1])
            means.append(np.mean(vals))
        assert means[0] > means[1] > means[2]


class TestConclusion:
    def _clean_trial(self):
        p = NewmanPolynomial.all_ones(1024)
        cfg = SparsifyConfig(epsilon=0.5, seed=77)
        p_height = square(p).height
        for t in range(50):
            trial = sample(p, cfg, t, p_square_height=p_height)
            if not trial.is_empty and trial.flags.clean:
                return p, cfg, trial
        pytest.fail("no clean trial found at epsilon=0.5, degree 1024")

    def test_clean_trial_satisfies_chain(self):
        p, cfg, trial = self._clean_trial()
        report = theorem_conclusion_check(p, trial, cfg)
        assert report.holds
        assert report.q_product <= report.amplified_p_product
        assert report.amplification == (1 + Fraction(0.5)) / (1 - Fraction(0.5)) ** 2
        assert report.q_l1 == trial.q_metrics.l1
        assert report.q_degree > report.degree_floor
        assert report.sparsity_reference == pytest.approx(0.5 * 1024 ** 0.9)

    def test_rejects_bad_event_trial(self):
        p = NewmanPolynomial.all_ones(100)
        cfg = SparsifyConfig(rho=RHO, rho_prime=RHO_PRIME, seed=1)
        trial = next(
            t for t in (sample(p, cfg, i) for i in range(50))
            if not t.is_empty and not t.flags.clean
        )
        with pytest.raises(ValueError):
            theorem_conclusion_check(p, trial, cfg)

    def test_rejects_empty_trial(self):
        from newmanlab.sparsify import SparsifyTrial

        p = NewmanPolynomial.all_ones(50)
        cfg = SparsifyConfig(epsilon=0.5, seed=3)
        empty = SparsifyTrial(
            mask=KeepMask(np.zeros(51, dtype=np.uint8)),
            q_metrics=None,
            q_degree=None,
            flags=BadEventFlags(E=True, E_k_any=False, E_k_indices=(), D=True,
                                l1_deviation=True),
            trial_seed=0,
        )
        with pytest.raises(ValueError):
            theorem_conclusion_check(p, empty, cfg)
