import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdblab import bounds
from qdblab.bounds import (
    RegimeError,
    binomial_tail_exact,
    binomial_tail_exact_log2,
    chernoff_lower,
    chernoff_lower_log2,
    chernoff_upper,
    chernoff_upper_log2,
    kl_bernoulli,
    max_noise,
    min_rounds,
    threshold_size,
)

mpmath.mp.dps = 40


def kl_oracle(u, v):
    u, v = mpmath.mpf(repr(u)), mpmath.mpf(repr(v))
    total = mpmath.mpf(0)
    if u > 0:
        total += u * mpmath.log(u / v)
    if u < 1:
        total += (1 - u) * mpmath.log((1 - u) / (1 - v))
    return total


def binomial_oracle(n, tau, p, side):
    p = Fraction(repr(p))
    ks = range(tau, n + 1) if side == "upper" else range(0, tau + 1)
    return sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in ks)


class TestKL:
    def test_frozen_value(self):
        assert kl_bernoulli(0.75, 0.5) == pytest.approx(0.130812035941137, abs=1e-14)

    def test_zero_at_equality(self):
        assert kl_bernoulli(0.3, 0.3) == 0

    def test_endpoint_u_one(self):
        assert kl_bernoulli(1.0, 0.875) == pytest.approx(math.log(8 / 7), abs=1e-15)

    @given(st.floats(0, 1), st.floats(1e-6, 1 - 1e-6))
    def test_matches_mpmath(self, u, v):
        assert kl_bernoulli(u, v) == pytest.approx(float(kl_oracle(u, v)), rel=1e-9, abs=1e-12)

    @given(st.floats(0, 1), st.floats(1e-6, 1 - 1e-6))
    def test_pinsker(self, u, v):
        assert kl_bernoulli(u, v) >= 2 * (u - v) ** 2 - 1e-12

    @pytest.mark.parametrize("v", [0, 1, -0.1])
    def test_domain(self, v):
        with pytest.raises(ValueError):
            kl_bernoulli(0.5, v)


class TestChernoff:
    def test_lower_log2_frozen(self):
        assert chernoff_lower_log2(1000, 800, 0.905) == pytest.approx(-72.4658825320810, abs=1e-9)

    def test_lower_frozen(self):
        assert chernoff_lower(1000, 850, 0.905) == pytest.approx(2.45503338475067e-7, rel=1e-10)

    def test_upper_log2_strict_threshold(self):
        assert chernoff_upper_log2(416, 416, 0.875) == pytest.approx(-80.1403524240367, abs=1e-9)
        assert chernoff_upper_log2(415, 415, 0.875) == pytest.approx(-79.9477073460943, abs=1e-9)

    def test_upper_regime(self):
        with pytest.raises(RegimeError):
            chernoff_upper(100, 50, 0.5)
        with pytest.raises(RegimeError):
            chernoff_upper(100, 40, 0.5)

    def test_lower_regime(self):
        with pytest.raises(RegimeError):
            chernoff_lower(100, 50, 0.5)
        with pytest.raises(RegimeError):
            chernoff_lower(100, 60, 0.5)

    def test_regime_error_is_value_error(self):
        assert issubclass(RegimeError, ValueError)

    @pytest.mark.parametrize("args", [(0, 0, 0.5), (10, 11, 0.5), (10, -1, 0.5), (10, 5, 0.0), (10, 5, 1.0)])
    def test_invalid_queries(self, args):
        with pytest.raises(ValueError):
            chernoff_upper(*args)

    def test_tau_zero_lower(self):
        assert chernoff_lower(10, 0, 0.5) == pytest.approx(0.5**10, rel=1e-12)

    @given(st.integers(1, 64), st.data(), st.sampled_from([0.5, 0.75, 0.875, 0.905]))
    @settings(max_examples=300)
    def test_dominates_exact_tail(self, n, data, p):
        tau = data.draw(st.integers(0, n))
        if tau > n * p:
            assert binomial_tail_exact(n, tau, p, "upper") <= chernoff_upper(n, tau, p) * (1 + 1e-12)
        elif tau < n * p:
            assert binomial_tail_exact(n, tau, p, "lower") <= chernoff_lower(n, tau, p) * (1 + 1e-12)

    @given(st.integers(2, 200), st.data(), st.floats(0.05, 0.95))
    def test_log_forms_agree(self, n, data, p):
        tau = data.draw(st.integers(0, n))
        if tau > n * p:
            assert 2 ** chernoff_upper_log2(n, tau, p) == pytest.approx(chernoff_upper(n, tau, p), rel=1e-9)


class TestExactTail:
    @pytest.mark.parametrize("n,tau,p,side", [
        (10, 10, 0.5, "upper"), (20, 14, 0.875, "upper"), (30, 25, 0.905, "lower"),
        (64, 0, 0.5, "upper"), (64, 64, 0.75, "lower"), (16, 16, 0.875, "upper"),
    ])
    def test_matches_fraction_oracle(self, n, tau, p, side):
        assert binomial_tail_exact(n, tau, p, side) == pytest.approx(float(binomial_oracle(n, tau, p, side)), rel=1e-12)

    def test_tf_replay_session(self):
        assert binomial_tail_exact_log2(80, 80, 0.5) == pytest.approx(-80, abs=1e-12)

    def test_degenerate_p(self):
        assert binomial_tail_exact(5, 5, 1.0) == 1.0
        assert binomial_tail_exact(5, 1, 0.0) == 0.0

    def test_size_limit(self):
        with pytest.raises(ValueError):
            binomial_tail_exact(10_001, 5000, 0.5)

    def test_bad_side(self):
        with pytest.raises(ValueError):
            binomial_tail_exact(5, 2, 0.5, "both")


class TestNoise:
    @pytest.mark.parametrize("eta,p", [(0, 1), (0.1, 0.905), (0.2, 0.82), (1, 0.5)])
    def test_honest_prob(self, eta, p):
        assert bounds.honest_round_prob(eta) == pytest.approx(p, abs=1e-15)

    def test_max_noise_frozen(self):
        assert max_noise(0.875) == pytest.approx(0.133974596215561, abs=1e-14)
        assert max_noise(0.9) == pytest.approx(0.105572809000084, abs=1e-14)

    @given(st.floats(0.5001, 0.9999))
    def test_max_noise_inverts_honest_prob(self, u):
        assert bounds.honest_round_prob(max_noise(u)) == pytest.approx(u, abs=1e-12)

    @pytest.mark.parametrize("u", [0.5, 1.0, 0.2])
    def test_max_noise_domain(self, u):
        with pytest.raises(ValueError):
            max_noise(u)


class TestThreshold:
    def test_example(self):
        assert threshold_size(1000, 0.5, 0.875, 0.05) == 925

    def test_strict_when_ceiling_is_exact(self):
        assert threshold_size(8, 0.5, 0.75, 0.125) == 7

    def test_rejects(self):
        with pytest.raises(ValueError):
            threshold_size(100, 0.5, 0.875, 0.2)
        with pytest.raises(ValueError):
            threshold_size(100, 0.5, 0.875, 0)


class TestMinRounds:
    @pytest.mark.parametrize("p,n", [(0.75, 193), (0.5, 80), (0.875, 416)])
    def test_strict_threshold(self, p, n):
        r = min_rounds(1.0, p)
        assert r.n_required == n and r.tau == n
        assert r.achieved_log2 <= -80

    def test_relaxed_threshold_frozen(self):
        # mpmath: 80 ln 2 / D(0.9 || 0.875) = 18244.11
        r = min_rounds(0.9, 0.875, -80)
        assert r.n_required == 18245
        assert r.tau == 16421
        assert r.achieved_log2 <= -80

    def test_tradeoff_corner(self):
        assert min_rounds(0.88, 0.5).n_required == 170
        assert min_rounds(0.88, 0.875).n_required == 479607

    @given(st.floats(0.51, 1.0), st.floats(-120, -1))
    @settings(max_examples=200)
    def test_minimal(self, u, target):
        r = min_rounds(u, 0.5, target)
        assert r.achieved_log2 <= target
        m = r.n_required - 1
        if m >= 1:
            d = math.log2(2) if u == 1 else kl_bernoulli(u, 0.5) / math.log(2)
            assert -m * d > target

    @given(st.floats(0.88, 0.999), st.floats(0.88, 0.999))
    def test_monotone_in_u(self, u1, u2):
        lo, hi = sorted((u1, u2))
        assert min_rounds(lo, 0.875).n_required >= min_rounds(hi, 0.875).n_required

    def test_regime(self):
        with pytest.raises(RegimeError):
            min_rounds(0.875, 0.875)
        with pytest.raises(ValueError):
            min_rounds(0.9, 0.875, 0)


class TestTables:
    def test_table1(self):
        assert bounds.table1() == [
            ("per_round_df", "0.75", "0.5"),
            ("per_round_mf", "0.75", "0.875"),
            ("rounds_df", "193", "80"),
            ("rounds_mf", "193", "416"),
        ]

    def test_tradeoff_endpoint(self):
        row = bounds.tradeoff_curves([1.0])[0]
        assert (row.n_df, row.n_mf, row.eta_max) == (80, 416, 0.0)

    def test_tradeoff_out_of_domain_cells(self):
        row = bounds.tradeoff_curves([0.6])[0]
        assert row.n_mf is None and row.n_df is not None
        assert bounds.tradeoff_csv([row]).splitlines()[1].split(",")[2] == ""

    def test_tradeoff_default_grid(self):
        rows = bounds.tradeoff_curves()
        assert [r.u for r in rows][:2] == [0.88, 0.885] and rows[-1].u == 1.0
        assert all(a.n_mf >= b.n_mf and a.n_df >= b.n_df and a.eta_max >= b.eta_max
                   for a, b in zip(rows, rows[1:]))
