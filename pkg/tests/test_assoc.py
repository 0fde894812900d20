import itertools
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genrel.assoc import (
    BATTERY,
    ReliabilityEstimate,
    ScoreSet,
    _sigma_sum,
    codec_t,
    coefficient_w,
    ksg_mutual_information,
    r_squared,
    schweizer_wolff_sigma,
    squared_correlation,
    table1_battery,
)
from genrel.errors import DegenerateInputError, EstimationError
from genrel.smoother import SmootherConfig

from conftest import bivariate_normal


def _enumerated_sigma_sum(ranks_u, ranks_v):
    """sum_{i,j} |n * #{k: ru_k <= i, rv_k <= j} - i*j| by direct enumeration."""
    n = len(ranks_u)
    total = 0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            count = sum(1 for a, b in zip(ranks_u, ranks_v) if a <= i and b <= j)
            total += abs(n * count - i * j)
    return total


def _enumerated_sigma(ranks_u, ranks_v):
    n = len(ranks_u)
    s = Fraction(_enumerated_sigma_sum(ranks_u, ranks_v), n * n)
    return Fraction(12, n * n - 1) * s


class TestReliabilityEstimate:
    def test_direction_must_match(self):
        with pytest.raises(ValueError):
            ReliabilityEstimate("Sigma", 0.3, "observed-as-outcome")

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            ReliabilityEstimate("Kappa", 0.3, "symmetric")

    @pytest.mark.parametrize("value,clamped", [(-0.03, 0.0), (0.4, 0.4), (1.02, 1.0)])
    def test_clamped(self, value, clamped):
        assert ReliabilityEstimate("MI", value, "symmetric").clamped == clamped

    def test_battery_pairings(self):
        assert list(BATTERY) == [
            "R2_measure", "R2_predict", "Corr2", "Sigma", "T_measure", "T_predict",
            "MI", "W_measure", "W_predict",
        ]
        assert BATTERY["T_predict"] == "latent-as-outcome"
        assert BATTERY["W_measure"] == "observed-as-outcome"


class TestScoreSet:
    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            ScoreSet(np.zeros((5, 2)), np.zeros((4, 2)))

    def test_bad_tag(self):
        with pytest.raises(ValueError):
            ScoreSet(np.zeros((5, 2)), np.zeros((5, 2)), "logit")


class TestRSquared:
    def test_deterministic(self, rng):
        x = rng.normal(size=2000)
        assert r_squared(x + np.sin(x), x) >= 0.99

    def test_deterministic_strong_curvature_needs_narrow_span(self, rng):
        x = rng.normal(size=2000)
        narrow = SmootherConfig(span=0.3)
        assert r_squared(np.exp(x / 2), x, narrow) >= 0.99
        assert r_squared(np.tanh(x), x, narrow) >= 0.99

    def test_independent(self, rng):
        assert r_squared(rng.normal(size=2000), rng.normal(size=2000)) <= 0.05

    def test_gaussian(self):
        u, x = bivariate_normal(20000, 0.6, 21)
        assert r_squared(u, x) == pytest.approx(0.36, abs=0.02)

    def test_constant_outcome(self, rng):
        with pytest.raises(DegenerateInputError):
            r_squared(np.ones(200), rng.normal(size=200))


class TestSquaredCorrelation:
    def test_linear(self, rng):
        u = rng.normal(size=300)
        assert squared_correlation(u, 5 - 3 * u) == pytest.approx(1.0, abs=1e-12)

    def test_independent(self, rng):
        assert squared_correlation(rng.normal(size=20000), rng.normal(size=20000)) <= 0.001

    def test_matches_r_squared_when_linear(self):
        u, v = bivariate_normal(5000, 0.5, 4)
        assert abs(squared_correlation(u, v) - r_squared(u, v)) < 0.02

    def test_constant(self):
        with pytest.raises(DegenerateInputError):
            squared_correlation(np.ones(10), np.arange(10.0))


class TestSigma:
    def test_hand_ranked_enumeration(self):
        ranks = np.array([1, 2, 3, 4])
        assert _sigma_sum(ranks, ranks, 4) == _enumerated_sigma_sum([1, 2, 3, 4], [1, 2, 3, 4]) == 20

    @pytest.mark.parametrize("perm", list(itertools.permutations(range(1, 5))))
    def test_all_n4_permutations(self, perm):
        ru = np.arange(1, 5)
        assert _sigma_sum(ru, np.array(perm), 4) == _enumerated_sigma_sum(list(ru), list(perm))

    def test_public_value_against_enumeration(self, rng):
        u = rng.normal(size=12)
        v = u + rng.normal(size=12)
        ru = (np.argsort(np.argsort(u)) + 1).tolist()
        rv = (np.argsort(np.argsort(v)) + 1).tolist()
        raw, rescaled = schweizer_wolff_sigma(u, v)
        expected = _enumerated_sigma(ru, rv)
        assert raw == pytest.approx(float(expected), rel=4e-16)
        assert rescaled == pytest.approx(4 * np.sin(np.pi / 6 * float(expected)) ** 2, rel=1e-14)

    def test_ties_enumerated(self):
        # tied values share the ceiling of their average rank
        u = np.array([1, 1, 2, 3, 3, 3, 4, 5, 6, 7, 7, 8], dtype=float)
        v = np.array([2, 1, 3, 5, 4, 4, 6, 8, 7, 9, 9, 10], dtype=float)
        from scipy.stats import rankdata

        ru = np.ceil(rankdata(u)).astype(int).tolist()
        rv = np.ceil(rankdata(v)).astype(int).tolist()
        raw, _ = schweizer_wolff_sigma(u, v)
        assert raw == pytest.approx(float(_enumerated_sigma(ru, rv)), rel=4e-16)

    def test_perfect_monotone(self, rng):
        u = rng.normal(size=500)
        raw, rescaled = schweizer_wolff_sigma(u, u**3)
        assert raw >= 0.98 and rescaled >= 0.98

    def test_countermonotone(self, rng):
        u = rng.normal(size=500)
        assert schweizer_wolff_sigma(u, -u)[1] >= 0.98

    def test_independent(self, rng):
        assert schweizer_wolff_sigma(rng.uniform(size=5000), rng.uniform(size=5000))[1] <= 0.05

    def test_gaussian(self):
        u, v = bivariate_normal(20000, 0.5, 31)
        assert schweizer_wolff_sigma(u, v)[1] == pytest.approx(0.25, abs=0.03)

    def test_symmetric(self, rng):
        u = rng.normal(size=300)
        v = np.round(u + rng.normal(size=300), 1)
        assert schweizer_wolff_sigma(u, v) == schweizer_wolff_sigma(v, u)

    def test_rank_invariant_bitwise(self, rng):
        u = rng.normal(size=400)
        v = u + rng.normal(size=400)
        assert schweizer_wolff_sigma(u, v) == schweizer_wolff_sigma(np.exp(u), v**3)

    def test_small_n(self):
        with pytest.raises(ValueError):
            schweizer_wolff_sigma(np.arange(9.0), np.arange(9.0))


class TestMutualInformation:
    def test_independent(self, rng):
        assert ksg_mutual_information(rng.normal(size=5000), rng.normal(size=5000))[1] <= 0.05

    def test_gaussian_oracle(self):
        u, v = bivariate_normal(20000, 0.5, 41)
        nats, rescaled = ksg_mutual_information(u, v)
        assert nats == pytest.approx(-0.5 * np.log(0.75), abs=0.02)
        assert rescaled == pytest.approx(0.25, abs=0.03)

    def test_bivariate_blocks_gaussian(self, rng):
        # U, V in R^2 with cross-covariance 0.6 I: I = -log(1 - 0.36)
        z = rng.normal(size=(4000, 4))
        U = z[:, :2]
        V = 0.6 * U + 0.8 * z[:, 2:]
        nats, _ = ksg_mutual_information(U, V)
        assert nats == pytest.approx(-np.log(1 - 0.36), abs=0.05)

    def test_identical(self, rng):
        u = rng.normal(size=1000)
        assert ksg_mutual_information(u, u)[1] >= 0.99

    def test_symmetric(self, rng):
        U = rng.normal(size=(500, 2))
        V = U + rng.normal(size=(500, 2))
        assert ksg_mutual_information(U, V, seed=3) == ksg_mutual_information(V, U, seed=3)

    def test_symmetric_with_duplicates(self, rng):
        U = np.round(rng.normal(size=(500, 2)), 1)
        V = rng.normal(size=(500, 2)) + U
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assert ksg_mutual_information(U, V, seed=3) == ksg_mutual_information(V, U, seed=3)

    def test_duplicate_warning(self):
        x = np.repeat(np.arange(50.0), 4)
        with pytest.warns(RuntimeWarning, match="duplicate"):
            ksg_mutual_information(x, x + 0.5)

    def test_scale_free(self, rng):
        u = rng.normal(size=800)
        v = u + rng.normal(size=800)
        a = ksg_mutual_information(u, v)[0]
        b = ksg_mutual_information(1000 * u, v / 50)[0]
        assert a == pytest.approx(b, abs=1e-9)

    def test_floor(self, rng):
        nats, rescaled = ksg_mutual_information(rng.normal(size=300), rng.normal(size=300), seed=1)
        assert nats >= 0 and rescaled >= 0

    @pytest.mark.parametrize("k", [1, 100])
    def test_bad_k(self, rng, k):
        with pytest.raises(ValueError):
            ksg_mutual_information(rng.normal(size=100), rng.normal(size=100), k=k)

    def test_small_n(self, rng):
        with pytest.raises(ValueError):
            ksg_mutual_information(rng.normal(size=50), rng.normal(size=50))


class TestCodec:
    def test_monotone_function(self, rng):
        x = rng.normal(size=2000)
        assert codec_t(np.tanh(x), x) >= 0.95

    def test_independent(self, rng):
        assert abs(codec_t(rng.normal(size=5000), rng.normal(size=(5000, 2)))) <= 0.05

    def test_outcome_rank_invariance_bitwise(self, rng):
        X = rng.normal(size=(600, 2))
        u = X[:, 0] + rng.normal(size=600)
        assert codec_t(np.exp(u), X, seed=5) == codec_t(u, X, seed=5)

    def test_hand_computed(self):
        # four values, each repeated 8 times at a distinct x; duplicates in x are
        # each other's nearest neighbors, so min(R_i, R_N(i)) = R_i
        x = np.tile([0.0, 1.0, 3.0, 4.0], 8)
        u = np.tile([1.0, 2.0, 3.0, 4.0], 8)
        n = 32
        R = np.tile([8, 16, 24, 32], 8)
        L = np.tile([32, 24, 16, 8], 8)
        expected = (n * R - L**2).sum() / (L * (n - L)).sum()
        assert codec_t(u, x, seed=0) == pytest.approx(expected, abs=1e-15)

    def test_ties_random_among_candidates(self):
        # the middle point is equidistant from both ends
        x = np.tile([0.0, 1.0, 2.0], 10) + np.repeat(np.arange(10) * 100.0, 3)
        u = np.tile([1.0, 2.0, 3.0], 10) + np.repeat(np.arange(10) * 10.0, 3)
        values = {codec_t(u, x, seed=s) for s in range(20)}
        assert len(values) > 1

    def test_constant_outcome(self, rng):
        with pytest.raises(DegenerateInputError):
            codec_t(np.ones(40), rng.normal(size=40))

    def test_small_n(self, rng):
        with pytest.raises(ValueError):
            codec_t(rng.normal(size=20), rng.normal(size=20))


class TestCoefficientW:
    def test_exact_function(self, rng):
        X = rng.normal(size=(2000, 2))
        U = np.column_stack([X[:, 0] + 0.5 * X[:, 1], np.tanh(X[:, 1])])
        assert coefficient_w(U, X) >= 0.98

    def test_independent(self, rng):
        assert coefficient_w(rng.normal(size=(5000, 2)), rng.normal(size=(5000, 2))) <= 0.05

    def test_gaussian_conditional_covariance_oracle(self, rng):
        cov = np.array([
            [1.0, 0.5, 0.6, 0.2],
            [0.5, 1.0, 0.3, 0.7],
            [0.6, 0.3, 1.0, 0.5],
            [0.2, 0.7, 0.5, 1.0],
        ])
        z = rng.multivariate_normal(np.zeros(4), cov, size=5000)
        suu, sux, sxx = cov[:2, :2], cov[:2, 2:], cov[2:, 2:]
        expected = 1 - np.linalg.det(suu - sux @ np.linalg.solve(sxx, sux.T)) / np.linalg.det(suu)
        assert coefficient_w(z[:, :2], z[:, 2:]) == pytest.approx(expected, abs=0.03)

    def test_single_outcome_reduces_to_r_squared(self):
        u, x = bivariate_normal(2000, 0.5, 12)
        assert abs(coefficient_w(u, x) - r_squared(u, x)) < 0.01

    def test_singular_outcome(self, rng):
        u = rng.normal(size=500)
        with pytest.raises(DegenerateInputError):
            coefficient_w(np.column_stack([u, 2 * u]), rng.normal(size=500))


class TestBattery:
    def _set(self, observed, latent):
        return ScoreSet(observed, latent)

    def test_perfect_proxies(self, rng):
        z = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], size=2000)
        est = table1_battery(self._set(z, z.copy()))
        assert [e.name for e in est] == list(BATTERY)
        assert all(e.clamped >= 0.95 for e in est), [(e.name, e.value) for e in est]

    def test_independent(self, rng):
        est = table1_battery(self._set(rng.normal(size=(2000, 2)), rng.normal(size=(2000, 2))))
        assert all(e.clamped <= 0.1 for e in est), [(e.name, e.value) for e in est]
        assert all(-0.1 <= e.value <= 1.1 for e in est)

    def test_directions(self, rng):
        est = table1_battery(self._set(rng.normal(size=(300, 2)), rng.normal(size=(300, 2))))
        assert {e.name: e.direction for e in est} == BATTERY

    def test_error_names_coefficient(self, rng):
        obs = rng.normal(size=(300, 2))
        latent = np.column_stack([rng.normal(size=300), np.zeros(300)])
        with pytest.raises(EstimationError) as info:
            table1_battery(self._set(obs, latent))
        assert info.value.coefficient == "W_measure"


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(10, 60))
def test_sigma_matches_enumeration_property(seed, n):
    rng = np.random.default_rng(seed)
    u = rng.integers(0, 8, n).astype(float)
    v = u + rng.integers(0, 5, n)
    from scipy.stats import rankdata

    ru = np.ceil(rankdata(u)).astype(int)
    rv = np.ceil(rankdata(v)).astype(int)
    assert _sigma_sum(ru, rv, n) == _enumerated_sigma_sum(ru.tolist(), rv.tolist())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_squared_correlation_symmetric_property(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=50)
    v = rng.normal(size=50) + u
    assert squared_correlation(u, v) == squared_correlation(v, u)
