import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from contraction_lab.bounds import (ContractionProfile, ExponentialDecay, IssProfile,
                                    ball_inclusion_radii, best_rho, contraction_steps,
                                    diff_norm_bound, iss_bound, iss_envelope,
                                    piecewise_bound_gB, rho_contraction_time,
                                    rho_contraction_time_cross_norm, same_norm_bound)
from contraction_lab.linexp import LinExpParams, linexp_eval
from contraction_lab.norms import EquivalencePair, NormSpec, vector_norm

from _oracles import euler_saturated

L2 = NormSpec.l2()


def two_norm_profile(c, r, k):
    return ContractionProfile(L2, NormSpec.weighted(np.eye(2) * 1.0, p=1), c, r,
                              EquivalencePair(k, 1.0))


FIG3 = two_norm_profile(1.0, 1.0, 2.0)


class TestProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            ContractionProfile.single_norm(L2, 0.0, 1.0)
        with pytest.raises(ValueError):
            ContractionProfile.single_norm(L2, 1.0, -1.0)
        with pytest.raises(ValueError):
            ContractionProfile(L2, L2, 1.0, 1.0, EquivalencePair(2.0, 1.0))
        with pytest.raises(ValueError):
            ContractionProfile(L2, NormSpec.l1(), 1.0, 1.0, EquivalencePair(0.5, 1.0))

    def test_from_norms_and_json(self):
        p = ContractionProfile.from_norms(NormSpec.linf(), NormSpec.l2(), 1.5, 0.3, n=2,
                                          x_star=[1.0, 2.0])
        assert_allclose(p.k, math.sqrt(2))
        back = ContractionProfile.from_json(p.to_json())
        assert back.global_norm == p.global_norm and back.local_norm == p.local_norm
        assert (back.c_exp, back.r, back.k) == (p.c_exp, p.r, p.k)
        assert_allclose(back.x_star, [1.0, 2.0])
        # equiv recomputed when absent
        data = p.to_json()
        del data["equiv"]
        assert_allclose(ContractionProfile.from_json(data).k, math.sqrt(2))

    def test_same_norm_identity(self):
        p = ContractionProfile.single_norm(L2, 1.0, 1.0)
        assert p.same_norm and p.k == 1.0 and p.certified


class TestSameNorm:
    def test_examples(self):
        prof = ContractionProfile.single_norm(L2, 2.0, 1.0)
        inside = same_norm_bound(prof, 0.5)
        assert isinstance(inside, ExponentialDecay) and inside.scale == 0.5
        assert same_norm_bound(prof, 5.0) == LinExpParams(5.0, 2.0, 2.0, 2.0)
        at_r = same_norm_bound(prof, 1.0)
        assert isinstance(at_r, ExponentialDecay) and at_r(0.0) == 1.0

    def test_boundary_consistency(self):
        prof = ContractionProfile.single_norm(L2, 2.0, 1.0)
        just_out = same_norm_bound(prof, 1.0 + 1e-12)
        t = np.linspace(0, 5, 101)
        assert_allclose(just_out(t), same_norm_bound(prof, 1.0)(t), atol=1e-11)

    def test_tight_on_saturated_field(self):
        x = euler_saturated(2.0, 1.0, 5.0, 1e-5, 600_000, 100, 0.0, 0.0)
        t = np.arange(x.size) * 1e-3
        env = same_norm_bound(ContractionProfile.single_norm(L2, 2.0, 1.0), 5.0)
        gap = env(t) - x
        assert gap.min() >= -1e-6
        assert gap.max() <= 1e-3

    def test_mixed_norms_rejected(self):
        with pytest.raises(ValueError):
            same_norm_bound(FIG3, 2.0)


class TestDiffNorm:
    def test_fig3_values(self):
        p = diff_norm_bound(FIG3, 2.4, 0.4)
        assert contraction_steps(2.4, 1.0, 0.4) == 3
        ln5, ln2 = math.log(5), math.log(2)
        assert_allclose(p.c_lin, 0.6 / ln5, rtol=1e-14)
        assert_allclose(p.q, 2.4 + 0.6 * ln2 / ln5, rtol=1e-14)
        assert_allclose(p.t_c, 3 * ln5 + ln2, rtol=1e-14)
        assert abs(p.c_lin - 0.37281) < 1e-5
        assert abs(p.t_c - 5.52146) < 1e-5
        assert abs(p.q - 2.658406) < 1e-6

    def test_inside_case(self):
        env = diff_norm_bound(FIG3, 0.5, 0.4)
        assert isinstance(env, ExponentialDecay)
        assert env(0.0) == 1.0  # carries the factor k

    def test_same_norm_limit(self):
        prof = ContractionProfile(L2, NormSpec.l1(), 1.3, 0.7, EquivalencePair(1.0, 1.0))
        p = diff_norm_bound(prof, 3.0, 1 - 1e-6)
        ref = same_norm_bound(ContractionProfile.single_norm(L2, 1.3, 0.7), 3.0)
        assert_allclose(p.c_lin, ref.c_lin, rtol=1e-5)

    def test_steps(self):
        assert contraction_steps(1.0 + 1e-12, 1.0, 0.4) == 1
        assert contraction_steps(2.2, 1.0, 0.4) == 2  # 1.2 / 0.6 == 2 up to rounding
        assert contraction_steps(2.21, 1.0, 0.4) == 3

    def test_steps_monotone_in_rho(self, rng):
        for _ in range(200):
            d0, r = rng.uniform(1.1, 20), 1.0
            rhos = np.sort(rng.uniform(0.01, 0.99, 10))
            T = [contraction_steps(d0, r, rho) for rho in rhos]
            assert all(a <= b for a, b in zip(T, T[1:]))

    def test_rho_domain(self):
        for rho in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                diff_norm_bound(FIG3, 2.0, rho)


class TestGB:
    def test_fig3(self):
        t = np.arange(0, 12.0001, 0.01)
        g = piecewise_bound_gB(t, FIG3, 2.4, 0.4)
        lin = linexp_eval(t, diff_norm_bound(FIG3, 2.4, 0.4))
        assert np.all(g <= lin + 1e-12)
        assert piecewise_bound_gB(0.0, FIG3, 2.4, 0.4) == 2.4
        assert_allclose(piecewise_bound_gB(3 * math.log(5), FIG3, 2.4, 0.4), 0.6, rtol=1e-12)

    def test_formula_by_hand(self):
        # second interval at tau = 0.5
        t_rho = math.log(5)
        t = t_rho + 0.5
        D1 = 2.4 - 0.6
        expected = min(D1, D1 - 1.0 * (1 - 2 * math.exp(-0.5)))
        assert_allclose(piecewise_bound_gB(t, FIG3, 2.4, 0.4), expected, rtol=1e-14)

    def test_dominated_random(self, rng):
        for _ in range(50):
            c, r = rng.uniform(0.1, 3), rng.uniform(0.1, 3)
            k, rho = rng.uniform(1.0, 10), rng.uniform(0.02, 0.98)
            d0 = r * rng.uniform(1.001, 20)
            prof = two_norm_profile(c, r, k)
            p = diff_norm_bound(prof, d0, rho)
            t = np.linspace(0, 2 * p.t_c + 5 / c, 1000)
            assert np.all(piecewise_bound_gB(t, prof, d0, rho) <= p(t) + 1e-12 * d0)

    def test_inside_rejected(self):
        with pytest.raises(ValueError):
            piecewise_bound_gB(1.0, FIG3, 0.5, 0.4)


class TestBestRho:
    def test_grid_minimum(self):
        rho, params = best_rho(FIG3, 2.4)
        grid = np.linspace(0.01, 0.99, 99)
        assert params.t_c == min(diff_norm_bound(FIG3, 2.4, g).t_c for g in grid)
        assert 0 < rho < 1

    def test_inside_rejected(self):
        with pytest.raises(ValueError):
            best_rho(FIG3, 0.5)


class TestIss:
    def test_examples(self):
        base = ContractionProfile.single_norm(L2, 1.0, 1.0)
        env = iss_envelope(IssProfile(base, 1.0, 0.5), 3.0)
        assert (env.linexp.c_lin, env.linexp.t_c) == (0.5, 4.0)
        assert abs(iss_bound(500.0, IssProfile(base, 1.0, 0.5), 3.0) - 0.5) < 1e-12

    def test_zero_input_reduces(self):
        base = ContractionProfile.single_norm(L2, 1.7, 0.4)
        t = np.linspace(0, 10, 1001)
        for L_u in (0.0, 1.0, 3.0):
            assert np.array_equal(iss_bound(t, IssProfile(base, L_u, 0.0), 2.0),
                                  same_norm_bound(base, 2.0)(t))

    def test_validation(self):
        base = ContractionProfile.single_norm(L2, 1.0, 1.0)
        with pytest.raises(ValueError):
            IssProfile(base, 1.0, 1.0)
        with pytest.raises(ValueError):
            IssProfile(FIG3, 1.0, 0.1)
        with pytest.raises(ValueError):
            iss_envelope(IssProfile(base, 1.0, 0.5), 0.5)


class TestContractionTimes:
    def test_examples(self):
        assert_allclose(rho_contraction_time(2.0, 0.5), math.log(2) / 2)
        assert_allclose(rho_contraction_time(1.0, 1 / math.e), 1.0)
        assert rho_contraction_time(1.0, 1 - 1e-12) < 1e-11
        assert rho_contraction_time_cross_norm(1.3, 0.3, 1.0) == rho_contraction_time(1.3, 0.3)
        assert_allclose(rho_contraction_time_cross_norm(1.0, 0.4, 2.0), math.log(5))
        assert_allclose(rho_contraction_time_cross_norm(2.0, 0.5, 2.0), math.log(4) / 2)

    def test_cross_norm_dominates(self, rng):
        for _ in range(100):
            c, rho, k = rng.uniform(0.1, 5), rng.uniform(0.01, 0.99), rng.uniform(1.0, 10)
            assert rho_contraction_time_cross_norm(c, rho, k) >= rho_contraction_time(c, rho)
            assert rho_contraction_time_cross_norm(c, rho, k) > rho_contraction_time(c, rho)

    def test_domain(self):
        with pytest.raises(ValueError):
            rho_contraction_time(0.0, 0.5)
        with pytest.raises(ValueError):
            rho_contraction_time_cross_norm(1.0, 0.5, 0.9)

    def test_on_linear_flow(self):
        # x' = -2x shrinks by 1/2 in ln 2 / 2
        t = rho_contraction_time(2.0, 0.5)
        assert_allclose(math.exp(-2.0 * t), 0.5)


class TestBallInclusion:
    def test_examples(self):
        assert ball_inclusion_radii(L2, L2, 1.3, 3) == (1.3, 1.3)
        inner, outer = ball_inclusion_radii(L2, NormSpec.linf(), 1.0, 2)
        assert_allclose([inner, outer], [1 / math.sqrt(2), 1.0])
        assert ball_inclusion_radii(L2, NormSpec.linf(), 0.0, 2) == (0.0, 0.0)

    @pytest.mark.parametrize("alpha,beta", [(L2, NormSpec.linf()), (NormSpec.l1(), L2),
                                            (NormSpec.linf(), NormSpec.l1())])
    def test_membership_on_boundaries(self, rng, alpha, beta):
        n, r = 3, 1.7
        inner, outer = ball_inclusion_radii(alpha, beta, r, n)
        x = rng.standard_normal((100_000, n))
        on_beta_inner = x / vector_norm(x, beta)[:, None] * inner
        assert np.all(vector_norm(on_beta_inner, alpha) <= r * (1 + 1e-12))
        on_alpha = x / vector_norm(x, alpha)[:, None] * r
        assert np.all(vector_norm(on_alpha, beta) <= outer * (1 + 1e-12))


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(1.0, 20), st.floats(0.01, 0.99),
       st.floats(1.0001, 50))
def test_every_constructor_gives_valid_continuous_params(c, r, k, rho, ratio):
    d0 = r * ratio
    same = same_norm_bound(ContractionProfile.single_norm(L2, c, r), d0)
    diff = diff_norm_bound(two_norm_profile(c, r, k), d0, rho)
    iss = iss_envelope(IssProfile(ContractionProfile.single_norm(L2, c, r), 1.0, 0.5 * r * c), d0)
    for p in (same, diff, iss.linexp):
        assert p.t_c < p.q / p.c_lin
        right = linexp_eval(np.nextafter(p.t_c, np.inf), p)
        assert abs(p.crossing_value - right) < 1e-12 * max(1.0, p.q)
