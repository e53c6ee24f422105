import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from contraction_lab.dynamics import (IntegrationError, Trajectory, VectorField,
                                      empirical_contraction_rate, estimate_dini,
                                      estimate_radius, integrate, integrate_ensemble,
                                      jacobian_fd, sample_ball, verify_envelope)
from contraction_lab.linexp import SaturatedOdeParams, sat, saturated_ode_solution
from contraction_lab.bounds import diff_norm_bound
from contraction_lab.lp import BOX_LP_Z_STAR, box_lp, local_profile, lp_vector_field
from contraction_lab.norms import NormSpec, log_norm, vector_norm

L2 = NormSpec.l2()


def decay(dim=1, rate=1.0):
    return VectorField(dim, lambda t, x: -rate * x, lambda t, x: -rate * np.eye(dim),
                       vectorized=True)


def saturated(c=1.0, d=1.0, x_star=0.0):
    return VectorField(1, lambda t, x: -c * sat(x - x_star, d), vectorized=True)


def relu_field():
    return VectorField(1, lambda t, x: np.maximum(x, 0.0))


class TestIntegrate:
    def test_rk4_exponential(self):
        tr = integrate(decay(), [1.0], 1.0, 0.01, "rk4")
        assert abs(tr.final[0] - math.exp(-1)) < 1e-8
        assert tr.times[-1] == 1.0 and len(tr) == 101

    def test_zero_field_constant(self):
        vf = VectorField(3, lambda t, x: np.zeros(3))
        tr = integrate(vf, [1.0, 2.0, 3.0], 0.5, 0.01)
        assert np.all(tr.states == [1.0, 2.0, 3.0])

    def test_euler_step_definition(self):
        vf = VectorField(1, lambda t, x: np.array([t + x[0]]))
        tr = integrate(vf, [1.0], 0.3, 0.1)
        x = 1.0
        for k in range(3):
            x = x + 0.1 * (k * 0.1 + x)
        assert_allclose(tr.final[0], x, rtol=1e-15)

    def test_lemma4_system(self):
        tr = integrate(saturated(), [3.0], 10.0, 1e-5, stride=100)
        exact = saturated_ode_solution(tr.times, SaturatedOdeParams(1.0, 1.0, 3.0))
        assert np.max(np.abs(tr.states[:, 0] - exact)) < 1e-3

    def test_uniform_grid(self):
        tr = integrate(decay(), [1.0], 2.0, 1e-3, stride=10)
        assert np.max(np.abs(np.diff(tr.times) - 1e-2)) < 1e-12
        assert tr.times[0] == 0.0 and tr.states[0, 0] == 1.0

    def test_blow_up_reports_step(self):
        vf = VectorField(1, lambda t, x: x ** 2)
        with pytest.raises(IntegrationError) as err, np.errstate(over="ignore"):
            integrate(vf, [1.0], 5.0, 0.1)
        assert err.value.step > 0
        assert np.all(np.isfinite(err.value.last_state))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            integrate(decay(), [1.0], 1.0, 0.0)
        with pytest.raises(ValueError):
            integrate(decay(), [1.0], 1e-4, 1e-3)
        with pytest.raises(ValueError):
            integrate(decay(), [1.0], 1.0, 1e-3, scheme="heun")
        with pytest.raises(ValueError):
            integrate(decay(), [1.0], 1.0, 1e-3, stride=7)
        with pytest.raises(ValueError):
            integrate(decay(2), [1.0], 1.0, 1e-3)

    def test_rk4_euler_consistency(self):
        # the Euler-RK4 gap is first order in dt
        vf = VectorField(2, lambda t, x: np.stack([x[..., 1], -np.sin(x[..., 0])], axis=-1),
                         vectorized=True)
        gaps = []
        for dt in (2e-3, 1e-3):
            e = integrate(vf, [1.0, 0.0], 2.0, dt, "euler")
            r = integrate(vf, [1.0, 0.0], 2.0, dt, "rk4")
            gaps.append(np.max(np.abs(e.states - r.states)))
        assert abs(gaps[1] / gaps[0] - 0.5) < 0.5 * 0.2

    def test_deterministic(self):
        vf = lp_vector_field(box_lp())
        z0 = np.linspace(-3, 3, 9)
        a = integrate(vf, z0, 2.0, 1e-3, stride=100)
        b = integrate(vf, z0, 2.0, 1e-3, stride=100)
        assert a.to_csv() == b.to_csv()

    def test_ensemble_matches_single(self, rng):
        vf = lp_vector_field(box_lp())
        X0 = rng.uniform(-5, 5, size=(4, 9))
        ens = integrate_ensemble(vf, X0, 1.0, 1e-3, "rk4", stride=50)
        for x0, tr in zip(X0, ens):
            single = integrate(vf, x0, 1.0, 1e-3, "rk4", stride=50)
            assert np.array_equal(single.states, tr.states)

    def test_ensemble_non_vectorized(self):
        vf = VectorField(1, lambda t, x: -x)
        ens = integrate_ensemble(vf, [[1.0], [2.0]], 1.0, 0.1)
        assert_allclose([tr.final[0] for tr in ens], [0.9 ** 10, 2 * 0.9 ** 10])


class TestTrajectoryCsv:
    def test_round_trip_bit_exact(self, rng):
        tr = integrate(lp_vector_field(box_lp()), rng.uniform(-5, 5, 9), 0.5, 1e-3, stride=10)
        text = tr.to_csv()
        assert text.splitlines()[0] == "t," + ",".join(f"x{i}" for i in range(1, 10))
        back = Trajectory.from_csv(io.StringIO(text), stride=10)
        assert np.array_equal(back.states, tr.states)
        assert np.array_equal(back.times, tr.times)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros(3), np.zeros((2, 1)), "euler", 0.1)


class TestJacobians:
    def test_linear(self, rng):
        A = rng.standard_normal((4, 4))
        J = jacobian_fd(VectorField.linear(A), 0.0, rng.standard_normal(4))
        assert np.max(np.abs(J - A)) < 1e-8

    def test_relu(self):
        assert abs(jacobian_fd(relu_field(), 0.0, [1.0])[0, 0] - 1.0) < 1e-8
        assert jacobian_fd(relu_field(), 0.0, [0.0])[0, 0] == 0.5

    def test_analytic_lp_jacobian_agrees(self, rng):
        vf = lp_vector_field(box_lp())
        for _ in range(50):
            z = rng.standard_normal(9) * 3
            J = vf.jacobian(0.0, z)
            Jfd = jacobian_fd(vf, 0.0, z)
            assert np.max(np.abs(J - Jfd)) <= 1e-4 * max(1.0, np.max(np.abs(J)))


class TestDini:
    def test_examples(self):
        assert np.all(estimate_dini(np.ones(10), 0.1) == 0)
        t = np.arange(0, 5, 1e-3)
        slopes = estimate_dini(np.exp(-t), 1e-3)
        assert np.max(np.abs(slopes + np.exp(-t[:-1]))) < 1e-3
        with pytest.raises(ValueError):
            estimate_dini([1.0], 0.1)

    def test_lp_distance_inequality(self):
        # D+ ||z - z*|| <= -c sat_r(||z - z*||) with c, r from a sampled local rate
        prob = box_lp()
        prof = local_profile(prob, BOX_LP_Z_STAR)
        tr = integrate(lp_vector_field(prob), BOX_LP_Z_STAR + 0.05, 20.0, 1e-3)
        dist = vector_norm(tr.states - BOX_LP_Z_STAR, prof.local_norm)
        slopes = estimate_dini(dist, 1e-3)
        c_est = prof.c_exp
        r_loc = prof.r / np.linalg.norm(np.linalg.inv(prof.local_norm.Q), 2)
        assert np.all(slopes <= -c_est * sat(dist[:-1], r_loc) + 1e-6)


class TestSampling:
    @pytest.mark.parametrize("norm", [NormSpec.l1(), L2, NormSpec.linf(),
                                      NormSpec.weighted(np.array([[2.0, 1.0], [0.0, 1.0]]))])
    def test_inside_and_boundary(self, rng, norm):
        c = np.array([1.0, -2.0])
        inner = sample_ball(c, 0.7, norm, 5000, rng)
        assert np.all(vector_norm(inner - c, norm) <= 0.7 * (1 + 1e-12))
        bnd = sample_ball(c, 0.7, norm, 5000, rng, boundary=True)
        assert_allclose(vector_norm(bnd - c, norm), 0.7, rtol=1e-12)

    def test_uniform_radius_distribution(self, rng):
        pts = sample_ball(np.zeros(3), 1.0, L2, 100_000, rng)
        # P(|x| <= 1/2) = 1/8 for the uniform ball in R^3
        frac = np.mean(np.linalg.norm(pts, axis=1) <= 0.5)
        assert abs(frac - 0.125) < 0.005


class TestEmpiricalRate:
    def test_decay(self):
        est = empirical_contraction_rate(decay(3), np.zeros(3), 2.0, L2, samples=200)
        assert_allclose(est.sup_mu, -1.0, atol=1e-12)
        assert est.rate == pytest.approx(1.0)

    def test_weakly_contracting_linear(self):
        A = np.array([[-1.0, 2.0], [0.0, -1.0]])
        oracle = np.linalg.eigvalsh((A + A.T) / 2).max()
        est = empirical_contraction_rate(VectorField.linear(A), np.zeros(2), 1.0, L2, samples=100)
        assert_allclose(est.sup_mu, oracle, atol=1e-12)
        assert abs(est.sup_mu) < 1e-12

    def test_lp_small_ball(self):
        prob = box_lp()
        prof = local_profile(prob, BOX_LP_Z_STAR)
        est = empirical_contraction_rate(lp_vector_field(prob), BOX_LP_Z_STAR, 0.1,
                                         prof.local_norm, samples=300)
        assert est.sup_mu < 0
        assert est.n_excluded == 0

    def test_kinks_excluded(self):
        vf = VectorField(1, lambda t, x: -np.abs(x), vectorized=True)
        est = empirical_contraction_rate(vf, np.zeros(1), 1e-7, L2, samples=50)
        assert est.n_excluded == 50 and est.argmax is None

    def test_saturated_field_without_jacobian(self):
        est = empirical_contraction_rate(saturated(2.0, 1.0), np.zeros(1), 0.9, L2, samples=200)
        assert_allclose(est.sup_mu, -2.0, atol=1e-6)


class TestRadius:
    def test_saturation_boundary(self):
        est = estimate_radius(saturated(), np.zeros(1), L2, 0.99, search=(1e-3, 10.0, 30))
        assert abs(est.radius - 1.0) < 1e-3
        assert not est.certified

    def test_linear_hits_ceiling(self):
        est = estimate_radius(decay(2), np.zeros(2), L2, 0.5, search=(1e-2, 5.0, 10))
        assert est.radius == 5.0

    def test_unreachable_rate(self):
        est = estimate_radius(decay(2), np.zeros(2), L2, 2.0, search=(1e-2, 5.0, 10))
        assert est.radius == 0.0 and est.diagnostic

    def test_not_equilibrium(self):
        with pytest.raises(ValueError):
            estimate_radius(decay(1), np.ones(1), L2, 0.5)


class TestVerifyEnvelope:
    def test_exact_and_halved(self):
        tr = integrate(saturated(), [3.0], 8.0, 1e-4, stride=10)
        p = SaturatedOdeParams(1.0, 1.0, 3.0)
        exact = verify_envelope(tr, [0.0], L2, lambda t: saturated_ode_solution(t, p))
        assert exact.passed and abs(exact.max_violation) < 1e-3
        halved = verify_envelope(tr, [0.0], L2, lambda t: 0.5 * saturated_ode_solution(t, p))
        assert not halved.passed and halved.max_violation > 0

    def test_lp_trajectories_pass(self, rng):
        prob = box_lp()
        prof = local_profile(prob, BOX_LP_Z_STAR)
        vf = lp_vector_field(prob)
        for z0 in BOX_LP_Z_STAR + rng.normal(0, 2, size=(5, 9)):
            tr = integrate(vf, z0, 20.0, 1e-3, stride=10)
            d0 = float(np.linalg.norm(z0 - BOX_LP_Z_STAR))
            env = diff_norm_bound(prof, d0, 0.5)
            assert verify_envelope(tr, BOX_LP_Z_STAR, L2, env).passed


def test_weak_contraction_nonexpansive(rng):
    # two trajectories of the LP flow never move apart beyond the discretization slack
    prob = box_lp()
    vf = lp_vector_field(prob)
    X0 = rng.normal(0, 3, size=(6, 9))
    ens = integrate_ensemble(vf, X0, 10.0, 1e-3)
    # sampled Lipschitz bound: the induced 2-norm of sampled Jacobians
    L = max(np.linalg.norm(vf.jacobian(0.0, z), 2) for z in rng.normal(0, 5, size=(200, 9)))
    for a, b in [(0, 1), (2, 3), (4, 5)]:
        d = np.linalg.norm(ens[a].states - ens[b].states, axis=1)
        assert np.max(np.diff(d)) <= 10 * 1e-3 * L
        assert d[-1] <= d[0] + 10 * 1e-3 * L
