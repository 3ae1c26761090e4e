import numpy as np
import pytest

from risloc.estimator import (
    EstimationProblem,
    EstimatorConfig,
    build_pn_subspace,
    build_workspace,
    joint_cfo_pn_mse,
    likelihood_term,
    objective_value,
    position_gd_step,
    position_gradient,
    rmse_position,
    run_joint_estimation,
    update_cfo,
    update_eta,
)
from risloc.geometry import PolarPosition, Position3, ScenarioConfig
from risloc.signal import (
    PhaseNoisePath,
    PilotSequence,
    build_pn_covariance,
    sample_phase_noise,
    synthesize_received,
)

CFG = ScenarioConfig.default(n_ris=16, n_subcarriers=16, pn_subspace_dim=8,
                             tx_power_dbm=-10.0)
PILOTS = PilotSequence.qpsk(16)
TRUTH = Position3(1.8, 2.2, 0.3)


def unit_w(seed=0, n=16):
    rng = np.random.default_rng(seed)
    return np.exp(1j * rng.uniform(0, 2 * np.pi, n))


def make_problem(phi=0.1, pn_seed=3, noise_seed=7, w_seed=0, cfg=CFG):
    w = unit_w(w_seed, cfg.ris.n_elements)
    cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
    theta = sample_phase_noise(cov, pn_seed)
    y = synthesize_received(TRUTH, w, phi, theta, PILOTS, cfg, rng_seed=noise_seed)
    return EstimationProblem(y, w, cfg, PILOTS), theta


class TestPnSubspace:
    def test_full_rank_exact(self):
        cov = build_pn_covariance(16, 1e-3)
        sub = build_pn_subspace(cov, 16)
        approx = sub.projection @ sub.projection.T
        assert np.abs(approx - cov.matrix).max() < 1e-10

    def test_truncation_error_equals_eigen_tail(self):
        cov = build_pn_covariance(32, 1e-3)
        sub = build_pn_subspace(cov, 16)
        approx = sub.projection @ sub.projection.T
        err = np.linalg.norm(cov.matrix - approx, "fro")
        tail = np.sqrt(np.sum(sub.eigenvalues[16:] ** 2))
        assert err <= tail * (1 + 1e-10)
        assert err / np.linalg.norm(cov.matrix, "fro") <= (
            tail / np.linalg.norm(cov.matrix, "fro") + 1e-12)
        # cruder tail bound from the type contract
        assert err <= np.sum(sub.eigenvalues[16:])

    def test_columns_orthogonal_with_eigen_norms(self):
        cov = build_pn_covariance(16, 2e-3)
        sub = build_pn_subspace(cov, 6)
        gram = sub.projection.T @ sub.projection
        assert np.allclose(gram, np.diag(sub.eigenvalues[:6]), atol=1e-12)

    def test_dim_bounds(self):
        cov = build_pn_covariance(8, 1e-3)
        with pytest.raises(ValueError):
            build_pn_subspace(cov, 9)
        with pytest.raises(ValueError):
            build_pn_subspace(cov, 0)


class TestObjective:
    def test_zero_at_truth_noise_free(self):
        w = unit_w()
        y = synthesize_received(TRUTH, w, 0.0, PhaseNoisePath.zero(16), PILOTS,
                                CFG, rng_seed=None)
        problem = EstimationProblem(y, w, CFG, PILOTS)
        state = problem.initial_state(EstimatorConfig(init_position=TRUTH))
        assert state.objective < 1e-15

    def test_likelihood_scaling_with_sigma(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        base = likelihood_term(problem, state)
        problem.sigma2 *= 2
        assert likelihood_term(problem, state) == pytest.approx(base / 2)

    def test_ambiguity_invariance_of_likelihood(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        state.phi_hat = 0.08
        state.theta_hat = np.linspace(0, 0.05, 16)
        base = likelihood_term(problem, state)
        n = np.arange(16)
        for eps in (0.05, -0.05, 0.1, -0.1):
            state2 = problem.initial_state(EstimatorConfig())
            state2.phi_hat = 0.08 - eps
            state2.theta_hat = np.linspace(0, 0.05, 16) + 2 * np.pi * n * eps / 16
            shifted = likelihood_term(problem, state2)
            assert abs(shifted - base) <= 1e-12 * max(1.0, abs(base))


class TestUpdateEta:
    def test_zero_residual_gives_zero(self):
        w = unit_w()
        y = synthesize_received(TRUTH, w, 0.0, PhaseNoisePath.zero(16), PILOTS,
                                CFG, rng_seed=None)
        problem = EstimationProblem(y, w, CFG, PILOTS)
        state = problem.initial_state(EstimatorConfig(init_position=TRUTH))
        eta = update_eta(problem, state)
        assert np.abs(eta).max() < 1e-12

    def test_ridge_limit_large_noise(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        problem.sigma2 = 1e12
        eta = update_eta(problem, state)
        assert np.abs(eta).max() < 1e-6

    def test_matches_independent_ridge_solver(self):
        # oracle: stacked real/imag least squares with ridge augmentation
        cfg = ScenarioConfig.default(n_ris=16, n_subcarriers=8, pn_subspace_dim=4,
                                     tx_power_dbm=-10.0)
        pilots = PilotSequence.qpsk(8)
        w = unit_w(1, 16)
        cov = build_pn_covariance(8, cfg.pn_increment_var)
        theta = sample_phase_noise(cov, 11)
        y = synthesize_received(TRUTH, w, 0.05, theta, pilots, cfg, rng_seed=5)
        problem = EstimationProblem(y, w, cfg, pilots)
        state = problem.initial_state(EstimatorConfig())
        ws = build_workspace(problem, state)
        eta = update_eta(problem, state, ws)

        a = np.vstack([np.real(ws.q_matrix), np.imag(ws.q_matrix)])
        b = np.concatenate([np.real(ws.y_bar), np.imag(ws.y_bar)])
        ridge = np.sqrt(problem.sigma2 / 2.0)
        a_aug = np.vstack([a, ridge * np.eye(4)])
        b_aug = np.concatenate([b, np.zeros(4)])
        oracle, *_ = np.linalg.lstsq(a_aug, b_aug, rcond=None)
        assert np.allclose(eta, oracle, rtol=1e-8, atol=1e-12)

    def test_normal_equation_residual(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        ws = build_workspace(problem, state)
        eta = update_eta(problem, state, ws)
        q = ws.q_matrix
        grad = (np.real(q.conj().T @ q) @ eta + 0.5 * problem.sigma2 * eta
                - np.real(q.conj().T @ ws.y_bar))
        assert np.linalg.norm(grad) < 1e-8 * np.linalg.norm(np.real(q.conj().T @ ws.y_bar))


class TestUpdateCfo:
    def test_stationary_on_consistent_data(self):
        w = unit_w()
        phi0 = 0.07
        y = synthesize_received(TRUTH, w, phi0, PhaseNoisePath.zero(16), PILOTS,
                                CFG, rng_seed=None)
        problem = EstimationProblem(y, w, CFG, PILOTS)
        state = problem.initial_state(EstimatorConfig(init_position=TRUTH,
                                                      init_phi=phi0))
        new_phi = update_cfo(problem, state)
        assert new_phi == pytest.approx(phi0, abs=1e-12)

    def test_first_order_recovery(self):
        w = unit_w()
        delta = 1e-4
        phi_true = 0.05 + delta
        y = synthesize_received(TRUTH, w, phi_true, PhaseNoisePath.zero(16),
                                PILOTS, CFG, rng_seed=None)
        problem = EstimationProblem(y, w, CFG, PILOTS)
        state = problem.initial_state(EstimatorConfig(init_position=TRUTH,
                                                      init_phi=0.05))
        new_phi = update_cfo(problem, state)
        assert abs(new_phi - phi_true) < 1e-2 * delta

    def test_increment_real(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        assert isinstance(update_cfo(problem, state), float)

    def test_zero_signal_error(self):
        from risloc.estimator import EstimationError

        problem, _ = make_problem(w_seed=0)
        problem.w = np.zeros(16, dtype=complex)
        state = problem.initial_state(EstimatorConfig())
        with pytest.raises(EstimationError):
            update_cfo(problem, state)


class TestPositionStep:
    def test_gradient_matches_finite_differences(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        state.phi_hat = 0.03
        state.eta_hat = 0.1 * np.ones(8)
        state.theta_hat = problem.subspace.projection @ state.eta_hat
        grad, _ = position_gradient(problem, state)
        eps = 1e-6
        for axis in range(3):
            d = np.zeros(3)
            d[axis] = eps
            sp = problem.initial_state(EstimatorConfig())
            sp.phi_hat, sp.eta_hat, sp.theta_hat = (state.phi_hat, state.eta_hat,
                                                    state.theta_hat)
            sp.position_hat = PolarPosition(*(state.position_hat.as_array() + d))
            up = objective_value(problem, sp)
            sp.position_hat = PolarPosition(*(state.position_hat.as_array() - d))
            down = objective_value(problem, sp)
            fd = (up - down) / (2 * eps)
            assert abs(grad[axis] - fd) <= 1e-4 * max(abs(fd), 1.0)

    def test_zero_gradient_at_truth(self):
        cfg = CFG.with_overrides(tx_power_dbm=-20.0)
        w = unit_w()
        y = synthesize_received(TRUTH, w, 0.04, PhaseNoisePath.zero(16), PILOTS,
                                cfg, rng_seed=None)
        problem = EstimationProblem(y, w, cfg, PILOTS)
        state = problem.initial_state(EstimatorConfig(init_position=TRUTH,
                                                      init_phi=0.04))
        grad, _ = position_gradient(problem, state)
        assert np.abs(grad).max() < 1e-8

    def test_zero_step_keeps_position(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        pos = position_gd_step(problem, state, k_p=0.0)
        assert np.allclose(pos.as_array(), state.position_hat.as_array())

    def test_range_floor_clamp(self):
        problem, _ = make_problem()
        state = problem.initial_state(EstimatorConfig())
        state.position_hat = PolarPosition(1.2e-3, 0.5, 1.2)
        pos = position_gd_step(problem, state, k_p=1e3)
        assert pos.d_ru >= 1e-3


class TestRunJointEstimation:
    def test_fixed_point_noise_free(self):
        w = unit_w()
        y = synthesize_received(TRUTH, w, 0.03, PhaseNoisePath.zero(16), PILOTS,
                                CFG, rng_seed=None)
        est = EstimatorConfig(init_position=TRUTH, init_phi=0.03)
        st = run_joint_estimation(y, w, CFG, est, PILOTS)
        assert st.converged
        assert st.outer_iters == 1
        err = np.linalg.norm(st.position_cartesian().as_array() - TRUTH.as_array())
        assert err < 1e-9

    def test_deterministic(self):
        problem, theta = make_problem()
        st1 = run_joint_estimation(problem.y, problem.w, CFG, pilots=PILOTS)
        st2 = run_joint_estimation(problem.y, problem.w, CFG, pilots=PILOTS)
        assert st1.phi_hat == st2.phi_hat
        assert np.array_equal(st1.eta_hat, st2.eta_hat)
        assert st1.position_hat == st2.position_hat
        assert st1.objective == st2.objective

    def test_state_coherence(self):
        problem, _ = make_problem()
        st = run_joint_estimation(problem.y, problem.w, CFG, pilots=PILOTS)
        assert np.allclose(st.theta_hat, problem.subspace.projection @ st.eta_hat)

    def test_monotone_objective_with_backtracking(self):
        problem, _ = make_problem(noise_seed=19)
        st = run_joint_estimation(problem.y, problem.w, CFG, pilots=PILOTS,
                                  record_trace=True)
        objs = [row[2] for row in st.trace]
        diffs = np.diff(objs)
        assert np.all(diffs <= 1e-9 * np.maximum(1.0, np.abs(objs[:-1])))

    def test_non_convergence_flagged(self):
        problem, _ = make_problem()
        est = EstimatorConfig(max_outer=1, eps_outer=1e-300)
        st = run_joint_estimation(problem.y, problem.w, CFG, est, PILOTS)
        assert not st.converged
        assert st.outer_iters == 1

    def test_trace_schema(self):
        problem, _ = make_problem()
        st = run_joint_estimation(problem.y, problem.w, CFG, pilots=PILOTS,
                                  truth=TRUTH, record_trace=True)
        assert len(st.trace) >= st.inner_iters
        outer_ids = sorted({row[0] for row in st.trace if row[0] > 0})
        assert outer_ids == list(range(1, st.outer_iters + 1))
        # stage-0 initialization rows are labeled with outer id 0
        assert any(row[0] == 0 for row in st.trace)
        assert all(len(row) == 8 for row in st.trace)


class TestMetrics:
    def test_rmse_zero(self):
        t = Position3(1, 2, 3)
        assert rmse_position([t, t, t], t) == 0.0

    def test_rmse_pythagoras(self):
        t = Position3(0, 0, 0)
        assert rmse_position([Position3(3, 4, 0)], t) == pytest.approx(5.0)

    def test_rmse_two_sided(self):
        t = Position3(1, 1, 1)
        ests = [Position3(2, 1, 1), Position3(0, 1, 1)]
        assert rmse_position(ests, t) == pytest.approx(1.0)

    def test_rmse_empty(self):
        with pytest.raises(ValueError):
            rmse_position([], Position3(0, 0, 1))

    def test_joint_mse_exact(self):
        theta = np.array([0.1, -0.2, 0.3, 0.0])
        assert joint_cfo_pn_mse(0.07, theta, 0.07, theta) == 0.0

    def test_joint_mse_hand_case(self):
        assert joint_cfo_pn_mse(0.0, [0.0, 1.0], 0.0, [0.0, 0.0]) == pytest.approx(1.0)

    def test_joint_mse_ambiguity_invariant(self):
        rng = np.random.default_rng(2)
        n = 16
        theta = rng.normal(0, 0.1, n)
        phi = 0.12
        for eps in np.linspace(-0.1, 0.1, 7):
            shifted_phi = phi - eps
            shifted_theta = theta + 2 * np.pi * np.arange(n) * eps / n
            assert joint_cfo_pn_mse(phi, theta, shifted_phi, shifted_theta) < 1e-24

    def test_joint_mse_length_mismatch(self):
        with pytest.raises(ValueError):
            joint_cfo_pn_mse(0.0, [0.0, 1.0], 0.0, [0.0])
