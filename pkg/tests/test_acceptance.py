"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete. The phase-shift designs are computed once per
session and shared across criteria.
"""

import numpy as np
import pytest

from risloc.estimator import (
    EstimationProblem,
    EstimatorConfig,
    build_workspace,
    joint_cfo_pn_mse,
    likelihood_term,
    run_joint_estimation,
    update_cfo,
    update_eta,
)
from risloc.geometry import Position3, ScenarioConfig, cartesian_to_polar
from risloc.harness import peb_heatmap
from risloc.hcrlb import fim, mu_jacobian, peb, prior_information, w_linear_fim
from risloc.ris_opt import (
    assemble_sdr,
    average_peb,
    optimize_phase_shifts,
    random_phase_shifts,
    sample_aoi,
)
from risloc import sdp
from risloc.signal import (
    PhaseNoisePath,
    PilotSequence,
    build_pn_covariance,
    build_signal_matrix,
    sample_phase_noise,
    synthesize_received,
)

FIXED_TEST_POSITION = Position3(1.50, 2.15, 0.45)


def _report(index, name, ok, detail):
    print(f"\nACCEPTANCE {index} [{name}]: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def w_opt_81():
    cfg = ScenarioConfig.default(n_ris=81, tx_power_dbm=-20.0)
    sol = optimize_phase_shifts(cfg, n_samples=10, seed=1, tol=1e-4,
                                max_iter=2500, n_randomization=50)
    return sol


@pytest.fixture(scope="session")
def w_opt_121():
    cfg = ScenarioConfig.default(n_ris=121, tx_power_dbm=-10.0)
    sol = optimize_phase_shifts(cfg, n_samples=16, seed=2, tol=1e-4,
                                max_iter=2500, n_randomization=300)
    return sol


@pytest.fixture(scope="session")
def w_opt_49():
    cfg = ScenarioConfig.default(n_ris=49, tx_power_dbm=-10.0)
    sol = optimize_phase_shifts(cfg, n_samples=16, seed=2, tol=1e-4,
                                max_iter=2500, n_randomization=100)
    return sol


def _trial(cfg, w, pilots, cov, seed_parts, truth, est_config=None):
    rng = np.random.default_rng(seed_parts)
    phi = float(rng.uniform(-0.15, 0.15))
    theta = sample_phase_noise(cov, rng.integers(2**31))
    y = synthesize_received(truth, w, phi, theta, pilots, cfg,
                            rng_seed=rng.integers(2**31))
    state = run_joint_estimation(y, w, cfg, est_config, pilots)
    err = float(np.linalg.norm(
        state.position_cartesian().as_array() - truth.as_array()))
    mse = joint_cfo_pn_mse(phi, theta.theta, state.phi_hat, state.theta_hat)
    return err, mse, state


def test_criterion_1_ris_optimization_gain(w_opt_81):
    cfg = ScenarioConfig.default(n_ris=81, tx_power_dbm=-20.0)
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    rows = peb_heatmap(cfg, w_opt_81.extracted.w, resolution=9, margin=0.0)
    opt_avg = float(np.nanmean([r[4] for r in rows]))
    rand_avgs = []
    for s in range(5):
        wr = random_phase_shifts(81, s).w
        rows_r = peb_heatmap(cfg, wr, resolution=9, margin=0.0)
        rand_avgs.append(float(np.nanmean([r[4] for r in rows_r])))
    ratio = float(np.median(rand_avgs)) / opt_avg
    # focusing property, logged not asserted: interior minimum vs corners
    vals = np.array([r[4] for r in rows]).reshape(9, 9)
    corners = [vals[0, 0], vals[0, -1], vals[-1, 0], vals[-1, -1]]
    ok = ratio >= 50.0
    _report(1, "RIS optimization gain", ok,
            f"avg PEB optimized {opt_avg:.4f} m vs random median "
            f"{np.median(rand_avgs):.3f} m, ratio {ratio:.1f}x "
            f"(pass >= 50x, target 100x, hard gate 10x); "
            f"solver {w_opt_81.report.status} in "
            f"{w_opt_81.report.solve_time:.0f}s; focusing: AOI minimum "
            f"{vals.min():.4f} m vs corner PEBs {np.round(corners, 4).tolist()}")
    assert ratio >= 10.0, "hard gate"
    assert ok


def test_criterion_2_positioning_accuracy(w_opt_121):
    cfg = ScenarioConfig.default(n_ris=121, tx_power_dbm=-10.0)
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
    w = w_opt_121.extracted.w
    errs = []
    for m in range(100):
        err, _, _ = _trial(cfg, w, pilots, cov, [2024, 2, m],
                           FIXED_TEST_POSITION)
        errs.append(err)
    rmse = float(np.sqrt(np.mean(np.square(errs))))
    bound = peb(cartesian_to_polar(FIXED_TEST_POSITION), w, cfg, pilots).peb
    ok = rmse <= 3e-2
    _report(2, "positioning accuracy", ok,
            f"RMSE {rmse:.4f} m over 100 trials at the fixed test position "
            f"(<= 3e-2 required, <= 1e-2 stretch {'met' if rmse <= 1e-2 else 'not met'}; "
            f"PEB there {bound:.4f} m)")
    assert ok


def test_criterion_3_convergence_envelope(w_opt_81):
    cfg = ScenarioConfig.default(n_ris=81, tx_power_dbm=-10.0)
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
    w = w_opt_81.extracted.w
    good = 0
    worst_outer, worst_inner = 0, 0
    for m in range(50):
        _, _, state = _trial(cfg, w, pilots, cov, [2024, 3, m],
                             FIXED_TEST_POSITION)
        # count initialization rounds against the same envelope
        rounds = state.outer_iters + state.stage0_rounds_used
        inner_max = max(state.inner_iter_counts + state.stage0_inner_counts)
        worst_outer = max(worst_outer, rounds)
        worst_inner = max(worst_inner, inner_max)
        if state.converged and rounds <= 40 and inner_max <= 2000:
            good += 1
    ok = good >= 45
    _report(3, "convergence envelope", ok,
            f"{good}/50 trials converged within 40 outer / 2000 inner "
            f"iterations (worst outer {worst_outer}, worst inner {worst_inner})")
    assert ok


def test_criterion_4_monotone_trends(w_opt_121, w_opt_49):
    powers = [-30.0, -20.0, -10.0, 0.0]
    pilots = PilotSequence.qpsk(32)
    results = {}
    for n_ris, w in ((49, w_opt_49.extracted.w), (121, w_opt_121.extracted.w)):
        med_rmse, med_mse = [], []
        for pi, p in enumerate(powers):
            cfg = ScenarioConfig.default(n_ris=n_ris, tx_power_dbm=p)
            cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
            errs, mses = [], []
            for m in range(50):
                err, mse, _ = _trial(cfg, w, pilots, cov, [2024, 4, n_ris, pi, m],
                                     FIXED_TEST_POSITION)
                errs.append(err)
                mses.append(mse)
            med_rmse.append(float(np.median(errs)))
            med_mse.append(float(np.median(mses)))
        results[n_ris] = (np.array(med_rmse), np.array(med_mse))

    def monotone(vals):
        # non-increasing in power, allowing one inversion of at most 10%
        increases = [(vals[i + 1] - vals[i]) / vals[i]
                     for i in range(len(vals) - 1) if vals[i + 1] > vals[i]]
        return len(increases) <= 1 and all(r <= 0.10 for r in increases)

    ok_mono = all(monotone(results[n][k]) for n in (49, 121) for k in (0, 1))
    ok_dom = (np.all(results[121][0] <= results[49][0])
              and np.all(results[121][1] <= results[49][1]))
    ok = ok_mono and ok_dom
    _report(4, "monotone trends", ok,
            f"median RMSE 49: {np.round(results[49][0], 4).tolist()}, "
            f"121: {np.round(results[121][0], 4).tolist()}; "
            f"median joint MSE 49: {np.round(results[49][1], 4).tolist()}, "
            f"121: {np.round(results[121][1], 4).tolist()} "
            f"(monotone={ok_mono}, 121 dominates 49={ok_dom})")
    assert ok


def test_criterion_5_fim_correctness():
    cfg = ScenarioConfig.default()
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    n = cfg.n_subcarriers
    rng = np.random.default_rng(55)
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.ris.n_elements))
    eps = 1e-6
    worst = 0.0

    def mu_of(polar, phi, theta):
        return synthesize_received(polar, w, phi, PhaseNoisePath(theta), pilots,
                                   cfg, rng_seed=None).y

    for _ in range(10):
        xyz = cfg.aoi_center.as_array() + rng.uniform(-0.5, 0.5, 3)
        polar = cartesian_to_polar(Position3(*xyz))
        phi = float(rng.uniform(-0.15, 0.15))
        theta = rng.normal(0, 0.05, n)
        jac = mu_jacobian(polar, w, phi, theta, cfg, pilots).matrix
        cols = {0: None}
        fd_pairs = []
        fd = (mu_of(polar, phi + eps, theta) - mu_of(polar, phi - eps, theta)) / (2 * eps)
        fd_pairs.append((jac[:, 0], fd))
        for k in range(n):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += eps
            tm[k] -= eps
            fd = (mu_of(polar, phi, tp) - mu_of(polar, phi, tm)) / (2 * eps)
            fd_pairs.append((jac[:, 1 + k], fd))
        base = polar.as_array()
        from risloc.geometry import PolarPosition

        for axis in range(3):
            d = np.zeros(3)
            d[axis] = eps
            fd = (mu_of(PolarPosition(*(base + d)), phi, theta)
                  - mu_of(PolarPosition(*(base - d)), phi, theta)) / (2 * eps)
            fd_pairs.append((jac[:, n + 1 + axis], fd))
        for col, fd in fd_pairs:
            worst = max(worst, float(np.abs(col - fd).max()
                                     / max(np.abs(fd).max(), 1e-300)))

    f0 = fim(mu_jacobian(polar, w, 0.0, np.zeros(n), cfg, pilots),
             cfg.noise_power_w)
    f1 = fim(mu_jacobian(polar, w, 0.12, rng.normal(0, 0.2, n), cfg, pilots),
             cfg.noise_power_w)
    inv_err = float(np.abs(f1 - f0).max() / np.abs(f0).max())
    ok = worst < 1e-4 and inv_err < 1e-10
    _report(5, "FIM correctness", ok,
            f"worst Jacobian FD relative error {worst:.2e} (< 1e-4), "
            f"FIM phase-point invariance {inv_err:.2e} (< 1e-10)")
    assert ok


def test_criterion_6_w_linear_fim_oracle():
    cfg = ScenarioConfig.default()
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    polar = cartesian_to_polar(Position3(1.9, 2.1, 0.25))
    wl = w_linear_fim(polar, pilots, cfg)
    rng = np.random.default_rng(66)
    worst = 0.0
    for _ in range(5):
        w = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.ris.n_elements))
        direct = fim(mu_jacobian(polar, w, 0.0, np.zeros(cfg.n_subcarriers),
                                 cfg, pilots), cfg.noise_power_w)
        recon = wl.fim_of_vector(w)
        worst = max(worst, float(np.abs(recon - direct).max()
                                 / np.abs(direct).max()))
    ok = worst < 1e-10
    _report(6, "W-linear FIM oracle", ok,
            f"worst reconstruction relative error {worst:.2e} (< 1e-10)")
    assert ok


def test_criterion_7_sdr_vs_brute_force():
    # higher power keeps the 4-element information matrix well conditioned
    cfg = ScenarioConfig.default(n_ris=4, n_subcarriers=4, pn_subspace_dim=4,
                                 tx_power_dbm=10.0)
    pilots = PilotSequence.qpsk(4)
    sample = sample_aoi(cfg, 1, 0)
    polar = cartesian_to_polar(Position3.from_array(sample[0]))
    wl = w_linear_fim(polar, pilots, cfg)
    pn_prior = prior_information(build_pn_covariance(4, cfg.pn_increment_var))
    from risloc.hcrlb import transition_matrix

    xi_t = transition_matrix(polar, 4).matrix[4:, :]

    # exhaustive 16-phase grid over 4 elements, fully vectorized:
    # FIM entries are quadratic forms in conj(w), evaluated per candidate
    phases = 2 * np.pi * np.arange(16) / 16
    grids = np.meshgrid(*([phases] * 4), indexing="ij")
    cand = np.exp(1j * np.stack([g.ravel() for g in grids], axis=1))
    assert cand.shape == (65536, 4)
    w_bar = np.conj(cand)
    n_par = 8
    fims = np.zeros((65536, n_par, n_par))
    scale = 2.0 / cfg.noise_power_w
    for (i, j), m in wl.pairs.items():
        # tr(M W) at W = w_bar w_bar^H equals the quadratic form w_bar^H M w_bar
        val = scale * np.real(np.einsum("ca,ab,cb->c", w_bar.conj(), m, w_bar))
        fims[:, i, j] = val
        fims[:, j, i] = val
    bims = fims + pn_prior[np.newaxis, :, :]
    sol = np.linalg.solve(bims, np.broadcast_to(xi_t.T, (65536, 8, 3)))
    pebs = np.sqrt(np.einsum("ki,cik->c", xi_t, sol))
    best_idx = int(np.argmin(pebs))
    best_peb = float(pebs[best_idx])

    # sanity: the vectorized evaluator agrees with the reference path
    ref = peb(polar, cand[best_idx], cfg, pilots).peb
    assert ref == pytest.approx(best_peb, rel=1e-8)

    sol_sdr = optimize_phase_shifts(cfg, n_samples=1, seed=0, pilots=pilots,
                                    tol=1e-7, max_iter=50_000,
                                    n_randomization=2000)
    ext_peb = float(peb(polar, sol_sdr.extracted.w, cfg, pilots).peb)
    ok = ext_peb <= 1.2 * best_peb
    _report(7, "SDR vs brute force", ok,
            f"extracted PEB {ext_peb:.4f} m vs exhaustive optimum "
            f"{best_peb:.4f} m over 65536 candidates "
            f"(ratio {ext_peb / best_peb:.3f}, must be <= 1.2)")
    assert ok


def test_criterion_8_ambiguity_suite():
    cfg = ScenarioConfig.default()
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    n = cfg.n_subcarriers
    rng = np.random.default_rng(88)
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.ris.n_elements))
    cov = build_pn_covariance(n, cfg.pn_increment_var)
    theta = sample_phase_noise(cov, 5)
    phi = 0.11
    y = synthesize_received(FIXED_TEST_POSITION, w, phi, theta, pilots, cfg,
                            rng_seed=3)
    problem = EstimationProblem(y, w, cfg, pilots)
    est = EstimatorConfig(init_position=FIXED_TEST_POSITION, init_phi=phi)
    state = problem.initial_state(est)
    state.theta_hat = theta.theta.copy()
    base = likelihood_term(problem, state)
    worst = 0.0
    ramp = 2 * np.pi * np.arange(n) / n
    for eps in (0.05, -0.05, 0.1, -0.1):
        shifted = problem.initial_state(est)
        shifted.phi_hat = phi - eps
        shifted.theta_hat = theta.theta + ramp * eps
        val = likelihood_term(problem, shifted)
        worst = max(worst, abs(val - base) / max(abs(base), 1.0))
    mse_worst = max(
        joint_cfo_pn_mse(phi, theta.theta, phi - eps, theta.theta + ramp * eps)
        for eps in (0.05, -0.05, 0.1, -0.1))
    ok = worst <= 1e-12 and mse_worst <= 1e-20
    _report(8, "ambiguity suite", ok,
            f"likelihood shift invariance {worst:.2e} (<= 1e-12), "
            f"joint MSE at shifted exact estimates {mse_worst:.2e}")
    assert ok


def test_criterion_9_closed_form_optimality():
    cfg = ScenarioConfig.default()
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    rng = np.random.default_rng(99)
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.ris.n_elements))
    cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
    theta = sample_phase_noise(cov, 9)
    y = synthesize_received(FIXED_TEST_POSITION, w, 0.08, theta, pilots, cfg,
                            rng_seed=17)
    problem = EstimationProblem(y, w, cfg, pilots)
    state = problem.initial_state(EstimatorConfig())
    ws = build_workspace(problem, state)
    eta = update_eta(problem, state, ws)
    q = ws.q_matrix
    resid = np.linalg.norm(
        np.real(q.conj().T @ q) @ eta + 0.5 * problem.sigma2 * eta
        - np.real(q.conj().T @ ws.y_bar))
    rel = resid / np.linalg.norm(np.real(q.conj().T @ ws.y_bar))

    y0 = synthesize_received(FIXED_TEST_POSITION, w, 0.08,
                             PhaseNoisePath.zero(cfg.n_subcarriers), pilots,
                             cfg, rng_seed=None)
    problem0 = EstimationProblem(y0, w, cfg, pilots)
    st0 = problem0.initial_state(
        EstimatorConfig(init_position=FIXED_TEST_POSITION, init_phi=0.08))
    increment = abs(update_cfo(problem0, st0) - 0.08)
    ok = rel < 1e-8 and increment < 1e-12
    _report(9, "closed-form optimality", ok,
            f"PN normal-equation relative residual {rel:.2e} (< 1e-8), "
            f"CFO increment at consistent data {increment:.2e}")
    assert ok


def test_criterion_10_sdp_solver_contract(w_opt_81):
    # toy minimum-eigenvalue program at 1e-7
    x = sdp.VarBlock("X", 2, "sym")
    c = np.diag([1.0, 2.0])
    toy = sdp.ConeProgram(
        blocks=[x],
        objective={"X": sdp.linear_functional(x, c)},
        equalities=[sdp.Equality({"X": sdp.linear_functional(x, np.eye(2))}, 1.0)],
        psd_constraints=[sdp.PsdConstraint(2, "sym", np.zeros((2, 2)),
                                           {"X": sdp.block_identity_op(x)})],
    )
    asg_toy, rep_toy = sdp.solve(toy, tol=1e-8, max_iter=50_000)
    toy_res = max(sdp.kkt_residuals(toy, asg_toy))

    cfg = ScenarioConfig.default(n_ris=16, n_subcarriers=8, pn_subspace_dim=4,
                                 tx_power_dbm=-20.0)
    pilots = PilotSequence.qpsk(8)
    prob = assemble_sdr(sample_aoi(cfg, 3, 1), pilots, cfg)
    asg, rep = sdp.solve(prob.program, tol=1e-7, max_iter=50_000)
    inst_res = max(sdp.kkt_residuals(prob.program, asg))
    ok = toy_res <= 1e-7 and inst_res <= 1e-7 and rep.status == "optimal"
    _report(10, "SDP solver contract", ok,
            f"toy KKT {toy_res:.2e}, assembled 16-element instance KKT "
            f"{inst_res:.2e} in {rep.iterations} iterations "
            f"({rep.solve_time:.0f}s), both <= 1e-7")
    assert ok
