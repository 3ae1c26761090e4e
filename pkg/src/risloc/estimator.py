"""Joint MAP estimation of CFO, truncated phase noise, and user position.

The estimator alternates closed-form updates with gradient descent:

* truncated phase-noise coefficients from a ridge-regularized
  linearization around the current CFO/channel estimate,
* CFO from a first-order Taylor step with an exact stationary point on
  consistent data,
* the three polar position coordinates by diagonally preconditioned
  gradient descent until the objective decrease falls below the inner
  threshold,

and repeats until the outer objective decrease falls below the outer
threshold. When backtracking is enabled every accepted update is
guaranteed not to increase the exact (non-linearized) objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    PolarPosition,
    Position3,
    ScenarioConfig,
    cartesian_to_polar,
    polar_to_cartesian,
)
from .signal import (
    PilotSequence,
    PnCovariance,
    ReceivedSignal,
    build_pn_covariance,
    build_signal_matrix,
    cfo_phase_ramp,
    channel_and_gradients,
    channel_vector,
)

__all__ = [
    "EstimationError",
    "PnSubspace",
    "EstimatorConfig",
    "EstimatorState",
    "EstimatorWorkspace",
    "EstimationProblem",
    "build_pn_subspace",
    "build_workspace",
    "objective_value",
    "likelihood_term",
    "update_eta",
    "update_cfo",
    "position_gradient",
    "position_gd_step",
    "run_joint_estimation",
    "rmse_position",
    "joint_cfo_pn_mse",
]

_D_RU_FLOOR = 1e-3  # meters; positivity floor for the range coordinate
_EL_MARGIN = 1e-6


class EstimationError(RuntimeError):
    """Raised when an update is structurally impossible (e.g. zero signal)."""


@dataclass(frozen=True)
class PnSubspace:
    """Low-rank factor of the phase-noise covariance.

    ``projection`` holds the dominant eigenvectors scaled by the square
    roots of their eigenvalues, so projection @ projection.T approximates
    the covariance and the reduced coefficients have a unit Gaussian prior.
    ``eigenvalues`` keeps all N eigenvalues in descending order.
    """

    projection: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.projection.shape[0]

    @property
    def dim(self) -> int:
        return self.projection.shape[1]


def build_pn_subspace(cov: PnCovariance, subspace_dim: int) -> PnSubspace:
    if not 1 <= subspace_dim <= cov.n:
        raise ValueError(f"subspace dim {subspace_dim} outside [1, {cov.n}]")
    evals, evecs = np.linalg.eigh(cov.matrix)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    lead = np.sqrt(np.maximum(evals[:subspace_dim], 0.0))
    return PnSubspace(evecs[:, :subspace_dim] * lead[np.newaxis, :], evals)


@dataclass
class EstimatorConfig:
    """Algorithm knobs.

    Thresholds default to 1e-6*N (inner) and 1e-5*N (outer) on the
    noise-normalized objective. The step length applies to a metric-
    preconditioned gradient, so the default 1e-3 corresponds to a full
    quasi-Newton step on the polar position block.

    Two optional devices tame the slow alternation between position and
    phase-noise estimates without touching the update formulas:
    ``staged_init`` first fits CFO and position with the PN coefficients
    pinned at zero (a plain initialization choice), and ``accelerate``
    extrapolates the full state along its per-round displacement with a
    doubling search. Both only ever accept a move that lowers the exact
    objective, so monotonicity is unaffected.
    """

    step_length: float = 1e-3
    eps_inner: float | None = None
    eps_outer: float | None = None
    max_inner: int = 2000
    max_outer: int = 40
    init_position: Position3 | None = None
    init_phi: float = 0.0
    backtracking: bool = True
    max_halvings: int = 50
    accelerate: bool = True
    max_extrapolation_doublings: int = 16
    staged_init: bool = True
    stage0_rounds: int = 12

    def resolved_eps(self, n_subcarriers: int) -> tuple[float, float]:
        ei = self.eps_inner if self.eps_inner is not None else 1e-6 * n_subcarriers
        eo = self.eps_outer if self.eps_outer is not None else 1e-5 * n_subcarriers
        if ei <= 0 or eo <= 0 or self.step_length < 0 or self.max_inner < 1:
            raise ValueError("thresholds must be positive, step length nonnegative")
        return ei, eo


@dataclass
class EstimatorState:
    """Current iterates; theta_hat is kept equal to projection @ eta_hat."""

    phi_hat: float
    eta_hat: np.ndarray
    theta_hat: np.ndarray
    position_hat: PolarPosition
    objective: float = math.inf
    inner_iters: int = 0
    outer_iters: int = 0
    converged: bool = False
    inner_iter_counts: list = field(default_factory=list)
    stage0_rounds_used: int = 0
    stage0_inner_counts: list = field(default_factory=list)
    range_floor_hits: int = 0

    def position_cartesian(self) -> Position3:
        return polar_to_cartesian(self.position_hat)


@dataclass
class EstimatorWorkspace:
    """Per-outer-iteration quantities shared by the closed-form updates."""

    y_bar: np.ndarray     # y - sqrt(P) Lam_phi S^T h
    q_matrix: np.ndarray  # j sqrt(P) Diag(Lam_phi S^T h) Pi
    d_vec: np.ndarray     # sqrt(P) Lam_theta S^T h


class EstimationProblem:
    """Received signal plus everything the update formulas reuse."""

    def __init__(self, y, w, config: ScenarioConfig,
                 pilots: PilotSequence | None = None,
                 subspace: PnSubspace | None = None):
        if isinstance(y, ReceivedSignal):
            y = y.y
        self.y = np.asarray(y, dtype=complex)
        self.w = np.asarray(w, dtype=complex)
        self.config = config
        n = config.n_subcarriers
        if self.y.shape != (n,):
            raise ValueError(f"received vector must have length {n}")
        self.pilots = pilots if pilots is not None else PilotSequence.qpsk(n)
        self.s_t = build_signal_matrix(self.pilots).matrix.T
        # S* S^T, equal to N*I for unit-modulus pilots but kept general
        self.s_conj_s_t = np.conj(self.s_t.T) @ self.s_t
        if subspace is None:
            cov = build_pn_covariance(n, config.pn_increment_var)
            subspace = build_pn_subspace(cov, config.pn_subspace_dim)
        self.subspace = subspace
        self.sigma2 = config.noise_power_w
        self.p_lin = config.tx_power_w
        self.sqrt_p = math.sqrt(self.p_lin)
        self.n = n
        self.omega = 2.0 * np.pi * np.arange(n) / n

    def channel(self, polar: PolarPosition) -> np.ndarray:
        return channel_vector(polar, self.w, self.config, check_fresnel=False).h

    def pilot_time_product(self, polar: PolarPosition) -> np.ndarray:
        """S^T h at the given position."""
        return self.s_t @ self.channel(polar)

    def mean_signal(self, state: EstimatorState, st_h: np.ndarray | None = None):
        if st_h is None:
            st_h = self.pilot_time_product(state.position_hat)
        ramp = cfo_phase_ramp(state.phi_hat, self.n)
        return self.sqrt_p * ramp * np.exp(1j * state.theta_hat) * st_h

    def initial_state(self, est_config: EstimatorConfig) -> EstimatorState:
        init_pos = est_config.init_position or self.config.aoi_center
        state = EstimatorState(
            phi_hat=float(est_config.init_phi),
            eta_hat=np.zeros(self.subspace.dim),
            theta_hat=np.zeros(self.n),
            position_hat=cartesian_to_polar(init_pos),
        )
        state.objective = objective_value(self, state)
        return state


def likelihood_term(problem: EstimationProblem, state: EstimatorState,
                    st_h: np.ndarray | None = None) -> float:
    """Noise-normalized residual power (the data part of the objective)."""
    resid = problem.y - problem.mean_signal(state, st_h)
    return float(np.vdot(resid, resid).real) / problem.sigma2


def objective_value(problem: EstimationProblem, state: EstimatorState,
                    st_h: np.ndarray | None = None) -> float:
    """Exact MAP objective: likelihood term plus the PN coefficient prior."""
    return likelihood_term(problem, state, st_h) + 0.5 * float(
        state.eta_hat @ state.eta_hat)


def build_workspace(problem: EstimationProblem, state: EstimatorState,
                    st_h: np.ndarray | None = None) -> EstimatorWorkspace:
    if st_h is None:
        st_h = problem.pilot_time_product(state.position_hat)
    ramp = cfo_phase_ramp(state.phi_hat, problem.n)
    v = ramp * st_h
    y_bar = problem.y - problem.sqrt_p * v
    q = 1j * problem.sqrt_p * v[:, np.newaxis] * problem.subspace.projection
    d = problem.sqrt_p * np.exp(1j * state.theta_hat) * st_h
    return EstimatorWorkspace(y_bar, q, d)


def update_eta(problem: EstimationProblem, state: EstimatorState,
               workspace: EstimatorWorkspace | None = None) -> np.ndarray:
    """Ridge-closed-form PN coefficients of the linearized objective."""
    ws = workspace or build_workspace(problem, state)
    q = ws.q_matrix
    normal = np.real(q.conj().T @ q) + 0.5 * problem.sigma2 * np.eye(problem.subspace.dim)
    rhs = np.real(q.conj().T @ ws.y_bar)
    try:
        return np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - sigma2 > 0 forbids this
        raise EstimationError("singular PN normal matrix") from exc


def update_cfo(problem: EstimationProblem, state: EstimatorState,
               workspace: EstimatorWorkspace | None = None) -> float:
    """One Taylor step on the CFO; exact stationary point on consistent data."""
    d = (workspace or build_workspace(problem, state)).d_vec
    ramp = cfo_phase_ramp(state.phi_hat, problem.n)
    tilted = 1j * problem.omega * ramp * d
    denom = float(np.vdot(tilted, tilted).real)
    if denom == 0.0:
        raise EstimationError("signal absent: CFO update undefined")
    increment = float(np.vdot(problem.y - ramp * d, tilted).real) / denom
    return state.phi_hat + increment


def position_gradient(problem: EstimationProblem, state: EstimatorState):
    """Objective gradient in (d_Ru, phi_az, phi_el) with a curvature metric.

    Returns (gradient[3], metric[3, 3]). The metric is the Fisher block of
    the position coordinates, (2 P N / sigma^2) Re(dh dh^H), regularized to
    stay invertible; preconditioning with it removes the severe
    range/angle anisotropy of the near-field likelihood.
    """
    h, dh = channel_and_gradients(state.position_hat, problem.w, problem.config)
    lam = cfo_phase_ramp(state.phi_hat, problem.n) * np.exp(1j * state.theta_hat)
    row = (problem.p_lin * (np.conj(h) @ problem.s_conj_s_t)
           - problem.sqrt_p * ((np.conj(problem.y) * lam) @ problem.s_t))
    grad = (2.0 / problem.sigma2) * np.real(dh @ row)
    metric = (2.0 * problem.p_lin * problem.n / problem.sigma2) * np.real(
        np.conj(dh) @ dh.T)
    reg = max(float(np.trace(metric)), 1e-300) * 1e-9
    metric = metric + reg * np.eye(3)
    return grad, metric


def _precondition_step(grad: np.ndarray, metric: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(metric, grad)
    except np.linalg.LinAlgError:
        return grad / np.maximum(np.diag(metric), 1e-300)


def _wrap_position(d_ru, phi_az, phi_el):
    """Clamp/wrap raw coordinates into a valid PolarPosition."""
    hits = 0
    if d_ru < _D_RU_FLOOR:
        d_ru = _D_RU_FLOOR
        hits = 1
    phi_az = (phi_az + np.pi) % (2.0 * np.pi) - np.pi
    if phi_az <= -np.pi:
        phi_az = np.pi
    phi_el = min(max(phi_el, _EL_MARGIN), np.pi - _EL_MARGIN)
    return PolarPosition(float(d_ru), float(phi_az), float(phi_el)), hits


def position_gd_step(problem: EstimationProblem, state: EstimatorState,
                     k_p: float = 1e-3) -> PolarPosition:
    """One simultaneous descent step on all three polar coordinates.

    A step that would push the range nonpositive is clamped to a small
    floor and counted on the state.
    """
    grad, metric = position_gradient(problem, state)
    delta = (k_p / 1e-3) * _precondition_step(grad, metric)
    pos, hits = _wrap_position(
        state.position_hat.d_ru - delta[0],
        state.position_hat.phi_az - delta[1],
        state.position_hat.phi_el - delta[2],
    )
    state.range_floor_hits += hits
    return pos


def _guarded_update(problem, state, apply_fn, old_value, new_value, max_halvings):
    """Set a component to old + t (new - old), halving t until the exact
    objective does not increase; keeps the old value if nothing helps."""
    base = state.objective
    tol = base + 1e-12 * max(1.0, abs(base))
    t = 1.0
    for _ in range(max_halvings):
        apply_fn(state, old_value + t * (new_value - old_value))
        cand = objective_value(problem, state)
        if cand <= tol:
            state.objective = cand
            return
        t *= 0.5
    apply_fn(state, old_value)
    state.objective = base


def run_joint_estimation(y, w, config: ScenarioConfig,
                         est_config: EstimatorConfig | None = None,
                         pilots: PilotSequence | None = None,
                         truth: Position3 | None = None,
                         record_trace: bool = False) -> EstimatorState:
    """Full alternating estimation loop.

    Returns the final state; ``state.converged`` is False when the outer
    iteration cap was hit first. With ``record_trace`` the state gains a
    ``trace`` list with one row per inner iteration:
    (outer, inner, objective, phi_hat, d_ru, phi_az, phi_el[, pos_error]).
    """
    est = est_config or EstimatorConfig()
    eps_inner, eps_outer = est.resolved_eps(config.n_subcarriers)
    problem = EstimationProblem(y, w, config, pilots)
    state = problem.initial_state(est)
    trace: list = []
    truth_xyz = truth.as_array() if truth is not None else None

    def trace_row(outer, inner):
        if not record_trace:
            return
        row = [outer, inner, state.objective, state.phi_hat,
               state.position_hat.d_ru, state.position_hat.phi_az,
               state.position_hat.phi_el]
        if truth_xyz is not None:
            err = np.linalg.norm(state.position_cartesian().as_array() - truth_xyz)
            row.append(float(err))
        trace.append(tuple(row))

    projection = problem.subspace.projection
    subspace_dim = problem.subspace.dim

    def set_eta(st, value):
        st.eta_hat = np.asarray(value, dtype=float)
        st.theta_hat = projection @ st.eta_hat

    def set_phi(st, value):
        st.phi_hat = float(value)

    def snapshot():
        return np.concatenate([[state.phi_hat], state.eta_hat,
                               state.position_hat.as_array()])

    def apply_snapshot(vec):
        state.phi_hat = float(vec[0])
        state.eta_hat = np.asarray(vec[1:1 + subspace_dim], dtype=float)
        state.theta_hat = projection @ state.eta_hat
        state.position_hat, _ = _wrap_position(*vec[1 + subspace_dim:])

    def try_extrapolation(prev_snap, prev_delta):
        """Move along the recent per-round displacement of the full state,
        doubling the step while the exact objective keeps dropping."""
        snap = snapshot()
        if prev_snap is None:
            return snap, None
        delta = snap - prev_snap
        norm = float(np.linalg.norm(delta))
        if prev_delta is None or norm < 1e-15:
            return snap, delta
        rho = min(norm / max(float(np.linalg.norm(prev_delta)), 1e-300), 0.98)
        gamma = rho / (1.0 - rho)
        base_obj = state.objective
        best_obj = base_obj
        best_vec = None
        for _ in range(est.max_extrapolation_doublings):
            apply_snapshot(snap + gamma * delta)
            obj = objective_value(problem, state)
            if obj <= best_obj:
                best_obj, best_vec = obj, snap + gamma * delta
                gamma *= 2.0
            else:
                break
        if best_vec is None:
            apply_snapshot(snap)
            state.objective = base_obj
        else:
            apply_snapshot(best_vec)
            state.objective = best_obj
        return snapshot(), delta

    step = est.step_length / 1e-3
    step_mem = [1.0]

    def inner_gd(outer_label, count_list):
        """Descend on position with phases frozen until the decrease stalls."""
        lam = cfo_phase_ramp(state.phi_hat, problem.n) * np.exp(1j * state.theta_hat)
        mu_map = problem.sqrt_p * lam[:, np.newaxis] * problem.s_t
        prior = 0.5 * float(state.eta_hat @ state.eta_hat)
        inner_count = 0
        for inner in range(1, est.max_inner + 1):
            grad, metric = position_gradient(problem, state)
            delta = step * _precondition_step(grad, metric)
            t = min(1.0, 2.0 * step_mem[0]) if est.backtracking else 1.0
            base = state.objective
            tol = base + 1e-12 * max(1.0, abs(base))
            cur = state.position_hat
            accepted = None
            for _ in range(est.max_halvings):
                cand, hits = _wrap_position(cur.d_ru - t * delta[0],
                                            cur.phi_az - t * delta[1],
                                            cur.phi_el - t * delta[2])
                resid = problem.y - mu_map @ problem.channel(cand)
                obj = float(np.vdot(resid, resid).real) / problem.sigma2 + prior
                if obj <= tol or not est.backtracking:
                    accepted = (cand, obj, hits)
                    break
                t *= 0.5
            if accepted is None:
                break  # no descent even at the smallest step
            state.position_hat, state.objective, hits = accepted
            state.range_floor_hits += hits
            step_mem[0] = t
            inner_count = inner
            state.inner_iters += 1
            trace_row(outer_label, inner)
            if base - state.objective <= eps_inner:
                break
        count_list.append(inner_count)

    # stage 0: fit CFO and position with the PN coefficients pinned at zero,
    # which sidesteps the early absorption of position error into the
    # flexible phase-noise estimate (initialization choice)
    if est.staged_init and est.stage0_rounds > 0:
        prev = state.objective
        for r in range(1, est.stage0_rounds + 1):
            state.stage0_rounds_used = r
            ws = build_workspace(problem, state)
            phi_new = update_cfo(problem, state, ws)
            if est.backtracking:
                _guarded_update(problem, state, set_phi, state.phi_hat,
                                phi_new, est.max_halvings)
            else:
                set_phi(state, phi_new)
                state.objective = objective_value(problem, state)
            trace_row(0, 0)
            inner_gd(0, state.stage0_inner_counts)
            if prev - state.objective <= eps_outer:
                break
            prev = state.objective

    prev_outer_objective = state.objective
    prev_snap = None
    prev_delta = None

    for outer in range(1, est.max_outer + 1):
        state.outer_iters = outer
        if est.accelerate:
            prev_snap, prev_delta = try_extrapolation(prev_snap, prev_delta)
        ws = build_workspace(problem, state)

        eta_new = update_eta(problem, state, ws)
        if est.backtracking:
            _guarded_update(problem, state, set_eta,
                            state.eta_hat.copy(), eta_new, est.max_halvings)
        else:
            set_eta(state, eta_new)
            state.objective = objective_value(problem, state)

        ws = build_workspace(problem, state)  # d_vec depends on the new theta
        phi_new = update_cfo(problem, state, ws)
        if est.backtracking:
            _guarded_update(problem, state, set_phi, state.phi_hat, phi_new,
                            est.max_halvings)
        else:
            set_phi(state, phi_new)
            state.objective = objective_value(problem, state)

        trace_row(outer, 0)
        inner_gd(outer, state.inner_iter_counts)

        if prev_outer_objective - state.objective <= eps_outer:
            state.converged = True
            break
        prev_outer_objective = state.objective

    if record_trace:
        state.trace = trace
    return state


def rmse_position(estimates, truth: Position3) -> float:
    """Root mean squared Euclidean position error over Monte Carlo trials."""
    if len(estimates) == 0:
        raise ValueError("rmse over an empty estimate list is undefined")
    t = truth.as_array()
    sq = [float(np.sum((_as_xyz_arr(e) - t) ** 2)) for e in estimates]
    return math.sqrt(sum(sq) / len(sq))


def _as_xyz_arr(p) -> np.ndarray:
    if isinstance(p, Position3):
        return p.as_array()
    return np.asarray(p, dtype=float)


def joint_cfo_pn_mse(phi: float, theta, phi_hat: float, theta_hat) -> float:
    """Squared error of the combined phase trajectory, first entry removed.

    The combination gamma[n] = theta[n] + 2 pi n phi / N is invariant to the
    common-rotation ambiguity between CFO and PN once gamma[0] is subtracted,
    so this measures what the data can actually identify.
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.shape != theta_hat.shape:
        raise ValueError("true and estimated PN paths differ in length")
    n = theta.size
    ramp = 2.0 * np.pi * np.arange(n) / n
    gamma = theta + ramp * phi
    gamma_hat = theta_hat + ramp * phi_hat
    diff = (gamma - gamma[0]) - (gamma_hat - gamma_hat[0])
    return float(diff @ diff)
