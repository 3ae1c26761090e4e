"""Hybrid Cramer-Rao bounds for the joint CFO / phase-noise / position problem.

Parameter ordering is fixed everywhere as

    lambda = [phi, theta[0..N-1], d_Ru, phi_az, phi_el]    (N + 4 entries)

The Bayesian information matrix adds the Wiener phase-noise prior curvature
to the Fisher information of the mean signal. The bound is reported for the
transformed parameters [gamma_underline, x_u, y_u, z_u] where
gamma[n] = theta[n] + 2 pi n phi / N with gamma[0] subtracted, which removes
the CFO/PN common-rotation ambiguity. The position error bound (PEB) is the
root trace of the trailing 3x3 block, the CFO-PN bound the trace of the
leading NxN block.

``w_linear_fim`` factorizes the same Fisher information as an affine
function of W = conj(w) conj(w)^H, which is what the phase-shift optimizer
needs: every Jacobian column is a scalar phase times conj(w)^H times a
w-independent vector, so each FIM entry is Re tr(M_ij W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import GeometryError, PolarPosition, ScenarioConfig
from .signal import (
    PilotSequence,
    PnCovariance,
    build_pn_covariance,
    build_signal_matrix,
    cfo_phase_ramp,
    g_matrix_position_gradient,
)

__all__ = [
    "BoundError",
    "MuJacobian",
    "BimMatrix",
    "TransitionMatrix",
    "HcrlbResult",
    "WLinearFim",
    "param_indices",
    "mu_jacobian",
    "fim",
    "prior_information",
    "bim",
    "transition_matrix",
    "hcrlb",
    "peb",
    "w_linear_fim",
]

_COND_LIMIT = 1e12


class BoundError(RuntimeError):
    """Raised when a bound cannot be evaluated (singular information)."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


def param_indices(n_subcarriers: int) -> dict:
    """Column indices of each parameter in the fixed lambda ordering."""
    n = n_subcarriers
    return {"phi": 0, "theta0": 1, "d_ru": n + 1, "phi_az": n + 2, "phi_el": n + 3}


@dataclass(frozen=True)
class MuJacobian:
    """d mu / d lambda, complex N x (N+4); theta columns are one-hot rows."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def mu_jacobian(ue: PolarPosition, w, phi: float, theta, config: ScenarioConfig,
                pilots: PilotSequence | None = None) -> MuJacobian:
    """Analytic Jacobian of the noise-free received signal.

    The CFO column applies the index ramp j 2 pi n / N, each theta[n]
    column is nonzero only in row n, and the position columns push the
    channel gradients through the pilot matrix and the impairment phases.
    """
    n = config.n_subcarriers
    theta = np.asarray(theta, dtype=float)
    pilots = pilots if pilots is not None else PilotSequence.qpsk(n)
    s_t = build_signal_matrix(pilots).matrix.T
    w = np.asarray(w, dtype=complex)

    g, grads = g_matrix_position_gradient(ue, config)
    h = g.T @ w
    st_h = s_t @ h
    lam = cfo_phase_ramp(phi, n) * np.exp(1j * theta)
    sqrt_p = math.sqrt(config.tx_power_w)
    base = sqrt_p * lam * st_h

    jac = np.zeros((n, n + 4), dtype=complex)
    ramp = 1j * 2.0 * np.pi * np.arange(n) / n
    jac[:, 0] = ramp * base
    jac[np.arange(n), 1 + np.arange(n)] = 1j * base
    for k in range(3):
        dh = grads[k].T @ w
        jac[:, n + 1 + k] = sqrt_p * lam * (s_t @ dh)
    return MuJacobian(jac)


def fim(jac: MuJacobian, sigma_sq: float) -> np.ndarray:
    """Fisher information (2 / sigma^2) Re(J^H J); symmetric PSD."""
    j = jac.matrix
    out = (2.0 / sigma_sq) * np.real(j.conj().T @ j)
    return 0.5 * (out + out.T)


def prior_information(pn_cov: PnCovariance) -> np.ndarray:
    """Blkdiag(0, Psi^{-1}, 0_3x3): curvature of the Wiener PN prior."""
    n = pn_cov.n
    out = np.zeros((n + 4, n + 4))
    out[1:n + 1, 1:n + 1] = np.linalg.inv(pn_cov.matrix)
    return out


@dataclass(frozen=True)
class BimMatrix:
    """Bayesian information: Fisher part plus phase-noise prior curvature."""

    matrix: np.ndarray

    @property
    def n_params(self) -> int:
        return self.matrix.shape[0]


def bim(fim_matrix: np.ndarray, pn_cov: PnCovariance) -> BimMatrix:
    n = pn_cov.n
    if fim_matrix.shape != (n + 4, n + 4):
        raise ValueError("FIM size does not match the PN covariance")
    b = fim_matrix + prior_information(pn_cov)
    try:
        scipy.linalg.cholesky(b, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise BoundError("Bayesian information matrix is not positive definite") from exc
    return BimMatrix(b)


@dataclass(frozen=True)
class TransitionMatrix:
    """Jacobian of [gamma_underline, x, y, z] w.r.t. lambda, (N+3) x (N+4)."""

    matrix: np.ndarray


def _xi_blocks(ue: PolarPosition, n: int):
    se, ce = math.sin(ue.phi_el), math.cos(ue.phi_el)
    sa, ca = math.sin(ue.phi_az), math.cos(ue.phi_az)
    if abs(se) < 1e-12:
        raise GeometryError("elevation on the z axis makes azimuth unidentifiable")
    d = ue.d_ru
    xi1 = np.zeros((n, n + 1))
    rows = np.arange(1, n)
    xi1[rows, 0] = 2.0 * np.pi * rows / n
    xi1[rows, 1] = -1.0
    xi1[rows, rows + 1] = 1.0
    xi2 = np.array([
        [se * ca, -d * se * sa, d * ca * ce],
        [se * sa, d * se * ca, d * sa * ce],
        [ce, 0.0, -d * se],
    ])
    return xi1, xi2


def transition_matrix(ue: PolarPosition, n_subcarriers: int) -> TransitionMatrix:
    """Block diagonal of the ambiguity-removing phase map (zero first row,
    index ramp against theta[0]) and the polar-to-Cartesian Jacobian."""
    xi1, xi2 = _xi_blocks(ue, n_subcarriers)
    out = np.zeros((n_subcarriers + 3, n_subcarriers + 4))
    out[:n_subcarriers, :n_subcarriers + 1] = xi1
    out[n_subcarriers:, n_subcarriers + 1:] = xi2
    return TransitionMatrix(out)


@dataclass(frozen=True)
class HcrlbResult:
    matrix: np.ndarray
    peb: float
    cfo_pn_bound: float


def hcrlb(bim_matrix: BimMatrix, transition: TransitionMatrix) -> HcrlbResult:
    """Transformed bound Xi B^{-1} Xi^T with PEB and CFO-PN traces."""
    b = bim_matrix.matrix
    xi = transition.matrix
    n = b.shape[0] - 4
    cond = np.linalg.cond(b)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise BoundError(
            f"Bayesian information too ill-conditioned (cond={cond:.3e})",
            condition_number=cond)
    try:
        cho = scipy.linalg.cho_factor(b, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise BoundError("Bayesian information matrix is singular",
                         condition_number=cond) from exc
    bound = xi @ scipy.linalg.cho_solve(cho, xi.T)
    bound = 0.5 * (bound + bound.T)
    peb_sq = float(np.trace(bound[n:n + 3, n:n + 3]))
    cfo_pn = float(np.trace(bound[:n, :n]))
    return HcrlbResult(bound, math.sqrt(max(peb_sq, 0.0)), cfo_pn)


def peb(ue: PolarPosition, w, config: ScenarioConfig,
        pilots: PilotSequence | None = None,
        pn_cov: PnCovariance | None = None) -> HcrlbResult:
    """Convenience composite: Jacobian -> FIM -> BIM -> transformed bound.

    The Fisher information does not depend on the CFO/PN evaluation point,
    so it is computed at zero impairments.
    """
    n = config.n_subcarriers
    if pn_cov is None:
        pn_cov = build_pn_covariance(n, config.pn_increment_var)
    jac = mu_jacobian(ue, w, 0.0, np.zeros(n), config, pilots)
    b = bim(fim(jac, config.noise_power_w), pn_cov)
    return hcrlb(b, transition_matrix(ue, n))


@dataclass(frozen=True)
class WLinearFim:
    """Fisher information as an affine map of W = conj(w) conj(w)^H.

    ``pairs`` maps (i, j) with i <= j to the complex matrix M_ij with
    FIM_ij(W) = (2 / sigma^2) Re tr(M_ij W); missing entries are
    structurally zero (distinct phase-noise indices never couple).
    """

    n_subcarriers: int
    n_ris: int
    sigma_sq: float
    pairs: dict

    def reconstruct_fim(self, w_mat: np.ndarray) -> np.ndarray:
        n = self.n_subcarriers
        out = np.zeros((n + 4, n + 4))
        scale = 2.0 / self.sigma_sq
        for (i, j), m in self.pairs.items():
            val = scale * float(np.real(np.trace(m @ w_mat)))
            out[i, j] = val
            out[j, i] = val
        return out

    def fim_of_vector(self, w) -> np.ndarray:
        w_bar = np.conj(np.asarray(w, dtype=complex))
        return self.reconstruct_fim(np.outer(w_bar, w_bar.conj()))


def w_linear_fim(ue: PolarPosition, pilots: PilotSequence,
                 config: ScenarioConfig) -> WLinearFim:
    """Factorize the FIM into per-entry coefficient matrices in W.

    Per subcarrier the Jacobian columns reduce to conj(w)^H times
    a_phi(n) = j (2 pi n / N) G S[:, n], a_theta[n](n) = j G S[:, n], and
    a_xi(n) = (dG / d xi) S[:, n]; summing outer products over subcarriers
    gives M_ij = P sum_n a_j(n) a_i(n)^H.
    """
    n = config.n_subcarriers
    s = build_signal_matrix(pilots).matrix
    g, grads = g_matrix_position_gradient(ue, config)
    u = g @ s                                    # column n equals G S[:, n]
    v = [grads[k] @ s for k in range(3)]
    omega = 2.0 * np.pi * np.arange(n) / n
    p_lin = config.tx_power_w

    idx_pos = [n + 1, n + 2, n + 3]
    uc = np.conj(u)
    pairs = {}
    pairs[(0, 0)] = p_lin * np.einsum("n,rn,qn->rq", omega**2, u, uc)
    for m in range(n):
        outer_m = np.outer(u[:, m], uc[:, m])
        # the j factors of the phi and theta columns cancel pairwise
        pairs[(0, 1 + m)] = p_lin * omega[m] * outer_m
        pairs[(1 + m, 1 + m)] = p_lin * outer_m
    for k in range(3):
        pairs[(0, idx_pos[k])] = -1j * p_lin * np.einsum(
            "n,rn,qn->rq", omega, v[k], uc)
        for m in range(n):
            pairs[(1 + m, idx_pos[k])] = -1j * p_lin * np.outer(v[k][:, m], uc[:, m])
        for k2 in range(k, 3):
            pairs[(idx_pos[k], idx_pos[k2])] = p_lin * np.einsum(
                "rn,qn->rq", v[k2], np.conj(v[k]))
    return WLinearFim(n, config.ris.n_elements, config.noise_power_w, pairs)
