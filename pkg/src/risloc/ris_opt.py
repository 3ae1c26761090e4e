"""RIS phase-shift design by semidefinite relaxation of the average PEB.

For sampled candidate positions p_1..p_U inside the area of interest the
average position error bound is driven to its minimum over unit-modulus
phase vectors by relaxing W = conj(w) conj(w)^H to any Hermitian PSD
matrix with unit diagonal. Each sample contributes one linear matrix
inequality

    [[Z_u, Xi_u], [Xi_u^T, B_u(W)]]  PSD

whose Schur complement pins tr(Z_u) above the squared PEB at p_u, and the
objective minimizes the average trace. The Bayesian information B_u(W) is
affine in W through the per-entry coefficient matrices of
:func:`risloc.hcrlb.w_linear_fim`.

Each LMI is preconditioned by an exact congruence: the information block
is scaled to unit diagonal and the coupling rows by a reference PEB, which
leaves the feasible set and the meaning of Z_u (after unscaling) intact
while making the solver see O(1) entries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .geometry import PolarPosition, Position3, ScenarioConfig, cartesian_to_polar
from .hcrlb import peb as peb_bound
from .hcrlb import prior_information, transition_matrix, w_linear_fim
from .signal import PilotSequence, build_pn_covariance
from . import sdp

__all__ = [
    "PhaseShiftVector",
    "SdrSample",
    "SdrProblem",
    "SdrSolution",
    "sample_aoi",
    "assemble_sdr",
    "optimize_phase_shifts",
    "extract_rank1",
    "gaussian_randomization",
    "random_phase_shifts",
    "average_peb",
    "save_phase_shifts",
    "load_phase_shifts",
]


@dataclass(frozen=True)
class PhaseShiftVector:
    """Unit-modulus reflection coefficients, one per RIS element."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if np.any(np.abs(np.abs(w) - 1.0) > 1e-9):
            raise ValueError("phase-shift entries must be unit modulus")
        object.__setattr__(self, "w", w)

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.w)


def sample_aoi(config: ScenarioConfig, n_samples: int, rng_seed) -> np.ndarray:
    """Uniform positions in the AOI cube, (n_samples, 3); seeded."""
    if n_samples < 1:
        raise ValueError("need at least one sample position")
    rng = np.random.default_rng(rng_seed)
    center = config.aoi_center.as_array()
    half = config.aoi_edge / 2.0
    return center + rng.uniform(-half, half, size=(n_samples, 3))


@dataclass
class SdrSample:
    """Preconditioned per-position data entering one LMI block."""

    position: np.ndarray
    polar: PolarPosition
    xi_tilde: np.ndarray        # unscaled 3 x (N+4) position rows of the transition
    d_scale: np.ndarray         # information-block congruence scaling
    t_scale: float              # corner scaling (1 / reference PEB)
    const_block: np.ndarray     # scaled LMI constant (Xi corner + prior)
    coupling: scipy.sparse.csr_matrix  # W params -> svec of the LMI


@dataclass
class SdrProblem:
    config: ScenarioConfig
    pilots: PilotSequence
    samples: list
    program: sdp.ConeProgram
    z_names: list
    big_dim: int


@dataclass
class SdrSolution:
    w_matrix: np.ndarray
    z_blocks: list
    relaxed_objective: float    # (1/U) sum tr(Z_u), an average squared-PEB proxy
    extracted: PhaseShiftVector
    realized_avg_peb: float
    relaxed_avg_peb: float      # sqrt of the per-sample mean of tr(Z_u)
    report: sdp.SolverReport
    sample_positions: np.ndarray


def _coupling_coefficients(m: np.ndarray, n_ris: int) -> np.ndarray:
    """Parameter coefficients of Re tr(M W) over the Hermitian layout
    [diag, Re upper, Im upper]."""
    a, b = np.triu_indices(n_ris, k=1)
    return np.concatenate([
        np.real(np.diag(m)),
        np.real(m[a, b] + m[b, a]),
        np.imag(m[a, b]) - np.imag(m[b, a]),
    ])


def _svec_position(big: int):
    iu = np.triu_indices(big)
    pos = {}
    for k, (i, j) in enumerate(zip(*iu)):
        pos[(int(i), int(j))] = k
    return pos


def _build_sample(p_xyz, pilots, config, pn_prior, svec_pos, big) -> SdrSample:
    n = config.n_subcarriers
    n_ris = config.ris.n_elements
    polar = cartesian_to_polar(Position3.from_array(p_xyz))
    wlf = w_linear_fim(polar, pilots, config)
    xi = transition_matrix(polar, n).matrix
    xi_tilde = xi[n:, :]                          # position rows only

    b_ref = wlf.reconstruct_fim(np.eye(n_ris)) + pn_prior
    diag = np.diag(b_ref)
    d_scale = 1.0 / np.sqrt(np.maximum(diag, 1e-300))
    z_ref = xi_tilde @ np.linalg.solve(b_ref, xi_tilde.T)
    t_scale = 1.0 / math.sqrt(max(float(np.trace(z_ref)) / 3.0, 1e-300))

    const = np.zeros((big, big))
    corner = t_scale * (xi_tilde * d_scale[np.newaxis, :])
    const[0:3, 3:] = corner
    const[3:, 0:3] = corner.T
    const[3:, 3:] = d_scale[:, np.newaxis] * pn_prior * d_scale[np.newaxis, :]

    scale = 2.0 / config.noise_power_w
    rows, data = [], []
    for (k, l), m in wlf.pairs.items():
        coeff = (scale * d_scale[k] * d_scale[l]) * _coupling_coefficients(m, n_ris)
        if k != l:
            coeff = coeff * math.sqrt(2.0)
        rows.append(svec_pos[(3 + k, 3 + l)])
        data.append(coeff)
    data = np.vstack(data)
    n_params = n_ris * n_ris
    indptr = np.zeros(sdp.svec_len(big) + 1, dtype=np.int64)
    order = np.argsort(rows)
    rows_sorted = np.asarray(rows)[order]
    data = data[order]
    indptr[rows_sorted + 1] = n_params
    indptr = np.cumsum(indptr)
    indices = np.tile(np.arange(n_params, dtype=np.int64), data.shape[0])
    coupling = scipy.sparse.csr_matrix(
        (data.ravel(), indices, indptr), shape=(sdp.svec_len(big), n_params))
    return SdrSample(np.asarray(p_xyz, dtype=float), polar, xi_tilde,
                     d_scale, t_scale, const, coupling)


def assemble_sdr(samples, pilots: PilotSequence, config: ScenarioConfig) -> SdrProblem:
    """Build the relaxed program: one Hermitian W with unit diagonal, one
    3x3 auxiliary block and one LMI per sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = config.n_subcarriers
    n_ris = config.ris.n_elements
    big = n + 7
    pn_prior = prior_information(build_pn_covariance(n, config.pn_increment_var))
    svec_pos = _svec_position(big)

    w_block = sdp.VarBlock("W", n_ris, "herm")
    blocks = [w_block]
    z_names = []
    objective = {}
    equalities = []
    cons = [sdp.PsdConstraint(n_ris, "herm",
                              np.zeros((n_ris, n_ris), dtype=complex),
                              {"W": sdp.block_identity_op(w_block)})]

    for r in range(n_ris):
        e_r = np.zeros((n_ris, n_ris))
        e_r[r, r] = 1.0
        equalities.append(sdp.Equality(
            {"W": sdp.linear_functional(w_block, e_r)}, 1.0))

    built = []
    n_samp = samples.shape[0]
    for u, p in enumerate(samples):
        smp = _build_sample(p, pilots, config, pn_prior, svec_pos, big)
        built.append(smp)
        z_name = f"Z{u}"
        z_block = sdp.VarBlock(z_name, 3, "sym")
        blocks.append(z_block)
        z_names.append(z_name)
        objective[z_name] = sdp.linear_functional(z_block, np.eye(3)) / (
            n_samp * smp.t_scale**2)
        cons.append(sdp.PsdConstraint(
            big, "sym", smp.const_block,
            {z_name: sdp.placement_op(big, 0, z_block), "W": smp.coupling}))

    program = sdp.ConeProgram(blocks, objective, equalities, cons)
    return SdrProblem(config, pilots, built, program, z_names, big)


def average_peb(w, positions, config: ScenarioConfig,
                pilots: PilotSequence | None = None) -> float:
    """Mean PEB of a fixed phase vector over candidate positions."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    vals = [peb_bound(cartesian_to_polar(Position3.from_array(p)), w, config,
                      pilots).peb for p in positions]
    return float(np.mean(vals))


def focusing_phase_shifts(config: ScenarioConfig, target=None) -> PhaseShiftVector:
    """Mid-band delay-conjugate beam toward a target point (warm start)."""
    target = (config.aoi_center.as_array() if target is None
              else np.asarray(target, dtype=float))
    elems = config.ris.element_positions
    d_ar = np.linalg.norm(elems - config.anchor.as_array(), axis=1)
    d_ru = np.linalg.norm(target - elems, axis=1)
    tau = (d_ar + d_ru) / config.light_speed
    return PhaseShiftVector(np.exp(1j * np.pi * config.bandwidth_hz * tau))


def optimize_phase_shifts(config: ScenarioConfig, n_samples: int = 10,
                          seed: int = 0, pilots: PilotSequence | None = None,
                          tol: float = 1e-6, max_iter: int = 50_000,
                          n_randomization: int = 50,
                          warm_start: bool = True) -> SdrSolution:
    """Assemble, solve and round the relaxation.

    Reports both the relaxed objective and the realized average PEB of the
    extracted unit-modulus vector, whose gap is the cost of rounding.
    Raises when the solver proves the program infeasible or unbounded;
    a max-iteration exit is propagated through the report status.
    """
    pilots = pilots if pilots is not None else PilotSequence.qpsk(config.n_subcarriers)
    positions = sample_aoi(config, n_samples, seed)
    problem = assemble_sdr(positions, pilots, config)

    warm = None
    if warm_start:
        w0 = focusing_phase_shifts(config).w
        w_bar = np.conj(w0)
        w_mat = 0.9 * np.outer(w_bar, np.conj(w_bar)) + 0.1 * np.eye(w0.size)
        warm = {"W": w_mat}
        for smp, name in zip(problem.samples, problem.z_names):
            fim_part = w_linear_fim(smp.polar, pilots, config).reconstruct_fim(w_mat)
            b0 = fim_part + prior_information(
                build_pn_covariance(config.n_subcarriers, config.pn_increment_var))
            z0 = smp.xi_tilde @ np.linalg.solve(b0, smp.xi_tilde.T)
            warm[name] = 1.2 * smp.t_scale**2 * z0

    assignment, report = sdp.solve(problem.program, tol=tol, max_iter=max_iter,
                                   warm_start=warm)
    if report.status in ("infeasible", "unbounded"):
        raise sdp.SdpError(f"phase-shift program reported {report.status}")

    w_mat = assignment.primal["W"]
    z_blocks = [assignment.primal[name] / smp.t_scale**2
                for name, smp in zip(problem.z_names, problem.samples)]
    extracted = extract_rank1(w_mat)
    if n_randomization:
        extracted = gaussian_randomization(
            w_mat, n_randomization, seed,
            lambda wv: average_peb(wv, positions, config, pilots))
    realized = average_peb(extracted.w, positions, config, pilots)
    relaxed_obj = float(np.mean([np.trace(z) for z in z_blocks]))
    return SdrSolution(
        w_matrix=w_mat,
        z_blocks=z_blocks,
        relaxed_objective=relaxed_obj,
        extracted=extracted,
        realized_avg_peb=realized,
        relaxed_avg_peb=math.sqrt(max(relaxed_obj, 0.0)),
        report=report,
        sample_positions=positions,
    )


def extract_rank1(w_mat: np.ndarray) -> PhaseShiftVector:
    """Principal-eigenvector rounding with elementwise phase projection.

    The scaled eigenvector cannot itself satisfy the unit-modulus
    constraint, so each entry is projected to its phase; exact zeros get
    phase 0 as the deterministic tie-break.
    """
    w_mat = np.asarray(w_mat, dtype=complex)
    evals, evecs = np.linalg.eigh(0.5 * (w_mat + w_mat.conj().T))
    v = math.sqrt(max(float(evals[-1]), 0.0)) * evecs[:, -1]
    mags = np.abs(v)
    w_bar = np.where(mags > 1e-12, v / np.where(mags > 0, mags, 1.0), 1.0)
    return PhaseShiftVector(np.conj(w_bar))


def gaussian_randomization(w_mat: np.ndarray, n_candidates: int, seed,
                           peb_evaluator) -> PhaseShiftVector:
    """Sample candidates from CN(0, W), phase-project, keep the best.

    The eigenvector extraction is always in the candidate pool, so the
    result is never worse than plain rounding under the evaluator.
    """
    best = extract_rank1(w_mat)
    best_val = peb_evaluator(best.w)
    if n_candidates <= 0:
        return best
    evals, evecs = np.linalg.eigh(0.5 * (w_mat + w_mat.conj().T))
    root = evecs * np.sqrt(np.maximum(evals, 0.0))[np.newaxis, :]
    rng = np.random.default_rng(seed)
    dim = w_mat.shape[0]
    for _ in range(n_candidates):
        g = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / math.sqrt(2)
        v = root @ g
        mags = np.abs(v)
        w_bar = np.where(mags > 1e-12, v / np.where(mags > 0, mags, 1.0), 1.0)
        cand = PhaseShiftVector(np.conj(w_bar))
        val = peb_evaluator(cand.w)
        if val < best_val:
            best, best_val = cand, val
    return best


def random_phase_shifts(n_ris: int, seed) -> PhaseShiftVector:
    """iid uniform phases, the standard untrained baseline."""
    if n_ris < 1:
        raise ValueError("need at least one RIS element")
    rng = np.random.default_rng(seed)
    return PhaseShiftVector(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n_ris)))


def save_phase_shifts(path, w) -> None:
    w = np.asarray(w, dtype=complex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "phase_rad"])
        for i, val in enumerate(np.angle(w)):
            writer.writerow([i, repr(float(val))])


def load_phase_shifts(path) -> PhaseShiftVector:
    phases = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["index", "phase_rad"]:
            raise ValueError(f"unexpected phase-shift header {reader.fieldnames}")
        for row in reader:
            phases.append(float(row["phase_rad"]))
    return PhaseShiftVector(np.exp(1j * np.array(phases)))
