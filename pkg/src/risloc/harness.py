"""Monte Carlo experiment harness with deterministic seeding and CSV output.

Every run is reproducible: per-trial generators derive from the master
seed and the sweep-point / trial indices, so any single trial can be
replayed in isolation and rerunning a spec yields byte-identical CSV
files. Aggregates (RMSE, CDFs) are always recomputable from raw rows.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import (
    EstimatorConfig,
    joint_cfo_pn_mse,
    run_joint_estimation,
)
from .geometry import Position3, ScenarioConfig, cartesian_to_polar
from .hcrlb import BoundError, peb as peb_bound
from .ris_opt import PhaseShiftVector, random_phase_shifts
from .signal import (
    PhaseNoisePath,
    PilotSequence,
    build_pn_covariance,
    sample_phase_noise,
    synthesize_received,
)

__all__ = [
    "SCHEMA_VERSION",
    "RESULT_FIELDS",
    "TRACE_FIELDS",
    "PEB_FIELDS",
    "CDF_FIELDS",
    "SWEEP_FIELDS",
    "ExperimentSpec",
    "run_monte_carlo",
    "peb_heatmap",
    "cdf_curves",
    "sweep_summary",
    "convergence_trace",
    "receive_snr_db",
    "write_csv",
    "read_csv",
]

SCHEMA_VERSION = "1"

RESULT_FIELDS = [
    "schema_version", "experiment_id", "master_seed", "n_ris", "power_dbm",
    "pn_var", "trial", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z",
    "pos_error_m", "sq_pos_error", "joint_cfo_pn_sq_err", "peb",
    "hcrlb_cfo_pn", "outer_iters", "inner_iters_total", "max_inner_iters",
    "converged", "wall_time_s",
]

TRACE_FIELDS = ["schema_version", "outer_iter", "inner_iter", "objective",
                "phi_hat", "d_ru", "phi_az", "phi_el", "pos_error_m"]

PEB_FIELDS = ["schema_version", "x", "y", "z", "peb"]

CDF_FIELDS = ["schema_version", "n_ris", "power_dbm", "pn_var", "metric",
              "value", "cdf"]

SWEEP_FIELDS = ["schema_version", "n_ris", "power_dbm", "pn_var", "trials",
                "rmse", "median_pos_error", "mean_joint_cfo_pn_mse",
                "median_joint_cfo_pn_mse", "mean_peb", "mean_hcrlb_cfo_pn",
                "converged_fraction"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader), reader.fieldnames


@dataclass
class ExperimentSpec:
    """Sweep description for the Monte Carlo driver.

    ``phase_shifts`` maps RIS sizes to phase vectors; the string
    ``"random"`` draws one random vector per sweep point instead. A
    ``fixed_position`` of None samples the true position uniformly in the
    AOI per trial.
    """

    scenario: ScenarioConfig
    powers_dbm: list
    n_ris_list: list
    pn_vars: list
    trials: int
    phase_shifts: dict | str
    fixed_position: Position3 | None = None
    master_seed: int = 0
    experiment_id: str = "mc"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    # wall-clock timing is opt-in so that reruns stay byte-identical
    record_timing: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial per sweep point")
        if not (self.powers_dbm and self.n_ris_list and self.pn_vars):
            raise ValueError("sweep axes must be non-empty")


def _phase_vector_for(spec: ExperimentSpec, n_ris: int, point_index: int):
    if spec.phase_shifts == "random":
        return random_phase_shifts(n_ris, [spec.master_seed, 7919, point_index]).w
    try:
        w = spec.phase_shifts[n_ris]
    except (KeyError, TypeError):
        raise ValueError(f"no phase-shift vector provided for n_ris={n_ris}")
    w = w.w if isinstance(w, PhaseShiftVector) else np.asarray(w, dtype=complex)
    if w.size != n_ris:
        raise ValueError("phase-shift vector length does not match n_ris")
    return w


def run_monte_carlo(spec: ExperimentSpec, out_path=None):
    """Run the full sweep; returns rows and optionally writes them.

    Every started trial produces exactly one row; non-converged trials
    are flagged, never dropped. Each trial draws its CFO uniformly in
    [-0.15, 0.15], a fresh Wiener phase-noise path, and fresh noise.
    """
    pilots = PilotSequence.qpsk(spec.scenario.n_subcarriers)
    rows = []
    point_index = 0
    for n_ris in spec.n_ris_list:
        for power in spec.powers_dbm:
            for pn_var in spec.pn_vars:
                cfg = spec.scenario.with_overrides(
                    n_ris=n_ris, tx_power_dbm=float(power),
                    pn_increment_var=float(pn_var))
                w = _phase_vector_for(spec, n_ris, point_index)
                cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
                for trial in range(spec.trials):
                    rows.append(_one_trial(spec, cfg, w, cov, pilots,
                                            point_index, trial))
                point_index += 1
    if out_path is not None:
        write_csv(out_path, RESULT_FIELDS, rows)
    return rows


def _one_trial(spec, cfg, w, cov, pilots, point_index, trial):
    rng = np.random.default_rng([spec.master_seed, point_index, trial])
    t_start = time.time()
    if spec.fixed_position is not None:
        truth = spec.fixed_position
    else:
        center = cfg.aoi_center.as_array()
        half = cfg.aoi_edge / 2.0
        truth = Position3(*(center + rng.uniform(-half, half, 3)))
    phi = float(rng.uniform(-0.15, 0.15))
    theta = sample_phase_noise(cov, rng.integers(2**31))
    y = synthesize_received(truth, w, phi, theta, pilots, cfg,
                            rng_seed=rng.integers(2**31))
    state = run_joint_estimation(y, w, cfg, spec.estimator, pilots)
    est_xyz = state.position_cartesian().as_array()
    truth_xyz = truth.as_array()
    err = float(np.linalg.norm(est_xyz - truth_xyz))
    try:
        bound = peb_bound(cartesian_to_polar(truth), w, cfg, pilots)
        peb_val, cfo_pn_val = bound.peb, bound.cfo_pn_bound
    except BoundError:
        peb_val, cfo_pn_val = float("nan"), float("nan")
    return [
        SCHEMA_VERSION, spec.experiment_id, spec.master_seed,
        cfg.ris.n_elements, cfg.tx_power_dbm, cfg.pn_increment_var, trial,
        truth_xyz[0], truth_xyz[1], truth_xyz[2],
        est_xyz[0], est_xyz[1], est_xyz[2],
        err, err**2,
        joint_cfo_pn_mse(phi, theta.theta, state.phi_hat, state.theta_hat),
        peb_val, cfo_pn_val,
        state.outer_iters, state.inner_iters,
        max(state.inner_iter_counts) if state.inner_iter_counts else 0,
        state.converged,
        round(time.time() - t_start, 6) if spec.record_timing else 0.0,
    ]


def peb_heatmap(config: ScenarioConfig, w, resolution: int = 21,
                margin: float = 0.25, plane_z: float | None = None,
                pilots: PilotSequence | None = None, out_path=None):
    """PEB over an xy-plane grid covering the AOI plus a margin.

    Grid points whose information matrix is singular are recorded with a
    NaN value rather than dropped.
    """
    pilots = pilots if pilots is not None else PilotSequence.qpsk(config.n_subcarriers)
    center = config.aoi_center.as_array()
    half = config.aoi_edge / 2.0 + margin
    z = center[2] if plane_z is None else plane_z
    axis = np.linspace(-half, half, resolution)
    rows = []
    for dx in axis:
        for dy in axis:
            p = Position3(center[0] + dx, center[1] + dy, z)
            try:
                val = peb_bound(cartesian_to_polar(p), w, config, pilots).peb
            except BoundError:
                val = float("nan")
            rows.append([SCHEMA_VERSION, p.x, p.y, p.z, val])
    if out_path is not None:
        write_csv(out_path, PEB_FIELDS, rows)
    return rows


def cdf_curves(result_rows, metric: str = "pos_error_m", out_path=None):
    """Empirical CDF of a result column per (n_ris, power, pn_var) group."""
    if not result_rows:
        raise ValueError("empty dataset")
    if isinstance(result_rows[0], (list, tuple)):
        result_rows = [dict(zip(RESULT_FIELDS, r)) for r in result_rows]
    if metric not in result_rows[0]:
        raise KeyError(f"metric column {metric!r} not in dataset")
    groups = {}
    for r in result_rows:
        key = (r["n_ris"], r["power_dbm"], r["pn_var"])
        groups.setdefault(key, []).append(float(r[metric]))
    out = []
    for key in sorted(groups, key=str):
        vals = np.sort(np.asarray(groups[key]))
        n = vals.size
        for i, v in enumerate(vals):
            out.append([SCHEMA_VERSION, key[0], key[1], key[2], metric,
                        float(v), (i + 1) / n])
    if out_path is not None:
        write_csv(out_path, CDF_FIELDS, out)
    return out


def sweep_summary(result_rows, out_path=None):
    """Aggregate raw trial rows per sweep point (RMSE, medians, bounds).

    The raw rows stay the authoritative record; this writes the aggregated
    view that the sweep figures display directly.
    """
    if not result_rows:
        raise ValueError("empty dataset")
    if isinstance(result_rows[0], (list, tuple)):
        result_rows = [dict(zip(RESULT_FIELDS, r)) for r in result_rows]
    groups = {}
    for r in result_rows:
        key = (r["n_ris"], r["power_dbm"], r["pn_var"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: (str(k[0]), float(k[1]), str(k[2]))):
        rows = groups[key]
        sq = np.array([float(r["sq_pos_error"]) for r in rows])
        err = np.array([float(r["pos_error_m"]) for r in rows])
        mse = np.array([float(r["joint_cfo_pn_sq_err"]) for r in rows])
        pebs = np.array([float(r["peb"]) for r in rows])
        cfo_pn = np.array([float(r["hcrlb_cfo_pn"]) for r in rows])
        conv = np.array([str(r["converged"]) in ("1", "True") for r in rows])
        out.append([
            SCHEMA_VERSION, key[0], key[1], key[2], len(rows),
            float(np.sqrt(sq.mean())), float(np.median(err)),
            float(mse.mean()), float(np.median(mse)),
            float(np.nanmean(pebs)), float(np.nanmean(cfo_pn)),
            float(conv.mean()),
        ])
    if out_path is not None:
        write_csv(out_path, SWEEP_FIELDS, out)
    return out


def convergence_trace(config: ScenarioConfig, w, seed: int = 0,
                      truth: Position3 | None = None,
                      est_config: EstimatorConfig | None = None,
                      pilots: PilotSequence | None = None, out_path=None):
    """Objective trajectory of a single trial, one row per inner iteration
    plus a row at each outer round's start (inner_iter = 0)."""
    pilots = pilots if pilots is not None else PilotSequence.qpsk(config.n_subcarriers)
    rng = np.random.default_rng([seed, 0, 0])
    if truth is None:
        center = config.aoi_center.as_array()
        half = config.aoi_edge / 2.0
        truth = Position3(*(center + rng.uniform(-half, half, 3)))
    phi = float(rng.uniform(-0.15, 0.15))
    cov = build_pn_covariance(config.n_subcarriers, config.pn_increment_var)
    theta = sample_phase_noise(cov, rng.integers(2**31))
    y = synthesize_received(truth, w, phi, theta, pilots, config,
                            rng_seed=rng.integers(2**31))
    state = run_joint_estimation(y, w, config, est_config, pilots, truth=truth,
                                 record_trace=True)
    rows = [[SCHEMA_VERSION, *r] for r in state.trace]
    if out_path is not None:
        write_csv(out_path, TRACE_FIELDS, rows)
    return rows, state


def receive_snr_db(config: ScenarioConfig, w, position: Position3 | None = None,
                   pilots: PilotSequence | None = None) -> float:
    """Mean per-sample receive SNR, P ||S^T h||^2 / (N sigma^2), in dB."""
    from .signal import build_signal_matrix, channel_vector

    pilots = pilots if pilots is not None else PilotSequence.qpsk(config.n_subcarriers)
    position = position if position is not None else config.aoi_center
    h = channel_vector(position, w, config, check_fresnel=False).h
    s_t = build_signal_matrix(pilots).matrix.T
    num = config.tx_power_w * float(np.linalg.norm(s_t @ h) ** 2)
    return 10.0 * np.log10(num / (config.n_subcarriers * config.noise_power_w))
