"""Command-line front end for the optimizer, estimator and experiment runs.

Subcommands: optimize-ris, estimate, monte-carlo, peb-map, cdf, trace.
Every command accepts --config (INI scenario file, defaults otherwise) and
a seed; outputs are CSV files with versioned headers.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .estimator import EstimatorConfig, run_joint_estimation
from .geometry import Position3, ScenarioConfig
from .harness import (
    ExperimentSpec,
    cdf_curves,
    convergence_trace,
    peb_heatmap,
    read_csv,
    receive_snr_db,
    run_monte_carlo,
    sweep_summary,
    write_csv,
    RESULT_FIELDS,
)
from .ris_opt import (
    load_phase_shifts,
    optimize_phase_shifts,
    random_phase_shifts,
    save_phase_shifts,
)
from .signal import (
    PilotSequence,
    build_pn_covariance,
    sample_phase_noise,
    synthesize_received,
)


def _load_config(args) -> ScenarioConfig:
    cfg = (ScenarioConfig.from_file(args.config) if args.config
           else ScenarioConfig.default())
    overrides = {}
    if getattr(args, "n_ris", None) is not None:
        overrides["n_ris"] = args.n_ris
    if getattr(args, "power_dbm", None) is not None:
        overrides["tx_power_dbm"] = args.power_dbm
    if getattr(args, "pn_var", None) is not None:
        overrides["pn_increment_var"] = args.pn_var
    return cfg.with_overrides(**overrides) if overrides else cfg


def _parse_xyz(text: str) -> Position3:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return Position3(*parts)


def _phase_source(args, cfg: ScenarioConfig) -> np.ndarray:
    if args.w_file:
        return load_phase_shifts(args.w_file).w
    return random_phase_shifts(cfg.ris.n_elements, args.seed).w


def cmd_optimize_ris(args) -> int:
    cfg = _load_config(args)
    sol = optimize_phase_shifts(
        cfg, n_samples=args.samples, seed=args.seed, tol=args.tol,
        max_iter=args.max_iter, n_randomization=args.randomization)
    save_phase_shifts(args.out, sol.extracted.w)
    summary = {
        "status": sol.report.status,
        "iterations": sol.report.iterations,
        "solve_time_s": round(sol.report.solve_time, 3),
        "relaxed_avg_peb_m": sol.relaxed_avg_peb,
        "realized_avg_peb_m": sol.realized_avg_peb,
        "out": str(args.out),
    }
    print(json.dumps(summary))
    return 0 if sol.report.status == "optimal" else 1


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    w = _phase_source(args, cfg)
    pilots = PilotSequence.qpsk(cfg.n_subcarriers)
    rng = np.random.default_rng([args.seed, 0, 0])
    truth = args.true_pos
    if truth is None:
        center = cfg.aoi_center.as_array()
        truth = Position3(*(center + rng.uniform(-cfg.aoi_edge / 2,
                                                 cfg.aoi_edge / 2, 3)))
    phi = float(rng.uniform(-0.15, 0.15))
    cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
    theta = sample_phase_noise(cov, rng.integers(2**31))
    y = synthesize_received(truth, w, phi, theta, pilots, cfg,
                            rng_seed=rng.integers(2**31))
    state = run_joint_estimation(y, w, cfg, EstimatorConfig(), pilots)
    est = state.position_cartesian()
    print(json.dumps({
        "true_position": [truth.x, truth.y, truth.z],
        "estimated_position": [est.x, est.y, est.z],
        "position_error_m": float(np.linalg.norm(
            est.as_array() - truth.as_array())),
        "true_cfo": phi,
        "estimated_cfo": state.phi_hat,
        "converged": state.converged,
        "outer_iters": state.outer_iters,
        "receive_snr_db": receive_snr_db(cfg, w, truth, pilots),
    }))
    return 0


def cmd_monte_carlo(args) -> int:
    cfg = _load_config(args)
    sizes = args.n_ris_list or [cfg.ris.n_elements]
    if args.w_file:
        vec = load_phase_shifts(args.w_file).w
        shifts = {n: vec for n in sizes}
        if any(vec.size != n for n in sizes):
            raise SystemExit("phase-shift file length does not match --n-ris-list")
    else:
        shifts = "random"
    spec = ExperimentSpec(
        scenario=cfg,
        powers_dbm=args.powers or [cfg.tx_power_dbm],
        n_ris_list=sizes,
        pn_vars=args.pn_vars or [cfg.pn_increment_var],
        trials=args.trials,
        phase_shifts=shifts,
        fixed_position=args.true_pos,
        master_seed=args.seed,
        experiment_id=args.experiment_id,
        estimator=EstimatorConfig(max_outer=args.max_outer),
    )
    rows = run_monte_carlo(spec, out_path=args.out)
    if args.summary_out:
        sweep_summary(rows, out_path=args.summary_out)
    print(json.dumps({"rows": len(rows), "out": str(args.out)}))
    return 0


def cmd_peb_map(args) -> int:
    cfg = _load_config(args)
    w = _phase_source(args, cfg)
    rows = peb_heatmap(cfg, w, resolution=args.resolution, margin=args.margin,
                       plane_z=args.plane_z, out_path=args.out)
    print(json.dumps({"rows": len(rows), "out": str(args.out)}))
    return 0


def cmd_cdf(args) -> int:
    rows, fields = read_csv(args.input)
    if fields != RESULT_FIELDS:
        raise SystemExit(f"input does not match the result schema: {fields}")
    out = cdf_curves(rows, metric=args.metric, out_path=args.out)
    print(json.dumps({"rows": len(out), "out": str(args.out)}))
    return 0


def cmd_trace(args) -> int:
    cfg = _load_config(args)
    w = _phase_source(args, cfg)
    rows, state = convergence_trace(cfg, w, seed=args.seed, truth=args.true_pos,
                                    out_path=args.out)
    print(json.dumps({"rows": len(rows), "converged": state.converged,
                      "outer_iters": state.outer_iters, "out": str(args.out)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risloc",
        description="near-field RIS localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, w_file=True):
        p.add_argument("--config", default=None, help="scenario INI file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n-ris", dest="n_ris", type=int, default=None)
        p.add_argument("--power-dbm", dest="power_dbm", type=float, default=None)
        p.add_argument("--pn-var", dest="pn_var", type=float, default=None)
        if w_file:
            p.add_argument("--w-file", default=None,
                           help="phase-shift CSV (default: random)")

    p = sub.add_parser("optimize-ris", help="design phase shifts by SDR")
    common(p, w_file=False)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--randomization", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize_ris)

    p = sub.add_parser("estimate", help="run one synthetic estimation trial")
    common(p)
    p.add_argument("--true-pos", type=_parse_xyz, default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("monte-carlo", help="sweep powers/sizes/PN variances")
    common(p)
    p.add_argument("--powers", type=float, nargs="*", default=None)
    p.add_argument("--n-ris-list", type=int, nargs="*", default=None)
    p.add_argument("--pn-vars", type=float, nargs="*", default=None)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--true-pos", type=_parse_xyz, default=None)
    p.add_argument("--max-outer", type=int, default=40)
    p.add_argument("--experiment-id", default="mc")
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out", default=None,
                   help="also write the aggregated sweep summary CSV")
    p.set_defaults(func=cmd_monte_carlo)

    p = sub.add_parser("peb-map", help="PEB heatmap over the AOI plane")
    common(p)
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--margin", type=float, default=0.25)
    p.add_argument("--plane-z", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_peb_map)

    p = sub.add_parser("cdf", help="empirical CDF from a result CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--metric", default="pos_error_m")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("trace", help="convergence trace of one trial")
    common(p)
    p.add_argument("--true-pos", type=_parse_xyz, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
