"""Near-field localization and RIS phase-shift design for impaired OFDM links.

Subpackages cover scenario geometry, signal synthesis, the joint
CFO/phase-noise/position estimator, hybrid Cramer-Rao bounds, a small
dense semidefinite-program solver, the phase-shift optimizer built on it,
and a Monte Carlo experiment harness with CSV outputs.
"""

from .geometry import (
    GeometryError,
    PolarPosition,
    Position3,
    RisGeometry,
    ScenarioConfig,
    cartesian_to_polar,
    fresnel_interval,
    fresnel_region_check,
    polar_to_cartesian,
    propagation_delay,
    ris_element_position,
)
from .signal import (
    ChannelVector,
    GMatrix,
    PhaseNoisePath,
    PilotSequence,
    PnCovariance,
    ReceivedSignal,
    SignalMatrix,
    build_pn_covariance,
    build_signal_matrix,
    channel_position_gradient,
    channel_vector,
    g_matrix,
    sample_phase_noise,
    subcarrier_wavelength,
    synthesize_received,
)
from .estimator import (
    EstimationProblem,
    EstimatorConfig,
    EstimatorState,
    PnSubspace,
    build_pn_subspace,
    joint_cfo_pn_mse,
    rmse_position,
    run_joint_estimation,
)
# the bound evaluator itself stays at risloc.hcrlb.hcrlb so that the
# submodule name is not shadowed by the function
from .hcrlb import (
    BimMatrix,
    HcrlbResult,
    MuJacobian,
    TransitionMatrix,
    WLinearFim,
    bim,
    fim,
    mu_jacobian,
    peb,
    transition_matrix,
    w_linear_fim,
)

__version__ = "0.1.0"
