"""Pilot, channel and received-signal synthesis for the impaired OFDM link.

Time-domain model for one OFDM symbol after cyclic-prefix removal:

    y = sqrt(P) * Lam_phi * Lam_theta * S^T h + v

with Lam_phi the CFO phase ramp diag(exp(j 2 pi n phi / N)), Lam_theta the
phase-noise diagonal diag(exp(j theta[n])), S = sqrt(N) F^H diag(s) the
pilot-bearing IDFT matrix, h the LoS cascaded AN-RIS-UE channel and v
circular complex Gaussian noise. Phase noise is a Wiener process.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    PolarPosition,
    Position3,
    ScenarioConfig,
    fresnel_region_check,
    polar_to_cartesian,
)

__all__ = [
    "PilotSequence",
    "SignalMatrix",
    "PnCovariance",
    "PhaseNoisePath",
    "ChannelVector",
    "GMatrix",
    "ReceivedSignal",
    "build_pn_covariance",
    "sample_phase_noise",
    "build_signal_matrix",
    "subcarrier_frequency",
    "subcarrier_wavelength",
    "channel_vector",
    "g_matrix",
    "g_matrix_position_gradient",
    "channel_position_gradient",
    "channel_and_gradients",
    "cfo_phase_ramp",
    "synthesize_received",
]

POSITION_PARAMS = ("d_Ru", "phi_az", "phi_el")


@dataclass(frozen=True)
class PilotSequence:
    """Unit-modulus frequency-domain pilot symbols, known at the receiver."""

    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex)
        if np.any(np.abs(np.abs(s) - 1.0) > 1e-12):
            raise ValueError("pilot symbols must be unit modulus")
        object.__setattr__(self, "symbols", s)

    def __len__(self):
        return self.symbols.size

    @classmethod
    def qpsk(cls, n: int, seed: int = 0) -> "PilotSequence":
        """Fixed-seed QPSK sequence (the canonical known pilot)."""
        rng = np.random.default_rng(seed)
        phases = np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=n)
        return cls(np.exp(1j * phases))

    @classmethod
    def ones(cls, n: int) -> "PilotSequence":
        return cls(np.ones(n, dtype=complex))


@dataclass(frozen=True)
class SignalMatrix:
    """S = sqrt(N) F^H diag(s); every column has norm sqrt(N)."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def build_signal_matrix(pilots: PilotSequence) -> SignalMatrix:
    """Time-frequency pilot matrix with entries S[t, n] = exp(j2pi tn/N) s[n]."""
    s = pilots.symbols
    if np.any(s == 0):
        raise ValueError("zero-valued pilot symbol")
    n = s.size
    t = np.arange(n)
    idft_phase = np.exp(2j * np.pi * np.outer(t, t) / n)
    return SignalMatrix(idft_phase * s[np.newaxis, :])


@dataclass(frozen=True)
class PnCovariance:
    """Wiener phase-noise covariance: Psi[i, j] = sigma_inc^2 (min(i, j) + 1)."""

    matrix: np.ndarray
    increment_var: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def build_pn_covariance(n: int, sigma_delta_sq: float) -> PnCovariance:
    if sigma_delta_sq <= 0:
        raise ValueError("phase-noise increment variance must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    psi = sigma_delta_sq * (np.minimum.outer(idx, idx) + 1.0)
    return PnCovariance(psi, sigma_delta_sq)


@dataclass(frozen=True)
class PhaseNoisePath:
    """One sampled phase-noise trajectory in radians."""

    theta: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "PhaseNoisePath":
        return cls(np.zeros(n))


def sample_phase_noise(cov: PnCovariance, rng_seed) -> PhaseNoisePath:
    """Cumulative sum of iid N(0, sigma_inc^2) increments, theta[-1] = 0."""
    rng = np.random.default_rng(rng_seed)
    increments = rng.normal(0.0, np.sqrt(cov.increment_var), size=cov.n)
    return PhaseNoisePath(np.cumsum(increments))


def subcarrier_frequency(n, config: ScenarioConfig):
    """Frequency of subcarrier n on a band centered at the carrier."""
    n = np.asarray(n, dtype=float)
    return config.carrier_freq_hz + (n / config.n_subcarriers - 0.5) * config.bandwidth_hz


def subcarrier_wavelength(n, config: ScenarioConfig):
    return config.light_speed / subcarrier_frequency(n, config)


@dataclass(frozen=True)
class ChannelVector:
    """LoS cascaded channel across subcarriers for one phase-shift setting."""

    h: np.ndarray


@dataclass(frozen=True)
class GMatrix:
    """Per-element channel factor with G^T w equal to the channel vector."""

    g: np.ndarray  # (n_ris, n_subcarriers)


def _as_xyz(position) -> np.ndarray:
    if isinstance(position, Position3):
        return position.as_array()
    if isinstance(position, PolarPosition):
        return polar_to_cartesian(position).as_array()
    return np.asarray(position, dtype=float)


def _element_ranges(ue_xyz: np.ndarray, config: ScenarioConfig):
    """Distances anchor->element and element->UE, with coincidence guard."""
    elems = config.ris.element_positions
    d_ar = np.linalg.norm(elems - config.anchor.as_array(), axis=1)
    d_ru = np.linalg.norm(ue_xyz - elems, axis=1)
    if np.any(d_ru < 1e-9):
        raise GeometryError("UE coincides with an RIS element")
    return d_ar, d_ru


def _fresnel_warn(ue_xyz: np.ndarray, config: ScenarioConfig):
    dist = float(np.linalg.norm(ue_xyz))
    if dist > 0 and not fresnel_region_check(dist, config.ris, config.center_wavelength):
        warnings.warn(
            f"UE range {dist:.3g} m is outside the Fresnel region of the RIS",
            stacklevel=3,
        )


def g_matrix(ue, config: ScenarioConfig, check_fresnel: bool = True) -> GMatrix:
    """Per-element, per-subcarrier cascaded gain and delay phase.

    G[r, n] = sqrt(rho_ar) sqrt(rho_ru) exp(-j 2 pi (n B / N)(tau_ar + tau_ru)),
    free-space amplitudes sqrt(G) lambda_n / (4 pi d) on both hops.
    """
    ue_xyz = _as_xyz(ue)
    if check_fresnel:
        _fresnel_warn(ue_xyz, config)
    d_ar, d_ru = _element_ranges(ue_xyz, config)
    n_idx = np.arange(config.n_subcarriers)
    lam = subcarrier_wavelength(n_idx, config)
    gain = np.sqrt(config.antenna_gain_tx * config.antenna_gain_rx)
    amp = gain * np.outer(1.0 / (d_ar * d_ru), lam**2) / (16.0 * np.pi**2)
    tau = (d_ar + d_ru) / config.light_speed
    freq_step = config.bandwidth_hz / config.n_subcarriers
    phase = np.exp(-2j * np.pi * np.outer(tau, n_idx * freq_step))
    return GMatrix(amp * phase)


def channel_vector(ue, w, config: ScenarioConfig, check_fresnel: bool = True) -> ChannelVector:
    """Cascaded channel h = G^T w for phase-shift vector w."""
    g = g_matrix(ue, config, check_fresnel=check_fresnel)
    return ChannelVector(g.g.T @ np.asarray(w, dtype=complex))


def _range_derivatives(polar: PolarPosition, config: ScenarioConfig):
    """d d_ru / d xi for xi in (d_Ru, phi_az, phi_el), per RIS element."""
    se, ce = np.sin(polar.phi_el), np.cos(polar.phi_el)
    sa, ca = np.sin(polar.phi_az), np.cos(polar.phi_az)
    if abs(se) < 1e-12:
        raise GeometryError("elevation on the z axis makes azimuth unidentifiable")
    d = polar.d_ru
    ue_xyz = np.array([d * se * ca, d * se * sa, d * ce])
    elems = config.ris.element_positions
    diff = ue_xyz - elems                      # (n_ris, 3)
    d_ru = np.linalg.norm(diff, axis=1)
    if np.any(d_ru < 1e-9):
        raise GeometryError("UE coincides with an RIS element")
    direction = np.array([
        [se * ca, se * sa, ce],                # d p_u / d d_Ru
        [-d * se * sa, d * se * ca, 0.0],      # d p_u / d phi_az
        [d * ce * ca, d * ce * sa, -d * se],   # d p_u / d phi_el
    ])
    return ue_xyz, d_ru, diff @ direction.T / d_ru[:, None]  # (n_ris, 3)


def g_matrix_position_gradient(polar: PolarPosition, config: ScenarioConfig):
    """G and its three position partials stacked as (3, n_ris, n_subcarriers).

    Only the element-to-UE range depends on the user position, so each
    partial is G scaled by -(1/d_ru + j 2 pi n B /(N c)) d d_ru/d xi.
    """
    ue_xyz, d_ru, ddru = _range_derivatives(polar, config)
    g = g_matrix(ue_xyz, config, check_fresnel=False).g
    n_idx = np.arange(config.n_subcarriers)
    freq_step = config.bandwidth_hz / config.n_subcarriers
    radial = (1.0 / d_ru)[:, None] + 2j * np.pi * n_idx * freq_step / config.light_speed
    core = -g * radial                         # (n_ris, n)
    grads = core[None, :, :] * ddru.T[:, :, None]
    return g, grads


def channel_position_gradient(polar: PolarPosition, w, config: ScenarioConfig, which: str):
    """Analytic d h / d xi for one polar coordinate ``which``."""
    if which not in POSITION_PARAMS:
        raise ValueError(f"which must be one of {POSITION_PARAMS}")
    _, grads = g_matrix_position_gradient(polar, config)
    return grads[POSITION_PARAMS.index(which)].T @ np.asarray(w, dtype=complex)


def channel_and_gradients(polar: PolarPosition, w, config: ScenarioConfig):
    """Channel vector plus all three position gradients in one pass."""
    g, grads = g_matrix_position_gradient(polar, config)
    w = np.asarray(w, dtype=complex)
    return g.T @ w, np.einsum("krn,r->kn", grads, w)


def cfo_phase_ramp(phi: float, n: int) -> np.ndarray:
    """Diagonal of Lam_phi: exp(j 2 pi n phi / N)."""
    return np.exp(2j * np.pi * np.arange(n) * phi / n)


@dataclass(frozen=True)
class ReceivedSignal:
    """Received samples with the generating impairments kept for evaluation."""

    y: np.ndarray
    true_phi: float
    true_theta: PhaseNoisePath
    field_names: tuple = field(default=("index", "re", "im"), repr=False)

    def to_csv_rows(self):
        for i, v in enumerate(self.y):
            yield i, v.real, v.imag


def synthesize_received(ue, w, phi: float, theta: PhaseNoisePath,
                        pilots: PilotSequence, config: ScenarioConfig,
                        rng_seed=None) -> ReceivedSignal:
    """Impaired received signal; ``rng_seed=None`` means noise-free."""
    if abs(phi) >= 0.5:
        raise ValueError("normalized CFO must satisfy |phi| < 0.5")
    n = config.n_subcarriers
    if len(pilots) != n:
        raise ValueError("pilot length does not match subcarrier count")
    h = channel_vector(ue, w, config).h
    s_t = build_signal_matrix(pilots).matrix.T
    clean = (np.sqrt(config.tx_power_w)
             * cfo_phase_ramp(phi, n) * np.exp(1j * theta.theta) * (s_t @ h))
    if rng_seed is None:
        noise = np.zeros(n, dtype=complex)
    else:
        rng = np.random.default_rng(rng_seed)
        scale = np.sqrt(config.noise_power_w / 2.0)
        noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ReceivedSignal(clean + noise, phi, theta)
