"""Walk through the scenario geometry and the impaired received signal.

The anchor sits at (2, -2, 1) m, the RIS occupies the yz plane with its
reference element at the origin, and the user lives in a 1 m cube around
(2, 2, 0) m. One OFDM symbol with 32 subcarriers at 2.8 GHz / 100 MHz
carries the pilot; the receive chain adds a normalized CFO and Wiener
phase noise before the noise floor.
"""

import numpy as np

from risloc import (
    PilotSequence,
    Position3,
    ScenarioConfig,
    build_pn_covariance,
    cartesian_to_polar,
    channel_vector,
    fresnel_interval,
    fresnel_region_check,
    g_matrix,
    sample_phase_noise,
    synthesize_received,
)
from risloc.ris_opt import random_phase_shifts

cfg = ScenarioConfig.default()
print("element spacing (half wavelength):", cfg.ris.spacing, "m")
print("RIS aperture:", cfg.ris.aperture, "m")

lo, hi = fresnel_interval(cfg.ris, cfg.center_wavelength)
print(f"Fresnel region: [{lo:.3f}, {hi:.3f}] m")

ue = Position3(1.9, 2.1, 0.2)
dist = np.linalg.norm(ue.as_array())
print(f"user at {ue.as_array()} -> range {dist:.3f} m, "
      f"inside region: {fresnel_region_check(dist, cfg.ris, cfg.center_wavelength)}")

polar = cartesian_to_polar(ue)
print(f"polar coordinates: range {polar.d_ru:.4f} m, azimuth {polar.phi_az:.4f}, "
      f"elevation {polar.phi_el:.4f} rad")

# cascaded channel through a random reflection pattern
w = random_phase_shifts(cfg.ris.n_elements, seed=0).w
h = channel_vector(ue, w, cfg).h
print("channel magnitude range across subcarriers:",
      float(np.abs(h).min()), "to", float(np.abs(h).max()))

# the per-element factorization satisfies h = G^T w by construction
g = g_matrix(ue, cfg).g
print("h = G^T w max deviation:", float(np.abs(g.T @ w - h).max()))

# one impaired symbol
pilots = PilotSequence.qpsk(cfg.n_subcarriers)
cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
theta = sample_phase_noise(cov, rng_seed=7)
rx = synthesize_received(ue, w, phi=0.11, theta=theta, pilots=pilots,
                         config=cfg, rng_seed=42)
print("received power:", float(np.mean(np.abs(rx.y) ** 2)), "W per sample")
print("noise floor:   ", cfg.noise_power_w, "W per sample")
