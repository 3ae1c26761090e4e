"""Position error bounds across the area of interest.

Computes the hybrid bound at a few points, shows the Fisher-information
pipeline underneath it, and writes a PEB heatmap CSV that the plotting
package can render.
"""

import numpy as np

from risloc import (
    PilotSequence,
    Position3,
    ScenarioConfig,
    bim,
    cartesian_to_polar,
    fim,
    mu_jacobian,
    peb,
    transition_matrix,
)
from risloc.harness import peb_heatmap
from risloc.hcrlb import hcrlb
from risloc.ris_opt import random_phase_shifts
from risloc.signal import build_pn_covariance

cfg = ScenarioConfig.default(tx_power_dbm=-20.0)
pilots = PilotSequence.qpsk(cfg.n_subcarriers)
w = random_phase_shifts(cfg.ris.n_elements, seed=1).w

# step by step at one point
polar = cartesian_to_polar(Position3(1.9, 2.1, 0.0))
jac = mu_jacobian(polar, w, 0.0, np.zeros(cfg.n_subcarriers), cfg, pilots)
info = fim(jac, cfg.noise_power_w)
cov = build_pn_covariance(cfg.n_subcarriers, cfg.pn_increment_var)
bayes = bim(info, cov)
bound = hcrlb(bayes, transition_matrix(polar, cfg.n_subcarriers))
print("PEB:", bound.peb, "m")
print("CFO+PN bound:", bound.cfo_pn_bound, "rad^2")

# the composite helper gives the same numbers
direct = peb(polar, w, cfg, pilots)
print("composite helper PEB:", direct.peb, "m")

# a coarse heatmap over the AOI plane
rows = peb_heatmap(cfg, w, resolution=11, margin=0.25,
                   out_path="demo_peb_random.csv")
vals = np.array([r[4] for r in rows])
print(f"heatmap: {len(rows)} grid points, PEB from {np.nanmin(vals):.4f} "
      f"to {np.nanmax(vals):.4f} m -> demo_peb_random.csv")
