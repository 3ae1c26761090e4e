"""Scenario geometry: coordinates, RIS element layout, delays, Fresnel checks.

The RIS is a uniform planar array on the yz plane with its reference
(bottom-left) element at the origin. User positions are handled both in
Cartesian coordinates and in polar form (range, azimuth, elevation)
relative to the origin.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "GeometryError",
    "Position3",
    "PolarPosition",
    "RisGeometry",
    "ScenarioConfig",
    "cartesian_to_polar",
    "polar_to_cartesian",
    "ris_element_position",
    "propagation_delay",
    "fresnel_interval",
    "fresnel_region_check",
]


class GeometryError(ValueError):
    """Raised for degenerate geometric inputs (origin, coincident points)."""


@dataclass(frozen=True)
class Position3:
    """Cartesian position in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite position ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Position3":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class PolarPosition:
    """Range / azimuth / elevation relative to the RIS reference point.

    d_ru > 0 meters, azimuth in (-pi, pi], elevation in [0, pi]
    measured from the +z axis.
    """

    d_ru: float
    phi_az: float
    phi_el: float

    def __post_init__(self):
        if not (self.d_ru > 0 and math.isfinite(self.d_ru)):
            raise GeometryError(f"range must be positive, got {self.d_ru}")
        if not (-math.pi < self.phi_az <= math.pi):
            raise GeometryError(f"azimuth {self.phi_az} outside (-pi, pi]")
        if not (0.0 <= self.phi_el <= math.pi):
            raise GeometryError(f"elevation {self.phi_el} outside [0, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.d_ru, self.phi_az, self.phi_el], dtype=float)


def cartesian_to_polar(p: Position3) -> PolarPosition:
    """Convert a Cartesian point to (range, azimuth, elevation).

    Azimuth uses the two-argument arctangent so every quadrant maps
    correctly; a point on the +z axis gets azimuth 0 by convention.
    """
    d = math.sqrt(p.x**2 + p.y**2 + p.z**2)
    if d == 0.0:
        raise GeometryError("cannot convert the origin to polar coordinates")
    phi_az = math.atan2(p.y, p.x) if (p.x != 0.0 or p.y != 0.0) else 0.0
    phi_el = math.acos(min(1.0, max(-1.0, p.z / d)))
    return PolarPosition(d, phi_az, phi_el)


def polar_to_cartesian(p: PolarPosition) -> Position3:
    """Inverse of :func:`cartesian_to_polar`."""
    se = math.sin(p.phi_el)
    return Position3(
        p.d_ru * se * math.cos(p.phi_az),
        p.d_ru * se * math.sin(p.phi_az),
        p.d_ru * math.cos(p.phi_el),
    )


def ris_element_position(index: int, spacing: float, n_elements: int) -> Position3:
    """Position of one RIS element.

    Elements are indexed 1..n_elements in row-major order on the yz
    plane: y advances along a row, z advances per row, with the grid a
    sqrt(n_elements) x sqrt(n_elements) square.
    """
    side = math.isqrt(n_elements)
    if side * side != n_elements:
        raise GeometryError(f"n_elements={n_elements} is not a perfect square")
    if not 1 <= index <= n_elements:
        raise GeometryError(f"element index {index} outside [1, {n_elements}]")
    k = index - 1
    return Position3(0.0, spacing * (k % side), spacing * (k // side))


def propagation_delay(a: Position3, b: Position3, c_light: float) -> float:
    """Free-space delay ||a - b|| / c in seconds."""
    dist = float(np.linalg.norm(a.as_array() - b.as_array()))
    if dist == 0.0:
        raise GeometryError("coincident points have no propagation path")
    return dist / c_light


def fresnel_interval(geometry: "RisGeometry", wavelength: float) -> tuple[float, float]:
    """Radiating near-field (Fresnel) distance interval for the array.

    The aperture is the UPA diagonal D = sqrt(2) * d * (sqrt(N_R) - 1);
    the region is [0.62 sqrt(D^3 / lambda), 2 D^2 / lambda].
    """
    side = math.isqrt(geometry.n_elements)
    aperture = math.sqrt(2.0) * geometry.spacing * (side - 1)
    lower = 0.62 * math.sqrt(aperture**3 / wavelength)
    upper = 2.0 * aperture**2 / wavelength
    return lower, upper


def fresnel_region_check(distance: float, geometry: "RisGeometry", wavelength: float) -> bool:
    """True iff ``distance`` lies in the closed Fresnel interval."""
    lower, upper = fresnel_interval(geometry, wavelength)
    return lower <= distance <= upper


@dataclass(frozen=True)
class RisGeometry:
    """Uniform planar RIS array on the yz plane, reference element at origin."""

    n_elements: int
    spacing: float
    element_positions: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        side = math.isqrt(self.n_elements)
        if side * side != self.n_elements:
            raise GeometryError(f"n_elements={self.n_elements} is not a perfect square")
        if not self.spacing > 0:
            raise GeometryError(f"spacing must be positive, got {self.spacing}")
        if self.element_positions is None:
            pos = np.array(
                [ris_element_position(r, self.spacing, self.n_elements).as_array()
                 for r in range(1, self.n_elements + 1)]
            )
            object.__setattr__(self, "element_positions", pos)
        else:
            pos = np.asarray(self.element_positions, dtype=float)
            if pos.shape != (self.n_elements, 3):
                raise GeometryError(f"element_positions shape {pos.shape} invalid")
            if np.any(pos[:, 0] != 0.0):
                raise GeometryError("RIS elements must lie on the yz plane (x = 0)")
            object.__setattr__(self, "element_positions", pos)

    @property
    def side(self) -> int:
        return math.isqrt(self.n_elements)

    @property
    def aperture(self) -> float:
        return math.sqrt(2.0) * self.spacing * (self.side - 1)


# Scenario defaults: single-anchor setup used throughout the experiments.
_DEFAULTS = dict(
    anchor=(2.0, -2.0, 1.0),
    n_ris=81,
    n_subcarriers=32,
    carrier_freq_hz=2.8e9,
    bandwidth_hz=100e6,
    noise_power_dbm=-109.0,
    pn_increment_var=1e-3,
    pn_subspace_dim=16,
    tx_power_dbm=-10.0,
    antenna_gain_tx=1.0,
    antenna_gain_rx=1.0,
    light_speed=3e8,
    aoi_center=(2.0, 2.0, 0.0),
    aoi_edge=1.0,
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full physical scenario: geometry, OFDM numerology, powers, PN statistics."""

    anchor: Position3
    ris: RisGeometry
    n_subcarriers: int
    carrier_freq_hz: float
    bandwidth_hz: float
    noise_power_dbm: float
    pn_increment_var: float
    pn_subspace_dim: int
    tx_power_dbm: float
    antenna_gain_tx: float
    antenna_gain_rx: float
    light_speed: float
    aoi_center: Position3
    aoi_edge: float

    def __post_init__(self):
        n = self.n_subcarriers
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"n_subcarriers={n} must be a power of two")
        if not 1 <= self.pn_subspace_dim <= n:
            raise ValueError(
                f"pn_subspace_dim={self.pn_subspace_dim} outside [1, {n}]")
        if self.pn_increment_var <= 0:
            raise ValueError("pn_increment_var must be positive")
        for name in ("carrier_freq_hz", "bandwidth_hz", "light_speed",
                     "antenna_gain_tx", "antenna_gain_rx"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.aoi_edge < 0:
            raise ValueError("aoi_edge must be nonnegative")

    # -- derived quantities ------------------------------------------------

    @property
    def center_wavelength(self) -> float:
        return self.light_speed / self.carrier_freq_hz

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0) * 1e-3

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** (self.noise_power_dbm / 10.0) * 1e-3

    # -- constructors ------------------------------------------------------

    @classmethod
    def default(cls, **overrides) -> "ScenarioConfig":
        """Baseline scenario; keyword overrides accept the flat field names
        plus ``n_ris`` and ``ris_spacing``."""
        vals = dict(_DEFAULTS)
        n_ris = overrides.pop("n_ris", vals.pop("n_ris"))
        spacing = overrides.pop("ris_spacing", None)
        for key in list(overrides):
            if key in vals:
                vals[key] = overrides.pop(key)
        if overrides:
            raise TypeError(f"unknown overrides: {sorted(overrides)}")
        if spacing is None:
            # element spacing defaults to half the center-carrier wavelength
            spacing = vals["light_speed"] / vals["carrier_freq_hz"] / 2.0
        return cls(
            anchor=Position3(*vals["anchor"]),
            ris=RisGeometry(n_ris, spacing),
            n_subcarriers=vals["n_subcarriers"],
            carrier_freq_hz=vals["carrier_freq_hz"],
            bandwidth_hz=vals["bandwidth_hz"],
            noise_power_dbm=vals["noise_power_dbm"],
            pn_increment_var=vals["pn_increment_var"],
            pn_subspace_dim=vals["pn_subspace_dim"],
            tx_power_dbm=vals["tx_power_dbm"],
            antenna_gain_tx=vals["antenna_gain_tx"],
            antenna_gain_rx=vals["antenna_gain_rx"],
            light_speed=vals["light_speed"],
            aoi_center=Position3(*vals["aoi_center"]),
            aoi_edge=vals["aoi_edge"],
        )

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        """Load a scenario from an INI-style config file.

        Sections and keys (SI units, powers in dBm)::

            [anchor]       x, y, z
            [ris]          n_elements, spacing          (spacing "auto" = lambda/2)
            [ofdm]         n_subcarriers, carrier_freq_hz, bandwidth_hz
            [power]        tx_power_dbm, noise_power_dbm,
                           antenna_gain_tx, antenna_gain_rx
            [phase_noise]  increment_var, subspace_dim
            [aoi]          center_x, center_y, center_z, edge
            [constants]    light_speed

        Any missing key falls back to the baseline default.
        """
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)

        def get(section, key, cast, default):
            if parser.has_option(section, key):
                return cast(parser.get(section, key))
            return default

        d = dict(_DEFAULTS)
        anchor = Position3(
            get("anchor", "x", float, d["anchor"][0]),
            get("anchor", "y", float, d["anchor"][1]),
            get("anchor", "z", float, d["anchor"][2]),
        )
        carrier = get("ofdm", "carrier_freq_hz", float, d["carrier_freq_hz"])
        light_speed = get("constants", "light_speed", float, d["light_speed"])
        spacing_raw = get("ris", "spacing", str, "auto")
        spacing = (light_speed / carrier / 2.0
                   if spacing_raw.strip().lower() == "auto" else float(spacing_raw))
        return cls(
            anchor=anchor,
            ris=RisGeometry(get("ris", "n_elements", int, d["n_ris"]), spacing),
            n_subcarriers=get("ofdm", "n_subcarriers", int, d["n_subcarriers"]),
            carrier_freq_hz=carrier,
            bandwidth_hz=get("ofdm", "bandwidth_hz", float, d["bandwidth_hz"]),
            noise_power_dbm=get("power", "noise_power_dbm", float, d["noise_power_dbm"]),
            pn_increment_var=get("phase_noise", "increment_var", float, d["pn_increment_var"]),
            pn_subspace_dim=get("phase_noise", "subspace_dim", int, d["pn_subspace_dim"]),
            tx_power_dbm=get("power", "tx_power_dbm", float, d["tx_power_dbm"]),
            antenna_gain_tx=get("power", "antenna_gain_tx", float, d["antenna_gain_tx"]),
            antenna_gain_rx=get("power", "antenna_gain_rx", float, d["antenna_gain_rx"]),
            light_speed=light_speed,
            aoi_center=Position3(
                get("aoi", "center_x", float, d["aoi_center"][0]),
                get("aoi", "center_y", float, d["aoi_center"][1]),
                get("aoi", "center_z", float, d["aoi_center"][2]),
            ),
            aoi_edge=get("aoi", "edge", float, d["aoi_edge"]),
        )

    def with_overrides(self, **kw) -> "ScenarioConfig":
        """Copy with replaced fields; ``n_ris`` rebuilds the RIS grid."""
        n_ris = kw.pop("n_ris", None)
        if n_ris is not None:
            kw["ris"] = RisGeometry(n_ris, self.ris.spacing)
        return replace(self, **kw)
