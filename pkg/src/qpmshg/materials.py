"""Waveguide geometry, graded anisotropic index profile, poling and nonlinear tensor.

Frames: the waveguide frame has x across the channel, y into the substrate
(air at y < 0) and z along propagation. The KTP crystal axes map as
x_c -> z, y_c -> x, z_c -> y.

Lengths are in micrometres, wavelengths are in nanometres at the public
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import erfc

AXES = ("x", "y", "z")
LAMBDA_MIN_NM = 350.0
LAMBDA_MAX_NM = 1100.0

# Reference substrate indices and surface increments (waveguide frame).
REFERENCE_INDEX = {
    400.0: {"x": 1.84435, "y": 1.96775},
    800.0: {"x": 1.75719, "y": 1.84546},
}
REFERENCE_INCREMENT = {
    400.0: {"x": 0.018, "y": 0.019},
    800.0: {"x": 0.009, "y": 0.013},
}

# Fan et al. (1987) flux-grown KTP: n^2 = A + B l^2/(l^2 - C^2) - D l^2, l in um.
KTP_SELLMEIER = {
    "x_c": (2.1146, 0.89188, 0.20861, 0.01320),
    "y_c": (2.1518, 0.87862, 0.21801, 0.01327),
    "z_c": (2.3136, 1.00012, 0.23831, 0.01679),
}
WAVEGUIDE_TO_CRYSTAL = {"x": "y_c", "y": "z_c", "z": "x_c"}


class DomainError(ValueError):
    """Argument outside the validity domain of a model."""


class ConfigurationError(ValueError):
    """Inconsistent geometry or configuration."""


@dataclass(frozen=True)
class WaveguideGeometry:
    """Channel waveguide cross-section and computational window.

    ``window`` is ``(xmin, xmax, ymin, ymax)`` in um; the air band is y < 0.
    """

    width: float = 5.0
    depth: float = 10.0
    length_mm: float = 10.5
    window: tuple[float, float, float, float] = (-15.0, 15.0, -5.0, 40.0)

    def __post_init__(self):
        if self.width <= 0 or self.depth <= 0 or self.length_mm <= 0:
            raise ConfigurationError("width, depth and length must be positive")
        xmin, xmax, ymin, ymax = self.window
        if not (xmin < -self.width / 2 and xmax > self.width / 2):
            raise ConfigurationError(f"window {self.window} does not contain the core column")
        if not (ymin < 0.0 and ymax > 0.0):
            raise ConfigurationError(f"window {self.window} must include air (y<0) and substrate")
        if ymax < min(4.0 * self.depth, 20.0) or xmax - xmin < 2 * self.width:
            raise ConfigurationError(f"window {self.window} too small for the guided region")

    @property
    def length_um(self) -> float:
        return self.length_mm * 1e3

    def replace(self, **changes) -> "WaveguideGeometry":
        data = dict(width=self.width, depth=self.depth, length_mm=self.length_mm, window=self.window)
        data.update(changes)
        return WaveguideGeometry(**data)


def sellmeier_index(axis: str, wavelength_um, coefficients=None):
    """Bulk KTP index along a crystal axis (``x_c``, ``y_c`` or ``z_c``)."""
    a, b, c, d = (coefficients or KTP_SELLMEIER)[axis]
    lam2 = np.asarray(wavelength_um, dtype=float) ** 2
    return np.sqrt(a + b * lam2 / (lam2 - c * c) - d * lam2)


def _linear_through(points: Mapping[float, float]) -> tuple[float, float]:
    (l0, v0), (l1, v1) = sorted(points.items())
    slope = (v1 - v0) / (l1 - l0)
    return v0 - slope * l0, slope


@dataclass(frozen=True)
class DispersionModel:
    """Substrate indices and surface increments as functions of wavelength.

    The substrate index is the Sellmeier value for the mapped crystal axis plus a
    correction linear in wavelength pinned to the reference values at 400 and
    800 nm. The z axis has no reference data and uses the bare Sellmeier fit.
    ``profile`` selects the depth function: ``"decaying"`` uses erfc(y/h),
    ``"printed"`` uses erfc(-y/h).
    """

    sellmeier: Mapping[str, tuple[float, float, float, float]] = field(
        default_factory=lambda: dict(KTP_SELLMEIER)
    )
    reference_index: Mapping[float, Mapping[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in REFERENCE_INDEX.items()}
    )
    reference_increment: Mapping[float, Mapping[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in REFERENCE_INCREMENT.items()}
    )
    z_increment_from: str = "x"
    profile: str = "decaying"

    def __post_init__(self):
        if self.profile not in ("decaying", "printed"):
            raise ConfigurationError(f"unknown depth profile {self.profile!r}")
        corr, incr = {}, {}
        for ax in ("x", "y"):
            pts = {
                lam: self.reference_index[lam][ax]
                - float(sellmeier_index(WAVEGUIDE_TO_CRYSTAL[ax], lam * 1e-3, self.sellmeier))
                for lam in self.reference_index
            }
            corr[ax] = _linear_through(pts)
            incr[ax] = _linear_through({lam: self.reference_increment[lam][ax] for lam in self.reference_increment})
        corr["z"] = (0.0, 0.0)
        incr["z"] = incr[self.z_increment_from]
        object.__setattr__(self, "_correction", corr)
        object.__setattr__(self, "_increment", incr)

    @staticmethod
    def _check(wavelength_nm):
        lam = np.asarray(wavelength_nm, dtype=float)
        if np.any(lam < LAMBDA_MIN_NM) or np.any(lam > LAMBDA_MAX_NM):
            raise DomainError(f"wavelength {wavelength_nm} nm outside [{LAMBDA_MIN_NM}, {LAMBDA_MAX_NM}]")
        return lam

    def substrate_index(self, axis: str, wavelength_nm):
        if axis not in AXES:
            raise DomainError(f"unknown axis {axis!r}")
        lam = self._check(wavelength_nm)
        a, b = self._correction[axis]
        return sellmeier_index(WAVEGUIDE_TO_CRYSTAL[axis], lam * 1e-3, self.sellmeier) + a + b * lam

    def increment(self, axis: str, wavelength_nm):
        if axis not in AXES:
            raise DomainError(f"unknown axis {axis!r}")
        lam = self._check(wavelength_nm)
        a, b = self._increment[axis]
        return a + b * lam

    def depth_profile(self, y, depth):
        y = np.asarray(y, dtype=float)
        arg = y / depth if self.profile == "decaying" else -y / depth
        return erfc(arg)

    def diagnostics(self) -> dict:
        return {
            "z_axis_source": "sellmeier-only",
            "z_increment_from": self.z_increment_from,
            "profile": self.profile,
        }


def refractive_index(axis: str, wavelength_nm: float, x, y, geometry: WaveguideGeometry,
                     dispersion: DispersionModel | None = None):
    """Graded index n_axis(x, y); air (n = 1) for y < 0."""
    dispersion = dispersion or DispersionModel()
    n0 = dispersion.substrate_index(axis, wavelength_nm)
    dn = dispersion.increment(axis, wavelength_nm)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.abs(x) <= geometry.width / 2
    n = n0 + dn * inside * dispersion.depth_profile(np.maximum(y, 0.0), geometry.depth)
    n = np.where(y < 0.0, 1.0, n)
    return n if n.ndim else float(n)


def permittivity_sampler(geometry: WaveguideGeometry, dispersion: DispersionModel,
                         wavelength_nm: float) -> Callable[[np.ndarray, np.ndarray], dict]:
    """Return a function mapping point arrays to ``{axis: eps}`` dictionaries."""

    def sample(x, y):
        return {ax: refractive_index(ax, wavelength_nm, x, y, geometry, dispersion) ** 2 for ax in AXES}

    return sample


@dataclass(frozen=True)
class PolingSpec:
    period: float = 7.62
    duty_ratio: float = 0.5
    harmonic_orders: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError("poling period must be positive")
        if not 0.0 < self.duty_ratio < 1.0:
            raise ConfigurationError("duty ratio must lie in (0, 1)")
        if any(int(m) < 1 for m in self.harmonic_orders):
            raise ConfigurationError("harmonic orders must be >= 1")

    @property
    def grating_vector(self) -> float:
        return 2 * np.pi / self.period


def poling_harmonic_amplitude(spec: PolingSpec | float, order: int) -> float:
    """|c_M| of a +/-1 square wave whose positive fraction is the duty ratio.

    ``spec`` may be a PolingSpec or a bare duty ratio.
    """
    if order < 1:
        raise DomainError("harmonic order must be >= 1")
    duty = spec.duty_ratio if isinstance(spec, PolingSpec) else float(spec)
    s = np.sin(np.pi * order * duty)
    # integer M*duty is an exact zero
    if abs(order * duty - round(order * duty)) < 1e-12:
        return 0.0
    return float(abs(2.0 * s / (np.pi * order)))


SHG_TYPES = ("0", "I", "II")


def normalize_type(shg_type) -> str:
    key = str(shg_type).strip().upper()
    if key in ("0", "ZERO", "TYPE0", "TYPE 0"):
        return "0"
    if key in ("I", "1", "TYPEI", "TYPE I"):
        return "I"
    if key in ("II", "2", "TYPEII", "TYPE II"):
        return "II"
    raise DomainError(f"unknown SHG type {shg_type!r}")


@dataclass(frozen=True)
class NonlinearTensor:
    """Active KTP d elements in pm/V (Kleinman symmetry makes d24 = d32)."""

    elements: Mapping[str, float] = field(default_factory=lambda: {"d33": 10.7, "d32": 2.65})
    selector: Mapping[str, str] = field(default_factory=lambda: {"0": "d33", "I": "d32", "II": "d32"})

    def element(self, shg_type) -> float:
        return float(self.elements[self.selector[normalize_type(shg_type)]])


def nonlinear_element(shg_type, tensor: NonlinearTensor | None = None) -> float:
    return (tensor or NonlinearTensor()).element(shg_type)
