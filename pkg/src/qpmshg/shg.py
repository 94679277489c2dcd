"""Quasi-phase-matched SHG: overlap coefficients, phase mismatch, coupling function, spectra.

Frequencies are vacuum wavenumbers k = 2 pi / lambda in 1/um (omega / c);
lengths are in um.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .materials import DomainError, NonlinearTensor, PolingSpec, normalize_type, poling_harmonic_amplitude

log = logging.getLogger(__name__)

ModeKey = tuple  # (polarization, (m, n))


def wavenumber(wavelength_nm):
    return 2 * np.pi / (np.asarray(wavelength_nm, dtype=float) * 1e-3)


def wavelength_nm(k):
    return 2 * np.pi / np.asarray(k, dtype=float) * 1e3


def shg_type(sh_pol: str, pump_pols: Sequence[str]) -> str:
    pumps = sorted(pump_pols)
    if sh_pol == "TM" and pumps == ["TM", "TM"]:
        return "0"
    if sh_pol == "TM" and pumps == ["TE", "TE"]:
        return "I"
    if sh_pol == "TE" and pumps == ["TE", "TM"]:
        return "II"
    raise DomainError(f"no SHG type for {pump_pols} -> {sh_pol}")


@dataclass(frozen=True)
class ProcessTriple:
    """SH mode ``sh`` generated from pump modes ``pump1`` and ``pump2`` via poling harmonic ``harmonic``.

    Mode keys are ``(polarization, (m, n))``. Type II triples put the TE pump first.
    """

    sh: ModeKey
    pump1: ModeKey
    pump2: ModeKey
    harmonic: int = 1

    def __post_init__(self):
        for key in (self.sh, self.pump1, self.pump2):
            if key[0] not in ("TE", "TM"):
                raise DomainError(f"bad mode key {key}")
        object.__setattr__(self, "sh", (self.sh[0], tuple(self.sh[1])))
        object.__setattr__(self, "pump1", (self.pump1[0], tuple(self.pump1[1])))
        object.__setattr__(self, "pump2", (self.pump2[0], tuple(self.pump2[1])))
        shg_type(self.sh[0], (self.pump1[0], self.pump2[0]))

    @property
    def type(self) -> str:
        return shg_type(self.sh[0], (self.pump1[0], self.pump2[0]))

    @property
    def x_parity(self) -> int:
        """Sum of the horizontal node counts modulo 2 (1 means forbidden for an x-even structure)."""
        return (self.sh[1][0] + self.pump1[1][0] + self.pump2[1][0]) % 2

    def swapped(self) -> "ProcessTriple":
        return ProcessTriple(self.sh, self.pump2, self.pump1, self.harmonic)

    @property
    def name(self) -> str:
        def lab(k):
            return f"{k[1][0]}{k[1][1]}"

        return f"{self.pump1[0]}{lab(self.pump1)}+{self.pump2[0]}{lab(self.pump2)}->{self.sh[0]}{lab(self.sh)}/M{self.harmonic}"

    @classmethod
    def type_ii(cls, te, tm, sh, harmonic: int = 1) -> "ProcessTriple":
        return cls(("TE", tuple(sh)), ("TE", tuple(te)), ("TM", tuple(tm)), harmonic)


# ----------------------------------------------------------------------------
# propagation-constant tables


@dataclass(frozen=True, eq=False)
class BetaTable:
    """Cubic fit of beta(k) for one mode, centred and scaled in k for conditioning."""

    k_samples: np.ndarray
    beta_samples: np.ndarray
    degree: int = 3

    def __post_init__(self):
        k = np.asarray(self.k_samples, dtype=float)
        b = np.asarray(self.beta_samples, dtype=float)
        order = np.argsort(k)
        k, b = k[order], b[order]
        deg = min(self.degree, len(k) - 1)
        center, scale = 0.5 * (k[0] + k[-1]), max(0.5 * (k[-1] - k[0]), 1e-12)
        coef = np.polyfit((k - center) / scale, b, deg)
        object.__setattr__(self, "k_samples", k)
        object.__setattr__(self, "beta_samples", b)
        object.__setattr__(self, "_fit", (coef, center, scale))

    @property
    def k_range(self) -> tuple[float, float]:
        return float(self.k_samples[0]), float(self.k_samples[-1])

    def __call__(self, k, strict: bool = True):
        k = np.asarray(k, dtype=float)
        lo, hi = self.k_range
        span = hi - lo
        if strict and (np.any(k < lo - 1e-9 * span - 1e-12) or np.any(k > hi + 1e-9 * span + 1e-12)):
            raise DomainError(f"k outside beta-table range [{lo}, {hi}]")
        coef, center, scale = self._fit
        return np.polyval(coef, (k - center) / scale)

    def derivative(self, k):
        coef, center, scale = self._fit
        return np.polyval(np.polyder(coef), (np.asarray(k, dtype=float) - center) / scale) / scale

    @classmethod
    def dispersionless(cls, n_eff: float, k_range=(5.0, 20.0)) -> "BetaTable":
        k = np.linspace(*k_range, 7)
        return cls(k, n_eff * k)


@dataclass(frozen=True)
class BandTables:
    """Beta tables for the pump band and the SH band, keyed by mode key within each band."""

    pump: Mapping[ModeKey, BetaTable]
    sh: Mapping[ModeKey, BetaTable]


def _bands(tables) -> tuple[Mapping, Mapping]:
    if isinstance(tables, BandTables):
        return tables.sh, tables.pump
    return tables, tables


def phase_mismatch(triple: ProcessTriple, k2, k1, tables: BandTables | Mapping[ModeKey, BetaTable],
                   poling: PolingSpec | None = None, harmonic: int | None = None):
    """beta_sh(k2) - beta_p1(k1) - beta_p2(k2 - k1) - 2 pi M / period.

    ``poling`` None means no grating contribution. A plain mapping serves both bands.
    """
    sh, pump = _bands(tables)
    m = triple.harmonic if harmonic is None else harmonic
    grating = 0.0 if poling is None else 2 * np.pi * m / poling.period
    k2 = np.asarray(k2, dtype=float)
    k1 = np.asarray(k1, dtype=float)
    return sh[triple.sh](k2) - pump[triple.pump1](k1) - pump[triple.pump2](k2 - k1) - grating


def degenerate_mismatch(triple, k2, tables, poling=None):
    return phase_mismatch(triple, k2, 0.5 * np.asarray(k2, dtype=float), tables, poling)


def coupling_gamma(delta_beta, length: float):
    """i (exp(-i dB L) - 1) / dB, continuous at dB = 0 where it equals L."""
    if length <= 0:
        raise DomainError("length must be positive")
    x = np.asarray(delta_beta, dtype=float) * length
    return length * np.exp(-0.5j * x) * np.sinc(x / (2 * np.pi))


# ----------------------------------------------------------------------------
# overlaps

# integrals of barycentric monomials over a triangle, divided by the area
_T3 = np.empty((3, 3, 3))
for _i in range(3):
    for _j in range(3):
        for _k in range(3):
            _T3[_i, _j, _k] = {1: 1 / 10, 2: 1 / 30, 3: 1 / 60}[len({_i, _j, _k})]


def triple_product_integral(mesh, f, g, h) -> complex:
    """Exact integral over the mesh of the product of three P1 interpolants."""
    tri = mesh.triangles
    val = np.einsum("ijk,ti,tj,tk->t", _T3, f[tri], g[tri], h[tri])
    return complex(np.sum(mesh.areas * val))


def _on_mesh(mode, mesh):
    if mode.mesh is mesh or (mode.mesh.num_nodes == mesh.num_nodes and np.array_equal(mode.mesh.nodes, mesh.nodes)):
        return mode.dominant_e, False
    from scipy.interpolate import RegularGridInterpolator

    src = mode.mesh
    grid = mode.dominant_e.reshape(len(src.xgrid), len(src.ygrid))
    re = RegularGridInterpolator((src.xgrid, src.ygrid), grid.real, bounds_error=False, fill_value=0.0)
    im = RegularGridInterpolator((src.xgrid, src.ygrid), grid.imag, bounds_error=False, fill_value=0.0)
    return re(mesh.nodes) + 1j * im(mesh.nodes), True


@dataclass(frozen=True)
class Overlap:
    value: complex
    resampled: bool = False


def overlap_coefficient(triple: ProcessTriple, sh_mode, pump1_mode, pump2_mode,
                        tensor: NonlinearTensor | None = None, poling: PolingSpec | None = None,
                        harmonic_amplitude: float | None = None) -> Overlap:
    """d_M * d_type * integral of conj(e_sh) e_p1 e_p2 over the cross-section (dominant components).

    Units: pm/V times the reduced field normalization per um^2 area element.
    """
    tensor = tensor or NonlinearTensor()
    if harmonic_amplitude is None:
        harmonic_amplitude = poling_harmonic_amplitude(poling or PolingSpec(), triple.harmonic)
    mesh = sh_mode.mesh
    fs, r1 = _on_mesh(sh_mode, mesh)
    f1, r2 = _on_mesh(pump1_mode, mesh)
    f2, r3 = _on_mesh(pump2_mode, mesh)
    resampled = r1 or r2 or r3
    if resampled:
        log.warning("overlap %s: modes on different meshes were resampled", triple.name)
    integral = triple_product_integral(mesh, np.conj(fs), f1, f2)
    return Overlap(harmonic_amplitude * tensor.element(triple.type) * integral, resampled)


# ----------------------------------------------------------------------------
# pump and spectra


@dataclass(frozen=True)
class PumpSpec:
    """Pump spectrum with intensity FWHM ``fwhm_nm`` about ``center_nm``.

    ``shape`` is ``"gaussian"`` or ``"flat"`` (a top hat whose full width is
    ``fwhm_nm``, the spectrally broad limit). ``amplitudes`` maps mode keys to complex modal amplitudes; they are rescaled
    to unit total power. ``passband_nm`` optionally truncates the spectrum.
    """

    center_nm: float = 800.0
    fwhm_nm: float = 10.0
    amplitudes: Mapping = field(default_factory=dict)
    passband_nm: tuple[float, float] | None = None
    shape: str = "gaussian"
    normalize: bool = True

    def __post_init__(self):
        if self.fwhm_nm <= 0:
            raise DomainError("pump FWHM must be positive")
        if self.shape not in ("gaussian", "flat"):
            raise DomainError(f"unsupported pump shape {self.shape!r}")
        amps = {(k[0], tuple(k[1])): complex(v) for k, v in self.amplitudes.items()}
        if self.normalize:
            total = sum(abs(v) ** 2 for v in amps.values())
            if total > 0:
                amps = {k: v / np.sqrt(total) for k, v in amps.items()}
        object.__setattr__(self, "amplitudes", amps)

    @property
    def k_center(self) -> float:
        return float(wavenumber(self.center_nm))

    @property
    def k_fwhm(self) -> float:
        """Intensity FWHM in wavenumber, from the exact wavelength edges."""
        lo = self.center_nm - 0.5 * self.fwhm_nm
        hi = self.center_nm + 0.5 * self.fwhm_nm
        return float(wavenumber(lo) - wavenumber(hi))

    def envelope(self, k):
        """Spectral field amplitude (peak 1) at wavenumber k."""
        k = np.asarray(k, dtype=float)
        if self.shape == "flat":
            lo, hi = wavenumber(self.center_nm + 0.5 * self.fwhm_nm), wavenumber(self.center_nm - 0.5 * self.fwhm_nm)
            amp = ((k >= lo) & (k <= hi)).astype(float)
        else:
            amp = np.exp(-2 * np.log(2) * ((k - self.k_center) / self.k_fwhm) ** 2)
        if self.passband_nm is not None:
            lo, hi = sorted(self.passband_nm)
            kl, kh = wavenumber(hi), wavenumber(lo)
            amp = np.where((k >= kl) & (k <= kh), amp, 0.0)
        return amp

    def amplitude(self, key: ModeKey, k):
        a = self.amplitudes.get((key[0], tuple(key[1])), 0.0)
        return a * self.envelope(k)

    def scaled(self, s: complex) -> "PumpSpec":
        return PumpSpec(self.center_nm, self.fwhm_nm, {k: v * s for k, v in self.amplitudes.items()},
                        self.passband_nm, self.shape, normalize=False)

    def band(self, width_fwhm: float = 3.0) -> tuple[float, float]:
        """Wavenumber interval holding the pump: +/- ``width_fwhm`` FWHM, or the top hat itself."""
        if self.shape == "flat":
            return (float(wavenumber(self.center_nm + 0.5 * self.fwhm_nm)),
                    float(wavenumber(self.center_nm - 0.5 * self.fwhm_nm)))
        half = width_fwhm * self.k_fwhm
        return self.k_center - half, self.k_center + half


@dataclass
class Spectrum:
    """SH spectrum on a wavelength grid.

    ``fields`` maps SH mode keys to complex amplitudes; ``contributions`` maps
    triple names to complex amplitudes of the individual terms.
    """

    wavelength_nm: np.ndarray
    intensity: np.ndarray
    fields: dict = field(default_factory=dict)
    contributions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def contribution_intensity(self, name: str) -> np.ndarray:
        return np.abs(self.contributions[name]) ** 2

    def integrated(self) -> float:
        return float(np.sum(self.intensity * trapezoid_weights(self.wavelength_nm)))


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _pump_truncation_loss(pump: PumpSpec, span: float) -> float:
    if pump.shape == "flat":
        return 0.0
    k = np.linspace(pump.k_center - 10 * pump.k_fwhm, pump.k_center + 10 * pump.k_fwhm, 8001)
    w = np.abs(pump.envelope(k)) ** 2
    inside = np.abs(k - pump.k_center) <= span
    return float(1.0 - np.trapezoid(w * inside, k) / np.trapezoid(w, k))


def sh_spectrum(pump: PumpSpec, triples: Sequence[ProcessTriple], tables: BandTables | Mapping[ModeKey, BetaTable],
                overlaps: Mapping[ProcessTriple, complex], length_um: float, poling: PolingSpec,
                lambda2_nm: np.ndarray, points: int = 2048, span_fwhm: float = 3.0,
                gamma_override=None) -> Spectrum:
    """Undepleted-pump SH spectrum at the device output.

    For each SH wavenumber K the pump integral runs over the window where both
    E(k) and E(K - k) lie inside the pump band (+/- ``span_fwhm`` FWHM of a
    Gaussian, the support of a top hat); that window is symmetric about K/2. ``gamma_override(dbeta)`` replaces the
    coupling function (used for flat phase matching).
    """
    if points < 512:
        raise DomainError("pump grid needs at least 512 points")
    lam2 = np.asarray(lambda2_nm, dtype=float)
    K = wavenumber(lam2)
    loss = _pump_truncation_loss(pump, span_fwhm * pump.k_fwhm)
    if loss > 1e-3:
        warnings.warn(f"pump grid truncation loses {loss:.2%} of the pump energy", RuntimeWarning)
    kmin, kmax = pump.band(span_fwhm)
    lo = np.maximum(kmin, K - kmax)
    hi = np.minimum(kmax, K - kmin)
    valid = hi > lo
    Kv, lo, hi = K[valid], lo[valid], hi[valid]
    t = np.linspace(0.0, 1.0, points)
    k1 = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    weights = np.full(points, 1.0)
    weights[0] = weights[-1] = 0.5
    dk = (hi - lo) / (points - 1)

    fields: dict = {}
    contributions: dict = {}
    for triple in triples:
        D = complex(overlaps[triple])
        e1 = pump.amplitude(triple.pump1, k1)
        e2 = pump.amplitude(triple.pump2, Kv[:, None] - k1)
        term = np.zeros(len(K), dtype=complex)
        if np.any(e1) and np.any(e2):
            dbeta = phase_mismatch(triple, Kv[:, None], k1, tables, poling, triple.harmonic)
            gamma = gamma_override(dbeta) if gamma_override is not None else coupling_gamma(dbeta, length_um)
            integral = (gamma * e1 * e2) @ weights * dk
            beta_sh = _bands(tables)[0][triple.sh](Kv)
            term[valid] = 1j * Kv ** 2 / beta_sh ** 2 * D * integral
        contributions[triple.name] = term
        fields[triple.sh] = fields.get(triple.sh, 0.0) + term
    intensity = sum((np.abs(v) ** 2 for v in fields.values()), np.zeros(len(K)))
    return Spectrum(lam2, intensity, fields, contributions, {"pump_truncation_loss": loss})


def gaussian_fwhm(x, y) -> float:
    """FWHM of the main peak of a sampled curve by linear interpolation of the half-maximum crossings."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = i
    while left > 0 and y[left] > half:
        left -= 1
    right = i
    while right < len(y) - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        return float("nan")
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float(abs(xr - xl))


def broaden(spectrum: Spectrum, fwhm_nm: float) -> Spectrum:
    """Convolve the intensity with a unit-area Gaussian in wavelength.

    Every input sample is spread with weights that sum to one on the grid, so
    the integrated intensity is conserved.
    """
    if fwhm_nm < 0:
        raise DomainError("broadening FWHM must be >= 0")
    if fwhm_nm == 0:
        return spectrum
    lam = spectrum.wavelength_nm
    w = trapezoid_weights(lam)
    sigma = fwhm_nm / (2 * np.sqrt(2 * np.log(2)))
    kern = np.exp(-0.5 * ((lam[:, None] - lam[None, :]) / sigma) ** 2)  # [out, in]
    norm = (kern * w[:, None]).sum(axis=0)
    out = (kern @ (spectrum.intensity * w / norm))
    return Spectrum(lam, out, {}, {}, dict(spectrum.meta, broadening_nm=fwhm_nm))


def polarization_response(alpha_deg, weights: Mapping[str, float], normalized: bool = True):
    """(P_TE-SH, P_TM-SH) versus pump polarization angle (0 deg = TE).

    ``weights`` holds peak conversion weights for types ``"0"``, ``"I"``, ``"II"``.
    Types add incoherently since they radiate at different SH wavelengths.
    With ``normalized`` each curve is divided by its maximum over all angles.
    """
    w = {normalize_type(k): float(v) for k, v in weights.items()}
    if any(v < 0 for v in w.values()):
        raise DomainError("weights must be non-negative")
    a = np.deg2rad(np.asarray(alpha_deg, dtype=float))
    c, s = np.cos(a), np.sin(a)
    p_te = w.get("II", 0.0) * c ** 2 * s ** 2
    p_tm = w.get("0", 0.0) * s ** 4 + w.get("I", 0.0) * c ** 4
    if not normalized:
        return p_te, p_tm
    # w0 t^2 + wI (1-t)^2 is convex in t = sin^2, so the maximum sits at an end point
    te_peak = w.get("II", 0.0) / 4
    tm_peak = max(w.get("0", 0.0), w.get("I", 0.0))
    p_te = p_te / te_peak if te_peak > 0 else p_te
    p_tm = p_tm / tm_peak if tm_peak > 0 else p_tm
    return p_te, p_tm
