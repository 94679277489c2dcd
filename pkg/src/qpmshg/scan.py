"""Phase-matched wavelengths, optimal poling periods, sensitivity scans and process tables.

The central object is :class:`ModeBank`: guided modes solved at a handful of
wavelengths across the pump band and its half-wavelength image, tracked by
(m, n) label, with cubic beta(k) fits and the band-centre modes kept for
overlap integrals.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from . import cache as cache_mod
from .eigensolver import EigenPair
from .fem import Mesh, assemble, build_mesh
from .materials import DispersionModel, NonlinearTensor, PolingSpec, WaveguideGeometry, normalize_type
from .modes import mass_matrix, reconstruct_fields, solve_problem, with_label
from .shg import (BandTables, BetaTable, DomainError, ProcessTriple, PumpSpec, Spectrum, broaden,
                  coupling_gamma, degenerate_mismatch, gaussian_fwhm, overlap_coefficient, sh_spectrum,
                  trapezoid_weights, wavenumber)

log = logging.getLogger(__name__)

# designated poling harmonic of each type's fundamental process
TYPE_HARMONIC = {"II": 1, "0": 2, "I": 3}
# smallest |<u_ref, u>|_B accepted when carrying a label to another wavelength
TRACK_MIN_OVERLAP = 0.5


class NotPhaseMatchableError(DomainError):
    """No sign change of the mismatch inside the search bracket."""


class NoQPMSolutionError(DomainError):
    """The mismatch has the wrong sign for a positive poling period."""


@dataclass(frozen=True)
class Device:
    geometry: WaveguideGeometry = field(default_factory=WaveguideGeometry)
    dispersion: DispersionModel = field(default_factory=DispersionModel)
    poling: PolingSpec = field(default_factory=PolingSpec)
    tensor: NonlinearTensor = field(default_factory=NonlinearTensor)

    def with_geometry(self, **changes) -> "Device":
        return dataclasses.replace(self, geometry=self.geometry.replace(**changes))

    def with_poling(self, **changes) -> "Device":
        return dataclasses.replace(self, poling=dataclasses.replace(self.poling, **changes))


@dataclass(frozen=True)
class SolverSettings:
    """Mesh and eigensolver knobs shared by every solve of a bank.

    ``sh_modes`` caps the SH-band solve at the highest-beta modes since the
    SH band guides dozens of modes and only the low-order ones take part.
    """

    resolution: float = 0.4
    grading: float = 2.0
    tolerance: float = 1e-8
    seed: int = 0
    samples: int = 7
    sh_modes: int | None = 12
    pump_modes: int | None = None
    threads: int = 1
    cache_dir: str | None = None


def _fingerprint(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _fingerprint(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _fingerprint(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_fingerprint(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


@dataclass
class BandSolution:
    """Labelled modes at one (polarization, wavelength)."""

    polarization: str
    wavelength_nm: float
    modes: list


class ModeBank:
    """Guided modes of one device across the pump band and the SH band.

    The pump band is sampled uniformly in wavenumber over the pump centre
    +/- ``span_fwhm`` intensity FWHM (plus a 2% margin), which is exactly the
    pump quadrature window of the spectrum synthesis; the SH band is its
    half-wavelength image. ``reference`` pins the mesh topology to another
    geometry (width scans).
    """

    def __init__(self, device: Device, pump_center_nm: float = 800.0, pump_fwhm_nm: float = 10.0,
                 settings: SolverSettings | None = None, reference: WaveguideGeometry | None = None,
                 pump_polarizations=("TE", "TM"), sh_polarizations=("TE", "TM"), span_fwhm: float = 3.0):
        self.device = device
        self.settings = settings or SolverSettings()
        if self.settings.samples < 5 or self.settings.samples % 2 == 0:
            raise ValueError("the bank needs an odd number (>= 5) of wavelength samples")
        self.pump_center_nm = float(pump_center_nm)
        self.pump_fwhm_nm = float(pump_fwhm_nm)
        pump = PumpSpec(pump_center_nm, pump_fwhm_nm)
        half = 1.02 * span_fwhm * pump.k_fwhm
        k = np.linspace(pump.k_center + half, pump.k_center - half, self.settings.samples)
        self.pump_wavelengths = 2 * np.pi / k * 1e3
        self.sh_wavelengths = self.pump_wavelengths / 2
        self.reference = reference
        self.pump_polarizations = tuple(pump_polarizations)
        self.sh_polarizations = tuple(sh_polarizations)
        self.cache = cache_mod.ModeCache(self.settings.cache_dir) if self.settings.cache_dir else None
        self.mesh: Mesh | None = None
        self.tables: BandTables | None = None
        self.pump_modes: dict = {}
        self.sh_modes: dict = {}
        self.missing: dict = {}
        self.solutions: dict = {}
        self.reference_wavelengths: dict = {}
        self.tracked: dict = {}

    # -- solving -------------------------------------------------------------

    def _key(self, pol: str, nm: float, max_modes) -> str:
        s = self.settings
        return cache_mod.config_key({
            "geometry": _fingerprint(self.device.geometry),
            "reference": _fingerprint(self.reference),
            "dispersion": _fingerprint(self.device.dispersion),
            "pol": pol, "nm": repr(float(nm)), "max_modes": max_modes,
            "resolution": repr(s.resolution), "grading": repr(s.grading),
            "tolerance": repr(s.tolerance), "seed": s.seed,
        })

    def _solve_one(self, pol: str, nm: float, max_modes) -> BandSolution:
        geometry, dispersion = self.device.geometry, self.device.dispersion
        problem = assemble(self.mesh, pol, float(nm), geometry, dispersion)
        key = self._key(pol, nm, max_modes)
        stored = self.cache.get(key) if self.cache else None
        t0 = time.perf_counter()
        if stored is not None:
            pairs = [EigenPair(float(v), vec, float(r))
                     for v, vec, r in zip(stored["values"], stored["vectors"].T, stored["residuals"])]
        else:
            pairs = list(solve_problem(problem, dispersion, max_modes=max_modes,
                                       tolerance=self.settings.tolerance, seed=self.settings.seed))
            if self.cache:
                n = problem.dimension
                self.cache.put(key, {
                    "values": np.array([p.value for p in pairs]),
                    "vectors": np.column_stack([p.vector for p in pairs]) if pairs else np.zeros((n, 0)),
                    "residuals": np.array([p.residual for p in pairs]),
                })
        modes = [with_label(reconstruct_fields(p, problem), geometry.width) for p in pairs]
        dt = time.perf_counter() - t0
        log.info("modes pol=%s nm=%.4f count=%d cached=%s time=%.2fs", pol, nm, len(modes), stored is not None, dt,
                 extra={"operation": "solve_modes", "duration_s": round(dt, 4), "cache_hit": stored is not None,
                        "max_residual": max((p.residual for p in pairs), default=0.0)})
        return BandSolution(pol, float(nm), modes)

    def build(self) -> "ModeBank":
        s = self.settings
        self.mesh = build_mesh(self.device.geometry, s.resolution, s.grading, reference=self.reference)
        jobs = [("pump", pol, nm, s.pump_modes) for pol in self.pump_polarizations for nm in self.pump_wavelengths]
        jobs += [("sh", pol, nm, s.sh_modes) for pol in self.sh_polarizations for nm in self.sh_wavelengths]
        if s.threads > 1:
            with ThreadPoolExecutor(max_workers=s.threads) as pool:
                results = list(pool.map(lambda j: self._solve_one(j[1], j[2], j[3]), jobs))
        else:
            results = [self._solve_one(j[1], j[2], j[3]) for j in jobs]
        for job, sol in zip(jobs, results):
            self.solutions[(job[0], job[1], float(job[2]))] = sol
        pump_tables, self.pump_modes = self._track("pump", self.pump_polarizations, self.pump_wavelengths)
        sh_tables, self.sh_modes = self._track("sh", self.sh_polarizations, self.sh_wavelengths)
        self.tables = BandTables(pump=pump_tables, sh=sh_tables)
        return self

    def _track(self, band: str, pols, wavelengths):
        """Follow modes across wavelengths, keeping labels present at every sample.

        Labels come from node counting at a reference sample: the one closest
        to the band centre whose labels are all distinct and unflagged (or the
        least ambiguous one). They are carried to the other samples by maximum
        field overlap. Near-degenerate modes of equal parity hybridize close to
        their crossings, which defeats node counting there but not the overlap
        assignment. The reference modes serve the overlap integrals.
        """
        tables, ref_modes = {}, {}
        centre = len(wavelengths) // 2
        mass = mass_matrix(self.mesh)

        def unit(mode):
            u = mode.dominant
            return u / np.sqrt(u @ (mass @ u))

        def ambiguity(modes):
            labels = [m.label for m in modes]
            return len(labels) - len(set(labels)) + sum(m.label_flagged for m in modes)

        for pol in pols:
            samples = [self.solutions[(band, pol, float(nm))].modes for nm in wavelengths]
            ref = min(range(len(wavelengths)), key=lambda i: (ambiguity(samples[i]), abs(i - centre), i))
            reference = {}
            for mode in samples[ref]:
                if mode.label in reference:
                    log.warning("duplicate label %s for %s at %.3f nm; keeping the higher beta",
                                mode.label, pol, wavelengths[ref])
                    continue
                reference[mode.label] = mode
            self.reference_wavelengths[(band, pol)] = float(wavelengths[ref])
            labels = sorted(reference)
            ref_vecs = np.column_stack([unit(reference[lab]) for lab in labels]) if labels else None
            betas = {lab: [] for lab in labels}
            for i, modes in enumerate(samples):
                found = dict.fromkeys(labels)
                if i == ref:
                    found = dict(reference)
                elif modes and labels:
                    vecs = np.column_stack([unit(m) for m in modes])
                    overlap = np.abs(ref_vecs.T @ (mass @ vecs))
                    rows, cols = linear_sum_assignment(-overlap)
                    for r, c in zip(rows, cols):
                        if overlap[r, c] >= TRACK_MIN_OVERLAP:
                            found[labels[r]] = modes[c]
                for lab in labels:
                    betas[lab].append(found[lab].beta if found[lab] is not None else np.nan)
                    self.tracked.setdefault((band, pol, lab), []).append(found[lab])
            k = wavenumber(wavelengths)
            for lab in labels:
                b = np.array(betas[lab])
                if np.any(np.isnan(b)):
                    self.missing[(band, pol, lab)] = [float(nm) for nm, v in zip(wavelengths, b) if np.isnan(v)]
                    continue
                tables[(pol, lab)] = BetaTable(k, b)
                ref_modes[(pol, lab)] = reference[lab]
        return tables, ref_modes

    # -- conveniences ----------------------------------------------------------

    def require(self):
        if self.tables is None:
            self.build()
        return self

    def pump_keys(self, pol: str | None = None) -> list:
        return [k for k in self.pump_modes if pol is None or k[0] == pol]

    def sh_keys(self, pol: str | None = None) -> list:
        return [k for k in self.sh_modes if pol is None or k[0] == pol]

    @property
    def sh_range_nm(self) -> tuple[float, float]:
        return float(np.min(self.sh_wavelengths)), float(np.max(self.sh_wavelengths))

    def fit_residuals(self) -> dict:
        """Largest |beta - cubic fit| per mode, in 1/um."""
        out = {}
        for band, tables in (("pump", self.tables.pump), ("sh", self.tables.sh)):
            for key, table in tables.items():
                out[(band,) + key] = float(np.max(np.abs(table(table.k_samples) - table.beta_samples)))
        return out

    def overlap(self, triple: ProcessTriple, poling: PolingSpec | None = None):
        return overlap_coefficient(triple, self.sh_modes[triple.sh], self.pump_modes[triple.pump1],
                                   self.pump_modes[triple.pump2], self.device.tensor,
                                   poling or self.device.poling)

    def overlap_drift(self, triple: ProcessTriple) -> float:
        """Largest relative change of |D| when recomputed from the modes at either band edge.

        D is taken as frequency independent; this checks how far that holds
        across the sampled band (NaN when a mode is missing at an edge).
        """
        ref = abs(self.overlap(triple).value)
        keys = [("sh",) + triple.sh, ("pump",) + triple.pump1, ("pump",) + triple.pump2]
        worst = 0.0
        for edge in (0, -1):
            modes = [self.tracked.get(k, [None])[edge] for k in keys]
            if any(m is None for m in modes) or ref == 0:
                return float("nan")
            d = overlap_coefficient(triple, *modes, self.device.tensor, self.device.poling).value
            worst = max(worst, abs(abs(d) - ref) / ref)
        return float(worst)


# ----------------------------------------------------------------------------
# phase matching


@dataclass(frozen=True)
class PhaseMatch:
    triple: ProcessTriple
    wavelength_nm: float
    residual: float
    degenerate: bool = False


def _mismatch_nm(triple, tables, poling):
    def f(lam2_nm):
        return float(degenerate_mismatch(triple, wavenumber(lam2_nm), tables, poling))
    return f


def find_phase_matched_wavelength(triple: ProcessTriple, tables, poling: PolingSpec,
                                  bracket_nm: tuple[float, float], samples: int = 65,
                                  target_nm: float | None = None) -> PhaseMatch:
    """Root of the degenerate-pump mismatch beta_sh(2k) - beta_p1(k) - beta_p2(k) - 2 pi M / period.

    The bracket is scanned on ``samples`` points; the sign change closest to
    ``target_nm`` (bracket centre by default) is refined with Brent's method.
    A mismatch that vanishes on the whole scan is reported as degenerate.
    """
    lo, hi = sorted(bracket_nm)
    f = _mismatch_nm(triple, tables, poling)
    grid = np.linspace(lo, hi, samples)
    vals = np.array([f(x) for x in grid])
    scale = abs(float(_sh_table(tables)[triple.sh](wavenumber(hi))))
    if np.all(np.abs(vals) < 1e-12 * scale):
        return PhaseMatch(triple, float(0.5 * (lo + hi)), float(np.max(np.abs(vals))), degenerate=True)
    exact = np.flatnonzero(vals == 0.0)
    brackets = [i for i in range(samples - 1) if vals[i] * vals[i + 1] < 0]
    target = 0.5 * (lo + hi) if target_nm is None else target_nm
    candidates = [(abs(grid[i] - target), grid[i], None) for i in exact]
    candidates += [(abs(0.5 * (grid[i] + grid[i + 1]) - target), grid[i], grid[i + 1]) for i in brackets]
    if not candidates:
        raise NotPhaseMatchableError(f"{triple.name}: no phase matching in [{lo:.3f}, {hi:.3f}] nm")
    _, a, b = min(candidates)
    root = a if b is None else brentq(f, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
    res = f(root)
    if abs(res) >= 1e-6:
        raise NotPhaseMatchableError(f"{triple.name}: root refinement stalled (|dbeta| = {res:.2e})")
    return PhaseMatch(triple, float(root), abs(res))


def _sh_table(tables):
    return tables.sh if isinstance(tables, BandTables) else tables


def _pump_table(tables):
    return tables.pump if isinstance(tables, BandTables) else tables


def mismatch_slope(triple: ProcessTriple, tables, lam2_nm: float) -> float:
    """d(dbeta)/d(lambda_2) of the degenerate mismatch, in 1/(um nm), from the cubic fits."""
    sh, pump = _sh_table(tables), _pump_table(tables)
    K = float(wavenumber(lam2_nm))
    dK = sh[triple.sh].derivative(K) - 0.5 * (pump[triple.pump1].derivative(K / 2) + pump[triple.pump2].derivative(K / 2))
    return float(dK * (-K / lam2_nm))


@dataclass(frozen=True)
class PolingResult:
    """Optimum period 2 pi / dbeta of a type's fundamental triple.

    ``harmonic`` is the poling harmonic through which the type is reached in
    the device; ``harmonic_period_um`` is the period whose ``harmonic``-th
    Fourier component phase-matches (``harmonic`` times the optimum period).
    """

    shg_type: str
    harmonic: int
    period_um: float
    harmonic_period_um: float
    mismatch_per_um: float
    triple: ProcessTriple


def fundamental_triple(shg_type, harmonic: int | None = None) -> ProcessTriple:
    t = normalize_type(shg_type)
    m = TYPE_HARMONIC[t] if harmonic is None else harmonic
    o = (0, 0)
    if t == "II":
        return ProcessTriple.type_ii(o, o, o, m)
    if t == "0":
        return ProcessTriple(("TM", o), ("TM", o), ("TM", o), m)
    return ProcessTriple(("TM", o), ("TE", o), ("TE", o), m)


def optimal_poling_period(shg_type, pump_nm: float, tables, harmonic: int | None = None) -> PolingResult:
    """Optimum poling period of the type's fundamental triple at ``pump_nm`` (degenerate pumping)."""
    triple = fundamental_triple(shg_type, harmonic)
    dbeta = float(degenerate_mismatch(triple, wavenumber(pump_nm / 2), tables))
    if dbeta <= 0:
        raise NoQPMSolutionError(f"type {triple.type}: mismatch {dbeta:.4g} 1/um is not positive")
    return PolingResult(triple.type, triple.harmonic, 2 * np.pi / dbeta, 2 * np.pi * triple.harmonic / dbeta,
                        dbeta, triple)


# ----------------------------------------------------------------------------
# sensitivity scans

SENSITIVITY_TRIPLES = (
    ProcessTriple.type_ii((0, 0), (0, 0), (0, 0)),
    ProcessTriple.type_ii((0, 0), (0, 0), (0, 1)),
    ProcessTriple.type_ii((0, 1), (0, 1), (0, 0)),
    ProcessTriple.type_ii((0, 1), (0, 1), (0, 1)),
    ProcessTriple.type_ii((1, 0), (0, 0), (1, 0)),
)

PROCESS_TABLE_TRIPLES = (
    ProcessTriple.type_ii((0, 0), (0, 0), (0, 0)),
    ProcessTriple.type_ii((0, 0), (0, 0), (0, 1)),
    ProcessTriple.type_ii((1, 0), (0, 0), (1, 0)),
    ProcessTriple.type_ii((0, 1), (0, 1), (0, 0)),
    ProcessTriple.type_ii((1, 0), (0, 1), (1, 0)),
    ProcessTriple.type_ii((0, 1), (0, 1), (0, 1)),
)


@dataclass
class ScanResult:
    """Phase-matched SH wavelength shifts of several triples against one parameter.

    ``shifts_nm[i, j]`` is the shift of triple ``j`` at sample ``i`` relative to
    the triple's own nominal wavelength; NaN marks a missing sample.
    """

    parameter: str
    values: np.ndarray
    nominal: float
    triples: list
    wavelengths_nm: np.ndarray
    shifts_nm: np.ndarray
    slopes: np.ndarray
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("scan grid must be strictly increasing")

    def spread(self) -> np.ndarray:
        """max - min of the shift over the scanned range, per triple."""
        return np.nanmax(self.shifts_nm, axis=0) - np.nanmin(self.shifts_nm, axis=0)

    def rows(self):
        for i, v in enumerate(self.values):
            for j, t in enumerate(self.triples):
                yield self.parameter, float(v), t.name, float(self.shifts_nm[i, j])


def _slope(values, y, nominal):
    ok = np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    x, y = values[ok], y[ok]
    i = int(np.argmin(np.abs(x - nominal)))
    lo, hi = max(i - 1, 0), min(i + 1, len(x) - 1)
    return float((y[hi] - y[lo]) / (x[hi] - x[lo]))


def _roots(bank_tables, poling, triples, bracket, targets=None):
    out, flags = [], []
    for j, t in enumerate(triples):
        try:
            target = None if targets is None or not np.isfinite(targets[j]) else targets[j]
            out.append(find_phase_matched_wavelength(t, bank_tables, poling, bracket, target_nm=target).wavelength_nm)
        except (NotPhaseMatchableError, KeyError, DomainError) as err:
            flags.append(f"{t.name}: {err}")
            out.append(np.nan)
    return np.array(out), flags


def sensitivity_scan(parameter: str, values, triples, device: Device, settings: SolverSettings | None = None,
                     pump_center_nm: float = 800.0, pump_fwhm_nm: float = 10.0, bank: ModeBank | None = None
                     ) -> ScanResult:
    """Re-solve each triple's phase-matched wavelength over a grid of ``parameter`` values.

    ``parameter`` is ``"width"``, ``"depth"`` or ``"period"``. Geometry samples
    re-solve the modes (width samples keep the nominal mesh topology); period
    samples reuse the nominal bank.
    """
    aliases = {"w": "width", "h": "depth", "Lambda": "period", "period_um": "period"}
    parameter = aliases.get(parameter, parameter)
    if parameter not in ("width", "depth", "period"):
        raise DomainError(f"unknown scan parameter {parameter!r}")
    settings = settings or SolverSettings()
    values = np.asarray(values, dtype=float)
    nominal = {"width": device.geometry.width, "depth": device.geometry.depth, "period": device.poling.period}[parameter]
    if not values[0] <= nominal <= values[-1]:
        raise DomainError("scan range must contain the nominal value")
    triples = list(triples)
    bank = bank or ModeBank(device, pump_center_nm, pump_fwhm_nm, settings, pump_polarizations=("TE", "TM"),
                            sh_polarizations=("TE",)).build()
    bracket = bank.sh_range_nm
    base, flags = _roots(bank.tables, device.poling, triples, bracket)
    lam = np.full((len(values), len(triples)), np.nan)
    for i, v in enumerate(values):
        if np.isclose(v, nominal, rtol=0, atol=1e-12):
            lam[i] = base
            continue
        if parameter == "period":
            roots, f = _roots(bank.tables, dataclasses.replace(device.poling, period=float(v)), triples, bracket, base)
        else:
            dev = device.with_geometry(**{parameter: float(v)})
            ref = device.geometry
            b = ModeBank(dev, bank.pump_center_nm, bank.pump_fwhm_nm, settings, reference=ref,
                         pump_polarizations=("TE", "TM"), sh_polarizations=("TE",)).build()
            roots, f = _roots(b.tables, device.poling, triples, bracket, base)
        lam[i] = roots
        flags.extend(f"{parameter}={v:g}: {msg}" for msg in f)
    shifts = lam - base[None, :]
    slopes = np.array([_slope(values, shifts[:, j], nominal) for j in range(len(triples))])
    return ScanResult(parameter, values, float(nominal), triples, lam, shifts, slopes, flags)


def period_slope_analytic(triple: ProcessTriple, tables, poling: PolingSpec, lam2_nm: float) -> float:
    """d(lambda_2*)/d(period) from the implicit-function theorem, nm per um."""
    return float(-(2 * np.pi * triple.harmonic / poling.period ** 2) / mismatch_slope(triple, tables, lam2_nm))


# ----------------------------------------------------------------------------
# spectra and the process table


def allowed_type_ii_triples(bank: ModeBank, threshold: float = 1e-3, poling: PolingSpec | None = None):
    """Type II triples over the bank's modes with |D| above ``threshold`` times the largest |D|."""
    triples = [ProcessTriple(sh, te, tm, 1) for sh in bank.sh_keys("TE") for te in bank.pump_keys("TE")
               for tm in bank.pump_keys("TM")]
    d = {t: bank.overlap(t, poling).value for t in triples}
    peak = max((abs(v) for v in d.values()), default=0.0)
    return [t for t in triples if abs(d[t]) >= threshold * peak], d


def uniform_pump(bank: ModeBank, center_nm: float = 800.0, fwhm_nm: float = 10.0) -> PumpSpec:
    keys = bank.pump_keys()
    return PumpSpec(center_nm, fwhm_nm, {k: 1.0 for k in keys})


def ideal_line_width(triple: ProcessTriple, tables, poling: PolingSpec, length_um: float,
                     lam2_nm: float | None = None, bracket_nm=None, points: int = 4001) -> float:
    """FWHM in nm of |Gamma(dbeta(lambda_2))|^2 for degenerate pumping, about the phase-matched wavelength."""
    if lam2_nm is None:
        lam2_nm = find_phase_matched_wavelength(triple, tables, poling, bracket_nm).wavelength_nm
    slope = abs(mismatch_slope(triple, tables, lam2_nm))
    half = 4 * 2.7831 / (length_um * slope)  # a few half-widths
    lam = np.linspace(lam2_nm - half, lam2_nm + half, points)
    dbeta = degenerate_mismatch(triple, wavenumber(lam), tables, poling)
    return gaussian_fwhm(lam, np.abs(coupling_gamma(dbeta, length_um)) ** 2)


@dataclass
class ProcessRow:
    triple: ProcessTriple
    wavelength_nm: float
    rel_power: float
    overlap_abs: float
    peak_intensity: float
    flag: str = ""


def process_table(bank: ModeBank, pump_fwhm_nm: float = 3.0, threshold: float = 1e-3, power: str = "peak",
                  window_nm: float = 1.5, points: int = 601, pump_points: int = 2048) -> list[ProcessRow]:
    """Type II processes with their phase-matched wavelengths and relative powers.

    Every guided pump mode is excited with equal power. The pump is taken
    spectrally broad in the sense that every line sees the same pump spectral
    density: each triple's SH contribution is synthesized with a Gaussian pump
    of ``pump_fwhm_nm`` centred on the triple's degenerate pump wavelength,
    on a local grid of +/- ``window_nm`` about its phase-matched wavelength.
    ``power`` selects the peak spectral intensity or its integral.
    """
    if power not in ("peak", "integrated"):
        raise DomainError("power must be 'peak' or 'integrated'")
    device = bank.device
    triples, d = allowed_type_ii_triples(bank, threshold)
    lo, hi = bank.sh_range_nm
    amplitudes = {k: 1.0 for k in bank.pump_keys()}
    rows = []
    for t in triples:
        try:
            pm = find_phase_matched_wavelength(t, bank.tables, device.poling, (lo, hi))
        except NotPhaseMatchableError:
            continue
        lam = np.linspace(max(lo, pm.wavelength_nm - window_nm), min(hi, pm.wavelength_nm + window_nm), points)
        pump = PumpSpec(2 * pm.wavelength_nm, pump_fwhm_nm, amplitudes)
        try:
            spec = sh_spectrum(pump, [t], bank.tables, {t: d[t]}, device.geometry.length_um, device.poling, lam,
                               points=pump_points)
        except DomainError as err:
            rows.append(ProcessRow(t, pm.wavelength_nm, float("nan"), abs(d[t]), float("nan"), str(err)))
            continue
        inten = spec.contribution_intensity(t.name)
        value = float(inten.max()) if power == "peak" else float(np.sum(inten * trapezoid_weights(lam)))
        rows.append(ProcessRow(t, pm.wavelength_nm, value, abs(d[t]), float(inten.max())))
    top = max((r.rel_power for r in rows if np.isfinite(r.rel_power)), default=1.0)
    for r in rows:
        r.rel_power = r.rel_power / top if top > 0 else 0.0
    rows.sort(key=lambda r: (not np.isfinite(r.rel_power), -np.nan_to_num(r.rel_power), r.triple.name))
    return rows


@dataclass
class GeometrySpectrum:
    value: float
    ideal: Spectrum
    broadened: Spectrum
    lines: dict


def spectrum_vs_geometry(parameter: str, values, device: Device, pump: PumpSpec | None = None,
                         settings: SolverSettings | None = None, lambda2_nm=None, broadening_nm: float = 1.0,
                         threshold: float = 1e-3, pump_points: int = 2048) -> list[GeometrySpectrum]:
    """Uniform-excitation SH spectrum per geometry sample, ideal and broadened."""
    if parameter not in ("width", "depth"):
        raise DomainError("spectrum scans take 'width' or 'depth'")
    settings = settings or SolverSettings()
    out = []
    for v in np.asarray(values, dtype=float):
        dev = device.with_geometry(**{parameter: float(v)})
        centre = pump.center_nm if pump is not None else 800.0
        fwhm = pump.fwhm_nm if pump is not None else 10.0
        bank = ModeBank(dev, centre, fwhm, settings, sh_polarizations=("TE",)).build()
        p = pump or uniform_pump(bank, centre, fwhm)
        if pump is not None and not p.amplitudes:
            p = PumpSpec(p.center_nm, p.fwhm_nm, {k: 1.0 for k in bank.pump_keys()}, p.passband_nm)
        triples, d = allowed_type_ii_triples(bank, threshold)
        lo, hi = bank.sh_range_nm
        lam = np.linspace(lo, hi, 3001) if lambda2_nm is None else np.asarray(lambda2_nm, dtype=float)
        spec = sh_spectrum(p, triples, bank.tables, d, dev.geometry.length_um, dev.poling, lam, points=pump_points)
        lines = {}
        for t in triples:
            try:
                lines[t.name] = find_phase_matched_wavelength(t, bank.tables, dev.poling, (lo, hi)).wavelength_nm
            except NotPhaseMatchableError:
                pass
        spec.meta[parameter] = float(v)
        out.append(GeometrySpectrum(float(v), spec, broaden(spec, broadening_nm), lines))
    return out


def triples_by_name(names) -> list[ProcessTriple]:
    """Parse compact names such as ``"TE00+TM00->TE00/M1"``."""
    out = []
    for name in names:
        body, _, m = name.partition("/M")
        lhs, rhs = body.split("->")
        p1, p2 = lhs.split("+")

        def key(s):
            s = s.strip()
            return s[:2], (int(s[2]), int(s[3]))

        out.append(ProcessTriple(key(rhs), key(p1), key(p2), int(m) if m else 1))
    return out


def process_label(triple: ProcessTriple) -> str:
    """Compact 'TE + TM -> TE' label used by the process table, e.g. ``00 + 00 -> 00``."""
    f = lambda k: f"{k[1][0]}{k[1][1]}"  # noqa: E731
    return f"{f(triple.pump1)} + {f(triple.pump2)} -> {f(triple.sh)}"

