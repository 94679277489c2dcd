"""Guided modes: field reconstruction, power normalization, (m, n) labelling, census, rasters.

Fields are stored as nodal arrays on the mesh in reduced units where
h stands for Z0*H, so that e = eps^-1 [i curl_t h - beta z x h] / k0 and
the power flux is Re(e x h*).z.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import eigensolver
from .eigensolver import EigenPair, EigenRequest
from .fem import AssembledProblem, Mesh, assemble, build_mesh, check_polarization, index_axis
from .materials import DispersionModel, WaveguideGeometry

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-3


class DegenerateModeError(ValueError):
    """Propagation constant too close to zero to reconstruct h_z."""


@dataclass(frozen=True, eq=False)
class GuidedMode:
    polarization: str
    wavelength_nm: float
    beta: float
    n_eff: float
    mesh: Mesh
    h: np.ndarray  # (3, N) complex
    e: np.ndarray  # (3, N) complex
    dominant: np.ndarray  # real nodal dominant h component from the eigenvector
    label: tuple[int, int] | None = None
    parity: str | None = None
    label_flagged: bool = False
    normalization: str = "none"

    @property
    def dominant_e_axis(self) -> int:
        return 0 if self.polarization == "TE" else 1

    @property
    def dominant_e(self) -> np.ndarray:
        return self.e[self.dominant_e_axis]

    def metadata(self) -> dict:
        return {
            "polarization": self.polarization,
            "wavelength_nm": self.wavelength_nm,
            "n_eff": self.n_eff,
            "beta_per_um": self.beta,
            "label": list(self.label) if self.label is not None else None,
            "parity": self.parity,
            "label_flagged": self.label_flagged,
        }


# ----------------------------------------------------------------------------
# mesh helpers


def _nodal_average(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Area-weighted average of element-constant values at the nodes."""
    area = mesh.areas
    num = np.zeros(mesh.num_nodes, dtype=values.dtype)
    den = np.zeros(mesh.num_nodes)
    for k in range(3):
        np.add.at(num, mesh.triangles[:, k], area * values)
        np.add.at(den, mesh.triangles[:, k], area)
    return num / den


def recovered_gradient(mesh: Mesh, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bx, by = mesh.gradients()
    ut = u[mesh.triangles]
    return _nodal_average(mesh, np.sum(bx * ut, axis=1)), _nodal_average(mesh, np.sum(by * ut, axis=1))


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    area = mesh.areas
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = area[:, None, None] * local
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_nodes
    return sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def integrate_product(mesh: Mesh, f: np.ndarray, g: np.ndarray) -> complex:
    """Exact integral of the product of two P1 interpolants."""
    return complex(f @ (mass_matrix(mesh) @ g))


def mirror_map(mesh: Mesh) -> np.ndarray | None:
    """Node index of the x-mirror image of every node, or None for an asymmetric mesh."""
    xs, ys = mesh.xgrid, mesh.ygrid
    if not np.allclose(xs, -xs[::-1], atol=1e-9):
        return None
    nx, ny = len(xs), len(ys)
    idx = np.arange(nx * ny).reshape(nx, ny)
    return idx[::-1, :].ravel()


def parity_residual(mesh: Mesh, u: np.ndarray) -> tuple[str, float]:
    """('even'|'odd', relative residual of that symmetry)."""
    mp = mirror_map(mesh)
    if mp is None:
        return "even", float("nan")
    norm = np.linalg.norm(u)
    anti = np.linalg.norm(u - u[mp]) / (2 * norm)
    sym = np.linalg.norm(u + u[mp]) / (2 * norm)
    return ("even", float(anti)) if anti <= sym else ("odd", float(sym))


# ----------------------------------------------------------------------------
# reconstruction


def _nodal_eps(problem: AssembledProblem) -> dict:
    return {ax: _nodal_average(problem.mesh, problem.eps[ax]) for ax in ("x", "y", "z")}


def reconstruct_fields(pair: EigenPair, problem: AssembledProblem) -> GuidedMode:
    """Full h and e fields of one eigenpair, power normalized, dominant e real and positive at its peak."""
    if pair.value <= 0 or np.sqrt(pair.value) < 1e-9 * problem.k0:
        raise DegenerateModeError(f"beta^2 = {pair.value} too small")
    mesh = problem.mesh
    beta = float(np.sqrt(pair.value))
    k0 = problem.k0
    u = np.zeros(mesh.num_nodes)
    u[mesh.interior] = pair.vector
    ux, uy = recovered_gradient(mesh, u)
    eps = _nodal_eps(problem)
    h = np.zeros((3, mesh.num_nodes), dtype=complex)
    if problem.polarization == "TE":
        h[1] = u
        h[2] = 1j * uy / beta
    else:
        h[0] = u
        h[2] = 1j * ux / beta
    hzx, hzy = recovered_gradient(mesh, h[2].imag)
    dhz_dx, dhz_dy = 1j * hzx, 1j * hzy
    e = np.zeros_like(h)
    e[0] = (1j * dhz_dy + beta * h[1]) / (eps["x"] * k0)
    e[1] = (-1j * dhz_dx - beta * h[0]) / (eps["y"] * k0)
    curl_z = (recovered_gradient(mesh, h[1].real)[0] - recovered_gradient(mesh, h[0].real)[1])
    e[2] = 1j * curl_z / (eps["z"] * k0)
    mode = GuidedMode(polarization=problem.polarization, wavelength_nm=problem.wavelength_nm, beta=beta,
                      n_eff=beta / k0, mesh=mesh, h=h, e=e, dominant=u)
    return normalize(_fix_phase(mode))


def _fix_phase(mode: GuidedMode) -> GuidedMode:
    dom = mode.dominant_e
    k = int(np.argmax(np.abs(dom)))
    phase = dom[k] / abs(dom[k])
    h = mode.h / phase
    dominant = np.real(h[1] if mode.polarization == "TE" else h[0])
    return dataclasses.replace(mode, h=h, e=mode.e / phase, dominant=dominant)


def power_flux(mode: GuidedMode) -> float:
    M = mass_matrix(mode.mesh)
    flux = mode.e[0] * np.conj(mode.h[1]) - mode.e[1] * np.conj(mode.h[0])
    return float(np.real(np.ones(mode.mesh.num_nodes) @ (M @ flux)))


def normalize(mode: GuidedMode) -> GuidedMode:
    """Scale so that the integrated Poynting flux is 1; already-normalized modes are returned unchanged."""
    if mode.normalization == "power":
        return mode
    s = 1.0 / np.sqrt(power_flux(mode))
    return dataclasses.replace(mode, h=mode.h * s, e=mode.e * s, normalization="power")


def energy_ratio(mode: GuidedMode, problem: AssembledProblem) -> float:
    """Electric over magnetic energy, both per unit length (1 for an exact guided mode)."""
    M = mass_matrix(mode.mesh)
    eps = _nodal_eps(problem)
    we = sum(np.real(np.conj(mode.e[i]) @ (M @ (eps[ax] * mode.e[i]))) for i, ax in enumerate("xyz"))
    wm = sum(np.real(np.conj(mode.h[i]) @ (M @ mode.h[i])) for i in range(3))
    return float(we / wm)


# ----------------------------------------------------------------------------
# labelling


def _grid(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    return values.reshape(len(mesh.xgrid), len(mesh.ygrid))


def _count_sign_changes(line: np.ndarray, floor: float) -> tuple[int, bool]:
    peak = np.max(np.abs(line))
    if peak == 0:
        return 0, True
    def changes(threshold):
        s = np.sign(line[np.abs(line) > threshold * peak])
        return int(np.sum(s[1:] != s[:-1]))

    count = changes(floor)
    # a lobe that only exists between the floor and ten times the floor is ambiguous
    return count, changes(10 * floor) != count


def label_mode(mode: GuidedMode, width: float | None = None) -> tuple[tuple[int, int], str, bool]:
    """(m, n) node counts of the dominant component along cuts through the intensity peak.

    Only the substrate (y >= 0) is inspected; the evanescent air tail is not a node.
    Returns ``((m, n), parity, flagged)``.
    """
    mesh = mode.mesh
    U = _grid(mesh, mode.dominant)
    j0 = int(np.searchsorted(mesh.ygrid, 0.0))
    Us = U[:, j0:]
    i, j = np.unravel_index(int(np.argmax(np.abs(Us))), Us.shape)
    m, amb_m = _count_sign_changes(Us[:, j], NOISE_FLOOR)
    n, amb_n = _count_sign_changes(Us[i, :], NOISE_FLOOR)
    flagged = amb_m or amb_n
    if flagged:
        # second cut line offset by a quarter of the core width
        off = (width if width is not None else 5.0) / 4.0
        xi = mesh.xgrid[i]
        i2 = int(np.argmin(np.abs(mesh.xgrid - (xi + off if xi <= 0 else xi - off))))
        n2, amb2 = _count_sign_changes(Us[i2, :], NOISE_FLOOR)
        if not amb2 and not amb_m:
            n, flagged = n2, False
    parity = "even" if m % 2 == 0 else "odd"
    return (int(m), int(n)), parity, bool(flagged)


def with_label(mode: GuidedMode, width: float | None = None) -> GuidedMode:
    label, parity, flagged = label_mode(mode, width)
    return dataclasses.replace(mode, label=label, parity=parity, label_flagged=flagged)


# ----------------------------------------------------------------------------
# solving


def guided_window(dispersion: DispersionModel, wavelength_nm: float, pol: str) -> tuple[float, float]:
    """(beta^2_min, beta^2_max): substrate and surface-peak index of the polarization's axis."""
    ax = index_axis(pol)
    k0 = 2 * np.pi / (wavelength_nm * 1e-3)
    n0 = float(dispersion.substrate_index(ax, wavelength_nm))
    dn = float(dispersion.increment(ax, wavelength_nm))
    return (n0 * k0) ** 2, ((n0 + dn) * k0) ** 2


def solve_problem(problem: AssembledProblem, dispersion: DispersionModel, max_modes: int | None = None,
                  tolerance: float = 1e-8, seed: int = 0) -> eigensolver.EigenResult:
    lo, hi = guided_window(dispersion, problem.wavelength_nm, problem.polarization)
    mesh = problem.mesh
    inner = mesh.interior

    def parity_of(vec):
        u = np.zeros(mesh.num_nodes)
        u[inner] = vec
        return parity_residual(mesh, u)[0]

    count = 8 if max_modes is None else max_modes
    req = EigenRequest(shift=hi, count=count, interval=(lo, hi), tolerance=tolerance, seed=seed)
    return eigensolver.solve(problem.A, problem.B, req, parity_of=parity_of, max_count=max_modes)


def solve_modes(geometry: WaveguideGeometry, dispersion: DispersionModel | None, wavelength_nm: float,
                pol: str, mesh: Mesh | None = None, resolution: float = 0.4, grading: float = 2.0,
                max_modes: int | None = None, tolerance: float = 1e-8, seed: int = 0) -> list[GuidedMode]:
    """Guided modes at one wavelength, labelled, sorted by beta descending.

    ``max_modes`` limits the solve to the highest ``max_modes`` eigenvalues.
    """
    pol = check_polarization(pol)
    dispersion = dispersion or DispersionModel()
    mesh = mesh or build_mesh(geometry, resolution, grading)
    problem = assemble(mesh, pol, wavelength_nm, geometry, dispersion)
    result = solve_problem(problem, dispersion, max_modes=max_modes, tolerance=tolerance, seed=seed)
    return [with_label(reconstruct_fields(p, problem), geometry.width) for p in result]


def mode_census(geometry: WaveguideGeometry, dispersion: DispersionModel | None, wavelength_nm: float,
                pol: str, resolution: float = 0.4, grading: float = 2.0, mesh: Mesh | None = None) -> int:
    dispersion = dispersion or DispersionModel()
    mesh = mesh or build_mesh(geometry, resolution, grading)
    problem = assemble(mesh, check_polarization(pol), wavelength_nm, geometry, dispersion)
    return len(solve_problem(problem, dispersion))


# ----------------------------------------------------------------------------
# rasters


def intensity(mode: GuidedMode) -> np.ndarray:
    return np.sum(np.abs(mode.e) ** 2, axis=0)


def render_intensity(modes, weights=None, xlim=(-10.0, 10.0), ylim=(-2.0, 25.0), shape=(201, 271)):
    """Peak-normalized raster of sum_k w_k |e_k|^2 (incoherent sum) on a regular grid.

    Returns ``(xs, ys, I)`` with ``I[j, i]`` at ``(xs[i], ys[j])``.
    """
    from scipy.interpolate import RegularGridInterpolator

    if isinstance(modes, GuidedMode):
        modes = [modes]
    weights = np.ones(len(modes)) if weights is None else np.asarray(weights, dtype=float)
    mesh = modes[0].mesh
    total = sum(w * intensity(m) for w, m in zip(weights, modes))
    interp = RegularGridInterpolator((mesh.xgrid, mesh.ygrid), _grid(mesh, total))
    xs = np.linspace(*xlim, shape[0])
    ys = np.linspace(*ylim, shape[1])
    X, Y = np.meshgrid(xs, ys)
    img = interp(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    peak = img.max()
    return xs, ys, img / peak if peak > 0 else img
