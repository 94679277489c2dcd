"""Conforming triangular meshes and P1 Galerkin assembly of the semi-vectorial mode equations.

For polarization ``"TE"`` the dominant magnetic component is h_y and the
equation is

    (eps_x/eps_z) d2h/dx2 + d2h/dy2 + eps_x k0^2 h = beta^2 h

for ``"TM"`` it is h_x with

    d2h/dx2 + (eps_y/eps_z) d2h/dy2 + eps_y k0^2 h = beta^2 h.

Both are discretized as A u = beta^2 B u with Dirichlet zero on the window
boundary, A = k0^2 M_eps - S_K and B the consistent mass matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .materials import ConfigurationError, DispersionModel, WaveguideGeometry, refractive_index

log = logging.getLogger(__name__)

POLARIZATIONS = ("TE", "TM")
# dominant h component, index axis, and the axis whose eps/eps_z scales d2/dx2 or d2/dy2
_POL = {
    "TE": {"h": "y", "eps": "x", "kx": ("x", "z"), "ky": None},
    "TM": {"h": "x", "eps": "y", "kx": None, "ky": ("y", "z")},
}


def check_polarization(pol: str) -> str:
    p = str(pol).upper()
    if p not in POLARIZATIONS:
        raise ValueError(f"unknown polarization {pol!r}")
    return p


def index_axis(pol: str) -> str:
    """Waveguide axis of the permittivity that sets the modal index."""
    return _POL[check_polarization(pol)]["eps"]


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    boundary: np.ndarray  # bool (N,)
    xgrid: np.ndarray
    ygrid: np.ndarray

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Constant P1 basis gradients per triangle, shapes (T, 3) for d/dx and d/dy."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        twice_area = 2.0 * self.areas
        bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / twice_area[:, None]
        by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / twice_area[:, None]
        return bx, by

    def locate(self, x: float, y: float) -> tuple[int, int]:
        """Cell indices (i, j) of the tensor grid containing (x, y)."""
        i = int(np.clip(np.searchsorted(self.xgrid, x) - 1, 0, len(self.xgrid) - 2))
        j = int(np.clip(np.searchsorted(self.ygrid, y) - 1, 0, len(self.ygrid) - 2))
        return i, j

    def to_text(self) -> str:
        lines = [f"nodes {self.num_nodes}"]
        lines += [f"{i} {x:.9g} {y:.9g} {int(b)}" for i, ((x, y), b) in enumerate(zip(self.nodes, self.boundary))]
        lines.append(f"triangles {len(self.triangles)}")
        lines += [f"{k} {a} {b} {c}" for k, (a, b, c) in enumerate(self.triangles)]
        return "\n".join(lines) + "\n"


def _axis_segments(lo: float, hi: float, breaks, fine_halfwidth: float, coarse: float, fine: float,
                   fine_band: tuple[float, float] | None = None, band_spacing: float | None = None):
    """Segment end points and subdivision counts of a graded 1-D grid.

    Spacing is at most ``fine`` within ``fine_halfwidth`` of a break, at most
    ``band_spacing`` (default ``fine``) inside ``fine_band``, and at most
    ``coarse`` elsewhere.
    """
    marks = {lo, hi}
    for b in breaks:
        marks.add(b)
        for s in (-fine_halfwidth, fine_halfwidth):
            if lo < b + s < hi:
                marks.add(b + s)
    if fine_band is not None:
        marks.update(v for v in fine_band if lo < v < hi)
    marks = sorted(marks)
    counts = []
    for a, b in zip(marks[:-1], marks[1:]):
        mid = 0.5 * (a + b)
        near = min(abs(mid - c) for c in breaks) <= fine_halfwidth + 1e-12
        h = fine if near else coarse
        if fine_band is not None and fine_band[0] <= mid <= fine_band[1]:
            h = min(h, band_spacing or fine)
        counts.append(max(1, int(np.ceil((b - a) / h - 1e-9))))
    return marks, counts


def _fill(marks, counts) -> np.ndarray:
    pts = [marks[0]]
    for a, b, n in zip(marks[:-1], marks[1:], counts):
        pts.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(pts)


def _half_x_axis(geometry: WaveguideGeometry, resolution: float, fine: float):
    xmin, xmax, _, _ = geometry.window
    half = geometry.width / 2
    marks, counts = _axis_segments(0.0, max(-xmin, xmax), [half], 1.0, resolution, fine)
    # the core column between the walls is kept fine as well
    if marks[1] < half:
        counts[0] = max(counts[0], int(np.ceil(marks[1] / fine - 1e-9)))
    return marks, counts


def build_mesh(geometry: WaveguideGeometry, resolution: float = 0.4, grading: float = 2.0,
               reference: WaveguideGeometry | None = None) -> Mesh:
    """Tensor-product triangulation conforming to y = 0 and x = +/- w/2.

    Spacing is ``resolution`` far out, ``resolution / grading`` within 1 um of
    the interfaces, and half of that across the core column (plus 1 um) and
    the band from 1 um of air down to the diffusion depth, where the guided
    fields and their evanescent air tails live.

    The grid is mirror symmetric in x and the diagonals are mirrored across
    x = 0, so even and odd modes decouple exactly. With ``reference`` the
    subdivision counts are taken from that geometry, which keeps the mesh
    topology fixed while a dimension is scanned.
    """
    if resolution <= 0 or grading < 1:
        raise ConfigurationError("resolution must be > 0 and grading >= 1")
    xmin, xmax, ymin, ymax = geometry.window
    half = geometry.width / 2
    if not (xmin < -half and xmax > half and ymin < 0 < ymax):
        raise ConfigurationError(f"window {geometry.window} does not contain the core")
    fine = resolution / grading
    # the guided region (core column and diffused layer) gets half the interface spacing
    core = fine / 2
    marks, counts = _half_x_axis(geometry, resolution, core)
    if reference is not None:
        ref_marks, ref_counts = _half_x_axis(reference, resolution, core)
        if len(ref_marks) == len(marks):
            counts = ref_counts
    xpos = _fill(marks, counts)
    xs = np.concatenate([-xpos[:0:-1], xpos])
    xs = xs[(xs >= xmin - 1e-12) & (xs <= xmax + 1e-12)]
    if xs[0] > xmin + 1e-12:
        xs = np.concatenate([[xmin], xs])
    if xs[-1] < xmax - 1e-12:
        xs = np.concatenate([xs, [xmax]])
    depth = (reference or geometry).depth
    ys = _fill(*_axis_segments(ymin, ymax, [0.0], 1.0, resolution, fine, (-1.0, depth), core))

    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    xc = 0.5 * (xs[:-1] + xs[1:])
    right = np.repeat(xc >= 0, ny - 1)
    # right half: diagonal a-c; left half: diagonal b-d (mirror image)
    t1 = np.where(right[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(right[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    triangles = np.concatenate([t1, t2])
    boundary = np.zeros(nx * ny, dtype=bool)
    boundary[idx[0, :]] = boundary[idx[-1, :]] = True
    boundary[idx[:, 0]] = boundary[idx[:, -1]] = True
    mesh = Mesh(nodes=nodes, triangles=triangles, boundary=boundary, xgrid=xs, ygrid=ys)
    if np.any(mesh.areas <= 1e-6):
        raise ConfigurationError("degenerate triangle in mesh")
    return mesh


@dataclass(frozen=True, eq=False)
class AssembledProblem:
    """Generalized eigenproblem A u = beta^2 B u on the interior nodes."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    polarization: str
    wavelength_nm: float
    mesh: Mesh
    eps: dict  # per-triangle permittivities, axis -> (T,)
    k0: float
    asymmetry: float = 0.0

    @property
    def dimension(self) -> int:
        return self.A.shape[0]

    def stats(self) -> dict:
        return {
            "polarization": self.polarization,
            "wavelength_nm": self.wavelength_nm,
            "dimension": int(self.dimension),
            "nnz_A": int(self.A.nnz),
            "nnz_B": int(self.B.nnz),
            "asymmetry": float(self.asymmetry),
        }


def _assemble_p1(mesh: Mesh, kx: np.ndarray, ky: np.ndarray, mass_weight: np.ndarray):
    """Element-constant stiffness sum_K (kx phi_x phi_x + ky phi_y phi_y) and weighted mass."""
    bx, by = mesh.gradients()
    area = mesh.areas
    ke = area[:, None, None] * (kx[:, None, None] * bx[:, :, None] * bx[:, None, :]
                                + ky[:, None, None] * by[:, :, None] * by[:, None, :])
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = (area * mass_weight)[:, None, None] * local_mass
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_nodes
    S = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return S, M


def element_permittivity(mesh: Mesh, wavelength_nm: float, geometry: WaveguideGeometry,
                         dispersion: DispersionModel) -> dict:
    c = mesh.centroids
    return {ax: refractive_index(ax, wavelength_nm, c[:, 0], c[:, 1], geometry, dispersion) ** 2
            for ax in ("x", "y", "z")}


def assemble(mesh: Mesh, pol: str, wavelength_nm: float, geometry: WaveguideGeometry,
             dispersion: DispersionModel | None = None, eps: dict | None = None) -> AssembledProblem:
    """Assemble the quasi-TE or quasi-TM problem at one wavelength.

    ``eps`` may override the per-triangle permittivities (dict of axis arrays).
    """
    pol = check_polarization(pol)
    dispersion = dispersion or DispersionModel()
    if eps is None:
        eps = element_permittivity(mesh, wavelength_nm, geometry, dispersion)
    spec = _POL[pol]
    ones = np.ones(len(mesh.triangles))
    kx = eps[spec["kx"][0]] / eps[spec["kx"][1]] if spec["kx"] else ones
    ky = eps[spec["ky"][0]] / eps[spec["ky"][1]] if spec["ky"] else ones
    k0 = 2 * np.pi / (wavelength_nm * 1e-3)
    S, Meps = _assemble_p1(mesh, kx, ky, eps[spec["eps"]])
    _, M = _assemble_p1(mesh, ones, ones, ones)
    inner = mesh.interior
    A = (k0 ** 2 * Meps - S)[inner][:, inner]
    B = M[inner][:, inner]
    asym = sp.linalg.norm(A - A.T) / max(sp.linalg.norm(A), 1e-300)
    A = ((A + A.T) * 0.5).tocsr()
    B = ((B + B.T) * 0.5).tocsr()
    prob = AssembledProblem(A=A, B=B, polarization=pol, wavelength_nm=float(wavelength_nm), mesh=mesh,
                            eps=eps, k0=k0, asymmetry=float(asym))
    log.debug("assembled %s", prob.stats())
    return prob


def assemble_slab(ygrid: np.ndarray, pol: str, wavelength_nm: float, eps: dict):
    """1-D P1 analogue for an x-uniform profile: returns (A, B) on interior nodes.

    ``eps`` holds per-segment permittivity arrays for axes x, y, z.
    """
    pol = check_polarization(pol)
    spec = _POL[pol]
    k0 = 2 * np.pi / (wavelength_nm * 1e-3)
    hseg = np.diff(ygrid)
    ky = eps[spec["ky"][0]] / eps[spec["ky"][1]] if spec["ky"] else np.ones_like(hseg)
    n = len(ygrid)
    main_s = np.zeros(n)
    main_m = np.zeros(n)
    np.add.at(main_s, np.arange(n - 1), ky / hseg)
    np.add.at(main_s, np.arange(1, n), ky / hseg)
    w = eps[spec["eps"]] * hseg
    np.add.at(main_m, np.arange(n - 1), w / 3)
    np.add.at(main_m, np.arange(1, n), w / 3)
    S = sp.diags([main_s, -ky / hseg, -ky / hseg], [0, 1, -1])
    Me = sp.diags([main_m, w / 6, w / 6], [0, 1, -1])
    mb = np.zeros(n)
    np.add.at(mb, np.arange(n - 1), hseg / 3)
    np.add.at(mb, np.arange(1, n), hseg / 3)
    M = sp.diags([mb, hseg / 6, hseg / 6], [0, 1, -1])
    inner = slice(1, n - 1)
    A = (k0 ** 2 * Me - S).tocsr()[inner][:, inner]
    B = M.tocsr()[inner][:, inner]
    return A.tocsr(), B.tocsr()
