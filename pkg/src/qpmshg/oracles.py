"""Independent reference calculations used to validate the main solver.

Nothing here imports the mesh, assembly, eigensolver or spectrum code: the
slab solver is a transfer-matrix method with its own bisection, the
autoconvolution is a direct double sum, and the poling coefficients come
from an FFT of a sampled domain pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc


class NoGuidedModeError(ValueError):
    """The requested mode order is not guided by the layer stack."""


@dataclass(frozen=True)
class Layer:
    thickness: float  # um
    index: float
    weight: float = 1.0  # coefficient q of the (q h')' term; 1 for the TE-like scalar problem
    source: float = 1.0  # coefficient p of the p (n^2 k0^2 - beta^2) h term


def _layer_step(h, g, layer: Layer, n_eff, k0: float):
    """Carry (h, q h') across one homogeneous layer of q h'' + p (n^2 k0^2 - beta^2) h = 0.

    Works elementwise on arrays of ``n_eff``. Evanescent layers drop the
    positive factor exp(a d) to avoid overflow; only the sign of the final
    boundary mismatch matters.
    """
    q, d = layer.weight, layer.thickness
    s = layer.source * (layer.index ** 2 - n_eff ** 2) * k0 ** 2 / q
    root = np.sqrt(np.abs(s))
    safe = np.where(root > 0, root, 1.0)
    c, sn = np.cos(root * d), np.sin(root * d)
    ho, go = c * h + sn / (q * safe) * g, -q * root * sn * h + c * g
    e = np.exp(-2 * root * d)
    ch, sh = 0.5 * (1 + e), 0.5 * (1 - e)
    he, ge = ch * h + sh / (q * safe) * g, q * root * sh * h + ch * g
    hl = h + d / q * g
    hn = np.where(s > 0, ho, np.where(s < 0, he, hl))
    gn = np.where(s > 0, go, np.where(s < 0, ge, g))
    return hn, gn


def _dispersion(n_eff, layers: Sequence[Layer], cover: Layer, substrate: Layer, k0: float):
    """Boundary mismatch after integrating from the substrate up to the cover.

    The coordinate runs from the substrate towards the cover. The field starts
    as exp(a_s t) (decaying into the substrate) and must leave as
    exp(-a_c t) (decaying into the cover), i.e. q h' + q_c a_c h = 0 on top.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    a_s = k0 * np.sqrt(np.maximum(n_eff ** 2 - substrate.index ** 2, 0.0) * substrate.source / substrate.weight)
    h, g = np.ones_like(n_eff), substrate.weight * a_s
    for layer in reversed(layers):
        h, g = _layer_step(h, g, layer, n_eff, k0)
        norm = np.hypot(h, g)
        h, g = h / norm, g / norm
    a_c = k0 * np.sqrt(np.maximum(n_eff ** 2 - cover.index ** 2, 0.0) * cover.source / cover.weight)
    return g + cover.weight * a_c * h


def _bisect(f, a: float, b: float, tol: float = 1e-10, maxiter: int = 200) -> float:
    fa = f(a)
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < tol:
            break
    return 0.5 * (a + b)


def slab_effective_index(layers: Sequence[tuple[float, float]] | Sequence[Layer], wavelength_um: float,
                         order: int = 0, cover_index: float = 1.0, substrate_index: float | None = None,
                         polarization: str = "TE", weights: Sequence[float] | None = None,
                         cover_weight: float = 1.0, substrate_weight: float = 1.0,
                         scan_points: int = 4000) -> float:
    """Effective index of mode ``order`` (0 = highest) of a planar layer stack.

    ``layers`` is listed from the cover side to the substrate side as
    ``(thickness_um, index)``. ``weights`` are the coefficients q of the
    (q h')' term per layer (1 for the TE-like scalar problem); for
    ``polarization="TM"`` with ``weights`` None, the classical slab TM problem
    (h'/n^2)' + (k0^2 - beta^2/n^2) h = 0 is solved. The field and q h' are
    continuous across interfaces. Roots are bracketed on a grid uniform in the
    transverse wavenumber, fine enough to separate neighbouring modes of the
    whole stack thickness.
    """
    stack = [lay if isinstance(lay, Layer) else Layer(float(lay[0]), float(lay[1])) for lay in layers]
    if substrate_index is None:
        substrate_index = stack[-1].index
    if polarization not in ("TE", "TM"):
        raise ValueError("polarization must be TE or TM")
    if weights is None and polarization == "TM":
        def tm(thickness, n):
            return Layer(thickness, n, 1.0 / n ** 2, 1.0 / n ** 2)

        stack = [tm(lay.thickness, lay.index) for lay in stack]
        cover, sub = tm(0.0, cover_index), tm(0.0, substrate_index)
    else:
        if weights is not None:
            stack = [Layer(lay.thickness, lay.index, float(w)) for lay, w in zip(stack, weights)]
        cover = Layer(0.0, cover_index, cover_weight)
        sub = Layer(0.0, substrate_index, substrate_weight)
    k0 = 2 * np.pi / wavelength_um
    lo = max(cover_index, substrate_index)
    hi = max(lay.index for lay in stack)
    if hi <= lo:
        raise NoGuidedModeError("no layer index exceeds the outer indices")

    def f(n):
        return float(_dispersion(n, stack, cover, sub, k0))

    umax = k0 * np.sqrt(hi * hi - lo * lo)
    total = sum(lay.thickness for lay in stack)
    points = max(scan_points, int(8 * umax * total / np.pi) + 2)
    u = np.linspace(0.0, umax, points)[:-1]
    grid = np.sqrt(hi * hi - (u / k0) ** 2)
    vals = _dispersion(grid, stack, cover, sub, k0)
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(f, grid[i + 1], grid[i]))
    if order >= len(roots):
        raise NoGuidedModeError(f"mode order {order} not guided ({len(roots)} guided modes)")
    return float(roots[order])


def symmetric_slab_te_index(core_index: float, clad_index: float, thickness_um: float, wavelength_um: float,
                            order: int = 0) -> float:
    """TE mode of a symmetric three-layer slab from the textbook tan relation, by bisection."""
    k0 = 2 * np.pi / wavelength_um
    v = k0 * thickness_um / 2 * np.sqrt(core_index ** 2 - clad_index ** 2)

    def rel(u):
        w = np.sqrt(max(v * v - u * u, 0.0))
        # even modes u tan u = w, odd modes -u cot u = w
        return u * np.sin(u) - w * np.cos(u) if order % 2 == 0 else -u * np.cos(u) - w * np.sin(u)

    lo = order * np.pi / 2
    hi = min((order + 1) * np.pi / 2, v)
    if lo >= v:
        raise NoGuidedModeError("mode below cutoff")
    u = _bisect(rel, lo + 1e-15, hi - 1e-15 if hi < v else hi, tol=1e-14)
    kx = 2 * u / thickness_um
    return float(np.sqrt(core_index ** 2 - (kx / k0) ** 2))


def erfc_stack(surface_increment: float, substrate_index: float, depth_um: float, thickness_um: float = 40.0,
               sublayers: int = 2000) -> list[Layer]:
    """Uniform sub-layers of n(y) = n0 + dn erfc(y/h), sampled at each sub-layer midpoint."""
    if sublayers < 200:
        raise ValueError("the erfc profile needs at least 200 sub-layers")
    d = thickness_um / sublayers
    mid = (np.arange(sublayers) + 0.5) * d
    return [Layer(d, float(substrate_index + surface_increment * erfc(y / depth_um))) for y in mid]


def graded_slab_index(n0: dict, dn: dict, depth_um: float, wavelength_um: float, polarization: str,
                      order: int = 0, thickness_um: float = 40.0, sublayers: int = 2000) -> float:
    """Semi-vectorial slab analogue of the channel guide with an x-uniform erfc profile.

    ``n0`` and ``dn`` map axes x, y, z to substrate indices and surface increments.
    The TE-like problem is h'' + (n_x^2 k0^2 - beta^2) h = 0; the TM-like problem
    is (e_y/e_z) h'' + (n_y^2 k0^2 - beta^2) h = 0 with (e_y/e_z) h' continuous.
    """
    main = "x" if polarization == "TE" else "y"
    stack = erfc_stack(dn[main], n0[main], depth_um, thickness_um, sublayers)
    weights = None
    if polarization == "TM":
        zstack = erfc_stack(dn["z"], n0["z"], depth_um, thickness_um, sublayers)
        weights = [(a.index / b.index) ** 2 for a, b in zip(stack, zstack)]
    sub_weight = 1.0 if polarization == "TE" else (n0["y"] / n0["z"]) ** 2
    return slab_effective_index(stack, wavelength_um, order, cover_index=1.0, substrate_index=n0[main],
                                polarization="TE", weights=weights if weights is not None else [1.0] * len(stack),
                                substrate_weight=sub_weight)


def marcatili_rect_index(width_um: float, height_um: float, core_index: float, clad_index: float,
                         wavelength_um: float, mode: tuple[int, int] = (0, 0)) -> float:
    """Separable estimate for a buried rectangular core: n^2 = n_x^2 + n_y^2 - n_core^2.

    Each factor is a symmetric-slab TE solution. Good to about 1e-3 in n_eff for
    weak guidance; raises NoGuidedModeError below cutoff.
    """
    m, n = mode
    nx = symmetric_slab_te_index(core_index, clad_index, width_um, wavelength_um, m)
    ny = symmetric_slab_te_index(core_index, clad_index, height_um, wavelength_um, n)
    val = nx ** 2 + ny ** 2 - core_index ** 2
    if val <= clad_index ** 2:
        raise NoGuidedModeError("separable estimate below the cladding line")
    return float(np.sqrt(val))


def autoconvolution_spectrum(k: np.ndarray, amplitude: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """|sum_j E(k_j) E(K - k_j) dk|^2 on the sum grid K = k_0 + k_0 + n dk, by direct summation.

    ``k`` must be uniformly spaced. Returns ``(lambda2_nm, intensity)``
    sorted by increasing wavelength.
    """
    k = np.asarray(k, dtype=float)
    e = np.asarray(amplitude)
    dk = k[1] - k[0]
    if not np.allclose(np.diff(k), dk, rtol=1e-9, atol=0):
        raise ValueError("pump grid must be uniform")
    n = len(k)
    out = np.zeros(2 * n - 1, dtype=complex)
    for i in range(n):
        out[i:i + n] += e[i] * e
    K = 2 * k[0] + dk * np.arange(2 * n - 1)
    inten = np.abs(out * dk) ** 2
    lam = 2 * np.pi / K * 1e3
    order = np.argsort(lam)
    return lam[order], inten[order]


def fft_poling_coefficients(duty_ratio: float, orders: Sequence[int], samples: int = 2 ** 16) -> np.ndarray:
    """|c_M| of the +/-1 domain pattern (``+`` on a fraction ``duty_ratio``) from an FFT.

    Cells straddling the domain wall carry their average value, so the result
    does not depend on whether duty_ratio * samples is an integer.
    """
    edges = np.arange(samples + 1) / samples
    plus = np.clip(np.minimum(edges[1:], duty_ratio) - edges[:-1], 0.0, None) * samples
    f = 2 * plus - 1
    spectrum = np.fft.fft(f) / samples
    out = []
    for m in orders:
        # cell averaging multiplies c_M by sinc(M / samples); undo it
        out.append(abs(spectrum[m]) / np.sinc(m / samples))
    return np.array(out)
