import json

import numpy as np
import pytest
from scipy import ndimage

from qpmshg.eigensolver import EigenPair
from qpmshg.fem import assemble
from qpmshg.modes import (DegenerateModeError, energy_ratio, guided_window, mass_matrix, normalize, power_flux,
                          reconstruct_fields, render_intensity, solve_problem)


def by_label(modes, label):
    return next(m for m in modes if m.label == label)


@pytest.fixture(scope="module")
def te_problem(mesh, geometry, dispersion):
    prob = assemble(mesh, "TE", 800.0, geometry, dispersion)
    return prob, solve_problem(prob, dispersion)


def test_plane_wave_limit_has_no_longitudinal_h(mesh, geometry):
    n = 1.8
    eps = {ax: np.full(len(mesh.triangles), n * n) for ax in "xyz"}
    prob = assemble(mesh, "TE", 800.0, geometry, eps=eps)
    pair = EigenPair((n * prob.k0) ** 2, np.ones(prob.dimension), 0.0)
    mode = reconstruct_fields(pair, prob)
    x, y = mesh.nodes.T
    xs, ys = mesh.xgrid, mesh.ygrid
    inner = (x > xs[2]) & (x < xs[-3]) & (y > ys[2]) & (y < ys[-3])
    assert np.max(np.abs(mode.h[2][inner])) < 1e-12 * np.max(np.abs(mode.h[1]))


def test_zero_beta_rejected(te_problem):
    prob, _ = te_problem
    with pytest.raises(DegenerateModeError):
        reconstruct_fields(EigenPair(0.0, np.ones(prob.dimension), 0.0), prob)


def test_fundamental_te_is_x_dominated(modes800):
    m = by_label(modes800["TE"], (0, 0))
    peak = np.max(np.abs(m.e[0]))
    assert np.max(np.abs(m.e[1])) <= 0.15 * peak
    assert np.max(np.abs(m.e[2])) <= 0.15 * peak


def test_fundamental_tm_is_y_dominated(modes800):
    m = by_label(modes800["TM"], (0, 0))
    peak = np.max(np.abs(m.e[1]))
    assert np.max(np.abs(m.e[0])) <= 0.15 * peak
    assert np.max(np.abs(m.e[2])) <= 0.15 * peak


def test_energy_balance(te_problem):
    prob, res = te_problem
    for pair in res:
        mode = reconstruct_fields(pair, prob)
        assert energy_ratio(mode, prob) == pytest.approx(1.0, abs=0.02)


def test_power_normalization_and_idempotence(modes800):
    for mode in modes800["TE"] + modes800["TM"]:
        assert power_flux(mode) == pytest.approx(1.0, rel=1e-12)
        again = normalize(mode)
        assert again is mode
        assert np.array_equal(again.e, mode.e) and np.array_equal(again.h, mode.h)


def test_phase_convention(modes800):
    for mode in modes800["TE"] + modes800["TM"]:
        dom = mode.dominant_e
        k = int(np.argmax(np.abs(dom)))
        assert abs(dom[k].imag) < 1e-12 * abs(dom[k])
        assert dom[k].real > 0


def test_effective_indices_in_guided_window(modes800, dispersion):
    for pol, modes in modes800.items():
        lo, hi = guided_window(dispersion, 800.0, pol)
        k0 = 2 * np.pi / 0.8
        for m in modes:
            assert np.sqrt(lo) / k0 < m.n_eff < np.sqrt(hi) / k0


def test_fundamental_labels(modes800):
    for pol in ("TE", "TM"):
        labels = [m.label for m in modes800[pol]]
        assert modes800[pol][0].label == (0, 0)
        assert modes800[pol][0].parity == "even"
        assert (0, 1) in labels
        assert by_label(modes800[pol], (1, 0)).parity == "odd"


def test_labels_unique_and_unflagged(modes800):
    for pol in ("TE", "TM"):
        labels = [m.label for m in modes800[pol]]
        assert len(set(labels)) == len(labels)
        assert not any(m.label_flagged for m in modes800[pol])


def test_parity_matches_label(modes800):
    for mode in modes800["TE"] + modes800["TM"]:
        assert mode.parity == ("even" if mode.label[0] % 2 == 0 else "odd")


def test_odd_modes_orthogonal_to_even_weights(modes800, mesh):
    M = mass_matrix(mesh)
    even_weight = np.abs(modes800["TE"][0].dominant_e) ** 2
    for mode in modes800["TE"] + modes800["TM"]:
        if mode.parity != "odd":
            continue
        u = mode.dominant_e
        val = abs(even_weight @ (M @ u))
        scale = even_weight @ (M @ np.abs(u))
        assert val < 1e-3 * scale


def test_render_fundamental_single_lobe(modes800, geometry):
    xs, ys, img = render_intensity(by_label(modes800["TE"], (0, 0)))
    assert img.max() == pytest.approx(1.0)
    j, i = np.unravel_index(np.argmax(img), img.shape)
    assert abs(xs[i]) <= geometry.width / 2 and ys[j] >= 0
    _, count = ndimage.label(img > 0.5)
    assert count == 1


def test_render_first_horizontal_mode_two_lobes(modes800, mesh):
    mode = by_label(modes800["TE"], (1, 0))
    xs, ys, img = render_intensity(mode, shape=(201, 271))
    _, count = ndimage.label(img > 0.3)
    assert count == 2
    # the transverse field vanishes on x = 0; only the weak even e_z survives there
    centre = img[:, np.argmin(np.abs(xs))]
    assert centre.max() < 1e-2
    on_axis = np.isclose(mesh.nodes[:, 0], 0.0)
    assert np.max(np.abs(mode.e[0][on_axis])) < 1e-9 * np.max(np.abs(mode.e[0]))


def test_incoherent_sum_single_region(modes800):
    modes = modes800["TE"] + modes800["TM"]
    _, _, img = render_intensity(modes)
    _, count = ndimage.label(img > 0.2)
    assert count == 1


def test_metadata_is_json(modes800):
    text = json.dumps(modes800["TM"][0].metadata())
    data = json.loads(text)
    assert data["label"] == [0, 0] and data["polarization"] == "TM"
