import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlcevqe import nlce
from nlcevqe.ed import ed_effective
from nlcevqe.model import (ClusterGraph, ModelParams, build_hamiltonian, disconnected_union,
                            enumerate_clusters)
from nlcevqe.nlce import (DispersionCurve, MissingCluster, additivity_check, chain_full_expansion,
                          kspace_block, nlce_coefficients, reduced_dispersion_chain,
                          reduced_dispersion_square)
from nlcevqe.pcat import Effective1QP, effective_from_states
from nlcevqe.vqe import OptimizerConfig, prepared_states, solve_cluster


def diag_map(n_max, c=2.0):
    out = {}
    for g in enumerate_clusters("square", n_max):
        out[g.extent] = Effective1QP(c * np.eye(g.n_sites), g.coords, 0.0)
    return out


def chain_eff(n, matrix=None, rng=None):
    g = ClusterGraph.chain(n)
    if matrix is None:
        a = rng.normal(size=(n, n))
        matrix = a + a.T
    return Effective1QP(matrix, g.coords, 0.0)


def test_kspace_identity_block():
    eff = chain_eff(5, 2.0 * np.eye(5))
    assert np.allclose(kspace_block(eff, np.linspace(-3, 3, 7)), 10.0)


def test_kspace_two_site_hopping():
    d, t = 1.7, 0.3
    eff = chain_eff(2, np.array([[d, t], [t, d]]))
    ks = np.linspace(-np.pi, np.pi, 11)
    assert np.allclose(kspace_block(eff, ks), 2 * d + 2 * t * np.cos(ks))


def test_kspace_scalar_momentum_returns_scalar():
    eff = chain_eff(2, np.eye(2))
    assert np.ndim(kspace_block(eff, 0.3)) == 0


def test_kspace_k0_is_entry_sum(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = a + a.conj().T
    assert np.isclose(kspace_block(chain_eff(3, h), 0.0), h.sum())


def test_kspace_brute_force_square(rng):
    g = ClusterGraph.rectangle(2, 3)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    eff = Effective1QP(a + a.conj().T, g.coords, 0.0)
    k = np.array([[0.4, -1.1]])
    r = g.coords
    brute = sum(eff.matrix[i, j] * np.exp(1j * k[0] @ (r[i] - r[j])) for i in range(6) for j in range(6))
    assert np.isclose(kspace_block(eff, k)[0], brute)


def test_flat_band_chain_unperturbed():
    ks = nlce.chain_grid(21)
    for n in range(1, 7):
        prev = chain_eff(n - 1, 2.0 * np.eye(n - 1)) if n > 1 else None
        curve = reduced_dispersion_chain(chain_eff(n, 2.0 * np.eye(n)), prev, ks)
        assert np.allclose(curve.omega, 2.0, atol=1e-12)


@pytest.mark.parametrize("n_max", range(1, 13))
def test_flat_band_square_diagonal(n_max):
    ks = nlce.square_grid(9)
    curve = reduced_dispersion_square(diag_map(n_max), ks, n_max)
    assert np.allclose(curve.omega, 2.0, atol=1e-12)


@pytest.mark.parametrize("n_max", [4, 6])
def test_flat_band_square_from_ed(n_max):
    effs = {}
    for g in enumerate_clusters("square", n_max):
        effs[g.extent] = ed_effective(g, ModelParams(J=0.0))[0]
    ks, _ = nlce.square_path(9)
    curve = reduced_dispersion_square(effs, ks, n_max)
    assert np.allclose(curve.omega, 2.0, atol=1e-10)


@pytest.mark.parametrize("lm,ln", [(3, 3), (3, 4), (4, 3), (5, 4)])
def test_reduced_contribution_of_constant_diagonal_vanishes(lm, ln):
    effs = diag_map(lm * ln, c=1.3)
    ks = nlce.square_grid(5)
    assert np.allclose(nlce.reduced_contribution(effs, (lm, ln), ks), 0.0, atol=1e-12)


def test_coefficients_stencil_single_rectangle():
    coef = nlce_coefficients([(3, 3)])
    expect = {(3, 3): 1, (2, 3): -2, (3, 2): -2, (2, 2): 4, (1, 3): 1, (3, 1): 1,
              (1, 2): -2, (2, 1): -2, (1, 1): 1}
    assert coef == expect


@given(st.integers(1, 16))
def test_coefficients_weight_sum_is_one(n_max):
    # a constant per-site energy c*Lm*Ln must come out as c
    coef = nlce_coefficients(nlce.extents_up_to(n_max))
    assert sum(c * a * b for (a, b), c in coef.items()) == pytest.approx(1.0)


def test_missing_cluster():
    effs = diag_map(4)
    del effs[(2, 1)]
    with pytest.raises(MissingCluster, match="2x1"):
        reduced_dispersion_square(effs, nlce.square_grid(3), 4)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_chain_telescoping(n_max, seed):
    rng = np.random.default_rng(seed)
    effs = {n: chain_eff(n, rng=rng) for n in range(1, n_max + 1)}
    ks = nlce.chain_grid(31)
    full = chain_full_expansion(effs, ks, n_max)
    two = reduced_dispersion_chain(effs[n_max], effs[n_max - 1], ks).omega
    assert np.allclose(full, two, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_inversion_symmetry_of_real_symmetric_input(seed):
    rng = np.random.default_rng(seed)
    g = ClusterGraph.rectangle(2, 3)
    a = rng.normal(size=(6, 6))
    eff = Effective1QP(a + a.T, g.coords, 0.0)
    ks = rng.uniform(-np.pi, np.pi, size=(10, 2))
    assert np.allclose(kspace_block(eff, ks), kspace_block(eff, -ks), atol=1e-12)


@pytest.mark.parametrize("J,h_l", [(0.7, 0.0), (0.5, 0.5)])
def test_ed_chain_curve_symmetric_and_real(J, h_l):
    p = ModelParams(J=J, h_l=h_l)
    e6 = ed_effective(ClusterGraph.chain(6), p)[0]
    e5 = ed_effective(ClusterGraph.chain(5), p)[0]
    ks = nlce.chain_grid(41)
    curve = reduced_dispersion_chain(e6, e5, ks)
    assert np.allclose(curve.omega, curve.omega[::-1], atol=1e-9)


def test_ed_square_curve_symmetric():
    p = ModelParams(J=0.328)
    effs = {g.extent: ed_effective(g, p)[0] for g in enumerate_clusters("square", 6)}
    ks = nlce.square_grid(9)
    curve = reduced_dispersion_square(effs, ks, 6)
    back = reduced_dispersion_square(effs, -ks, 6)
    assert np.allclose(curve.omega, back.omega, atol=1e-9)
    # the model is symmetric under kx <-> ky as well
    swapped = reduced_dispersion_square(effs, ks[:, ::-1], 6)
    assert np.allclose(curve.omega, swapped.omega, atol=1e-9)


def test_dispersion_rejects_complex():
    with pytest.raises(ValueError, match="imaginary"):
        DispersionCurve(np.zeros(2), np.array([1.0, 1.0 + 1e-6j]), 2)


def test_curve_roundtrips():
    curve = DispersionCurve(nlce.chain_grid(5), np.arange(5.0), 4, {"solver": "ed"})
    back = DispersionCurve.from_dict(json.loads(curve.to_json()))
    assert np.array_equal(back.omega, curve.omega)
    assert back.provenance == {"solver": "ed"}
    lines = curve.to_csv().splitlines()
    assert lines[0] == "k,omega,order"
    assert len(lines) == 6
    sq = DispersionCurve(nlce.square_grid(3), np.ones(9), 6)
    assert sq.to_csv().splitlines()[0] == "kx,ky,omega,order"
    assert DispersionCurve.from_dict(sq.to_dict()).momenta.shape == (9, 2)


def test_square_path_geometry():
    ks, dist = nlce.square_path(5)
    assert np.allclose(ks[0], 0) and np.allclose(ks[-1], 0)
    assert np.isclose(dist[-1], 2 * np.pi + np.pi * np.sqrt(2))
    assert len(ks) == 3 * 5


def test_additivity_unperturbed_is_exact():
    a, b = ClusterGraph.chain(2), ClusterGraph.chain(2)
    union = disconnected_union(a, b)
    for method in ("pcat", "sw"):
        ea = ed_effective(a, ModelParams(J=0.0), method)[0]
        eb = ed_effective(b, ModelParams(J=0.0), method)[0]
        eab = ed_effective(union, ModelParams(J=0.0), method)[0]
        assert additivity_check(ea, eb, eab) == 0.0


def test_additivity_shape_mismatch():
    with pytest.raises(ValueError):
        additivity_check(chain_eff(2, np.eye(2)), chain_eff(2, np.eye(2)), chain_eff(3, np.eye(3)))


def test_exact_chain_dispersion_values():
    assert np.isclose(nlce.exact_chain_dispersion(np.pi, 1.0), 4.0)
    assert np.isclose(nlce.exact_chain_dispersion(0.0, 1.0), 0.0)
    assert np.allclose(nlce.exact_chain_dispersion([0.1, 2.0], 0.0), 2.0)


def test_total_variation():
    assert nlce.total_variation([0, 1, 0, 2]) == 4.0
    assert nlce.total_variation(np.full(10, 3.0)) == 0.0


def test_nlce_vqe_matches_ed_below_truncation():
    # chain J = 1: swapping ED for VQE moves the curve far less than a change of order does
    p = ModelParams(J=1.0)
    cfg = OptimizerConfig(max_iterations=3000)
    ks = nlce.chain_grid(61)
    ed_eff = {n: ed_effective(ClusterGraph.chain(n), p)[0] for n in range(2, 6)}
    vqe_eff = {}
    for n in (4, 5):
        g = ClusterGraph.chain(n)
        sol = solve_cluster(g, p, "var-gs-1qp", (n + 1) // 2, "warm-start", cfg, seed=0)
        gs, states = prepared_states(g, sol)
        vqe_eff[n] = effective_from_states(gs, states, build_hamiltonian(g, p), g.coords)[0]
    w_ed = reduced_dispersion_chain(ed_eff[5], ed_eff[4], ks).omega
    w_ed_lower = reduced_dispersion_chain(ed_eff[3], ed_eff[2], ks).omega
    w_vqe = reduced_dispersion_chain(vqe_eff[5], vqe_eff[4], ks).omega
    gap = np.abs(w_ed - w_ed_lower).max()
    assert np.abs(w_vqe - w_ed).max() < 1e-2 * gap
