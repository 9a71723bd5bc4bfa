import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import dense_pauli, expm_herm, random_state
from nlcevqe.model import ClusterGraph, ModelParams, build_hamiltonian
from nlcevqe.statevector import (
    DimensionError, NonCommutingBlockError, PauliSum, PauliTerm, apply_exp_block,
    apply_pauli_sum, basis_state, expectation_and_square, inner_product, walsh_hadamard,
)

AXES = "IXYZ"


def term(coef, label):
    return PauliTerm(coef, tuple((i, a) for i, a in enumerate(label) if a != "I"))


@st.composite
def pauli_sums(draw, max_sites=5, max_terms=6):
    n = draw(st.integers(1, max_sites))
    labels = draw(st.lists(st.text(AXES, min_size=n, max_size=n), min_size=1, max_size=max_terms))
    coefs = draw(st.lists(st.floats(-2, 2), min_size=len(labels), max_size=len(labels)))
    return PauliSum([term(c, l) for c, l in zip(coefs, labels)], n), list(zip(coefs, labels))


# --- basis states and inner products

def test_basis_state_single_qubit():
    np.testing.assert_array_equal(basis_state(1, "0"), [1, 0])


def test_basis_state_little_endian():
    psi = basis_state(2, "10")
    assert psi[1] == 1 and np.count_nonzero(psi) == 1


def test_basis_state_three_zeros():
    e0 = np.zeros(8)
    e0[0] = 1
    np.testing.assert_array_equal(basis_state(3, "000"), e0)


def test_basis_state_rejects_oversize():
    with pytest.raises(DimensionError):
        basis_state(21, "0" * 21)
    with pytest.raises(DimensionError):
        basis_state(5, "0" * 5, max_qubits=4)


def test_basis_state_length_mismatch():
    with pytest.raises(ValueError):
        basis_state(3, "01")


def test_inner_products():
    assert inner_product(basis_state(3, "000"), basis_state(3, "000")) == 1
    assert inner_product(basis_state(1, "0"), basis_state(1, "1")) == 0
    plus = np.array([1, 1]) / np.sqrt(2)
    assert inner_product(plus, basis_state(1, "0")) == pytest.approx(1 / np.sqrt(2))


def test_inner_product_conjugates_first_argument():
    a = np.array([1j, 0])
    b = np.array([1, 0])
    assert inner_product(a, b) == -1j


# --- apply_pauli_sum

def test_minus_z_on_basis_states():
    h = PauliSum([term(-1.0, "Z")], 1)
    np.testing.assert_allclose(apply_pauli_sum(basis_state(1, "0"), h), [-1, 0])
    np.testing.assert_allclose(apply_pauli_sum(basis_state(1, "1"), h), [0, 1])


def test_two_site_tfim_on_reference():
    h = build_hamiltonian(ClusterGraph.chain(2), ModelParams(J=1.0))
    out = apply_pauli_sum(basis_state(2, "00"), h)
    expect = -2 * basis_state(2, "00") - basis_state(2, "11")
    np.testing.assert_allclose(out, expect, atol=1e-14)


def test_size_mismatch_raises():
    with pytest.raises(DimensionError):
        apply_pauli_sum(np.zeros(4), PauliSum([term(1.0, "ZZZ")], 3))


@given(pauli_sums(max_sites=6), st.integers(0, 2**31 - 1))
def test_matrix_free_matches_dense(op_and_terms, seed):
    op, terms = op_and_terms
    dense = sum(c * dense_pauli(l) for c, l in terms)
    psi = random_state(np.random.default_rng(seed), op.num_sites, cols=3)
    np.testing.assert_allclose(apply_pauli_sum(psi, op), dense @ psi, atol=1e-12)
    np.testing.assert_allclose(op.to_dense(), dense, atol=1e-12)
    np.testing.assert_allclose(op.to_sparse().toarray(), dense, atol=1e-12)


def test_y_factor_phase():
    # Y|0> = i|1>
    out = apply_pauli_sum(basis_state(1, "0"), PauliSum([term(1.0, "Y")], 1))
    np.testing.assert_allclose(out, [0, 1j])


def test_pauli_term_validation():
    with pytest.raises(ValueError):
        PauliTerm(1.0, ((0, "X"), (0, "Z")))
    with pytest.raises(ValueError):
        PauliTerm(1.0, ((0, "W"),))


# --- expectation and variance

def test_expectation_eigenstate():
    h = PauliSum([term(-1.0, "Z")], 1)
    mean, sq = expectation_and_square(basis_state(1, "0"), h)
    assert (mean, sq) == (pytest.approx(-1), pytest.approx(1))


def test_expectation_plus_state():
    h = PauliSum([term(-1.0, "Z")], 1)
    mean, sq = expectation_and_square(np.array([1, 1]) / np.sqrt(2), h)
    assert mean == pytest.approx(0, abs=1e-15) and sq == pytest.approx(1)


def test_expectation_two_site_tfim():
    h = build_hamiltonian(ClusterGraph.chain(2), ModelParams(J=0.5))
    mean, sq = expectation_and_square(basis_state(2, "00"), h)
    assert mean == pytest.approx(-2) and sq == pytest.approx(4.25)


@given(pauli_sums(), st.integers(0, 2**31 - 1))
def test_variance_nonnegative(op_and_terms, seed):
    op, _ = op_and_terms
    psi = random_state(np.random.default_rng(seed), op.num_sites)
    mean, sq = expectation_and_square(psi, op)
    assert sq - mean**2 >= -1e-10


# --- exponential blocks

def test_exp_z_global_phase():
    theta = 0.37
    out = apply_exp_block(basis_state(1, "0"), [(term(1.0, "Z"), theta)])
    np.testing.assert_allclose(out, [np.exp(1j * theta), 0])


def test_exp_x_half_pi():
    out = apply_exp_block(basis_state(1, "0"), [(term(1.0, "X"), np.pi / 2)])
    np.testing.assert_allclose(out, [0, 1j], atol=1e-15)


def test_exp_xx_on_reference():
    theta = 0.81
    out = apply_exp_block(basis_state(2, "00"), [(term(1.0, "XX"), theta)])
    np.testing.assert_allclose(out, [np.cos(theta), 0, 0, 1j * np.sin(theta)], atol=1e-15)


def test_exp_block_rejects_noncommuting():
    with pytest.raises(NonCommutingBlockError):
        apply_exp_block(basis_state(2, "00"), [(term(1.0, "XI"), 0.1), (term(1.0, "ZI"), 0.2)])


@st.composite
def commuting_blocks(draw):
    n = draw(st.integers(1, 6))
    axis = draw(st.sampled_from(["Z", "X", "XX"]))
    if axis == "XX":
        if n < 2:
            axis = "X"
        else:
            pairs = [(i, i + 1) for i in range(n - 1)]
            chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
            angles = draw(st.lists(st.floats(-3, 3), min_size=len(chosen), max_size=len(chosen)))
            return n, [(PauliTerm(1.0, ((i, "X"), (j, "X"))), a) for (i, j), a in zip(chosen, angles)]
    sites = draw(st.lists(st.integers(0, n - 1), min_size=1, unique=True))
    angles = draw(st.lists(st.floats(-3, 3), min_size=len(sites), max_size=len(sites)))
    return n, [(PauliTerm(1.0, ((s, axis),)), a) for s, a in zip(sites, angles)]


@given(commuting_blocks(), st.integers(0, 2**31 - 1))
def test_exp_block_matches_expm(nb, seed):
    n, block = nb
    gen = sum(a * dense_pauli(t.label(n)) for t, a in block)
    psi = random_state(np.random.default_rng(seed), n)
    out = apply_exp_block(psi, block)
    np.testing.assert_allclose(out, expm_herm(gen) @ psi, atol=1e-10)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


# --- Walsh-Hadamard frame

@given(st.integers(0, 9), st.integers(0, 2**31 - 1))
def test_walsh_hadamard_matches_kron(n, seed):
    import scipy.linalg
    psi = random_state(np.random.default_rng(seed), n, cols=2)
    h = scipy.linalg.hadamard(1 << n) / np.sqrt(1 << n)
    np.testing.assert_allclose(walsh_hadamard(psi), h @ psi, atol=1e-12)
    np.testing.assert_allclose(walsh_hadamard(walsh_hadamard(psi[:, 0])), psi[:, 0], atol=1e-12)


def test_hadamard_frame_diagonalises_x():
    n = 3
    idx = np.arange(8)
    for site in range(n):
        lab = ["I"] * n
        lab[site] = "X"
        x = dense_pauli(lab)
        d = walsh_hadamard(walsh_hadamard(x).T).T
        np.testing.assert_allclose(d, np.diag(1 - 2 * ((idx >> site) & 1)), atol=1e-12)
