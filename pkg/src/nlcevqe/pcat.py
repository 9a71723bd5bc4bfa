"""Projective cluster-additive transformation for the 1QP sector.

Conventions: ``O[a, j] = <chi_a|Phi_j>`` with prepared states on the rows
and unperturbed states on the columns; index 0 is the ground slot. With
this layout the block-diagonalising unitary restricted to the 1QP sector
is ``U1 @ V`` where ``U1`` holds the prepared 1QP states as columns and

    V = Xt (Xt^H Xt)^(-1/2)

is the unitary polar factor of the modified overlap ``Xt``. Its matrix in
the unperturbed basis, ``Xt^H V = (Xt^H Xt)^(1/2)``, is positive definite,
which is the minimal-rotation property of the canonical block transform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import reference_basis
from .statevector import PauliSum, apply_pauli_sum

log = logging.getLogger(__name__)

RANK_TOL = 1e-8
COND_MAX = 1e10
GROUND_OVERLAP_TOL = 1e-8


class IllConditioned(np.linalg.LinAlgError):
    """The Gram matrix of the prepared states is numerically singular."""


class GroundOverlapVanishing(ValueError):
    """The prepared ground state has no weight on the reference state."""


class RankDeficient(np.linalg.LinAlgError):
    """The 1QP overlap matrix lost rank."""


def _herm(m):
    return 0.5 * (m + m.conj().T)


@dataclass
class SubspaceMatrices:
    """``(N+1) x (N+1)`` overlap ``O``, Gram ``S`` and Hamiltonian ``H``."""

    overlap: np.ndarray
    gram: np.ndarray
    ham: np.ndarray
    asymmetry: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.overlap.shape[0] - 1

    def to_dict(self) -> dict:
        return {name: _cplx_to_list(getattr(self, name)) for name in ("overlap", "gram", "ham")} | {
            "asymmetry": self.asymmetry}

    @classmethod
    def from_dict(cls, d: dict) -> "SubspaceMatrices":
        return cls(*(_cplx_from_list(d[k]) for k in ("overlap", "gram", "ham")),
                   asymmetry=d.get("asymmetry", 0.0))


@dataclass
class Effective1QP:
    """Cluster-additive 1QP Hamiltonian with the ground energy already removed."""

    matrix: np.ndarray
    site_coords: np.ndarray
    gs_energy: float

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.site_coords = np.asarray(self.site_coords, dtype=float).reshape(len(self.matrix), -1)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("effective Hamiltonian must be square")

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[0]

    def permuted(self, perm: np.ndarray, coords: np.ndarray) -> "Effective1QP":
        """Relabel sites: old site ``i`` becomes new site ``perm[i]``."""
        n = self.n_sites
        inv = np.empty(n, dtype=int)
        inv[np.asarray(perm)] = np.arange(n)
        return Effective1QP(self.matrix[np.ix_(inv, inv)], coords, self.gs_energy)

    def to_dict(self) -> dict:
        return {
            "matrix": _cplx_to_list(self.matrix),
            "site_coords": self.site_coords.tolist(),
            "gs_energy": self.gs_energy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Effective1QP":
        return cls(_cplx_from_list(d["matrix"]), np.array(d["site_coords"]), d["gs_energy"])


def _cplx_to_list(m):
    m = np.asarray(m)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def _cplx_from_list(d):
    return np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)


def assemble_matrices(gs_state: np.ndarray, one_qp_states, hamiltonian: PauliSum,
                      unperturbed_states) -> SubspaceMatrices:
    """Exact inner products of the prepared and unperturbed states.

    ``one_qp_states`` and ``unperturbed_states`` may be lists of vectors or
    column arrays; ``unperturbed_states`` holds the reference state first.
    """
    chi = np.column_stack([gs_state] + _columns(one_qp_states))
    phi = np.column_stack(_columns(unperturbed_states))
    if chi.shape != phi.shape:
        raise ValueError(f"need N+1 prepared and N+1 unperturbed states, got {chi.shape} and {phi.shape}")
    overlap = chi.conj().T @ phi
    gram = chi.conj().T @ chi
    ham = chi.conj().T @ apply_pauli_sum(chi, hamiltonian)
    asym = max(float(np.abs(gram - gram.conj().T).max()), float(np.abs(ham - ham.conj().T).max()))
    if asym > 1e-10:
        log.info("symmetrising subspace matrices (asymmetry %.2e)", asym)
    return SubspaceMatrices(overlap, _herm(gram), _herm(ham), asym)


def _columns(states):
    if isinstance(states, np.ndarray) and states.ndim == 2:
        return [states[:, i] for i in range(states.shape[1])]
    return [np.asarray(s) for s in states]


def step1_orthonormalize(m: SubspaceMatrices) -> tuple[SubspaceMatrices, np.ndarray, float]:
    """Generalised eigenproblem ``H v = lambda S v``; the lowest eigenvalue is E0.

    Returns the rotated matrices (``O -> W^H O``, ``H -> diag``, ``S -> 1``),
    the ``S``-orthonormal eigenvector matrix ``W`` and ``E0``.
    """
    s_eval = np.linalg.eigvalsh(m.gram)
    if s_eval[0] <= 0 or s_eval[-1] / s_eval[0] > COND_MAX:
        cond = np.inf if s_eval[0] <= 0 else s_eval[-1] / s_eval[0]
        raise IllConditioned(f"Gram matrix condition number {cond:.3e} exceeds {COND_MAX:.0e}")
    lam, w = scipy.linalg.eigh(m.ham, m.gram)
    rotated = SubspaceMatrices(
        overlap=w.conj().T @ m.overlap,
        gram=np.eye(len(lam), dtype=complex),
        ham=np.diag(lam).astype(complex),
        asymmetry=m.asymmetry,
    )
    return rotated, w, float(lam[0])


def step2_modified_overlap(rotated: SubspaceMatrices) -> np.ndarray:
    """``Xt[i, k] = O[i, k] - O[i, 0] O[0, k] / O[0, 0]`` for ``i, k >= 1``."""
    o = rotated.overlap
    if abs(o[0, 0]) <= GROUND_OVERLAP_TOL:
        raise GroundOverlapVanishing(
            f"|<chi0|Phi0>| = {abs(o[0, 0]):.3e}; the ground state has lost the reference")
    return o[1:, 1:] - np.outer(o[1:, 0] / o[0, 0], o[0, 1:])


def polar_unitary(x: np.ndarray, tol: float = RANK_TOL, drop_small: bool = False) -> np.ndarray:
    """``x (x^H x)^(-1/2)`` via the SVD ``x = P diag(s) Q^H``, i.e. ``P Q^H``.

    Singular values below ``tol`` raise :class:`RankDeficient`, or with
    ``drop_small`` are excluded (pseudo-inverse square root), giving a
    partial isometry.
    """
    p, s, qh = np.linalg.svd(x)
    keep = s >= tol
    if not keep.all():
        if not drop_small:
            raise RankDeficient(f"smallest singular value {s.min():.3e} below {tol:.0e}")
        log.warning("dropping %d singular values below %.0e", int((~keep).sum()), tol)
    return p[:, keep] @ qh[keep]


def step3_correction(xt: np.ndarray, tol: float = RANK_TOL, drop_small: bool = False) -> np.ndarray:
    """Unitary correction ``V`` (polar factor of the modified overlap)."""
    return polar_unitary(xt, tol, drop_small)


def step4_effective(rotated_ham: np.ndarray, v: np.ndarray, e0: float, site_coords) -> Effective1QP:
    """``V^H H1 V - E0`` with ``H1`` the 1QP block of the rotated Hamiltonian."""
    h1 = rotated_ham[1:, 1:]
    heff = v.conj().T @ h1 @ v - e0 * np.eye(v.shape[1])
    return Effective1QP(_herm(heff), site_coords, e0)


def pcat_effective(m: SubspaceMatrices, site_coords, *, drop_small: bool = False) -> Effective1QP:
    """Steps 1-4 from raw subspace matrices."""
    rotated, _, e0 = step1_orthonormalize(m)
    xt = step2_modified_overlap(rotated)
    v = step3_correction(xt, drop_small=drop_small)
    return step4_effective(rotated.ham, v, e0, site_coords)


def sw_effective(m: SubspaceMatrices, site_coords, *, drop_small: bool = False) -> Effective1QP:
    """Canonical two-block baseline: the same path with the unmodified overlap.

    ``m`` usually comes from exact eigenstates; Step 1 then only sorts.
    """
    rotated, _, e0 = step1_orthonormalize(m)
    v = step3_correction(rotated.overlap[1:, 1:], drop_small=drop_small)
    return step4_effective(rotated.ham, v, e0, site_coords)


def effective_from_states(gs_state, one_qp_states, hamiltonian: PauliSum, site_coords,
                          method: str = "pcat") -> tuple[Effective1QP, SubspaceMatrices]:
    """Assemble against the unperturbed basis and run PCAT or the SW baseline."""
    ref = reference_basis(hamiltonian.num_sites)
    m = assemble_matrices(gs_state, one_qp_states, hamiltonian, ref)
    if method == "pcat":
        return pcat_effective(m, site_coords), m
    if method == "sw":
        return sw_effective(m, site_coords), m
    raise ValueError(f"unknown method {method!r}")
