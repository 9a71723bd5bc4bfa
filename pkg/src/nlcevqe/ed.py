"""Exact diagonalisation of clusters and extraction of the 1QP eigenspace."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .model import ClusterGraph, ModelParams, SiteGraph, build_hamiltonian
from .pcat import Effective1QP, SubspaceMatrices, effective_from_states
from .statevector import PauliSum, apply_pauli_sum

log = logging.getLogger(__name__)

DENSE_MAX_SITES = 12
WEIGHT_WARN = 0.5
TIE_TOL = 1e-6
DEGENERACY_TOL = 1e-9


class AdiabaticAmbiguity(RuntimeError):
    """Two eigenstates compete equally for the last 1QP slot."""


class AdiabaticWeightWarning(UserWarning):
    """A selected 1QP eigenstate has little weight on the single-flip span."""


class EigensolverNotConverged(RuntimeError):
    pass


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    def __len__(self):
        return len(self.eigenvalues)

    def residuals(self, h: PauliSum) -> np.ndarray:
        hv = apply_pauli_sum(self.eigenvectors, h)
        return np.linalg.norm(hv - self.eigenvectors * self.eigenvalues, axis=0)


def low_energy_spectrum(h: PauliSum, count: int, *, dense_max_sites: int = DENSE_MAX_SITES,
                        maxiter: int | None = None, tol: float = 0.0) -> Spectrum:
    """The ``count`` lowest eigenpairs, ascending.

    Dense ``eigh`` up to ``dense_max_sites``; above that an implicitly
    restarted Lanczos run on the matrix-free Hamiltonian.
    """
    dim = 1 << h.num_sites
    if not 1 <= count <= dim:
        raise ValueError(f"count must be in [1, {dim}], got {count}")
    if h.num_sites <= dense_max_sites or count >= dim - 1:
        mat = h.to_dense()
        if count < dim // 4:
            vals, vecs = scipy.linalg.eigh(mat, subset_by_index=[0, count - 1], driver="evr")
        else:
            vals, vecs = np.linalg.eigh(mat)
        return Spectrum(vals[:count], vecs[:, :count].astype(complex))
    diag, flips = h.compiled()
    dtype = complex if (np.iscomplexobj(diag) or any(np.iscomplexobj(p) for _, p in flips)) else float
    def matvec(v):
        out = apply_pauli_sum(v, h)
        return out.real if dtype is float else out

    op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=dtype)
    ncv = min(dim, max(2 * count + 1, count + 32))
    try:
        vals, vecs = spla.eigsh(op, k=count, which="SA", ncv=ncv, maxiter=maxiter, tol=tol,
                                v0=np.full(dim, 1.0 / np.sqrt(dim), dtype=dtype))
    except spla.ArpackNoConvergence as exc:
        raise EigensolverNotConverged(
            f"Lanczos found {len(exc.eigenvalues)} of {count} eigenpairs") from exc
    order = np.argsort(vals)
    return Spectrum(vals[order], vecs[:, order].astype(complex))


def align_degenerate(values: np.ndarray, vectors: np.ndarray, reference: np.ndarray,
                     tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Rotate each degenerate eigenspace to concentrate its weight on ``reference``.

    Within a block of equal eigenvalues the eigensolver returns an arbitrary
    basis. Rotating by the right singular vectors of ``reference^H @ block``
    makes the block's overlaps with the reference span mutually orthogonal,
    so a degenerate 1QP state is not smeared over its partners.
    """
    vectors = vectors.copy()
    start = 0
    m = len(values)
    while start < m:
        stop = start + 1
        while stop < m and abs(values[stop] - values[start]) <= tol * max(1.0, abs(values[start])):
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            _, _, vh = np.linalg.svd(reference.conj().T @ block)
            vectors[:, start:stop] = block @ vh.conj().T
        start = stop
    return vectors


def one_qp_weights(vectors: np.ndarray) -> np.ndarray:
    """Squared projection of each column onto span{X_i|0...0>}."""
    n = vectors.shape[0].bit_length() - 1
    rows = [1 << i for i in range(n)]
    return np.sum(np.abs(vectors[rows]) ** 2, axis=0)


def select_1qp_subspace(spec: Spectrum, n_sites: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ground state and the N eigenstates dominated by single flips.

    Returns ``(gs, states, weights)`` with the chosen states in ascending
    energy. A weight tie within ``TIE_TOL`` at the boundary of the chosen
    set raises :class:`AdiabaticAmbiguity`.
    """
    if len(spec) < n_sites + 1:
        raise ValueError(f"need at least {n_sites + 1} eigenpairs, have {len(spec)}")
    dim = spec.eigenvectors.shape[0]
    flips = np.zeros((dim, n_sites))
    flips[[1 << i for i in range(n_sites)], np.arange(n_sites)] = 1.0
    excited = align_degenerate(spec.eigenvalues[1:], spec.eigenvectors[:, 1:], flips)
    w = one_qp_weights(excited)
    order = np.argsort(-w, kind="stable")
    chosen = np.sort(order[:n_sites])
    if len(order) > n_sites and abs(w[order[n_sites - 1]] - w[order[n_sites]]) < TIE_TOL:
        raise AdiabaticAmbiguity(
            f"1QP weights {w[order[n_sites - 1]]:.8f} and {w[order[n_sites]]:.8f} tie for the last slot")
    low = w[chosen] < WEIGHT_WARN
    if low.any():
        warnings.warn(f"selected 1QP states with weight below {WEIGHT_WARN}: {w[chosen][low]}",
                      AdiabaticWeightWarning, stacklevel=2)
    return spec.eigenvectors[:, 0], excited[:, chosen], w[chosen]


def select_by_continuation(graph, params: ModelParams, n_steps: int = 10,
                           count: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Follow the 1QP subspace from ``J = h_l = 0`` to ``params``.

    At each step the new subspace is the ``N`` eigenvectors with the largest
    projection onto the previous step's subspace.
    """
    n = graph.n_sites
    dim = 1 << n
    count = min(dim, count or _default_count(n))
    prev = np.zeros((dim, n), dtype=complex)
    for i in range(n):
        prev[1 << i, i] = 1.0
    spec = None
    for step in range(1, n_steps + 1):
        frac = step / n_steps
        p = ModelParams(J=params.J * frac, h_l=params.h_l * frac)
        spec = low_energy_spectrum(build_hamiltonian(graph, p), count)
        excited = align_degenerate(spec.eigenvalues[1:], spec.eigenvectors[:, 1:], prev)
        w = np.sum(np.abs(prev.conj().T @ excited) ** 2, axis=0)
        order = np.argsort(-w, kind="stable")
        chosen = np.sort(order[:n])
        prev = excited[:, chosen]
    return spec.eigenvectors[:, 0], prev, one_qp_weights(prev)


def ed_effective(graph: ClusterGraph | SiteGraph, params: ModelParams, method: str = "pcat",
                 selection: str = "auto", count: int | None = None
                 ) -> tuple[Effective1QP, SubspaceMatrices, np.ndarray]:
    """Effective 1QP Hamiltonian from exact eigenstates.

    ``selection="auto"`` uses dominant overlap for the parity-symmetric
    model and continuation once a longitudinal field mixes the reference
    state into the 1QP levels. Returns the effective Hamiltonian, the
    subspace matrices and the 1QP weights of the chosen eigenstates.
    """
    h = build_hamiltonian(graph, params)
    n = graph.n_sites
    if selection == "auto":
        selection = "overlap" if params.h_l == 0 else "continuation"
    if selection == "overlap":
        count = min(1 << n, count or _default_count(n))
        spec = low_energy_spectrum(h, count)
        gs, states, weights = select_1qp_subspace(spec, n)
    elif selection == "continuation":
        gs, states, weights = select_by_continuation(graph, params, count=count)
    else:
        raise ValueError(f"unknown selection {selection!r}")
    eff, mats = effective_from_states(gs, states, h, graph.coords, method)
    return eff, mats, weights


def _default_count(n: int) -> int:
    # enough room for 2QP/3QP states interleaving with the top of the 1QP band
    if n <= DENSE_MAX_SITES:
        return 1 << n
    return 3 * (n + 1)
