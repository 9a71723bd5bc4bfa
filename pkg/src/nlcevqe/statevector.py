"""Matrix-free statevector simulation of Pauli-sum operators.

Bit convention: site ``i`` is bit ``i`` of the amplitude index
(little-endian), so ``basis_state(2, "10")`` puts the amplitude at index 1.
States are plain complex numpy arrays of shape ``(2**n,)``; most routines
also accept a batch of column states of shape ``(2**n, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

MAX_QUBITS = 20

_AXES = ("X", "Y", "Z")


class DimensionError(ValueError):
    """Raised when a register exceeds the qubit cap or sizes mismatch."""


class NonCommutingBlockError(ValueError):
    """Raised when an exponential block mixes non-commuting Pauli strings."""


@dataclass(frozen=True)
class PauliTerm:
    """Real coefficient times a product of single-site Pauli matrices.

    ``factors`` holds ``(site, axis)`` pairs with distinct sites; an empty
    tuple is the identity.
    """

    coefficient: float
    factors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in Pauli term {self.factors}")
        for s, ax in self.factors:
            if ax not in _AXES:
                raise ValueError(f"unknown Pauli axis {ax!r}")
            if s < 0:
                raise ValueError("negative site index")
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))

    def masks(self) -> tuple[int, int, int]:
        """Return ``(x_mask, z_mask, n_y)`` so that P|b> = i^n_y (-1)^|b&z| |b^x>."""
        x = z = ny = 0
        for s, ax in self.factors:
            if ax in "XY":
                x |= 1 << s
            if ax in "YZ":
                z |= 1 << s
            if ax == "Y":
                ny += 1
        return x, z, ny

    def max_site(self) -> int:
        return max((s for s, _ in self.factors), default=-1)

    def label(self, n_sites: int) -> str:
        chars = ["I"] * n_sites
        for s, ax in self.factors:
            chars[s] = ax
        return "".join(chars)


def paulis_commute(a: PauliTerm, b: PauliTerm) -> bool:
    """Symbolic commutation test: anticommuting sites must come in pairs."""
    fa = dict(a.factors)
    clashes = sum(1 for s, ax in b.factors if s in fa and fa[s] != ax)
    return clashes % 2 == 0


@dataclass
class PauliSum:
    """Hermitian operator as a real-weighted sum of Pauli strings."""

    terms: list[PauliTerm]
    num_sites: int
    _compiled: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for t in self.terms:
            if t.max_site() >= self.num_sites:
                raise DimensionError(
                    f"term {t} acts beyond {self.num_sites} sites")

    def __len__(self):
        return len(self.terms)

    def compiled(self):
        """Group terms by flip mask; returns ``(diag, [(x_mask, phases), ...])``.

        ``phases[b]`` is the amplitude picked up by basis state ``b`` before
        the flip, summed over all terms sharing the same ``x_mask``.
        """
        if self._compiled is None:
            idx = basis_indices(self.num_sites)
            groups: dict[int, np.ndarray] = {}
            for t in self.terms:
                x, z, ny = t.masks()
                ph = t.coefficient * (1j ** ny) * parity_signs(idx, z)
                if x in groups:
                    groups[x] = groups[x] + ph
                else:
                    groups[x] = ph.astype(complex)
            diag = groups.pop(0, np.zeros(idx.size, dtype=complex))
            if np.all(diag.imag == 0):
                diag = diag.real
            flips = []
            for x, ph in sorted(groups.items()):
                if np.all(ph.imag == 0):
                    ph = ph.real
                flips.append((x, ph))
            self._compiled = (diag, flips)
        return self._compiled

    def to_dense(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` matrix; only for small oracle checks and ED."""
        dim = 1 << self.num_sites
        diag, flips = self.compiled()
        dtype = complex if (np.iscomplexobj(diag) or any(np.iscomplexobj(p) for _, p in flips)) else float
        mat = np.zeros((dim, dim), dtype=dtype)
        idx = np.arange(dim)
        mat[idx, idx] += diag
        for x, ph in flips:
            # column b maps to row b ^ x with amplitude ph[b]
            mat[idx ^ x, idx] += ph
        return mat

    def to_sparse(self):
        import scipy.sparse as sp

        dim = 1 << self.num_sites
        diag, flips = self.compiled()
        idx = np.arange(dim)
        rows = [idx] + [idx ^ x for x, _ in flips]
        vals = [np.asarray(diag)] + [ph for _, ph in flips]
        cols = [idx] * len(rows)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim))

    def norm_bound(self) -> float:
        """Triangle-inequality bound on the operator norm."""
        return float(sum(abs(t.coefficient) for t in self.terms))


def basis_indices(n_sites: int) -> np.ndarray:
    _check_size(n_sites)
    return np.arange(1 << n_sites, dtype=np.int64)


def parity_signs(indices: np.ndarray, mask: int) -> np.ndarray:
    """(-1)^popcount(index & mask) as float array."""
    bits = indices & mask
    par = np.zeros(indices.shape, dtype=np.int64)
    m = mask
    pos = 0
    while m:
        if m & 1:
            par ^= (bits >> pos) & 1
        m >>= 1
        pos += 1
    return 1.0 - 2.0 * par


def _check_size(n_sites: int, max_qubits: int = MAX_QUBITS):
    if n_sites < 0:
        raise DimensionError("negative register size")
    if n_sites > max_qubits:
        raise DimensionError(
            f"{n_sites} qubits exceeds the configured maximum of {max_qubits}")


def n_sites_of(state: np.ndarray) -> int:
    dim = state.shape[0]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise DimensionError(f"state dimension {dim} is not a power of two")
    return n


def basis_state(n_sites: int, bits: str | Sequence[int], max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Computational basis state; ``bits[i]`` is the value of site ``i``."""
    _check_size(n_sites, max_qubits)
    bits = [int(b) for b in bits]
    if len(bits) != n_sites:
        raise ValueError(f"expected {n_sites} bits, got {len(bits)}")
    index = sum(b << i for i, b in enumerate(bits))
    psi = np.zeros(1 << n_sites, dtype=complex)
    psi[index] = 1.0
    return psi


def apply_pauli_sum(state: np.ndarray, op: PauliSum) -> np.ndarray:
    """Return ``op @ state`` term group by term group, never forming a matrix.

    Works for a single state or a ``(dim, m)`` batch of column states.
    """
    if state.shape[0] != 1 << op.num_sites:
        raise DimensionError(
            f"operator on {op.num_sites} sites applied to state of dimension {state.shape[0]}")
    diag, flips = op.compiled()
    idx = np.arange(state.shape[0])
    if state.ndim == 1:
        out = diag * state
        for x, ph in flips:
            out = out + (ph * state)[idx ^ x]
    else:
        out = diag[:, None] * state
        for x, ph in flips:
            out = out + (ph[:, None] * state)[idx ^ x]
    return out.astype(complex, copy=False)


def inner_product(a: np.ndarray, b: np.ndarray) -> complex:
    """<a|b>, conjugating ``a``."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def expectation_and_square(state: np.ndarray, op: PauliSum) -> tuple[float, float]:
    """Return ``(<H>, <H^2>)`` with ``<H^2> = ||H psi||^2``."""
    h_psi = apply_pauli_sum(state, op)
    mean = np.vdot(state, h_psi)
    sq = np.vdot(h_psi, h_psi).real
    return float(mean.real), float(sq)


def apply_exp_block(state: np.ndarray, block: Iterable[tuple[PauliTerm, float]],
                    check_commuting: bool = True) -> np.ndarray:
    """Apply ``prod_t exp(i theta_t P_t)`` for mutually commuting Pauli strings.

    Purely diagonal (Z-type) blocks are applied as one phase vector. Other
    strings use exp(i theta P) = cos(theta) + i sin(theta) P, exact because
    P squares to the identity. The term's own coefficient is ignored; only
    the angle and the Pauli string matter.
    """
    block = list(block)
    if check_commuting:
        for i in range(len(block)):
            for j in range(i + 1, len(block)):
                if not paulis_commute(block[i][0], block[j][0]):
                    raise NonCommutingBlockError(
                        f"{block[i][0].factors} and {block[j][0].factors} do not commute")
    n = n_sites_of(state)
    idx = np.arange(state.shape[0])
    out = np.array(state, dtype=complex, copy=True)
    phase = np.zeros(state.shape[0])
    has_diag = False
    for term, theta in block:
        if term.max_site() >= n:
            raise DimensionError(f"term {term.factors} outside {n}-site register")
        x, z, ny = term.masks()
        if x == 0:
            phase += theta * parity_signs(idx, z)
            has_diag = True
            continue
        signs = (1j ** ny) * parity_signs(idx, z)
        if out.ndim == 1:
            p_out = (signs * out)[idx ^ x]
        else:
            p_out = (signs[:, None] * out)[idx ^ x]
        out = np.cos(theta) * out + 1j * np.sin(theta) * p_out
    if has_diag:
        ph = np.exp(1j * phase)
        out = ph * out if out.ndim == 1 else ph[:, None] * out
    return out


@lru_cache(maxsize=None)
def _hadamard_factors(n_sites: int) -> tuple[int, int, np.ndarray, np.ndarray]:
    lo = n_sites // 2
    hi = n_sites - lo
    h_lo = scipy.linalg.hadamard(1 << lo).astype(float) / np.sqrt(1 << lo)
    h_hi = scipy.linalg.hadamard(1 << hi).astype(float) / np.sqrt(1 << hi)
    return lo, hi, h_lo, h_hi


def walsh_hadamard(states: np.ndarray) -> np.ndarray:
    """Apply the Hadamard gate to every qubit (normalized, self-inverse).

    This maps the computational basis to the X eigenbasis, where X and XX
    strings become diagonal sign patterns. The transform factorises into
    dense Hadamard matrices on the low and high halves of the register,
    applied to the real view of the amplitudes.
    """
    dim = states.shape[0]
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise DimensionError(f"length {dim} is not a power of two")
    single = states.ndim == 1
    a = np.ascontiguousarray(states.reshape(dim, -1), dtype=complex)
    cols = a.shape[1]
    lo, hi, h_lo, h_hi = _hadamard_factors(n)
    r = h_hi @ a.view(float).reshape(1 << hi, -1)
    r = np.matmul(h_lo, r.reshape(1 << hi, 1 << lo, 2 * cols))
    out = r.reshape(dim, 2 * cols).view(complex)
    return out[:, 0] if single else out
