"""Transverse-field Ising clusters: geometry, Hamiltonians, reference states.

Sites of an ``Lm x Ln`` rectangle are ordered row-major, site ``m*Ln + n``
sitting at coordinate ``(m, n)``. Chains are ``L x 1`` rectangles.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .statevector import PauliSum, PauliTerm, basis_state


class Lattice(str, enum.Enum):
    CHAIN = "chain"
    SQUARE = "square"


@dataclass(frozen=True)
class ClusterGraph:
    """Open-boundary rectangular cluster of extent ``(Lm, Ln)``."""

    lattice: Lattice
    extent: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "lattice", Lattice(self.lattice))
        lm, ln = self.extent
        if lm < 1 or ln < 1:
            raise ValueError(f"extent must be positive, got {self.extent}")
        if self.lattice is Lattice.CHAIN and ln != 1:
            raise ValueError("chain clusters have Ln = 1")
        object.__setattr__(self, "extent", (int(lm), int(ln)))

    @classmethod
    def chain(cls, length: int) -> "ClusterGraph":
        return cls(Lattice.CHAIN, (length, 1))

    @classmethod
    def rectangle(cls, lm: int, ln: int) -> "ClusterGraph":
        return cls(Lattice.SQUARE, (lm, ln))

    @property
    def n_sites(self) -> int:
        return self.extent[0] * self.extent[1]

    @cached_property
    def sites(self) -> list[tuple[int, int]]:
        lm, ln = self.extent
        return [(m, n) for m in range(lm) for n in range(ln)]

    def site_index(self, coord: tuple[int, int]) -> int:
        return coord[0] * self.extent[1] + coord[1]

    @cached_property
    def bonds(self) -> list[tuple[int, int]]:
        lm, ln = self.extent
        out = []
        for m, n in self.sites:
            i = self.site_index((m, n))
            if m + 1 < lm:
                out.append((i, self.site_index((m + 1, n))))
            if n + 1 < ln:
                out.append((i, self.site_index((m, n + 1))))
        return sorted(out)

    @property
    def coords(self) -> np.ndarray:
        return np.array(self.sites, dtype=float)

    @property
    def key(self) -> str:
        """Canonical text key, e.g. ``chain-8`` or ``square-3x4``."""
        lm, ln = self.extent
        if self.lattice is Lattice.CHAIN:
            return f"chain-{lm}"
        return f"square-{lm}x{ln}"

    @classmethod
    def from_key(cls, key: str) -> "ClusterGraph":
        kind, _, size = key.partition("-")
        if kind == "chain":
            return cls.chain(int(size))
        if kind == "square":
            lm, ln = size.split("x")
            return cls.rectangle(int(lm), int(ln))
        raise ValueError(f"unrecognised cluster key {key!r}")

    def transpose(self) -> "ClusterGraph":
        if self.lattice is Lattice.CHAIN:
            return self
        return ClusterGraph(self.lattice, self.extent[::-1])

    def transpose_permutation(self) -> np.ndarray:
        """``perm[i]`` = index in the transposed cluster of site ``i`` here."""
        other = self.transpose()
        return np.array([other.site_index((n, m)) for m, n in self.sites])

    def point_group(self) -> list[np.ndarray]:
        """Site permutations of the cluster's spatial symmetry group."""
        lm, ln = self.extent
        maps = [lambda m, n: (m, n),
                lambda m, n: (lm - 1 - m, n),
                lambda m, n: (m, ln - 1 - n),
                lambda m, n: (lm - 1 - m, ln - 1 - n)]
        if lm == ln:
            maps += [lambda m, n: (n, m),
                     lambda m, n: (ln - 1 - n, m),
                     lambda m, n: (n, lm - 1 - m),
                     lambda m, n: (ln - 1 - n, lm - 1 - m)]
        perms = {tuple(self.site_index(f(m, n)) for m, n in self.sites) for f in maps}
        return [np.array(p) for p in sorted(perms)]


@dataclass(frozen=True)
class ModelParams:
    """TFIM(+LF) couplings with the transverse field as energy unit."""

    J: float
    h_l: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if self.h != 1.0:
            raise ValueError("the transverse field sets the energy unit; h must be 1")
        if self.J < 0:
            raise ValueError("ferromagnetic convention requires J >= 0")


@dataclass(frozen=True)
class SiteGraph:
    """Arbitrary site/bond graph, e.g. two clusters placed side by side."""

    sites: tuple[tuple[int, int], ...]
    bonds: tuple[tuple[int, int], ...]

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def coords(self) -> np.ndarray:
        return np.array(self.sites, dtype=float)


def disconnected_union(a: ClusterGraph, b: ClusterGraph, gap: int = 2) -> SiteGraph:
    """Sites of ``a`` followed by those of ``b``, shifted apart with no seam bonds."""
    shift = a.extent[0] + gap
    sites = tuple(a.sites) + tuple((m + shift, n) for m, n in b.sites)
    off = a.n_sites
    bonds = tuple(a.bonds) + tuple((i + off, j + off) for i, j in b.bonds)
    return SiteGraph(sites, bonds)


def build_hamiltonian(graph: ClusterGraph | SiteGraph, params: ModelParams) -> PauliSum:
    """H = -h sum Z - J sum_<ij> X_i X_j - h_l sum X on the cluster."""
    n = graph.n_sites
    terms = [PauliTerm(-params.h, ((i, "Z"),)) for i in range(n)]
    terms += [PauliTerm(-params.J, ((i, "X"), (j, "X"))) for i, j in graph.bonds]
    if params.h_l != 0:
        terms += [PauliTerm(-params.h_l, ((i, "X"),)) for i in range(n)]
    return PauliSum(terms, n)


def parity_operator(n_sites: int) -> PauliSum:
    """prod_i Z_i, the Z2 symmetry of the pure transverse-field model."""
    return PauliSum([PauliTerm(1.0, tuple((i, "Z") for i in range(n_sites)))], n_sites)


def enumerate_clusters(lattice: Lattice | str, n_max: int) -> list[ClusterGraph]:
    """All rectangles with ``Lm * Ln <= n_max``, both orientations for squares."""
    lattice = Lattice(lattice)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if lattice is Lattice.CHAIN:
        return [ClusterGraph.chain(length) for length in range(1, n_max + 1)]
    out = []
    for size in range(1, n_max + 1):
        for lm in range(1, size + 1):
            if size % lm == 0:
                out.append(ClusterGraph.rectangle(lm, size // lm))
    return out


def unique_shapes(clusters: list[ClusterGraph]) -> list[ClusterGraph]:
    """One representative (``Lm <= Ln``) per transpose pair."""
    seen = []
    for c in clusters:
        lm, ln = c.extent
        rep = c if (c.lattice is Lattice.CHAIN or lm <= ln) else c.transpose()
        if rep not in seen:
            seen.append(rep)
    return seen


def unperturbed_states(graph: ClusterGraph) -> tuple[np.ndarray, list[np.ndarray]]:
    """Polarized reference |0...0> and its single spin flips X_i|0...0>."""
    n = graph.n_sites
    gs = basis_state(n, "0" * n)
    one_qp = []
    for i in range(n):
        bits = ["0"] * n
        bits[i] = "1"
        one_qp.append(basis_state(n, "".join(bits)))
    return gs, one_qp


def reference_basis(n_sites: int) -> np.ndarray:
    """Columns |0...0>, X_0|0...0>, ..., X_{N-1}|0...0>."""
    dim = 1 << n_sites
    basis = np.zeros((dim, n_sites + 1), dtype=complex)
    basis[0, 0] = 1.0
    for i in range(n_sites):
        basis[1 << i, i + 1] = 1.0
    return basis


def _orbits(elements, images):
    seen = set()
    classes = []
    for e in elements:
        if e in seen:
            continue
        orbit = sorted({img(e) for img in images})
        seen.update(orbit)
        classes.append(orbit)
    return classes


def symmetry_classes(graph: ClusterGraph) -> tuple[list[list[int]], list[list[tuple[int, int]]]]:
    """Orbits of sites and of bonds under the cluster's point group."""
    perms = graph.point_group()
    site_imgs = [lambda s, p=p: int(p[s]) for p in perms]
    bond_imgs = [lambda b, p=p: tuple(sorted((int(p[b[0]]), int(p[b[1]])))) for p in perms]
    site_classes = _orbits(range(graph.n_sites), site_imgs)
    bond_classes = _orbits(graph.bonds, bond_imgs)
    return site_classes, bond_classes


def brute_force_rectangles(n_max: int) -> set[tuple[int, int]]:
    """Exhaustive extent enumeration, used as an oracle in tests."""
    return {(a, b) for a, b in itertools.product(range(1, n_max + 1), repeat=2) if a * b <= n_max}
