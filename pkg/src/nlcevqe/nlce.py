"""Rectangular linked-cluster expansion of the 1QP dispersion.

Every ``Lm x Ln`` rectangle embeds once per lattice site, so the
thermodynamic-limit hopping amplitudes are sums of reduced contributions
``Hbar = sum_ab c_a c_b H[(Lm - a) x (Ln - b)]`` with ``c = (1, -2, 1)`` and
``H`` of an empty extent taken as zero.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .pcat import Effective1QP

STENCIL = (1.0, -2.0, 1.0)


class MissingCluster(KeyError):
    """An extent required by the expansion has no effective Hamiltonian."""


@dataclass
class DispersionCurve:
    momenta: np.ndarray  # (n,) for chains, (n, 2) for the square lattice
    omega: np.ndarray
    order: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.momenta = np.asarray(self.momenta, dtype=float)
        omega = np.asarray(self.omega)
        if np.iscomplexobj(omega):
            resid = float(np.abs(omega.imag).max(initial=0.0))
            if resid > 1e-9:
                raise ValueError(f"dispersion has imaginary part {resid:.2e}")
            omega = omega.real
        self.omega = omega.astype(float)

    @property
    def dim(self) -> int:
        return 1 if self.momenta.ndim == 1 else self.momenta.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["k"] if self.dim == 1 else ["kx", "ky"]
        w.writerow(cols + ["omega", "order"])
        ks = self.momenta.reshape(len(self.omega), -1)
        for k, om in zip(ks, self.omega):
            w.writerow([f"{x:.12f}" for x in k] + [f"{om:.12f}", self.order])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "momenta": self.momenta.tolist(),
            "omega": self.omega.tolist(),
            "order": self.order,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DispersionCurve":
        return cls(np.array(d["momenta"]), np.array(d["omega"]), d["order"], d.get("provenance", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def kspace_block(eff: Effective1QP, k) -> complex | np.ndarray:
    """``sum_{nu,mu} H[nu, mu] exp(i k.(r_nu - r_mu))``.

    A scalar ``k`` gives one chain momentum and a 1D array several; chain
    momenta multiply the first coordinate only. Square-lattice momenta are
    rows ``(kx, ky)`` of a 2D array.
    """
    k = np.asarray(k, dtype=float)
    coords = eff.site_coords
    if k.ndim <= 1:
        phase = np.exp(1j * np.multiply.outer(np.atleast_1d(k), coords[:, 0]))
    else:
        phase = np.exp(1j * k @ coords[:, :k.shape[1]].T)
    vals = np.einsum("kn,nm,km->k", phase, eff.matrix, phase.conj())
    return vals[0] if k.ndim == 0 else vals


def reduced_dispersion_chain(eff_n: Effective1QP, eff_nm1: Effective1QP | None, k_grid,
                             provenance: dict | None = None) -> DispersionCurve:
    """Two-term chain expansion ``H_N(k) - H_{N-1}(k)``."""
    k_grid = np.asarray(k_grid, dtype=float)
    omega = kspace_block(eff_n, k_grid)
    if eff_nm1 is not None:
        omega = omega - kspace_block(eff_nm1, k_grid)
    return DispersionCurve(k_grid, omega, eff_n.n_sites, dict(provenance or {}))


def extents_up_to(n_max: int, lattice: str = "square") -> list[tuple[int, int]]:
    if lattice == "chain":
        return [(n, 1) for n in range(1, n_max + 1)]
    return [(a, b) for a in range(1, n_max + 1) for b in range(1, n_max // a + 1)]


def nlce_coefficients(extents) -> dict[tuple[int, int], float]:
    """Net weight of each non-reduced contribution after expanding ``Hbar``.

    ``extents`` is the set of rectangles included in the sum; each brings
    its nine-term stencil, and terms with an extent below 1 are dropped.
    """
    coef: dict[tuple[int, int], float] = defaultdict(float)
    for lm, ln in extents:
        for a, ca in enumerate(STENCIL):
            for b, cb in enumerate(STENCIL):
                if lm - a >= 1 and ln - b >= 1:
                    coef[(lm - a, ln - b)] += ca * cb
    return {e: c for e, c in sorted(coef.items()) if c != 0.0}


def reduced_contribution(eff_map: dict, extent: tuple[int, int], k) -> np.ndarray:
    """``Hbar`` of one rectangle in momentum space."""
    lm, ln = extent
    total = 0.0
    for a, ca in enumerate(STENCIL):
        for b, cb in enumerate(STENCIL):
            e = (lm - a, ln - b)
            if e[0] >= 1 and e[1] >= 1:
                total = total + ca * cb * kspace_block(_lookup(eff_map, e), k)
    return total


def _lookup(eff_map, extent):
    try:
        return eff_map[extent]
    except KeyError:
        raise MissingCluster(f"no effective Hamiltonian for extent {extent[0]}x{extent[1]}") from None


def reduced_dispersion_square(eff_map: dict, k_grid, n_max: int | None = None,
                              provenance: dict | None = None) -> DispersionCurve:
    """Sum of reduced contributions over every rectangle with ``Lm*Ln <= n_max``.

    ``eff_map`` maps ``(Lm, Ln)`` to :class:`Effective1QP`, both
    orientations present. ``n_max`` defaults to the largest area in the map.
    """
    k_grid = np.atleast_2d(np.asarray(k_grid, dtype=float))
    if n_max is None:
        n_max = max(a * b for a, b in eff_map)
    omega = np.zeros(len(k_grid), dtype=complex)
    for extent, c in nlce_coefficients(extents_up_to(n_max)).items():
        omega += c * kspace_block(_lookup(eff_map, extent), k_grid)
    return DispersionCurve(k_grid, omega, n_max, dict(provenance or {}))


def chain_full_expansion(eff_by_length: dict[int, Effective1QP], k_grid, n_max: int) -> np.ndarray:
    """Explicit sum of chain reduced contributions; equals the two-term form."""
    k_grid = np.asarray(k_grid, dtype=float)
    total = np.zeros(k_grid.shape, dtype=complex)
    for length in range(1, n_max + 1):
        for a, ca in enumerate(STENCIL):
            if length - a >= 1:
                total += ca * kspace_block(eff_by_length[length - a], k_grid)
    return total


def additivity_check(eff_a: Effective1QP, eff_b: Effective1QP, eff_ab: Effective1QP) -> float:
    """Largest entry of ``eff_AB - (eff_A (+) eff_B)`` for a disconnected union."""
    direct = scipy.linalg.block_diag(eff_a.matrix, eff_b.matrix)
    if direct.shape != eff_ab.matrix.shape:
        raise ValueError("union must have the sites of A followed by those of B")
    return float(np.abs(eff_ab.matrix - direct).max())


def total_variation(omega) -> float:
    return float(np.abs(np.diff(np.asarray(omega, dtype=float))).sum())


def chain_grid(n_points: int = 201) -> np.ndarray:
    return np.linspace(-np.pi, np.pi, n_points)


def square_path(points_per_segment: int = 67) -> tuple[np.ndarray, np.ndarray]:
    """Gamma -> X -> M -> Gamma; returns momenta and cumulative path length."""
    corners = np.array([[0.0, 0.0], [np.pi, 0.0], [np.pi, np.pi], [0.0, 0.0]])
    segs = []
    for i in range(3):
        t = np.linspace(0.0, 1.0, points_per_segment, endpoint=(i == 2))
        segs.append(corners[i] + np.outer(t, corners[i + 1] - corners[i]))
    ks = np.concatenate(segs)
    dist = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ks, axis=0), axis=1))])
    return ks, dist


def square_grid(n_points: int = 33) -> np.ndarray:
    axis = np.linspace(-np.pi, np.pi, n_points)
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([kx.ravel(), ky.ravel()])


def exact_chain_dispersion(k, J: float) -> np.ndarray:
    """Closed-form TFIM chain dispersion ``2 sqrt(1 + J^2 - 2 J cos k)``."""
    return 2.0 * np.sqrt(1.0 + J * J - 2.0 * J * np.cos(np.asarray(k, dtype=float)))
