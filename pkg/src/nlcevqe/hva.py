"""Hamiltonian variational ansatz for TFIM(+LF) clusters.

One layer acts on a ket as ``exp(i sum theta_Z Z) exp(i sum theta_X X)
exp(i sum theta_XX XX)``: the bond block first, then the X field, then the Z
field. Layer 1 acts first on the reference state.

Angles can be tied across orbits of the cluster's point group. The flat
angle vector is laid out layer by layer as ``[XX classes, X classes,
Z classes]``; the X-field group is absent when the layout has
``include_x=False``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ClusterGraph, SiteGraph, symmetry_classes
from .statevector import PauliTerm, apply_exp_block, basis_indices, parity_signs, walsh_hadamard


class LayerPolicy(str, enum.Enum):
    HALF_N = "half"
    FULL_N = "full"


def layer_count_policy(n_sites: int, policy: LayerPolicy | str) -> int:
    """ceil(N/2) or N layers."""
    if n_sites < 1:
        raise ValueError("n_sites must be positive")
    policy = LayerPolicy(policy)
    return math.ceil(n_sites / 2) if policy is LayerPolicy.HALF_N else n_sites


@dataclass(frozen=True)
class HvaLayout:
    """Parameter layout: which terms share an angle in each layer."""

    n_sites: int
    n_layers: int
    bond_classes: tuple[tuple[tuple[int, int], ...], ...]
    site_classes: tuple[tuple[int, ...], ...]
    include_x: bool = True
    tied: bool = True

    @classmethod
    def for_graph(cls, graph: ClusterGraph | SiteGraph, n_layers: int, *,
                  tie: bool = True, include_x: bool = True) -> "HvaLayout":
        if n_layers < 1:
            raise ValueError("need at least one layer")
        if tie and isinstance(graph, ClusterGraph):
            sites, bonds = symmetry_classes(graph)
        else:
            tie = False
            sites = [[i] for i in range(graph.n_sites)]
            bonds = [[b] for b in graph.bonds]
        return cls(
            n_sites=graph.n_sites,
            n_layers=n_layers,
            bond_classes=tuple(tuple(tuple(b) for b in c) for c in bonds),
            site_classes=tuple(tuple(c) for c in sites),
            include_x=include_x,
            tied=tie,
        )

    @property
    def per_layer(self) -> int:
        field_groups = 2 if self.include_x else 1
        return len(self.bond_classes) + field_groups * len(self.site_classes)

    @property
    def n_params(self) -> int:
        return self.n_layers * self.per_layer

    def split(self, angles: np.ndarray):
        """Yield ``(theta_xx, theta_x, theta_z)`` class-angle arrays per layer."""
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (self.n_params,):
            raise ValueError(
                f"expected {self.n_params} angles for this layout, got {angles.shape}")
        nb, ns = len(self.bond_classes), len(self.site_classes)
        for layer in angles.reshape(self.n_layers, self.per_layer):
            xx = layer[:nb]
            if self.include_x:
                x, z = layer[nb:nb + ns], layer[nb + ns:]
            else:
                x, z = np.zeros(ns), layer[nb:]
            yield xx, x, z

    def blocks(self, angles: np.ndarray):
        """Per-layer lists of ``(PauliTerm, angle)`` in application order."""
        out = []
        for xx, x, z in self.split(angles):
            bond_block = [(PauliTerm(1.0, ((i, "X"), (j, "X"))), t)
                          for cls_, t in zip(self.bond_classes, xx) for i, j in cls_]
            x_block = [(PauliTerm(1.0, ((i, "X"),)), t)
                       for cls_, t in zip(self.site_classes, x) for i in cls_]
            z_block = [(PauliTerm(1.0, ((i, "Z"),)), t)
                       for cls_, t in zip(self.site_classes, z) for i in cls_]
            out.append((bond_block, x_block if self.include_x else [], z_block))
        return out

    def header(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "n_layers": self.n_layers,
            "bond_classes": [[list(b) for b in c] for c in self.bond_classes],
            "site_classes": [list(c) for c in self.site_classes],
            "include_x": self.include_x,
            "tied": self.tied,
        }

    @classmethod
    def from_header(cls, d: dict) -> "HvaLayout":
        return cls(
            n_sites=d["n_sites"],
            n_layers=d["n_layers"],
            bond_classes=tuple(tuple(tuple(b) for b in c) for c in d["bond_classes"]),
            site_classes=tuple(tuple(c) for c in d["site_classes"]),
            include_x=d["include_x"],
            tied=d["tied"],
        )


@dataclass
class HvaParams:
    layout: HvaLayout
    angles: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.shape != (self.layout.n_params,):
            raise ValueError(
                f"layout expects {self.layout.n_params} angles, got {self.angles.size}")

    @classmethod
    def zeros(cls, layout: HvaLayout) -> "HvaParams":
        return cls(layout, np.zeros(layout.n_params))

    @classmethod
    def near_zero(cls, layout: HvaLayout, rng: np.random.Generator, scale: float = 1e-3) -> "HvaParams":
        return cls(layout, rng.uniform(-scale, scale, layout.n_params))

    def to_dict(self) -> dict:
        return {"layout": self.layout.header(), "angles": self.angles.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HvaParams":
        return cls(HvaLayout.from_header(d["layout"]), np.array(d["angles"]))


@dataclass
class HvaCircuit:
    """Batched ansatz application with an adjoint-mode vector-Jacobian product.

    X and XX strings are diagonal after a Walsh-Hadamard transform, so every
    block is a phase vector in either the computational or the Hadamard
    frame. Class sign tables are precomputed once per layout.
    """

    layout: HvaLayout
    _z_table: np.ndarray = field(init=False, repr=False)
    _xx_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lay = self.layout
        idx = basis_indices(lay.n_sites)
        self._z_table = np.stack(
            [sum(parity_signs(idx, 1 << i) for i in c) for c in lay.site_classes], axis=1)
        if lay.bond_classes:
            self._xx_table = np.stack(
                [sum(parity_signs(idx, (1 << i) | (1 << j)) for i, j in c) for c in lay.bond_classes],
                axis=1)
        else:
            self._xx_table = np.zeros((idx.size, 0))

    def _phases(self, angles):
        for xx, x, z in self.layout.split(angles):
            ph_x = self._xx_table @ xx + self._z_table @ x
            yield np.exp(1j * ph_x), np.exp(1j * (self._z_table @ z))

    def apply(self, angles: np.ndarray, states: np.ndarray) -> np.ndarray:
        single = states.ndim == 1
        psi = states.reshape(states.shape[0], -1).astype(complex)
        for dx, dz in self._phases(angles):
            psi = walsh_hadamard(dx[:, None] * walsh_hadamard(psi))
            psi = dz[:, None] * psi
        return psi[:, 0] if single else psi

    def apply_inverse(self, angles: np.ndarray, states: np.ndarray) -> np.ndarray:
        single = states.ndim == 1
        psi = states.reshape(states.shape[0], -1).astype(complex)
        for dx, dz in reversed(list(self._phases(angles))):
            psi = np.conj(dz)[:, None] * psi
            psi = walsh_hadamard(np.conj(dx)[:, None] * walsh_hadamard(psi))
        return psi[:, 0] if single else psi

    def vjp(self, angles: np.ndarray, out_states: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Gradient of a real cost from its conjugate derivative at the output.

        ``cotangent`` is dC/d(conj psi_out) so that dC = 2 Re <cot|d psi>.
        Intermediate states are recovered by running the circuit backwards.
        """
        lay = self.layout
        nb, ns = len(lay.bond_classes), len(lay.site_classes)
        psi = out_states.reshape(out_states.shape[0], -1).astype(complex)
        cols = psi.shape[1]
        # psi and lam travel together so each transform is one batched call
        both = np.concatenate([psi, cotangent.reshape(psi.shape).astype(complex)], axis=1)
        grads = np.zeros((lay.n_layers, lay.per_layer))
        phases = list(self._phases(angles))
        for layer in range(lay.n_layers - 1, -1, -1):
            dx, dz = phases[layer]
            v = np.einsum("ij,ij->i", np.conj(both[:, cols:]), both[:, :cols])
            gz = -2.0 * np.imag(self._z_table.T @ v)
            both = walsh_hadamard(np.conj(dz)[:, None] * both)
            v = np.einsum("ij,ij->i", np.conj(both[:, cols:]), both[:, :cols])
            gxx = -2.0 * np.imag(self._xx_table.T @ v)
            gx = -2.0 * np.imag(self._z_table.T @ v)
            both = walsh_hadamard(np.conj(dx)[:, None] * both)
            row = grads[layer]
            row[:nb] = gxx
            if lay.include_x:
                row[nb:nb + ns] = gx
                row[nb + ns:] = gz
            else:
                row[nb:] = gz
        return grads.ravel()


def apply_ansatz(state: np.ndarray, graph: ClusterGraph | SiteGraph, params: HvaParams) -> np.ndarray:
    """U_HVA(theta) |state> (single state or column batch)."""
    if params.layout.n_sites != graph.n_sites:
        raise ValueError("parameter layout does not match the cluster")
    return HvaCircuit(params.layout).apply(params.angles, state)


def apply_ansatz_blockwise(state: np.ndarray, params: HvaParams) -> np.ndarray:
    """Reference implementation through generic exponential blocks (slow)."""
    psi = np.array(state, dtype=complex)
    for bond_block, x_block, z_block in params.layout.blocks(params.angles):
        psi = apply_exp_block(psi, bond_block)
        if x_block:
            psi = apply_exp_block(psi, x_block)
        psi = apply_exp_block(psi, z_block)
    return psi
