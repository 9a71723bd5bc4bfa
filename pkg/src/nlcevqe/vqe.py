"""Simulated VQE cluster solver: cost functions, gradients, nonlinear CG.

Four subspace costs are supported, all with unit weights:

* ``var-1qp``     sum_i <H^2>_i - sum_ij |<i|H|j>|^2 over the N rotated flips
* ``var-gs-1qp``  the ground-state variance plus ``var-1qp``
* ``tr-1qp``      sum_i <i|H|i> over the rotated flips
* ``tr-gs-1qp``   the trace over the reference and the flips

The two 1QP-only costs optimise their own unitary and take the ground state
from the separate stage-1 energy minimisation.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np
from scipy.optimize import line_search

from .hva import HvaCircuit, HvaLayout, HvaParams, LayerPolicy, layer_count_policy
from .model import ClusterGraph, ModelParams, SiteGraph, build_hamiltonian, reference_basis
from .statevector import PauliSum

log = logging.getLogger(__name__)


class CostKind(str, enum.Enum):
    VAR_1QP = "var-1qp"
    VAR_GS_1QP = "var-gs-1qp"
    TR_1QP = "tr-1qp"
    TR_GS_1QP = "tr-gs-1qp"

    @property
    def single_unitary(self) -> bool:
        return self in (CostKind.VAR_GS_1QP, CostKind.TR_GS_1QP)


class InitPolicy(str, enum.Enum):
    NEAR_ZERO = "near-zero"
    WARM_START = "warm-start"


class NonFiniteError(FloatingPointError):
    """Cost or gradient became NaN/inf during optimisation."""


@dataclass
class OptimizerConfig:
    grad_tolerance: float = 1e-8
    max_iterations: int = 2000
    fd_step: float = 1e-6
    restart_period: int | None = None  # None -> number of parameters
    init: InitPolicy = InitPolicy.WARM_START
    gradient: str = "adjoint"  # or "fd"
    armijo: float = 1e-4
    wolfe: float = 0.1
    shrink: float = 0.5
    initial_step: float = 1.0
    init_scale: float = 1e-3

    def __post_init__(self):
        self.init = InitPolicy(self.init)
        if self.gradient not in ("adjoint", "fd"):
            raise ValueError(f"unknown gradient method {self.gradient!r}")
        for name in ("grad_tolerance", "max_iterations", "fd_step", "initial_step", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.armijo < self.wolfe < 1:
            raise ValueError("need 0 < armijo < wolfe < 1")
        if self.restart_period is not None and self.restart_period < 1:
            raise ValueError("restart_period must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = self.init.value
        return d


# (columns of the reference basis, "trace" | "var") per cost block;
# column 0 is |0...0>, column i+1 is X_i|0...0>.
def _cost_blocks(kind, n_sites):
    flips = list(range(1, n_sites + 1))
    if kind == "energy":
        return [([0], "trace")]
    kind = CostKind(kind)
    return {
        CostKind.VAR_1QP: [(flips, "var")],
        CostKind.VAR_GS_1QP: [([0], "var"), (flips, "var")],
        CostKind.TR_1QP: [(flips, "trace")],
        CostKind.TR_GS_1QP: [([0] + flips, "trace")],
    }[kind]


class ClusterCost:
    """Cost of one kind on one cluster as a function of the flat angle vector.

    ``kind`` is a :class:`CostKind` or ``"energy"`` for the stage-1
    ground-state energy.
    """

    def __init__(self, hamiltonian: PauliSum, layout: HvaLayout, kind):
        self.hamiltonian = hamiltonian
        self.layout = layout
        self.kind = kind if kind == "energy" else CostKind(kind)
        self.circuit = HvaCircuit(layout)
        self.blocks = _cost_blocks(kind, hamiltonian.num_sites)
        cols = sorted({c for cs, _ in self.blocks for c in cs})
        self._cols = cols
        self._start = reference_basis(hamiltonian.num_sites)[:, cols]
        self._pos = {c: k for k, c in enumerate(cols)}
        self.n_evals = 0
        self._hmat = hamiltonian.to_sparse()

    def _terms(self, x, want_grad):
        hx = self._hmat @ x
        total = 0.0
        g = np.zeros_like(x) if want_grad else None
        for cols, how in self.blocks:
            sel = [self._pos[c] for c in cols]
            xb, hxb = x[:, sel], hx[:, sel]
            m = xb.conj().T @ hxb
            if how == "trace":
                total += float(np.trace(m).real)
                if want_grad:
                    g[:, sel] += hxb
            else:
                # residual form ||HX - XM||^2 avoids the cancellation in
                # sum <H^2> - sum |M|^2 near the minimum
                r = hxb - xb @ m
                total += float(np.vdot(r, r).real)
                if want_grad:
                    g[:, sel] += self._hmat @ r - r @ m
        return total, g

    def states(self, angles: np.ndarray) -> np.ndarray:
        return self.circuit.apply(angles, self._start)

    def value(self, angles: np.ndarray) -> float:
        self.n_evals += 1
        return self._terms(self.states(angles), False)[0]

    def value_of_states(self, states: np.ndarray) -> float:
        """Cost of given output columns, ordered like :attr:`columns`."""
        return self._terms(np.asarray(states, dtype=complex), False)[0]

    @property
    def columns(self) -> list[int]:
        """Reference-basis columns the cost acts on (0 is the reference state)."""
        return list(self._cols)

    def value_and_grad(self, angles: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        x = self.states(angles)
        val, g = self._terms(x, True)
        return val, self.circuit.vjp(angles, x, g)

    def fd_gradient(self, angles: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """Central finite differences, one tied coordinate at a time."""
        angles = np.asarray(angles, dtype=float)
        grad = np.empty_like(angles)
        for i in range(angles.size):
            e = np.zeros_like(angles)
            e[i] = step
            grad[i] = (self.value(angles + e) - self.value(angles - e)) / (2 * step)
        return grad


def eval_cost(graph, params_model: ModelParams, hva_params: HvaParams, kind) -> float:
    """Cost ``kind`` at the given HVA parameters."""
    ham = build_hamiltonian(graph, params_model)
    return ClusterCost(ham, hva_params.layout, kind).value(hva_params.angles)


def gradient(graph, params_model: ModelParams, hva_params: HvaParams, kind,
             fd_step: float = 1e-6, method: str = "fd") -> np.ndarray:
    """Gradient w.r.t. the tied angles; central differences by default."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    cost = ClusterCost(build_hamiltonian(graph, params_model), hva_params.layout, kind)
    if method == "fd":
        return cost.fd_gradient(hva_params.angles, fd_step)
    return cost.value_and_grad(hva_params.angles)[1]


@dataclass
class CgResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iterations: int
    converged: bool
    history: list[float]
    message: str


def minimize_cg(value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                x0: np.ndarray, config: OptimizerConfig,
                value: Callable[[np.ndarray], float] | None = None,
                callback: Callable[[dict], None] | None = None) -> CgResult:
    """Polak-Ribiere+ nonlinear conjugate gradient.

    Each line search first tries for the strong Wolfe conditions and falls
    back to Armijo backtracking from the trial step, which is
    ``config.initial_step`` after a restart and otherwise the previous step
    rescaled by the change in directional derivative. Backtracking shrinks by
    quadratic interpolation, clipped to ``[0.1, shrink]`` of the current step.

    Close to a minimum the predicted decrease can fall below the rounding
    noise of the cost itself. In that regime the search switches to a secant
    step on the directional derivative, which stays accurate, and accepts it
    when the slope magnitude drops and the cost rises by no more than the
    noise floor.
    """
    if value is None:
        value = lambda x: value_and_grad(x)[0]  # noqa: E731
    x = np.array(x0, dtype=float)
    f, g = value_and_grad(x)
    _check_finite(f, g)
    history = [f]
    restart = config.restart_period or max(x.size, 1)
    d = -g
    gd_prev = alpha_prev = None
    since_restart = 0
    message = "max_iterations reached"
    converged = False
    n_iter = 0
    while n_iter < config.max_iterations:
        gnorm = float(np.linalg.norm(g))
        if gnorm < config.grad_tolerance:
            converged = True
            message = "gradient tolerance reached"
            break
        gd = float(g @ d)
        if gd >= 0 or since_restart >= restart:
            d = -g
            gd = -gnorm ** 2
            since_restart = 0
            alpha = config.initial_step
        elif alpha_prev is not None and gd_prev:
            alpha = min(alpha_prev * gd_prev / gd, 1e3 * config.initial_step)
        else:
            alpha = config.initial_step
        step = _line_search(value, value_and_grad, x, f, g, gd, d, alpha, config)
        if step is None:
            if since_restart == 0:
                message = "line search failed along steepest descent"
                break
            since_restart = restart  # retry from steepest descent
            continue
        alpha, x_new, f_new, g_new = step
        if g_new is None:
            f_new, g_new = value_and_grad(x_new)
        _check_finite(f_new, g_new)
        # PR+ clips beta at zero, which restarts automatically
        beta = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        d = -g_new + beta * d
        gd_prev, alpha_prev = gd, alpha
        x, f, g = x_new, f_new, g_new
        since_restart += 1
        n_iter += 1
        history.append(f)
        if callback is not None:
            callback({"iteration": n_iter, "cost": f, "grad_norm": float(np.linalg.norm(g)),
                      "step": alpha, "x": x})
    else:
        if float(np.linalg.norm(g)) < config.grad_tolerance:
            converged, message = True, "gradient tolerance reached"
    return CgResult(x, f, float(np.linalg.norm(g)), n_iter, converged, history, message)


def noise_floor(f: float) -> float:
    """Rounding scale of a cost value."""
    return 64 * np.finfo(float).eps * max(1.0, abs(f))


def _line_search(value, value_and_grad, x, f0, g0, gd, d, alpha, config):
    """Return ``(alpha, x_new, f_new, g_new or None)`` or None on failure.

    A strong-Wolfe search (Armijo constant ``config.armijo``, curvature
    ``config.wolfe``) keeps successive CG directions close to conjugate.
    If it fails, plain Armijo backtracking from ``alpha`` takes over.
    """
    noise = noise_floor(f0)
    if abs(alpha * gd) >= noise:
        cache = {}

        def evaluate(z):
            key = z.tobytes()
            if key not in cache:
                cache[key] = value_and_grad(z)
            return cache[key]

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns on every failed search
            a, _, _, f_new, _, _ = line_search(
                lambda z: evaluate(z)[0], lambda z: evaluate(z)[1], x, d, gfk=g0,
                old_fval=f0, c1=config.armijo, c2=config.wolfe,
                amax=1e3 * config.initial_step, maxiter=30)
        if a is not None and a > 0 and f_new is not None and f_new < f0:
            x_new = x + a * d
            f_new, g_new = evaluate(x_new)
            if math.isfinite(f_new) and np.all(np.isfinite(g_new)):
                return a, x_new, f_new, g_new
    return _backtrack(value, value_and_grad, x, f0, gd, d, alpha, config, noise)


def _backtrack(value, value_and_grad, x, f0, gd, d, alpha, config, noise):
    c1 = config.armijo
    f = value(x + alpha * d)
    if not math.isfinite(f):
        raise NonFiniteError("cost became non-finite in the line search")
    if f <= f0 + c1 * alpha * gd and f < f0:
        return alpha, x + alpha * d, f, None
    for _ in range(60):
        if abs(alpha * gd) < noise:
            return _secant_step(value_and_grad, x, f0, gd, d, alpha, noise)
        denom = 2.0 * (f - f0 - gd * alpha)
        trial = -gd * alpha * alpha / denom if denom > 0 else config.shrink * alpha
        alpha = min(max(trial, 0.1 * alpha), config.shrink * alpha)
        f = value(x + alpha * d)
        if f <= f0 + c1 * alpha * gd and f < f0:
            return alpha, x + alpha * d, f, None
    return None


def _secant_step(value_and_grad, x, f0, gd, d, alpha, noise):
    # slope-only search for when cost differences are below rounding noise
    for _ in range(8):
        f1, g1 = value_and_grad(x + alpha * d)
        gd1 = float(g1 @ d)
        if gd1 <= gd:  # no positive curvature seen yet
            alpha *= 2.0
            continue
        a_star = alpha * gd / (gd - gd1)
        x_new = x + a_star * d
        f_new, g_new = value_and_grad(x_new)
        if abs(float(g_new @ d)) < 0.9 * abs(gd) and f_new <= f0 + noise:
            return a_star, x_new, f_new, g_new
        alpha = a_star
    return None


def _check_finite(f, g):
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteError("cost or gradient is not finite")


@dataclass
class VqeSolution:
    kind: CostKind
    params_gs: HvaParams
    params_subspace: HvaParams
    final_cost: float
    cost_history: list[float]
    converged: bool
    gs_energy: float
    gs_converged: bool
    gs_history: list[float] = field(default_factory=list)
    initial_cost: float = float("nan")
    iterations: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params_gs": self.params_gs.to_dict(),
            "params_subspace": self.params_subspace.to_dict(),
            "final_cost": self.final_cost,
            "initial_cost": self.initial_cost,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "gs_energy": self.gs_energy,
            "gs_converged": self.gs_converged,
            "cost_history": self.cost_history,
            "gs_history": self.gs_history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VqeSolution":
        return cls(
            kind=CostKind(d["kind"]),
            params_gs=HvaParams.from_dict(d["params_gs"]),
            params_subspace=HvaParams.from_dict(d["params_subspace"]),
            final_cost=d["final_cost"],
            cost_history=list(d["cost_history"]),
            converged=d["converged"],
            gs_energy=d["gs_energy"],
            gs_converged=d["gs_converged"],
            gs_history=list(d.get("gs_history", [])),
            initial_cost=d.get("initial_cost", float("nan")),
            iterations=d.get("iterations", 0),
            message=d.get("message", ""),
        )


def _objective(cost: ClusterCost, config: OptimizerConfig):
    if config.gradient == "adjoint":
        return cost.value_and_grad

    def fd(x):
        return cost.value(x), cost.fd_gradient(x, config.fd_step)
    return fd


def solve_cluster(graph: ClusterGraph | SiteGraph, params_model: ModelParams,
                  kind: CostKind | str = CostKind.TR_GS_1QP,
                  layers_policy: LayerPolicy | str | int = LayerPolicy.HALF_N,
                  init: InitPolicy | str | None = None,
                  config: OptimizerConfig | None = None,
                  seed: int = 0, *, tie: bool = True, include_x: bool | None = None,
                  log_records: list | None = None,
                  snapshot_iterations: tuple[int, ...] = ()) -> VqeSolution:
    """Two-stage solve: ground-state energy first, then the subspace cost.

    ``include_x`` defaults to adding the X-field block only when the model
    has a longitudinal field, so the pure TFIM ansatz keeps Z2 parity.
    ``log_records`` collects one dict per CG iteration of both stages;
    parameter vectors at ``snapshot_iterations`` of stage 2 are attached to
    those records under ``"angles"``.
    """
    kind = CostKind(kind)
    config = config or OptimizerConfig()
    init = InitPolicy(init) if init is not None else config.init
    if include_x is None:
        include_x = params_model.h_l != 0
    n_layers = layers_policy if isinstance(layers_policy, int) else layer_count_policy(graph.n_sites, layers_policy)
    layout = HvaLayout.for_graph(graph, n_layers, tie=tie, include_x=include_x)
    ham = build_hamiltonian(graph, params_model)
    rng = np.random.default_rng(seed)

    def recorder(stage):
        def cb(rec):
            if log_records is None:
                return
            entry = {"stage": stage, "iteration": rec["iteration"], "cost": rec["cost"],
                     "grad_norm": rec["grad_norm"], "step": rec["step"]}
            if stage == 2 and rec["iteration"] in snapshot_iterations:
                entry["angles"] = rec["x"].tolist()
            log_records.append(entry)
        return cb

    energy = ClusterCost(ham, layout, "energy")
    theta0 = HvaParams.near_zero(layout, rng, config.init_scale).angles
    res1 = minimize_cg(_objective(energy, config), theta0, config, energy.value, recorder(1))
    log.info("stage 1 %s: E=%.12f |g|=%.2e (%s)", getattr(graph, "key", "graph"),
             res1.fun, res1.grad_norm, res1.message)
    params_gs = HvaParams(layout, res1.x)

    cost = ClusterCost(ham, layout, kind)
    if init is InitPolicy.WARM_START:
        start = res1.x.copy()
    else:
        start = HvaParams.near_zero(layout, rng, config.init_scale).angles
    initial_cost = cost.value(start)
    if log_records is not None and 0 in snapshot_iterations:
        log_records.append({"stage": 2, "iteration": 0, "cost": initial_cost,
                            "grad_norm": float("nan"), "step": 0.0, "angles": start.tolist()})
    res2 = minimize_cg(_objective(cost, config), start, config, cost.value, recorder(2))
    log.info("stage 2 %s/%s: C=%.3e |g|=%.2e (%s)", getattr(graph, "key", "graph"),
             kind.value, res2.fun, res2.grad_norm, res2.message)
    if not res2.converged:
        log.warning("cluster %s: %s did not converge (|g|=%.2e)",
                    getattr(graph, "key", "graph"), kind.value, res2.grad_norm)
    return VqeSolution(
        kind=kind,
        params_gs=params_gs,
        params_subspace=HvaParams(layout, res2.x),
        final_cost=res2.fun,
        cost_history=res2.history,
        converged=res2.converged,
        gs_energy=res1.fun,
        gs_converged=res1.converged,
        gs_history=res1.history,
        initial_cost=initial_cost,
        iterations=res2.n_iterations,
        message=res2.message,
    )


def prepared_states(graph, solution: VqeSolution) -> tuple[np.ndarray, np.ndarray]:
    """VQE-prepared ground state and the N rotated flip states (columns)."""
    basis = reference_basis(graph.n_sites)
    sub = HvaCircuit(solution.params_subspace.layout).apply(solution.params_subspace.angles, basis)
    if solution.kind.single_unitary:
        return sub[:, 0], sub[:, 1:]
    gs = HvaCircuit(solution.params_gs.layout).apply(solution.params_gs.angles, basis[:, :1])
    return gs[:, 0], sub[:, 1:]


def write_ndjson(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
