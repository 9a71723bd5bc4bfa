"""Command-line pipeline: clusters -> solver -> PCAT -> NLCE -> dispersion files.

A run is described by a :class:`RunConfig`, read from a ``key = value``
file and overridden by flags. Per-cluster effective Hamiltonians are cached
under a hash of every setting that can change them, so repeated runs only
redo what changed.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import dataclasses
import hashlib
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ed, nlce
from .hva import HvaCircuit, LayerPolicy, layer_count_policy
from .model import (ClusterGraph, Lattice, ModelParams, build_hamiltonian, enumerate_clusters,
                    reference_basis, unique_shapes)
from .pcat import Effective1QP, effective_from_states
from .statevector import MAX_QUBITS
from .vqe import CostKind, InitPolicy, OptimizerConfig, prepared_states, solve_cluster, write_ndjson

log = logging.getLogger("nlcevqe")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 3
CACHE_VERSION = 1


class ConfigError(ValueError):
    pass


class CacheCorrupt(RuntimeError):
    """A cache file failed its embedded checksum."""


@dataclass
class RunConfig:
    lattice: str = "chain"
    J: float = 1.0
    h_l: float = 0.0
    n_max: int = 8
    solver: str = "ed"  # ed | vqe | mixed
    vqe_min_sites: int | None = None  # mixed mode: VQE from this size up; None -> n_max
    method: str = "pcat"  # pcat | sw
    selection: str = "auto"  # ED 1QP selection: auto | overlap | continuation
    cost: str = "var-gs-1qp"
    layers: str = "half"  # half | full | integer
    init: str = "warm-start"
    grad_tolerance: float = 1e-8
    max_iterations: int = 2000
    restart_period: int | None = None
    grid: str = "auto"  # auto | uniform | path | full
    grid_points: int | None = None
    cache_dir: str | None = None  # None -> <out>/cache
    seed: int = 0
    workers: int = 1

    def validate(self) -> "RunConfig":
        try:
            Lattice(self.lattice)
            CostKind(self.cost)
            InitPolicy(self.init)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.solver not in ("ed", "vqe", "mixed"):
            raise ConfigError(f"solver must be ed, vqe or mixed, got {self.solver!r}")
        if self.method not in ("pcat", "sw"):
            raise ConfigError(f"method must be pcat or sw, got {self.method!r}")
        if self.selection not in ("auto", "overlap", "continuation"):
            raise ConfigError(f"unknown selection {self.selection!r}")
        if self.J < 0:
            raise ConfigError("J must be non-negative")
        if not 1 <= self.n_max <= MAX_QUBITS:
            raise ConfigError(f"n_max must be in [1, {MAX_QUBITS}]")
        if self.layers not in ("half", "full"):
            try:
                if int(self.layers) < 1:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"layers must be half, full or a positive integer, got {self.layers!r}") from None
        if self.grid not in ("auto", "uniform", "path", "full"):
            raise ConfigError(f"unknown grid {self.grid!r}")
        if self.grid_points is not None and self.grid_points < 2:
            raise ConfigError("grid_points must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.vqe_min_sites is not None and self.vqe_min_sites < 1:
            raise ConfigError("vqe_min_sites must be positive")
        try:
            self.optimizer()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def model(self) -> ModelParams:
        return ModelParams(J=self.J, h_l=self.h_l)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(grad_tolerance=self.grad_tolerance, max_iterations=self.max_iterations,
                               restart_period=self.restart_period, init=self.init)

    def layers_for(self, n_sites: int) -> int:
        if self.layers in ("half", "full"):
            return layer_count_policy(n_sites, LayerPolicy(self.layers))
        return int(self.layers)

    def solver_for(self, graph: ClusterGraph) -> str:
        if self.solver != "mixed":
            return self.solver
        threshold = self.vqe_min_sites if self.vqe_min_sites is not None else self.n_max
        return "vqe" if graph.n_sites >= threshold else "ed"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return _sha256(self.to_dict())


def _parse_optional_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


_PARSERS = {
    "J": float, "h_l": float, "grad_tolerance": float,
    "n_max": int, "max_iterations": int, "seed": int, "workers": int,
    "restart_period": _parse_optional_int, "grid_points": _parse_optional_int,
    "vqe_min_sites": _parse_optional_int,
}


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a ``key = value`` file (no section header needed) and apply overrides."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        text = Path(path).read_text()
        parser.read_string("[run]\n" + text)
        values.update(parser["run"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in values.items():
        if isinstance(v, str):
            v = v.strip()
            if k in _PARSERS:
                try:
                    v = _PARSERS[k](v)
                except ValueError:
                    raise ConfigError(f"bad value for {k}: {v!r}") from None
            elif k == "cache_dir" and v.lower() in ("", "none"):
                v = None
        kwargs[k] = v
    return RunConfig(**kwargs).validate()


def _sha256(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- cache

def cluster_hash(config: RunConfig, graph: ClusterGraph) -> str:
    """Hash of everything that determines one cluster's effective Hamiltonian."""
    solver = config.solver_for(graph)
    ident = {"version": CACHE_VERSION, "cluster": graph.key, "J": config.J, "h_l": config.h_l,
             "solver": solver, "method": config.method}
    if solver == "ed":
        ident["selection"] = config.selection
    else:
        ident.update(cost=config.cost, layers=config.layers_for(graph.n_sites), init=config.init,
                     seed=config.seed, optimizer=config.optimizer().to_dict())
    return _sha256(ident)


def cache_path(cache_dir: Path, graph: ClusterGraph, digest: str) -> Path:
    return Path(cache_dir) / f"{graph.key}-{digest[:16]}.json"


def cache_store(path: Path, record: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"checksum": _sha256(record), "record": record}
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.replace(path)


def cache_load(path: Path) -> dict | None:
    """The stored record, ``None`` on a miss; :class:`CacheCorrupt` on a bad file."""
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text())
        record, checksum = payload["record"], payload["checksum"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CacheCorrupt(f"{path}: unreadable ({exc})") from None
    if _sha256(record) != checksum:
        raise CacheCorrupt(f"{path}: checksum mismatch")
    return record


# ---------------------------------------------------------------- solving

def solve_one(config: RunConfig, key: str) -> tuple[dict, list[dict]]:
    """Solve one cluster; returns the JSON record and its iteration log."""
    graph = ClusterGraph.from_key(key)
    model = config.model()
    solver = config.solver_for(graph)
    records: list[dict] = []
    if solver == "ed":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ed.AdiabaticWeightWarning)
            eff, mats, weights = ed.ed_effective(graph, model, config.method, config.selection)
        diag = {"converged": True, "one_qp_weights": weights.tolist(),
                "warnings": [str(w.message) for w in caught]}
        records.append({"stage": "ed", "gs_energy": eff.gs_energy, "min_weight": float(weights.min())})
        vqe_part = None
    else:
        sol = solve_cluster(graph, model, config.cost, config.layers_for(graph.n_sites), config.init,
                            config.optimizer(), config.seed, log_records=records)
        gs, states = prepared_states(graph, sol)
        eff, mats = effective_from_states(gs, states, build_hamiltonian(graph, model), graph.coords,
                                          config.method)
        diag = {"converged": bool(sol.converged and sol.gs_converged), "final_cost": sol.final_cost,
                "gs_energy_vqe": sol.gs_energy, "iterations": sol.iterations, "message": sol.message}
        vqe_part = sol.to_dict()
    record = {
        "cluster": key,
        "solver": solver,
        "hash": cluster_hash(config, graph),
        "effective": eff.to_dict(),
        "subspace": mats.to_dict(),
        "diagnostics": diag,
        "vqe": vqe_part,
    }
    return record, records


def _solve_task(args):
    config_dict, key = args
    return solve_one(RunConfig(**config_dict), key)


@dataclass
class PipelineResult:
    curve: nlce.DispersionCurve
    records: dict = field(default_factory=dict)  # cluster key -> record

    @property
    def converged(self) -> bool:
        return all(r["diagnostics"]["converged"] for r in self.records.values())


def solve_clusters(config: RunConfig, graphs: list[ClusterGraph], out: Path | None = None) -> dict:
    """Solve (or load) each graph; writes ``clusters/`` and ``logs/`` under ``out``."""
    cache_dir = Path(config.cache_dir) if config.cache_dir else (out / "cache" if out else None)
    results, todo = {}, []
    for g in graphs:
        rec = None
        if cache_dir is not None:
            path = cache_path(cache_dir, g, cluster_hash(config, g))
            try:
                rec = cache_load(path)
            except CacheCorrupt as exc:
                log.warning("%s; recomputing", exc)
            if rec is not None:
                log.info("cache hit %s", g.key)
        if rec is None:
            todo.append(g.key)
        else:
            results[g.key] = (rec, None)

    tasks = [(config.to_dict(), key) for key in todo]
    with contextlib.ExitStack() as stack:
        if config.workers > 1 and len(tasks) > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=config.workers))
            fresh = pool.map(_solve_task, tasks)
        else:
            fresh = map(_solve_task, tasks)
        # store each result as it arrives so an interrupted run keeps finished clusters
        for key, (rec, logs) in zip(todo, fresh):
            results[key] = (rec, logs)
            if cache_dir is not None:
                cache_store(cache_path(cache_dir, ClusterGraph.from_key(key), rec["hash"]), rec)

    if out is not None:
        (out / "clusters").mkdir(parents=True, exist_ok=True)
        (out / "logs").mkdir(parents=True, exist_ok=True)
        for key, (rec, logs) in results.items():
            doc = {"config": config.to_dict(), "config_hash": config.digest(), **rec}
            (out / "clusters" / f"{key}.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
            if logs is not None:
                write_ndjson(logs, out / "logs" / f"{key}.ndjson")
    return {key: rec for key, (rec, _) in results.items()}


def effective_map(records: dict, graphs: list[ClusterGraph]) -> dict:
    """``extent -> Effective1QP`` for every graph, filling transposes from their partner."""
    out = {}
    for g in graphs:
        if g.key in records:
            out[g.extent] = Effective1QP.from_dict(records[g.key]["effective"])
    for g in graphs:
        if g.extent not in out:
            partner = g.transpose()
            src = out[partner.extent]
            out[g.extent] = src.permuted(partner.transpose_permutation(), g.coords)
    return out


def momentum_grid(config: RunConfig) -> tuple[np.ndarray, dict]:
    grid = config.grid
    if grid == "auto":
        grid = "uniform" if config.lattice == "chain" else "path"
    if config.lattice == "chain":
        if grid != "uniform":
            raise ConfigError("chains use the uniform grid")
        return nlce.chain_grid(config.grid_points or 201), {"grid": "uniform"}
    if grid == "path":
        ks, dist = nlce.square_path(config.grid_points or 67)
        return ks, {"grid": "path", "path_length": dist.tolist()}
    if grid == "full":
        return nlce.square_grid(config.grid_points or 33), {"grid": "full"}
    raise ConfigError("the square lattice uses the path or full grid")


def run_pipeline(config: RunConfig, out: str | Path | None = None) -> PipelineResult:
    """Enumerate, solve, transform and sum into the thermodynamic-limit dispersion."""
    config.validate()
    out = Path(out) if out is not None else None
    clusters = enumerate_clusters(config.lattice, config.n_max)
    if config.lattice == "chain":
        needed = [c for c in clusters if c.n_sites >= config.n_max - 1]
    else:
        needed = clusters
    to_solve = unique_shapes(needed)
    records = solve_clusters(config, to_solve, out)
    effs = effective_map(records, needed)
    ks, grid_info = momentum_grid(config)
    prov = {"config": config.to_dict(), "config_hash": config.digest(), **grid_info,
            "clusters": {k: {"solver": r["solver"], "hash": r["hash"], **r["diagnostics"]}
                         for k, r in sorted(records.items())}}
    if config.lattice == "chain":
        n = config.n_max
        curve = nlce.reduced_dispersion_chain(effs[(n, 1)], effs.get((n - 1, 1)), ks, prov)
    else:
        curve = nlce.reduced_dispersion_square(effs, ks, config.n_max, prov)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "dispersion.csv").write_text(curve.to_csv())
        (out / "dispersion.json").write_text(curve.to_json())
    result = PipelineResult(curve, records)
    for key, rec in records.items():
        if not rec["diagnostics"]["converged"]:
            log.warning("cluster %s did not converge", key)
    return result


# ---------------------------------------------------------------- diagnostics

def projection_diagnostics(config: RunConfig, key: str, snapshots=(0, 10, 100, 1000),
                           n_states: int | None = None) -> list[dict]:
    """Norms ``||P_VQE Psi_n||`` of low ED eigenstates at chosen stage-2 iterations.

    ``P_VQE`` projects onto the span of the prepared 1QP states. Each ED
    state is tagged as 1QP when it lies mostly inside the ED 1QP subspace.
    """
    graph = ClusterGraph.from_key(key)
    model = config.model()
    n = graph.n_sites
    count = min(1 << n, n_states or 4 * (n + 1))
    records: list[dict] = []
    sol = solve_cluster(graph, model, config.cost, config.layers_for(n), config.init,
                        config.optimizer(), config.seed, log_records=records,
                        snapshot_iterations=tuple(snapshots))
    spec = ed.low_energy_spectrum(build_hamiltonian(graph, model), count)
    if config.selection == "overlap" or (config.selection == "auto" and model.h_l == 0):
        _, one_qp, _ = ed.select_1qp_subspace(spec, n)
    else:
        _, one_qp, _ = ed.select_by_continuation(graph, model)
    one_qp_weight = np.sum(np.abs(one_qp.conj().T @ spec.eigenvectors) ** 2, axis=0)
    circuit = HvaCircuit(sol.params_subspace.layout)
    flips = reference_basis(n)[:, 1:]
    rows = []
    for rec in records:
        if rec.get("stage") != 2 or "angles" not in rec:
            continue
        q = circuit.apply(np.array(rec["angles"]), flips)
        norms = np.linalg.norm(q.conj().T @ spec.eigenvectors, axis=0)
        for i, (e, nrm) in enumerate(zip(spec.eigenvalues, norms)):
            rows.append({"iteration": rec["iteration"], "index": i, "energy": float(e),
                         "one_qp": bool(one_qp_weight[i] > 0.5), "norm": float(nrm),
                         "cost": rec["cost"]})
    return rows


# ---------------------------------------------------------------- CLI

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value run file")
    p.add_argument("--solver", choices=["ed", "vqe", "mixed"])
    p.add_argument("--nmax", dest="n_max", type=int)
    p.add_argument("--cost", choices=[c.value for c in CostKind])
    p.add_argument("--layers", help="half, full or a layer count")
    p.add_argument("--init", choices=[i.value for i in InitPolicy])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run", help="output directory (default: run)")
    p.add_argument("--workers", type=int)
    p.add_argument("--lattice", choices=[l.value for l in Lattice])
    p.add_argument("--J", dest="J", type=float)
    p.add_argument("--hl", dest="h_l", type=float)
    p.add_argument("--method", choices=["pcat", "sw"])
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _defaults_epilog() -> str:
    lines = ["config keys and defaults:"]
    for f in dataclasses.fields(RunConfig):
        lines.append(f"  {f.name} = {f.default}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlcevqe", description="1QP dispersion of the transverse-field Ising model by NLCE",
        epilog=_defaults_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("clusters", "list clusters and their NLCE weights"),
                        ("solve", "solve one cluster"),
                        ("disperse", "full pipeline to dispersion.csv/json"),
                        ("compare", "ED, SW and VQE curves side by side"),
                        ("diagnose", "projection of ED eigenstates on the VQE 1QP subspace")]:
        p = sub.add_parser(name, help=help_, epilog=_defaults_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        if name in ("solve", "diagnose"):
            p.add_argument("--cluster", required=True, help="cluster key, e.g. chain-6 or square-2x3")
        if name == "compare":
            p.add_argument("--curves", default="ed,sw", help="subset of ed,sw,vqe (default: ed,sw)")
        if name == "diagnose":
            p.add_argument("--snapshots", default="0,10,100,1000", help="stage-2 iterations to inspect")
            p.add_argument("--states", type=int, help="number of ED eigenstates (default 4(N+1))")
    return parser


_OVERRIDES = ("solver", "n_max", "cost", "layers", "init", "seed", "workers", "lattice", "J", "h_l",
              "method", "max_iterations")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, {k: getattr(args, k) for k in _OVERRIDES})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    try:
        return _COMMANDS[args.command](config, args, out)
    except (ed.AdiabaticAmbiguity, ed.EigensolverNotConverged, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _cmd_clusters(config, args, out) -> int:
    clusters = enumerate_clusters(config.lattice, config.n_max)
    if config.lattice == "chain":
        coef = {(config.n_max, 1): 1.0}
        if config.n_max > 1:
            coef[(config.n_max - 1, 1)] = -1.0
    else:
        coef = nlce.nlce_coefficients(nlce.extents_up_to(config.n_max))
    for c in clusters:
        print(f"{c.key}\tsites={c.n_sites}\tweight={coef.get(c.extent, 0.0):+g}\tsolver={config.solver_for(c)}")
    return EXIT_OK


def _cmd_solve(config, args, out) -> int:
    graph = ClusterGraph.from_key(args.cluster)
    rec = solve_clusters(config, [graph], out)[graph.key]
    d = rec["diagnostics"]
    eff = Effective1QP.from_dict(rec["effective"])
    print(f"{graph.key}: solver={rec['solver']} E0={eff.gs_energy:.10f} converged={d['converged']}")
    return EXIT_OK if d["converged"] else EXIT_NOT_CONVERGED


def _cmd_disperse(config, args, out) -> int:
    res = run_pipeline(config, out)
    print(f"wrote {out / 'dispersion.csv'} ({len(res.curve.omega)} momenta, order {res.curve.order})")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_compare(config, args, out) -> int:
    wanted = [c.strip() for c in args.curves.split(",") if c.strip()]
    variants = {"ed": dict(solver="ed", method="pcat"), "sw": dict(solver="ed", method="sw"),
                "vqe": dict(solver=config.solver if config.solver != "ed" else "vqe", method="pcat")}
    unknown = set(wanted) - set(variants)
    if unknown:
        print(f"unknown curves {sorted(unknown)}", file=sys.stderr)
        return EXIT_ERROR
    curves, ok = {}, True
    for name in wanted:
        cfg = dataclasses.replace(config, **variants[name]).validate()
        res = run_pipeline(cfg, out / name)
        curves[name] = res.curve
        ok &= res.converged
    first = curves[wanted[0]]
    ks = first.momenta.reshape(len(first.omega), -1)
    head = ["k"] if first.dim == 1 else ["kx", "ky"]
    lines = [",".join(head + [f"omega_{n}" for n in wanted])]
    for i, k in enumerate(ks):
        lines.append(",".join([f"{x:.12f}" for x in k] + [f"{curves[n].omega[i]:.12f}" for n in wanted]))
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    summary = {n: {"omega_min": float(c.omega.min()), "omega_max": float(c.omega.max()),
                   "total_variation": nlce.total_variation(c.omega)} for n, c in curves.items()}
    (out / "compare.json").write_text(json.dumps({"config": config.to_dict(), "curves": summary},
                                                 indent=2, sort_keys=True))
    for n, s in summary.items():
        print(f"{n}: omega in [{s['omega_min']:.6f}, {s['omega_max']:.6f}], TV={s['total_variation']:.4f}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _cmd_diagnose(config, args, out) -> int:
    snaps = [int(s) for s in args.snapshots.split(",") if s.strip()]
    rows = projection_diagnostics(config, args.cluster, snaps, args.states)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"diagnose-{args.cluster}.csv"
    with open(path, "w") as fh:
        fh.write("iteration,index,energy,one_qp,norm,cost\n")
        for r in rows:
            fh.write(f"{r['iteration']},{r['index']},{r['energy']:.10f},{int(r['one_qp'])},"
                     f"{r['norm']:.10f},{r['cost']:.6e}\n")
    if rows:
        last = max(r["iteration"] for r in rows)
        leak = [r for r in rows if r["iteration"] == last and not r["one_qp"] and r["norm"] > 0.1]
        print(f"iteration {last}: {len(leak)} non-1QP eigenstates with projection norm > 0.1")
        for r in leak:
            print(f"  state {r['index']} E={r['energy']:.6f} norm={r['norm']:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {"clusters": _cmd_clusters, "solve": _cmd_solve, "disperse": _cmd_disperse,
             "compare": _cmd_compare, "diagnose": _cmd_diagnose}


if __name__ == "__main__":
    sys.exit(main())
