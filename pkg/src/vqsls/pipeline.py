"""Stage runner behind the command line: build costs from a config, run a stage, checkpoint it."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .chem_io import MolecularIntegrals, bundled_fcidump, bundled_fcidump_names, read_fcidump
from .config import IsingProblem, RunConfig
from .errors import ResourceError
from .mps import MpsCost
from .noise import CountedEvaluator, NoiseSpec, estimate_required_shots
from .optimizer import (ConjugateDirections, HessianResult, LineSearchRun, SearchWindow,
                        WindowTarget, finite_difference_hessian, optimize_windows, powell_minimize,
                        run_line_search, select_directions, surrogate_minimize)
from .pauli import PauliHamiltonian, build_ising_hamiltonian
from .spin_sim import EntanglerAnsatz, StatevectorCost, exact_ground_energy
from .sws import SwsCost, build_uccsd_ansatz

log = logging.getLogger(__name__)

SCHEMA = "vqsls-checkpoint"
SCHEMA_VERSION = 1
HISTORY_COLUMNS = ["iteration", "n_calls", "energy", "sigma"]

STAGES = ("surrogate", "hessian", "windows", "linesearch", "powell", "shots")


class MissingCheckpointError(RuntimeError):
    def __init__(self, stage: str, needed_by: str):
        super().__init__(f"stage '{needed_by}' needs the '{stage}' checkpoint; run `vqsls {stage}` first")
        self.stage = stage


class StageError(RuntimeError):
    """Wraps a failure with the stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class CheckpointStore:
    def __init__(self, root: str | Path, config_hash: str = ""):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash

    def path(self, stage: str) -> Path:
        return self.root / f"{stage}.json"

    def has(self, stage: str) -> bool:
        return self.path(stage).exists()

    def save(self, stage: str, data: dict) -> Path:
        doc = {"schema": SCHEMA, "version": SCHEMA_VERSION, "stage": stage,
               "config_hash": self.config_hash, "data": data}
        p = self.path(stage)
        tmp = p.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(p)
        return p

    def load(self, stage: str, needed_by: str | None = None) -> dict:
        p = self.path(stage)
        if not p.exists():
            raise MissingCheckpointError(stage, needed_by or stage)
        doc = json.loads(p.read_text(encoding="utf-8"))
        if doc.get("schema") != SCHEMA or doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"{p} is not a version-{SCHEMA_VERSION} checkpoint")
        if self.config_hash and doc.get("config_hash") != self.config_hash:
            log.warning("%s was written under a different configuration", p.name)
        return doc["data"]


def write_history(path: Path, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(HISTORY_COLUMNS)
        for it, calls, energy, sigma in rows:
            w.writerow([it, calls, repr(float(energy)), repr(float(sigma))])
    return path


def _load_molecule(spec: str) -> MolecularIntegrals:
    if Path(spec).exists():
        return read_fcidump(spec)
    if spec in bundled_fcidump_names():
        return bundled_fcidump(spec)
    raise FileNotFoundError(f"no FCIDUMP at {spec!r} and no bundled dump of that name "
                            f"(bundled: {', '.join(bundled_fcidump_names())})")


class _Scaled:
    """Cost of a shorter chain, rescaled to an extensive target length."""

    def __init__(self, cost, factor: float):
        self.cost, self.factor = cost, factor

    def __call__(self, params) -> float:
        return self.factor * self.cost(params)


@dataclass
class Problem:
    config: RunConfig

    @property
    def is_ising(self) -> bool:
        return isinstance(self.config.problem, IsingProblem)

    @cached_property
    def molecule(self) -> MolecularIntegrals:
        return _load_molecule(self.config.problem.fcidump)

    def _ising_h(self, n: int) -> PauliHamiltonian:
        p = self.config.problem
        return build_ising_hamiltonian(n, p.j1, p.j2, p.ht)

    @cached_property
    def hamiltonian(self) -> PauliHamiltonian:
        if self.is_ising:
            return self._ising_h(self.config.problem.n_sites)
        from .fermion import molecular_qubit_hamiltonian
        return molecular_qubit_hamiltonian(self.molecule)

    @cached_property
    def ansatz(self):
        if self.is_ising:
            p = self.config.problem
            return EntanglerAnsatz(p.n_sites, p.generator_sign)
        p, s = self.config.problem, self.config.surrogate
        n_cut = s.n_cut if s.n_cut is not None else p.n_cut
        n_max = s.n_max if s.n_max is not None else p.n_max
        return build_uccsd_ansatz(self.molecule, p.n_doubles, n_cut, n_max)

    def initial_params(self) -> np.ndarray:
        if self.is_ising:
            x0 = self.config.problem.initial_params
            return np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
        return np.asarray(self.ansatz.params, dtype=float)

    @cached_property
    def surrogate(self) -> Callable:
        s = self.config.surrogate
        if self.is_ising:
            n = self.config.problem.n_sites
            if s.kind == "mps":
                return MpsCost(self.ansatz, self.hamiltonian, s.chi, s.routing)
            n_sur = s.n_sites or n
            if n_sur == n:
                return StatevectorCost(self.ansatz, self.hamiltonian)
            a = EntanglerAnsatz(n_sur, self.config.problem.generator_sign)
            return _Scaled(StatevectorCost(a, self._ising_h(n_sur)), n / n_sur)
        return SwsCost(self.ansatz, self.molecule, truncated=True)

    @cached_property
    def highlevel(self):
        if self.is_ising:
            return StatevectorCost(self.ansatz, self.hamiltonian)
        return SwsCost(self.ansatz, self.molecule, truncated=False)

    def oracle_energy(self) -> float | None:
        """Lowest eigenvalue of the full Hamiltonian when small enough to diagonalize."""
        try:
            if self.is_ising:
                return exact_ground_energy(self.hamiltonian)
            m = self.molecule
            if 2 * m.n_orb > 16:
                return None
            return _fci_energy(m)
        except ResourceError:
            return None


def _fci_energy(m: MolecularIntegrals) -> float:
    """Lowest eigenvalue in the particle-number and spin-projection sector."""
    import scipy.sparse.linalg as sla
    from .fermion import molecular_qubit_hamiltonian
    h = molecular_qubit_hamiltonian(m).to_sparse()
    n = m.n_orb
    nq = 2 * n
    idx = np.arange(1 << nq)
    # qubit q sits at bit nq-1-q; alpha orbitals are qubits 0..n-1
    beta_mask = (1 << n) - 1
    n_beta = np.bitwise_count(idx & beta_mask)
    n_alpha = np.bitwise_count(idx >> n)
    n_a = (m.n_elec + m.ms2) // 2
    sel = np.flatnonzero((n_alpha == n_a) & (n_beta == m.n_elec - n_a))
    block = h[sel][:, sel]
    if block.shape[0] <= 2000:
        return float(np.linalg.eigvalsh(block.toarray())[0])
    return float(sla.eigsh(block, k=1, which="SA", tol=1e-12, return_eigenvectors=False)[0])


class Pipeline:
    def __init__(self, config: RunConfig, out: str | Path | None = None, jobs: int = 1):
        self.config = config
        self.out = Path(out if out is not None else config.output)
        text = json.dumps(config.model_dump(mode="json"), sort_keys=True)
        self.store = CheckpointStore(self.out, hashlib.sha256(text.encode()).hexdigest()[:16])
        self.jobs = max(1, int(jobs))
        self.problem = Problem(config)
        (self.out / "resolved_config.yaml").write_text(config.resolved_yaml(), encoding="utf-8")

    def _run(self, stage: str, fn):
        try:
            return fn()
        except MissingCheckpointError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc

    # stages ---------------------------------------------------------------
    def surrogate(self) -> dict:
        def go():
            cfg = self.config.surrogate
            res = surrogate_minimize(self.problem.surrogate, self.problem.initial_params(), tol=cfg.tol)
            data = {"x": res.x.tolist(), "energy": res.energy, "grad_inf": res.grad_inf,
                    "n_calls": res.n_calls, "converged": res.converged, "message": res.message}
            self.store.save("surrogate", data)
            return data
        return self._run("surrogate", go)

    def hessian(self) -> dict:
        def go():
            sur = self.store.load("surrogate", "hessian")
            ls = self.config.linesearch
            h = finite_difference_hessian(self.problem.surrogate, sur["x"], ls.fd_step, jobs=self.jobs)
            dirs = select_directions(h, ls.drop_tol, ls.keep_top)
            data = {"hessian": h.to_dict(), "directions": dirs.to_dict()}
            self.store.save("hessian", data)
            return data
        return self._run("hessian", go)

    def _noise_level(self) -> float:
        n = self.config.noise
        if n.kind == "gaussian":
            return n.sigma
        if n.kind == "shots":
            return n.epsilon or 1e-3
        return 1e-8

    def windows(self) -> dict:
        def go():
            sur = self.store.load("surrogate", "windows")
            hd = self.store.load("hessian", "windows")
            ls = self.config.linesearch
            t = ls.target
            target = WindowTarget(t.kind, t.value if t.value is not None else self._noise_level())
            dirs = ConjugateDirections.from_dict(hd["directions"])
            w = optimize_windows(self.problem.surrogate, np.array(sur["x"]), dirs, target, ls.M,
                                 ls.degree, seed=self.config.seed)
            data = w.to_dict()
            self.store.save("windows", data)
            return data
        return self._run("windows", go)

    def _evaluator(self, seed_offset: int, x_ref) -> CountedEvaluator:
        n = self.config.noise
        seed = self.config.seed * 1_000_003 + seed_offset
        if n.kind == "none":
            spec = NoiseSpec.none()
        elif n.kind == "gaussian":
            spec = NoiseSpec.gaussian(n.sigma)
        elif n.kind == "depolarizing":
            spec = NoiseSpec.depolarizing(n.p, n.inverse_rescale)
        else:
            shots = n.n_shots
            if shots is None:
                est = estimate_required_shots(self.problem.hamiltonian,
                                              _dense_state(self.problem.highlevel, x_ref), n.epsilon)
                shots = max(1, int(np.ceil(est.n_shots)))
            spec = NoiseSpec.shots(shots)
        h = self.problem.hamiltonian if n.kind in ("shots", "depolarizing") else None
        return CountedEvaluator(self.problem.highlevel, spec, seed, hamiltonian=h)

    def linesearch(self) -> LineSearchRun:
        def go():
            sur = self.store.load("surrogate", "linesearch")
            hd = self.store.load("hessian", "linesearch")
            wd = self.store.load("windows", "linesearch")
            dirs = ConjugateDirections.from_dict(hd["directions"])
            window = SearchWindow.from_dict(wd)
            ls = self.config.linesearch
            x0 = np.array(sur["x"])
            ev = self._evaluator(0, x0)
            run = None
            if self.store.has("linesearch"):
                saved = self.store.load("linesearch")
                run = LineSearchRun.from_dict(saved["run"])
                ev.restore(run.total_calls, saved.get("evaluations", []))

            def checkpoint(r: LineSearchRun):
                rows = [list(r) for r in ev.log_rows()]
                self.store.save("linesearch", {"run": r.to_dict(), "evaluations": rows})
                write_history(self.out / "history.csv",
                              [(it.iteration, it.total_calls, it.energy, it.sigma) for it in r.iterations])

            run = run_line_search(ev, x0, dirs, window, ls.max_iters, self.jobs, ls.sequential,
                                  self.config.seed, run=run, on_iteration=checkpoint)
            checkpoint(run)
            ev.write_log(self.out / "evaluations.csv")
            return run
        return self._run("linesearch", go)

    def powell(self) -> dict:
        def go():
            sur = self.store.load("surrogate", "powell")
            hd = self.store.load("hessian", "powell")
            dirs = ConjugateDirections.from_dict(hd["directions"])
            ev = self._evaluator(1, np.array(sur["x"]))
            cfg = self.config.powell
            res = powell_minimize(ev, np.array(sur["x"]), dirs, cfg.tol, cfg.max_calls, raise_on_cap=False)
            sigma = self._noise_level() if self.config.noise.kind == "gaussian" else 0.0
            write_history(self.out / "powell_history.csv",
                          [(k, calls, e, sigma) for k, calls, e in res.iterations])
            data = {"x": res.x.tolist(), "n_calls": res.n_calls, "converged": res.converged,
                    "iterations": [list(r) for r in res.iterations]}
            self.store.save("powell", data)
            return data
        return self._run("powell", go)

    def shots(self) -> dict:
        def go():
            sur = self.store.load("surrogate", "shots")
            h = self.problem.hamiltonian
            state = _dense_state(self.problem.highlevel, np.array(sur["x"]))
            rows = []
            for eps in self.config.shots.epsilons:
                est = estimate_required_shots(h, state, eps, self.config.shots.variance)
                rows.append({"epsilon": eps, "n_ungrouped": est.n_ungrouped, "r_hat": est.r_hat,
                             "n_shots": est.n_shots})
            with open(self.out / "shots.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, ["epsilon", "n_ungrouped", "r_hat", "n_shots"], lineterminator="\r\n")
                w.writeheader()
                for r in rows:
                    w.writerow({k: repr(float(v)) for k, v in r.items()})
            data = {"rows": rows, "n_qubits": h.n_qubits, "n_terms": len(h.terms)}
            self.store.save("shots", data)
            return data
        return self._run("shots", go)

    def run_all(self) -> dict:
        if not self.store.has("surrogate"):
            self.surrogate()
        if not self.store.has("hessian"):
            self.hessian()
        if not self.store.has("windows"):
            self.windows()
        run = self.linesearch()
        powell = self.store.load("powell") if self.store.has("powell") else self.powell()
        shots = self.store.load("shots") if self.store.has("shots") else self.shots()
        final = run.final_center
        summary = {
            "converged": run.converged,
            "converged_iteration": run.converged_iteration,
            "iterations": len(run.iterations),
            "total_calls": run.total_calls,
            "final_params": final.tolist(),
            "final_energy_estimate": run.iterations[-1].energy,
            "final_energy_noiseless": float(self.problem.highlevel(final)),
            "oracle_energy": self.problem.oracle_energy(),
            "powell_calls": powell["n_calls"],
            "powell_energy_noiseless": float(self.problem.highlevel(np.array(powell["x"]))),
            "r_hat": shots["rows"][0]["r_hat"] if shots["rows"] else None,
        }
        (self.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
        return summary


def _dense_state(cost, x) -> np.ndarray:
    state = cost.state(x)
    if hasattr(state, "to_statevector"):
        return np.asarray(state.to_statevector())
    return np.asarray(state)
