"""Scenario runs behind the command line: sweeps, optimization and verification."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from ._linalg import max_abs
from .config import (Model, Scenario, build_model, control_basis,
                     dump_scenario, initial_state, residual_basis, steps_for,
                     sweep_times)
from .controls import (ControlProblem, adjoint_trajectory, gradient_check,
                       optimality_residual, pang_jordan_control,
                       variational_optimize)
from .dynamics import (evolve_periodic, generator, generator_by_derivative,
                       optimal_initial_state, propagate, qfi, qfi_ratio)
from .errors import CapacityError, ConfigError
from .pauli import DENSE_LIMIT

log = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_value", "qfi", "qfi_ratio", "mu_plus", "mu_minus", "residual_max", "steps", "wall_ms")
RESIDUAL_BUDGET = 4_000_000
"""Largest ``steps * dim^2`` for which a stored trajectory is built to evaluate residuals."""


@dataclass
class RunReport:
    kind: str
    scenario: Scenario
    records: list
    summary: dict = field(default_factory=dict)
    extra_tables: dict = field(default_factory=dict)

    def provenance(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "config_hash": self.scenario.config_hash(),
            "seed": self.scenario.seed,
            "qfi_convention": self.scenario.qfi_convention,
            "initial_state": self.scenario.initial_state,
            "step_counts": [r["steps"] for r in self.records],
            "version": __version__,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({k: _fmt(r[k]) for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"kind": self.kind, "provenance": self.provenance(), "summary": self.summary,
                "records": [{k: _jsonable(v) for k, v in r.items()} for r in self.records],
                "config": self.scenario.to_dict()}

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.scenario.name
        paths = [out / f"{stem}.csv", out / f"{stem}.report.json", out / f"plot_{stem}.py"]
        paths[0].write_text(self.csv_text())
        paths[1].write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        paths[2].write_text(plot_script(self, paths[0].name))
        for name, (header, rows) in self.extra_tables.items():
            p = out / f"{stem}_{name}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([_fmt(x) for x in row])
            paths.append(p)
        return paths

    def table(self) -> str:
        lines = ["  ".join(f"{c:>12}" for c in CSV_COLUMNS[:6])]
        for r in self.records:
            lines.append("  ".join(f"{_fmt(r[c]):>12}" for c in CSV_COLUMNS[:6]))
        for k, v in self.summary.items():
            if not isinstance(v, (list, dict)):
                lines.append(f"{k}: {_fmt(v)}")
        return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.12g}"
    return str(x)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def plot_script(report: RunReport, csv_name: str) -> str:
    xlabel = "n" if report.kind == "sweep-n" else "t_f"
    return f'''"""Plot {csv_name}; generated by floquet-metrology {report.kind}."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path) as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["sweep_value"]) for r in rows]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
ax1.plot(x, [float(r["qfi"]) for r in rows], "o-")
ax1.set_xlabel("{xlabel}")
ax1.set_ylabel("QFI ({report.scenario.qfi_convention})")
ax2.plot(x, [float(r["qfi_ratio"]) for r in rows], "o-")
ax2.set_xlabel("{xlabel}")
ax2.set_ylabel("QFI / unrestricted bound")
ax2.set_ylim(0, 1.05)
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


# single point -------------------------------------------------------------------

def evaluate_point(sc: Scenario, t_f: float, n: int | None = None, *, want_residual: bool = True) -> dict:
    """QFI, normalized ratio, extremal eigenvalues and residual for one ``(t_f, n)``."""
    start = time.perf_counter()
    model = build_model(sc, n)
    schedule = model.schedule
    nn = schedule.n_sites
    conv = sc.qfi_convention
    record = {"t_f": t_f, "n": nn, "events": [], "omega": model.omega, "amplitude": model.amplitude}
    if t_f == 0:
        record.update(qfi=0.0, qfi_ratio=0.0, mu_plus=0.0, mu_minus=0.0, residual_max=float("nan"), steps=0)
        record["wall_ms"] = (time.perf_counter() - start) * 1e3
        return record
    rbasis = residual_basis(sc, nn) if want_residual else None
    steps = steps_for(sc, model, t_f)
    affordable = rbasis is not None and steps * schedule.dim ** 2 <= RESIDUAL_BUDGET
    allow = sc.grid.allow_undersampled
    if sc.control.kind == "pang_jordan":
        pj = pang_jordan_control(schedule, t_f, steps)
        schedule = pj.to_schedule(schedule)
        record["events"] = [e.as_record() for e in pj.events]
        result = propagate(schedule, t_f, steps, store=affordable, allow_undersampled=allow)
    elif model.periodic and not affordable:
        result = evolve_periodic(schedule, t_f, sc.grid.steps_per_period, allow_undersampled=allow)
    else:
        result = propagate(schedule, t_f, steps, store=affordable, allow_undersampled=allow)
    spec = generator(result, schedule, conv)
    psi = initial_state(sc, nn)
    if psi is None:
        psi, _ = optimal_initial_state(spec)
    value = qfi(spec, psi)
    bound = schedule.unrestricted_bound(t_f, steps, conv)
    residual = float("nan")
    if affordable and not spec.is_degenerate:
        adj = adjoint_trajectory(result, spec)
        residual = optimality_residual(rbasis, adj).summary
    record.update(qfi=value, qfi_ratio=qfi_ratio(value, bound), mu_plus=spec.mu_plus, mu_minus=spec.mu_minus,
                  residual_max=residual, steps=result.steps, bound=bound)
    record["wall_ms"] = (time.perf_counter() - start) * 1e3
    return record


def dual_generator_deviation(sc: Scenario, t_f: float, n: int | None = None) -> float:
    """Max-norm gap between the integral-form and finite-difference generators.

    Restricted-control scenarios use seeded random coefficients so the check
    covers a time-dependent control table.
    """
    model = build_model(sc, n)
    schedule = model.schedule
    steps = steps_for(sc, model, t_f)
    allow = sc.grid.allow_undersampled
    if sc.control.kind == "pang_jordan":
        schedule = pang_jordan_control(schedule, t_f, steps).to_schedule(schedule)
    elif sc.control.kind == "restricted":
        basis = control_basis(sc, schedule.n_sites)
        if basis is not None:
            schedule = ControlProblem.random(schedule, basis, t_f, steps, 0.5, sc.seed).controlled_schedule()
    if model.periodic:
        g1 = evolve_periodic(schedule, t_f, sc.grid.steps_per_period, allow_undersampled=allow).generator_final
        g2 = generator_by_derivative(schedule, t_f, periodic=True, steps_per_period=sc.grid.steps_per_period,
                                     allow_undersampled=allow)
    else:
        g1 = propagate(schedule, t_f, steps, store=False, allow_undersampled=allow).generator_final
        g2 = generator_by_derivative(schedule, t_f, steps, allow_undersampled=allow)
    return max_abs(g1 - g2)


def _point_task(args):
    text, t_f, n, want = args
    from .config import parse_scenario
    return evaluate_point(parse_scenario(text), t_f, n, want_residual=want)


def _map_points(sc: Scenario, points, workers: int | None, want_residual: bool):
    workers = sc.workers if workers is None else workers
    if workers <= 1 or len(points) <= 1:
        return [evaluate_point(sc, t, n, want_residual=want_residual) for t, n in points]
    text = dump_scenario(sc)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_task, [(text, t, n, want_residual) for t, n in points]))


def run_sweep_time(sc: Scenario, workers: int | None = None, want_residual: bool = True) -> RunReport:
    """QFI against probe time for the scenario's grid."""
    model = build_model(sc)
    times = sweep_times(sc, model)
    records = _map_points(sc, [(t, None) for t in times], workers, want_residual)
    for r in records:
        r["sweep_value"] = r["t_f"]
    ratios = [r["qfi_ratio"] for r in records if r["t_f"] > 0]
    summary = {"min_ratio": min(ratios) if ratios else float("nan"),
               "final_ratio": records[-1]["qfi_ratio"], "omega": model.omega, "amplitude": model.amplitude}
    if model.counter is not None:
        summary["static_counter_control"] = repr(model.counter)
    return RunReport("sweep-time", sc, records, summary)


def run_sweep_n(sc: Scenario, workers: int | None = None, dense_limit: int = DENSE_LIMIT) -> RunReport:
    """QFI against chain length at a fixed probe time, with a fitted power law."""
    if sc.system.kind != "chain":
        raise ConfigError("sweep-n needs a chain system")
    if sc.sweep.n is None or sc.sweep.t_f is None:
        raise ConfigError("sweep-n needs sweep.n and sweep.t_f")
    too_big = [n for n in sc.sweep.n if n > dense_limit]
    if too_big:
        raise CapacityError(f"n = {too_big} beyond the dense limit; allowed range is 1..{dense_limit}")
    records = _map_points(sc, [(sc.sweep.t_f, n) for n in sc.sweep.n], workers, want_residual=False)
    for r in records:
        r["sweep_value"] = r["n"]
    summary = {"t_f": sc.sweep.t_f, "min_ratio": min(r["qfi_ratio"] for r in records)}
    ns = np.array([r["n"] for r in records], float)
    qs = np.array([r["qfi"] for r in records], float)
    if len(ns) >= 2 and np.all(qs > 0):
        summary["fitted_exponent"] = fitted_exponent(ns, qs)
    else:
        summary["fitted_exponent"] = float("nan")
    return RunReport("sweep-n", sc, records, summary)


def fitted_exponent(ns, qs) -> float:
    """Least-squares slope of ``log QFI`` against ``log n``."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(qs, float)), 1)[0])


def run_optimize(sc: Scenario, gradient_samples: int = 20) -> RunReport:
    """Optimize restricted controls at the last ``grid.t_f``."""
    if sc.control.kind != "restricted":
        raise ConfigError("optimize needs control.kind = restricted")
    if sc.grid.t_f is None:
        raise ConfigError("optimize needs grid.t_f")
    t_f = sc.grid.t_f[-1]
    if t_f <= 0:
        raise ConfigError("optimize needs a positive t_f")
    model = build_model(sc)
    basis = control_basis(sc, model.schedule.n_sites)
    if basis is None:
        raise ConfigError("optimize needs control.basis")
    steps = steps_for(sc, model, t_f)
    psi = initial_state(sc, model.schedule.n_sites)
    kw = dict(initial_state="generator_optimal" if psi is None else psi, convention=sc.qfi_convention,
              allow_undersampled=sc.grid.allow_undersampled)
    if sc.control.init == "random":
        problem = ControlProblem.random(model.schedule, basis, t_f, steps, sc.control.init_scale, sc.seed, **kw)
    else:
        problem = ControlProblem.zeros(model.schedule, basis, t_f, steps, **kw)
    start = time.perf_counter()
    baseline = ControlProblem.zeros(model.schedule, basis, t_f, steps, **kw).evaluate()
    deviation = gradient_check(problem, samples=gradient_samples, seed=sc.seed)
    result = variational_optimize(problem, sc.control.iterations, sc.control.step, tol=sc.control.tol,
                                  bound=sc.control.bound, method=sc.control.method)
    final = result.problem
    s, r = final.propagate()
    spec = generator(r, s, sc.qfi_convention)
    residual = float("nan")
    if not spec.is_degenerate:
        residual = optimality_residual(basis, adjoint_trajectory(r, spec)).summary
    bound = model.schedule.unrestricted_bound(t_f, steps, sc.qfi_convention)
    record = {"sweep_value": t_f, "qfi": result.qfi, "qfi_ratio": qfi_ratio(result.qfi, bound),
              "mu_plus": spec.mu_plus, "mu_minus": spec.mu_minus, "residual_max": residual, "steps": steps,
              "wall_ms": (time.perf_counter() - start) * 1e3}
    summary = {"baseline_qfi": baseline, "initial_qfi": result.history[0], "final_qfi": result.qfi,
               "unrestricted_bound": bound, "gradient_check_deviation": deviation,
               "iterations": result.iterations, "converged": result.converged, "message": result.message,
               "history": list(map(float, result.history))}
    grid = np.linspace(0.0, t_f, steps + 1)
    coeff_rows = [[t, *final.coefficients[:, k]] for k, t in enumerate(grid)]
    tables = {"coefficients": (["tau", *[f"c_{i + 1}" for i in range(len(basis))]], coeff_rows),
              "history": (["iteration", "qfi"], list(enumerate(result.history)))}
    summary["basis_labels"] = list(basis.labels)
    return RunReport("optimize", sc, [record], summary, tables)


# verification ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


def run_verify(effective: Callable | None = None, n_max: int = 6, dense_limit: int = DENSE_LIMIT,
               fuzz_pairs: int = 1000, seed: int = 0) -> list[Check]:
    """Oracle-equivalence checks.

    ``effective`` replaces the effective-Hamiltonian builder, which lets a
    mutation harness confirm that the matching checks notice a broken formula.
    """
    from .floquet import (afm_frequency_chain, afm_frequency_qubit, chain_drive,
                          effective_hamiltonian, kick_operator, qubit_drive)
    from .pauli import (PauliOperator, anticommuting_sites, chain_sum,
                        commutator, spin_chain_parts, to_dense)
    from .three_body import three_body_drive
    from .dynamics import HamiltonianSchedule

    if n_max > dense_limit:
        raise CapacityError(f"check size n_max = {n_max} exceeds the dense limit {dense_limit}")
    effective = effective or effective_hamiltonian
    rng = np.random.default_rng(seed)
    checks = []

    # parity rule and dense commutators on random strings
    worst, parity_bad = 0.0, 0
    for _ in range(fuzz_pairs):
        n = int(rng.integers(1, n_max + 1))
        a = _random_string(rng, n)
        b = _random_string(rng, n)
        c = commutator(a, b)
        ka, = (k for k, _ in a.items())
        kb, = (k for k, _ in b.items())
        if bool(c) == (anticommuting_sites(ka, kb) % 2 == 0):
            parity_bad += 1
        A, B = to_dense(a, dense_limit), to_dense(b, dense_limit)
        worst = max(worst, max_abs(A @ B - B @ A - to_dense(c, dense_limit)))
    checks.append(Check("commutator parity rule", parity_bad, 0, parity_bad == 0, f"{fuzz_pairs} pairs"))
    checks.append(Check("commutator dense agreement", worst, 1e-12, worst <= 1e-12))

    # three-body constructions
    worst = 0.0
    for pattern in ("XXX", "XZX", "XZY", "XXZ+YYZ"):
        for n in range(4, min(6, n_max) + 1):
            tb = three_body_drive(pattern, n, amplitude=10.0)
            A, B = to_dense(tb.H_plus, dense_limit), to_dense(tb.H_minus, dense_limit)
            worst = max(worst, max_abs(A @ B - B @ A - to_dense(tb.commutator, dense_limit)),
                        max_abs(to_dense(tb.three_body - tb.predicted, dense_limit)))
    checks.append(Check("three-body synthesis", worst, 1e-10, worst <= 1e-10))

    # matching cancels the targeted terms
    c = [10.0] * 5
    w = afm_frequency_qubit(c, [-1j * x for x in c], 1.0)
    H = PauliOperator(1, {"X0": 0.5, "Z0": 0.5})
    hf = effective(H, qubit_drive(c, c, w)).H_F
    val = abs(hf.coefficient("X0"))
    checks.append(Check("qubit matching cancels X", val, 1e-10, val <= 1e-10, f"omega={w:.6f}"))
    n = min(4, n_max)
    if n >= 3:
        w = afm_frequency_chain(c, c, 1.0)
        static, dl = spin_chain_parts(n, 0.0, 1.0)
        hf = effective(static + dl, chain_drive(c, c, w, n)).H_F
        val = max_abs([abs(v) for k, v in hf.items() if len(k) == 3] or [0.0])
        checks.append(Check("chain matching cancels XXX", val, 1e-9, val <= 1e-9, f"n={n}"))

    # kick operator normalization
    drv = qubit_drive(c, c, 1826.6666666666667)
    k0 = max_abs(kick_operator(drv, 0.0))
    ts = rng.uniform(0, 10 * drv.period, 20)
    per = max(max_abs(kick_operator(drv, t + drv.period) - kick_operator(drv, t)) for t in ts)
    checks.append(Check("kick K(0) = 0", k0, 0.0, k0 == 0.0))
    checks.append(Check("kick periodicity", per, 1e-12, per <= 1e-12))

    # integral and derivative generators
    X = PauliOperator.from_label("X0", 1)
    Z = PauliOperator.from_label("Z0", 1)
    sched = HamiltonianSchedule(1, 0.5 * X, lam_terms=[(0.5 * Z, None)], lam=1.0, drive=drv)
    g1 = evolve_periodic(sched, 20 * drv.period).generator_final
    g2 = generator_by_derivative(sched, 20 * drv.period, periodic=True)
    dev = max_abs(g1 - g2)
    checks.append(Check("dual generator agreement", dev, 1e-5, dev <= 1e-5))
    return checks


def _random_string(rng, n):
    from .pauli import PauliOperator
    letters = rng.integers(0, 4, n)
    key = tuple((i, "XYZ"[l - 1]) for i, l in enumerate(letters) if l)
    return PauliOperator(n, {key: 1.0})


def format_checks(checks: list[Check]) -> str:
    lines = [f"{'check':32} {'value':>12} {'tolerance':>10}  result"]
    for c in checks:
        lines.append(f"{c.name:32} {_fmt(float(c.value)):>12} {_fmt(float(c.tolerance)):>10}  "
                     f"{'PASS' if c.passed else 'FAIL'} {c.detail}".rstrip())
    return "\n".join(lines)
