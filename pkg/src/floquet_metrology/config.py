"""Scenario files: parsing, validation, overrides and schedule construction.

A scenario is a YAML mapping with the sections ``system``, ``control``,
``grid`` and ``sweep`` plus a few top-level keys.  The file ``docs/config.md`` in the repository lists
every key.  ``load_scenario`` fills defaults, so ``dump_scenario`` of a loaded
scenario is canonical and loading it again gives the same scenario.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .controls import ControlBasis
from .dynamics import (HamiltonianSchedule, MIN_STEPS_PER_PERIOD,
                       convention_factor, ghz_state, product_state)
from .errors import ConfigError, ValidationError
from .floquet import (HarmonicDrive, afm_amplitude, afm_frequency_chain,
                      afm_frequency_qubit, chain_drive, qubit_drive,
                      static_counter_control)
from .pauli import (DENSE_LIMIT, BoundaryCondition, PauliOperator,
                    spin_chain_parts)

SYSTEMS = ("qubit", "chain")
CONTROLS = ("none", "pang_jordan", "restricted", "floquet")
INITIAL_STATES = ("generator_optimal", "plus", "ghz")


def _num(value, name, allow_afm=False):
    if allow_afm and value == "afm":
        return "afm"
    try:
        x = float(value)
    except (TypeError, ValueError):
        extra = " or 'afm'" if allow_afm else ""
        raise ConfigError(f"{name} must be a number{extra}, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"{name} must be finite")
    return x


def _ascending(values, name, cast=float):
    if values is None:
        return None
    if not isinstance(values, (list, tuple)):
        values = [values]
    try:
        out = [cast(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} entries must be numbers") from None
    if not out:
        raise ConfigError(f"{name} must not be empty")
    if any(not math.isfinite(v) for v in out):
        raise ConfigError(f"{name} entries must be finite")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{name} must be strictly ascending")
    return out


def _reject_unknown(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class SystemSpec:
    kind: str = "qubit"
    n: int = 1
    lam: float = 1.0
    Delta: float = 1.0
    J: float = 0.0
    bc: str = "periodic"

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        _reject_unknown(d, [f.name for f in dataclasses.fields(cls)], "system")
        kind = d.get("kind", "qubit")
        if kind not in SYSTEMS:
            raise ConfigError(f"system.kind must be one of {SYSTEMS}")
        n = int(d.get("n", 1 if kind == "qubit" else 4))
        if kind == "qubit" and n != 1:
            raise ConfigError("a qubit system has n = 1")
        bc = BoundaryCondition.parse(d.get("bc", "periodic")).value
        return cls(kind, n, _num(d.get("lam", 1.0), "lam"), _num(d.get("Delta", 1.0), "Delta"),
                   _num(d.get("J", 0.0), "J"), bc)


@dataclass(frozen=True)
class ControlSpec:
    kind: str = "none"
    harmonics: tuple = (1, 2, 3, 4, 5)
    amplitude: Any = 10.0
    amplitude_tilde: Any = None
    omega: Any = "afm"
    counter_control: bool = False
    basis: Any = None
    coefficients: dict = field(default_factory=dict)
    init: str = "zeros"
    init_scale: float = 0.1
    iterations: int = 100
    method: str = "gradient"
    step: float = 0.5
    tol: float = 1e-6
    bound: Any = None

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSpec":
        _reject_unknown(d, [f.name for f in dataclasses.fields(cls)], "control")
        kind = d.get("kind", "none")
        if kind not in CONTROLS:
            raise ConfigError(f"control.kind must be one of {CONTROLS}")
        harmonics = tuple(_ascending(d.get("harmonics", [1, 2, 3, 4, 5]), "control.harmonics", int))
        if harmonics[0] < 1:
            raise ConfigError("harmonic indices start at 1")
        amp = _num(d.get("amplitude", 10.0), "control.amplitude", allow_afm=True)
        amp_t = d.get("amplitude_tilde")
        amp_t = None if amp_t is None else _num(amp_t, "control.amplitude_tilde")
        omega = _num(d.get("omega", "afm"), "control.omega", allow_afm=True)
        if kind == "floquet":
            if amp == "afm" and omega == "afm":
                raise ConfigError("fix either control.amplitude or control.omega; the other may be 'afm'")
            if omega != "afm" and omega <= 0:
                raise ConfigError("control.omega must be positive")
        basis = d.get("basis")
        if basis is not None and not isinstance(basis, str):
            basis = [str(b) for b in basis]
        coeffs = {str(k): _num(v, f"control.coefficients.{k}") for k, v in (d.get("coefficients") or {}).items()}
        init = d.get("init", "zeros")
        if init not in ("zeros", "random"):
            raise ConfigError("control.init must be 'zeros' or 'random'")
        method = d.get("method", "gradient")
        if method not in ("gradient", "lbfgs"):
            raise ConfigError("control.method must be 'gradient' or 'lbfgs'")
        bound = d.get("bound")
        bound = None if bound is None else _num(bound, "control.bound")
        iterations = int(d.get("iterations", 100))
        if iterations < 0:
            raise ConfigError("control.iterations must be non-negative")
        return cls(kind, harmonics, amp, amp_t, omega, bool(d.get("counter_control", False)), basis, coeffs,
                   init, _num(d.get("init_scale", 0.1), "control.init_scale"), iterations, method,
                   _num(d.get("step", 0.5), "control.step"), _num(d.get("tol", 1e-6), "control.tol"), bound)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["harmonics"] = list(self.harmonics)
        return out


@dataclass(frozen=True)
class GridSpec:
    t_f: tuple | None = None
    periods: tuple | None = None
    steps_per_period: int | None = None
    dt: float = 0.01
    allow_undersampled: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        _reject_unknown(d, [f.name for f in dataclasses.fields(cls)], "grid")
        t_f = _ascending(d.get("t_f"), "grid.t_f")
        periods = _ascending(d.get("periods"), "grid.periods", int)
        if t_f is not None and periods is not None:
            raise ConfigError("give grid.t_f or grid.periods, not both")
        if t_f is not None and t_f[0] < 0:
            raise ConfigError("grid.t_f must be non-negative")
        if periods is not None and periods[0] < 0:
            raise ConfigError("grid.periods must be non-negative")
        spp = d.get("steps_per_period")
        spp = None if spp is None else int(spp)
        if spp is not None and spp < 1:
            raise ConfigError("grid.steps_per_period must be positive")
        dt = _num(d.get("dt", 0.01), "grid.dt")
        if dt <= 0:
            raise ConfigError("grid.dt must be positive")
        return cls(None if t_f is None else tuple(t_f), None if periods is None else tuple(periods), spp, dt,
                   bool(d.get("allow_undersampled", False)))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k in ("t_f", "periods"):
            if out[k] is not None:
                out[k] = list(out[k])
        return out


@dataclass(frozen=True)
class SweepSpec:
    n: tuple | None = None
    t_f: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        _reject_unknown(d, ["n", "t_f"], "sweep")
        n = _ascending(d.get("n"), "sweep.n", int)
        if n is not None and n[0] < 1:
            raise ConfigError("sweep.n must be positive")
        t_f = d.get("t_f")
        t_f = None if t_f is None else _num(t_f, "sweep.t_f")
        return cls(None if n is None else tuple(n), t_f)

    def to_dict(self) -> dict:
        return {"n": None if self.n is None else list(self.n), "t_f": self.t_f}


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemSpec
    control: ControlSpec
    grid: GridSpec
    sweep: SweepSpec
    description: str = ""
    long_running: bool = False
    qfi_convention: str = "var"
    initial_state: str = "generator_optimal"
    residual_basis: Any = "auto"
    seed: int = 0
    workers: int = 1

    TOP = ("name", "description", "long_running", "qfi_convention", "initial_state", "residual_basis",
           "seed", "workers", "system", "control", "grid", "sweep")

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario must be a mapping")
        _reject_unknown(d, cls.TOP, "scenario")
        sections = {}
        for key, spec in (("system", SystemSpec), ("control", ControlSpec), ("grid", GridSpec), ("sweep", SweepSpec)):
            sec = d.get(key) or {}
            if not isinstance(sec, dict):
                raise ConfigError(f"section {key} must be a mapping")
            sections[key] = spec.from_dict(sec)
        conv = d.get("qfi_convention", "var")
        try:
            convention_factor(conv)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None
        init = d.get("initial_state", "generator_optimal")
        if init not in INITIAL_STATES:
            raise ConfigError(f"initial_state must be one of {INITIAL_STATES}")
        rb = d.get("residual_basis", "auto")
        if not isinstance(rb, str):
            rb = [str(x) for x in rb]
        workers = int(d.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be positive")
        sc = cls(str(d.get("name", "scenario")), sections["system"], sections["control"], sections["grid"],
                 sections["sweep"], str(d.get("description", "")), bool(d.get("long_running", False)), conv,
                 init, rb, int(d.get("seed", 0)), workers)
        sc.validate()
        return sc

    def validate(self):
        sysk, ck = self.system.kind, self.control.kind
        if sysk == "chain" and self.system.n < 2:
            raise ConfigError("a chain needs n >= 2")
        if ck == "floquet" and sysk == "chain" and self.system.bc != "periodic":
            raise ConfigError("the chain drive needs periodic boundaries")
        if self.grid.periods is not None and ck != "floquet":
            raise ConfigError("grid.periods needs a Floquet drive")
        if self.initial_state == "ghz" and sysk != "chain":
            raise ConfigError("initial_state ghz needs a chain")

    def to_dict(self) -> dict:
        return {
            "name": self.name, "description": self.description, "long_running": self.long_running,
            "qfi_convention": self.qfi_convention, "initial_state": self.initial_state,
            "residual_basis": self.residual_basis, "seed": self.seed, "workers": self.workers,
            "system": dataclasses.asdict(self.system), "control": self.control.to_dict(),
            "grid": self.grid.to_dict(), "sweep": self.sweep.to_dict(),
        }

    def with_n(self, n: int) -> "Scenario":
        return dataclasses.replace(self, system=dataclasses.replace(self.system, n=int(n)))

    def config_hash(self) -> str:
        return hashlib.sha256(dump_scenario(self).encode()).hexdigest()[:16]


def parse_scenario(text: str, overrides=()) -> Scenario:
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scenario: {exc}") from None
    data = apply_overrides(data, overrides)
    return Scenario.from_dict(data)


def load_scenario(path: str | Path, overrides=()) -> Scenario:
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        if str(path) in bundled:
            return parse_scenario(bundled[str(path)], overrides)
        raise ConfigError(f"no scenario file {path} (bundled: {', '.join(sorted(bundled))})")
    return parse_scenario(p.read_text(), overrides)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(sc.to_dict(), sort_keys=True, default_flow_style=None)


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars or lists."""
    out = copy.deepcopy(data) if isinstance(data, dict) else {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty key")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {p} is not a section")
            node = nxt
        node[parts[-1]] = value
    return out


def bundled_scenarios() -> dict[str, str]:
    root = resources.files("floquet_metrology") / "scenarios"
    return {p.name[:-5]: p.read_text() for p in root.iterdir() if p.name.endswith(".yaml")}


# building models ----------------------------------------------------------------

@dataclass
class Model:
    """Everything needed to evaluate one sweep point."""

    schedule: HamiltonianSchedule
    drive: HarmonicDrive | None
    counter: PauliOperator | None
    amplitude: float | None
    omega: float | None

    @property
    def periodic(self) -> bool:
        return self.schedule.is_periodic


def _coefficient_lists(harmonics, amp, amp_t):
    L = max(harmonics)
    c = [0.0] * L
    ct = [0.0] * L
    for l in harmonics:
        c[l - 1] = amp
        ct[l - 1] = amp if amp_t is None else amp_t
    return c, ct


def build_model(sc: Scenario, n: int | None = None, dense_limit: int = DENSE_LIMIT) -> Model:
    """Schedule for the scenario, optionally at another chain length."""
    sysd, ctl = sc.system, sc.control
    n = sysd.n if n is None else int(n)
    if n > dense_limit:
        raise ValidationError(f"n = {n} exceeds the dense limit; allowed range is 1..{dense_limit}")
    if sysd.kind == "qubit":
        X = PauliOperator.from_label("X0", 1)
        static = (sysd.Delta / 2) * X
        dlam = PauliOperator.from_label("Z0", 1) * 0.5
    else:
        static, dlam = spin_chain_parts(n, sysd.J, sysd.Delta, sysd.bc)
    drive = None
    counter = None
    amp = omega = None
    if ctl.kind == "floquet":
        harmonics = ctl.harmonics
        if ctl.omega == "afm":
            amp = float(ctl.amplitude)
            c, ct = _coefficient_lists(harmonics, amp, ctl.amplitude_tilde)
            if sysd.kind == "qubit":
                omega = afm_frequency_qubit(c, [-1j * x for x in ct], sysd.Delta)
            else:
                omega = afm_frequency_chain(c, ct, sysd.Delta)
        else:
            omega = float(ctl.omega)
            if ctl.amplitude == "afm":
                amp = afm_amplitude(omega, harmonics, sysd.Delta)
            else:
                amp = float(ctl.amplitude)
            c, ct = _coefficient_lists(harmonics, amp, ctl.amplitude_tilde)
        if sysd.kind == "qubit":
            drive = qubit_drive(c, ct, omega)
        else:
            drive = chain_drive(c, ct, omega, n, sysd.bc)
    if ctl.counter_control:
        counter = static_counter_control(static, dlam)
        static = static + counter
    if ctl.kind == "restricted" and ctl.coefficients:
        for label, value in ctl.coefficients.items():
            static = static + value * PauliOperator.from_label(label, n)
    schedule = HamiltonianSchedule(n, static, lam_terms=[(dlam, None)], lam=sysd.lam, drive=drive)
    return Model(schedule, drive, counter, amp, omega)


def control_basis(sc: Scenario, n: int, spec=None) -> ControlBasis | None:
    spec = sc.control.basis if spec is None else spec
    if spec is None:
        return None
    if spec == "full":
        return ControlBasis.full(n)
    if spec == "local_chain":
        return ControlBasis.local_chain(n, sc.system.bc)
    if isinstance(spec, str):
        raise ConfigError(f"unknown basis {spec!r}; use 'full', 'local_chain' or a list of labels")
    return ControlBasis.from_labels(spec, n)


def residual_basis(sc: Scenario, n: int) -> ControlBasis | None:
    rb = sc.residual_basis
    if rb == "none":
        return None
    if rb == "auto":
        if sc.control.kind == "floquet" and sc.system.kind == "qubit":
            return ControlBasis.from_labels(["Y0", "Z0"], 1)
        if sc.control.kind == "pang_jordan":
            return ControlBasis.full(n)
        if sc.control.kind == "restricted" and sc.control.basis is not None:
            return control_basis(sc, n)
        return None
    return control_basis(sc, n, rb)


def initial_state(sc: Scenario, n: int):
    if sc.initial_state == "generator_optimal":
        return None
    if sc.initial_state == "plus":
        return product_state(n, [1, 1])
    return ghz_state(n)


def steps_for(sc: Scenario, model: Model, t_f: float) -> int:
    """Step count for a non-periodic propagation of length ``t_f``."""
    if model.drive is not None:
        spp = sc.grid.steps_per_period or MIN_STEPS_PER_PERIOD * model.drive.l_max
        return max(1, int(math.ceil(t_f / model.drive.period * spp - 1e-9)))
    return max(2, int(math.ceil(t_f / sc.grid.dt - 1e-9)))


def sweep_times(sc: Scenario, model: Model) -> list[float]:
    if sc.grid.periods is not None:
        return [p * model.drive.period for p in sc.grid.periods]
    if sc.grid.t_f is None:
        raise ConfigError("grid.t_f or grid.periods is required for a time sweep")
    return list(sc.grid.t_f)
