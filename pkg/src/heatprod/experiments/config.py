"""Scenario configuration (JSON, versioned schema) and run manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .. import __version__
from ..errors import ConfigError
from ..lattice import PROFILES, VectorPotentialSpec

SCHEMA_VERSION = 1


@dataclass
class PotentialConfig:
    """Shape of the vector potential; strength and scale come from the grids."""

    t0: float = 0.0
    t1: float = 4.0
    direction: list | None = None  # default: first unit vector
    time_profile: str = "bump"
    space_profile: str = "bump"
    quadrature_nodes: int = 16


@dataclass
class ScenarioConfig:
    """All parameters of a scenario.

    Parameters
    ----------
    d : int
        Lattice dimension.
    L : list of float
        Box half sides.
    lam : float
        Disorder strength (JSON key ``"lambda"``).
    beta : float
        Inverse temperature.
    seeds : list of int
        Disorder seeds.
    potential : PotentialConfig
    eta, l : list of float
        Field strengths and spatial scales.
    step : float or None
        Integrator step; ``None`` means ``(t1 - t0) / 400``.
    horizon : float
        Final time of trajectories.
    record_every : int
        Emit every n-th grid point.
    K : int
        Truncation order for series checks.
    epsilon : float
        Decay excess for decay checks.
    m : int
        Taylor order for ``taylor``.
    L_obs : float
        Observation box half side for ``decay``.
    constant_potential : float
        Site-independent potential value used by ``decay``.
    oracle : bool
        Also run the Fock oracle where the box is small enough.
    balance_tolerance, first_law_tolerance : float
        Tolerances declared in the manifest.
    """

    schema_version: int = SCHEMA_VERSION
    d: int = 1
    L: list = field(default_factory=lambda: [16.0])
    lam: float = 0.5
    beta: float = 1.0
    seeds: list = field(default_factory=lambda: [0])
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    eta: list = field(default_factory=lambda: [0.2])
    l: list = field(default_factory=lambda: [4.0])
    step: float | None = None
    horizon: float = 24.0
    record_every: int = 1
    K: int = 3
    epsilon: float = 0.5
    m: int = 2
    L_obs: float = 4.0
    constant_potential: float = 0.0
    oracle: bool = False
    balance_tolerance: float = 1e-6
    first_law_tolerance: float = 1e-8

    # -- derived -----------------------------------------------------------

    @property
    def direction(self) -> tuple:
        if self.potential.direction is None:
            return tuple(1.0 if i == 0 else 0.0 for i in range(self.d))
        return tuple(float(v) for v in self.potential.direction)

    @property
    def integrator_step(self) -> float:
        p = self.potential
        return self.step if self.step is not None else (p.t1 - p.t0) / 400.0

    def vector_potential(self, eta: float, l: float) -> VectorPotentialSpec:
        p = self.potential
        return VectorPotentialSpec(float(eta), float(l), float(p.t0), float(p.t1), self.direction,
                                   p.time_profile, p.space_profile, int(p.quadrature_nodes))

    # -- validation --------------------------------------------------------

    def errors(self) -> list[tuple[str, str]]:
        bad = []
        p = self.potential

        def nonempty(name):
            v = getattr(self, name)
            if not isinstance(v, (list, tuple)) or len(v) == 0:
                bad.append((name, "must be a nonempty list"))
                return False
            return True

        if self.schema_version != SCHEMA_VERSION:
            bad.append(("schema_version", f"unsupported version {self.schema_version}"))
        if not isinstance(self.d, int) or self.d < 1:
            bad.append(("d", "must be a positive integer"))
        if nonempty("L") and any(not (isinstance(v, (int, float)) and v >= 1) for v in self.L):
            bad.append(("L", "half sides must be numbers >= 1"))
        if not self.lam >= 0:
            bad.append(("lambda", "must be nonnegative"))
        if not self.beta > 0:
            bad.append(("beta", "must be positive"))
        if nonempty("seeds") and any(not isinstance(s, int) for s in self.seeds):
            bad.append(("seeds", "must be integers"))
        nonempty("eta")
        if nonempty("l") and any(not v > 0 for v in self.l):
            bad.append(("l", "scales must be positive"))
        if not p.t0 < p.t1:
            bad.append(("potential.t1", "need t0 < t1"))
        if not p.t1 <= self.horizon:
            bad.append(("horizon", "need t1 <= horizon"))
        if self.step is not None and not self.step > 0:
            bad.append(("step", "must be positive"))
        if p.time_profile not in PROFILES:
            bad.append(("potential.time_profile", f"unknown profile {p.time_profile!r}"))
        if p.space_profile not in PROFILES:
            bad.append(("potential.space_profile", f"unknown profile {p.space_profile!r}"))
        if not (isinstance(p.quadrature_nodes, int) and p.quadrature_nodes >= 1):
            bad.append(("potential.quadrature_nodes", "must be a positive integer"))
        if p.direction is not None:
            if len(p.direction) != self.d or abs(sum(v * v for v in p.direction) - 1.0) > 1e-12:
                bad.append(("potential.direction", "must be a unit vector of length d"))
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            bad.append(("record_every", "must be a positive integer"))
        if not (isinstance(self.K, int) and self.K >= 1):
            bad.append(("K", "must be a positive integer"))
        if not self.epsilon > 0:
            bad.append(("epsilon", "must be positive"))
        if not (isinstance(self.m, int) and 0 <= self.m <= 6):
            bad.append(("m", "must be an integer in 0..6"))
        if not self.L_obs > 0:
            bad.append(("L_obs", "must be positive"))
        return bad

    def validate(self) -> "ScenarioConfig":
        bad = self.errors()
        if bad:
            raise ConfigError([b[0] for b in bad], [b[1] for b in bad])
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        out["potential"]["direction"] = list(self.direction)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)} | {"lambda"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown, ["unknown field"] * len(unknown))
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        pot = data.pop("potential", {}) or {}
        pknown = {f.name for f in fields(PotentialConfig)}
        punknown = sorted(set(pot) - pknown)
        if punknown:
            raise ConfigError([f"potential.{k}" for k in punknown], ["unknown field"] * len(punknown))
        for key in ("L", "seeds", "eta", "l"):
            if key in data and not isinstance(data[key], list):
                data[key] = [data[key]]
        cfg = cls(**data, potential=PotentialConfig(**pot))
        return cfg.validate()

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(["<file>"], [f"not valid JSON: {exc}"]) from None
        if not isinstance(data, dict):
            raise ConfigError(["<file>"], ["top level must be an object"])
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tolerance: float


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, plus the outcome of its checks."""

    command: str
    config: ScenarioConfig
    steps: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, name: str, residual: float, tolerance: float, passed: bool | None = None):
        ok = bool(residual <= tolerance) if passed is None else bool(passed)
        self.checks.append(Check(name, ok, float(residual), float(tolerance)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tool": "heatprod",
            "version": __version__,
            "command": self.command,
            "config_hash": self.config.hash(),
            "config": self.config.to_dict(),
            "seeds": list(self.config.seeds),
            "integrator": {"method": "exponential_midpoint", "step": self.config.integrator_step,
                           "steps": self.steps},
            "quadrature_nodes": self.config.potential.quadrature_nodes,
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float) + "\n"
