"""Run configuration for the command-line front end.

A config file is JSON with a ``schema_version`` and one optional section
per subcommand; keys left out take the defaults below. Command-line flags
(--jobs, --seed, --tolerance-scale, --out) override the file.

    {
      "schema_version": 1,
      "seed": 0,
      "curvature": {"t_list": [0.001, 0.01, 0.1, 1.0], "ratio_max": 1000.0}
    }
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1
JOBS_ENV = "CONIFOLD_LAB_JOBS"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 1)."""


@dataclass
class ProfileConfig:
    samples: int = 200
    t_min: float = 1e-3
    t_max: float = 1.0
    ratio_min: float = 1.001
    ratio_max: float = 1e3
    ode_tol: float = 1e-9
    ode_fd_tol: float = 1e-6
    tau_points: int = 1000
    tau_min: float = 1e-3
    tau_max: float = 20.0
    h_lower_tol: float = 1e-5  # |h(tau_min) - 2/3|
    h_upper_tol: float = 1e-8  # |h(tau_max) - 1|
    convergence_t: list[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    convergence_delta: float = 0.25
    convergence_k1_tol: float = 1e-2
    ratio_band: list[float] = field(default_factory=lambda: [0.05, 0.2])
    ratio_t: float = 1e-4
    # the resolved and cone profiles are tabulated on this r2 grid as well
    reference_r2: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0])


@dataclass
class CutoffConfig:
    n_list: list[int] = field(default_factory=lambda: [50, 100, 500, 1000])
    grid_size: int = 2001
    law_tol: float = 1e-12
    variation_tol: float = 0.2


@dataclass
class PositivityConfig:
    scenario: Any = "default"  # "default", "trivial", "random" or a scenario mapping
    n_list: list[int] = field(default_factory=lambda: [100, 200, 400])
    density: int = 2
    kappa: float = 1.0
    c0_max: float = 1e6
    c0_bound: float = 1e3
    oracle_points: int = 20
    random_scenarios: int = 5
    match_rtol: float = 1e-8
    # oracle mismatches between match_rtol and this are logged, not failed
    report_only_rtol: float = 1e-2
    phi_tol: float = 1e-12
    c2_variation_tol: float = 0.2


@dataclass
class CurvatureConfig:
    t_list: list[float] = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0])
    ratio_min: float = 1.00101
    ratio_max: float = 1e3
    per_decade: int = 12
    extend: float = 10.0
    extra_r2: list[list[float]] = field(default_factory=list)  # explicit (t, r2) pairs
    sup_variation_tol: float = 0.1
    ricci_tol: float = 1e-8
    symmetry_tol: float = 1e-10
    oracle_tol: float = 1e-3
    oracle_points: int = 4
    metric_tol: float = 1e-10
    vol_tol: float = 1e-10
    grad_drift_tol: float = 0.05
    s3_t: list[float] = field(default_factory=lambda: [0.1, 1.0])
    s3_eps: list[float] = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    s3_tol: float = 1e-3
    identity_tol: float = 1e-10


@dataclass
class ReportConfig:
    inputs: list[str] = field(default_factory=list)


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    jobs: int = 1
    tolerance_scale: float = 1.0
    out: str = "conifold_lab_out"
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    cutoff: CutoffConfig = field(default_factory=CutoffConfig)
    positivity: PositivityConfig = field(default_factory=PositivityConfig)
    curvature: CurvatureConfig = field(default_factory=CurvatureConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        sections = {"profile": ProfileConfig, "cutoff": CutoffConfig, "positivity": PositivityConfig,
                    "curvature": CurvatureConfig, "report": ReportConfig}
        kwargs: dict[str, Any] = {}
        top = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sections:
                kwargs[key] = _section(sections[key], value, key)
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        _require(isinstance(self.seed, int) and self.seed >= 0, "seed must be a nonnegative integer")
        _require(isinstance(self.jobs, int) and self.jobs >= 1, "jobs must be a positive integer")
        _require(_pos(self.tolerance_scale), "tolerance_scale must be positive")
        p = self.profile
        _require(p.samples >= 1 and p.tau_points >= 2, "profile grids must be nonempty")
        _require(0 < p.t_min <= p.t_max, "profile needs 0 < t_min <= t_max")
        _require(1 < p.ratio_min <= p.ratio_max, "profile needs 1 < ratio_min <= ratio_max")
        _require(0 < p.tau_min < p.tau_max, "profile needs 0 < tau_min < tau_max")
        _require(len(p.convergence_t) >= 2 and all(0 < t < p.convergence_delta for t in p.convergence_t),
                 "convergence_t needs >= 2 values in (0, convergence_delta)")
        _require(len(p.ratio_band) == 2 and 0 < p.ratio_t < p.ratio_band[0] < p.ratio_band[1] < 0.25,
                 "ratio band needs 0 < ratio_t < lo < hi < 1/4")
        _require(all(_pos(x) for x in p.reference_r2), "reference_r2 must be positive")
        c = self.cutoff
        _require(len(c.n_list) >= 1, "cutoff n_list must be nonempty")
        _require(all(isinstance(n, int) and n >= 4 for n in c.n_list), "cutoff needs integer n >= 4")
        _require(c.grid_size >= 11, "cutoff grid_size too small")
        q = self.positivity
        _require(len(q.n_list) >= 1 and all(isinstance(n, int) and n >= 4 for n in q.n_list),
                 "positivity needs integer n >= 4")
        _require(q.density >= 1 and q.oracle_points >= 1 and q.random_scenarios >= 0, "positivity grids must be nonempty")
        _require(_pos(q.c0_max) and _pos(q.c0_bound) and _pos(q.kappa), "positivity bounds must be positive")
        _require(isinstance(q.scenario, dict) or q.scenario in ("default", "trivial", "random"),
                 "scenario must be default, trivial, random or a mapping")
        k = self.curvature
        _require(len(k.t_list) >= 1 and all(_pos(t) for t in k.t_list), "curvature t_list must be positive")
        _require(1 < k.ratio_min < k.ratio_max, "curvature needs 1 < ratio_min < ratio_max")
        _require(k.per_decade >= 1 and k.extend > 1 and k.oracle_points >= 0, "curvature grid settings invalid")
        _require(all(len(pair) == 2 and all(_pos(x) for x in pair) for pair in k.extra_r2),
                 "extra_r2 entries must be positive (t, r2) pairs")
        _require(len(k.s3_eps) >= 2 and all(_pos(e) for e in k.s3_eps) and all(_pos(t) for t in k.s3_t),
                 "s3 settings need >= 2 positive epsilons and positive t")
        for section in (p, c, q, k):
            for f in fields(section):
                if f.name.endswith("_tol") or f.name.endswith("_rtol"):
                    _require(_pos(getattr(section, f.name)), f"{f.name} must be positive")

    def tol(self, value: float) -> float:
        return value * self.tolerance_scale


def _section(cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return cls(**value)


def _pos(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) and x > 0


def _require(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV)
    if raw is None:
        return 1
    try:
        jobs = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{JOBS_ENV} must be an integer, got {raw!r}") from exc
    if jobs < 1:
        raise ConfigError(f"{JOBS_ENV} must be >= 1")
    return jobs
