"""
Module: Experiment Configuration
Description: Loads and validates the JSON experiment document.
             Resolution order: an explicit file path, else a shipped demo
             config by name ("cap", "cone") from the package's configs folder.
             Structure, types and ranges are checked against configs/schema.json;
             the checks that need the medium or the domain follow here.
             Everything is validated before any kernel is evaluated.
"""

import json
import logging
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .carleman import ConeQuadrature
from .exceptions import ConfigError, MaterialError
from .geometry import DomainSpec
from .material import MaterialParams, Medium, validate
from .reconstruct import AuditTolerances

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CONFIG_DIR = Path(__file__).parent / "configs"
SCHEMA_PATH = CONFIG_DIR / "schema.json"
SHIPPED = ("cap", "cone")

# JSON key -> MaterialParams field.
MATERIAL_KEYS = {
    "lambda": "lambda_c", "mu": "mu_c", "nu": "nu_c", "beta": "beta_c", "epsilon": "epsilon_c",
    "alpha": "alpha_c", "rho": "rho_d", "theta": "theta_c", "sigma": "sigma_f",
}


@dataclass(frozen=True)
class SourceSpec:
    count: int = 4
    seed: int = 0


@dataclass(frozen=True)
class SweepSpec:
    """tau grid (numbers, with "auto" meaning choose_tau per delta), noise levels and M."""

    tau: Tuple[Union[float, str], ...]
    delta: Tuple[float, ...]
    M: Union[float, str] = "auto"

    @property
    def fixed_taus(self) -> Tuple[float, ...]:
        return tuple(t for t in self.tau if t != "auto")

    @property
    def auto(self) -> bool:
        return "auto" in self.tau


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "results"


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    schema_version: int
    experiment_id: str
    material: MaterialParams
    domain: DomainSpec
    sources: SourceSpec
    sweep: SweepSpec
    probes: np.ndarray
    tolerances: AuditTolerances
    quadrature: ConeQuadrature
    output: OutputSpec
    threads: int

    @property
    def medium(self) -> Medium:
        return Medium.build(self.material)


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _dotted(parts) -> str:
    path = ""
    for part in parts:
        path = _join(path, part)
    return path


@lru_cache(maxsize=1)
def schema_validator() -> Draft202012Validator:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as handle:
        schema = json.load(handle)
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def check_schema(data):
    """
    Structural validation against configs/schema.json.

    Raises:
        ConfigError: For the most relevant violation, with its dotted path. Unknown
            and missing keys are reported at the key itself.
    """
    error = best_match(schema_validator().iter_errors(data))
    if error is None:
        return
    path = _dotted(error.absolute_path)
    if error.validator == "additionalProperties":
        allowed = error.schema.get("properties", {})
        key = sorted(k for k in error.instance if k not in allowed)[0]
        raise ConfigError(f"unknown key '{key}'", path=_join(path, key))
    if error.validator == "required":
        key = next(k for k in error.validator_value if k not in error.instance)
        raise ConfigError("missing required key", path=_join(path, key))
    raise ConfigError(error.message, path=path)


def _material(data) -> MaterialParams:
    params = MaterialParams(**{field_name: float(data[key]) for key, field_name in MATERIAL_KEYS.items()})
    violations = validate(params)
    if violations:
        raise ConfigError(f"inadmissible medium: {', '.join(violations)}", path="material")
    try:
        Medium.build(params)
    except MaterialError as exc:
        raise ConfigError(str(exc), path="material") from exc
    return params


def _domain(data) -> DomainSpec:
    # DomainSpec rejects cone orders <= 1 and too coarse resolutions.
    return DomainSpec(data["branch"], float(data["radius"]), int(data["resolution"]),
                      float(data.get("rho_e", 1.0)))


def _sweep(data, k_max: float) -> SweepSpec:
    raw_tau = data["tau"]
    if raw_tau == "auto":
        raw_tau = ["auto"]
    taus = []
    for i, value in enumerate(raw_tau):
        if value == "auto":
            taus.append("auto")
        elif value <= k_max:
            raise ConfigError(f"tau={value} must exceed max k_l={k_max:.6g}", path=_join("sweep.tau", i))
        else:
            taus.append(float(value))

    deltas = [float(d) for d in data["delta"]]
    if "auto" in taus and not any(d > 0 for d in deltas):
        raise ConfigError("tau 'auto' needs at least one positive noise level", path="sweep.delta")

    M = data.get("M", "auto")
    if M != "auto":
        M = float(M)
        if any(d >= M for d in deltas):
            raise ConfigError("every noise level must be below M", path="sweep.M")
    return SweepSpec(tuple(taus), tuple(deltas), M)


def _probes(data, domain: DomainSpec) -> np.ndarray:
    points = np.asarray(data, dtype=float)
    for i, point in enumerate(points):
        if not domain.contains(point)[0]:
            raise ConfigError("probe lies outside the domain", path=_join("probes", i))
        if domain.branch == "cone" and np.any(point[:2] != 0.0):
            raise ConfigError("cone probes must lie on the axis", path=_join("probes", i))
    return points


def parse_config(data: dict) -> ExperimentConfig:
    """
    Validate a decoded JSON document.

    Raises:
        ConfigError: With the dotted path of the first offending field.
    """
    check_schema(data)
    material = _material(data["material"])
    domain = _domain(data["domain"])
    k_max = Medium.build(material).waves.k_max

    sources = data.get("sources", {})
    quad = data.get("quadrature", {})
    threads = data.get("threads")
    return ExperimentConfig(
        schema_version=data["schema_version"],
        experiment_id=data["experiment_id"],
        material=material,
        domain=domain,
        sources=SourceSpec(int(sources.get("count", 4)), int(sources.get("seed", 0))),
        sweep=_sweep(data["sweep"], k_max),
        probes=_probes(data["probes"], domain),
        tolerances=AuditTolerances(**{key: float(value) for key, value in data.get("tolerances", {}).items()}),
        quadrature=ConeQuadrature(int(quad.get("nodes", 16)), float(quad.get("truncation", 64.0))),
        output=OutputSpec(data.get("output", {}).get("directory", "results")),
        threads=int(threads) if threads is not None else os.cpu_count() or 1,
    )


def resolve_path(name_or_path: str) -> Path:
    """An existing file path, else the shipped demo config of that name."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    if name_or_path in SHIPPED:
        return CONFIG_DIR / f"{name_or_path}.json"
    raise ConfigError(f"no config file '{name_or_path}' and no shipped config of that name", path="")


def load_config(name_or_path: str, seed: Optional[int] = None, threads: Optional[int] = None) -> ExperimentConfig:
    """
    Read, validate and apply command-line overrides.

    Args:
        name_or_path (str): JSON file or shipped config name.
        seed (int | None): Overrides sources.seed.
        threads (int | None): Overrides threads.
    """
    path = resolve_path(name_or_path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path.name}: {exc.msg} (line {exc.lineno})") from exc
    cfg = parse_config(data)
    if seed is not None:
        cfg = replace(cfg, sources=SourceSpec(cfg.sources.count, seed))
    if threads is not None:
        if threads < 1:
            raise ConfigError("must be positive", path="threads")
        cfg = replace(cfg, threads=threads)
    logger.info("loaded config %s (%s branch) from %s", cfg.experiment_id, cfg.domain.branch, path)
    return cfg
