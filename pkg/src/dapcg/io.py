"""JSON documents for problems, run configs and run manifests.

A problem document looks like::

    {
      "schema_version": 1,
      "dimension": 3,
      "agents": [
        {"f": {...}, "h": {...}, "map": {...}, "anchor": [...], "bounding": {...}},
        ...
      ],
      "known_solution": [...],          # optional
      "x0": [...], "x1": [...]          # optional starting points
    }

Matrices are nested row-major lists; numbers are plain JSON decimals, which
round-trip float64 exactly.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

from dapcg.problem import AgentSpec, Problem, as_vector, map_from_dict, set_from_dict, term_from_dict

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A JSON document is malformed.  ``key`` points at the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def problem_to_dict(problem: Problem, x0=None, x1=None) -> dict:
    agents = []
    for agent in problem.agents:
        entry = {
            "f": agent.f.to_dict(),
            "h": agent.h.to_dict(),
            "map": dict(agent.map.descriptor),
            "anchor": agent.anchor.tolist(),
        }
        if agent.bounding is not None:
            entry["bounding"] = agent.bounding.to_dict()
        agents.append(entry)
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": problem.name,
        "dimension": problem.dimension,
        "agents": agents,
    }
    if problem.known_solution is not None:
        doc["known_solution"] = problem.known_solution.tolist()
    if x0 is not None:
        doc["x0"] = as_vector(x0).tolist()
    if x1 is not None:
        doc["x1"] = as_vector(x1).tolist()
    return doc


def _require(data: dict, key: str, where: str):
    if not isinstance(data, dict):
        raise ConfigError(where, "expected a JSON object")
    if key not in data:
        raise ConfigError(f"{where}.{key}" if where else key, "missing")
    return data[key]


def check_schema_version(data: dict) -> None:
    version = _require(data, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}, expected {SCHEMA_VERSION}")


def problem_from_dict(data: dict) -> tuple[Problem, np.ndarray | None, np.ndarray | None]:
    """Rebuild ``(problem, x0, x1)``; the starting points are None when absent."""
    check_schema_version(data)
    dim = _require(data, "dimension", "")
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError("dimension", "must be a positive integer")
    raw_agents = _require(data, "agents", "")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise ConfigError("agents", "must be a non-empty list")

    agents = []
    for k, raw in enumerate(raw_agents):
        where = f"agents[{k}]"
        parts = {}
        for key, builder in (("f", term_from_dict), ("h", term_from_dict), ("map", map_from_dict)):
            sub = _require(raw, key, where)
            try:
                parts[key] = builder(sub)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.{key}", str(exc)) from exc
        try:
            anchor = as_vector(_require(raw, "anchor", where), dim)
        except ValueError as exc:
            raise ConfigError(f"{where}.anchor", str(exc)) from exc
        bounding = None
        if raw.get("bounding") is not None:
            try:
                bounding = set_from_dict(raw["bounding"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.bounding", str(exc)) from exc
        if not hasattr(parts["h"], "gradient"):
            raise ConfigError(f"{where}.h", "term has no gradient")
        agents.append(AgentSpec(parts["f"], parts["h"], parts["map"], anchor, bounding))

    points = {}
    for key in ("known_solution", "x0", "x1"):
        if data.get(key) is None:
            points[key] = None
            continue
        try:
            points[key] = as_vector(data[key], dim)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from exc
    try:
        problem = Problem(dim, tuple(agents), points["known_solution"], name=str(data.get("name", "problem")))
    except ValueError as exc:
        raise ConfigError("known_solution", str(exc)) from exc
    return problem, points["x0"], points["x1"]


def read_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a JSON object")
    return data


def write_json(path: str | Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write("\n")


def save_problem(path: str | Path, problem: Problem, x0=None, x1=None) -> None:
    write_json(path, problem_to_dict(problem, x0, x1))


def load_problem(path: str | Path) -> tuple[Problem, np.ndarray | None, np.ndarray | None]:
    return problem_from_dict(read_json(path))


def problem_hash(problem: Problem) -> str:
    """SHA-256 of the canonical problem document."""
    blob = json.dumps(problem_to_dict(problem), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# Manifests
# --------------------------------------------------------------------------


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class RunManifest:
    """What is needed to regenerate an output file.

    ``config`` echoes the resolved solver settings and ``problem`` the
    problem id plus its hash; ``seeds`` lists every seed involved.
    """

    command: str
    problem: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str = ""
    tool_version: str = field(default_factory=tool_version)
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    schema_version: int = SCHEMA_VERSION

    def finish(self) -> None:
        self.finished = _now()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(**data)


def manifest_path(output: str | Path) -> Path:
    """Sidecar location ``<output>.manifest.json``."""
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(output: str | Path, manifest: RunManifest) -> Path:
    path = manifest_path(output)
    write_json(path, manifest.to_dict())
    return path


def read_manifest(output: str | Path) -> RunManifest | None:
    path = manifest_path(output)
    if not path.exists():
        return None
    return RunManifest.from_dict(read_json(path))
