"""Experiment manifests: JSON text in, validated configuration out.

Validation is total: unknown keys are rejected with their path, and parameter
combinations are checked through the same admissibility arithmetic the solver
uses, so every inadmissible (N, s, m) names the violated constraint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .norms import AdmissibilityError, ParameterSet, admissible_parameters

KINDS = ("randomize", "evolve", "solve", "tail", "scaling", "theorem", "khinchin")

_TOP_KEYS = {"kind", "dim", "s", "m", "torus", "time", "data", "ensemble",
             "solver", "lambda", "lambda_grid", "selector", "r", "r_values",
             "coefficients", "vectors", "vector_length", "sample_index", "out",
             "csv"}
_TORUS_KEYS = {"modes_per_axis", "grid_points_per_axis"}
_TIME_KEYS = {"T", "steps", "T_grid"}
_DATA_KEYS = {"source", "amplitude", "path"}
_ENSEMBLE_KEYS = {"samples", "base_seed"}
_SOLVER_KEYS = {"tol", "max_iter"}

_DATA_SOURCES = ("canonical", "file", "shear", "taylor-green")

_DEFAULT_TORUS = {2: (32, 64), 3: (16, 32)}
_DEFAULT_STEPS = {2: 256, 3: 128}
_DEFAULT_SAMPLES = {"tail": 5000, "scaling": 2000, "theorem": 500,
                    "khinchin": 100000, "randomize": 1, "evolve": 1, "solve": 1}


class ManifestError(ValueError):
    """Invalid manifest text, keys or values."""


@dataclass
class ExperimentManifest:
    kind: str
    dim: int
    s: float | None
    params: ParameterSet | None
    torus: tuple[int, int]                    # (modes_per_axis, grid_points_per_axis)
    T: float | None
    T_grid: list[float] | None
    steps: int
    data_source: str
    data_amplitude: float
    data_path: str | None
    samples: int
    base_seed: int
    tol: float
    max_iter: int
    lam: float | None
    lambda_grid: list[float] | None
    selector: str | None
    r: float | None
    r_values: list[float] | None
    coefficients: list[list[float]] | None
    vectors: int
    vector_length: int
    sample_index: int
    out: str | None
    csv: str | None
    normalized: dict = field(repr=False, default_factory=dict)

    def digest(self) -> str:
        return manifest_digest(self.normalized)


def manifest_digest(normalized: dict) -> str:
    blob = json.dumps(normalized, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _reject_unknown(section: dict, allowed: set, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ManifestError(f"unknown key '{key}' at {path}")


def _number(obj: dict, key: str, path: str, default=None, required=False):
    if key not in obj:
        if required:
            raise ManifestError(f"missing required key '{key}' at {path}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ManifestError(f"'{key}' at {path} must be a number, got {val!r}")
    return val


def parse_manifest(text: str) -> ExperimentManifest:
    """Parse and validate a JSON manifest; errors carry the offending path."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest must be a JSON object")
    return normalize_manifest(raw)


def normalize_manifest(raw: dict) -> ExperimentManifest:
    """Validate a manifest dict, fill defaults, derive the parameter set."""
    _reject_unknown(raw, _TOP_KEYS, "manifest")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ManifestError(f"kind must be one of {KINDS}, got {kind!r}")

    dim = raw.get("dim", 2)
    if dim not in (2, 3):
        raise ManifestError(f"dim must be 2 or 3, got {dim!r}")

    params = None
    s = _number(raw, "s", "manifest", required=kind != "khinchin")
    if s is not None:
        m = _number(raw, "m", "manifest")
        try:
            params = admissible_parameters(dim, float(s), m)
        except AdmissibilityError as exc:
            raise ManifestError(str(exc)) from exc

    torus = raw.get("torus", {})
    if not isinstance(torus, dict):
        raise ManifestError("'torus' must be an object")
    _reject_unknown(torus, _TORUS_KEYS, "manifest.torus")
    m_default, g_default = _DEFAULT_TORUS[dim]
    modes = int(_number(torus, "modes_per_axis", "manifest.torus", m_default))
    grid_pts = int(_number(torus, "grid_points_per_axis", "manifest.torus",
                           2 * modes if "modes_per_axis" in torus else g_default))

    time_cfg = raw.get("time", {})
    if not isinstance(time_cfg, dict):
        raise ManifestError("'time' must be an object")
    _reject_unknown(time_cfg, _TIME_KEYS, "manifest.time")
    T = _number(time_cfg, "T", "manifest.time", 0.25)
    steps = int(_number(time_cfg, "steps", "manifest.time", _DEFAULT_STEPS[dim]))
    T_grid = time_cfg.get("T_grid")
    if T_grid is not None:
        if (not isinstance(T_grid, list) or len(T_grid) == 0
                or not all(isinstance(t, (int, float)) and 0 < t <= 1
                           for t in T_grid)):
            raise ManifestError("manifest.time.T_grid must be a nonempty list "
                                "of numbers in (0, 1]")
        T_grid = [float(t) for t in T_grid]

    data = raw.get("data", {})
    if not isinstance(data, dict):
        raise ManifestError("'data' must be an object")
    _reject_unknown(data, _DATA_KEYS, "manifest.data")
    source = data.get("source", "canonical")
    if source not in _DATA_SOURCES:
        raise ManifestError(
            f"data.source must be one of {_DATA_SOURCES}, got {source!r}"
        )
    if source == "file" and not data.get("path"):
        raise ManifestError("data.source 'file' requires data.path")
    amplitude = float(_number(data, "amplitude", "manifest.data", 1.0))

    ensemble = raw.get("ensemble", {})
    if not isinstance(ensemble, dict):
        raise ManifestError("'ensemble' must be an object")
    _reject_unknown(ensemble, _ENSEMBLE_KEYS, "manifest.ensemble")
    samples = int(_number(ensemble, "samples", "manifest.ensemble",
                          _DEFAULT_SAMPLES.get(kind, 1000)))
    base_seed = int(_number(ensemble, "base_seed", "manifest.ensemble", 0))
    if samples < 1:
        raise ManifestError(f"ensemble.samples must be >= 1, got {samples}")

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ManifestError("'solver' must be an object")
    _reject_unknown(solver, _SOLVER_KEYS, "manifest.solver")
    tol = float(_number(solver, "tol", "manifest.solver", 1e-9))
    max_iter = int(_number(solver, "max_iter", "manifest.solver", 60))

    lam = _number(raw, "lambda", "manifest")
    lambda_grid = raw.get("lambda_grid")
    if lambda_grid is not None and (
            not isinstance(lambda_grid, list)
            or not all(isinstance(v, (int, float)) for v in lambda_grid)):
        raise ManifestError("lambda_grid must be a list of numbers")

    selector = raw.get("selector")
    if kind in ("tail", "scaling"):
        if selector not in ("E1", "E2", "E3"):
            raise ManifestError(
                f"kind '{kind}' requires selector E1, E2 or E3, got {selector!r}"
            )
    if kind == "theorem" and lam is None:
        raise ManifestError("kind 'theorem' requires a 'lambda' threshold")

    r = _number(raw, "r", "manifest")
    r_values = raw.get("r_values")
    if r_values is not None and (
            not isinstance(r_values, list)
            or not all(isinstance(v, (int, float)) and v >= 2 for v in r_values)):
        raise ManifestError("r_values must be a list of numbers >= 2")

    coefficients = raw.get("coefficients")
    if coefficients is not None:
        if (not isinstance(coefficients, list) or not coefficients
                or not all(isinstance(row, list) and row for row in coefficients)):
            raise ManifestError("coefficients must be a nonempty list of "
                                "nonempty numeric lists")
        coefficients = [[float(v) for v in row] for row in coefficients]

    manifest = ExperimentManifest(
        kind=kind, dim=dim, s=None if s is None else float(s), params=params,
        torus=(modes, grid_pts), T=None if T is None else float(T),
        T_grid=T_grid, steps=steps, data_source=source,
        data_amplitude=amplitude, data_path=data.get("path"),
        samples=samples, base_seed=base_seed, tol=tol, max_iter=max_iter,
        lam=None if lam is None else float(lam), lambda_grid=lambda_grid,
        selector=selector, r=None if r is None else float(r),
        r_values=None if r_values is None else [float(v) for v in r_values],
        coefficients=coefficients,
        vectors=int(_number(raw, "vectors", "manifest", 20)),
        vector_length=int(_number(raw, "vector_length", "manifest", 24)),
        sample_index=int(_number(raw, "sample_index", "manifest", 0)),
        out=raw.get("out"), csv=raw.get("csv"),
    )
    manifest.normalized = _normalized_dict(manifest)
    return manifest


def _normalized_dict(man: ExperimentManifest) -> dict[str, Any]:
    """Canonical JSON form with all defaults applied (digest/replay basis)."""
    out: dict[str, Any] = {
        "kind": man.kind,
        "dim": man.dim,
        "torus": {"modes_per_axis": man.torus[0],
                  "grid_points_per_axis": man.torus[1]},
        "time": {"T": man.T, "steps": man.steps, "T_grid": man.T_grid},
        "data": {"source": man.data_source, "amplitude": man.data_amplitude,
                 "path": man.data_path},
        "ensemble": {"samples": man.samples, "base_seed": man.base_seed},
        "solver": {"tol": man.tol, "max_iter": man.max_iter},
        "sample_index": man.sample_index,
    }
    if man.s is not None:
        out["s"] = man.s
        if man.params.m is not None:
            out["m"] = man.params.m
    for key in ("lam", "lambda_grid", "selector", "r", "r_values",
                "coefficients", "vectors", "vector_length"):
        val = getattr(man, key)
        if val is not None:
            out["lambda" if key == "lam" else key] = val
    return out
