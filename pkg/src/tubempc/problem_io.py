"""Problem-file ingestion: schema validation, cross-dimension checks, and
construction of the plant, synthesis config, and simulation config.

A problem file is a single JSON document carrying the plant matrices
(row-major), the constraint and disturbance sets in halfspace form, cost
weights, horizon, RPI options, and an optional simulation block. An optional
`rpi_system` block describes a standalone error system for RPI method
comparisons that do not go through controller synthesis.
"""

from __future__ import annotations

import json

import numpy as np
import jsonschema

from .controller import PlantModel, SynthesisConfig
from .errors import ProblemFormatError, TubeMpcError
from .geometry import HPolytope
from .lti import LtiSystem, state_cost_from_output_weight
from .rpi import ErrorSystem
from .simulate import SimConfig

PROBLEM_SCHEMA_TAG = "tubempc.problem/1"

_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_VECTOR = {"type": "array", "minItems": 1, "items": {"type": "number"}}
_SET = {"type": "object", "required": ["H", "b"], "additionalProperties": False,
        "properties": {"H": _MATRIX, "b": _VECTOR}}
_BOX = {"type": "object", "required": ["lower", "upper"], "additionalProperties": False,
        "properties": {"lower": _VECTOR, "upper": _VECTOR}}

PROBLEM_JSON_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema", "name", "plant", "constraints", "disturbances",
                 "weights", "horizon"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": PROBLEM_SCHEMA_TAG},
        "name": {"type": "string"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "plant": {
            "type": "object", "required": ["A", "B", "C", "H"],
            "additionalProperties": False,
            "properties": {"A": _MATRIX, "B": _MATRIX, "C": _MATRIX, "H": _MATRIX},
        },
        "constraints": {
            "type": "object", "required": ["Z", "U"], "additionalProperties": False,
            "properties": {"Z": _SET, "U": _SET},
        },
        "disturbances": {
            "type": "object", "required": ["W", "V"], "additionalProperties": False,
            "properties": {"W": _SET, "V": _SET},
        },
        "weights": {
            "type": "object", "required": ["R"], "additionalProperties": False,
            "properties": {"Q": _MATRIX, "Q_z": _MATRIX,
                           "gamma": {"type": "number", "exclusiveMinimum": 0},
                           "R": _MATRIX, "Q_obs": _MATRIX, "R_obs": _MATRIX},
        },
        "horizon": {"type": "integer", "minimum": 1},
        "rpi": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "k": {"type": ["integer", "null"], "minimum": 0},
                "k_max": {"type": "integer", "minimum": 0},
                "k_start": {"type": "integer", "minimum": 0},
                "eps": {"type": "array", "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": 0}},
                "delta_mode": {"enum": ["exact", "box"]},
                "eta": {"type": "number", "minimum": 0},
            },
        },
        "gains": {
            "type": "object", "additionalProperties": False,
            "properties": {"K": _MATRIX, "L": _MATRIX},
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "steps": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "runs": {"type": "integer", "minimum": 1},
                "x0": _VECTOR,
                "x0_box": _BOX,
                "init_error_box": _BOX,
                "disturbance_mode": {"enum": ["uniform", "zero"]},
            },
        },
        "rpi_system": {
            "type": "object", "required": ["A", "E", "Delta", "Phi"],
            "additionalProperties": False,
            "properties": {"A": _MATRIX, "E": _MATRIX, "Delta": _SET, "Phi": _SET},
        },
    },
}

_DEFAULT_RPI = {"k": None, "k_max": 1000, "k_start": 0,
                "eps": [0.01, 0.1, 0.5], "delta_mode": "exact", "eta": 1e-9}
_DEFAULT_SIM = {"steps": 50, "seed": 0, "runs": 1, "x0": None, "x0_box": None,
                "init_error_box": None, "disturbance_mode": "uniform"}


def _mat(data, field: str) -> np.ndarray:
    try:
        M = np.array(data, dtype=float)
    except ValueError as exc:  # ragged rows
        raise ProblemFormatError(f"{field}: {exc}") from exc
    if M.ndim != 2:
        raise ProblemFormatError(f"{field}: must be a matrix (equal-length rows)")
    if not np.all(np.isfinite(M)):
        raise ProblemFormatError(f"{field}: entries must be finite")
    return M


def _set(data, field: str) -> HPolytope:
    try:
        return HPolytope(_mat(data["H"], f"{field}.H"), np.array(data["b"], dtype=float))
    except TubeMpcError:
        raise
    except ValueError as exc:
        raise ProblemFormatError(f"{field}: {exc}") from exc


def _box(data) -> HPolytope:
    return HPolytope.from_box(np.array(data["lower"], dtype=float),
                              np.array(data["upper"], dtype=float))


def validate_problem(data: dict) -> dict:
    """Schema plus cross-dimension validation; returns the document."""
    try:
        jsonschema.validate(data, PROBLEM_JSON_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ProblemFormatError(f"at {exc.json_path}: {exc.message}") from exc
    plant_from_problem(data)  # raises on any dimension mismatch
    if "rpi_system" in data:
        error_system_from_problem(data)
    sim = data.get("simulation", {})
    if sim.get("x0") is not None and sim.get("x0_box") is not None:
        raise ProblemFormatError("simulation: give x0 or x0_box, not both")
    return data


def load_problem(path) -> dict:
    """Read and validate a problem file; errors carry location context."""
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ProblemFormatError(f"problem file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(
            f"{path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    return validate_problem(data)


def plant_from_problem(data: dict) -> PlantModel:
    p = data["plant"]
    try:
        sys = LtiSystem(_mat(p["A"], "plant.A"), _mat(p["B"], "plant.B"),
                        _mat(p["C"], "plant.C"), _mat(p["H"], "plant.H"))
        return PlantModel(
            sys,
            Z=_set(data["constraints"]["Z"], "constraints.Z"),
            U=_set(data["constraints"]["U"], "constraints.U"),
            W=_set(data["disturbances"]["W"], "disturbances.W"),
            V=_set(data["disturbances"]["V"], "disturbances.V"),
        )
    except ProblemFormatError:
        raise
    except TubeMpcError as exc:
        raise ProblemFormatError(f"plant/constraint data invalid: {exc}") from exc
    except ValueError as exc:
        raise ProblemFormatError(f"plant/constraint data invalid: {exc}") from exc


def config_from_problem(data: dict) -> SynthesisConfig:
    w = data["weights"]
    plant = data["plant"]
    n = len(plant["A"])
    if "Q" in w:
        Q = _mat(w["Q"], "weights.Q")
    elif "Q_z" in w:
        Q = state_cost_from_output_weight(_mat(plant["H"], "plant.H"),
                                          _mat(w["Q_z"], "weights.Q_z"),
                                          gamma=w.get("gamma", 1e-6))
    else:
        raise ProblemFormatError("weights: either Q or Q_z is required")
    if Q.shape != (n, n):
        raise ProblemFormatError(f"weights.Q must be {n}x{n}")
    rpi = {**_DEFAULT_RPI, **data.get("rpi", {})}
    gains = data.get("gains", {})
    try:
        return SynthesisConfig(
            Q=Q, R=_mat(w["R"], "weights.R"), N=data["horizon"],
            Q_obs=_mat(w["Q_obs"], "weights.Q_obs") if "Q_obs" in w else None,
            R_obs=_mat(w["R_obs"], "weights.R_obs") if "R_obs" in w else None,
            K=_mat(gains["K"], "gains.K") if "K" in gains else None,
            L=_mat(gains["L"], "gains.L") if "L" in gains else None,
            rpi_k=rpi["k"], k_max=rpi["k_max"], k_start=rpi["k_start"],
            delta_mode=rpi["delta_mode"], eta=rpi["eta"])
    except TubeMpcError:
        raise
    except ValueError as exc:
        raise ProblemFormatError(f"weights/rpi options invalid: {exc}") from exc


def eps_list_from_problem(data: dict) -> list[float]:
    return list({**_DEFAULT_RPI, **data.get("rpi", {})}["eps"])


def sim_config_from_problem(data: dict, seed: int | None = None,
                            steps: int | None = None) -> tuple[SimConfig, int]:
    """Build the base SimConfig and the batch run count; per-run seeds are
    derived from the base seed by the caller."""
    sim = {**_DEFAULT_SIM, **data.get("simulation", {})}
    n = len(data["plant"]["A"])
    x0 = None if sim["x0"] is None else np.array(sim["x0"], dtype=float)
    x0_box = None if sim["x0_box"] is None else _box(sim["x0_box"])
    if x0 is None and x0_box is None:
        x0 = np.zeros(n)
    err_box = (None if sim["init_error_box"] is None
               else _box(sim["init_error_box"]))
    cfg = SimConfig(steps=steps if steps is not None else sim["steps"],
                    seed=seed if seed is not None else sim["seed"],
                    x0=x0, x0_box=x0_box, init_error_box=err_box,
                    disturbance_mode=sim["disturbance_mode"])
    return cfg, sim["runs"]


def error_system_from_problem(data: dict) -> ErrorSystem | None:
    """Standalone error system from the rpi_system block, when present."""
    block = data.get("rpi_system")
    if block is None:
        return None
    try:
        return ErrorSystem(
            A=_mat(block["A"], "rpi_system.A"),
            E=_mat(block["E"], "rpi_system.E"),
            disturbance=_set(block["Delta"], "rpi_system.Delta"),
            output_bounds=_set(block["Phi"], "rpi_system.Phi"))
    except ProblemFormatError:
        raise
    except (TubeMpcError, ValueError) as exc:
        raise ProblemFormatError(f"rpi_system invalid: {exc}") from exc
