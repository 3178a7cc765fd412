"""Shipped demonstration problems.

Three problems cover the scales the toolkit targets: a scalar plant with a
standalone scalar error system (whose tube and comparator quantities are
known in closed form), a 2-D double integrator used for the closed-loop
robustness experiments, and a randomly generated (but frozen-seed) 10-state
plant standing in for an industrial-scale model.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .lti import controllability_rank, lqr_gain, observability_rank
from .problem_io import PROBLEM_SCHEMA_TAG, validate_problem

_WIND_SEED = 20260825


def _box_set(radii) -> dict:
    radii = np.asarray(radii, dtype=float)
    n = radii.size
    eye = np.eye(n)
    return {"H": np.vstack([eye, -eye]).tolist(),
            "b": np.concatenate([radii, radii]).tolist()}


def scalar_chain() -> dict:
    """Scalar integrator plant plus a standalone scalar error system
    e+ = 0.5 e + d, d in [-1, 1], whose tube is [-2, 2] exactly."""
    return validate_problem({
        "schema": PROBLEM_SCHEMA_TAG,
        "name": "scalar-chain",
        "plant": {"A": [[1.0]], "B": [[1.0]], "C": [[1.0]], "H": [[1.0]]},
        "constraints": {"Z": _box_set([10.0]), "U": _box_set([5.0])},
        "disturbances": {"W": _box_set([0.1]), "V": _box_set([0.05])},
        "weights": {"Q": [[1.0]], "R": [[1.0]]},
        "horizon": 8,
        "rpi": {"k": None, "k_max": 50, "k_start": 0,
                "eps": [0.1], "delta_mode": "exact", "eta": 1e-9},
        "simulation": {"steps": 30, "seed": 2024, "runs": 20,
                       "x0": [1.0], "disturbance_mode": "uniform"},
        "rpi_system": {"A": [[0.5]], "E": [[1.0]],
                       "Delta": _box_set([1.0]), "Phi": _box_set([3.0])},
    })


def double_integrator() -> dict:
    """Sampled double integrator (dt = 0.25), position measured, both states
    constrained.

    The MPC cost is damped enough that the nominal loop is slow and
    real-poled; the tube feedback is a stiffer LQR passed as an explicit
    gain.  Starts sit on the slow closed-loop eigenvector, so batch runs
    approach the origin geometrically through the whole window while the
    tube stays small relative to the remaining distance."""
    dt = 0.25
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    K_tube = lqr_gain(A, B, np.eye(2), np.array([[0.05]]))
    return validate_problem({
        "schema": PROBLEM_SCHEMA_TAG,
        "name": "double-integrator",
        "dt": dt,
        "plant": {
            "A": A.tolist(),
            "B": B.tolist(),
            "C": [[1.0, 0.0]],
            "H": [[1.0, 0.0], [0.0, 1.0]],
        },
        "constraints": {"Z": _box_set([5.0, 2.0]), "U": _box_set([2.0])},
        "disturbances": {"W": _box_set([5e-5, 5e-5]), "V": _box_set([2.5e-5])},
        "weights": {"Q": [[1.0, 0.0], [0.0, 8.0]], "R": [[4.0]],
                    "R_obs": [[0.02]]},
        "gains": {"K": K_tube.tolist()},
        "horizon": 13,
        "rpi": {"k": None, "k_max": 100, "k_start": 0,
                "eps": [0.01, 0.1, 0.5], "delta_mode": "box", "eta": 1e-9},
        "simulation": {"steps": 50, "seed": 7, "runs": 500,
                       "x0_box": {"lower": [2.9, -1.15], "upper": [3.1, -1.05]},
                       "init_error_box": {"lower": [-1e-4, -1e-4],
                                          "upper": [1e-4, 1e-4]},
                       "disturbance_mode": "uniform"},
    })


def wind_surrogate() -> dict:
    """Frozen-seed random 10-state, 3-input, 4-output stable plant at the
    scale of an industrial model; disturbance magnitudes 1e-3, dt = 0.05."""
    rng = np.random.default_rng(_WIND_SEED)
    n, m, p, o = 10, 3, 4, 3
    while True:
        A = rng.normal(size=(n, n))
        A *= 0.88 / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(n, m)) * 0.5
        C = rng.normal(size=(p, n)) * 0.5
        if controllability_rank(A, B) == n and observability_rank(A, C) == n:
            break
    H = np.zeros((o, n))
    H[:, :o] = np.eye(o)
    return validate_problem({
        "schema": PROBLEM_SCHEMA_TAG,
        "name": "wind-surrogate",
        "dt": 0.05,
        "plant": {"A": A.tolist(), "B": B.tolist(), "C": C.tolist(), "H": H.tolist()},
        "constraints": {"Z": _box_set([1.0, 1.0, 1.0]), "U": _box_set([1.0, 1.0, 1.0])},
        "disturbances": {"W": _box_set([0.001] * n), "V": _box_set([0.001] * p)},
        "weights": {"Q": np.eye(n).tolist(), "R": np.eye(m).tolist()},
        "horizon": 13,
        "rpi": {"k": None, "k_max": 50, "k_start": 3,
                "eps": [0.1], "delta_mode": "exact", "eta": 1e-9},
        "simulation": {"steps": 50, "seed": 11, "runs": 5,
                       "x0": [0.0] * n, "disturbance_mode": "uniform"},
    })


DEMO_PROBLEMS = {
    "scalar_chain": scalar_chain,
    "double_integrator": double_integrator,
    "wind_surrogate": wind_surrogate,
}


def shipped_problem_path(name: str):
    """Filesystem path of a shipped problem JSON."""
    if name not in DEMO_PROBLEMS:
        raise KeyError(f"unknown demo problem {name!r}; have {sorted(DEMO_PROBLEMS)}")
    return resources.files("tubempc").joinpath("problems", f"{name}.json")


def write_shipped_problems(directory) -> list:
    """Regenerate the shipped problem files into `directory`."""
    import pathlib

    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in DEMO_PROBLEMS.items():
        path = directory / f"{name}.json"
        with open(path, "w") as f:
            json.dump(build(), f, indent=2)
        written.append(path)
    return written
