"""Serialization of datasets, controllers, and raster exports.

Datasets and controllers are single JSON documents; floats go through
Python's shortest round-trip repr, so values are recovered bit-exactly on
load.  Raster exports are plain CSV with one row per grid cell.
"""
import hashlib
import json
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__ as _version
from .data import Trajectory
from .errors import DataValidationError
from .synthesis import SynthesisCertificate
from .validation import ConsistentSetRaster, ValidationReport


def save_dataset(path, trajectories: Sequence[Trajectory]) -> None:
    """Write rollouts to the canonical dataset document."""
    if not trajectories:
        raise DataValidationError("dataset must contain at least one trajectory")
    nx = trajectories[0].nx
    nu = trajectories[0].nu
    M = trajectories[0].horizon
    for traj in trajectories:
        if (traj.nx, traj.nu, traj.horizon) != (nx, nu, M):
            raise DataValidationError(
                "all trajectories in a dataset must share (nx, nu, M)"
            )
    doc = {
        "nx": nx,
        "nu": nu,
        "M": M,
        "trajectories": [
            {
                "system_id": traj.system_id,
                "seed": traj.seed,
                "states": traj.states.tolist(),
                "inputs": traj.inputs.tolist(),
            }
            for traj in trajectories
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_dataset(path) -> Tuple[List[Trajectory], int, int, int]:
    """Read a dataset document; returns (trajectories, nx, nu, M)."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataValidationError(f"dataset file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: not valid JSON ({exc})")
    for key in ("nx", "nu", "M", "trajectories"):
        if key not in doc:
            raise DataValidationError(f"{path}: missing dataset field {key!r}")
    nx, nu, M = int(doc["nx"]), int(doc["nu"]), int(doc["M"])
    trajectories = []
    for idx, entry in enumerate(doc["trajectories"]):
        try:
            traj = Trajectory(
                states=np.asarray(entry["states"], dtype=float),
                inputs=np.asarray(entry["inputs"], dtype=float),
                system_id=str(entry.get("system_id", "")),
                seed=entry.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"{path}: trajectory {idx} invalid ({exc})")
        if (traj.nx, traj.nu, traj.horizon) != (nx, nu, M):
            raise DataValidationError(
                f"{path}: trajectory {idx} has (nx={traj.nx}, nu={traj.nu}, "
                f"M={traj.horizon}), expected ({nx}, {nu}, {M})"
            )
        trajectories.append(traj)
    if not trajectories:
        raise DataValidationError(f"{path}: dataset has no trajectories")
    return trajectories, nx, nu, M


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_controller(
    path,
    certificate: SynthesisCertificate,
    *,
    dataset_hash: Optional[str] = None,
    seeds: Optional[Sequence[int]] = None,
) -> None:
    """Write a synthesized controller with provenance."""
    doc = {
        "nx": certificate.nx,
        "nu": certificate.nu,
        "K": certificate.K.tolist(),
        "P": certificate.P.tolist(),
        "a": certificate.a,
        "b": certificate.b,
        "delta": certificate.delta,
        "per_scenario_margins": list(certificate.per_scenario_margins),
        "provenance": {
            "dataset_sha256": dataset_hash,
            "seeds": list(seeds) if seeds is not None else None,
            "tool_version": _version,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_controller(path) -> dict:
    """Read a controller document back as a dict with array fields restored."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataValidationError(f"controller file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: not valid JSON ({exc})")
    for key in ("nx", "nu", "K", "P", "a", "b", "delta", "per_scenario_margins"):
        if key not in doc:
            raise DataValidationError(f"{path}: missing controller field {key!r}")
    doc["K"] = np.asarray(doc["K"], dtype=float)
    doc["P"] = np.asarray(doc["P"], dtype=float)
    if doc["K"].shape != (doc["nu"], doc["nx"]):
        raise DataValidationError(f"{path}: K has shape {doc['K'].shape}")
    if doc["P"].shape != (doc["nx"], doc["nx"]):
        raise DataValidationError(f"{path}: P has shape {doc['P'].shape}")
    return doc


def save_raster_csv(path, raster: ConsistentSetRaster) -> None:
    """One row per grid cell: a, b, inside."""
    lines = ["a,b,inside"]
    for i, a in enumerate(raster.a_values):
        for j, b in enumerate(raster.b_values):
            lines.append(f"{float(a)!r},{float(b)!r},{int(raster.mask[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def report_to_json(report: ValidationReport) -> str:
    return json.dumps({
        "n_test": report.n_test,
        "n_unstable_spectral": report.n_unstable_spectral,
        "n_violating_quadratic": report.n_violating_quadratic,
        "alpha_hat_spectral": report.alpha_hat_spectral,
        "alpha_hat_quadratic": report.alpha_hat_quadratic,
        "seed": report.seed,
    })
