"""Flat-file exports.

Floats are written with ``repr``, the shortest string that round-trips, so
identical inputs give byte-identical files on every platform.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")
    return path


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_pattern_csv(path, pattern) -> Path:
    header = ["theta_rad", "phi_rad", "f_coh", "f_inc", "f_total"]
    cols = [pattern.grid.theta, pattern.grid.phi, pattern.f_coh, pattern.f_inc,
            pattern.f_total]
    if pattern.mc_stderr is not None:
        header.append("stderr")
        cols.append(pattern.mc_stderr)
    return write_rows(path, header, zip(*cols))


def summary_dict(summary, n_atoms: int, d0_over_lambda) -> dict:
    return {"error_probability": summary.error_probability,
            "fwhm_rad": summary.fwhm_rad,
            "peak_direction": list(summary.peak_direction),
            "peak_value": summary.peak_value,
            "n_atoms": int(n_atoms),
            "d0_over_lambda": d0_over_lambda}


def write_trajectory_csv(path, t, p_k0, p_vac, leakage) -> Path:
    return write_rows(path, ["t", "p_k0", "p_vacuum", "leakage_norm"],
                      zip(t, p_k0, p_vac, leakage))


def write_kernel(path, kernel) -> Path:
    path = Path(path)
    lines = [" ".join(fmt(v) for v in row) for row in np.asarray(kernel.gamma_ij)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_preparation_csv(path, result) -> Path:
    return write_rows(path, ["t", "fidelity", "double_same_species", "norm_error"],
                      zip(result.times, result.fidelity, result.double_same_species,
                          result.norm_error))
