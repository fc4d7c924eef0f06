"""Trace-set persistence (binary blob + JSON sidecar) and CSV exports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp_pipeline import ProcessedTraceSet
from .trace_synth import SwitchTiming, TraceSet

FORMAT_VERSION = 1
DTYPE = "<f8"


class DataError(Exception):
    """Missing, malformed or inconsistent data files."""


def _paths(stem) -> tuple:
    stem = str(stem)
    for ext in (".bin", ".json"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    return Path(stem + ".bin"), Path(stem + ".json")


def write_traceset(data, stem) -> Path:
    """Write ``stem.bin`` (little-endian float64, row-major) and ``stem.json``."""
    bin_path, json_path = _paths(stem)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": DTYPE,
        "kind": data.kind,
        "sample_rate": data.sample_rate,
        "n_traces": int(data.samples.shape[0]),
        "n_samples": int(data.samples.shape[1]),
        "timing": data.timing.to_dict(),
        "seed": getattr(data, "seed", None),
        "meta": data.meta,
    }
    if isinstance(data, ProcessedTraceSet):
        header["processing"] = {
            "slope_removed": data.slope_removed,
            "ripple_removed": data.ripple_removed,
            "electronic_subtracted": data.electronic_subtracted,
        }
    np.ascontiguousarray(data.samples, dtype=DTYPE).tofile(bin_path)
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return json_path


def read_traceset(stem):
    """Read a trace set written by :func:`write_traceset`."""
    bin_path, json_path = _paths(stem)
    if not json_path.exists() or not bin_path.exists():
        raise DataError(f"trace set {Path(stem)} not found")
    try:
        header = json.loads(json_path.read_text())
        shape = (int(header["n_traces"]), int(header["n_samples"]))
        timing = SwitchTiming(**header["timing"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"bad sidecar {json_path}: {exc}") from exc
    raw = np.fromfile(bin_path, dtype=header.get("dtype", DTYPE))
    if raw.size != shape[0] * shape[1]:
        raise DataError(f"{bin_path} holds {raw.size} values, header says {shape}")
    samples = raw.reshape(shape).astype(np.float64, copy=False)
    if "processing" in header:
        proc = header["processing"]
        return ProcessedTraceSet(samples, header["sample_rate"], timing, header["kind"],
                                 meta=header.get("meta", {}), **proc)
    return TraceSet(samples, header["sample_rate"], timing, header["kind"], header.get("seed"),
                    header.get("meta", {}))


def traceset_to_csv(data, path) -> None:
    """One row per trace; intended for small sets."""
    np.savetxt(path, data.samples, delimiter=",", fmt="%.10g")


def read_seed_csv(path):
    """Two-column CSV (frequency_MHz, variance_shot_normalized); header lines allowed."""
    try:
        arr = np.genfromtxt(path, delimiter=",", comments="#", dtype=float)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    arr = np.atleast_2d(arr)
    arr = arr[~np.isnan(arr).any(axis=1)]
    if arr.shape[0] == 0 or arr.shape[1] != 2:
        raise DataError(f"{path}: expected two numeric columns")
    return arr[:, 0], arr[:, 1]


def write_rows_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else f"{v:.8g}" for v in row))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def read_rows_csv(path) -> list:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path} not found")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]
