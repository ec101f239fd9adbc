"""Plain-text result tables, the sequence file format and run manifests."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from . import __version__
from .coupling import CouplingSequence

logger = logging.getLogger(__name__)

SEQUENCE_COLUMNS = ("x_over_lambda0", "amplitude", "phase_rad")
MANIFEST_NAME = "manifest.json"


def write_table(
    path: Path,
    columns: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """One row per sample; ``# key: value`` metadata lines, then the column names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[name], dtype=float) for name in names])
    header = [f"{key}: {value}" for key, value in (metadata or {}).items()]
    header.append(" ".join(names))
    np.savetxt(path, data, fmt="%.17g", header="\n".join(header), comments="# ")
    logger.info(f"Wrote {path} ({data.shape[0]} rows)")
    return path


def read_table(path: Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Inverse of write_table: (metadata, columns by name)."""
    path = Path(path)
    metadata: dict[str, str] = {}
    names: list[str] = []
    with path.open() as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                metadata[key.strip()] = value.strip()
            else:
                names = body.split()
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(names)))
    return metadata, {name: data[:, i] for i, name in enumerate(names)}


def write_sequence(path: Path, seq: CouplingSequence, k0: float) -> Path:
    lambda0 = 2 * math.pi / k0
    return write_table(
        path,
        {
            "x_over_lambda0": seq.positions / lambda0,
            "amplitude": seq.amplitudes,
            "phase_rad": seq.phases,
        },
        {"g0": repr(seq.g0), "k0": repr(k0), "label": seq.label},
    )


def read_sequence(path: Path, k0: Optional[float] = None) -> CouplingSequence:
    """Load a sequence file; ``k0`` defaults to the value in its header."""
    metadata, columns = read_table(path)
    missing = [name for name in SEQUENCE_COLUMNS if name not in columns]
    if missing:
        raise ValueError(f"{path}: missing sequence column(s) {', '.join(missing)}")
    if k0 is None:
        k0 = float(metadata.get("k0", "1.5"))
    lambda0 = 2 * math.pi / k0
    return CouplingSequence(
        columns["x_over_lambda0"] * lambda0,
        columns["amplitude"],
        columns["phase_rad"],
        g0=float(metadata.get("g0", "0.002")),
        label=metadata.get("label", ""),
    )


def write_manifest(
    out_dir: Path,
    document: Mapping[str, Any],
    seeds: Mapping[str, Any],
    files: list[Path],
    wall_time: float,
) -> Path:
    """Resolved document, seeds, version, wall time and written files as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "document": document,
        "seeds": seeds,
        "version": __version__,
        "wall_time_s": round(wall_time, 3),
        "files": sorted(str(Path(f).relative_to(out_dir)) for f in files),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, default=str))
    logger.info(f"Wrote manifest {path}")
    return path
