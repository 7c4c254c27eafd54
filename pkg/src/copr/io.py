"""Serialization: binary containers, CSV exports, result JSON.

Binary container layout (all little-endian):

========  ====  =====================================================
offset    size  field
========  ====  =====================================================
0         4     magic ``b"COPR"``
4         1     version (currently 1)
5         1     kind: 0 = vector, 1 = matrix
6         1     form tag: 0 = zonal, 1 = modal, 255 = unspecified
7         1     reserved (0)
8         8/16  dims: u64 length, or u64 rows then u64 cols
...       --    payload: complex128 values as interleaved (re, im)
                float64 pairs, row-major for matrices
========  ====  =====================================================

Real-valued data (measurements) use the same payload with zero
imaginary parts, keeping a single reader for everything.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

_MAGIC = b"COPR"
_VERSION = 1
_FORM_TAGS = {"zonal": 0, "modal": 1, None: 255}
_FORM_NAMES = {0: "zonal", 1: "modal", 255: None}


def _header(kind: int, form: str | None, dims: tuple[int, ...]) -> bytes:
    head = struct.pack("<4sBBBB", _MAGIC, _VERSION, kind, _FORM_TAGS[form], 0)
    return head + b"".join(struct.pack("<Q", d) for d in dims)


def save_vector(path, values: np.ndarray, form: str | None = None) -> None:
    """Write a 1-D real or complex vector to the binary container."""
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {values.shape}")
    payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    Path(path).write_bytes(_header(0, form, (values.shape[0],)) + payload)


def save_matrix(path, values: np.ndarray, form: str | None = None) -> None:
    """Write a 2-D complex matrix to the binary container (row-major)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {values.shape}")
    payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    Path(path).write_bytes(_header(1, form, values.shape) + payload)


def _parse_container(raw: bytes, path):
    if len(raw) < 8:
        raise ContainerFormatError(f"{path}: truncated header", offset=len(raw))
    magic, version, kind, form_tag, _ = struct.unpack_from("<4sBBBB", raw, 0)
    if magic != _MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != _VERSION:
        raise ContainerFormatError(f"{path}: unsupported version {version}", offset=4)
    if kind not in (0, 1):
        raise ContainerFormatError(f"{path}: unknown kind {kind}", offset=5)
    if form_tag not in _FORM_NAMES:
        raise ContainerFormatError(f"{path}: unknown form tag {form_tag}", offset=6)
    n_dims = 1 if kind == 0 else 2
    need = 8 + 8 * n_dims
    if len(raw) < need:
        raise ContainerFormatError(f"{path}: truncated dims", offset=len(raw))
    dims = struct.unpack_from(f"<{n_dims}Q", raw, 8)
    count = int(np.prod(dims))
    expected = need + 16 * count
    if len(raw) != expected:
        raise ContainerFormatError(
            f"{path}: payload holds {len(raw) - need} bytes, expected {16 * count}",
            offset=min(len(raw), expected))
    values = np.frombuffer(raw, dtype="<c16", count=count, offset=need)
    return values.reshape(dims), _FORM_NAMES[form_tag]


def load_vector(path):
    """Read a vector container; returns ``(values, form)``."""
    values, form = _parse_container(Path(path).read_bytes(), path)
    if values.ndim != 1:
        raise ContainerFormatError(f"{path}: container holds a matrix, not a vector",
                                   offset=5)
    return values, form


def load_matrix(path):
    """Read a matrix container; returns ``(values, form)``."""
    values, form = _parse_container(Path(path).read_bytes(), path)
    if values.ndim != 2:
        raise ContainerFormatError(f"{path}: container holds a vector, not a matrix",
                                   offset=5)
    return values, form


def save_measurements(path, meas) -> None:
    """Write measurements: binary vector plus a JSON sidecar for metadata."""
    path = Path(path)
    save_vector(path, meas.y, form=meas.meta.get("form"))
    sidecar = {"scale": meas.scale, "meta": meas.meta}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def load_measurements(path):
    """Read measurements written by :func:`save_measurements`.

    Returns a :class:`copr.forward.Measurements`; without a sidecar the
    scale defaults to 1 and the metadata stays empty.
    """
    from .forward import Measurements

    path = Path(path)
    values, form = load_vector(path)
    if np.abs(values.imag).max(initial=0.0) > 0:
        raise ContainerFormatError(f"{path}: measurements must be real", offset=8)
    scale, meta = 1.0, {"form": form}
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        data = json.loads(sidecar.read_text())
        scale = float(data.get("scale", 1.0))
        meta = data.get("meta", meta)
    return Measurements(y=values.real.copy(), scale=scale, meta=meta)


# ---------------------------------------------------------------------------
# CSV exports

def save_vector_csv(path, values: np.ndarray) -> None:
    """Small-instance export: one row per entry with re/im columns."""
    values = np.asarray(values, dtype=complex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im"])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v.real)), repr(float(v.imag))])


def save_matrix_csv(path, values: np.ndarray) -> None:
    """Small-instance export: row index plus interleaved re/im columns."""
    values = np.asarray(values, dtype=complex)
    cols = ["row"]
    for j in range(values.shape[1]):
        cols += [f"re_{j}", f"im_{j}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(values.shape[0]):
            row = [i]
            for j in range(values.shape[1]):
                row += [repr(float(values[i, j].real)), repr(float(values[i, j].imag))]
            writer.writerow(row)


def load_vector_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["index", "re", "im"]:
            raise ContainerFormatError(f"{path}: unexpected CSV header {header}")
        return np.array([float(r[1]) + 1j * float(r[2]) for r in reader])


def trace_csv(path, trace) -> None:
    """Write a solver trace with one row per iteration."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "primal_res", "dual_res", "rho", "ms"])
        for row in zip(trace.iteration, trace.objective, trace.primal_res,
                       trace.dual_res, trace.rho, trace.ms):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def write_csv(path, header: list, rows: list) -> None:
    """Generic CSV writer used by the experiment commands."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def config_hash(config: dict) -> str:
    """Short stable digest of a resolved configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
