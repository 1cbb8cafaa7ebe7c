"""Text file formats: embedding tables, parameter checkpoints, matrix dumps.

All floats are written with shortest round-trip repr, so save -> load is
bit-exact for finite doubles and byte-identical across reruns.
"""

from __future__ import annotations

import numpy as np

from .errors import DataFileError

EMB_MAGIC = "PDL-EMB v1"
CKPT_MAGIC = "PDL-CKPT v1"
DIST_MAGIC = "PDL-DIST v1"
CLUS_MAGIC = "PDL-CLUS v1"


def _fmt_floats(row) -> str:
    return " ".join(repr(float(x)) for x in row)


def _parse_floats(parts, path, lineno):
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise DataFileError(f"{path}:{lineno}: bad float field: {exc}") from None


def save_embeddings(path, ids, matrix, identities, camera_ids) -> None:
    """Write an embedding table; rejects non-finite values and ragged inputs."""
    matrix = np.asarray(matrix, dtype=float)
    n, d = matrix.shape
    if not (len(ids) == len(identities) == len(camera_ids) == n):
        raise DataFileError(f"{path}: metadata length mismatch with matrix rows")
    if not np.all(np.isfinite(matrix)):
        bad = int(np.argwhere(~np.isfinite(matrix))[0][0])
        raise DataFileError(f"{path}: non-finite value in row {bad}")
    with open(path, "w") as fh:
        fh.write(f"{EMB_MAGIC} N={n} D={d}\n")
        for i in range(n):
            fh.write(f"{int(ids[i])} {int(identities[i])} {int(camera_ids[i])} "
                     f"{_fmt_floats(matrix[i])}\n")


def load_embeddings(path):
    """Read an embedding table back as (ids, matrix, identities, camera_ids)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFileError(f"{path}:1: empty file")
    head = lines[0].split()
    if len(head) != 4 or " ".join(head[:2]) != EMB_MAGIC \
            or not head[2].startswith("N=") or not head[3].startswith("D="):
        raise DataFileError(f"{path}:1: malformed header {lines[0]!r}")
    n, d = int(head[2][2:]), int(head[3][2:])
    if len(lines) - 1 != n:
        raise DataFileError(f"{path}: header says N={n}, file has {len(lines) - 1} rows")
    ids = np.empty(n, dtype=int)
    identities = np.empty(n, dtype=int)
    camera_ids = np.empty(n, dtype=int)
    matrix = np.empty((n, d))
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        parts = line.split()
        if len(parts) != 3 + d:
            raise DataFileError(f"{path}:{lineno}: expected {3 + d} fields, got {len(parts)}")
        try:
            ids[i], identities[i], camera_ids[i] = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: bad integer field: {exc}") from None
        row = _parse_floats(parts[3:], path, lineno)
        if not all(np.isfinite(row)):
            raise DataFileError(f"{path}:{lineno}: non-finite value")
        matrix[i] = row
    return ids, matrix, identities, camera_ids


def save_checkpoint(path, meta: dict, tensors: dict) -> None:
    """Write named parameter tensors (1-D or 2-D) with integer metadata."""
    with open(path, "w") as fh:
        fh.write(f"{CKPT_MAGIC} TENSORS={len(tensors)}\n")
        fh.write("META " + " ".join(f"{k}={int(v)}" for k, v in meta.items()) + "\n")
        for name, tensor in tensors.items():
            tensor = np.asarray(tensor, dtype=float)
            if not np.all(np.isfinite(tensor)):
                raise DataFileError(f"{path}: non-finite value in tensor {name!r}")
            dims = " ".join(str(s) for s in tensor.shape)
            fh.write(f"TENSOR {name} {tensor.ndim} {dims}\n")
            rows = tensor if tensor.ndim == 2 else tensor.reshape(1, -1)
            for row in rows:
                fh.write(_fmt_floats(row) + "\n")


def load_checkpoint(path):
    """Read back (meta, tensors) written by save_checkpoint."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(CKPT_MAGIC):
        raise DataFileError(f"{path}:1: malformed header")
    n_tensors = int(lines[0].split("TENSORS=")[1])
    if len(lines) < 2 or not lines[1].startswith("META "):
        raise DataFileError(f"{path}:2: missing META line")
    meta = {}
    for item in lines[1].split()[1:]:
        key, _, value = item.partition("=")
        meta[key] = int(value)
    tensors = {}
    pos = 2
    for _ in range(n_tensors):
        if pos >= len(lines) or not lines[pos].startswith("TENSOR "):
            raise DataFileError(f"{path}:{pos + 1}: expected TENSOR line")
        parts = lines[pos].split()
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(x) for x in parts[3:3 + ndim])
        n_rows = shape[0] if ndim == 2 else 1
        data = []
        for r in range(n_rows):
            lineno = pos + 2 + r
            if lineno - 1 >= len(lines):
                raise DataFileError(f"{path}:{lineno}: truncated tensor {name!r}")
            row = _parse_floats(lines[lineno - 1].split(), path, lineno)
            data.append(row)
        arr = np.array(data)
        if arr.size != int(np.prod(shape)):
            raise DataFileError(f"{path}:{pos + 1}: tensor {name!r} size mismatch")
        tensors[name] = arr.reshape(shape)
        pos += 1 + n_rows
    return meta, tensors


def save_distance_matrix(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{DIST_MAGIC} N={n}\n")
        for row in matrix:
            fh.write(_fmt_floats(row) + "\n")


def load_distance_matrix(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(DIST_MAGIC):
        raise DataFileError(f"{path}:1: malformed header")
    n = int(lines[0].split("N=")[1])
    if len(lines) - 1 != n:
        raise DataFileError(f"{path}: expected {n} rows, got {len(lines) - 1}")
    rows = [_parse_floats(lines[i + 1].split(), path, i + 2) for i in range(n)]
    return np.array(rows)


def save_clusters(path, labels, n_clusters: int) -> None:
    labels = np.asarray(labels, dtype=int)
    with open(path, "w") as fh:
        fh.write(f"{CLUS_MAGIC} N={len(labels)} CLUSTERS={n_clusters}\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i} {int(lab)}\n")


def load_clusters(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(CLUS_MAGIC):
        raise DataFileError(f"{path}:1: malformed header")
    head = lines[0].split()
    n = int(head[2][2:])
    n_clusters = int(head[3].split("=")[1])
    if len(lines) - 1 != n:
        raise DataFileError(f"{path}: expected {n} rows, got {len(lines) - 1}")
    labels = np.empty(n, dtype=int)
    for i, line in enumerate(lines[1:]):
        idx, lab = line.split()
        if int(idx) != i:
            raise DataFileError(f"{path}:{i + 2}: indices must be dense ascending")
        labels[i] = int(lab)
    return labels, n_clusters
