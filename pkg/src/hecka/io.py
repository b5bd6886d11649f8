"""Artifact writers: CSV tables, binary PGM images and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["write_csv", "read_csv", "write_matrix_csv", "write_pgm", "read_pgm", "write_json", "git_blob_digest",
           "write_manifest"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows with full float precision (``repr``) and ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_matrix_csv(path: str | Path, matrix) -> Path:
    """Square matrix with a header row of member indices."""
    matrix = np.asarray(matrix)
    return write_csv(path, [str(i) for i in range(matrix.shape[1])], matrix.tolist())


def write_pgm(path: str | Path, image) -> Path:
    """Binary P5 PGM, maxval 255, from an image with values in ``[0, 1]``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Inverse of :func:`write_pgm`; returns values in ``[0, 1]``."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    data = np.frombuffer(raw, dtype=np.uint8, offset=pos + 1, count=w * h)
    return data.reshape(h, w) / float(maxval)


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def git_blob_digest(data: bytes) -> str:
    """SHA-1 of ``b"blob <len>\\0" + data``, the id git gives a file's contents."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def write_manifest(out_dir: str | Path, config: dict, extra: dict | None = None) -> Path:
    """Record the resolved config and a blob digest of every file under ``out_dir``."""
    out_dir = Path(out_dir)
    outputs = {}
    for f in sorted(out_dir.rglob("*")):
        rel = f.relative_to(out_dir).as_posix()
        if f.is_file() and rel != "manifest.json":
            outputs[rel] = git_blob_digest(f.read_bytes())
    doc = {"config": config, "outputs": outputs}
    if extra:
        doc.update(extra)
    return write_json(out_dir / "manifest.json", doc)
