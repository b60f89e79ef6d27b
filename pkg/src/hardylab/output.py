"""Plain-text result files: JSON summaries and CSV tables.

Floats are written with 17 significant digits so values round-trip
exactly; non-finite floats become the strings "nan", "inf", "-inf".
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

PARTIAL_MARKER = "PARTIAL_OUTPUT"


def fmt(x) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    """Convert numpy containers and scalars to plain Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def to_json(obj, indent: int = 2) -> str:
    """Deterministic JSON text (sorted keys, 17-digit floats)."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            if np.isnan(o):
                return '"nan"'
            if np.isinf(o):
                return '"inf"' if o > 0 else '"-inf"'
            return fmt(o + 0.0)  # folds -0.0 into 0.0
        return json.dumps(o)

    return enc(_plain(obj), 0) + "\n"


def digest(obj) -> str:
    """sha256 of the canonical JSON text of ``obj``."""
    return hashlib.sha256(to_json(obj).encode()).hexdigest()


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int, np.integer)) else fmt(v) for v in row])
    return buf.getvalue()


def field_table(grid, u) -> str:
    """Header ``r,theta,value``; one row per unknown."""
    r, t = grid.node_coords()
    return _table(["r", "theta", "value"], zip(r, t, np.asarray(u)))


def face_table(times, values, faces=None) -> str:
    """Header ``t,face_id,value`` for a (time x face) record."""
    values = np.asarray(values)
    faces = np.arange(values.shape[1]) if faces is None else np.asarray(faces)
    rows = (
        (t, int(f), values[k, j])
        for k, t in enumerate(times)
        for j, f in enumerate(faces)
    )
    return _table(["t", "face_id", "value"], rows)


def series_table(times, energy, mass) -> str:
    """Header ``t,energy,mass``."""
    return _table(["t", "energy", "mass"], zip(times, energy, mass))


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_outputs(files: dict[str, str], output_dir) -> list[Path]:
    """Write every ``name -> text`` entry atomically into ``output_dir``.

    On an I/O failure a partial-output marker listing the files already
    written is left behind (when possible) and the error is re-raised.
    """
    out = Path(output_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        stale = out / PARTIAL_MARKER
        if stale.exists():
            stale.unlink()
        for name in files:
            write_atomic(out / name, files[name])
            written.append(out / name)
    except OSError:
        try:
            (out / PARTIAL_MARKER).write_text("\n".join(p.name for p in written) + "\n")
        except OSError:
            pass
        raise
    return written
