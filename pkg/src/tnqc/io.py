"""JSON serialization for tensor trains, unitary MPOs and circuits.

Tensor-train documents look like::

    {"kind": "ttvector" | "ttmatrix", "n": 3, "phys_dims": [2, 2, 2],
     "rank_profile": [1, 2, 2, 1],
     "cores": [{"shape": [1, 2, 2], "re": [...], "im": [...]}, ...]}

Arrays are flattened row-major. Floats are written with ``repr`` (shortest
round-trip form), so a dump/load cycle is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .fit import UnitaryMPO
from .tt import TTMatrix, TTVector

__all__ = [
    "array_to_json",
    "array_from_json",
    "tt_to_dict",
    "tt_from_dict",
    "dump_tt",
    "load_tt",
    "unitary_mpo_to_dict",
    "unitary_mpo_from_dict",
    "write_json",
    "read_json",
]


def array_to_json(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a, dtype=np.complex128)
    flat = a.reshape(-1)
    return {
        "shape": list(a.shape),
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }


def array_from_json(d: dict[str, Any]) -> np.ndarray:
    re = np.asarray(d["re"], dtype=np.float64)
    im = np.asarray(d["im"], dtype=np.float64)
    if re.shape != im.shape:
        raise ValueError("real and imaginary parts differ in length")
    shape = tuple(int(s) for s in d["shape"])
    return (re + 1j * im).reshape(shape)


def tt_to_dict(t: TTVector | TTMatrix) -> dict[str, Any]:
    kind = "ttmatrix" if isinstance(t, TTMatrix) else "ttvector"
    return {
        "kind": kind,
        "n": t.n,
        "phys_dims": t.phys_dims,
        "rank_profile": list(t.rank_profile),
        "cores": [array_to_json(c) for c in t.cores],
    }


def tt_from_dict(d: dict[str, Any]) -> TTVector | TTMatrix:
    kind = d.get("kind")
    cores = [array_from_json(c) for c in d["cores"]]
    if kind == "ttvector":
        t = TTVector(cores)
    elif kind == "ttmatrix":
        t = TTMatrix(cores)
    else:
        raise ValueError(f"unknown tensor-train kind {kind!r}")
    if "n" in d and d["n"] != t.n:
        raise ValueError(f"document says n={d['n']} but has {t.n} cores")
    if "rank_profile" in d and list(d["rank_profile"]) != list(t.rank_profile):
        raise ValueError("rank_profile disagrees with core shapes")
    return t


def unitary_mpo_to_dict(a: UnitaryMPO) -> dict[str, Any]:
    """Tensor-train document of ``A`` plus the scale ``c`` and rank ``R``."""
    return {**tt_to_dict(a.mpo), "c": a.c, "R": a.R}


def unitary_mpo_from_dict(d: dict[str, Any]) -> UnitaryMPO:
    mpo = tt_from_dict(d)
    if not isinstance(mpo, TTMatrix):
        raise ValueError("a unitary MPO document must have kind 'ttmatrix'")
    return UnitaryMPO(mpo, float(d["c"]), int(d["R"]))


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n")


def read_json(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def dump_tt(t: TTVector | TTMatrix, path: str | Path) -> None:
    write_json(path, tt_to_dict(t))


def load_tt(path: str | Path) -> TTVector | TTMatrix:
    return tt_from_dict(read_json(path))
