"""JSON encoding of jets, words and reports, plus deterministic file writers.

Complex numbers are ``[re, im]`` pairs and coefficient arrays follow the
graded lexicographic index order used everywhere in the package.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .flow_atlas import FlowWord, OvershearField, ShearField
from .jet_core import JetTuple


def encode_complex(x):
    """Nested arrays of complex numbers to nested lists of ``[re, im]``."""
    a = np.asarray(x, dtype=complex)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [encode_complex(v) for v in a]


def decode_complex(x, where: str = "") -> np.ndarray:
    """Inverse of :func:`encode_complex`; plain real numbers are accepted too."""
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError("not a numeric array", where) from exc
    if a.ndim == 0:
        return np.asarray(complex(a))
    if a.shape[-1] != 2:
        raise SchemaError("complex entries must be [re, im] pairs", where)
    return a[..., 0] + 1j * a[..., 1]


def encode_jet_tuple(gamma: JetTuple) -> dict:
    return {"n": gamma.n, "k": gamma.k, "base_points": encode_complex(gamma.base_points),
            "coeffs": encode_complex(gamma.coeffs)}


def decode_jet_tuple(d: dict, where: str = "jets", check: bool = True) -> JetTuple:
    bp = decode_complex(d["base_points"], f"{where}.base_points")
    coeffs = decode_complex(d["coeffs"], f"{where}.coeffs")
    if bp.ndim != 2 or bp.shape[1] != d["n"]:
        raise SchemaError(f"base_points must be a list of points in C^{d['n']}", f"{where}.base_points")
    expected = (bp.shape[0], d["n"], math.comb(d["n"] + d["k"], d["k"]))
    if coeffs.shape != expected:
        raise SchemaError(f"coeffs must have shape {expected}, got {coeffs.shape}", f"{where}.coeffs")
    try:
        return JetTuple.from_coeffs(bp, coeffs, check=check)
    except Exception as exc:
        raise SchemaError(str(exc), where) from exc


def encode_field(f) -> dict:
    out = {"kind": f.kind, "v": encode_complex(f.v), "lam": encode_complex(f.lam),
           "profile": [[list(e), encode_complex(c)] for e, c in f.profile], "center": encode_complex(f.center)}
    if isinstance(f, OvershearField):
        out["mu"] = encode_complex(f.mu)
    return out


def decode_field(d: dict, where: str = "field"):
    kw = dict(v=decode_complex(d["v"], f"{where}.v"), lam=decode_complex(d["lam"], f"{where}.lam"),
              profile=[(tuple(e), complex(decode_complex(c))) for e, c in d["profile"]],
              center=decode_complex(d["center"], f"{where}.center"))
    try:
        if d["kind"] == "shear":
            return ShearField(**kw)
        if d["kind"] == "overshear":
            return OvershearField(mu=decode_complex(d["mu"], f"{where}.mu"), **kw)
    except ValueError as exc:
        raise SchemaError(str(exc), where) from exc
    raise SchemaError(f"unknown field kind {d['kind']!r}", f"{where}.kind")


def encode_word(word: FlowWord) -> list:
    """Letters in application order; repeated fields are stored once and referenced."""
    fields, refs, letters = [], {}, []
    for f, t in word.letters:
        key = id(f)
        if key not in refs:
            refs[key] = len(fields)
            fields.append(encode_field(f))
        letters.append([refs[key], encode_complex(t)])
    return {"fields": fields, "letters": letters}


def decode_word(d: dict, where: str = "word") -> FlowWord:
    fields = [decode_field(f, f"{where}.fields[{i}]") for i, f in enumerate(d["fields"])]
    letters = []
    for i, (ref, t) in enumerate(d["letters"]):
        if not 0 <= ref < len(fields):
            raise SchemaError(f"field reference {ref} out of range", f"{where}.letters[{i}]")
        letters.append((fields[ref], complex(decode_complex(t))))
    return FlowWord(tuple(letters))


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
