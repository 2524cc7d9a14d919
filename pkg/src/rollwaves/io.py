"""Text file formats: profile cache, family index, CSV tables and JSON reports.

A profile file is plain text.  Header lines start with ``#`` and hold
``key = value`` pairs (orbit parameters, model parameters, shooting nodes
as JSON); the body has four whitespace-separated columns
``x tau dtau u`` written with 17 significant digits, so a round trip is
exact in double precision.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .model import ModelParams
from .orbit import OrbitFamily, OrbitSpec, PeriodicProfile, QClosure

FMT = "%.17g"
PROFILE_COLUMNS = ("x", "tau", "dtau", "u")
INDEX_COLUMNS = ("X", "c", "q", "amplitude", "file")


def _g(v: float) -> str:
    return FMT % v


def write_profile(path, profile: PeriodicProfile) -> Path:
    path = Path(path)
    p, sp = profile.params, profile.spec
    header = {
        "X": _g(sp.X), "c": _g(sp.c), "q": _g(sp.q), "b1": _g(sp.b[0]), "b2": _g(sp.b[1]),
        "F": _g(p.F), "nu": _g(p.nu), "r": _g(p.r), "s": _g(p.s),
        "n": str(profile.n),
        "eulerian_length": _g(profile.eulerian_length or 0.0),
        "nodes": json.dumps([[float(a), float(b)] for a, b in np.asarray(profile.nodes)]),
    }
    lines = [f"# {k} = {v}" for k, v in header.items()]
    lines.append("# columns = " + " ".join(PROFILE_COLUMNS))
    for row in zip(profile.x, profile.tau, profile.dtau, profile.u):
        lines.append(" ".join(_g(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_profile(path) -> PeriodicProfile:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            header[key.strip()] = val.strip()
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    try:
        data = np.array(rows, dtype=float)
        params = ModelParams(F=float(header["F"]), nu=float(header["nu"]),
                             r=float(header["r"]), s=float(header["s"]))
        spec = OrbitSpec(X=float(header["X"]), c=float(header["c"]), q=float(header["q"]),
                         b=(float(header["b1"]), float(header["b2"])))
        nodes = np.array(json.loads(header["nodes"]), dtype=float)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed profile file {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError(f"malformed profile file {path}: expected 4 columns")
    prof = PeriodicProfile(spec=spec, params=params, x=data[:, 0], tau=data[:, 1],
                           dtau=data[:, 2], u=data[:, 3], nodes=nodes)
    prof.eulerian_length = float(header.get("eulerian_length", "0"))
    return prof


def write_family(directory, family: OrbitFamily) -> Path:
    """One profile file per member plus ``index.csv``; returns the index path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, prof in enumerate(family.members):
        name = f"profile_{i:04d}.txt"
        write_profile(d / name, prof)
        rows.append((_g(prof.X), _g(prof.c), _g(prof.q), _g(prof.amplitude), name))
    meta = {"q0": family.closure.q0, "q1": family.closure.q1, "arclength": list(map(float, family.arclength))}
    (d / "family.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return write_csv(d / "index.csv", INDEX_COLUMNS, rows)


def read_family(directory) -> OrbitFamily:
    d = Path(directory)
    meta = json.loads((d / "family.json").read_text())
    with open(d / "index.csv", newline="") as fh:
        members = [read_profile(d / row["file"]) for row in csv.DictReader(fh)]
    return OrbitFamily(members=members, arclength=meta["arclength"],
                       closure=QClosure(q0=meta["q0"], q1=meta["q1"]))


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _g(float(v))


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, len(cols)))
    return {c: data[:, i] for i, c in enumerate(cols)}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
