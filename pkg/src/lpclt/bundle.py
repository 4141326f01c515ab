"""Writing result bundles: stable file names, versioned headers, long tables.

Nothing written here depends on the clock, the host or the output path, so
re-running a command with the same config and seed reproduces every file
byte for byte.
"""
import csv
import json
import math
import os

import jsonschema
import numpy as np

__all__ = ["SUMMARY_SCHEMA", "BundleWriter", "bundle_dir", "to_jsonable", "write_path_csv",
           "read_path_csv", "write_matrix_csv"]

SCHEMA_VERSION = "lpclt.summary/1"

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["schema", "command", "name", "seed", "config_hash", "partial", "files",
                 "results"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "command": {"enum": ["simulate", "mixing", "check", "verify", "diagnose", "probe"]},
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
        "partial": {"type": "boolean"},
        "files": {"type": "array", "items": {"type": "string"}},
        "results": {"type": "object"},
    },
    "additionalProperties": False,
}


def to_jsonable(x):
    """Plain JSON types; non-finite floats become the strings "inf"/"-inf"/"nan"."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x is None or isinstance(x, str):
        return x
    return str(x)


def bundle_dir(root, name, force=False):
    """``root/name``, or the first free ``root/name-2``, ``-3``... unless ``force``."""
    base = os.path.join(root, name)
    if force or not os.path.exists(base):
        return base
    i = 2
    while os.path.exists(f"{base}-{i}"):
        i += 1
    return f"{base}-{i}"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class BundleWriter:
    """Collects files in one directory and finishes with ``summary.json``."""

    def __init__(self, directory, fmt="csv"):
        if fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        self.dir, self.fmt, self.files = directory, fmt, []
        os.makedirs(directory, exist_ok=True)

    def _open(self, name):
        self.files.append(name)
        return open(os.path.join(self.dir, name), "w", encoding="utf-8", newline="")

    def table(self, stem, header, rows):
        """Write rows as ``stem.csv`` (or ``stem.json`` with the json format)."""
        if self.fmt == "json":
            data = [dict(zip(header, (to_jsonable(v) for v in r))) for r in rows]
            self.json(f"{stem}.json", {"columns": list(header), "rows": data})
            return
        with self._open(f"{stem}.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def json(self, name, obj):
        with self._open(name) as fh:
            json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def text(self, name, content):
        with self._open(name) as fh:
            fh.write(content)

    def finish(self, command, name, seed, config_hash, results, partial=False):
        summary = {"schema": SCHEMA_VERSION, "command": command, "name": name,
                   "seed": int(seed), "config_hash": config_hash, "partial": bool(partial),
                   "files": sorted(self.files), "results": to_jsonable(results)}
        jsonschema.validate(summary, SUMMARY_SCHEMA)
        with open(os.path.join(self.dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return summary


def write_path_csv(path_sample, filename, seed=None):
    """Single-column CSV with a ``# schema=... spec_hash=... seed=...`` line."""
    seed = path_sample.seed if seed is None else seed
    with open(filename, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema=lpclt.path/1 spec_hash={path_sample.spec_hash} seed={seed} "
                 f"replicate={path_sample.replicate} clipped={path_sample.clipped}\n")
        fh.write("value\n")
        for v in path_sample.values:
            fh.write(repr(float(v)) + "\n")


def read_path_csv(filename):
    """Values and header fields of a file written by :func:`write_path_csv`."""
    meta = {}
    with open(filename, encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for tok in first[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
            header = fh.readline()
        else:
            header = first
        if header.strip() != "value":
            raise ValueError(f"{filename}: expected a 'value' header")
        vals = np.array([float(line) for line in fh if line.strip()])
    return vals, meta


def write_matrix_csv(matrix, nodes, filename):
    """Square matrix with node coordinates as the header row and first column."""
    with open(filename, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [repr(float(t)) for t in nodes])
        for t, row in zip(nodes, np.asarray(matrix)):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
