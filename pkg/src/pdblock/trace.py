"""Per-iteration convergence records and their CSV / JSON forms."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Trace", "CSV_HEADER", "SCHEMA_VERSION"]

CSV_HEADER = ("k", "obj_gap", "feas", "dist_sq")
SCHEMA_VERSION = 1


def _fmt(v):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(v))


def _json_num(v):
    v = float(v)
    return None if math.isnan(v) else v


def _from_json_num(v):
    return math.nan if v is None else float(v)


@dataclass
class Trace:
    """Rows ``(k, obj_gap, feas, dist_sq)``, one per iterate including the start.

    ``ergodic`` holds ``(k, erg_gap, erg_feas)`` rows for the weighted average
    matching the algorithm, when one is defined.
    """

    k: list = field(default_factory=list)
    obj_gap: list = field(default_factory=list)
    feas: list = field(default_factory=list)
    dist_sq: list = field(default_factory=list)
    ergodic: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, k, obj_gap, feas, dist_sq):
        self.k.append(int(k))
        self.obj_gap.append(float(obj_gap))
        self.feas.append(float(feas))
        self.dist_sq.append(float(dist_sq))

    def __len__(self):
        return len(self.k)

    def column(self, name):
        if name == "k":
            return np.asarray(self.k, dtype=int)
        if name in CSV_HEADER:
            return np.asarray(getattr(self, name), dtype=float)
        if name in ("erg_gap", "erg_feas"):
            j = 1 if name == "erg_gap" else 2
            return np.asarray([row[j] for row in self.ergodic], dtype=float)
        raise KeyError(name)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.k == other.k
                and _same(self.obj_gap, other.obj_gap)
                and _same(self.feas, other.feas)
                and _same(self.dist_sq, other.dist_sq)
                and len(self.ergodic) == len(other.ergodic)
                and all(_same(a, b) for a, b in zip(self.ergodic, other.ergodic))
                and self.meta == other.meta)

    # ---- CSV

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for row in zip(self.k, self.obj_gap, self.feas, self.dist_sq):
            buf.write(f"{row[0]},{_fmt(row[1])},{_fmt(row[2])},{_fmt(row[3])}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source):
        """Parse from a path or from CSV text."""
        if "\n" in str(source):
            text = str(source)
        else:
            with open(source) as fh:
                text = fh.read()
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != CSV_HEADER:
            raise ValueError(f"unexpected trace header {lines[0]!r}")
        tr = cls()
        for line in lines[1:]:
            k, g, f, d = line.split(",")
            tr.append(int(k), float(g), float(f), float(d))
        return tr

    # ---- JSON

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "meta": self.meta,
            "columns": list(CSV_HEADER),
            "rows": [[k, _json_num(g), _json_num(f), _json_num(d)]
                     for k, g, f, d in zip(self.k, self.obj_gap, self.feas, self.dist_sq)],
            "ergodic": [[int(r[0]), _json_num(r[1]), _json_num(r[2])] for r in self.ergodic],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported trace schema {d.get('schema')!r}")
        tr = cls(meta=d.get("meta", {}))
        for k, g, f, dist in d["rows"]:
            tr.append(k, _from_json_num(g), _from_json_num(f), _from_json_num(dist))
        tr.ergodic = [(int(k), _from_json_num(g), _from_json_num(f)) for k, g, f in d.get("ergodic", [])]
        return tr

    @classmethod
    def from_json(cls, source):
        if str(source).lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source) as fh:
            return cls.from_dict(json.load(fh))


def _same(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))
