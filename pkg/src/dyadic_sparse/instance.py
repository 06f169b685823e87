"""The shared JSON instance schema and a 17-significant-digit JSON writer."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .dyadic_core import CubeId, DyadicGrid, WeightedGrid
from .errors import InstanceError


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent: int | None, level: int) -> str:
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v, None, level + 1) for v in obj) + "]"
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        if indent is None or not items:
            return "{" + ", ".join(items) + "}"
        pad = " " * (indent * (level + 1))
        close = " " * (indent * level)
        return "{\n" + ",\n".join(pad + it for it in items) + "\n" + close + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = 1) -> str:
    """JSON text with every float written with 17 significant digits."""
    return _encode(obj, indent, 0)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


@dataclass
class Instance:
    """One problem instance: grid shape, cell masses, a function, a collection.

    ``masses`` and ``f`` are row-major cell arrays.
    """

    dimension: int
    depth: int
    masses: np.ndarray
    f: np.ndarray
    collection: list[CubeId] = field(default_factory=list)
    k: int = 0
    lam: float = 0.3
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = 2 ** (self.dimension * self.depth)
        if self.masses.shape != (n,) or self.f.shape != (n,):
            raise InstanceError(f"masses and f must both have {n} entries")

    @cached_property
    def grid(self) -> DyadicGrid:
        return DyadicGrid(self.dimension, self.depth)

    @cached_property
    def weighted(self) -> WeightedGrid:
        return WeightedGrid(self.grid, self.masses)

    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "depth": self.depth,
            "masses": self.masses.tolist(),
            "f": self.f.tolist(),
            "collection": [Q.to_list() for Q in self.collection],
            "k": self.k,
            "lambda": self.lam,
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "Instance":
        try:
            inst = cls(
                dimension=int(doc["dimension"]),
                depth=int(doc["depth"]),
                masses=np.array(doc["masses"], dtype=float),
                f=np.array(doc["f"], dtype=float),
                collection=[CubeId.from_list(q) for q in doc.get("collection", [])],
                k=int(doc.get("k", 0)),
                lam=float(doc.get("lambda", 0.3)),
                meta=dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"malformed instance: {exc}") from exc
        for Q in inst.collection:
            try:
                inst.grid.check(Q)
            except ValueError as exc:
                raise InstanceError(str(exc)) from exc
        return inst

    def dumps(self) -> str:
        return dumps(self.to_dict())

    def digest(self) -> str:
        """SHA-256 of the canonical serialization (first 16 hex digits)."""
        return hashlib.sha256(dumps(self.to_dict(), indent=None).encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path) -> "Instance":
        try:
            doc = read_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise InstanceError(f"cannot read instance {path}: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")
