"""Finite dyadic lattices, discrete measures on them, and sparse families.

Cells are addressed in row-major order everywhere in the public API (this is
also the order used by instance files).  Internally every cube is stored as a
contiguous range of cells in Morton (Z-) order, so that aggregating a quantity
over a cube is a slice or a reshape instead of a gather.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import AncestorOutOfGrid, CubeNotInGrid, ZeroMassCube

#: Relative tolerance for every floating-point inequality assertion.
REL_TOL = 1e-9


def leq(a: float, b: float, rtol: float = REL_TOL, atol: float = 0.0) -> bool:
    """``a <= b`` up to a relative slack of ``rtol`` (plus optional ``atol``)."""
    return a <= b + rtol * max(abs(a), abs(b)) + atol


@dataclass(frozen=True, order=True)
class CubeId:
    """Address of a dyadic cube: its level and integer index vector."""

    level: int
    index: tuple[int, ...]

    def to_list(self) -> list[int]:
        return [self.level, *self.index]

    @classmethod
    def from_list(cls, item: Sequence[int]) -> "CubeId":
        if len(item) < 2:
            raise CubeNotInGrid(f"cube entry {item!r} needs a level and an index")
        return cls(int(item[0]), tuple(int(v) for v in item[1:]))

    def __str__(self) -> str:
        return f"Q{self.level}[{','.join(map(str, self.index))}]"


@lru_cache(maxsize=None)
def _interleave(index: tuple[int, ...]) -> int:
    d = len(index)
    code = 0
    for t, i in enumerate(index):
        shift = d - 1 - t
        b = 0
        while i >> b:
            if (i >> b) & 1:
                code |= 1 << (d * b + shift)
            b += 1
    return code


@lru_cache(maxsize=None)
def _deinterleave(code: int, d: int) -> tuple[int, ...]:
    index = [0] * d
    b = 0
    while code >> (d * b):
        for t in range(d):
            if (code >> (d * b + d - 1 - t)) & 1:
                index[t] |= 1 << b
        b += 1
    return tuple(index)


class DyadicGrid:
    """The dyadic cubes of levels ``0..depth`` below one root cube.

    Parameters
    ----------
    dimension : int
        Ambient dimension, 1 or 2.
    depth : int
        Level ``L`` of the finest cells; there are ``2**(dimension*depth)``.
    """

    def __init__(self, dimension: int, depth: int):
        if dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {dimension}")
        if depth < 0:
            raise ValueError(f"depth must be nonnegative, got {depth}")
        self.dimension = int(dimension)
        self.depth = int(depth)
        self.branching = 2**self.dimension
        self.side = 2**self.depth
        self.n_cells = 2 ** (self.dimension * self.depth)
        self.root = CubeId(0, (0,) * self.dimension)

        coords = np.indices((self.side,) * self.dimension).reshape(self.dimension, -1)
        codes = np.zeros(self.n_cells, dtype=np.int64)
        for t in range(self.dimension):
            shift = self.dimension - 1 - t
            for b in range(self.depth):
                codes |= ((coords[t] >> b) & 1) << (self.dimension * b + shift)
        # order[p] is the row-major cell sitting at Morton position p
        self.order = np.argsort(codes)
        self.order.flags.writeable = False

    def __repr__(self) -> str:
        return f"DyadicGrid(dimension={self.dimension}, depth={self.depth})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DyadicGrid)
            and other.dimension == self.dimension
            and other.depth == self.depth
        )

    def __hash__(self) -> int:
        return hash((self.dimension, self.depth))

    # -- addressing -------------------------------------------------------

    def n_cubes(self, level: int) -> int:
        return 2 ** (self.dimension * level)

    def block(self, level: int) -> int:
        """Number of finest cells inside one cube of ``level``."""
        return 2 ** (self.dimension * (self.depth - level))

    def check(self, Q: CubeId) -> CubeId:
        if not 0 <= Q.level <= self.depth or len(Q.index) != self.dimension:
            raise CubeNotInGrid(f"{Q} is not a cube of {self!r}")
        n = 2**Q.level
        if any(not 0 <= i < n for i in Q.index):
            raise CubeNotInGrid(f"{Q} is not a cube of {self!r}")
        return Q

    def cube(self, level: int, *index: int) -> CubeId:
        if len(index) == 1 and not isinstance(index[0], int):
            index = tuple(index[0])
        return self.check(CubeId(level, tuple(int(i) for i in index)))

    def code(self, Q: CubeId) -> int:
        """Morton code of ``Q`` among the cubes of its level."""
        return _interleave(Q.index)

    def from_code(self, level: int, code: int) -> CubeId:
        return CubeId(level, _deinterleave(int(code), self.dimension))

    def span(self, Q: CubeId) -> tuple[int, int]:
        """Half-open range of Morton positions covered by ``Q``."""
        b = self.block(Q.level)
        c = self.code(Q)
        return c * b, (c + 1) * b

    # -- navigation -------------------------------------------------------

    def parent(self, Q: CubeId) -> CubeId:
        return self.ancestor(Q, 1)

    def ancestor(self, Q: CubeId, k: int) -> CubeId:
        """The cube ``k`` levels above ``Q`` that contains it."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        if Q.level < k:
            raise AncestorOutOfGrid(f"{Q} has no ancestor {k} levels up")
        if k == 0:
            return Q
        return CubeId(Q.level - k, tuple(i >> k for i in Q.index))

    def children(self, Q: CubeId) -> list[CubeId]:
        return self.descendants(Q, 1)

    def descendants(self, Q: CubeId, k: int) -> list[CubeId]:
        """All cubes ``k`` levels below ``Q`` inside it, in Morton order."""
        if Q.level + k > self.depth:
            return []
        c = self.code(Q) << (self.dimension * k)
        return [self.from_code(Q.level + k, c + j) for j in range(2 ** (self.dimension * k))]

    def contains(self, outer: CubeId, inner: CubeId) -> bool:
        if inner.level < outer.level:
            return False
        shift = inner.level - outer.level
        return all((i >> shift) == o for i, o in zip(inner.index, outer.index))

    def cubes(self, level: int) -> Iterator[CubeId]:
        for c in range(self.n_cubes(level)):
            yield self.from_code(level, c)

    def all_cubes(self) -> Iterator[CubeId]:
        for level in range(self.depth + 1):
            yield from self.cubes(level)

    def leaf(self, cell: int) -> CubeId:
        """The finest cube of the row-major ``cell``."""
        idx = np.unravel_index(int(cell), (self.side,) * self.dimension)
        return CubeId(self.depth, tuple(int(i) for i in idx))

    def cells(self, Q: CubeId) -> np.ndarray:
        """Row-major indices of the finest cells inside ``Q``."""
        a, b = self.span(Q)
        return self.order[a:b]

    def indicator(self, Q: CubeId) -> np.ndarray:
        out = np.zeros(self.n_cells)
        out[self.cells(Q)] = 1.0
        return out

    # -- layout conversions ------------------------------------------------

    def to_z(self, values) -> np.ndarray:
        """Reorder a row-major cell array (last axis) into Morton order."""
        return np.asarray(values)[..., self.order]

    def from_z(self, values_z) -> np.ndarray:
        values_z = np.asarray(values_z)
        out = np.empty_like(values_z)
        out[..., self.order] = values_z
        return out

    def level_sums(self, values_z: np.ndarray) -> list[np.ndarray]:
        """Per-level cube sums of a Morton-ordered array, by tree aggregation.

        Entry ``level`` has shape ``(..., n_cubes(level))`` indexed by Morton
        code.  Each level is summed from the one below it, so parent sums
        equal the sum of their children's sums exactly as computed.
        """
        values_z = np.asarray(values_z, dtype=float)
        lead = values_z.shape[:-1]
        sums = [values_z]
        for _ in range(self.depth):
            prev = sums[-1]
            sums.append(prev.reshape(*lead, -1, self.branching).sum(axis=-1))
        return sums[::-1]

    def stack(self, cubes: Iterable[CubeId], weights: Iterable[float] | None = None) -> np.ndarray:
        """Row-major function ``sum_Q w_Q 1_Q``; ``weights`` default to 1."""
        cubes = list(cubes)
        w = np.ones(len(cubes)) if weights is None else np.asarray(list(weights), dtype=float)
        out = np.zeros(self.n_cells)
        if cubes:
            levels = np.array([Q.level for Q in cubes])
            codes = np.array([self.code(Q) for Q in cubes], dtype=np.int64)
            for lv in np.unique(levels):
                sel = levels == lv
                per_cube = np.zeros(self.n_cubes(int(lv)))
                np.add.at(per_cube, codes[sel], w[sel])
                out += np.repeat(per_cube, self.block(int(lv)))
        return self.from_z(out)


class WeightedGrid:
    """A dyadic grid carrying a nonnegative mass on every finest cell.

    ``cube_mass`` is served from per-level aggregates built once at
    construction.
    """

    def __init__(self, grid: DyadicGrid, cell_mass):
        m = np.array(cell_mass, dtype=float)
        if m.shape != (grid.n_cells,):
            raise ValueError(f"expected {grid.n_cells} cell masses, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("cell masses must be finite and nonnegative")
        m.flags.writeable = False
        self.grid = grid
        self.cell_mass = m
        self.mass_z = grid.to_z(m)
        self.mass_z.flags.writeable = False
        self.level_mass = grid.level_sums(self.mass_z)
        for arr in self.level_mass:
            arr.flags.writeable = False
        self.positive = m > 0
        self.positive.flags.writeable = False

    @classmethod
    def uniform(cls, grid: DyadicGrid, total: float = 1.0) -> "WeightedGrid":
        return cls(grid, np.full(grid.n_cells, total / grid.n_cells))

    @property
    def total(self) -> float:
        return float(self.level_mass[0][0])

    def cube_mass(self, Q: CubeId) -> float:
        return float(self.level_mass[Q.level][self.grid.code(Q)])

    def values(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1:] != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} cell values, got shape {f.shape}")
        return f

    def integral(self, f) -> float:
        return float(np.dot(self.values(f), self.cell_mass))

    def l1_norm(self, f) -> float:
        return float(np.dot(np.abs(self.values(f)), self.cell_mass))

    def cube_integral(self, f, Q: CubeId) -> float:
        a, b = self.grid.span(Q)
        fz = self.grid.to_z(self.values(f))
        return float(np.dot(fz[a:b], self.mass_z[a:b]))

    def average(self, f, Q: CubeId) -> float:
        """Average of ``f`` over ``Q`` with respect to the cell masses."""
        mass = self.cube_mass(Q)
        if mass <= 0:
            raise ZeroMassCube(f"{Q} has zero mass")
        return self.cube_integral(f, Q) / mass

    def level_integrals(self, f) -> list[np.ndarray]:
        fz = self.grid.to_z(self.values(f))
        return self.grid.level_sums(fz * self.mass_z)

    def level_averages(self, f) -> list[np.ndarray]:
        """Averages of ``f`` on every cube, per level; NaN on zero-mass cubes."""
        out = []
        for s, m in zip(self.level_integrals(f), self.level_mass):
            with np.errstate(invalid="ignore", divide="ignore"):
                out.append(np.where(m > 0, s / np.where(m > 0, m, 1.0), np.nan))
        return out

    def cube_values(self, f, Q: CubeId) -> tuple[np.ndarray, np.ndarray]:
        """Values and masses of the cells of ``Q`` (Morton order)."""
        a, b = self.grid.span(Q)
        fz = self.grid.to_z(self.values(f))
        return fz[a:b], self.mass_z[a:b]


def family_children(grid: DyadicGrid, cubes: Iterable[CubeId]) -> dict[CubeId, tuple[CubeId, ...]]:
    """Map each cube of a collection to its maximal strict subcubes in it."""
    members = set(cubes)
    children: dict[CubeId, list[CubeId]] = {Q: [] for Q in members}
    for Q in members:
        for j in range(1, Q.level + 1):
            A = grid.ancestor(Q, j)
            if A in members:
                children[A].append(Q)
                break
    return {Q: tuple(sorted(ch)) for Q, ch in children.items()}


@dataclass(frozen=True)
class SparseFamily:
    """A collection of cubes together with its stopping-children structure."""

    cubes: tuple[CubeId, ...]
    gamma: float
    stopping_children: Mapping[CubeId, tuple[CubeId, ...]] = field(repr=False)

    @classmethod
    def from_cubes(cls, grid: DyadicGrid, cubes: Iterable[CubeId], gamma: float) -> "SparseFamily":
        cubes = tuple(sorted(set(cubes)))
        for Q in cubes:
            grid.check(Q)
        return cls(cubes, float(gamma), family_children(grid, cubes))

    def __len__(self) -> int:
        return len(self.cubes)

    def __contains__(self, Q: object) -> bool:
        return Q in self.stopping_children

    def roots(self) -> list[CubeId]:
        inner = {c for ch in self.stopping_children.values() for c in ch}
        return [Q for Q in self.cubes if Q not in inner]

    def generations(self) -> list[list[CubeId]]:
        """Family cubes grouped by depth in the stopping tree (roots first)."""
        gens = [self.roots()]
        while True:
            nxt = [c for F in gens[-1] for c in self.stopping_children[F]]
            if not nxt:
                return gens
            gens.append(sorted(nxt))

    def e_mask(self, grid: DyadicGrid, F: CubeId) -> np.ndarray:
        """Row-major boolean mask of ``E(F)``: ``F`` minus its stopping children."""
        mask = np.zeros(grid.n_cells, dtype=bool)
        mask[grid.cells(F)] = True
        for c in self.stopping_children[F]:
            mask[grid.cells(c)] = False
        return mask

    def count(self, grid: DyadicGrid) -> np.ndarray:
        """Number of family cubes containing each cell."""
        return grid.stack(self.cubes)


@dataclass(frozen=True)
class SparseCheck:
    cube: CubeId
    mass: float
    children_mass: float
    ratio: float
    ok: bool


def verify_sparse(
    W: WeightedGrid, cubes: Iterable[CubeId], gamma: float
) -> tuple[bool, list[SparseCheck]]:
    """Check ``sum of stopping-children masses <= gamma * mass`` for every cube.

    Zero-mass cubes pass vacuously.  Returns the verdict and one
    :class:`SparseCheck` per cube.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    report = []
    for F, ch in sorted(family_children(W.grid, cubes).items()):
        mass = W.cube_mass(F)
        cm = float(sum(W.cube_mass(c) for c in ch))
        if mass > 0:
            ratio = cm / mass
            ok = leq(cm, gamma * mass)
        else:
            ratio, ok = 0.0, True
        report.append(SparseCheck(F, mass, cm, ratio, ok))
    return all(r.ok for r in report), report
