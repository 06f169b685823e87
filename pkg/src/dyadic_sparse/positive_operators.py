"""Positive dyadic operators ``A_k f = sum_S <f>_{S^(k)} 1_S`` and weak-L1 tools."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .dyadic_core import CubeId, DyadicGrid, WeightedGrid
from .errors import CubeNotInGrid, DegenerateMeasure, NotNonnegative

# cap on batch_size * n_cells for the dense probe batches
_BATCH_CELLS = 2**21


@dataclass(frozen=True)
class ProbePolicy:
    """Which test functions :func:`estimate_weak_norm` tries."""

    seed: int
    random_count: int = 64


class PositiveOperator:
    """The operator of complexity ``k`` attached to a collection of cubes.

    Parameters
    ----------
    grid : DyadicGrid
    collection : iterable of CubeId
        Every cube must have level at least ``k``.
    k : int
        Complexity: each ``S`` is averaged over its ``k``-th ancestor.
    """

    def __init__(self, grid: DyadicGrid, collection: Iterable[CubeId], k: int):
        if k < 0:
            raise ValueError("complexity k must be nonnegative")
        cubes = sorted(set(collection))
        for S in cubes:
            grid.check(S)
            if S.level < k:
                raise CubeNotInGrid(f"{S} has no ancestor {k} levels up inside the grid")
        self.grid = grid
        self.k = int(k)
        self.collection = frozenset(cubes)
        self.cubes = tuple(cubes)
        n = len(cubes)
        self._anc_level = np.array([S.level - k for S in cubes], dtype=np.int64)
        self._anc_code = np.array([grid.code(S) >> (grid.dimension * k) for S in cubes], dtype=np.int64)
        levels = np.array([S.level for S in cubes], dtype=np.int64)
        codes = np.array([grid.code(S) for S in cubes], dtype=np.int64)
        # per level, a sparse map from collection members to their cube slot;
        # expanding level by level adds only nonnegative terms, so cells
        # outside every S stay exactly zero
        self._levels = []
        for lv in np.unique(levels):
            sel = np.nonzero(levels == lv)[0]
            place = sp.csr_matrix(
                (np.ones(sel.size), (sel, codes[sel])), shape=(n, grid.n_cubes(int(lv)))
            )
            self._levels.append((int(lv), place))

    def __repr__(self) -> str:
        return f"PositiveOperator(|S|={len(self.cubes)}, k={self.k}, grid={self.grid!r})"

    def top_ancestors(self) -> set[CubeId]:
        """The distinct cubes ``S^(k)`` over the collection."""
        return {self.grid.ancestor(S, self.k) for S in self.cubes}

    def eta(self, Q: CubeId) -> np.ndarray:
        """``sum over S with S^(k) = Q of 1_S`` as a row-major cell array."""
        self.grid.check(Q)
        members = [S for S in self.grid.descendants(Q, self.k) if S in self.collection]
        return self.grid.stack(members)

    def coefficients(self, W: WeightedGrid, f) -> np.ndarray:
        """``<f>_{S^(k)}`` for every ``S`` (0 where ``S^(k)`` has zero mass)."""
        sums = W.level_integrals(f)
        return self._coefficients_from_sums(W, sums)

    def _coefficients_from_sums(self, W: WeightedGrid, sums: list[np.ndarray]) -> np.ndarray:
        lead = sums[0].shape[:-1]
        out = np.zeros(lead + (len(self.cubes),))
        for level in np.unique(self._anc_level):
            sel = self._anc_level == level
            codes = self._anc_code[sel]
            m = W.level_mass[level][codes]
            s = sums[level][..., codes]
            out[..., sel] = np.where(m > 0, s / np.where(m > 0, m, 1.0), 0.0)
        return out

    def apply(self, W: WeightedGrid, f, *, signed: bool = False) -> np.ndarray:
        """Evaluate ``A_k f`` cellwise (row-major).

        ``f`` must be nonnegative unless ``signed=True``; the operator itself
        is linear, the restriction only guards the domination routines.
        """
        f = W.values(f)
        if not signed and np.any(f < 0):
            raise NotNonnegative("A_k is applied to nonnegative functions; pass |f|")
        out_z = self.apply_z(W, self.grid.to_z(f)[None, :])[0]
        return self.grid.from_z(out_z)

    def apply_z(self, W: WeightedGrid, F_z: np.ndarray) -> np.ndarray:
        """Batch evaluation on Morton-ordered rows ``F_z`` of shape ``(B, N)``."""
        F_z = np.atleast_2d(np.asarray(F_z, dtype=float))
        if not self.cubes:
            return np.zeros_like(F_z)
        sums = self.grid.level_sums(F_z * W.mass_z)
        coef = self._coefficients_from_sums(W, sums)
        out = np.zeros_like(F_z)
        for lv, place in self._levels:
            per_cube = np.asarray((place.T @ coef.T).T)
            out += np.repeat(per_cube, self.grid.block(lv), axis=1)
        return out


def weak_norms(masses: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Row-wise ``sup_t t * mu(|g| > t)`` for a batch ``G`` of shape ``(B, N)``.

    The supremum is the maximum of ``v * mu(|g| >= v)`` over the values ``v``
    of ``|g|``; after sorting decreasingly that is ``max_j |g|_(j) * cumsum(mass)_j``
    (inside a run of ties the last position carries the full level-set mass,
    the earlier ones only smaller products).
    """
    G = np.abs(np.atleast_2d(np.asarray(G, dtype=float)))
    idx = np.argsort(-G, axis=1, kind="stable")
    gs = np.take_along_axis(G, idx, axis=1)
    cum = np.cumsum(np.asarray(masses)[idx], axis=1)
    return (gs * cum).max(axis=1, initial=0.0)


def weak_l1_quasinorm(W: WeightedGrid, g) -> float:
    """``||g||_{L^{1,oo}} = sup_t t mu(|g| > t)``, computed exactly."""
    return float(weak_norms(W.cell_mass, W.values(g)[None, :])[0])


def _batches(n_rows: int, n_cells: int):
    step = max(1, _BATCH_CELLS // max(n_cells, 1))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


def point_mass_probes_z(W: WeightedGrid, level: int, within: Iterable[CubeId] | None = None) -> np.ndarray:
    """Morton indices of one positive-mass representative cell per cube of ``level``.

    Normalized point masses at two cells of the same cube of ``level`` produce
    the same image whenever the operator only averages over cubes of level at
    most ``level``, so one representative per cube suffices.
    """
    grid = W.grid
    block = grid.block(level)
    pos = (W.mass_z > 0).reshape(-1, block)
    has = pos.any(axis=1)
    if within is not None:
        keep = np.zeros(grid.n_cubes(level), dtype=bool)
        for Q in within:
            if Q.level <= level:
                c = grid.code(Q) << (grid.dimension * (level - Q.level))
                keep[c : c + grid.block(Q.level) // block] = True
        has &= keep
    cubes = np.nonzero(has)[0]
    first = pos[cubes].argmax(axis=1)
    return cubes * block + first


def random_probes_z(W: WeightedGrid, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` random nonnegative functions of unit L1 norm (Morton rows)."""
    n = W.grid.n_cells
    rows = []
    for _ in range(count):
        density = rng.uniform(0.02, 1.0)
        f = rng.exponential(size=n) * (rng.random(n) < density)
        norm = float(np.dot(f, W.mass_z))
        if norm > 0:
            rows.append(f / norm)
    return np.array(rows).reshape(-1, n)


def estimate_weak_norm(op: PositiveOperator, W: WeightedGrid, probes: ProbePolicy) -> float:
    """Probe lower bound for ``||A_k||_{L^1 -> L^{1,oo}}``.

    Tries every normalized point mass on a positive-mass cell plus
    ``probes.random_count`` random nonnegative functions and returns the
    largest ratio ``||A_k f||_{1,oo} / ||f||_1``.
    """
    if W.total <= 0:
        raise DegenerateMeasure("every cell has zero mass")
    if not op.cubes:
        return 0.0
    grid = W.grid
    best = 0.0
    cells = point_mass_probes_z(W, grid.depth - op.k, op.top_ancestors())
    for a, b in _batches(len(cells), grid.n_cells):
        F = np.zeros((b - a, grid.n_cells))
        F[np.arange(b - a), cells[a:b]] = 1.0 / W.mass_z[cells[a:b]]
        best = max(best, float(weak_norms(W.mass_z, op.apply_z(W, F)).max(initial=0.0)))
    rng = np.random.default_rng(probes.seed)
    R = random_probes_z(W, probes.random_count, rng)
    for a, b in _batches(len(R), grid.n_cells):
        best = max(best, float(weak_norms(W.mass_z, op.apply_z(W, R[a:b])).max(initial=0.0)))
    return best
