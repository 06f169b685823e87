"""Deterministic random instances: measures, functions and sparse collections.

Randomness comes from numpy's PCG64 generator.  The seed is expanded with
``SeedSequence.spawn`` into independent streams for the measure, the function
and the collection, so changing e.g. the collection kind leaves the measure
and the function of a seed untouched.  Instances are reproducible bit for bit
within this implementation; other implementations should exchange instance
files rather than seeds.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dyadic_core import CubeId, DyadicGrid, WeightedGrid
from .errors import GenInfeasible
from .instance import Instance

MEASURES = ("uniform", "random", "skewed", "atomic")
FUNCTIONS = ("random", "spike", "haar")
COLLECTIONS = ("nested-chain", "random-sparse", "full-grid")
MAX_RETRIES = 50


@dataclass(frozen=True)
class GenSpec:
    """Recipe for :func:`generate`.

    ``measure`` is ``uniform``, ``random`` (i.i.d. masses with ratio at most
    4), ``skewed:s`` (every split gives one child ``s`` times the mass of the
    others) or ``atomic`` (mass on a few random cells only).  ``collection``
    is ``nested-chain``, ``random-sparse:gamma`` or ``full-grid``; it lives
    inside one cube of level ``top_level`` (default ``k``).
    """

    seed: int
    dimension: int = 1
    depth: int = 6
    measure: str = "uniform"
    f_kind: str = "random"
    collection: str = "random-sparse:0.5"
    k: int = 0
    lam: float = 0.3
    top_level: int | None = None


def _split(kind: str) -> tuple[str, float | None]:
    name, _, arg = kind.partition(":")
    if not arg:
        return name, None
    try:
        return name, float(arg)
    except ValueError as exc:
        raise GenInfeasible(f"bad parameter in {kind!r}") from exc


def _validate(spec: GenSpec) -> None:
    if spec.dimension not in (1, 2):
        raise GenInfeasible("dimension must be 1 or 2")
    if spec.depth < 0 or spec.k < 0:
        raise GenInfeasible("depth and k must be nonnegative")
    top = spec.k if spec.top_level is None else spec.top_level
    if not spec.k <= top <= spec.depth:
        raise GenInfeasible(f"need k <= top_level <= depth, got k={spec.k}, top_level={top}")
    m, s = _split(spec.measure)
    if m not in MEASURES:
        raise GenInfeasible(f"unknown measure kind {spec.measure!r}")
    if m == "skewed" and (s is None or s < 1):
        raise GenInfeasible("skewed measures need a ratio s >= 1, e.g. skewed:16")
    if spec.f_kind not in FUNCTIONS:
        raise GenInfeasible(f"unknown function kind {spec.f_kind!r}")
    c, g = _split(spec.collection)
    if c not in COLLECTIONS:
        raise GenInfeasible(f"unknown collection kind {spec.collection!r}")
    if c == "random-sparse" and (g is None or not 0 < g < 1):
        raise GenInfeasible("random-sparse needs gamma in (0, 1), e.g. random-sparse:0.5")
    if not 0 < spec.lam < 0.5:
        raise GenInfeasible("lambda must lie in (0, 1/2)")


def make_masses(grid: DyadicGrid, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Row-major cell masses of the requested kind."""
    name, s = _split(kind)
    n = grid.n_cells
    if name == "uniform":
        return np.full(n, 1.0 / n)
    if name == "random":
        return rng.uniform(1.0, 4.0, size=n) / n
    if name == "atomic":
        count = max(1, int(round(n * rng.uniform(0.05, 0.35))))
        cells = rng.choice(n, size=count, replace=False)
        m = np.zeros(n)
        m[cells] = rng.uniform(0.1, 1.0, size=count)
        return m / m.sum()
    # skewed: one heavy child per split, s times each light one
    level = np.ones(1)
    for _ in range(grid.depth):
        w = np.ones((level.size, grid.branching))
        heavy = rng.integers(grid.branching, size=level.size)
        w[np.arange(level.size), heavy] = s
        w /= w.sum(axis=1, keepdims=True)
        level = (level[:, None] * w).reshape(-1)
    return grid.from_z(level)


def make_function(grid: DyadicGrid, kind: str, rng: np.random.Generator) -> np.ndarray:
    n = grid.n_cells
    if kind == "random":
        return rng.normal(size=n)
    if kind == "spike":
        f = rng.normal(scale=0.05, size=n)
        count = max(1, int(rng.integers(1, 4)))
        cells = rng.choice(n, size=min(count, n), replace=False)
        f[cells] += rng.exponential(20.0, size=cells.size) * rng.choice([-1.0, 1.0], size=cells.size)
        return f
    # haar-like: a constant plus random multiples of child-difference patterns
    fz = np.full(n, rng.normal())
    for _ in range(max(1, grid.depth * 2)):
        if grid.depth == 0:
            break
        level = int(rng.integers(grid.depth))
        code = int(rng.integers(grid.n_cubes(level)))
        block = grid.block(level + 1)
        signs = rng.choice([-1.0, 1.0], size=grid.branching)
        start = code * grid.block(level)
        fz[start : start + grid.block(level)] += rng.normal(scale=2.0) * np.repeat(signs, block)
    return grid.from_z(fz)


def _random_sparse(W: WeightedGrid, top: CubeId, gamma: float, rng: np.random.Generator) -> list[CubeId]:
    grid = W.grid
    family = [top]
    queue = [top]
    while queue:
        F = queue.pop()
        budget = gamma * W.cube_mass(F) * (1.0 - 1e-12)
        used = 0.0
        chosen = []
        stack = list(grid.children(F))
        rng.shuffle(stack)
        while stack:
            Q = stack.pop()
            m = W.cube_mass(Q)
            if rng.random() < 0.35 and used + m <= budget:
                chosen.append(Q)
                used += m
            elif Q.level < grid.depth and rng.random() < 0.85:
                kids = grid.children(Q)
                rng.shuffle(kids)
                stack.extend(kids)
        family.extend(chosen)
        queue.extend(chosen)
    return family


def make_collection(W: WeightedGrid, kind: str, top: CubeId, rng: np.random.Generator) -> list[CubeId]:
    grid = W.grid
    name, g = _split(kind)
    if name == "full-grid":
        return [Q for lv in range(top.level, grid.depth + 1) for Q in grid.descendants(top, lv - top.level)]
    if name == "nested-chain":
        chain = [top]
        stop = int(rng.integers(top.level, grid.depth + 1))
        while chain[-1].level < stop:
            kids = grid.children(chain[-1])
            chain.append(kids[int(rng.integers(len(kids)))])
        return chain
    return _random_sparse(W, top, g, rng)


def generate(spec: GenSpec) -> Instance:
    """Build the instance described by ``spec`` (same seed, same instance)."""
    _validate(spec)
    grid = DyadicGrid(spec.dimension, spec.depth)
    top_level = spec.k if spec.top_level is None else spec.top_level
    s_mass, s_func, s_coll = np.random.SeedSequence(spec.seed).spawn(3)
    rng_m = np.random.default_rng(s_mass)
    for _ in range(MAX_RETRIES):
        W = WeightedGrid(grid, make_masses(grid, spec.measure, rng_m))
        heavy = np.nonzero(W.level_mass[top_level] > 0)[0]
        if heavy.size:
            break
    else:
        raise GenInfeasible("could not draw a measure with a positive-mass top cube")
    rng_c = np.random.default_rng(s_coll)
    top = grid.from_code(top_level, int(rng_c.choice(heavy)))
    f = make_function(grid, spec.f_kind, np.random.default_rng(s_func))
    collection = make_collection(W, spec.collection, top, rng_c)
    return Instance(
        dimension=spec.dimension,
        depth=spec.depth,
        masses=W.cell_mass.copy(),
        f=f,
        collection=sorted(collection),
        k=spec.k,
        lam=spec.lam,
        meta={"gen": asdict(spec)},
    )
