"""Sparse pointwise domination of complexity-k operators by complexity-zero sums.

Starting from a top cube, the stopping children of a family cube ``F`` are the
maximal positive-mass ``F' < F`` on which either

(a) the partial sum ``sum_{F'^(k) <= Q <= F} <f>_Q eta_Q`` (constant on ``F'``)
    exceeds ``tau1 * <f>_F``, or
(b) ``<f>_{F'} > tau2 * <f>_F``.

Along a descent the partial sum gains one term per cube ``F'`` that belongs to
the collection, namely ``<f>_{F'^(k)}``, provided ``F'^(k)`` still lies inside
``F``; that is what the search below accumulates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic_core import CubeId, SparseFamily, WeightedGrid
from .errors import CubeNotInGrid, NoMaximalCube, NotNonnegative, ZeroMassCube
from .positive_operators import PositiveOperator, ProbePolicy, estimate_weak_norm


@dataclass(frozen=True)
class DominationConfig:
    """Knobs of :func:`build_sparse_domination`.

    ``tau1`` overrides the initial weak-type threshold (default: four times
    the probe estimate of the weak norm).  ``top`` overrides the starting
    cube, which then only has to contain every ``S^(k)``.  ``estimate``
    reuses a previously computed weak-norm estimate.
    """

    probes: ProbePolicy = field(default_factory=lambda: ProbePolicy(seed=0))
    tau1: float | None = None
    tau2: float = 4.0
    top: CubeId | None = None
    estimate: float | None = None


@dataclass(frozen=True)
class DominationCertificate:
    family: SparseFamily
    k: int
    tau1: float
    tau2: float
    cert_constant: float
    measured_constant: float
    adaptation_rounds: int
    weak_estimate: float
    top: CubeId

    def to_dict(self) -> dict:
        return {
            "kind": "domination",
            "k": self.k,
            "top": self.top.to_list(),
            "family": [Q.to_list() for Q in self.family.cubes],
            "gamma": self.family.gamma,
            "stopping_children": [
                [F.to_list(), [c.to_list() for c in ch]]
                for F, ch in sorted(self.family.stopping_children.items())
            ],
            "tau1": self.tau1,
            "tau2": self.tau2,
            "cert_constant": self.cert_constant,
            "measured_constant": self.measured_constant,
            "adaptation_rounds": self.adaptation_rounds,
            "weak_estimate": self.weak_estimate,
        }


def maximal_cube(op: PositiveOperator) -> CubeId:
    """The cube of the collection containing every other one."""
    if not op.cubes:
        raise NoMaximalCube("empty collection")
    top_level = min(S.level for S in op.cubes)
    tops = [S for S in op.cubes if S.level == top_level]
    if len(tops) == 1 and all(op.grid.contains(tops[0], S) for S in op.cubes):
        return tops[0]
    raise NoMaximalCube("no cube of the collection contains all the others")


def max_ratio(W: WeightedGrid, lhs: np.ndarray, rhs: np.ndarray) -> float:
    """``max lhs/rhs`` over positive-mass cells; 0/0 -> 0, x/0 -> inf."""
    pos = W.positive
    lhs = np.asarray(lhs, dtype=float)[pos]
    rhs = np.asarray(rhs, dtype=float)[pos]
    if np.any((rhs <= 0) & (lhs > 0)):
        return float("inf")
    ok = rhs > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(lhs[ok] / rhs[ok], initial=0.0))


def sparse_sum(W: WeightedGrid, cubes, f) -> np.ndarray:
    """``sum_T <f>_T 1_T`` (zero-mass cubes contribute nothing)."""
    cubes = list(cubes)
    weights = [W.average(f, T) if W.cube_mass(T) > 0 else 0.0 for T in cubes]
    return W.grid.stack(cubes, weights)


def verify_pointwise_domination(W: WeightedGrid, lhs, family: SparseFamily, f) -> float:
    """Smallest ``C`` with ``lhs <= C sum_T <f>_T 1_T`` on positive-mass cells."""
    f = W.values(f)
    if np.any(f < 0):
        raise NotNonnegative("the dominating sum uses averages of a nonnegative f")
    return max_ratio(W, lhs, sparse_sum(W, family.cubes, f))


class _Stopper:
    def __init__(self, op: PositiveOperator, W: WeightedGrid, f: np.ndarray, tau2: float):
        self.grid = op.grid
        self.k = op.k
        self.mass = W.level_mass
        self.avg = W.level_averages(f)
        self.tau2 = tau2
        coef = op.coefficients(W, f)
        self.coef = {(S.level, self.grid.code(S)): float(c) for S, c in zip(op.cubes, coef)}

    def children(self, level: int, code: int, tau1: float) -> list[tuple[int, int]]:
        grid, k = self.grid, self.k
        depth, d = grid.depth, grid.dimension
        avg_f = self.avg[level][code]
        start = self.coef.get((level, code), 0.0) if k == 0 else 0.0
        stops = []
        if level == depth:
            return stops
        stack = [(level + 1, (code << d) + j, start) for j in range(grid.branching - 1, -1, -1)]
        while stack:
            lv, c, partial = stack.pop()
            if self.mass[lv][c] <= 0:
                continue
            if lv - k >= level:
                partial += self.coef.get((lv, c), 0.0)
            if partial > tau1 * avg_f or self.avg[lv][c] > self.tau2 * avg_f:
                stops.append((lv, c))
            elif lv < depth:
                base = c << d
                stack.extend((lv + 1, base + j, partial) for j in range(grid.branching - 1, -1, -1))
        return stops


def build_sparse_domination(
    op: PositiveOperator, W: WeightedGrid, f, config: DominationConfig | None = None
) -> DominationCertificate:
    """Construct a 1/2-sparse family ``T`` with ``A_k f <= C sum_T <f>_T 1_T``.

    ``C = tau1 + tau2 * k`` where ``tau1`` is the final weak-type threshold.
    Whenever the children of a cube would carry more than half its mass the
    threshold is doubled and those children are recomputed.
    """
    config = config or DominationConfig()
    grid = op.grid
    f = W.values(f)
    if np.any(f < 0):
        raise NotNonnegative("domination is built for nonnegative f; pass |f|")
    if config.top is None:
        F0 = maximal_cube(op)
        if W.cube_mass(F0) <= 0:
            raise ZeroMassCube(f"maximal cube {F0} has zero mass")
        top = grid.ancestor(F0, op.k)
    else:
        top = grid.check(config.top)
        if not all(grid.contains(top, A) for A in op.top_ancestors()):
            raise CubeNotInGrid(f"{top} does not contain every S^(k)")
    if W.cube_mass(top) <= 0:
        raise ZeroMassCube(f"top cube {top} has zero mass")

    estimate = estimate_weak_norm(op, W, config.probes) if config.estimate is None else config.estimate
    tau1 = 4.0 * estimate if config.tau1 is None else float(config.tau1)
    stopper = _Stopper(op, W, f, config.tau2)
    rounds = 0
    queue = [(top.level, grid.code(top))]
    family = []
    while queue:
        level, code = queue.pop()
        family.append((level, code))
        mass = W.level_mass[level][code]
        while True:
            ch = stopper.children(level, code, tau1)
            if sum(W.level_mass[lv][c] for lv, c in ch) <= 0.5 * mass:
                break
            rounds += 1
            tau1 = 2.0 * tau1 if tau1 > 0 else 1.0
        queue.extend(ch)

    cubes = [grid.from_code(lv, c) for lv, c in family]
    fam = SparseFamily.from_cubes(grid, cubes, 0.5)
    measured = verify_pointwise_domination(W, op.apply(W, f), fam, f)
    return DominationCertificate(
        family=fam,
        k=op.k,
        tau1=tau1,
        tau2=config.tau2,
        cert_constant=tau1 + config.tau2 * op.k,
        measured_constant=measured,
        adaptation_rounds=rounds,
        weak_estimate=estimate,
        top=top,
    )
