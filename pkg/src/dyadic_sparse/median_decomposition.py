"""Local median oscillation decomposition for arbitrary cell measures.

Stopping rule: with ``c = m(f; parent(F))`` and ``r = r_lambda(f - c; F)``, the
children of ``F`` are the maximal positive-mass ``F' < F`` with
``|m(f; F') - c| > 3 r``.  Each family cube then carries the payload
``omega_lambda(f; F) + |m(f; F) - m(f; parent(F))|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic_core import CubeId, SparseFamily, WeightedGrid
from .errors import CubeNotInGrid, ZeroMassCube
from .median_core import check_lambda, level_medians, omega_lambda, r_lambda
from .sparse_domination import max_ratio

ROOT_RULES = ("self", "require_parent")


@dataclass(frozen=True)
class CubePayload:
    omega: float
    jump: float
    r: float
    parent_median: float


@dataclass(frozen=True)
class DecompositionCertificate:
    family: SparseFamily
    F0: CubeId
    lam: float
    root_parent_rule: str
    payload: dict[CubeId, CubePayload]
    measured_constant: float

    def parent_of(self, grid, F: CubeId) -> CubeId:
        return parent_cube(grid, F, self.root_parent_rule)

    def rhs(self, grid) -> np.ndarray:
        """``sum_F (omega(F) + jump(F)) 1_F``."""
        cubes = list(self.family.cubes)
        return grid.stack(cubes, [self.payload[F].omega + self.payload[F].jump for F in cubes])

    def to_dict(self) -> dict:
        return {
            "kind": "median_decomposition",
            "F0": self.F0.to_list(),
            "lambda": self.lam,
            "root_parent_rule": self.root_parent_rule,
            "gamma": self.family.gamma,
            "family": [
                {
                    "cube": F.to_list(),
                    "omega": self.payload[F].omega,
                    "jump": self.payload[F].jump,
                    "r": self.payload[F].r,
                    "parent_median": self.payload[F].parent_median,
                    "children": [c.to_list() for c in self.family.stopping_children[F]],
                }
                for F in self.family.cubes
            ],
            "measured_constant": self.measured_constant,
        }


def parent_cube(grid, F: CubeId, rule: str = "self") -> CubeId:
    """Dyadic parent, with the grid root standing in for its own parent."""
    if F.level == 0:
        if rule == "self":
            return F
        raise CubeNotInGrid("the root has no parent inside the grid")
    return grid.parent(F)


def build_median_decomposition(
    W: WeightedGrid, f, F0: CubeId, lam: float, root_parent_rule: str = "self"
) -> DecompositionCertificate:
    """Stopping-time construction of the median oscillation decomposition.

    The resulting family is ``2 lam``-sparse and satisfies
    ``|f - m(f, parent(F0))| <= C sum_F (omega + jump) 1_F`` on the
    positive-mass cells of ``F0`` with measured ``C <= 6``.
    """
    lam = check_lambda(lam)
    if root_parent_rule not in ROOT_RULES:
        raise ValueError(f"root_parent_rule must be one of {ROOT_RULES}")
    grid = W.grid
    grid.check(F0)
    if W.cube_mass(F0) <= 0:
        raise ZeroMassCube(f"{F0} has zero mass")
    parent_cube(grid, F0, root_parent_rule)
    f = W.values(f)
    med = level_medians(W, f)
    mass = W.level_mass
    d, depth = grid.dimension, grid.depth

    def med_of(Q: CubeId) -> float:
        return float(med[Q.level][grid.code(Q)])

    payload: dict[CubeId, CubePayload] = {}
    queue = [F0]
    while queue:
        F = queue.pop()
        c = med_of(parent_cube(grid, F, root_parent_rule))
        r = r_lambda(W, f - c, F, lam)
        omega, _ = omega_lambda(W, f, F, lam)
        payload[F] = CubePayload(omega=omega, jump=abs(med_of(F) - c), r=r, parent_median=c)
        threshold = 3.0 * r
        code = grid.code(F)
        stack = [(F.level + 1, (code << d) + j) for j in range(grid.branching)] if F.level < depth else []
        while stack:
            lv, cc = stack.pop()
            if mass[lv][cc] <= 0:
                continue
            if abs(med[lv][cc] - c) > threshold:
                queue.append(grid.from_code(lv, cc))
            elif lv < depth:
                stack.extend((lv + 1, (cc << d) + j) for j in range(grid.branching))

    family = SparseFamily.from_cubes(grid, payload, 2.0 * lam)
    cert = DecompositionCertificate(family, F0, lam, root_parent_rule, payload, 0.0)
    measured = verify_median_decomposition(W, f, cert)
    return DecompositionCertificate(family, F0, lam, root_parent_rule, payload, measured)


def decomposition_lhs(W: WeightedGrid, f, cert: DecompositionCertificate) -> np.ndarray:
    """``|f - m(f, parent(F0))| 1_{F0}`` as a cell array."""
    grid = W.grid
    c = cert.payload[cert.F0].parent_median
    out = np.zeros(grid.n_cells)
    cells = grid.cells(cert.F0)
    out[cells] = np.abs(W.values(f)[cells] - c)
    return out


def verify_median_decomposition(W: WeightedGrid, f, cert: DecompositionCertificate) -> float:
    """Measured constant of the pointwise bound (0/0 -> 0, x/0 -> inf)."""
    return max_ratio(W, decomposition_lhs(W, f, cert), cert.rhs(W.grid))
