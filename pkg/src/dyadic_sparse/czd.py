"""Calderon-Zygmund decomposition ``f = g + b + beta`` for arbitrary cell measures.

For the maximal cubes ``T`` with ``<|f|>_T > height``:

* ``b_T = (f - <f>_T) 1_T``
* ``beta^T = <f>_T 1_T - (integral_T f / mu(P \\ T)) 1_{P \\ T}`` with ``P`` the parent
  of ``T``; contributions sharing a parent are accumulated into ``beta_P``
* ``g = f 1_{Omega^c} + sum_T (integral_T f / mu(P \\ T)) 1_{P \\ T}``

The mass of ``f`` on ``T`` is moved onto the rest of the parent, which is
what keeps ``beta`` mean-zero without any doubling assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic_core import REL_TOL, CubeId, WeightedGrid, leq
from .errors import RootAboveHeight, ZeroMassCube


@dataclass(frozen=True)
class CZDecomposition:
    height: float
    stopping_cubes: tuple[CubeId, ...]
    g: np.ndarray
    b_parts: dict[CubeId, np.ndarray]
    beta_parts: dict[CubeId, np.ndarray]
    beta_contributions: dict[CubeId, np.ndarray] = field(repr=False)
    omega_set: np.ndarray = field(repr=False)

    @property
    def b(self) -> np.ndarray:
        return sum(self.b_parts.values(), np.zeros_like(self.g))

    @property
    def beta(self) -> np.ndarray:
        return sum(self.beta_parts.values(), np.zeros_like(self.g))

    def to_dict(self) -> dict:
        return {
            "kind": "czd",
            "height": self.height,
            "stopping_cubes": [T.to_list() for T in self.stopping_cubes],
            "g": self.g.tolist(),
            "b_parts": [[T.to_list(), v.tolist()] for T, v in sorted(self.b_parts.items())],
            "beta_parts": [[P.to_list(), v.tolist()] for P, v in sorted(self.beta_parts.items())],
        }


def stopping_cubes(W: WeightedGrid, f, height: float) -> list[CubeId]:
    """Maximal positive-mass cubes with ``<|f|>_T > height``."""
    grid = W.grid
    avg = W.level_averages(np.abs(W.values(f)))
    d = grid.dimension
    out = []
    stack = [(0, 0)]
    while stack:
        lv, c = stack.pop()
        if W.level_mass[lv][c] <= 0:
            continue
        if avg[lv][c] > height:
            out.append(grid.from_code(lv, c))
        elif lv < grid.depth:
            stack.extend((lv + 1, (c << d) + j) for j in range(grid.branching))
    return sorted(out)


def cz_decompose(W: WeightedGrid, f, height: float) -> CZDecomposition:
    """Decompose ``f`` at ``height``; requires ``<|f|>_root <= height``."""
    grid = W.grid
    f = W.values(f).astype(float)
    if height <= 0:
        raise ValueError("height must be positive")
    if W.total <= 0:
        raise ZeroMassCube("the root has zero mass")
    Ts = stopping_cubes(W, f, height)
    if grid.root in Ts:
        raise RootAboveHeight("<|f|>_root exceeds the height; maximal cubes would not be proper")
    omega = np.zeros(grid.n_cells, dtype=bool)
    g = f.copy()
    b_parts = {}
    contributions = {}
    beta_parts: dict[CubeId, np.ndarray] = {}
    for T in Ts:
        omega[grid.cells(T)] = True
    g[omega] = 0.0
    for T in Ts:
        P = grid.parent(T)
        in_T = grid.indicator(T)
        rest = grid.indicator(P) - in_T
        rest_mass = W.cube_mass(P) - W.cube_mass(T)
        if rest_mass <= 0:
            raise ZeroMassCube(f"parent of {T} carries no mass outside it")
        integral = W.cube_integral(f, T)
        avg = integral / W.cube_mass(T)
        b_parts[T] = (f - avg) * in_T
        transfer = integral / rest_mass
        contributions[T] = avg * in_T - transfer * rest
        beta_parts[P] = beta_parts.get(P, np.zeros(grid.n_cells)) + contributions[T]
        g = g + transfer * rest
    return CZDecomposition(height, tuple(Ts), g, b_parts, beta_parts, contributions, omega)


@dataclass
class CZReport:
    ok: bool
    violations: list[str]
    omega_mass: float
    omega_bound: float
    b_ratio: float
    beta_ratio: float
    beta_accumulated_ratio: float
    c_p: dict[float, float]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": self.violations,
            "omega_mass": self.omega_mass,
            "omega_bound": self.omega_bound,
            "b_ratio": self.b_ratio,
            "beta_ratio": self.beta_ratio,
            "beta_accumulated_ratio": self.beta_accumulated_ratio,
            "c_p": {str(p): v for p, v in self.c_p.items()},
        }


def _close(a: np.ndarray, b: np.ndarray, scale: float) -> bool:
    return bool(np.all(np.abs(a - b) <= REL_TOL * max(scale, 1e-300)))


def verify_czd_contract(W: WeightedGrid, f, dec: CZDecomposition, p_list=(2.0,)) -> CZReport:
    """Check every structural property of ``dec`` and measure the constants.

    ``c_p[p] = ||g||_p^p / (height^(p-1) ||f||_1)``.
    """
    grid = W.grid
    f = W.values(f)
    pos = W.positive
    lam = dec.height
    scale = float(np.max(np.abs(f), initial=0.0))
    norm1 = W.l1_norm(f)
    bad: list[str] = []

    total = dec.g + dec.b + dec.beta
    if not _close(total[pos], f[pos], scale):
        bad.append("reconstruction f = g + b + beta fails")

    expected = stopping_cubes(W, f, lam)
    if list(dec.stopping_cubes) != expected:
        bad.append("stopping cubes are not the maximal cubes above the height")
    for T in dec.stopping_cubes:
        P = grid.parent(T)
        bT = dec.b_parts[T]
        outside = np.ones(grid.n_cells, dtype=bool)
        outside[grid.cells(T)] = False
        if np.any(bT[outside] != 0):
            bad.append(f"b_{T} not supported in {T}")
        if abs(W.integral(bT)) > REL_TOL * max(W.l1_norm(bT), scale * W.cube_mass(T), 1e-300):
            bad.append(f"b_{T} does not have mean zero")
        con = dec.beta_contributions[T]
        in_T = grid.cells(T)
        rest = np.setdiff1d(grid.cells(P), in_T)
        for region in (in_T, rest):
            vals = con[region]
            if vals.size and np.ptp(vals) > REL_TOL * max(np.max(np.abs(vals)), 1e-300):
                bad.append(f"beta contribution of {T} not constant on a region")
    for P, bP in dec.beta_parts.items():
        outside = np.ones(grid.n_cells, dtype=bool)
        outside[grid.cells(P)] = False
        if np.any(bP[outside] != 0):
            bad.append(f"beta_{P} not supported in {P}")
        if abs(W.integral(bP)) > REL_TOL * max(W.l1_norm(bP), scale * W.cube_mass(P), 1e-300):
            bad.append(f"beta_{P} does not have mean zero")

    omega_mass = float(W.cell_mass[dec.omega_set].sum())
    omega_bound = norm1 / lam
    if not leq(omega_mass, omega_bound):
        bad.append("mu(Omega) exceeds ||f||_1 / height")
    off = pos & ~dec.omega_set
    if np.any(np.abs(f[off]) > lam * (1 + REL_TOL)):
        bad.append("|f| exceeds the height off Omega")

    b_mass = sum(W.l1_norm(v) for v in dec.b_parts.values())
    beta_mass = sum(W.l1_norm(v) for v in dec.beta_contributions.values())
    beta_acc = sum(W.l1_norm(v) for v in dec.beta_parts.values())
    denom = norm1 if norm1 > 0 else 1.0
    if not leq(b_mass, 2 * norm1):
        bad.append("sum ||b_T||_1 exceeds 2 ||f||_1")
    if not leq(beta_mass, 2 * norm1):
        bad.append("sum ||beta^T||_1 exceeds 2 ||f||_1")

    c_p = {}
    for p in p_list:
        p = float(p)
        num = float(np.dot(np.abs(dec.g) ** p, W.cell_mass))
        c_p[p] = num / (lam ** (p - 1) * norm1) if norm1 > 0 else 0.0
    return CZReport(
        ok=not bad,
        violations=bad,
        omega_mass=omega_mass,
        omega_bound=omega_bound,
        b_ratio=b_mass / denom,
        beta_ratio=beta_mass / denom,
        beta_accumulated_ratio=beta_acc / denom,
        c_p=c_p,
    )
