"""Medians, relative median oscillation and median oscillation on cubes.

Everything is an exact selection from the finite set of cell values of the
cube, so no interpolation or bisection is involved.  Zero-mass cells carry no
weight and never decide a selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic_core import CubeId, WeightedGrid
from .errors import BadLambda, ZeroMassCube


@dataclass(frozen=True)
class MedianConfig:
    lam: float
    median_rule: str = "minimal"

    def __post_init__(self):
        check_lambda(self.lam)
        if self.median_rule != "minimal":
            raise ValueError(f"unknown median rule {self.median_rule!r}")


def check_lambda(lam: float) -> float:
    if not 0 < lam < 0.5:
        raise BadLambda(f"lambda must lie in (0, 1/2), got {lam}")
    return float(lam)


def _cube(W: WeightedGrid, f, Q: CubeId) -> tuple[np.ndarray, np.ndarray, float]:
    vals, masses = W.cube_values(f, Q)
    keep = masses > 0
    vals, masses = vals[keep], masses[keep]
    if vals.size == 0:
        raise ZeroMassCube(f"{Q} has zero mass")
    order = np.argsort(vals, kind="stable")
    vals, masses = vals[order], masses[order]
    return vals, masses, float(masses.sum())


def _minimal_median_rows(vals: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Row-wise minimal median of sorted value rows.

    The first position whose strict upper tail ``total - cumsum`` is at most
    half the total; inside a run of ties the tail is overestimated at all but
    the last position, which only delays the hit to a position with the same
    value.
    """
    cum = np.cumsum(masses, axis=-1)
    total = cum[..., -1:]
    hit = (total - cum) <= 0.5 * total
    j = hit.argmax(axis=-1)
    return np.take_along_axis(vals, j[..., None], axis=-1)[..., 0]


def median(W: WeightedGrid, f, Q: CubeId) -> float:
    """The minimal median of ``f`` on ``Q``."""
    vals, masses, _ = _cube(W, f, Q)
    return float(_minimal_median_rows(vals, masses))


def median_interval(W: WeightedGrid, f, Q: CubeId) -> tuple[float, float]:
    """Endpoints of the closed interval of all medians of ``f`` on ``Q``."""
    vals, masses, total = _cube(W, f, Q)
    lo = float(_minimal_median_rows(vals, masses))
    # the maximal median is minus the minimal median of -f
    hi = -float(_minimal_median_rows(-vals[::-1], masses[::-1]))
    return lo, hi


def level_medians(W: WeightedGrid, f) -> list[np.ndarray]:
    """Minimal medians of ``f`` on every cube, per level in Morton order.

    NaN on zero-mass cubes.
    """
    grid = W.grid
    fz = grid.to_z(W.values(f))
    out = []
    for level in range(grid.depth + 1):
        v = fz.reshape(grid.n_cubes(level), -1)
        m = W.mass_z.reshape(grid.n_cubes(level), -1)
        order = np.argsort(v, axis=1, kind="stable")
        sv = np.take_along_axis(v, order, axis=1)
        sm = np.take_along_axis(m, order, axis=1)
        med = _minimal_median_rows(sv, sm)
        out.append(np.where(W.level_mass[level] > 0, med, np.nan))
    return out


def _r_from_abs(a: np.ndarray, masses: np.ndarray, total: float, lam: float) -> float:
    # a: absolute values sorted increasingly, positive masses
    cum = np.cumsum(masses)
    tail = total - cum  # mass strictly above a[j], up to ties
    if total - masses[a == 0].sum() <= lam * total:
        return 0.0
    j = int(np.argmax(tail <= lam * total))
    return float(a[j])


def r_lambda(W: WeightedGrid, f, Q: CubeId, lam: float) -> float:
    """``min {r >= 0 : mu(Q & {|f| > r}) <= lam mu(Q)}``."""
    check_lambda(lam)
    vals, masses, total = _cube(W, f, Q)
    a = np.abs(vals)
    order = np.argsort(a, kind="stable")
    return _r_from_abs(a[order], masses[order], total, lam)


def r_lambda_about(W: WeightedGrid, f, Q: CubeId, lam: float, c: float) -> float:
    """``r_lambda(f - c; Q)``."""
    return r_lambda(W, W.values(f) - c, Q, lam)


def omega_lambda(W: WeightedGrid, f, Q: CubeId, lam: float) -> tuple[float, float]:
    """Median oscillation ``inf_c r_lambda(f - c; Q)`` and a minimizing ``c``.

    ``r_lambda(f - c) <= r`` iff ``[c - r, c + r]`` captures at least
    ``(1 - lam) mu(Q)``, so the answer is half the length of the shortest
    such interval with endpoints among the cell values.  One sliding-window
    pass over the sorted distinct values finds it.
    """
    check_lambda(lam)
    vals, masses, total = _cube(W, f, Q)
    u, inv = np.unique(vals, return_inverse=True)
    w = np.bincount(inv, weights=masses, minlength=u.size)
    before = np.concatenate([[0.0], np.cumsum(w)[:-1]])  # mass strictly left of u[i]
    upto = np.cumsum(w)  # mass of values <= u[j]
    budget = lam * total
    best, best_pair = np.inf, (u[0], u[0])
    j = 0
    for i in range(u.size):
        if j < i:
            j = i
        # advance the right end until the mass outside [u[i], u[j]] fits the budget
        while j < u.size - 1 and before[i] + (total - upto[j]) > budget:
            j += 1
        if before[i] + (total - upto[j]) > budget:
            break
        length = u[j] - u[i]
        if length < best:
            best, best_pair = length, (u[i], u[j])
    a, b = best_pair
    return float(best / 2.0), float((a + b) / 2.0)
