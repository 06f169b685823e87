"""Martingale transforms, dyadic BMO and John-Nirenberg profiles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dyadic_core import CubeId, DyadicGrid, SparseFamily, WeightedGrid, leq
from .errors import CoefficientOutOfRange, ZeroBmoNorm, ZeroMassCube
from .median_core import check_lambda, median, r_lambda
from .median_decomposition import (
    DecompositionCertificate,
    build_median_decomposition,
    decomposition_lhs,
    parent_cube,
)
from .positive_operators import (
    PositiveOperator,
    ProbePolicy,
    _batches,
    point_mass_probes_z,
    random_probes_z,
    weak_norms,
)
from .sparse_domination import (
    DominationCertificate,
    DominationConfig,
    build_sparse_domination,
    max_ratio,
)


class TransformCoefficients:
    """Coefficients ``eps_Q`` in ``[-1, 1]`` on the non-leaf cubes.

    Stored per level as Morton-indexed arrays; cubes absent from a mapping
    get coefficient 0.
    """

    def __init__(self, grid: DyadicGrid, levels):
        levels = [np.array(a, dtype=float) for a in levels]
        if len(levels) != grid.depth:
            raise ValueError(f"expected {grid.depth} coefficient levels, got {len(levels)}")
        for lv, a in enumerate(levels):
            if a.shape != (grid.n_cubes(lv),):
                raise ValueError(f"level {lv} needs {grid.n_cubes(lv)} coefficients")
            if not np.all(np.isfinite(a)) or np.any(np.abs(a) > 1):
                raise CoefficientOutOfRange("martingale coefficients must satisfy |eps_Q| <= 1")
            a.flags.writeable = False
        self.grid = grid
        self.levels = levels

    @classmethod
    def from_mapping(cls, grid: DyadicGrid, eps: Mapping[CubeId, float]) -> "TransformCoefficients":
        levels = [np.zeros(grid.n_cubes(lv)) for lv in range(grid.depth)]
        for Q, v in eps.items():
            grid.check(Q)
            if Q.level >= grid.depth:
                raise ValueError(f"{Q} is a leaf; D_Q is only defined on non-leaf cubes")
            if abs(v) > 1:
                raise CoefficientOutOfRange(f"|eps_{Q}| = {abs(v)} exceeds 1")
            levels[Q.level][grid.code(Q)] = v
        return cls(grid, levels)

    @classmethod
    def constant(cls, grid: DyadicGrid, value: float) -> "TransformCoefficients":
        return cls(grid, [np.full(grid.n_cubes(lv), float(value)) for lv in range(grid.depth)])

    @classmethod
    def random(cls, grid: DyadicGrid, rng: np.random.Generator, choices=(-1.0, 0.0, 1.0)):
        return cls(grid, [rng.choice(choices, size=grid.n_cubes(lv)) for lv in range(grid.depth)])

    def __getitem__(self, Q: CubeId) -> float:
        return float(self.levels[Q.level][self.grid.code(Q)])

    def to_mapping(self) -> dict[CubeId, float]:
        return {
            self.grid.from_code(lv, c): float(v)
            for lv, a in enumerate(self.levels)
            for c, v in enumerate(a)
        }

    def to_list(self) -> list:
        return [[Q.to_list(), v] for Q, v in sorted(self.to_mapping().items())]


def _differences_z(W: WeightedGrid, F_z: np.ndarray, level: int, avgs=None) -> np.ndarray:
    """``D_Q f`` for all cubes ``Q`` of ``level`` at once (Morton rows)."""
    grid = W.grid
    if avgs is None:
        sums = grid.level_sums(F_z * W.mass_z)
        avgs = _safe_averages(W, sums)
    parent = avgs[level]
    child = avgs[level + 1]
    child_from_parent = np.repeat(parent, grid.branching, axis=-1)
    # zero-mass children (and children of zero-mass cubes) contribute nothing
    child = np.where(W.level_mass[level + 1] > 0, child, child_from_parent)
    diff = np.where(W.level_mass[level + 1] > 0, child - child_from_parent, 0.0)
    return np.repeat(diff, grid.block(level + 1), axis=-1)


def _safe_averages(W: WeightedGrid, sums: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for s, m in zip(sums, W.level_mass):
        out.append(np.where(m > 0, s / np.where(m > 0, m, 1.0), 0.0))
    return out


def martingale_difference(W: WeightedGrid, f, Q: CubeId) -> np.ndarray:
    """``D_Q f = sum_{children Q'} <f>_{Q'} 1_{Q'} - <f>_Q 1_Q``."""
    grid = W.grid
    grid.check(Q)
    if Q.level >= grid.depth:
        raise ValueError(f"{Q} is a leaf")
    if W.cube_mass(Q) <= 0:
        raise ZeroMassCube(f"{Q} has zero mass")
    fz = grid.to_z(W.values(f))[None, :]
    full = _differences_z(W, fz, Q.level)[0]
    a, b = grid.span(Q)
    out = np.zeros(grid.n_cells)
    out[a:b] = full[a:b]
    return grid.from_z(out)


def transform_z(W: WeightedGrid, F_z: np.ndarray, eps: TransformCoefficients) -> np.ndarray:
    """Batch ``T f = sum_Q eps_Q D_Q f`` on Morton rows."""
    grid = W.grid
    F_z = np.atleast_2d(np.asarray(F_z, dtype=float))
    avgs = _safe_averages(W, grid.level_sums(F_z * W.mass_z))
    out = np.zeros_like(F_z)
    for level in range(grid.depth):
        e = np.repeat(eps.levels[level], grid.block(level))
        if not np.any(e):
            continue
        out += e * _differences_z(W, F_z, level, avgs)
    return out


def martingale_transform(W: WeightedGrid, f, eps: TransformCoefficients) -> np.ndarray:
    """``T f`` as a row-major cell array."""
    grid = W.grid
    return grid.from_z(transform_z(W, grid.to_z(W.values(f))[None, :], eps)[0])


def transform_matrix(W: WeightedGrid, eps: TransformCoefficients) -> np.ndarray:
    """Matrix of ``T`` in row-major cell coordinates (``(T f) = M @ f``)."""
    grid = W.grid
    basis = np.eye(grid.n_cells)
    return grid.from_z(transform_z(W, grid.to_z(basis), eps)).T


def estimate_transform_weak_norm(W: WeightedGrid, eps: TransformCoefficients, probes: ProbePolicy) -> float:
    """Probe lower bound for ``||T||_{L^1 -> L^{1,oo}}`` (point masses + random)."""
    grid = W.grid
    best = 0.0
    cells = point_mass_probes_z(W, grid.depth)
    for a, b in _batches(len(cells), grid.n_cells):
        F = np.zeros((b - a, grid.n_cells))
        F[np.arange(b - a), cells[a:b]] = 1.0 / W.mass_z[cells[a:b]]
        best = max(best, float(weak_norms(W.mass_z, transform_z(W, F, eps)).max(initial=0.0)))
    rng = np.random.default_rng(probes.seed)
    R = random_probes_z(W, probes.random_count, rng)
    signs = rng.choice([-1.0, 1.0], size=R.shape)
    R = R * signs
    for a, b in _batches(len(R), grid.n_cells):
        best = max(best, float(weak_norms(W.mass_z, transform_z(W, R[a:b], eps)).max(initial=0.0)))
    return best


def dense_transform_weak_norm(
    W: WeightedGrid, eps: TransformCoefficients, rng: np.random.Generator | None = None, n_random: int = 2000
) -> float:
    """Dense search for ``||T||_{L^1 -> L^{1,oo}}`` on small grids.

    Searches every sign pattern ``{-1, 0, 1}`` on the positive-mass cells
    (normalized in L1), point masses included, plus random signed densities.
    Still a lower bound, but a tight one on grids of at most 8 cells.
    """
    grid = W.grid
    pos = np.nonzero(W.positive)[0]
    if pos.size > 10:
        raise ValueError("dense search is meant for grids with at most 10 positive cells")
    M = transform_matrix(W, eps)
    pats = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=pos.size)))
    pats = pats[np.any(pats != 0, axis=1)]
    F = np.zeros((len(pats), grid.n_cells))
    F[:, pos] = pats
    rng = rng or np.random.default_rng(0)
    R = np.zeros((n_random, grid.n_cells))
    R[:, pos] = rng.dirichlet(np.ones(pos.size) * 0.5, size=n_random) * rng.choice([-1.0, 1.0], size=(n_random, pos.size))
    F = np.vstack([F, R])
    F /= (np.abs(F) @ W.cell_mass)[:, None]
    return float(weak_norms(W.cell_mass, F @ M.T).max(initial=0.0))


# -- domination of martingale transforms ------------------------------------


@dataclass(frozen=True)
class MartingaleCertificate:
    decomposition: DecompositionCertificate
    weak_estimate: float
    c1: float
    c1_factor: float
    complexity_one: DominationCertificate | None
    final_family: SparseFamily
    final_constant: float
    final_bound: float
    final_gamma: float

    def to_dict(self) -> dict:
        return {
            "kind": "martingale",
            "F0": self.decomposition.F0.to_list(),
            "lambda": self.decomposition.lam,
            "decomposition_family": [F.to_list() for F in self.decomposition.family.cubes],
            "weak_estimate": self.weak_estimate,
            "c1": self.c1,
            "c1_factor": self.c1_factor,
            "complexity_one": None if self.complexity_one is None else self.complexity_one.to_dict(),
            "final_family": [F.to_list() for F in self.final_family.cubes],
            "final_gamma": self.final_gamma,
            "final_constant": self.final_constant,
            "final_bound": self.final_bound,
        }


def _avg_or_zero(W: WeightedGrid, f, Q: CubeId) -> float:
    return W.average(f, Q) if W.cube_mass(Q) > 0 else 0.0


def dominate_martingale_transform(
    W: WeightedGrid,
    f,
    eps: TransformCoefficients,
    F0: CubeId,
    lam: float,
    probes: ProbePolicy | None = None,
) -> MartingaleCertificate:
    """Bound ``|T f| 1_{F0}`` by a zero-complexity sparse sum of ``<|f|>``.

    Pipeline: median decomposition of ``T f`` on ``F0`` gives a family ``F``
    with ``|Tf| <= C1 sum_F (<|f|>_F + <|f|>_{parent F}) 1_F``; the parent
    term is the complexity-one operator on ``F`` and is reduced to complexity
    zero by :func:`build_sparse_domination`.
    """
    grid = W.grid
    probes = probes or ProbePolicy(seed=0)
    f = W.values(f)
    absf = np.abs(f)
    Tf = martingale_transform(W, f, eps)
    dec = build_median_decomposition(W, Tf, F0, lam)
    fam = dec.family

    lhs = np.zeros(grid.n_cells)
    cells = grid.cells(F0)
    lhs[cells] = np.abs(Tf[cells])
    weights = [
        _avg_or_zero(W, absf, F) + _avg_or_zero(W, absf, parent_cube(grid, F)) for F in fam.cubes
    ]
    c1 = max_ratio(W, lhs, grid.stack(fam.cubes, weights))
    estimate = estimate_transform_weak_norm(W, eps, probes)

    inner = [F for F in fam.cubes if F.level >= 1]
    dom = None
    bound = c1
    final_cubes = set(fam.cubes)
    if inner:
        op = PositiveOperator(grid, inner, 1)
        top = grid.parent(F0) if F0.level >= 1 else grid.root
        dom = build_sparse_domination(op, W, absf, DominationConfig(probes=probes, top=top))
        final_cubes |= set(dom.family.cubes)
        # sum_F <|f|>_F 1_F + A_1|f| + (root term), each below the union sum
        bound = c1 * (1.0 + dom.cert_constant + (1.0 if grid.root in fam else 0.0))
    else:
        bound = c1 * 2.0
    final = SparseFamily.from_cubes(grid, final_cubes, 0.5)
    final_gamma = max(
        (
            sum(W.cube_mass(c) for c in ch) / W.cube_mass(F)
            for F, ch in final.stopping_children.items()
            if W.cube_mass(F) > 0
        ),
        default=0.0,
    )
    final = SparseFamily(final.cubes, final_gamma, final.stopping_children)
    final_rhs = grid.stack(final.cubes, [_avg_or_zero(W, absf, F) for F in final.cubes])
    final_constant = max_ratio(W, lhs, final_rhs)
    return MartingaleCertificate(
        decomposition=dec,
        weak_estimate=estimate,
        c1=c1,
        c1_factor=c1 / (estimate + 1.0),
        complexity_one=dom,
        final_family=final,
        final_constant=final_constant,
        final_bound=bound,
        final_gamma=final_gamma,
    )


@dataclass(frozen=True)
class OscillationReport:
    lhs: float
    rhs: float
    norm_constant: float
    ratio: float

    @property
    def holds(self) -> bool:
        return leq(self.lhs, self.rhs, atol=1e-9)


def oscillation_estimate_check(
    W: WeightedGrid, f, eps: TransformCoefficients, R: CubeId, lam: float, norm_constant: float
) -> OscillationReport:
    """Compare ``r_lambda(Tf - m(Tf; parent R); R)`` with
    ``(C + 1)(<|f|>_R + <|f|>_{parent R})`` for a supplied norm constant ``C``."""
    check_lambda(lam)
    grid = W.grid
    P = parent_cube(grid, R)
    if W.cube_mass(R) <= 0 or W.cube_mass(P) <= 0:
        raise ZeroMassCube(f"{R} or its parent has zero mass")
    Tf = martingale_transform(W, f, eps)
    m = median(W, Tf, P)
    lhs = r_lambda(W, Tf - m, R, lam)
    absf = np.abs(W.values(f))
    rhs = (norm_constant + 1.0) * (W.average(absf, R) + W.average(absf, P))
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
    return OscillationReport(lhs, rhs, norm_constant, ratio)


# -- BMO and John-Nirenberg ---------------------------------------------------


def bmo_norm(W: WeightedGrid, f) -> tuple[float, CubeId]:
    """``sup_Q (1/mu(Q)) integral_Q |f - <f>_{parent Q}|`` and a cube attaining it.

    The root is compared with its own average.
    """
    grid = W.grid
    f = W.values(f)
    fz = grid.to_z(f)
    avgs = _safe_averages(W, grid.level_sums(fz * W.mass_z))
    best, witness = 0.0, grid.root
    for level in range(grid.depth + 1):
        pa = avgs[max(level - 1, 0)]
        ref = np.repeat(pa, grid.branching if level > 0 else 1)
        ref_cells = np.repeat(ref, grid.block(level))
        dev = grid.level_sums(np.abs(fz - ref_cells) * W.mass_z)[level]
        m = W.level_mass[level]
        vals = np.where(m > 0, dev / np.where(m > 0, m, 1.0), 0.0)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, witness = float(vals[j]), grid.from_code(level, j)
    return best, witness


@dataclass
class JNReport:
    bmo_norm: float
    witness: CubeId
    generation_masses: list[float]
    generation_bounds: list[float]
    decay_ok: bool
    fitted_base: float
    c_param: float
    exp_moment: float
    fitted_c: float
    composite_constant: float
    composite_ratio: float
    family: SparseFamily = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": "jn",
            "bmo_norm": self.bmo_norm,
            "witness": self.witness.to_list(),
            "family": [F.to_list() for F in self.family.cubes],
            "gamma": self.family.gamma,
            "generation_masses": self.generation_masses,
            "generation_bounds": self.generation_bounds,
            "decay_ok": self.decay_ok,
            "fitted_base": self.fitted_base,
            "c_param": self.c_param,
            "exp_moment": self.exp_moment,
            "fitted_c": self.fitted_c,
            "composite_constant": self.composite_constant,
            "composite_ratio": self.composite_ratio,
        }


#: candidate exponents for the fitted John-Nirenberg parameter
C_GRID = tuple(2.0 ** (-j / 2) for j in range(-8, 41))


def exponential_moment(W: WeightedGrid, f, Q: CubeId, c: float, norm: float) -> float:
    """``(1/mu(Q)) integral_Q exp(c |f - <f>_{parent Q}| / norm)``."""
    grid = W.grid
    f = W.values(f)
    ref = W.average(f, parent_cube(grid, Q))
    vals, masses = W.cube_values(f, Q)
    with np.errstate(over="ignore"):
        e = np.exp(c * np.abs(vals - ref) / norm)
    return float(np.dot(e, masses) / masses.sum())


def jn_profile(
    W: WeightedGrid, f, Q: CubeId, lam: float, c_param: float, cap: float = 10.0
) -> JNReport:
    """Generation masses of the median decomposition of ``f`` on ``Q`` and
    exponential integrability of ``f`` relative to its BMO norm."""
    grid = W.grid
    lam = check_lambda(lam)
    norm, witness = bmo_norm(W, f)
    if norm <= 0:
        raise ZeroBmoNorm("f has zero dyadic BMO norm")
    dec = build_median_decomposition(W, f, Q, lam)
    fam = dec.family
    muQ = W.cube_mass(Q)
    masses = [float(sum(W.cube_mass(F) for F in gen)) for gen in fam.generations()]
    base = 2.0 * lam
    bounds = [base**j * muQ for j in range(len(masses))]
    decay_ok = all(leq(m, b) for m, b in zip(masses, bounds))
    ratios = [masses[j] / masses[j - 1] for j in range(1, len(masses)) if masses[j - 1] > 0]
    fitted_base = max(ratios, default=0.0)
    moment = exponential_moment(W, f, Q, c_param, norm)
    fitted = 0.0
    for c in sorted(C_GRID):
        if exponential_moment(W, f, Q, c, norm) <= cap:
            fitted = c
        else:
            break
    counts = fam.count(grid)
    # each payload is at most (10 / lam) ||f||_BMO, and the decomposition constant is at most 6
    composite = 6.0 * 10.0 / lam
    lhs = decomposition_lhs(W, f, dec)
    ratio = max_ratio(W, lhs, norm * counts)
    return JNReport(
        bmo_norm=norm,
        witness=witness,
        generation_masses=masses,
        generation_bounds=bounds,
        decay_ok=decay_ok,
        fitted_base=fitted_base,
        c_param=c_param,
        exp_moment=moment,
        fitted_c=fitted,
        composite_constant=composite,
        composite_ratio=ratio,
        family=fam,
        counts=counts,
    )
