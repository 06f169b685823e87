"""Independent re-checking of certificate files.

Nothing here calls the construction code: averages, medians, oscillations,
operators and transforms are recomputed by direct loops over cubes, using only
the grid, the measure and :func:`verify_sparse` from :mod:`dyadic_core`.
Every check returns a list of human-readable failures (empty means valid).
"""

from __future__ import annotations

import math

import numpy as np

from .dyadic_core import REL_TOL, CubeId, WeightedGrid, family_children, leq, verify_sparse
from .instance import Instance

RECORD_TOL = 1e-9


def _close(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= RECORD_TOL * max(abs(a), abs(b), 1.0)


def _cubes(items) -> list[CubeId]:
    return [CubeId.from_list(q) for q in items]


# -- naive primitives ----------------------------------------------------------


def _restrict(W: WeightedGrid, f, Q: CubeId):
    cells = W.grid.cells(Q)
    m = W.cell_mass[cells]
    keep = m > 0
    return np.asarray(f, dtype=float)[cells][keep], m[keep]


def naive_average(W: WeightedGrid, f, Q: CubeId) -> float:
    vals, m = _restrict(W, f, Q)
    return float(np.dot(vals, m) / m.sum()) if m.size else 0.0


def naive_median(vals, masses) -> float:
    half = 0.5 * masses.sum()
    for v in np.unique(vals):
        if masses[vals > v].sum() <= half:
            return float(v)
    raise AssertionError("unreachable: the largest value is always a median")


def naive_r(vals, masses, lam: float) -> float:
    a = np.abs(vals)
    bound = lam * masses.sum()
    if masses[a > 0].sum() <= bound:
        return 0.0
    for v in np.unique(a):
        if masses[a > v].sum() <= bound:
            return float(v)
    raise AssertionError("unreachable")


def naive_omega(vals, masses, lam: float) -> float:
    """Half the shortest ``[a, b]`` holding all but ``lam`` of the mass, by pairs."""
    u = np.unique(vals)
    bound = lam * masses.sum()
    best = math.inf
    for i, a in enumerate(u):
        for b in u[i:]:
            if masses[(vals < a) | (vals > b)].sum() <= bound:
                best = min(best, 0.5 * (b - a))
                break
    return float(best)


def naive_apply(W: WeightedGrid, collection, k: int, f) -> np.ndarray:
    grid = W.grid
    out = np.zeros(grid.n_cells)
    for S in collection:
        A = grid.ancestor(S, k)
        if W.cube_mass(A) > 0:
            out[grid.cells(S)] += naive_average(W, f, A)
    return out


def naive_sparse_sum(W: WeightedGrid, cubes, f, weight=None) -> np.ndarray:
    grid = W.grid
    out = np.zeros(grid.n_cells)
    for T in cubes:
        if W.cube_mass(T) > 0:
            out[grid.cells(T)] += naive_average(W, f, T) if weight is None else weight(T)
    return out


def naive_ratio(W: WeightedGrid, lhs, rhs) -> float:
    best = 0.0
    for x in np.nonzero(W.cell_mass > 0)[0]:
        if lhs[x] > 0 and rhs[x] <= 0:
            return math.inf
        if rhs[x] > 0:
            best = max(best, lhs[x] / rhs[x])
    return float(best)


def naive_transform(W: WeightedGrid, f, eps: dict[CubeId, float]) -> np.ndarray:
    grid = W.grid
    out = np.zeros(grid.n_cells)
    for Q, e in eps.items():
        if e == 0 or Q.level >= grid.depth or W.cube_mass(Q) <= 0:
            continue
        base = naive_average(W, f, Q)
        for C in grid.children(Q):
            if W.cube_mass(C) > 0:
                out[grid.cells(C)] += e * (naive_average(W, f, C) - base)
    return out


def _parent(grid, F: CubeId) -> CubeId:
    return F if F.level == 0 else grid.parent(F)


# -- per-kind checks --------------------------------------------------------------


def _check_structure(W: WeightedGrid, family, gamma: float, recorded_children, bad: list[str]):
    ok, report = verify_sparse(W, family, gamma)
    if not ok:
        worst = max(report, key=lambda r: r.ratio)
        bad.append(f"family is not {gamma}-sparse (worst ratio {worst.ratio:.6g} at {worst.cube})")
    if recorded_children is not None:
        actual = family_children(W.grid, family)
        for F, ch in recorded_children.items():
            if F not in actual:
                bad.append(f"stopping children recorded for {F}, which is not in the family")
            elif sorted(ch) != sorted(actual[F]):
                bad.append(f"recorded stopping children of {F} do not match the family")


def check_domination(inst: Instance, doc: dict) -> list[str]:
    W = inst.weighted
    grid = W.grid
    bad: list[str] = []
    k = int(doc["k"])
    family = _cubes(doc["family"])
    top = CubeId.from_list(doc["top"])
    children = {CubeId.from_list(F): _cubes(ch) for F, ch in doc.get("stopping_children", [])}
    _check_structure(W, family, 0.5, children, bad)
    if top not in family:
        bad.append("the top cube is missing from the family")
    for S in inst.collection:
        if S.level < k or not grid.contains(top, grid.ancestor(S, k)):
            bad.append(f"S^(k) of {S} is not inside the top cube")
            break
    if not _close(doc["cert_constant"], doc["tau1"] + doc["tau2"] * k):
        bad.append("cert_constant differs from tau1 + tau2 * k")
    f = np.abs(inst.f)
    lhs = naive_apply(W, inst.collection, k, f)
    measured = naive_ratio(W, lhs, naive_sparse_sum(W, family, f))
    if not _close(measured, doc["measured_constant"]):
        bad.append(f"measured_constant mismatch: recorded {doc['measured_constant']!r}, recomputed {measured!r}")
    if not leq(measured, doc["cert_constant"]):
        bad.append(f"domination fails: measured {measured!r} > cert {doc['cert_constant']!r}")
    return bad


def check_median_decomposition(inst: Instance, doc: dict) -> list[str]:
    W = inst.weighted
    grid = W.grid
    bad: list[str] = []
    lam = float(doc["lambda"])
    rows = {CubeId.from_list(r["cube"]): r for r in doc["family"]}
    family = list(rows)
    F0 = CubeId.from_list(doc["F0"])
    children = {F: _cubes(r["children"]) for F, r in rows.items()}
    _check_structure(W, family, 2 * lam, children, bad)
    if F0 not in rows:
        bad.append("F0 is missing from the family")
        return bad
    f = inst.f
    rhs = np.zeros(grid.n_cells)
    for F, row in rows.items():
        vals, m = _restrict(W, f, F)
        if not m.size:
            bad.append(f"family cube {F} has zero mass")
            continue
        c = naive_median(*_restrict(W, f, _parent(grid, F)))
        omega = naive_omega(vals, m, lam)
        jump = abs(naive_median(vals, m) - c)
        r = naive_r(vals - c, m, lam)
        for name, val in (("omega", omega), ("jump", jump), ("r", r), ("parent_median", c)):
            if not _close(val, row[name]):
                bad.append(f"{name} of {F} mismatch: recorded {row[name]!r}, recomputed {val!r}")
        for C in children[F]:
            if not abs(naive_median(*_restrict(W, f, C)) - c) > 3 * r:
                bad.append(f"{C} does not satisfy the stopping condition inside {F}")
        e_cells = [x for x in grid.cells(F) if W.cell_mass[x] > 0
                   and not any(grid.contains(C, grid.leaf(x)) for C in children[F])]
        if any(abs(f[x] - c) > 3 * r * (1 + REL_TOL) for x in e_cells):
            bad.append(f"|f - m| exceeds 3 r on the uncovered part of {F}")
        rhs[grid.cells(F)] += omega + jump
    c0 = naive_median(*_restrict(W, f, _parent(grid, F0)))
    lhs = np.zeros(grid.n_cells)
    lhs[grid.cells(F0)] = np.abs(f[grid.cells(F0)] - c0)
    measured = naive_ratio(W, lhs, rhs)
    if not _close(measured, doc["measured_constant"]):
        bad.append(f"measured_constant mismatch: recorded {doc['measured_constant']!r}, recomputed {measured!r}")
    if not leq(measured, 6.0):
        bad.append(f"measured constant {measured!r} exceeds 6")
    return bad


def check_czd(inst: Instance, doc: dict) -> list[str]:
    W = inst.weighted
    grid = W.grid
    bad: list[str] = []
    h = float(doc["height"])
    f = inst.f
    absf = np.abs(f)
    expected = []
    stack = [grid.root]
    while stack:
        Q = stack.pop()
        if W.cube_mass(Q) <= 0:
            continue
        if naive_average(W, absf, Q) > h:
            expected.append(Q)
        elif Q.level < grid.depth:
            stack.extend(grid.children(Q))
    Ts = _cubes(doc["stopping_cubes"])
    if sorted(Ts) != sorted(expected):
        bad.append("stopping cubes are not the maximal cubes above the height")
    g = np.array(doc["g"], dtype=float)
    b = {CubeId.from_list(T): np.array(v) for T, v in doc["b_parts"]}
    beta = {CubeId.from_list(P): np.array(v) for P, v in doc["beta_parts"]}
    scale = max(float(np.max(absf, initial=0.0)), 1e-300)
    total = g + sum(b.values(), np.zeros_like(g)) + sum(beta.values(), np.zeros_like(g))
    pos = W.cell_mass > 0
    if np.any(np.abs(total - f)[pos] > REL_TOL * scale):
        bad.append("f != g + b + beta")
    for Q, part in list(b.items()) + list(beta.items()):
        outside = np.ones(grid.n_cells, dtype=bool)
        outside[grid.cells(Q)] = False
        if np.any(part[outside] != 0):
            bad.append(f"part attached to {Q} leaks outside it")
        if abs(np.dot(part, W.cell_mass)) > REL_TOL * scale * max(W.cube_mass(Q), 1e-300):
            bad.append(f"part attached to {Q} does not have mean zero")
    omega = np.zeros(grid.n_cells, dtype=bool)
    for T in Ts:
        omega[grid.cells(T)] = True
    norm1 = float(np.dot(absf, W.cell_mass))
    if not leq(float(W.cell_mass[omega].sum()), norm1 / h):
        bad.append("mu(Omega) exceeds ||f||_1 / height")
    if np.any(absf[pos & ~omega] > h * (1 + REL_TOL)):
        bad.append("|f| exceeds the height off Omega")
    if not leq(sum(float(np.dot(np.abs(v), W.cell_mass)) for v in b.values()), 2 * norm1):
        bad.append("sum ||b_T||_1 exceeds 2 ||f||_1")
    return bad


def check_martingale(inst: Instance, doc: dict) -> list[str]:
    W = inst.weighted
    grid = W.grid
    bad: list[str] = []
    eps = {CubeId.from_list(q): float(v) for q, v in doc["eps"]}
    if any(abs(v) > 1 for v in eps.values()):
        bad.append("a coefficient exceeds 1 in absolute value")
    F0 = CubeId.from_list(doc["F0"])
    Tf = naive_transform(W, inst.f, eps)
    lhs = np.zeros(grid.n_cells)
    lhs[grid.cells(F0)] = np.abs(Tf[grid.cells(F0)])
    absf = np.abs(inst.f)
    dec_family = _cubes(doc["decomposition_family"])
    _check_structure(W, dec_family, 2 * float(doc["lambda"]), None, bad)
    c1 = naive_ratio(
        W, lhs,
        naive_sparse_sum(W, dec_family, absf,
                         weight=lambda F: naive_average(W, absf, F) + naive_average(W, absf, _parent(grid, F))),
    )
    if not _close(c1, doc["c1"]):
        bad.append(f"c1 mismatch: recorded {doc['c1']!r}, recomputed {c1!r}")
    final = _cubes(doc["final_family"])
    final_constant = naive_ratio(W, lhs, naive_sparse_sum(W, final, absf))
    if not _close(final_constant, doc["final_constant"]):
        bad.append(f"final_constant mismatch: recorded {doc['final_constant']!r}, recomputed {final_constant!r}")
    if not math.isfinite(final_constant):
        bad.append("the final sparse bound is infinite somewhere")
    elif not leq(final_constant, doc["final_bound"]):
        bad.append("final constant exceeds the recorded pipeline bound")
    return bad


def check_jn(inst: Instance, doc: dict) -> list[str]:
    W = inst.weighted
    grid = W.grid
    bad: list[str] = []
    f = inst.f
    norm = 0.0
    for Q in grid.all_cubes():
        vals, m = _restrict(W, f, Q)
        if m.size:
            ref = naive_average(W, f, _parent(grid, Q))
            norm = max(norm, float(np.dot(np.abs(vals - ref), m) / m.sum()))
    if not _close(norm, doc["bmo_norm"]):
        bad.append(f"bmo_norm mismatch: recorded {doc['bmo_norm']!r}, recomputed {norm!r}")
    family = _cubes(doc["family"])
    gamma = float(doc["gamma"])
    _check_structure(W, family, gamma, None, bad)
    ch = family_children(grid, family)
    inner = {c for v in ch.values() for c in v}
    gen = [F for F in family if F not in inner]
    mu0 = sum(W.cube_mass(F) for F in gen)
    j = 0
    while gen:
        mass = sum(W.cube_mass(F) for F in gen)
        if not leq(mass, gamma**j * mu0):
            bad.append(f"generation {j} carries {mass!r} > gamma^{j} mu(Q)")
        if j < len(doc["generation_masses"]) and not _close(mass, doc["generation_masses"][j]):
            bad.append(f"generation {j} mass mismatch")
        gen = [c for F in gen for c in ch[F]]
        j += 1
    return bad


CHECKS = {
    "domination": check_domination,
    "median_decomposition": check_median_decomposition,
    "czd": check_czd,
    "martingale": check_martingale,
    "jn": check_jn,
}


def check_certificate(inst: Instance, doc: dict) -> list[str]:
    """Dispatch on ``doc["kind"]``; unknown kinds are reported as failures."""
    kind = doc.get("kind")
    if kind not in CHECKS:
        return [f"unknown certificate kind {kind!r}"]
    try:
        return CHECKS[kind](inst, doc)
    except (KeyError, TypeError, IndexError) as exc:
        return [f"malformed {kind} certificate: {exc!r}"]
