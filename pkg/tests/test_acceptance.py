"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or directly as a script.
"""

from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from dyadic_sparse import (
    DominationConfig,
    DyadicGrid,
    GenSpec,
    PositiveOperator,
    ProbePolicy,
    TransformCoefficients,
    WeightedGrid,
    build_median_decomposition,
    build_sparse_domination,
    cz_decompose,
    dominate_martingale_transform,
    generate,
    jn_profile,
    martingale_difference,
    martingale_transform,
    median,
    median_interval,
    omega_lambda,
    r_lambda,
    verify_czd_contract,
    verify_sparse,
)
from dyadic_sparse.applications import dense_transform_weak_norm, transform_matrix
from dyadic_sparse.cli import sweep_instance
from dyadic_sparse.dyadic_core import leq
from dyadic_sparse.median_core import level_medians
from dyadic_sparse.median_decomposition import parent_cube
from dyadic_sparse.positive_operators import weak_l1_quasinorm
from dyadic_sparse.sparse_domination import sparse_sum

import oracles

MEASURES = ("uniform", "random", "skewed:16", "atomic")
COLLECTIONS = ("random-sparse:0.5", "nested-chain", "full-grid")
F_KINDS = ("random", "spike", "haar")
RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print("\n" + line)


# -- corpora -------------------------------------------------------------------------


def domination_corpus(n=210):
    for i in range(n):
        k = i % 7
        lo = max(k, 4)
        depth = lo + (i // 7) % (13 - lo)
        yield generate(GenSpec(seed=i, depth=depth, measure=MEASURES[i % 4], collection=COLLECTIONS[(i // 4) % 3],
                               k=k, f_kind=F_KINDS[i % 3]))


def sweep_corpus(n=24):
    for i in range(n):
        yield generate(GenSpec(seed=1000 + i, depth=12, measure=MEASURES[i % 4], collection=COLLECTIONS[(i // 4) % 3],
                               top_level=6, f_kind=F_KINDS[i % 3]))


def oscillation_corpus(n=210):
    for i in range(n):
        d = 1 if i % 5 else 2
        depth = 4 + i % 9 if d == 1 else 2 + i % 4
        yield generate(GenSpec(seed=5000 + i, dimension=d, depth=depth, measure=MEASURES[i % 4],
                               f_kind=F_KINDS[i % 3], lam=(0.1, 0.2, 0.3, 0.45)[(i // 4) % 4]))


# -- criteria ---------------------------------------------------------------------------


def test_criterion_1_sparse_domination_structure():
    t0 = time.perf_counter()
    count, bad, worst = 0, [], 0.0
    for inst in domination_corpus():
        op = PositiveOperator(inst.grid, inst.collection, inst.k)
        cert = build_sparse_domination(op, inst.weighted, np.abs(inst.f), DominationConfig(probes=ProbePolicy(count)))
        ok_sparse, _ = verify_sparse(inst.weighted, cert.family.cubes, 0.5)
        ok_dom = leq(cert.measured_constant, cert.cert_constant)
        exact = cert.cert_constant == cert.tau1 + 4 * inst.k
        if not (ok_sparse and ok_dom and exact):
            bad.append(inst.digest())
        worst = max(worst, cert.measured_constant / cert.cert_constant)
        count += 1
    ok = count >= 200 and not bad
    report(1, ok, f"{count} instances, failures={len(bad)}, max measured/cert={worst:.4f} ({time.perf_counter() - t0:.1f}s)")
    assert ok, bad


@pytest.fixture(scope="module")
def sweep_rows():
    rows = []
    for i, inst in enumerate(sweep_corpus()):
        rows.append(sweep_instance(inst, range(7), ProbePolicy(seed=i)))
    return rows


def test_criterion_2_linear_in_k(sweep_rows):
    affine, trend = True, []
    per_k = np.zeros(7)
    for rows in sweep_rows:
        tau = rows[0]["tau1"]
        for r in rows:
            affine &= r["tau1"] == tau and r["cert_constant"] == tau + 4 * r["k"]
            affine &= r["measured_constant"] <= r["cert_constant"]
        diffs = np.diff([r["cert_constant"] for r in rows])
        affine &= bool(np.all(np.abs(diffs - 4) <= 1e-12 * rows[-1]["cert_constant"]))
        ratio = [r["measured_per_k1"] for r in rows]
        per_k = np.maximum(per_k, ratio)
        if max(ratio) > 3 * ratio[0]:
            trend.append(rows[0]["digest"])
    bound = float(per_k.max())
    corpus_ok = per_k.max() <= 3 * per_k[0]
    ok = affine and not trend and corpus_ok
    report(2, ok, f"{len(sweep_rows)} sweeps, affine slope 4: {affine}, per-instance trend violations={len(trend)}, "
                  f"corpus bound on measured/(k+1) = {bound:.4f} (k=0: {per_k[0]:.4f})")
    assert ok


def test_criterion_3_weak_norm_plateau(sweep_rows):
    est = np.array([[r["weak_estimate"] for r in rows] for rows in sweep_rows])
    corpus = est.max(axis=0)
    ratio = corpus.max() / corpus.min()
    per_instance = float(np.max(est.max(axis=1) / np.maximum(est.min(axis=1), 1e-300)))
    ok = ratio <= 4
    report(3, ok, f"corpus-wide max_k/min_k = {ratio:.3f} (per-k sup {np.round(corpus, 3).tolist()}); "
                  f"single-instance spread up to {per_instance:.3g}, reported only")
    assert ok


def _pairs_omega(vals, masses, lam):
    """Brute force over all value pairs, vectorized: min (b - a)/2 with outside mass <= lam."""
    u, inv = np.unique(vals, return_inverse=True)
    w = np.bincount(inv, weights=masses, minlength=u.size)
    cum = np.concatenate([[0.0], np.cumsum(w)])
    total = cum[-1]
    outside = cum[:-1][:, None] + (total - cum[1:])[None, :]
    ok = (outside <= lam * total) & (np.arange(u.size)[:, None] <= np.arange(u.size)[None, :])
    return float(((u[None, :] - u[:, None]) / 2)[ok].min())


def test_criterion_4_median_inequalities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    failures = {"omega_bound": 0, "translation": 0, "median_vs_constant": 0, "weak_l1_bound": 0, "fujii": 0, "omega": 0}
    n = 10_000
    grids = {}
    for t in range(n):
        d = 1 if t % 4 else 2
        L = int(rng.integers(1, 9)) if d == 1 else int(rng.integers(1, 5))
        grid = grids.setdefault((d, L), DyadicGrid(d, L))
        masses = rng.integers(0, 5, grid.n_cells).astype(float)
        masses[rng.integers(grid.n_cells)] += 1
        if t % 2:
            masses = masses * rng.uniform(0.5, 2.0, grid.n_cells)
        W = WeightedGrid(grid, masses)
        f = rng.integers(-6, 7, grid.n_cells).astype(float) if t % 3 else rng.normal(size=grid.n_cells)
        lam = float(rng.uniform(0.05, 0.45))
        c = float(rng.integers(-64, 65)) / 8
        level = int(rng.integers(0, L + 1))
        Q = grid.from_code(level, int(rng.integers(grid.n_cubes(level))))
        if W.cube_mass(Q) <= 0:
            Q = grid.root
        w, _ = omega_lambda(W, f, Q, lam)
        lo, hi = median_interval(W, f, Q)
        for m in (lo, hi):
            failures["omega_bound"] += r_lambda(W, f - m, Q, lam) > 2 * w
            failures["median_vs_constant"] += abs(m - c) > 3 * r_lambda(W, f - c, Q, lam)
        failures["translation"] += median(W, f + c, Q) != median(W, f, Q) + c if t % 3 else 0
        failures["translation"] += median_interval(W, f + c, Q) != (lo + c, hi + c) if t % 3 else 0
        vals, m = W.cube_values(f, Q)
        keep = m > 0
        gq = np.zeros(grid.n_cells)
        gq[grid.cells(Q)] = f[grid.cells(Q)]
        failures["weak_l1_bound"] += not leq(r_lambda(W, f, Q, lam), weak_l1_quasinorm(W, gq) / (lam * W.cube_mass(Q)))
        failures["omega"] += w != _pairs_omega(vals[keep], m[keep], lam)
        leaf_med = level_medians(W, f)[L]
        fz = grid.to_z(f)
        pos = W.mass_z > 0
        failures["fujii"] += int(np.any(leaf_med[pos] != fz[pos]))
    ok = not any(failures.values())
    report(4, ok, f"{n} tuples, failures={failures} ({time.perf_counter() - t0:.1f}s)")
    assert ok


@pytest.fixture(scope="module")
def decompositions():
    out = []
    for inst in oscillation_corpus():
        cert = build_median_decomposition(inst.weighted, inst.f, inst.grid.root, inst.lam)
        out.append((inst, cert))
    return out


def test_criterion_5_median_decomposition(decompositions):
    bad_sparse = bad_e = bad_c = 0
    worst = 0.0
    for inst, cert in decompositions:
        W, f, grid = inst.weighted, inst.f, inst.grid
        bad_sparse += not verify_sparse(W, cert.family.cubes, 2 * inst.lam)[0]
        for F in cert.family.cubes:
            c = median(W, f, parent_cube(grid, F))
            r = r_lambda(W, f - c, F, inst.lam)
            e = cert.family.e_mask(grid, F) & W.positive
            bad_e += int(np.any(np.abs(f[e] - c) > 3 * r * (1 + 1e-9)))
        bad_c += cert.measured_constant > 6
        worst = max(worst, cert.measured_constant)
    ok = len(decompositions) >= 200 and not (bad_sparse or bad_e or bad_c)
    report(5, ok, f"{len(decompositions)} instances, sparse failures={bad_sparse}, E_F failures={bad_e}, "
                  f"constant>6: {bad_c}, max measured constant={worst:.4f}")
    assert ok


def test_criterion_6_czd_contract():
    t0 = time.perf_counter()
    bad, count = [], 0
    c2 = {"doubling": 0.0, "non-doubling": 0.0}
    for i in range(220):
        inst = generate(GenSpec(seed=9000 + i, dimension=1 if i % 5 else 2, depth=3 + i % 8 if i % 5 else 2 + i % 3,
                                measure=MEASURES[i % 4], f_kind=F_KINDS[i % 3]))
        W, f = inst.weighted, inst.f
        height = float(W.level_averages(np.abs(f))[0][0]) * (1.0, 1.5, 3.0, 10.0)[(i // 4) % 4]
        dec = cz_decompose(W, f, height)
        rep = verify_czd_contract(W, f, dec, (2.0, 4.0))
        kind = "doubling" if inst.meta["gen"]["measure"] in ("uniform", "random") else "non-doubling"
        c2[kind] = max(c2[kind], rep.c_p[2.0])
        if not rep.ok:
            bad.append((inst.digest(), rep.violations))
        count += 1
    ok = count >= 200 and not bad and c2["doubling"] <= 8
    report(6, ok, f"{count} instances, contract failures={len(bad)}, max C_2 doubling={c2['doubling']:.4f} (<= 8), "
                  f"non-doubling={c2['non-doubling']:.4f} (reported only) ({time.perf_counter() - t0:.1f}s)")
    assert ok, bad


def test_criterion_7_john_nirenberg(decompositions):
    bad_decay, bad_c = 0, []
    smallest = np.inf
    for inst, cert in decompositions:
        W = inst.weighted
        mu = W.cube_mass(inst.grid.root)
        for j, gen in enumerate(cert.family.generations()):
            bad_decay += not leq(sum(W.cube_mass(F) for F in gen), (2 * inst.lam) ** j * mu)
        rep = jn_profile(W, inst.f, inst.grid.root, 0.1, 0.1, cap=10.0)
        bad_decay += not rep.decay_ok
        smallest = min(smallest, rep.fitted_c)
        if not rep.fitted_c > 0:
            bad_c.append(inst.digest())
    ok = not bad_decay and not bad_c
    report(7, ok, f"{len(decompositions)} instances, decay failures={bad_decay}, "
                  f"non-positive fitted c={len(bad_c)}, smallest fitted c={smallest:.4g}")
    assert ok


def _oscillation_exhaustive():
    """Every eps in {-1,0,1} on grids with at most 8 cells, against a dense norm search."""
    rng = np.random.default_rng(8)
    shapes = [(1, 2), (1, 3), (2, 1)]
    examined = violations = chain_violations = 0
    worst = 0.0
    example = None
    for d, L in shapes:
        grid = DyadicGrid(d, L)
        n_eps = sum(grid.n_cubes(lv) for lv in range(L))
        measures = [np.full(grid.n_cells, 1.0 / grid.n_cells)]
        sk = np.ones(grid.n_cells)
        sk[0] = 16.0
        measures.append(sk / sk.sum())
        fs = [np.eye(grid.n_cells)[-1], rng.normal(size=grid.n_cells)]
        for masses in measures:
            W = WeightedGrid(grid, masses)
            for pat in itertools.product((-1.0, 0.0, 1.0), repeat=n_eps):
                levels, pos = [], 0
                for lv in range(L):
                    levels.append(np.array(pat[pos:pos + grid.n_cubes(lv)]))
                    pos += grid.n_cubes(lv)
                eps = TransformCoefficients(grid, levels)
                C = dense_transform_weak_norm(W, eps, np.random.default_rng(0), n_random=64)
                M = transform_matrix(W, eps)
                for f in fs:
                    Tf = M @ f
                    af = np.abs(f)
                    for R in grid.all_cubes():
                        P = parent_cube(grid, R)
                        m = median(W, Tf, P)
                        aR, aP = W.average(af, R), W.average(af, P)
                        lam = 0.3 if R.level % 2 else 0.1
                        lhs = r_lambda(W, Tf - m, R, lam)
                        rhs = (C + 1) * (aR + aP)
                        chain = (C / lam) * (aR + 3 * aP) + aR + aP
                        examined += 1
                        if not leq(lhs, rhs, atol=1e-9):
                            violations += 1
                            if lhs / rhs > worst:
                                worst = lhs / rhs
                                example = (d, L, pat, f.tolist(), R, lam)
                        chain_violations += not leq(lhs, chain, atol=1e-9)
    return examined, violations, chain_violations, worst, example


@pytest.mark.xfail(strict=True, reason="the literal (||T|| + 1) constant has exact counterexamples; see the ledger")
def test_criterion_8_martingale_pipeline():
    t0 = time.perf_counter()
    tele = mean_zero = pipeline = 0
    count = 0
    for i, inst in enumerate(oscillation_corpus(60)):
        W, f, grid = inst.weighted, inst.f, inst.grid
        scale = max(np.abs(f).max(), 1e-300)
        Tf = martingale_transform(W, f, TransformCoefficients.constant(grid, 1.0))
        tele += int(np.any(np.abs(Tf - (f - W.average(f, grid.root)))[W.positive] > 1e-9 * scale))
        for Q in grid.all_cubes():
            if Q.level < grid.depth and W.cube_mass(Q) > 0:
                mean_zero += abs(W.integral(martingale_difference(W, f, Q))) > 1e-9 * scale * W.cube_mass(Q)
        eps = TransformCoefficients.random(grid, np.random.default_rng(i))
        cert = dominate_martingale_transform(W, f, eps, grid.root, inst.lam, ProbePolicy(i, 16))
        pipeline += not (np.isfinite(cert.final_constant) and leq(cert.final_constant, cert.final_bound))
        count += 1
    examined, violations, chain_violations, worst, example = _oscillation_exhaustive()
    structural = not (tele or mean_zero or pipeline)
    ok = structural and violations == 0
    report(8, ok, f"{count} pipeline instances (telescoping failures={tele}, mean-zero failures={mean_zero}, "
                  f"pipeline failures={pipeline}); exhaustive oscillation-estimate checks={examined}, literal violations={violations} "
                  f"(worst ratio {worst:.3f} at {example}), proof-chain constant violations={chain_violations} "
                  f"({time.perf_counter() - t0:.1f}s)")
    assert structural and chain_violations == 0
    assert violations == 0


def test_criterion_9_hand_fixtures():
    grid = DyadicGrid(1, 2)
    W = WeightedGrid.uniform(grid)
    Ws = WeightedGrid(grid, np.array([1.0, 1, 1, 13]) / 16)
    um, sm = [0.25] * 4, [1 / 16, 1 / 16, 1 / 16, 13 / 16]
    checks = {}
    coll = [(0, (0,)), (1, (0,)), (2, (0,))]
    op = PositiveOperator(grid, [grid.cube(lv, *ix) for lv, ix in coll], 0)
    a0 = op.apply(W, np.ones(4))
    checks["A_0 f = (3,2,1,1)"] = a0.tolist() == [3, 2, 1, 1] == oracles.apply_operator(1, 2, um, coll, 0, np.ones(4)).tolist()
    checks["median 1"] = median(W, [0.0, 1, 2, 3], grid.root) == 1 == oracles.minimal_median([0, 1, 2, 3], um)
    checks["median 3"] = median(Ws, [0.0, 1, 2, 3], grid.root) == 3 == oracles.minimal_median([0, 1, 2, 3], sm)
    checks["r 3"] = r_lambda(W, [1.0, 2, 3, 4], grid.root, 0.3) == 3 == oracles.r_scan([1, 2, 3, 4], um, 0.3)
    checks["r 4"] = r_lambda(Ws, [1.0, 2, 3, 4], grid.root, 0.3) == 4 == oracles.r_scan([1, 2, 3, 4], sm, 0.3)
    checks["omega 1"] = omega_lambda(W, [1.0, 2, 3, 4], grid.root, 0.3)[0] == 1 == oracles.omega_pairs([1, 2, 3, 4], um, 0.3)
    checks["omega 1/2"] = omega_lambda(W, [0.0, 0, 1, 1], grid.root, 0.3)[0] == 0.5 == oracles.omega_pairs([0, 0, 1, 1], um, 0.3)
    f = np.array([8.0, 0, 0, 0])
    dec = cz_decompose(W, f, 3.0)
    L = grid.cube(1, 0)
    # oracle: b_L = (f - <f>_L) 1_L, transfer = integral_L f / mu(R)
    avg_L = oracles.avg(um, f, [0, 1])
    transfer = avg_L * 0.5 / 0.5
    checks["CZD triple"] = (
        dec.stopping_cubes == (L,)
        and dec.b_parts[L].tolist() == [8 - avg_L, -avg_L, 0, 0] == [4, -4, 0, 0]
        and dec.beta_parts[grid.root].tolist() == [avg_L, avg_L, -transfer, -transfer] == [4, 4, -4, -4]
        and dec.g.tolist() == [0, 0, transfer, transfer] == [0, 0, 4, 4]
    )
    cert = build_median_decomposition(W, [0.0, 0, 0, 100], grid.root, 0.3)
    checks["median decomposition {root, e3}"] = cert.family.cubes == (grid.root, grid.cube(2, 3)) and cert.measured_constant == 1
    ok = all(checks.values())
    report(9, ok, ", ".join(f"{k}: {'ok' if v else 'MISMATCH'}" for k, v in checks.items()))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
