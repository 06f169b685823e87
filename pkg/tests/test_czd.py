import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse import GenSpec, PositiveOperator, WeightedGrid, cz_decompose, generate, verify_czd_contract
from dyadic_sparse.errors import RootAboveHeight


def test_trivial(g1, w_uniform):
    f = np.array([1.0, 2, 0, 1])
    dec = cz_decompose(w_uniform, f, 5.0)
    assert dec.stopping_cubes == () and np.array_equal(dec.g, f)
    rep = verify_czd_contract(w_uniform, f, dec, (2.0, 4.0))
    assert rep.ok
    n1 = f @ w_uniform.cell_mass
    for p in (2.0, 4.0):
        assert rep.c_p[p] == pytest.approx((np.abs(f) ** p @ w_uniform.cell_mass) / (5.0 ** (p - 1) * n1))


def test_hand_fixture(g1, w_uniform):
    f = np.array([8.0, 0, 0, 0])
    dec = cz_decompose(w_uniform, f, 3.0)
    L = g1.cube(1, 0)
    assert dec.stopping_cubes == (L,)
    assert dec.b_parts[L].tolist() == [4, -4, 0, 0]
    assert dec.beta_parts[g1.root].tolist() == [4, 4, -4, -4]
    assert dec.g.tolist() == [0, 0, 4, 4]
    assert np.array_equal(dec.g + dec.b + dec.beta, f)
    assert w_uniform.integral(dec.b_parts[L]) == 0 and w_uniform.integral(dec.beta_parts[g1.root]) == 0
    rep = verify_czd_contract(w_uniform, f, dec, (2.0,))
    assert rep.ok and rep.omega_mass == 0.5 and rep.omega_bound == pytest.approx(2 / 3)
    assert rep.c_p[2.0] == pytest.approx(4 / 3, rel=1e-15)
    assert rep.b_ratio == 1.0


def test_root_above_height(w_uniform):
    with pytest.raises(RootAboveHeight):
        cz_decompose(w_uniform, np.array([8.0, 0, 0, 0]), 1.0)


def test_tampered_decomposition_is_flagged(g1, w_uniform):
    f = np.array([8.0, 0, 0, 0])
    dec = cz_decompose(w_uniform, f, 3.0)
    dec.b_parts[g1.cube(1, 0)][1] = -3.0
    assert not verify_czd_contract(w_uniform, f, dec).ok


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 10_000),
    st.sampled_from(["uniform", "random", "skewed:16", "atomic"]),
    st.sampled_from(["random", "spike", "haar"]),
    st.sampled_from([1.0, 1.5, 3.0, 10.0]),
    st.integers(1, 2),
)
def test_contract(seed, measure, f_kind, factor, d):
    inst = generate(GenSpec(seed=seed, dimension=d, depth=7 if d == 1 else 4, measure=measure, f_kind=f_kind))
    W, f = inst.weighted, inst.f
    h = factor * float(W.level_averages(np.abs(f))[0][0])
    dec = cz_decompose(W, f, h)
    rep = verify_czd_contract(W, f, dec, (2.0, 3.0))
    assert rep.ok, rep.violations
    assert rep.b_ratio <= 2 and rep.beta_ratio <= 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3))
def test_cancellation_consequences(seed, k):
    inst = generate(GenSpec(seed=seed, depth=7, measure="random", collection="full-grid"))
    W, grid = inst.weighted, inst.grid
    rng = np.random.default_rng(seed)
    op = PositiveOperator(grid, [S for S in grid.all_cubes() if S.level >= k and rng.random() < 0.5], k)
    T = grid.from_code(int(rng.integers(1, grid.depth + 1)), 0)
    T = grid.from_code(T.level, int(rng.integers(grid.n_cubes(T.level))))
    h = np.zeros(grid.n_cells)
    cells = grid.cells(T)
    h[cells] = rng.normal(size=cells.size)
    scale = np.abs(h).max()
    h[cells] -= W.cube_integral(h, T) / W.cube_mass(T)
    out = op.apply(W, h, signed=True)
    outside = np.ones(grid.n_cells, dtype=bool)
    outside[cells] = False
    assert np.all(np.abs(out[outside]) <= 1e-12 * scale)
    # a beta contribution constant on P minus T gives A_k beta = const * sum of eta on P minus T
    P = grid.parent(T)
    beta = np.zeros(grid.n_cells)
    rest = np.setdiff1d(grid.cells(P), cells)
    beta[cells] = 2.0
    beta[rest] = -2.0 * W.cube_mass(T) / (W.cube_mass(P) - W.cube_mass(T))
    Ab = op.apply(W, beta, signed=True)
    eta_sum = np.zeros(grid.n_cells)
    for S in op.cubes:
        A = grid.ancestor(S, k)
        if grid.contains(P, A) and not grid.contains(T, A) and A != P:
            eta_sum[grid.cells(S)] += 1
    c = beta[rest][0]
    np.testing.assert_allclose(Ab[rest], c * eta_sum[rest], rtol=1e-9, atol=1e-12 * abs(c))
