import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse import GenSpec, WeightedGrid, build_median_decomposition, generate, verify_median_decomposition, verify_sparse
from dyadic_sparse.errors import BadLambda, CubeNotInGrid, ZeroMassCube
from dyadic_sparse.median_core import median, r_lambda
from dyadic_sparse.median_decomposition import decomposition_lhs, parent_cube


def test_constant_function(g1, w_uniform):
    cert = build_median_decomposition(w_uniform, np.full(4, 2.0), g1.root, 0.3)
    assert cert.family.cubes == (g1.root,)
    assert cert.measured_constant == 0.0
    assert verify_median_decomposition(w_uniform, np.full(4, 2.0), cert) == 0.0


def test_spike_fixture(g1, w_uniform):
    f = np.array([0.0, 0, 0, 100])
    cert = build_median_decomposition(w_uniform, f, g1.root, 0.3)
    e3 = g1.cube(2, 3)
    assert cert.family.cubes == (g1.root, e3)
    p = cert.payload
    assert (p[g1.root].omega, p[g1.root].jump, p[e3].omega, p[e3].jump) == (0.0, 0.0, 0.0, 100.0)
    assert decomposition_lhs(w_uniform, f, cert).tolist() == [0, 0, 0, 100]
    assert cert.measured_constant == 1.0
    assert verify_median_decomposition(w_uniform, f, cert) == 1.0


def test_errors(g1, w_uniform):
    with pytest.raises(BadLambda):
        build_median_decomposition(w_uniform, np.ones(4), g1.root, 0.5)
    with pytest.raises(ZeroMassCube):
        build_median_decomposition(WeightedGrid(g1, [0.0, 0, 1, 1]), np.ones(4), g1.cube(1, 0), 0.3)
    with pytest.raises(CubeNotInGrid):
        build_median_decomposition(w_uniform, np.ones(4), g1.root, 0.3, "require_parent")
    cert = build_median_decomposition(w_uniform, [0.0, 1, 5, 2], g1.cube(1, 1), 0.3, "require_parent")
    assert cert.payload[g1.cube(1, 1)].parent_median == median(w_uniform, [0.0, 1, 5, 2], g1.root)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 10_000),
    st.sampled_from(["uniform", "random", "skewed:16", "atomic"]),
    st.sampled_from(["random", "spike", "haar"]),
    st.sampled_from([0.1, 0.2, 0.3, 0.45]),
    st.integers(1, 2),
)
def test_structure(seed, measure, f_kind, lam, d):
    inst = generate(GenSpec(seed=seed, dimension=d, depth=7 if d == 1 else 4, measure=measure, f_kind=f_kind))
    W, f, grid = inst.weighted, inst.f, inst.grid
    cert = build_median_decomposition(W, f, grid.root, lam)
    assert verify_sparse(W, cert.family.cubes, 2 * lam)[0]
    assert cert.measured_constant <= 6
    meds = {Q: median(W, f, Q) for Q in grid.all_cubes() if W.cube_mass(Q) > 0}
    for F, ch in cert.family.stopping_children.items():
        c = meds[parent_cube(grid, F)]
        r = r_lambda(W, f - c, F, lam)
        e = cert.family.e_mask(grid, F) & W.positive
        assert np.all(np.abs(f[e] - c) <= 3 * r * (1 + 1e-9))
        for C in ch:
            assert abs(meds[C] - c) > 3 * r
            # maximality: no cube strictly between F and C triggers the stop
            A = grid.parent(C)
            while A != F:
                assert not abs(meds[A] - c) > 3 * r
                A = grid.parent(A)
    # finest cells never stop further
    for F in cert.family.cubes:
        if F.level == grid.depth:
            assert cert.family.stopping_children[F] == ()
