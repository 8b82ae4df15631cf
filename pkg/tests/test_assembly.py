import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gflowfd.assembly import (
    NonPositiveCoefficientError,
    assemble_helmholtz,
    assemble_step_matrix,
    assemble_stiffness,
    axis_helmholtz_matrix,
    dump_triplets,
    scaled_stiffness,
)
from gflowfd.grid import lumped_weights, make_grid


def reference_q2_operator(m, h):
    """Independent 1D Q2 stencil with ghost values M_-k = M_k (from the displayed forms)."""
    n = m.size
    mp = np.concatenate([m[2:0:-1], m, m[-2:-4:-1]])  # ghost fold, two layers

    def M(i):
        return mp[i + 2]

    a = np.zeros((n, n))

    def add(i, j, v):
        jj = -j if j < 0 else (2 * (n - 1) - j if j > n - 1 else j)
        a[i, jj] += v

    for i in range(n):
        if i % 2 == 1:  # cell center
            add(i, i - 1, -(3 * M(i - 1) + M(i + 1)) / (4 * h * h))
            add(i, i + 1, -(M(i - 1) + 3 * M(i + 1)) / (4 * h * h))
            add(i, i, (M(i - 1) + M(i + 1)) / (h * h))
        else:  # cell end
            add(i, i - 2, (3 * M(i - 2) - 4 * M(i - 1) + 3 * M(i)) / (8 * h * h))
            add(i, i - 1, -(4 * M(i - 2) + 12 * M(i)) / (8 * h * h))
            add(i, i, (M(i - 2) + 4 * M(i - 1) + 18 * M(i) + 4 * M(i + 1) + M(i + 2)) / (8 * h * h))
            add(i, i + 1, -(12 * M(i) + 4 * M(i + 2)) / (8 * h * h))
            add(i, i + 2, (3 * M(i + 2) - 4 * M(i + 1) + 3 * M(i)) / (8 * h * h))
    return a


def reference_q1_operator(m, h):
    n = m.size
    mp = np.concatenate([m[1:2], m, m[-2:-1]])
    a = np.zeros((n, n))
    for i in range(n):
        ml, mc, mr = mp[i], mp[i + 1], mp[i + 2]
        for j, v in ((i - 1, -(ml + mc)), (i, ml + 2 * mc + mr), (i + 1, -(mc + mr))):
            jj = -j if j < 0 else (2 * (n - 1) - j if j > n - 1 else j)
            a[i, jj] += v / (2 * h * h)
    return a


def test_k_rows_exact():
    k = axis_helmholtz_matrix(5, 1)
    assert k[0].tolist() == [2, -2, 0, 0, 0]
    assert k[2].tolist() == [0, -1, 2, -1, 0]
    assert k[4].tolist() == [0, 0, 0, -2, 2]


def test_h_rows_exact():
    hm = axis_helmholtz_matrix(9, 2)
    assert hm[0, :3].tolist() == [3.5, -4.0, 0.5]
    assert hm[1, :3].tolist() == [-1.0, 2.0, -1.0]
    assert hm[4, 2:7].tolist() == [0.25, -2.0, 3.5, -2.0, 0.25]
    assert hm[8, 6:].tolist() == [0.5, -4.0, 3.5]
    with pytest.raises(ValueError):
        axis_helmholtz_matrix(8, 2)


@pytest.mark.parametrize("order,cells", [(1, 8), (2, 4)])
def test_unit_coefficient_reproduces_k_h_bitwise(order, cells):
    # h = 1/4 is a power of two so h^-2 scaling is exact
    g = make_grid(1, order, (0.0, 2.0 if order == 1 else 2.0), cells)
    h = g.h
    assert h == 0.25
    s = scaled_stiffness(g, np.ones(g.n)).toarray()
    np.testing.assert_array_equal(s, axis_helmholtz_matrix(g.n, order) / h**2)


def test_interior_q2_stencil():
    g = make_grid(1, 2, (0.0, 1.0), 6)
    s = scaled_stiffness(g, np.ones(g.n)).toarray()
    h = g.h
    np.testing.assert_allclose(s[6, 4:9] * 4 * h * h, [1, -8, 14, -8, 1], rtol=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_variable_coefficient_matches_reference_forms_1d(order):
    rng = np.random.default_rng(3)
    g = make_grid(1, order, (0.0, 1.3), 6)
    m = np.exp(rng.uniform(-1, 1, g.n))
    s = scaled_stiffness(g, m).toarray()
    np.testing.assert_allclose(s, scaled_stiffness(g, m, lumped_weights(g)).toarray(), rtol=1e-13, atol=1e-13 * abs(s).max())
    ref = reference_q2_operator(m, g.h) if order == 2 else reference_q1_operator(m, g.h)
    np.testing.assert_allclose(s, ref, rtol=1e-12, atol=1e-12 * abs(ref).max())


@pytest.mark.parametrize("order", [1, 2])
def test_2d_is_sum_of_axis_operators(order):
    rng = np.random.default_rng(4)
    g = make_grid(2, order, (0.0, 1.0), 4)
    m = np.exp(rng.uniform(-1, 1, g.shape))
    s = scaled_stiffness(g, m).toarray()
    n = g.n
    ref = np.zeros_like(s)
    ref_op = reference_q2_operator if order == 2 else reference_q1_operator
    for j in range(n):  # x lines
        a = ref_op(m[:, j], g.h)
        idx = np.arange(n) * n + j
        ref[np.ix_(idx, idx)] += a
    for i in range(n):
        a = ref_op(m[i, :], g.h)
        idx = i * n + np.arange(n)
        ref[np.ix_(idx, idx)] += a
    np.testing.assert_allclose(s, ref, rtol=1e-12, atol=1e-12 * abs(ref).max())


@settings(max_examples=30, deadline=None)
@given(dim=st.sampled_from([1, 2]), order=st.sampled_from([1, 2]), cells=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_symmetric_with_constant_null_vector(dim, order, cells, seed):
    g = make_grid(dim, order, (0.0, 1.0), cells)
    m = np.random.default_rng(seed).uniform(0.1, 10, g.shape)
    s = assemble_stiffness(g, m)
    d = s.toarray()
    assert np.array_equal(d, d.T)
    assert abs(d @ np.ones(g.size)).max() <= 1e-12 * abs(d).max()


@pytest.mark.parametrize("order,expected", [(1, 2.0), (2, 4.0)])
def test_solution_error_order(order, expected):
    # -(M u')' + u = f with Neumann data, u = cos x, M = exp(sin^2 x) on [0, pi]
    import scipy.sparse.linalg as spla

    errs = []
    for nodes in (17, 33, 65):
        g = make_grid(1, order, (0.0, np.pi), (nodes - 1) // order)
        x = g.axes[0]
        m = np.exp(np.sin(x) ** 2)
        u = np.cos(x)
        dm = np.sin(2 * x) * m
        f = -(dm * -np.sin(x) + m * -np.cos(x)) + u
        a = scaled_stiffness(g, m) + sp_identity(g.n)
        uh = spla.spsolve(a.tocsc(), f)
        errs.append(np.sqrt(g.h * np.sum((uh - u) ** 2)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates[-1] == pytest.approx(expected, abs=0.15)


def sp_identity(n):
    import scipy.sparse as sp

    return sp.identity(n, format="csr")


def test_step_matrix_spd_and_rejections():
    g = make_grid(2, 2, (0.0, 1.0), 2)
    w = lumped_weights(g)
    m = np.linspace(1, 2, g.size).reshape(g.shape)
    a = assemble_step_matrix(g, w, m, 0.1).toarray()
    assert np.array_equal(a, a.T)
    assert np.linalg.eigvalsh(a).min() > 0
    with pytest.raises(ValueError):
        assemble_step_matrix(g, w, m, 0.0)
    m[1, 2] = 0.0
    with pytest.raises(NonPositiveCoefficientError) as info:
        assemble_stiffness(g, m)
    assert info.value.index == (1, 2)
    with pytest.raises(ValueError):
        assemble_stiffness(g, np.ones(7))


@pytest.mark.parametrize("order", [1, 2])
def test_helmholtz_2d_kronecker_sum(order):
    g = make_grid(2, order, (0.0, 1.0), 3)
    op = assemble_helmholtz(g, 2.0).toarray()
    w = lumped_weights(g).flat
    s1 = assemble_stiffness(g, np.ones(g.shape)).toarray()
    np.testing.assert_allclose(w[:, None] * op, s1 + 2.0 * np.diag(w), atol=1e-12)
    with pytest.raises(ValueError):
        assemble_helmholtz(g, 0.0)


def test_dump_triplets(tmp_path):
    g = make_grid(1, 1, (0.0, 1.0), 2)
    path = tmp_path / "s.txt"
    assemble_stiffness(g, np.ones(3)).dump(path)
    lines = path.read_text().split("\n")
    assert lines[0] == "0 0 2"
    assert lines[1] == "0 1 -2"
