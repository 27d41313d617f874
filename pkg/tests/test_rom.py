import numpy as np
import pytest
from hypothesis import given, strategies as st

from adlrom import fe, rom
from adlrom.forcing import GradedRule, forcing_load, rom_forcing
from adlrom.pipeline import Workspace
from adlrom.verify import toy_config


@pytest.fixture(scope="module")
def ws2():
    return Workspace(toy_config(2))


def element_fields(basis, e, rule):
    """Mode values (q, R, 2) and gradients (q, R, 2, 2) on element e, computed from scratch."""
    space = basis.space
    p = space.mesh.vertices[space.mesh.triangles[e]]
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    Jit = np.linalg.inv(J).T
    dofs = space.elem_dofs[e]
    N = fe.p2_shape(rule.points)  # (q, 6)
    G = fe.p2_shape_grad_ref(rule.points) @ Jit.T  # (q, 6, 2)
    cu, cv = basis.modes_u[:, dofs], basis.modes_v[:, dofs]  # (R, 6)
    val = np.stack([N @ cu.T, N @ cv.T], axis=-1)
    grad = np.stack([np.einsum("qax,ra->qrx", G, cu), np.einsum("qax,ra->qrx", G, cv)], axis=2)
    w = rule.weights * 0.5 * abs(np.linalg.det(J))
    return val, grad, w


def brute_trilinear(basis, r):
    rule = fe.collapsed_gauss_rule(4)
    A = np.zeros((r, r, r))
    B = np.zeros((r, r, r))
    for e in range(basis.space.mesh.n_triangles):
        val, grad, w = element_fields(basis, e, rule)
        for q in range(len(w)):
            for i in range(r):
                for j in range(r):
                    conv_j = grad[q, j] @ val[q, i]  # (phi_i . grad) phi_j
                    for k in range(r):
                        conv_k = grad[q, k] @ val[q, i]
                        A[i, j, k] += w[q] * conv_j @ val[q, k]
                        B[i, j, k] += w[q] * conv_k @ val[q, j]
    return 0.5 * (A - B)


def brute_stiffness(basis, r):
    rule = fe.collapsed_gauss_rule(3)
    S = np.zeros((r, r))
    for e in range(basis.space.mesh.n_triangles):
        _, grad, w = element_fields(basis, e, rule)
        S += np.einsum("q,qicx,qjcx->ij", w, grad[:, :r], grad[:, :r])
    return S


def test_trilinear_matches_brute_force(ws2):
    b = ws2.basis
    r = min(b.R, 4)
    T = rom.assemble_trilinear(b, r, ws2.tables)
    ref = brute_trilinear(b, r)
    assert np.abs(T - ref).max() <= 1e-11 * np.abs(ref).max()


def test_trilinear_skew_and_threads(toy):
    b = toy.basis
    T1 = rom.assemble_trilinear(b, b.R, toy.tables)
    T3 = rom.assemble_trilinear(b, b.R, toy.tables, threads=3)
    assert np.array_equal(T1, T3)
    assert np.abs(T1 + T1.transpose(0, 2, 1)).max() <= 1e-11 * np.abs(T1).max()
    assert np.all(np.einsum("ijj->ij", T1) == 0)
    with pytest.raises(ValueError):
        rom.assemble_trilinear(b, b.R + 1, toy.tables)


def test_trilinear_constant_field_vanishes():
    V = fe.p2_space(fe.build_mesh(3))
    tab = fe.eval_at_quadpoints(V)
    c = fe.interpolate(lambda x, y: (0.3 + 0 * x, -0.2 + 0 * y), V)
    u, ux, uy = tab.evaluate(c.comp_u[:, None])
    v, vx, vy = tab.evaluate(c.comp_v[:, None])
    mt = rom.ModeTables(tab.weights.ravel(), u, v, ux, uy, vx, vy)
    assert abs(rom.convection_slice(mt, 0)[0, 0]) < 1e-15


def test_operator_truncation_is_leading_block(toy):
    ops = toy.operators()
    small = ops.truncate(3)
    assert np.array_equal(small.T, ops.T[:3, :3, :3])
    assert np.array_equal(small.T, rom.assemble_trilinear(toy.basis, 3, toy.tables))
    with pytest.raises(ValueError):
        ops.truncate(ops.r + 1)
    with pytest.raises(ValueError):
        rom.RomOperators(2, np.eye(3), np.zeros((2, 2, 2)), toy.basis)


def test_stiffness_two_paths_and_oracle():
    ws = Workspace(toy_config(4))
    b = ws.basis
    r = b.R
    S = rom.assemble_rom_stiffness(b, r)
    assert np.abs(S - rom.stiffness_from_fe(b, r, ws.stiffness)).max() <= 1e-11 * np.abs(S).max()
    assert np.array_equal(np.diag(S), b.grad_sq)
    assert rom.assemble_rom_stiffness(b, 1).shape == (1, 1)
    ref = brute_stiffness(b, 3)
    assert np.abs(S[:3, :3] - ref).max() <= 1e-11 * np.abs(ref).max()
    assert np.abs(S - S.T).max() <= 1e-12 * np.abs(S).max()


def random_spd(rng, r):
    B = rng.standard_normal((r, r))
    return B @ B.T + 0.1 * np.eye(r)


def test_filter_examples(rng):
    S = random_spd(rng, 5)
    a = rng.standard_normal(5)
    assert np.array_equal(rom.filter_apply(rom.FilterMap(S, 0.0), a), a)
    s = np.array([2.0, 5.0, 7.0])
    fm = rom.FilterMap(np.diag(s), 0.3)
    assert np.allclose(fm.apply(np.eye(3)[0]), np.eye(3)[0] / (1 + 0.09 * 2.0), rtol=1e-15)
    fm = rom.FilterMap(S, 0.7)
    abar = fm.apply(a)
    assert np.linalg.norm((np.eye(5) + 0.49 * S) @ abar - a) <= 1e-12
    with pytest.raises(ValueError):
        rom.FilterMap(S, -0.1)
    with pytest.raises(ValueError):
        rom.FilterMap(S, np.inf)


@given(st.integers(0, 6), st.floats(0.0, 2.0), st.floats(0.01, 100.0))
def test_deconv_scalar_closed_form(N, delta, s):
    dm = rom.DeconvMap(rom.FilterMap(np.array([[s]]), delta), N)
    mu = 1.0 / (1.0 + delta**2 * s)
    expected = 1.0 - (1.0 - mu) ** (N + 1)
    assert dm.apply(np.array([1.0]))[0] == pytest.approx(expected, rel=1e-13, abs=1e-15)
    assert dm.matrix[0, 0] == pytest.approx(expected, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("N", [0, 1, 5])
@pytest.mark.parametrize("delta", [0.0, 0.0625, 0.5])
def test_deconv_identities(toy, N, delta, rng):
    S = toy.basis.S_full
    r = len(S)
    fm = rom.FilterMap(S, delta)
    dm = rom.DeconvMap(fm, N)
    A = dm.matrix
    closed = np.eye(r) - np.linalg.matrix_power(np.eye(r) - fm.matrix, N + 1)
    assert np.abs(A - closed).max() <= 1e-12
    a = rng.standard_normal(r)
    assert np.abs(rom.deconv_apply(dm, a) - A @ a).max() <= 1e-12 * max(1, np.abs(a).max())
    assert np.linalg.norm(A, 2) <= 1 + 1e-12
    if N == 0:
        assert np.array_equal(A, fm.matrix)
    if delta == 0:
        assert np.allclose(A, np.eye(r), atol=1e-15)
        assert np.allclose(dm.apply(a), a, atol=1e-15)


def test_deconv_rejects_bad_order(rng):
    fm = rom.FilterMap(random_spd(rng, 3), 0.1)
    for N in (-1, 1.5):
        with pytest.raises(ValueError):
            rom.DeconvMap(fm, N)


def test_filter_stability(toy, rng):
    S = toy.basis.S_full
    rep = rom.filter_stability_check(rom.FilterMap(S, 0.1), rng.standard_normal((100, len(S))))
    assert rep.ok and rep.n_samples == 100
    assert rep.max_l2_ratio <= 1 and rep.max_h1_ratio <= 1
    zero = rom.filter_stability_check(rom.FilterMap(S, 0.1), np.zeros((1, len(S))))
    assert zero.max_l2_ratio == 0 and zero.max_h1_ratio == 0
    # stronger smoothing damps the stiffest mode more
    w, V = np.linalg.eigh(S)
    top = V[:, -1]
    r1 = np.linalg.norm(rom.FilterMap(S, 0.1).apply(top))
    r2 = np.linalg.norm(rom.FilterMap(S, 1.0).apply(top))
    assert r2 < r1 < 1


def test_rom_forcing_of_zero_and_of_a_mode(toy):
    b = toy.basis
    V = b.space
    F0 = rom_forcing(b, b.R, 0.3, fn=lambda x, y: (0.0 * x, 0.0 * y))
    assert np.all(F0 == 0)
    fn = lambda x, y: (fe.point_values(V, b.modes_u[0], x, y),  # noqa: E731
                       fe.point_values(V, b.modes_v[0], x, y))
    F1 = rom_forcing(b, b.R, 0.3, fn=fn)
    assert np.abs(F1 - np.eye(b.R)[0]).max() <= 1e-10
    with pytest.raises(ValueError):
        rom_forcing(b, b.R + 1, 0.3)


def test_forcing_load_graded_vs_uniform_on_smooth_function(toy):
    V = toy.space
    fn = lambda x, y: (np.sin(3 * x) * y, np.cos(x + y))  # noqa: E731
    a = forcing_load(V, 0.4, fn=fn)
    b = forcing_load(V, 0.4, graded=GradedRule.uniform(fe.collapsed_gauss_rule(8)), fn=fn)
    assert np.allclose(a[0], b[0], atol=1e-9) and np.allclose(a[1], b[1], atol=1e-9)
    assert a[2] == pytest.approx(b[2], rel=1e-9)


def test_forcing_against_fine_quadrature(full):
    """Layer-graded forcing at t=0.5, r=10 against a uniformly refined high-order rule."""
    b = full.basis
    F = rom_forcing(b, 10, 0.5)
    fine = GradedRule.uniform(fe.composite_rule(fe.collapsed_gauss_rule(8), 8))
    ref = rom_forcing(b, 10, 0.5, graded=fine)
    assert np.linalg.norm(F - ref) <= 1e-6 * np.linalg.norm(ref)
