import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vkplate.assembly import (
    AssemblyError,
    Loads,
    PlateState,
    Rates,
    assemble_heat,
    assemble_mech,
    membrane_strain,
    membrane_strain_rate,
)
from vkplate.constitutive import MaterialSet, make_isotropic_c3
from vkplate.grid import build_grid


def simple_material(alpha=4.0, kappa=0.0, b11=0.0, lam=0.0):
    b_full = np.zeros((3, 3))
    if b11:
        b_full[0, 0] = b_full[1, 1] = b11
    return MaterialSet.from_3d(
        c3_el=make_isotropic_c3(1.0, lam),
        c3_visc=make_isotropic_c3(0.5, lam),
        b_full=b_full,
        cv_bar=1.0,
        k3=np.eye(3),
        kappa=kappa,
        alpha=alpha,
    )


def random_state(grid, layout, rng, scale=0.05, t=0.0, with_mu=False):
    st_ = PlateState.zeros(grid, layout, t=t)
    st_.u_dofs = scale * rng.standard_normal(layout.n_u)
    st_.v_dofs = scale * rng.standard_normal(layout.n_v)
    if with_mu:
        st_.mu_dofs = scale * rng.standard_normal(layout.n_mu)
    st_.u_dofs[layout.u_constrained] = 0.0
    st_.v_dofs[layout.v_constrained] = 0.0
    return st_


def fd_jacobian(state_prev, state_guess, dt, mat, loads, eps=1e-6):
    layout = state_prev.layout
    free = layout.mech_free
    x0 = state_guess.mech_vector()
    cols = []
    for j in free:
        xp = x0.copy()
        xp[j] += eps
        sp_ = state_guess.copy()
        sp_.set_mech_vector(xp)
        rp = assemble_mech(state_prev, sp_, dt, mat, loads).residual
        xm = x0.copy()
        xm[j] -= eps
        sm = state_guess.copy()
        sm.set_mech_vector(xm)
        rm = assemble_mech(state_prev, sm, dt, mat, loads).residual
        cols.append((rp - rm) / (2 * eps))
    return np.column_stack(cols)


def test_membrane_strain_examples():
    np.testing.assert_array_equal(membrane_strain(np.zeros((2, 2)), np.zeros(2)), np.zeros((2, 2)))
    e = membrane_strain(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(e, [[1.5, 0.0], [0.0, 0.0]], atol=0.0)
    e = membrane_strain(np.zeros((2, 2)), np.array([2.0, 1.0]))
    np.testing.assert_allclose(e, [[2.0, 1.0], [1.0, 0.5]], atol=0.0)


def test_membrane_strain_rate_examples():
    z = np.zeros((2, 2))
    np.testing.assert_array_equal(membrane_strain_rate(z, np.zeros(2), np.zeros(2)), z)
    e = membrane_strain_rate(z, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    np.testing.assert_allclose(e, [[0.0, 0.5], [0.5, 0.0]], atol=0.0)
    e = membrane_strain_rate(z, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(e, [[1.0, 0.0], [0.0, 0.0]], atol=0.0)


@given(
    hnp.arrays(np.float64, (2, 2), elements=st.floats(-5, 5)),
    hnp.arrays(np.float64, (2,), elements=st.floats(-5, 5)),
)
@settings(max_examples=50, deadline=None)
def test_membrane_strain_symmetric(gu, gv):
    e = membrane_strain(gu, gv)
    np.testing.assert_allclose(e, e.T, atol=1e-12)


def test_zero_state_zero_residual():
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left"})
    s = PlateState.zeros(grid, layout)
    out = assemble_mech(s, s.copy(), 0.1, simple_material(), Loads())
    np.testing.assert_array_equal(out.residual, 0.0)


def test_constant_load_consistent_vector():
    lx, ly = 1.5, 0.75
    grid, layout = build_grid(3, 2, lx, ly, {"left"})
    s = PlateState.zeros(grid, layout)
    loads = Loads(f2d=lambda x, y, t: np.ones_like(x))
    out = assemble_mech(s, s.copy(), 0.1, simple_material(), loads, full_vectors=True)
    r = out.residual
    # value-slot test functions over all nodes sum to one: total = -lx*ly
    v_values = r[layout.n_u :][0::4]
    assert v_values.sum() == pytest.approx(-lx * ly, rel=1e-13)
    # displacement rows see no load
    np.testing.assert_array_equal(r[: layout.n_u], 0.0)


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(42)
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left", "bottom"})
    mat = simple_material(alpha=2.0, b11=0.7)
    loads = Loads(f2d=lambda x, y, t: np.sin(3 * x) + y)
    prev = random_state(grid, layout, rng, with_mu=True)
    guess = random_state(grid, layout, rng, t=0.1, with_mu=True)
    out = assemble_mech(prev, guess, 0.1, mat, loads)
    jd = out.jacobian.toarray()
    jf = fd_jacobian(prev, guess, 0.1, mat, loads)
    col_scale = np.linalg.norm(jf, axis=0)
    err = np.linalg.norm(jd - jf, axis=0) / np.maximum(col_scale, 1e-12)
    assert err.max() <= 1e-5


def test_parity_symmetry_reflection():
    # swapping the two axes (grid, state, loads, symmetric isotropic
    # material) must permute the residual accordingly
    rng = np.random.default_rng(5)
    n = 4
    grid, layout = build_grid(n, n, 1.0, 1.0, {"left", "bottom"})
    mat = simple_material(alpha=4.0)
    prev = random_state(grid, layout, rng)
    guess = random_state(grid, layout, rng, t=0.1)

    def swap_state(s):
        out = PlateState.zeros(grid, layout, t=s.t)
        for j in range(n + 1):
            for i in range(n + 1):
                a = grid.node_id(i, j)
                b = grid.node_id(j, i)
                out.u_dofs[2 * b] = s.u_dofs[2 * a + 1]
                out.u_dofs[2 * b + 1] = s.u_dofs[2 * a]
                out.v_dofs[4 * b + 0] = s.v_dofs[4 * a + 0]
                out.v_dofs[4 * b + 1] = s.v_dofs[4 * a + 2]
                out.v_dofs[4 * b + 2] = s.v_dofs[4 * a + 1]
                out.v_dofs[4 * b + 3] = s.v_dofs[4 * a + 3]
        return out

    loads = Loads(f2d=lambda x, y, t: x + 2.0 * y)
    loads_sw = Loads(f2d=lambda x, y, t: y + 2.0 * x)
    r = assemble_mech(prev, guess, 0.1, mat, loads, full_vectors=True).residual
    r_sw = assemble_mech(
        swap_state(prev), swap_state(guess), 0.1, mat, loads_sw, full_vectors=True
    ).residual
    # compare entrywise under the same permutation of test functions
    for j in range(n + 1):
        for i in range(n + 1):
            a = grid.node_id(i, j)
            b = grid.node_id(j, i)
            assert r_sw[2 * b] == pytest.approx(r[2 * a + 1], abs=1e-12)
            assert r_sw[2 * b + 1] == pytest.approx(r[2 * a], abs=1e-12)
            nv = layout.n_u
            assert r_sw[nv + 4 * b + 0] == pytest.approx(r[nv + 4 * a + 0], abs=1e-12)
            assert r_sw[nv + 4 * b + 1] == pytest.approx(r[nv + 4 * a + 2], abs=1e-12)
            assert r_sw[nv + 4 * b + 2] == pytest.approx(r[nv + 4 * a + 1], abs=1e-12)
            assert r_sw[nv + 4 * b + 3] == pytest.approx(r[nv + 4 * a + 3], abs=1e-12)


def test_heat_matrix_spd():
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left"})
    s = PlateState.zeros(grid, layout)
    for kappa in (0.0, 0.7):
        mat = simple_material(kappa=kappa)
        H, _ = assemble_heat(s, None, 0.05, mat, Loads())
        Hd = H.toarray()
        np.testing.assert_allclose(Hd, Hd.T, atol=1e-14)
        assert np.linalg.eigvalsh(Hd)[0] > 0.0


def test_heat_zero_data_zero_solution():
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left"})
    s = PlateState.zeros(grid, layout)
    mat = simple_material(kappa=0.5)
    H, rhs = assemble_heat(s, Rates(np.zeros(layout.n_u), np.zeros(layout.n_v)), 0.05, mat, Loads())
    np.testing.assert_array_equal(rhs, 0.0)


def test_heat_source_zero_when_regime_tensor_zero():
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left"})
    rng = np.random.default_rng(2)
    s = PlateState.zeros(grid, layout)
    rates = Rates(rng.standard_normal(layout.n_u), rng.standard_normal(layout.n_v))
    mat = simple_material(alpha=3.0)
    _, rhs = assemble_heat(s, rates, 0.05, mat, Loads())
    np.testing.assert_array_equal(rhs, 0.0)


def test_heat_source_constant_rate_value():
    # uniform strain rate Edot = Id with the |sym A|^2 viscous form:
    # source integral = |Id|^2 * area = 2 * lx * ly per unit time
    lx, ly = 1.25, 0.8
    grid, layout = build_grid(4, 3, lx, ly, {"left"})
    mat = simple_material(alpha=4.0)
    s = PlateState.zeros(grid, layout)
    du = np.zeros(layout.n_u)
    du[0::2] = grid.coords[:, 0]  # u1 = x1, u2 = x2 -> grad du = Id
    du[1::2] = grid.coords[:, 1]
    rates = Rates(du, np.zeros(layout.n_v))
    dt = 0.05
    H, rhs = assemble_heat(s, rates, dt, mat, Loads())
    # subtract the (zero) previous-state term; the rhs is purely the source
    total = rhs.sum()
    assert total == pytest.approx(2.0 * lx * ly, rel=1e-12)


def test_heat_source_nonnegative_for_random_rates():
    grid, layout = build_grid(3, 3, 1.0, 1.0, {"left"})
    rng = np.random.default_rng(8)
    mat = simple_material(alpha=4.0)
    for _ in range(10):
        s = PlateState.zeros(grid, layout)
        s.v_dofs = 0.1 * rng.standard_normal(layout.n_v)
        rates = Rates(rng.standard_normal(layout.n_u), rng.standard_normal(layout.n_v))
        _, rhs = assemble_heat(s, rates, 0.05, mat, Loads())
        assert rhs.sum() >= 0.0


def test_rejects_nonpositive_dt():
    grid, layout = build_grid(2, 2, 1.0, 1.0, {"left"})
    s = PlateState.zeros(grid, layout)
    with pytest.raises(AssemblyError):
        assemble_mech(s, s.copy(), 0.0, simple_material(), Loads())
    with pytest.raises(AssemblyError):
        assemble_heat(s, None, -0.1, simple_material(), Loads())


def test_negative_mu_flat_rejected():
    grid, layout = build_grid(2, 2, 1.0, 1.0, {"left"})
    s = PlateState.zeros(grid, layout)
    mat = simple_material(kappa=1.0)
    with pytest.raises(AssemblyError, match="nonnegative"):
        assemble_heat(s, None, 0.1, mat, Loads(mu_flat=lambda x, y, t: -np.ones_like(x)))
