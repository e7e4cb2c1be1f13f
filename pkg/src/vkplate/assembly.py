"""Residuals and matrices for the coupled plate system.

The mechanical unknowns are the in-plane displacement u and the deflection
v; their time-discrete weak system (backward differences for all rates) is
assembled as a residual over the free DOFs together with its consistent
tangent, including the geometric terms from the membrane strain

    E = sym(grad u) + 1/2 grad v (x) grad v

and the rate pairing

    Edot = sym(grad du) + grad dv (.) grad v^{n+1}.

The temperature satisfies a linear implicit-Euler system with Robin data on
the whole boundary and a dissipation source that is active only when the
regime viscosity tensor is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .constitutive import MaterialSet
from .elements import ElementTables, build_tables
from .grid import DofLayout, Grid2D


class AssemblyError(ValueError):
    """Invalid assembly request."""


@dataclass
class PlateState:
    """Discrete fields at one time instant."""

    t: float
    u_dofs: np.ndarray
    v_dofs: np.ndarray
    mu_dofs: np.ndarray
    grid: Grid2D
    layout: DofLayout

    @classmethod
    def zeros(cls, grid: Grid2D, layout: DofLayout, t: float = 0.0) -> "PlateState":
        return cls(
            t=t,
            u_dofs=np.zeros(layout.n_u),
            v_dofs=np.zeros(layout.n_v),
            mu_dofs=np.zeros(layout.n_mu),
            grid=grid,
            layout=layout,
        )

    def copy(self, t: Optional[float] = None) -> "PlateState":
        return PlateState(
            t=self.t if t is None else t,
            u_dofs=self.u_dofs.copy(),
            v_dofs=self.v_dofs.copy(),
            mu_dofs=self.mu_dofs.copy(),
            grid=self.grid,
            layout=self.layout,
        )

    def mech_vector(self) -> np.ndarray:
        return np.concatenate([self.u_dofs, self.v_dofs])

    def set_mech_vector(self, x: np.ndarray) -> None:
        n_u = self.layout.n_u
        self.u_dofs = x[:n_u].copy()
        self.v_dofs = x[n_u:].copy()


ScalarField = Callable[..., np.ndarray]


@dataclass(frozen=True)
class Loads:
    """External data: transverse force, boundary temperature, test body force.

    All fields are callables of (x1, x2, t).  ``gu_test`` is a test-only
    in-plane body force used for manufactured solutions; the model itself
    has a zero right-hand side in the displacement equation.
    """

    f2d: Optional[ScalarField] = None
    mu_flat: Optional[ScalarField] = None
    gu_test: Optional[Callable[..., tuple]] = None

    def eval_f2d(self, x, y, t):
        if self.f2d is None:
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.f2d(x, y, t), dtype=float), x.shape)

    def eval_mu_flat(self, x, y, t):
        if self.mu_flat is None:
            return np.zeros_like(x)
        vals = np.broadcast_to(np.asarray(self.mu_flat(x, y, t), dtype=float), x.shape)
        if np.any(vals < 0.0):
            raise AssemblyError("external temperature mu_flat must be nonnegative")
        return vals

    def eval_gu(self, x, y, t):
        if self.gu_test is None:
            return np.zeros(x.shape + (2,))
        g1, g2 = self.gu_test(x, y, t)
        out = np.empty(x.shape + (2,))
        out[..., 0] = np.broadcast_to(np.asarray(g1, dtype=float), x.shape)
        out[..., 1] = np.broadcast_to(np.asarray(g2, dtype=float), x.shape)
        return out


@dataclass
class AssembledMech:
    residual: np.ndarray                 # over free mechanical DOFs
    jacobian: Optional[sp.csr_matrix]    # free x free; None if not requested


@dataclass
class Workspace:
    """Precomputed tables and scatter maps for one grid."""

    grid: Grid2D
    layout: DofLayout
    tabs: ElementTables
    elem_u: np.ndarray          # (ne, 8) mech indices
    elem_v: np.ndarray          # (ne, 16) mech indices (offset by n_u)
    elem_v_local: np.ndarray    # (ne, 16) indices into the v DOF vector
    elem_mu: np.ndarray         # (ne, 4)
    elem_origin: np.ndarray     # (ne, 2)
    qp_xy: np.ndarray           # (ne, nq, 2) physical quadrature points
    gu_basis: np.ndarray        # (nq, 8, 2, 2): trial/test gradient basis for u
    mech_rows: np.ndarray       # scatter rows for 24x24 element blocks
    mech_cols: np.ndarray


def make_workspace(grid: Grid2D, layout: DofLayout) -> Workspace:
    tabs = build_tables(grid.hx, grid.hy)
    elem_u = layout.elem_u_dofs()
    elem_v_local = layout.elem_v_dofs()
    elem_v = elem_v_local + layout.n_u
    elem_mu = layout.elem_mu_dofs()
    origin = grid.coords[grid.elem_nodes[:, 0]]
    qp_xy = origin[:, None, :] + tabs.q_offsets[None, :, :]

    nq = tabs.qw.size
    gu = np.zeros((nq, 8, 2, 2))
    for a in range(4):
        for c in range(2):
            gu[:, 2 * a + c, c, :] = tabs.dn_q1[:, a, :]

    dofs24 = np.concatenate([elem_u, elem_v], axis=1)
    rows = np.repeat(dofs24, 24, axis=1).ravel()
    cols = np.tile(dofs24, (1, 24)).ravel()
    return Workspace(
        grid=grid, layout=layout, tabs=tabs,
        elem_u=elem_u, elem_v=elem_v, elem_v_local=elem_v_local, elem_mu=elem_mu,
        elem_origin=origin, qp_xy=qp_xy, gu_basis=gu,
        mech_rows=rows, mech_cols=cols,
    )


def membrane_strain(grad_u: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """E = sym(grad_u) + 1/2 grad_v (x) grad_v."""
    gu = np.asarray(grad_u, dtype=float)
    gv = np.asarray(grad_v, dtype=float)
    sym = 0.5 * (gu + np.swapaxes(gu, -1, -2))
    return sym + 0.5 * gv[..., :, None] * gv[..., None, :]


def membrane_strain_rate(grad_du: np.ndarray, grad_v: np.ndarray, grad_dv: np.ndarray) -> np.ndarray:
    """Edot = sym(grad_du) + grad_dv (.) grad_v."""
    gdu = np.asarray(grad_du, dtype=float)
    gv = np.asarray(grad_v, dtype=float)
    gdv = np.asarray(grad_dv, dtype=float)
    sym = 0.5 * (gdu + np.swapaxes(gdu, -1, -2))
    outer = gdv[..., :, None] * gv[..., None, :]
    return sym + 0.5 * (outer + np.swapaxes(outer, -1, -2))


def _fields_at_qp(ws: Workspace, u_dofs: np.ndarray, v_dofs: np.ndarray):
    """Per-element quadrature-point gradients and Hessians."""
    U = u_dofs[ws.elem_u].reshape(-1, 4, 2)
    V = v_dofs[ws.elem_v_local]
    tabs = ws.tabs
    grad_u = np.einsum("eai,qaj->eqij", U, tabs.dn_q1)
    grad_v = np.einsum("eA,qAj->eqj", V, tabs.dn_bfs)
    hess_v = np.einsum("eA,qAij->eqij", V, tabs.d2n_bfs)
    return grad_u, grad_v, hess_v


def mu_at_qp(ws: Workspace, mu_dofs: np.ndarray) -> np.ndarray:
    M = mu_dofs[ws.elem_mu]
    return np.einsum("ea,qa->eq", M, ws.tabs.n_q1)


def assemble_mech(
    state_prev: PlateState,
    state_guess: PlateState,
    dt: float,
    mat: MaterialSet,
    loads: Loads,
    full_vectors: bool = False,
    with_jacobian: bool = True,
) -> AssembledMech:
    """Residual and consistent tangent of the time-discrete mechanical system.

    ``state_guess`` carries the candidate fields at t^{n+1}; its ``mu_dofs``
    enter the stress bracket when the material has a thermal stress (heat is
    then solved before mechanics).  With ``full_vectors`` the residual over
    all mechanical DOFs is returned instead of the free restriction (the
    jacobian is always free x free); ``with_jacobian=False`` skips the
    tangent, which matters when probing the residual many times.
    """
    if dt <= 0.0:
        raise AssemblyError(f"dt must be positive, got {dt}")
    if state_prev.grid is not state_guess.grid:
        raise AssemblyError("states must share one grid")
    ws = _workspace_of(state_prev)
    tabs = ws.tabs
    layout = ws.layout
    t_new = state_prev.t + dt

    grad_u, grad_v, hess_v = _fields_at_qp(ws, state_guess.u_dofs, state_guess.v_dofs)
    grad_u0, grad_v0, hess_v0 = _fields_at_qp(ws, state_prev.u_dofs, state_prev.v_dofs)
    grad_du = (grad_u - grad_u0) / dt
    grad_dv = (grad_v - grad_v0) / dt
    hess_dv = (hess_v - hess_v0) / dt

    E = membrane_strain(grad_u, grad_v)
    Edot = membrane_strain_rate(grad_du, grad_v, grad_dv)

    c_el = mat.c_el.entries
    c_vi = mat.c_visc.entries
    S = np.einsum("ijkl,eqkl->eqij", c_el, E) + np.einsum("ijkl,eqkl->eqij", c_vi, Edot)
    if mat.has_thermal_stress:
        mu_q = mu_at_qp(ws, state_guess.mu_dofs)
        S = S + mu_q[:, :, None, None] * mat.b_thermal[None, None, :, :]
    Mb = (np.einsum("ijkl,eqkl->eqij", c_el, hess_v)
          + np.einsum("ijkl,eqkl->eqij", c_vi, hess_dv)) / 12.0

    w = tabs.qw
    xq, yq = ws.qp_xy[..., 0], ws.qp_xy[..., 1]

    # residual
    r_u = np.einsum("q,eqij,qmij->em", w, S, ws.gu_basis)
    gu_vals = loads.eval_gu(xq, yq, t_new)
    if loads.gu_test is not None:
        for c in range(2):
            r_u[:, c::2] -= np.einsum("q,eq,qa->ea", w, gu_vals[..., c], tabs.n_q1)
    s_gv = np.einsum("eqij,eqj->eqi", S, grad_v)
    r_v = np.einsum("q,eqi,qAi->eA", w, s_gv, tabs.dn_bfs)
    r_v += np.einsum("q,eqij,qAij->eA", w, Mb, tabs.d2n_bfs)
    f_vals = loads.eval_f2d(xq, yq, t_new)
    r_v -= np.einsum("q,eq,qA->eA", w, f_vals, tabs.n_bfs)

    residual = np.zeros(layout.n_mech)
    np.add.at(residual, ws.elem_u.ravel(), r_u.ravel())
    np.add.at(residual, ws.elem_v.ravel(), r_v.ravel())
    free = layout.mech_free
    if not with_jacobian:
        r = residual if full_vectors else residual[free]
        return AssembledMech(residual=r, jacobian=None)

    # tangent
    c_wr = c_el + c_vi / dt
    su_m = np.einsum("ijkl,qmkl->qmij", c_wr, ws.gu_basis)
    # dE and dEdot contributions from deflection trial functions share the
    # rank-one structure (vector (.) grad trial); the minor symmetry of the
    # tensors turns the symmetrized product into a plain contraction
    vec_el = grad_v                       # from dE
    vec_vi = grad_v / dt + grad_dv        # from dEdot
    sv_m = np.einsum("ijkl,eqk,qAl->eqAij", c_el, vec_el, tabs.dn_bfs)
    sv_m += np.einsum("ijkl,eqk,qAl->eqAij", c_vi, vec_vi, tabs.dn_bfs)

    j_uu = np.einsum("q,qnij,qmij->mn", w, su_m, ws.gu_basis)
    j_uv = np.einsum("q,eqAij,qmij->emA", w, sv_m, ws.gu_basis)
    j_vu = np.einsum("q,qnij,eqj,qAi->eAn", w, su_m, grad_v, tabs.dn_bfs)
    j_vv = np.einsum("q,eqBij,eqj,qAi->eAB", w, sv_m, grad_v, tabs.dn_bfs)
    j_vv += np.einsum("q,eqij,qBj,qAi->eAB", w, S, tabs.dn_bfs, tabs.dn_bfs)
    mb_m = np.einsum("ijkl,qBkl->qBij", c_wr, tabs.d2n_bfs) / 12.0
    j_vv += np.einsum("q,qBij,qAij->AB", w, mb_m, tabs.d2n_bfs)[None, :, :]

    ne = ws.grid.n_elems
    j_full = np.empty((ne, 24, 24))
    j_full[:, :8, :8] = j_uu[None, :, :]
    j_full[:, :8, 8:] = j_uv
    j_full[:, 8:, :8] = j_vu
    j_full[:, 8:, 8:] = j_vv

    n_mech = layout.n_mech
    jac = sp.coo_matrix(
        (j_full.ravel(), (ws.mech_rows, ws.mech_cols)), shape=(n_mech, n_mech)
    ).tocsr()
    jac_free = jac[free][:, free]
    if full_vectors:
        return AssembledMech(residual=residual, jacobian=jac_free)
    return AssembledMech(residual=residual[free], jacobian=jac_free)


@dataclass
class Rates:
    """Backward-difference DOF rates of the mechanical fields."""

    u: np.ndarray
    v: np.ndarray


def dissipation_source_density(
    ws: Workspace, state_prev: PlateState, rates: Rates, dt: float, mat: MaterialSet
) -> np.ndarray:
    """Pointwise heat source from viscous dissipation, (ne, nq)."""
    v_next = state_prev.v_dofs + dt * rates.v
    grad_du, grad_dv, hess_dv = _fields_at_qp(ws, rates.u, rates.v)
    grad_v1 = np.einsum("eA,qAj->eqj", v_next[ws.elem_v_local], ws.tabs.dn_bfs)
    Edot = membrane_strain_rate(grad_du, grad_v1, grad_dv)
    c_a = mat.c_visc_alpha.entries
    xi = np.einsum("eqij,ijkl,eqkl->eq", Edot, c_a, Edot)
    xi += np.einsum("eqij,ijkl,eqkl->eq", hess_dv, c_a, hess_dv) / 12.0
    return xi


def assemble_heat(
    state_prev: PlateState,
    rates: Optional[Rates],
    dt: float,
    mat: MaterialSet,
    loads: Loads,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Implicit-Euler system for the nodal temperature at t^{n+1}.

    Returns (H, rhs) with H = (cv/dt) M + K + kappa * M_Gamma and
    rhs = (cv/dt) M mu^n + kappa * b_Gamma + dissipation source.  The source
    is skipped entirely when the regime viscosity tensor vanishes, keeping
    the temperature path bitwise independent of the mechanics there.
    """
    if dt <= 0.0:
        raise AssemblyError(f"dt must be positive, got {dt}")
    ws = _workspace_of(state_prev)
    tabs = ws.tabs
    layout = ws.layout
    grid = ws.grid
    n_mu = layout.n_mu
    t_new = state_prev.t + dt

    w = tabs.qw
    m_loc = np.einsum("q,qa,qb->ab", w, tabs.n_q1, tabs.n_q1)
    k_loc = np.einsum("q,ij,qbj,qai->ab", w, mat.k_tilde, tabs.dn_q1, tabs.dn_q1)

    ne = grid.n_elems
    rows = np.repeat(ws.elem_mu, 4, axis=1).ravel()
    cols = np.tile(ws.elem_mu, (1, 4)).ravel()
    h_loc = np.broadcast_to(
        (mat.cv_bar / dt) * m_loc + k_loc, (ne, 4, 4)
    )
    mats = [sp.coo_matrix((h_loc.ravel(), (rows, cols)), shape=(n_mu, n_mu))]

    rhs = np.zeros(n_mu)
    m_mu_prev = np.einsum("ab,eb->ea", m_loc, state_prev.mu_dofs[ws.elem_mu])
    np.add.at(rhs, ws.elem_mu.ravel(), (mat.cv_bar / dt) * m_mu_prev.ravel())

    if mat.kappa > 0.0:
        br, bc, bv, load = _robin_boundary(ws, loads, t_new)
        mats.append(
            sp.coo_matrix((mat.kappa * bv, (br, bc)), shape=(n_mu, n_mu))
        )
        rhs += mat.kappa * load

    if mat.has_dissipation_source and rates is not None:
        xi = dissipation_source_density(ws, state_prev, rates, dt, mat)
        s_elem = np.einsum("q,eq,qa->ea", w, xi, tabs.n_q1)
        np.add.at(rhs, ws.elem_mu.ravel(), s_elem.ravel())

    H = sum(mats).tocsr()
    return H, rhs


def _robin_boundary(ws: Workspace, loads: Loads, t_new: float):
    """Boundary mass matrix entries and external-temperature load on Gamma'."""
    grid = ws.grid
    tabs = ws.tabs
    rows, cols, vals = [], [], []
    load = np.zeros(ws.layout.n_mu)
    en = tabs.edge_n
    for a, b, length, _edge in grid.boundary_segments():
        xa, ya = grid.coords[a]
        xb, yb = grid.coords[b]
        xs = xa + (xb - xa) * tabs.edge_q
        ys = ya + (yb - ya) * tabs.edge_q
        wseg = tabs.edge_w * length
        m2 = np.einsum("q,qa,qb->ab", wseg, en, en)
        seg = (a, b)
        for ia, na in enumerate(seg):
            for ib, nb in enumerate(seg):
                rows.append(na)
                cols.append(nb)
                vals.append(m2[ia, ib])
        mf = loads.eval_mu_flat(xs, ys, t_new)
        fvec = np.einsum("q,q,qa->a", wseg, mf, en)
        load[a] += fvec[0]
        load[b] += fvec[1]
    return np.array(rows), np.array(cols), np.array(vals), load


# cache one workspace per grid signature; grids are immutable value objects
_WORKSPACES: dict[tuple, Workspace] = {}


def _grid_key(grid: Grid2D) -> tuple:
    return (grid.nx, grid.ny, grid.lx, grid.ly, tuple(sorted(grid.dirichlet_edges)))


def _workspace_of(state: PlateState) -> Workspace:
    key = _grid_key(state.grid)
    ws = _WORKSPACES.get(key)
    if ws is None:
        ws = make_workspace(state.grid, state.layout)
        _WORKSPACES[key] = ws
    return ws
