"""Energy bookkeeping and state/ledger export.

The ledger tracks the discrete counterpart of the model's energy balance:
elastic-energy change plus viscous dissipation plus thermal-coupling work
minus external work.  Rates are the backward differences of consecutive
snapshots, evaluated with the same quadrature as the assembly, so the
viscous/coupling/external terms reproduce the solver's internal pairings
exactly and the balance residual isolates the time-discretization error.

Dissipation is always measured with the full reduced viscosity tensor; the
heat-equation source instead uses the regime tensor (zero below the top
scaling), which is a genuinely different object and lives in the assembly
module.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    Loads,
    PlateState,
    _fields_at_qp,
    _workspace_of,
    membrane_strain,
    membrane_strain_rate,
    mu_at_qp,
)
from .constitutive import MaterialSet


def integral_mu(state: PlateState) -> float:
    """Quadrature value of the temperature integral over the midsurface."""
    ws = _workspace_of(state)
    return float(np.einsum("q,eq->", ws.tabs.qw, mu_at_qp(ws, state.mu_dofs)))


def elastic_energy(state: PlateState, mat: MaterialSet) -> float:
    """Membrane plus bending energy, 1/2 Q(E) + 1/24 Q(hess v)."""
    ws = _workspace_of(state)
    grad_u, grad_v, hess_v = _fields_at_qp(ws, state.u_dofs, state.v_dofs)
    E = membrane_strain(grad_u, grad_v)
    c = mat.c_el.entries
    dens = 0.5 * np.einsum("eqij,ijkl,eqkl->eq", E, c, E)
    dens += np.einsum("eqij,ijkl,eqkl->eq", hess_v, c, hess_v) / 24.0
    return float(np.einsum("q,eq->", ws.tabs.qw, dens))


def step_increments(
    state_prev: PlateState, state_next: PlateState, mat: MaterialSet, loads: Loads
) -> tuple[float, float, float]:
    """(viscous, coupling, external) work increments of one backward step."""
    dt = state_next.t - state_prev.t
    if dt <= 0.0:
        raise ValueError("states must be consecutive in time")
    ws = _workspace_of(state_prev)
    w = ws.tabs.qw

    grad_u1, grad_v1, hess_v1 = _fields_at_qp(ws, state_next.u_dofs, state_next.v_dofs)
    grad_u0, grad_v0, hess_v0 = _fields_at_qp(ws, state_prev.u_dofs, state_prev.v_dofs)
    grad_du = (grad_u1 - grad_u0) / dt
    grad_dv = (grad_v1 - grad_v0) / dt
    hess_dv = (hess_v1 - hess_v0) / dt
    Edot = membrane_strain_rate(grad_du, grad_v1, grad_dv)

    c_r = mat.c_visc.entries
    dens = np.einsum("eqij,ijkl,eqkl->eq", Edot, c_r, Edot)
    dens += np.einsum("eqij,ijkl,eqkl->eq", hess_dv, c_r, hess_dv) / 12.0
    visc = dt * float(np.einsum("q,eq->", w, dens))

    cpl = 0.0
    if mat.has_thermal_stress:
        mu_q = mu_at_qp(ws, state_next.mu_dofs)
        b_edot = np.einsum("ij,eqij->eq", mat.b_thermal, Edot)
        cpl = dt * float(np.einsum("q,eq,eq->", w, mu_q, b_edot))

    ext = 0.0
    if loads.f2d is not None:
        xq, yq = ws.qp_xy[..., 0], ws.qp_xy[..., 1]
        f_vals = loads.eval_f2d(xq, yq, state_next.t)
        vdot = np.einsum(
            "eA,qA->eq",
            (state_next.v_dofs - state_prev.v_dofs)[ws.elem_v_local] / dt,
            ws.tabs.n_bfs,
        )
        ext = dt * float(np.einsum("q,eq,eq->", w, f_vals, vdot))
    return visc, cpl, ext


@dataclass
class EnergyLedger:
    """Per-step energy accounts; one row per snapshot, step 0 included."""

    t: list = field(default_factory=list)
    elastic: list = field(default_factory=list)
    visc_diss_cum: list = field(default_factory=list)
    cpl_work_cum: list = field(default_factory=list)
    ext_work_cum: list = field(default_factory=list)
    balance_residual: list = field(default_factory=list)
    min_mu: list = field(default_factory=list)

    @classmethod
    def start(cls, state0: PlateState, mat: MaterialSet) -> "EnergyLedger":
        led = cls()
        led.t.append(state0.t)
        led.elastic.append(elastic_energy(state0, mat))
        led.visc_diss_cum.append(0.0)
        led.cpl_work_cum.append(0.0)
        led.ext_work_cum.append(0.0)
        led.balance_residual.append(0.0)
        led.min_mu.append(float(state0.mu_dofs.min()))
        return led

    def append_step(
        self, state_prev: PlateState, state_next: PlateState, mat: MaterialSet, loads: Loads
    ) -> None:
        visc, cpl, ext = step_increments(state_prev, state_next, mat, loads)
        if visc < -1e-13 * (1.0 + abs(self.elastic[0])):
            raise AssertionError(f"negative viscous dissipation increment: {visc}")
        phi = elastic_energy(state_next, mat)
        self.t.append(state_next.t)
        self.elastic.append(phi)
        self.visc_diss_cum.append(self.visc_diss_cum[-1] + visc)
        self.cpl_work_cum.append(self.cpl_work_cum[-1] + cpl)
        self.ext_work_cum.append(self.ext_work_cum[-1] + ext)
        self.balance_residual.append(
            (phi - self.elastic[0])
            + self.visc_diss_cum[-1]
            + self.cpl_work_cum[-1]
            - self.ext_work_cum[-1]
        )
        self.min_mu.append(float(state_next.mu_dofs.min()))

    def normalized_residuals(self) -> np.ndarray:
        scale = max(1.0, self.elastic[0] + self.ext_work_cum[-1])
        return np.asarray(self.balance_residual) / scale

    def csv_header(self):
        return ["t", "elastic", "visc_diss_cum", "cpl_work_cum", "ext_work_cum",
                "balance_residual", "min_mu"]

    def csv_rows(self):
        for row in zip(self.t, self.elastic, self.visc_diss_cum, self.cpl_work_cum,
                       self.ext_work_cum, self.balance_residual, self.min_mu):
            yield row


def balance_residual(traj, mat: MaterialSet, loads: Loads) -> np.ndarray:
    """Recompute the per-step balance residuals from the raw snapshots."""
    states = traj.states
    if len(states) < 2:
        raise ValueError("trajectory must hold at least two snapshots")
    led = EnergyLedger.start(states[0], mat)
    for prev, nxt in zip(states[:-1], states[1:]):
        led.append_step(prev, nxt, mat, loads)
    return np.asarray(led.balance_residual)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def export_csv(obj, path) -> None:
    """Write a ledger or any (csv_header, csv_rows) table; 17 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(obj.csv_header()) + "\n")
    for row in obj.csv_rows():
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(buf.getvalue())


def export_vtk(state: PlateState, path) -> None:
    """Legacy ASCII VTK structured grid with nodal u, v, mu point data."""
    grid = state.grid
    npts = grid.n_nodes
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"vkplate state t={_fmt(state.t)}\n")
        f.write("ASCII\n")
        f.write("DATASET STRUCTURED_GRID\n")
        f.write(f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1\n")
        f.write(f"POINTS {npts} double\n")
        for x, y in state.grid.coords:
            f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        f.write(f"POINT_DATA {npts}\n")
        f.write("VECTORS u double\n")
        for n in range(npts):
            f.write(f"{_fmt(state.u_dofs[2 * n])} {_fmt(state.u_dofs[2 * n + 1])} 0\n")
        f.write("SCALARS v double 1\n")
        f.write("LOOKUP_TABLE default\n")
        for n in range(npts):
            f.write(f"{_fmt(state.v_dofs[4 * n])}\n")
        f.write("SCALARS mu double 1\n")
        f.write("LOOKUP_TABLE default\n")
        for n in range(npts):
            f.write(f"{_fmt(state.mu_dofs[n])}\n")
