"""Implicit time stepping of the coupled plate system.

One backward-Euler step solves the quasistatic mechanical system by Newton
and the linear heat system directly; the order of the two solves follows
the one-sided coupling of the scaling regime:

  * alpha = 2: heat first (it is autonomous), its result enters the
    thermal-stress term of the mechanical bracket;
  * alpha = 4: mechanics first, its backward-difference rates feed the
    dissipation source of the heat equation;
  * alpha in (2, 4): the subproblems are independent; mechanics runs first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import Loads, PlateState, Rates, assemble_heat, assemble_mech
from .constitutive import MaterialSet
from .diagnostics import EnergyLedger
from .elements import hermite_dofs_from_callables
from .grid import DofLayout, Grid2D


class NewtonError(RuntimeError):
    """Newton failed; carries the final residual norm."""

    def __init__(self, message: str, residual_norm: float):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass
class SimParams:
    dt: float
    t_end: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    linear_solver: str = "direct"       # "direct" or "cg" (heat system only)
    linear_solver_tol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end <= 0.0 or self.dt > self.t_end * (1 + 1e-12):
            raise ValueError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class Trajectory:
    """Snapshots at every discrete time plus the per-step energy ledger."""

    states: list[PlateState]
    ledger: EnergyLedger
    newton_history: list[list[float]] = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def _solve_heat_system(H, rhs, params: SimParams) -> np.ndarray:
    if params.linear_solver == "cg":
        d = H.diagonal()
        precond = spla.LinearOperator(H.shape, matvec=lambda x: x / d)
        mu, info = spla.cg(H, rhs, rtol=params.linear_solver_tol, atol=0.0, M=precond)
        if info != 0:
            raise RuntimeError(f"cg did not converge for the heat system (info={info})")
        return mu
    return spla.spsolve(H.tocsc(), rhs)


def newton_mech(
    state_prev: PlateState,
    state_guess: PlateState,
    dt: float,
    mat: MaterialSet,
    loads: Loads,
    params: SimParams,
) -> tuple[PlateState, list[float]]:
    """Newton iteration on the free mechanical DOFs, previous state as guess."""
    layout = state_prev.layout
    free = layout.mech_free
    state = state_guess
    out = assemble_mech(state_prev, state, dt, mat, loads)
    r0 = float(np.linalg.norm(out.residual))
    tol = params.newton_tol * (1.0 + r0)
    history = [r0]
    rnorm = r0
    for _ in range(params.newton_max_iter):
        if rnorm <= tol:
            return state, history
        try:
            lu = spla.splu(out.jacobian.tocsc())
        except RuntimeError as exc:
            raise NewtonError(f"singular mechanical tangent: {exc}", rnorm) from exc
        delta = lu.solve(-out.residual)
        if not np.all(np.isfinite(delta)):
            raise NewtonError("mechanical tangent produced non-finite update", rnorm)
        x = state.mech_vector()
        x[free] += delta
        state = state.copy()
        state.set_mech_vector(x)
        out = assemble_mech(state_prev, state, dt, mat, loads)
        rnorm = float(np.linalg.norm(out.residual))
        history.append(rnorm)
    if rnorm <= tol:
        return state, history
    raise NewtonError(
        f"Newton did not converge in {params.newton_max_iter} iterations "
        f"(residual norm {rnorm:.3e}, tolerance {tol:.3e})",
        rnorm,
    )


def step(
    state_n: PlateState,
    dt: float,
    mat: MaterialSet,
    loads: Loads,
    params: SimParams,
) -> tuple[PlateState, list[float]]:
    """Advance one implicit step with regime-dependent operator ordering."""
    t_next = state_n.t + dt
    guess = state_n.copy(t=t_next)

    if mat.alpha == 2.0:
        # heat is autonomous (zero source); solve it first so the new
        # temperature can enter the mechanical stress bracket
        H, rhs = assemble_heat(state_n, None, dt, mat, loads)
        guess.mu_dofs = _solve_heat_system(H, rhs, params)
        state, history = newton_mech(state_n, guess, dt, mat, loads, params)
        return state, history

    state, history = newton_mech(state_n, guess, dt, mat, loads, params)
    if mat.has_dissipation_source:
        rates = Rates(
            u=(state.u_dofs - state_n.u_dofs) / dt,
            v=(state.v_dofs - state_n.v_dofs) / dt,
        )
        H, rhs = assemble_heat(state_n, rates, dt, mat, loads)
        state.mu_dofs = _solve_heat_system(H, rhs, params)
    else:
        H, rhs = assemble_heat(state_n, None, dt, mat, loads)
        state.mu_dofs = _solve_heat_system(H, rhs, params)
    return state, history


@dataclass
class InitialConditions:
    """Closed-form initial fields, interpolated nodally.

    Deflection derivatives may be omitted; they are then approximated by
    central finite differences of ``v0`` with a small fixed step.
    """

    u0: Optional[Callable] = None      # (x, y) -> (u1, u2)
    v0: Optional[Callable] = None      # (x, y) -> value
    v0_dx: Optional[Callable] = None
    v0_dy: Optional[Callable] = None
    v0_dxy: Optional[Callable] = None
    mu0: Optional[Callable] = None


def interpolate_ic(grid: Grid2D, layout: DofLayout, ic: InitialConditions) -> PlateState:
    state = PlateState.zeros(grid, layout)
    x, y = grid.coords[:, 0], grid.coords[:, 1]
    if ic.u0 is not None:
        u1, u2 = ic.u0(x, y)
        state.u_dofs[0::2] = np.broadcast_to(np.asarray(u1, float), x.shape)
        state.u_dofs[1::2] = np.broadcast_to(np.asarray(u2, float), x.shape)
    if ic.v0 is not None:
        state.v_dofs = hermite_dofs_from_callables(
            grid.coords, ic.v0, ic.v0_dx, ic.v0_dy, ic.v0_dxy
        )
    if ic.mu0 is not None:
        state.mu_dofs = np.broadcast_to(np.asarray(ic.mu0(x, y), float), x.shape).astype(float)

    # initial data must honor the clamped boundary (checked on value DOFs,
    # then all constrained DOFs are set exactly)
    bad_u = np.abs(state.u_dofs[layout.u_constrained]).max(initial=0.0)
    bad_v = np.abs(state.v_dofs[4 * layout.dirichlet_nodes]).max(initial=0.0)
    if max(bad_u, bad_v) > 1e-10:
        raise ValueError(
            f"initial fields violate the clamped boundary (max magnitude {max(bad_u, bad_v):.3e})"
        )
    state.u_dofs[layout.u_constrained] = 0.0
    state.v_dofs[layout.v_constrained] = 0.0
    return state


def run(
    grid: Grid2D,
    layout: DofLayout,
    mat: MaterialSet,
    loads: Loads,
    ic: InitialConditions,
    params: SimParams,
) -> Trajectory:
    """Advance from t = 0 to t_end, recording every state and ledger row."""
    n_steps = int(round(params.t_end / params.dt))
    if abs(n_steps * params.dt - params.t_end) > 1e-9 * max(params.t_end, 1.0):
        raise ValueError(
            f"t_end = {params.t_end} is not an integer multiple of dt = {params.dt}"
        )
    state = interpolate_ic(grid, layout, ic)
    ledger = EnergyLedger.start(state, mat)
    traj = Trajectory(states=[state], ledger=ledger)
    for _ in range(n_steps):
        new_state, history = step(state, params.dt, mat, loads, params)
        ledger.append_step(state, new_state, mat, loads)
        traj.states.append(new_state)
        traj.newton_history.append(history)
        state = new_state
    return traj
