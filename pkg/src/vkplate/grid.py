"""Structured rectangular mesh of the plate midsurface with DOF maps.

Nodes are numbered lexicographically (x fastest), elements likewise.  Three
fields live on the grid: the in-plane displacement (2 bilinear DOFs per
node), the deflection (4 Hermite DOFs per node: value, d1, d2, d12), and
the temperature (1 bilinear DOF per node).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EDGES = ("left", "right", "bottom", "top")

# Hermite DOF slots per node for the deflection
V_VALUE, V_DX, V_DY, V_DXY = 0, 1, 2, 3


class GridError(ValueError):
    """Invalid mesh construction request."""


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    lx: float
    ly: float
    dirichlet_edges: frozenset
    coords: np.ndarray = field(init=False, repr=False)      # (n_nodes, 2)
    elem_nodes: np.ndarray = field(init=False, repr=False)  # (n_elems, 4), ccw

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise GridError(f"need nx, ny >= 2, got ({self.nx}, {self.ny})")
        if self.lx <= 0.0 or self.ly <= 0.0:
            raise GridError(f"side lengths must be positive, got ({self.lx}, {self.ly})")
        edges = frozenset(self.dirichlet_edges)
        unknown = edges - set(EDGES)
        if unknown:
            raise GridError(f"unknown edge tags {sorted(unknown)}; valid: {EDGES}")
        if not edges:
            raise GridError(
                "mechanical problem is not well-posed without Gamma'_D "
                "(empty dirichlet_edges leaves rigid motions in the kernel)"
            )
        object.__setattr__(self, "dirichlet_edges", edges)

        xs = np.linspace(0.0, self.lx, self.nx + 1)
        ys = np.linspace(0.0, self.ly, self.ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        coords = np.column_stack([gx.ravel(), gy.ravel()])

        conn = np.empty((self.nx * self.ny, 4), dtype=np.int64)
        for j in range(self.ny):
            for i in range(self.nx):
                n00 = j * (self.nx + 1) + i
                conn[j * self.nx + i] = (n00, n00 + 1, n00 + self.nx + 2, n00 + self.nx + 1)

        # uniform axis-aligned rectangles: constant diagonal Jacobian
        hx, hy = self.lx / self.nx, self.ly / self.ny
        assert hx > 0.0 and hy > 0.0
        coords.flags.writeable = False
        conn.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "elem_nodes", conn)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    def node_id(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def edge_nodes(self, edge: str) -> np.ndarray:
        """Node ids along one boundary edge, in coordinate order."""
        if edge == "left":
            return np.array([self.node_id(0, j) for j in range(self.ny + 1)])
        if edge == "right":
            return np.array([self.node_id(self.nx, j) for j in range(self.ny + 1)])
        if edge == "bottom":
            return np.array([self.node_id(i, 0) for i in range(self.nx + 1)])
        if edge == "top":
            return np.array([self.node_id(i, self.ny) for i in range(self.nx + 1)])
        raise GridError(f"unknown edge {edge!r}")

    def boundary_segments(self) -> list[tuple[int, int, float, str]]:
        """All boundary segments (node_a, node_b, length, edge) of Gamma'."""
        segs = []
        for edge in EDGES:
            nodes = self.edge_nodes(edge)
            h = self.hy if edge in ("left", "right") else self.hx
            for a, b in zip(nodes[:-1], nodes[1:]):
                segs.append((int(a), int(b), h, edge))
        return segs


@dataclass(frozen=True)
class DofLayout:
    """Global DOF numbering and essential-constraint index sets.

    The mechanical vector stacks the displacement DOFs (2 per node,
    interleaved) followed by the deflection DOFs (4 per node).  The
    temperature has one DOF per node and no essential constraints (it is
    Robin on the whole boundary).
    """

    grid: Grid2D
    n_u: int = field(init=False)
    n_v: int = field(init=False)
    n_mu: int = field(init=False)
    dirichlet_nodes: np.ndarray = field(init=False, repr=False)
    u_constrained: np.ndarray = field(init=False, repr=False)
    v_constrained: np.ndarray = field(init=False, repr=False)
    mech_constrained: np.ndarray = field(init=False, repr=False)
    mech_free: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        n = g.n_nodes
        object.__setattr__(self, "n_u", 2 * n)
        object.__setattr__(self, "n_v", 4 * n)
        object.__setattr__(self, "n_mu", n)

        dir_nodes = np.unique(np.concatenate([g.edge_nodes(e) for e in sorted(g.dirichlet_edges)]))
        u_con = np.sort(np.concatenate([2 * dir_nodes, 2 * dir_nodes + 1]))
        # clamped: value and both first derivatives vanish; the cross
        # derivative is fixed as well (conforming, slightly stronger)
        v_con = np.sort(np.concatenate([4 * dir_nodes + k for k in range(4)]))
        mech_con = np.concatenate([u_con, self.n_u + v_con])
        all_mech = np.arange(self.n_u + self.n_v)
        mech_free = np.setdiff1d(all_mech, mech_con, assume_unique=True)
        for arr in (dir_nodes, u_con, v_con, mech_con, mech_free):
            arr.flags.writeable = False
        object.__setattr__(self, "dirichlet_nodes", dir_nodes)
        object.__setattr__(self, "u_constrained", u_con)
        object.__setattr__(self, "v_constrained", v_con)
        object.__setattr__(self, "mech_constrained", mech_con)
        object.__setattr__(self, "mech_free", mech_free)
        assert mech_con.size + mech_free.size == self.n_mech

    @property
    def n_mech(self) -> int:
        return self.n_u + self.n_v

    def u_dof(self, node: int, comp: int) -> int:
        return 2 * node + comp

    def v_dof(self, node: int, slot: int) -> int:
        return 4 * node + slot

    def elem_u_dofs(self) -> np.ndarray:
        """(n_elems, 8) displacement DOF ids, node-major, components interleaved."""
        conn = self.grid.elem_nodes
        return (2 * conn[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 8)

    def elem_v_dofs(self) -> np.ndarray:
        """(n_elems, 16) deflection DOF ids, node-major, slots interleaved."""
        conn = self.grid.elem_nodes
        return (4 * conn[:, :, None] + np.arange(4)[None, None, :]).reshape(-1, 16)

    def elem_mu_dofs(self) -> np.ndarray:
        return self.grid.elem_nodes


def build_grid(nx, ny, lx, ly, dirichlet_edges) -> tuple[Grid2D, DofLayout]:
    grid = Grid2D(nx=nx, ny=ny, lx=float(lx), ly=float(ly), dirichlet_edges=frozenset(dirichlet_edges))
    return grid, DofLayout(grid)
