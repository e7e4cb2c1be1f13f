"""Thin-slab eigenvalue study of the generalized Korn inequality.

On the slab (0,1)^2 x (-h/2, h/2) with a clamped lateral face, the best
constant in

    || grad u ||_{L2}  <=  C(h) || sym((grad z)^T grad u) ||_{L2}

is 1/sqrt(lambda_min) of the generalized eigenproblem A x = lambda B x,
where A discretizes the squared generalized symmetric gradient and B the
squared full gradient.  The study verifies the C(h) ~ 1/h scaling with
trilinear hexahedra; fields u with sym((grad z)^T grad u) = 0 are exactly
the maps A z + a with skew A, which the clamped face excludes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import gauss_rule_01

RHO_DEFAULT = 0.5


class KornError(ValueError):
    """Invalid Korn-study request."""


@dataclass(frozen=True)
class SlabMesh3D:
    """Trilinear hexahedral mesh of (0,1)^2 x (-h/2, h/2)."""

    h: float
    n: int
    nz: int
    dirichlet_edges: frozenset = frozenset({"left"})
    coords: np.ndarray = field(init=False, repr=False)
    elem_nodes: np.ndarray = field(init=False, repr=False)
    fixed_dofs: np.ndarray = field(init=False, repr=False)
    free_dofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.h <= 0.0:
            raise KornError(f"thickness must be positive, got {self.h}")
        if self.n < 2 or self.nz < 2:
            raise KornError(f"need n, nz >= 2, got ({self.n}, {self.nz})")
        edges = frozenset(self.dirichlet_edges)
        if not edges or edges - {"left", "right", "bottom", "top"}:
            raise KornError(f"invalid dirichlet edges {sorted(edges)}")
        object.__setattr__(self, "dirichlet_edges", edges)
        n, nz, h = self.n, self.nz, self.h
        xs = np.linspace(0.0, 1.0, n + 1)
        ys = np.linspace(0.0, 1.0, n + 1)
        zs = np.linspace(-h / 2.0, h / 2.0, nz + 1)
        gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
        coords = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

        def nid(i, j, k):
            return (k * (n + 1) + j) * (n + 1) + i

        conn = np.empty((n * n * nz, 8), dtype=np.int64)
        e = 0
        for k in range(nz):
            for j in range(n):
                for i in range(n):
                    conn[e] = (
                        nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                        nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1),
                        nid(i, j + 1, k + 1),
                    )
                    e += 1

        masks = {
            "left": coords[:, 0] == 0.0,
            "right": coords[:, 0] == 1.0,
            "bottom": coords[:, 1] == 0.0,
            "top": coords[:, 1] == 1.0,
        }
        fixed_nodes = np.where(np.logical_or.reduce([masks[e_] for e_ in sorted(edges)]))[0]
        fixed = np.sort(np.concatenate([3 * fixed_nodes + c for c in range(3)]))
        free = np.setdiff1d(np.arange(3 * coords.shape[0]), fixed, assume_unique=True)
        for arr in (coords, conn, fixed, free):
            arr.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "elem_nodes", conn)
        object.__setattr__(self, "fixed_dofs", fixed)
        object.__setattr__(self, "free_dofs", free)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.elem_nodes.shape[0]

    @property
    def spacings(self) -> tuple[float, float, float]:
        return 1.0 / self.n, 1.0 / self.n, self.h / self.nz


@dataclass(frozen=True)
class ZField:
    """Smooth comparison map z with gradient evaluator and admissibility data."""

    fn: Callable[[np.ndarray], np.ndarray]       # (..., 3) -> (..., 3)
    grad: Callable[[np.ndarray], np.ndarray]     # (..., 3) -> (..., 3, 3)
    rho: float = RHO_DEFAULT
    name: str = "custom"

    @classmethod
    def identity(cls) -> "ZField":
        return cls(
            fn=lambda x: np.array(x, dtype=float, copy=True),
            grad=lambda x: np.broadcast_to(np.eye(3), np.shape(x)[:-1] + (3, 3)).copy(),
            name="identity",
        )

    @classmethod
    def perturbed(cls, h: float, amplitude: float = 0.05, rho: float = RHO_DEFAULT) -> "ZField":
        """Identity plus an in-plane bump of size O(amplitude * h)."""

        def fn(x):
            x = np.asarray(x, dtype=float)
            out = x.copy()
            s = np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) * np.sin(np.pi * x[..., 2] / h)
            out[..., 0] = out[..., 0] + amplitude * h * s
            return out

        def grad(x):
            x = np.asarray(x, dtype=float)
            g = np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy()
            s1, s2, s3 = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1]), np.sin(np.pi * x[..., 2] / h)
            c1, c2, c3 = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1]), np.cos(np.pi * x[..., 2] / h)
            g[..., 0, 0] += amplitude * h * np.pi * c1 * s2 * s3
            g[..., 0, 1] += amplitude * h * np.pi * s1 * c2 * s3
            g[..., 0, 2] += amplitude * np.pi * s1 * s2 * c3
            return g

        return cls(fn=fn, grad=grad, rho=rho, name="perturbed")


def _hex_tables(slab: SlabMesh3D, n_gauss: int = 2):
    """Trilinear shape gradients and weights at the Gauss points of one hex."""
    g, w = gauss_rule_01(n_gauss)
    hx, hy, hz = slab.spacings
    pts = np.array([(a, b, c) for c in g for b in g for a in g])
    wts = np.array([wa * wb * wc for wc in w for wb in w for wa in w]) * hx * hy * hz
    corners = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
               (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    nq = len(pts)
    nloc = np.empty((nq, 8))
    dn = np.empty((nq, 8, 3))
    for a, (ci, cj, ck) in enumerate(corners):
        fx = np.where(ci, pts[:, 0], 1.0 - pts[:, 0])
        fy = np.where(cj, pts[:, 1], 1.0 - pts[:, 1])
        fz = np.where(ck, pts[:, 2], 1.0 - pts[:, 2])
        dfx = np.where(ci, 1.0, -1.0) / hx
        dfy = np.where(cj, 1.0, -1.0) / hy
        dfz = np.where(ck, 1.0, -1.0) / hz
        nloc[:, a] = fx * fy * fz
        dn[:, a, 0] = dfx * fy * fz
        dn[:, a, 1] = fx * dfy * fz
        dn[:, a, 2] = fx * fy * dfz
    offsets = pts * np.array([hx, hy, hz])
    return nloc, dn, wts, offsets


def validate_zfield(slab: SlabMesh3D, z: ZField) -> None:
    """Check det(grad z) >= rho and |grad z| <= 1/rho at every quadrature point."""
    _, _, _, offsets = _hex_tables(slab)
    origin = slab.coords[slab.elem_nodes[:, 0]]
    xq = origin[:, None, :] + offsets[None, :, :]
    g = z.grad(xq)
    det = np.linalg.det(g)
    if det.min() < z.rho:
        raise KornError(
            f"z field inadmissible: min det(grad z) = {det.min():.6g} < rho = {z.rho}"
        )
    norms = np.linalg.norm(g, axis=(-2, -1))
    if norms.max() > 1.0 / z.rho:
        raise KornError(
            f"z field inadmissible: max |grad z| = {norms.max():.6g} > 1/rho = {1.0 / z.rho}"
        )


def assemble_korn_forms(slab: SlabMesh3D, z: ZField) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Matrices of the generalized sym-gradient form (A) and gradient form (B)."""
    _, dn, w, offsets = _hex_tables(slab)
    conn = slab.elem_nodes
    origin = slab.coords[conn[:, 0]]
    xq = origin[:, None, :] + offsets[None, :, :]
    f = z.grad(xq)  # (ne, nq, 3, 3)

    # basis of grad u for local dof m = 3a + c: e_c (x) dn[q, a, :]
    nq = w.size
    basis = np.zeros((nq, 24, 3, 3))
    for a in range(8):
        for c in range(3):
            basis[:, 3 * a + c, c, :] = dn[:, a, :]

    # generalized strain of each basis function: sym(F^T (e_c (x) dn))
    g = np.einsum("eqci,qmcj->eqmij", f, basis)
    g_sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    a_loc = np.einsum("q,eqmij,eqnij->emn", w, g_sym, g_sym)
    b_loc = np.einsum("q,qmij,qnij->mn", w, basis, basis)

    dofs = (3 * conn[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 24)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    ndof = 3 * slab.n_nodes
    A = sp.coo_matrix((a_loc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    b_full = np.broadcast_to(b_loc, (slab.n_elems, 24, 24))
    B = sp.coo_matrix((b_full.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    return A, B


def sym_form_value(slab: SlabMesh3D, z: ZField, u_nodal: np.ndarray) -> float:
    """Direct quadrature of the squared generalized symmetric gradient.

    Computed pointwise (sym before squaring) so that exact-kernel fields
    cancel at each quadrature point instead of in large assembled sums.
    """
    _, dn, w, offsets = _hex_tables(slab)
    conn = slab.elem_nodes
    origin = slab.coords[conn[:, 0]]
    xq = origin[:, None, :] + offsets[None, :, :]
    f = z.grad(xq)
    u = u_nodal.reshape(-1, 3)[conn]          # (ne, 8, 3)
    grad_u = np.einsum("eac,qaj->eqcj", u, dn)  # (ne, nq, 3, 3)
    g = np.einsum("eqci,eqcj->eqij", f, grad_u)
    g_sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    return float(np.einsum("q,eqij,eqij->", w, g_sym, g_sym))


def gradient_form_value(slab: SlabMesh3D, u_nodal: np.ndarray) -> float:
    _, dn, w, offsets = _hex_tables(slab)
    conn = slab.elem_nodes
    u = u_nodal.reshape(-1, 3)[conn]
    grad_u = np.einsum("eac,qaj->eqcj", u, dn)
    return float(np.einsum("q,eqij,eqij->", w, grad_u, grad_u))


def korn_constant(
    slab: SlabMesh3D,
    z: ZField,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> tuple[float, float]:
    """Smallest generalized eigenvalue and the Korn constant 1/sqrt(lambda).

    Shift-free inverse iteration on (A, B) over the free DOFs: one sparse
    factorization of A, Rayleigh quotients until successive values agree to
    ``tol`` relative.
    """
    validate_zfield(slab, z)
    A, B = assemble_korn_forms(slab, z)
    free = slab.free_dofs
    if free.size == 0:
        raise KornError("no free DOFs: the whole boundary is clamped")
    Af = A[free][:, free].tocsc()
    Bf = B[free][:, free].tocsr()
    try:
        lu = spla.splu(Af)
    except RuntimeError as exc:
        raise KornError(f"generalized strain form is singular on free DOFs: {exc}") from exc

    x = np.ones(free.size)
    x /= np.sqrt(x @ (Bf @ x))
    lam_prev = np.inf
    for _ in range(max_iter):
        y = lu.solve(Bf @ x)
        ny = np.sqrt(y @ (Bf @ y))
        if not np.isfinite(ny) or ny == 0.0:
            raise KornError("inverse iteration broke down (A is singular or indefinite)")
        x = y / ny
        ax = Af @ x
        lam = float(x @ ax) / float(x @ (Bf @ x))
        if abs(lam - lam_prev) < tol * abs(lam):
            return lam, 1.0 / np.sqrt(lam)
        lam_prev = lam
    raise KornError(f"inverse iteration did not converge in {max_iter} iterations")


@dataclass
class KornStudy:
    """Scaling table for the thin-domain Korn constant."""

    h: list
    lambda_min: list
    constant: list
    pair_slope: list  # slope of log(constant) vs log(h) between consecutive rows
    summary_slope: float
    z_kind: str
    n: int
    nz: int

    def csv_header(self):
        return ["h", "lambda_min", "constant", "pair_slope"]

    def csv_rows(self):
        for row in zip(self.h, self.lambda_min, self.constant, self.pair_slope):
            yield row


def scaling_study(hs, n: int, nz: int, z_kind: str = "identity") -> KornStudy:
    hs = [float(h) for h in hs]
    if len(hs) < 3:
        raise KornError("need >= 3 thicknesses for a scaling study")
    if any(b >= a for a, b in zip(hs[:-1], hs[1:])):
        raise KornError("thicknesses must be strictly decreasing")
    if z_kind not in ("identity", "perturbed"):
        raise KornError(f"unknown z kind {z_kind!r}")

    lams, consts = [], []
    for h in hs:
        slab = SlabMesh3D(h=h, n=n, nz=nz)
        z = ZField.identity() if z_kind == "identity" else ZField.perturbed(h)
        lam, const = korn_constant(slab, z)
        lams.append(lam)
        consts.append(const)

    slopes = [np.nan]
    for i in range(1, len(hs)):
        slopes.append(
            float(np.log(consts[i] / consts[i - 1]) / np.log(hs[i] / hs[i - 1]))
        )
    lh = np.log(hs)
    lc = np.log(consts)
    summary = float(np.polyfit(lh, lc, 1)[0])
    return KornStudy(
        h=hs, lambda_min=lams, constant=consts, pair_slope=slopes,
        summary_slope=summary, z_kind=z_kind, n=n, nz=nz,
    )
