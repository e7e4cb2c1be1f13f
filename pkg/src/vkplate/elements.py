"""Reference shape functions and per-grid quadrature tables.

The deflection uses the C1 bicubic Hermite rectangle (tensor product of 1D
cubic Hermite functions; derivative DOFs scale with the element size), the
displacement and temperature use bilinear Q1.  One fixed 4x4 Gauss-Legendre
rule is used on every element, with a 4-point rule on boundary segments.

Local coordinates live on [0, 1]^2; local node order matches the ccw element
connectivity: (0,0), (1,0), (1,1), (0,1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_GAUSS = 4

# local (s, t) corner coordinates in connectivity order
_CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


def gauss_rule_01(n: int = N_GAUSS) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _hermite1d(t: np.ndarray):
    """Cubic Hermite basis on [0, 1] and its first two derivatives.

    Rows: value-at-0, slope-at-0, value-at-1, slope-at-1.
    """
    t = np.asarray(t, dtype=float)
    h = np.stack(
        [
            1.0 - 3.0 * t**2 + 2.0 * t**3,
            t - 2.0 * t**2 + t**3,
            3.0 * t**2 - 2.0 * t**3,
            -(t**2) + t**3,
        ]
    )
    dh = np.stack(
        [
            -6.0 * t + 6.0 * t**2,
            1.0 - 4.0 * t + 3.0 * t**2,
            6.0 * t - 6.0 * t**2,
            -2.0 * t + 3.0 * t**2,
        ]
    )
    d2h = np.stack(
        [
            -6.0 + 12.0 * t,
            -4.0 + 6.0 * t,
            6.0 - 12.0 * t,
            -2.0 + 6.0 * t,
        ]
    )
    return h, dh, d2h


def _q1_1d(t: np.ndarray):
    t = np.asarray(t, dtype=float)
    n = np.stack([1.0 - t, t])
    dn = np.stack([-np.ones_like(t), np.ones_like(t)])
    return n, dn


@dataclass(frozen=True)
class ElementTables:
    """Shape values/derivatives at the quadrature points of one element.

    All derivative tables are with respect to physical coordinates; the
    Hermite derivative DOFs are physical-slope DOFs, so the value tables
    already carry the hx/hy scalings.
    """

    hx: float
    hy: float
    qw: np.ndarray        # (nq,) weights including the hx*hy Jacobian
    q_offsets: np.ndarray  # (nq, 2) physical offsets from the element origin
    n_q1: np.ndarray      # (nq, 4)
    dn_q1: np.ndarray     # (nq, 4, 2)
    n_bfs: np.ndarray     # (nq, 16)
    dn_bfs: np.ndarray    # (nq, 16, 2)
    d2n_bfs: np.ndarray   # (nq, 16, 2, 2)
    edge_q: np.ndarray    # (nqe,) 1D Gauss points on [0, 1]
    edge_w: np.ndarray    # (nqe,) 1D Gauss weights on [0, 1]
    edge_n: np.ndarray    # (nqe, 2) 1D Q1 values at edge points


def q1_eval(s: np.ndarray, t: np.ndarray, hx: float, hy: float):
    """Q1 values and physical-gradient tables at local points (s, t)."""
    ns, dns = _q1_1d(s)
    nt, dnt = _q1_1d(t)
    nq = len(np.atleast_1d(s))
    n = np.empty((nq, 4))
    dn = np.empty((nq, 4, 2))
    for a, (ci, cj) in enumerate(_CORNERS):
        n[:, a] = ns[ci] * nt[cj]
        dn[:, a, 0] = dns[ci] * nt[cj] / hx
        dn[:, a, 1] = ns[ci] * dnt[cj] / hy
    return n, dn


def bfs_eval(s: np.ndarray, t: np.ndarray, hx: float, hy: float):
    """Bicubic Hermite values and physical first/second derivative tables.

    Local DOF order: node-major over the 4 corners, per node
    (value, d/dx, d/dy, d2/dxdy).
    """
    hs, dhs, d2hs = _hermite1d(s)
    ht, dht, d2ht = _hermite1d(t)
    nq = len(np.atleast_1d(s))
    n = np.empty((nq, 16))
    dn = np.empty((nq, 16, 2))
    d2n = np.empty((nq, 16, 2, 2))
    for a, (ci, cj) in enumerate(_CORNERS):
        for slot in range(4):
            dx, dy = slot in (1, 3), slot in (2, 3)
            fx = hx if dx else 1.0
            fy = hy if dy else 1.0
            ix = 2 * ci + (1 if dx else 0)  # hermite row: value/slope at corner ci
            iy = 2 * cj + (1 if dy else 0)
            A = 4 * a + slot
            n[:, A] = fx * fy * hs[ix] * ht[iy]
            dn[:, A, 0] = fx * fy * dhs[ix] * ht[iy] / hx
            dn[:, A, 1] = fx * fy * hs[ix] * dht[iy] / hy
            d2n[:, A, 0, 0] = fx * fy * d2hs[ix] * ht[iy] / hx**2
            d2n[:, A, 1, 1] = fx * fy * hs[ix] * d2ht[iy] / hy**2
            mixed = fx * fy * dhs[ix] * dht[iy] / (hx * hy)
            d2n[:, A, 0, 1] = mixed
            d2n[:, A, 1, 0] = mixed
    return n, dn, d2n


def build_tables(hx: float, hy: float, n_gauss: int = N_GAUSS) -> ElementTables:
    g, w = gauss_rule_01(n_gauss)
    ss, tt = np.meshgrid(g, g, indexing="ij")
    ww = np.outer(w, w)
    s = ss.ravel()
    t = tt.ravel()
    qw = (ww.ravel() * hx * hy).copy()
    q_off = np.column_stack([s * hx, t * hy])
    n_q1, dn_q1 = q1_eval(s, t, hx, hy)
    n_bfs, dn_bfs, d2n_bfs = bfs_eval(s, t, hx, hy)
    ge, we = gauss_rule_01(n_gauss)
    edge_n = np.column_stack([1.0 - ge, ge])
    tabs = ElementTables(
        hx=hx, hy=hy, qw=qw, q_offsets=q_off,
        n_q1=n_q1, dn_q1=dn_q1,
        n_bfs=n_bfs, dn_bfs=dn_bfs, d2n_bfs=d2n_bfs,
        edge_q=ge, edge_w=we, edge_n=edge_n,
    )
    for arr in (qw, q_off, n_q1, dn_q1, n_bfs, dn_bfs, d2n_bfs, ge, we, edge_n):
        arr.flags.writeable = False
    return tabs


def hermite_dofs_from_callables(coords, v0, dv1=None, dv2=None, dv12=None, fd_step=None):
    """Nodal Hermite DOF vector from a value callable and optional derivatives.

    Missing derivative callables fall back to central finite differences of
    the supplied value function with the given step.
    """
    x, y = coords[:, 0], coords[:, 1]
    if fd_step is None:
        fd_step = 1e-5
    h = fd_step
    vals = np.asarray(v0(x, y), dtype=float)
    if dv1 is not None:
        d1 = np.asarray(dv1(x, y), dtype=float)
    else:
        d1 = (np.asarray(v0(x + h, y), float) - np.asarray(v0(x - h, y), float)) / (2 * h)
    if dv2 is not None:
        d2 = np.asarray(dv2(x, y), dtype=float)
    else:
        d2 = (np.asarray(v0(x, y + h), float) - np.asarray(v0(x, y - h), float)) / (2 * h)
    if dv12 is not None:
        d12 = np.asarray(dv12(x, y), dtype=float)
    else:
        d12 = (
            np.asarray(v0(x + h, y + h), float)
            - np.asarray(v0(x + h, y - h), float)
            - np.asarray(v0(x - h, y + h), float)
            + np.asarray(v0(x - h, y - h), float)
        ) / (4 * h * h)
    out = np.empty(4 * len(x))
    out[0::4] = np.broadcast_to(vals, x.shape)
    out[1::4] = np.broadcast_to(d1, x.shape)
    out[2::4] = np.broadcast_to(d2, x.shape)
    out[3::4] = np.broadcast_to(d12, x.shape)
    return out
