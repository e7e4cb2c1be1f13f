"""Shared oracle helpers for the test suite.

Everything here deliberately avoids the library's solution paths: quadratic
forms are evaluated by direct tensor contraction and minima are located by
grid search, so these routines can serve as independent references.
"""

import numpy as np

from vkplate.constitutive import SymTensor4


def eval_q3_grid(c3, a2, pts):
    """Direct tensor-contraction values of Q3 on completions of a2.

    pts has rows (a13, a23, a33).
    """
    mats = np.zeros((pts.shape[0], 3, 3))
    mats[:, :2, :2] = 0.5 * (a2 + a2.T)
    mats[:, 0, 2] = mats[:, 2, 0] = pts[:, 0]
    mats[:, 1, 2] = mats[:, 2, 1] = pts[:, 1]
    mats[:, 2, 2] = pts[:, 2]
    return np.einsum("qij,ijkl,qkl->q", mats, c3.entries, mats)


def completion_box_halfwidth(c3, a2):
    """Half-width guaranteed to contain the out-of-plane minimizer.

    Uses only eigenvalue bounds of the Voigt matrix, not the Schur solve:
    |o*| <= ||M_op|| |p| / lambda_min(M_oo).
    """
    m = c3.voigt()
    in_pl = np.array([0, 1, 5])
    out_pl = np.array([2, 3, 4])
    m_oo = m[np.ix_(out_pl, out_pl)]
    m_op = m[np.ix_(out_pl, in_pl)]
    a2s = 0.5 * (a2 + a2.T)
    p_norm = np.linalg.norm([a2s[0, 0], a2s[1, 1], 2.0 * a2s[0, 1]])
    lam_min = np.linalg.eigvalsh(m_oo)[0]
    bound = np.linalg.norm(m_op, 2) * p_norm / lam_min
    return 2.0 * (1.0 + bound)


def brute_force_reduced(c3, a2, n_grid=41, refinements=5, center=None):
    """Grid-search oracle for the reduced quadratic form.

    Scans (a13, a23, a33) on an n_grid**3 lattice, recentering and shrinking
    the lattice around the running minimizer (or around a supplied fixed
    center, which the lattice then contains exactly).  Returns the smallest
    value found and its location.
    """
    a2 = 0.5 * (np.asarray(a2, float) + np.asarray(a2, float).T)
    width = completion_box_halfwidth(c3, a2)
    track_argmin = center is None
    c = np.zeros(3) if track_argmin else np.asarray(center, float)
    best_val = np.inf
    best_pt = c
    for _ in range(refinements + 1):
        axes = [np.linspace(ci - width, ci + width, n_grid) for ci in c]
        g1, g2, g3 = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel(), g3.ravel()], axis=1)
        vals = eval_q3_grid(c3, a2, pts)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = vals[k]
            best_pt = pts[k]
        if track_argmin:
            c = pts[k]
        width = 2.0 * width / (n_grid - 1)
    return best_val, best_pt


def random_spd_tensor(rng, dim=3, shift=0.5):
    n = 6 if dim == 3 else 3
    m = rng.standard_normal((n, n))
    m = m @ m.T + shift * np.eye(n)
    return SymTensor4.from_voigt(m)
