"""Fourth-order constitutive tensors and their plane reductions.

The 3D elastic and viscous tensors act on symmetric 3x3 matrices; the plate
model needs their reductions obtained by minimizing the quadratic form over
the out-of-plane strain entries.  All reductions here are closed-form Schur
complements in Voigt representation.

Voigt convention (engineering shear): a symmetric matrix A maps to the
component vector with factor 2 on off-diagonal entries,

    3D: (A11, A22, A33, 2*A23, 2*A13, 2*A12)
    2D: (A11, A22, 2*A12)

so that the quadratic form is Q(A) = v(A)^T M v(A) with M[I, J] equal to the
plain tensor entry for the index pairs I, J.  Quadratic-form values are
convention independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# (i, j) index pairs backing each Voigt slot, engineering-shear ordering
_VOIGT_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}

SYMMETRY_RTOL = 1e-10
PD_EIG_RTOL = 1e-12


class ConstitutiveError(ValueError):
    """Invalid constitutive input (symmetry or definiteness violation)."""


def _symmetrize4(a: np.ndarray) -> np.ndarray:
    """Project onto minor+major symmetric fourth-order tensors."""
    s = a + a.transpose(1, 0, 2, 3) + a.transpose(0, 1, 3, 2) + a.transpose(1, 0, 3, 2)
    s = 0.25 * s
    return 0.5 * (s + s.transpose(2, 3, 0, 1))


@dataclass(frozen=True)
class SymTensor4:
    """Fourth-order tensor with minor and major symmetries (dim 2 or 3).

    Entries are stored dense and symmetrized at construction; inputs whose
    symmetry violation exceeds ``SYMMETRY_RTOL`` relative to the largest
    entry are rejected.  Positive definiteness on symmetric matrices is
    checked through the eigenvalues of the Voigt matrix unless the tensor is
    deliberately built as a zero/regime tensor.
    """

    entries: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 4 or len(set(a.shape)) != 1 or a.shape[0] not in (2, 3):
            raise ConstitutiveError(f"expected (d,d,d,d) array with d in {{2,3}}, got {a.shape}")
        s = _symmetrize4(a)
        scale = np.abs(a).max()
        if scale > 0.0 and np.abs(a - s).max() > SYMMETRY_RTOL * scale:
            raise ConstitutiveError(
                "tensor violates minor/major symmetry beyond "
                f"{SYMMETRY_RTOL:g} relative tolerance"
            )
        s.flags.writeable = False
        object.__setattr__(self, "entries", s)
        object.__setattr__(self, "dim", a.shape[0])

    @classmethod
    def from_voigt(cls, m: np.ndarray) -> "SymTensor4":
        m = np.asarray(m, dtype=float)
        dim = {3: 2, 6: 3}.get(m.shape[0])
        if dim is None or m.shape != (m.shape[0], m.shape[0]):
            raise ConstitutiveError(f"expected 3x3 or 6x6 Voigt matrix, got {m.shape}")
        pairs = _VOIGT_PAIRS[dim]
        a = np.zeros((dim,) * 4)
        for bi, (i, j) in enumerate(pairs):
            for bj, (k, l) in enumerate(pairs):
                val = 0.5 * (m[bi, bj] + m[bj, bi])
                a[i, j, k, l] = a[j, i, k, l] = a[i, j, l, k] = a[j, i, l, k] = val
        return cls(a)

    @classmethod
    def zero(cls, dim: int) -> "SymTensor4":
        return cls(np.zeros((dim,) * 4))

    def voigt(self) -> np.ndarray:
        pairs = _VOIGT_PAIRS[self.dim]
        n = len(pairs)
        m = np.empty((n, n))
        for bi, (i, j) in enumerate(pairs):
            for bj, (k, l) in enumerate(pairs):
                m[bi, bj] = self.entries[i, j, k, l]
        return m

    def apply(self, a: np.ndarray) -> np.ndarray:
        """Contract against a matrix: (C : sym a)_ij."""
        sa = 0.5 * (a + np.swapaxes(a, -1, -2))
        return np.einsum("ijkl,...kl->...ij", self.entries, sa)

    def quad(self, a: np.ndarray) -> float | np.ndarray:
        """Quadratic form value Q(a) = sym a : C : sym a."""
        sa = 0.5 * (a + np.swapaxes(a, -1, -2))
        return np.einsum("...ij,ijkl,...kl->...", sa, self.entries, sa)

    def is_zero(self) -> bool:
        return not np.any(self.entries)

    def is_positive_definite(self) -> bool:
        ev = np.linalg.eigvalsh(self.voigt())
        return ev[0] > PD_EIG_RTOL * max(ev[-1], 0.0)

    def require_positive_definite(self, what: str = "tensor") -> None:
        if not self.is_positive_definite():
            raise ConstitutiveError(f"{what} is not positive definite on symmetric matrices")


def make_isotropic_c3(mu: float, lam: float) -> SymTensor4:
    """Isotropic test tensor with Q(A) = 2*mu*|sym A|^2 + lam*tr(A)^2."""
    if mu <= 0.0:
        raise ConstitutiveError(f"mu must be positive, got {mu}")
    if lam < 0.0:
        raise ConstitutiveError(f"lambda must be nonnegative, got {lam}")
    d = 3
    eye = np.eye(d)
    a = mu * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    a += lam * np.einsum("ij,kl->ijkl", eye, eye)
    t = SymTensor4(a)
    t.require_positive_definite("isotropic tensor")
    return t


@dataclass(frozen=True)
class RelaxationMap:
    """Linear map A'' -> (a13, a23, a33) attaining the reduced form minimum."""

    coeff: np.ndarray  # (3, 2, 2); y_m = coeff[m, i, j] * A''_ij

    def out_of_plane(self, a2: np.ndarray) -> np.ndarray:
        a2 = 0.5 * (a2 + np.swapaxes(a2, -1, -2))
        return np.einsum("mij,...ij->...m", self.coeff, a2)

    def complete(self, a2: np.ndarray) -> np.ndarray:
        """Full symmetric 3x3 minimizer with the given upper-left block."""
        a13, a23, a33 = self.out_of_plane(a2)
        full = np.zeros((3, 3))
        full[:2, :2] = 0.5 * (a2 + a2.T)
        full[0, 2] = full[2, 0] = a13
        full[1, 2] = full[2, 1] = a23
        full[2, 2] = a33
        return full


# Voigt slots of in-plane (11, 22, 12) and out-of-plane (33, 23, 13) components
_IN_PLANE = np.array([0, 1, 5])
_OUT_PLANE = np.array([2, 3, 4])


def reduce_form(c3: SymTensor4) -> tuple[SymTensor4, RelaxationMap]:
    """Reduce a 3D quadratic form by minimizing over out-of-plane entries.

    Returns the 2D tensor whose Voigt matrix is the Schur complement of the
    out-of-plane block, together with the linear minimizer map.
    """
    if c3.dim != 3:
        raise ConstitutiveError("reduce_form expects a 3D tensor")
    c3.require_positive_definite("3D tensor")
    m = c3.voigt()
    m_pp = m[np.ix_(_IN_PLANE, _IN_PLANE)]
    m_po = m[np.ix_(_IN_PLANE, _OUT_PLANE)]
    m_oo = m[np.ix_(_OUT_PLANE, _OUT_PLANE)]
    # PD of the full form implies PD of this block; a singular solve here
    # means the input was not positive definite after all.
    try:
        ch = np.linalg.cholesky(m_oo)
    except np.linalg.LinAlgError as exc:
        raise ConstitutiveError("out-of-plane relaxation system is singular") from exc
    w = np.linalg.solve(ch, m_po.T)
    schur = m_pp - w.T @ w
    c2 = SymTensor4.from_voigt(schur)
    c2.require_positive_definite("reduced 2D tensor")

    # minimizer in Voigt components: o = -(M_oo)^-1 M_op p, p = (A11, A22, 2 A12)
    n = -np.linalg.solve(m_oo, m_po.T)
    coeff = np.zeros((3, 2, 2))
    for row, fac, slot in ((2, 1.0, 0), (1, 0.5, 1), (0, 0.5, 2)):
        # o slots: 0 -> a33, 1 -> 2 a23, 2 -> 2 a13; map rows to (a13, a23, a33)
        c11, c22, c12 = n[slot]
        coeff[row, 0, 0] = fac * c11
        coeff[row, 1, 1] = fac * c22
        coeff[row, 0, 1] = coeff[row, 1, 0] = fac * c12
    return c2, RelaxationMap(coeff)


def reduce_heat_conductivity(k3: np.ndarray) -> np.ndarray:
    """Plane conductivity: K'' - K33^-1 (K31, K32) outer (K31, K32)."""
    k3 = np.asarray(k3, dtype=float)
    if k3.shape != (3, 3):
        raise ConstitutiveError(f"expected 3x3 conductivity, got {k3.shape}")
    if np.abs(k3 - k3.T).max() > SYMMETRY_RTOL * max(np.abs(k3).max(), 1e-300):
        raise ConstitutiveError("conductivity matrix must be symmetric")
    if k3[2, 2] <= 0.0:
        raise ConstitutiveError(f"K33 must be positive, got {k3[2, 2]}")
    col = k3[2, :2]
    return k3[:2, :2] - np.outer(col, col) / k3[2, 2]


def regime_tensors(
    alpha: float, b_full: np.ndarray, c_visc2: SymTensor4
) -> tuple[np.ndarray, SymTensor4]:
    """Scaling-regime coupling data: thermal stress matrix and heat-source viscosity.

    alpha = 2 keeps the in-plane thermal expansion block and kills the
    dissipation source; alpha = 4 does the opposite; strictly in between
    both vanish.
    """
    if not 2.0 <= alpha <= 4.0:
        raise ConstitutiveError(f"alpha must lie in [2, 4], got {alpha}")
    b_full = np.asarray(b_full, dtype=float)
    if b_full.shape != (3, 3):
        raise ConstitutiveError(f"expected 3x3 thermal matrix, got {b_full.shape}")
    if np.abs(b_full - b_full.T).max() > SYMMETRY_RTOL * max(np.abs(b_full).max(), 1e-300):
        raise ConstitutiveError("thermal expansion matrix must be symmetric")
    if c_visc2.dim != 2:
        raise ConstitutiveError("c_visc2 must be a 2D tensor")
    b_thermal = b_full[:2, :2].copy() if alpha == 2.0 else np.zeros((2, 2))
    c_alpha = c_visc2 if alpha == 4.0 else SymTensor4.zero(2)
    return b_thermal, c_alpha


@dataclass(frozen=True)
class CompatibilityReport:
    """Mixed-block magnitudes for the zero-Poisson-ratio splitting check.

    The elastic/viscous form decouples in-plane from out-of-plane strain iff
    every tensor entry mixing an in-plane pair with an index 3 vanishes, and
    the thermal matrix is confined to its upper-left 2x2 block.
    """

    c3_mixed_max: dict[str, float]
    c3_worst: tuple[str, float]
    b_offplane_max: float
    b_worst: tuple[str, float]
    tol: float
    passed: bool

    def lines(self) -> list[str]:
        out = [f"compatibility check (tol = {self.tol:g})"]
        for name, val in self.c3_mixed_max.items():
            out.append(f"  max |{name}| = {val:.17g}")
        out.append(f"  worst tensor entry: {self.c3_worst[0]} = {self.c3_worst[1]:.17g}")
        out.append(f"  max off-plane |b| = {self.b_offplane_max:.17g}")
        if self.b_offplane_max > 0.0:
            out.append(f"  worst b entry: {self.b_worst[0]} = {self.b_worst[1]:.17g}")
        out.append("  result: " + ("PASS" if self.passed else "FAIL"))
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def check_compatibility(c3: SymTensor4, b_full: np.ndarray, tol: float) -> CompatibilityReport:
    """Diagnose the block structure required by the reduced plate model."""
    if c3.dim != 3:
        raise ConstitutiveError("check_compatibility expects a 3D tensor")
    b_full = np.asarray(b_full, dtype=float)
    e = c3.entries
    planes = {
        "c3[3,i,k,l]": [(2, i, k, l) for i in range(3) for k in range(2) for l in range(2)],
        "c3[i,3,k,l]": [(i, 2, k, l) for i in range(3) for k in range(2) for l in range(2)],
        "c3[k,l,i,3]": [(k, l, i, 2) for i in range(3) for k in range(2) for l in range(2)],
        "c3[k,l,3,i]": [(k, l, 2, i) for i in range(3) for k in range(2) for l in range(2)],
    }
    mixed_max: dict[str, float] = {}
    for name, idxs in planes.items():
        mixed_max[name] = max(abs(e[idx]) for idx in idxs)
    # name the worst entry with the in-plane pair leading, e.g. c3[1,1,3,3]
    worst_val = -1.0
    worst_name = ""
    for name in ("c3[k,l,i,3]", "c3[k,l,3,i]", "c3[3,i,k,l]", "c3[i,3,k,l]"):
        for idx in planes[name]:
            v = abs(e[idx])
            if v > worst_val:
                worst_val = v
                worst_name = "c3[{},{},{},{}]".format(*(i + 1 for i in idx))

    b_entries = [(0, 2), (1, 2), (2, 2), (2, 0), (2, 1)]
    b_max = 0.0
    b_worst = ("", 0.0)
    for i, j in b_entries:
        v = abs(b_full[i, j])
        if v > b_max:
            b_max = v
            b_worst = (f"b[{i + 1},{j + 1}]", b_full[i, j])
    passed = max(mixed_max.values()) <= tol and b_max <= tol
    return CompatibilityReport(
        c3_mixed_max=mixed_max,
        c3_worst=(worst_name, worst_val),
        b_offplane_max=b_max,
        b_worst=b_worst,
        tol=tol,
        passed=passed,
    )


def _spd_2x2(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2) or np.abs(m - m.T).max() > SYMMETRY_RTOL * max(np.abs(m).max(), 1e-300):
        raise ConstitutiveError(f"{what} must be a symmetric 2x2 matrix")
    ev = np.linalg.eigvalsh(m)
    if ev[0] <= PD_EIG_RTOL * max(ev[-1], 0.0):
        raise ConstitutiveError(f"{what} must be positive definite")
    out = 0.5 * (m + m.T)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MaterialSet:
    """Complete reduced parameter pack of the plate model."""

    c_el: SymTensor4
    c_visc: SymTensor4
    c_visc_alpha: SymTensor4
    b_thermal: np.ndarray
    cv_bar: float
    k_tilde: np.ndarray
    kappa: float
    alpha: float

    def __post_init__(self):
        if not 2.0 <= self.alpha <= 4.0:
            raise ConstitutiveError(f"alpha must lie in [2, 4], got {self.alpha}")
        if self.c_el.dim != 2 or self.c_visc.dim != 2 or self.c_visc_alpha.dim != 2:
            raise ConstitutiveError("reduced tensors must be 2D")
        self.c_el.require_positive_definite("reduced elastic tensor")
        self.c_visc.require_positive_definite("reduced viscosity tensor")
        if self.alpha == 4.0:
            if np.abs(self.c_visc_alpha.entries - self.c_visc.entries).max() != 0.0:
                raise ConstitutiveError("c_visc_alpha must equal c_visc at alpha = 4")
        elif not self.c_visc_alpha.is_zero():
            raise ConstitutiveError("c_visc_alpha must vanish for alpha in [2, 4)")
        b = np.asarray(self.b_thermal, dtype=float)
        if b.shape != (2, 2) or np.abs(b - b.T).max() > SYMMETRY_RTOL * max(np.abs(b).max(), 1e-300):
            raise ConstitutiveError("b_thermal must be a symmetric 2x2 matrix")
        if self.alpha != 2.0 and np.any(b):
            raise ConstitutiveError("b_thermal must vanish unless alpha = 2")
        b = 0.5 * (b + b.T)
        b.flags.writeable = False
        object.__setattr__(self, "b_thermal", b)
        object.__setattr__(self, "k_tilde", _spd_2x2(self.k_tilde, "k_tilde"))
        if self.cv_bar <= 0.0:
            raise ConstitutiveError(f"cv_bar must be positive, got {self.cv_bar}")
        if self.kappa < 0.0:
            raise ConstitutiveError(f"kappa must be nonnegative, got {self.kappa}")

    @property
    def has_thermal_stress(self) -> bool:
        return bool(np.any(self.b_thermal))

    @property
    def has_dissipation_source(self) -> bool:
        return not self.c_visc_alpha.is_zero()

    @classmethod
    def from_3d(
        cls,
        c3_el: SymTensor4,
        c3_visc: SymTensor4,
        b_full: np.ndarray,
        cv_bar: float,
        k3: np.ndarray,
        kappa: float,
        alpha: float,
    ) -> "MaterialSet":
        """Reduce user-supplied 3D data into the plate parameter pack."""
        c2_el, _ = reduce_form(c3_el)
        c2_visc, _ = reduce_form(c3_visc)
        b_thermal, c_alpha = regime_tensors(alpha, b_full, c2_visc)
        k_tilde = reduce_heat_conductivity(k3)
        return cls(
            c_el=c2_el,
            c_visc=c2_visc,
            c_visc_alpha=c_alpha,
            b_thermal=b_thermal,
            cv_bar=cv_bar,
            k_tilde=k_tilde,
            kappa=kappa,
            alpha=alpha,
        )
