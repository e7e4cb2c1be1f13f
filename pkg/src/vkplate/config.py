"""Run configuration: strict sectioned key-value files with expressions.

The format is flat INI-style sections of ``key = value`` lines, ``#``
comments, and a small expression language for fields of (x1, x2, t):
literals, ``+ - * / ^``, parentheses, ``sin``, ``cos``, ``exp``, and the
constants ``pi`` and ``e``.  Unknown sections or keys are errors; every
diagnostic carries the line and column it refers to.  The exact grammar is
documented in docs/config.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constitutive import SymTensor4, make_isotropic_c3
from .grid import EDGES


class ConfigError(ValueError):
    """Malformed or invalid configuration."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        if line:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# expression mini-language

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS = {"pi": np.pi, "e": np.e}


@dataclass(frozen=True)
class ExprField:
    """Compiled scalar field of (x1, x2, t)."""

    source: str
    fn: Callable = field(compare=False)

    def __call__(self, x1, x2, t=0.0):
        return self.fn(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), t)


class _ExprParser:
    def __init__(self, text: str, variables: tuple, line: int, col0: int):
        self.text = text
        self.variables = variables
        self.line = line
        self.col0 = col0
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                rest = text[pos:].lstrip()
                if not rest:
                    break
                raise ConfigError(
                    f"cannot tokenize expression at {rest[:10]!r}", line, col0 + pos
                )
            if m.lastgroup is not None:
                self.tokens.append((m.lastgroup, m.group(m.lastgroup), col0 + m.start(m.lastgroup)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, self.col0 + len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg, col):
        raise ConfigError(msg, self.line, col)

    def parse(self):
        node = self.expr()
        kind, val, col = self.peek()
        if kind is not None:
            self.error(f"unexpected {val!r} after expression", col)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                node = (lambda a, b: (lambda x, y, t: a(x, y, t) + b(x, y, t)))(node, rhs) \
                    if val == "+" else (lambda a, b: (lambda x, y, t: a(x, y, t) - b(x, y, t)))(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.factor()
                node = (lambda a, b: (lambda x, y, t: a(x, y, t) * b(x, y, t)))(node, rhs) \
                    if val == "*" else (lambda a, b: (lambda x, y, t: a(x, y, t) / b(x, y, t)))(node, rhs)
            else:
                return node

    def factor(self):
        # unary sign binds looser than '^', so -x^2 means -(x^2)
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.next()
            node = self.factor()
            if val == "-":
                return (lambda a: (lambda x, y, t: -a(x, y, t)))(node)
            return node
        return self.power()

    def power(self):
        node = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            rhs = self.factor()  # right associative; exponent may be signed
            return (lambda a, b: (lambda x, y, t: a(x, y, t) ** b(x, y, t)))(node, rhs)
        return node

    def primary(self):
        kind, val, col = self.next()
        if kind == "num":
            c = float(val)
            return lambda x, y, t: np.full(np.shape(x), c) if np.shape(x) else c
        if kind == "name":
            if val in _FUNCTIONS:
                k2, v2, c2 = self.next()
                if k2 != "op" or v2 != "(":
                    self.error(f"function {val!r} needs parentheses", c2)
                arg = self.expr()
                k3, v3, c3 = self.next()
                if k3 != "op" or v3 != ")":
                    self.error(f"missing ')' for {val!r}", c3)
                f = _FUNCTIONS[val]
                return (lambda f_, a: (lambda x, y, t: f_(a(x, y, t))))(f, arg)
            if val in _CONSTANTS:
                c = _CONSTANTS[val]
                return lambda x, y, t: np.full(np.shape(x), c) if np.shape(x) else c
            if val == "x1":
                return lambda x, y, t: x
            if val == "x2":
                return lambda x, y, t: y
            if val == "t":
                if "t" not in self.variables:
                    self.error("variable 't' not allowed here (initial data)", col)
                return lambda x, y, t: np.full(np.shape(x), t) if np.shape(x) else t
            self.error(f"unknown name {val!r}", col)
        if kind == "op" and val == "(":
            node = self.expr()
            k2, v2, c2 = self.next()
            if k2 != "op" or v2 != ")":
                self.error("missing ')'", c2)
            return node
        self.error(f"expected a value, got {val!r}", col)


def compile_expression(text: str, line: int = 0, col: int = 1, allow_t: bool = True) -> ExprField:
    variables = ("x1", "x2", "t") if allow_t else ("x1", "x2")
    fn = _ExprParser(text, variables, line, col).parse()
    return ExprField(source=text.strip(), fn=fn)


# ---------------------------------------------------------------------------
# configuration schema

@dataclass
class GridConfig:
    nx: int = 8
    ny: int = 8
    lx: float = 1.0
    ly: float = 1.0
    dirichlet_edges: tuple = ("left",)


@dataclass
class MaterialConfig:
    c3_el: SymTensor4 = None
    c3_visc: SymTensor4 = None
    b_full: np.ndarray = None
    cv_bar: float = 1.0
    k3: np.ndarray = None
    kappa: float = 0.0
    alpha: float = None


@dataclass
class LoadsConfig:
    f2d: Optional[ExprField] = None
    mu_flat: Optional[ExprField] = None
    test_only_gu1: Optional[ExprField] = None
    test_only_gu2: Optional[ExprField] = None


@dataclass
class ICConfig:
    u0_1: Optional[ExprField] = None
    u0_2: Optional[ExprField] = None
    v0: Optional[ExprField] = None
    v0_dx: Optional[ExprField] = None
    v0_dy: Optional[ExprField] = None
    v0_dxy: Optional[ExprField] = None
    mu0: Optional[ExprField] = None


@dataclass
class SimConfig:
    dt: float = 0.1
    t_end: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    linear_solver: str = "direct"
    linear_solver_tol: float = 1e-12


@dataclass
class OutputConfig:
    csv: str = "ledger.csv"
    vtk_stride: int = 0       # 0 disables VTK output
    vtk_prefix: str = "state"


@dataclass
class RunConfig:
    grid: GridConfig
    material: MaterialConfig
    loads: LoadsConfig
    ic: ICConfig
    sim: SimConfig
    output: OutputConfig
    korn_nz: int = 3


def _split_numbers(value: str, count: int, line: int, col: int) -> np.ndarray:
    parts = value.split()
    if len(parts) != count:
        raise ConfigError(f"expected {count} numbers, got {len(parts)}", line, col)
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"bad number in list: {exc}", line, col) from exc


def _parse_float(value: str, line: int, col: int) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {value!r}", line, col) from exc


def _parse_int(value: str, line: int, col: int) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {value!r}", line, col) from exc


def _parse_tensor_spec(value: str, line: int, col: int) -> SymTensor4:
    parts = value.split()
    if not parts:
        raise ConfigError("empty tensor specification", line, col)
    kind = parts[0]
    if kind == "isotropic":
        if len(parts) != 3:
            raise ConfigError("isotropic needs exactly: isotropic MU LAMBDA", line, col)
        mu = _parse_float(parts[1], line, col)
        lam = _parse_float(parts[2], line, col)
        try:
            return make_isotropic_c3(mu, lam)
        except ValueError as exc:
            raise ConfigError(str(exc), line, col) from exc
    if kind == "voigt":
        nums = _split_numbers(" ".join(parts[1:]), 36, line, col)
        try:
            t = SymTensor4.from_voigt(nums.reshape(6, 6))
            t.require_positive_definite("voigt tensor")
            return t
        except ValueError as exc:
            raise ConfigError(str(exc), line, col) from exc
    raise ConfigError(f"tensor must start with 'isotropic' or 'voigt', got {kind!r}", line, col)


def _scan(text: str):
    """Yield (section, key, value, line, value_col) entries, strictly."""
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        s = stripped.strip()
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError("unterminated section header", lineno, raw.index("[") + 1)
            section = s[1:-1].strip()
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", lineno, 1)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno, 1)
        key, value = s.split("=", 1)
        key = key.strip()
        value_col = raw.index("=") + 2
        yield section, key, value.strip(), lineno, value_col


_KNOWN_KEYS = {
    "grid": {"nx", "ny", "lx", "ly", "dirichlet_edges"},
    "material": {"elastic", "viscous", "b_full", "cv_bar", "k3", "kappa", "alpha"},
    "loads": {"f2d", "mu_flat", "test_only_gu1", "test_only_gu2"},
    "ic": {"u0_1", "u0_2", "v0", "v0_dx", "v0_dy", "v0_dxy", "mu0"},
    "sim": {"dt", "t_end", "newton_tol", "newton_max_iter", "linear_solver", "linear_solver_tol"},
    "output": {"csv", "vtk_stride", "vtk_prefix"},
    "korn": {"nz"},
}


def parse_config(text: str) -> RunConfig:
    grid = GridConfig()
    material = MaterialConfig()
    loads = LoadsConfig()
    ic = ICConfig()
    sim = SimConfig()
    output = OutputConfig()
    korn_nz = 3

    for section, key, value, line, col in _scan(text):
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]", line, 1)
        if key not in _KNOWN_KEYS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line, 1)

        if section == "grid":
            if key in ("nx", "ny"):
                setattr(grid, key, _parse_int(value, line, col))
            elif key in ("lx", "ly"):
                setattr(grid, key, _parse_float(value, line, col))
            else:
                edges = tuple(e.strip() for e in value.split(",") if e.strip())
                bad = [e for e in edges if e not in EDGES]
                if bad:
                    raise ConfigError(f"unknown edge tags {bad}; valid: {EDGES}", line, col)
                grid.dirichlet_edges = edges
        elif section == "material":
            if key == "elastic":
                material.c3_el = _parse_tensor_spec(value, line, col)
            elif key == "viscous":
                material.c3_visc = _parse_tensor_spec(value, line, col)
            elif key == "b_full":
                b = _split_numbers(value, 9, line, col).reshape(3, 3)
                if np.abs(b - b.T).max() > 1e-10 * max(np.abs(b).max(), 1e-300):
                    raise ConfigError("b_full must be symmetric", line, col)
                material.b_full = 0.5 * (b + b.T)
            elif key == "cv_bar":
                v = _parse_float(value, line, col)
                if v <= 0.0:
                    raise ConfigError(f"cv_bar must be positive, got {v}", line, col)
                material.cv_bar = v
            elif key == "k3":
                k = _split_numbers(value, 9, line, col).reshape(3, 3)
                if np.abs(k - k.T).max() > 1e-10 * max(np.abs(k).max(), 1e-300):
                    raise ConfigError("k3 must be symmetric", line, col)
                if np.linalg.eigvalsh(k)[0] <= 0.0:
                    raise ConfigError("k3 must be positive definite", line, col)
                material.k3 = 0.5 * (k + k.T)
            elif key == "kappa":
                v = _parse_float(value, line, col)
                if v < 0.0:
                    raise ConfigError(f"kappa must be nonnegative, got {v}", line, col)
                material.kappa = v
            elif key == "alpha":
                v = _parse_float(value, line, col)
                if not 2.0 <= v <= 4.0:
                    raise ConfigError(f"alpha must lie in [2, 4], got {v}", line, col)
                material.alpha = v
        elif section == "loads":
            setattr(loads, key, compile_expression(value, line, col, allow_t=True))
        elif section == "ic":
            setattr(ic, key, compile_expression(value, line, col, allow_t=False))
        elif section == "sim":
            if key == "newton_max_iter":
                sim.newton_max_iter = _parse_int(value, line, col)
            elif key == "linear_solver":
                if value not in ("direct", "cg"):
                    raise ConfigError(f"linear_solver must be 'direct' or 'cg', got {value!r}", line, col)
                sim.linear_solver = value
            else:
                setattr(sim, key, _parse_float(value, line, col))
        elif section == "output":
            if key == "vtk_stride":
                v = _parse_int(value, line, col)
                if v < 0:
                    raise ConfigError("vtk_stride must be >= 0", line, col)
                output.vtk_stride = v
            else:
                setattr(output, key, value)
        elif section == "korn":
            korn_nz = _parse_int(value, line, col)
            if korn_nz < 2:
                raise ConfigError("korn nz must be >= 2", line, col)

    if material.b_full is None:
        material.b_full = np.zeros((3, 3))
    if material.k3 is None:
        material.k3 = np.eye(3)
    for name in ("c3_el", "c3_visc", "alpha"):
        if getattr(material, name) is None:
            key = {"c3_el": "elastic", "c3_visc": "viscous", "alpha": "alpha"}[name]
            raise ConfigError(f"[material] is missing the required key {key!r}")
    return RunConfig(
        grid=grid, material=material, loads=loads, ic=ic, sim=sim, output=output,
        korn_nz=korn_nz,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
