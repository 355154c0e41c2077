"""Density and sound-speed fields, density bounds, penalty presets.

Densities are vectorized callables ``rho(x, y)``.  Besides the built-in
fields, a user density can be written in a tiny expression language::

    numbers, x, y, pi, e
    + - * / ^ (power), unary minus, parentheses
    sin(...) cos(...) exp(...)

for example ``"1/(x^2 + y^2 + 1)"`` or ``"exp(sin(pi*x)*cos(pi*y))"``.
"""
from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "CoefficientField",
    "DensityBounds",
    "DensityPositivityError",
    "UnknownPresetError",
    "BUILTIN_DENSITIES",
    "builtin_density",
    "density_from_expression",
    "make_density",
    "density_bounds",
    "parse_preset",
    "stabilization_preset",
]


class DensityPositivityError(ValueError):
    pass


class UnknownPresetError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientField:
    """Density field ``rho`` and constant sound speed ``c``."""

    rho: Callable[[np.ndarray, np.ndarray], np.ndarray]
    c: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"sound speed must be positive, got {self.c}")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.rho(x, y), dtype=float),
                               np.broadcast(x, y).shape)

    def with_speed(self, c: float) -> "CoefficientField":
        return CoefficientField(self.rho, float(c), self.name)


@dataclass(frozen=True)
class DensityBounds:
    lower: float
    upper: float
    samples: int

    def __post_init__(self):
        if not (0 < self.lower <= self.upper):
            raise ValueError(f"invalid density bounds ({self.lower}, {self.upper})")


# ---------------------------------------------------------------- expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda x, y: v
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x, y: x
        if node.id == "y":
            return lambda x, y: y
        if node.id in _CONSTS:
            v = _CONSTS[node.id]
            return lambda x, y: v
        raise ValueError(f"unknown name {node.id!r} in density expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f = _compile(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda x, y: -f(x, y)
        return f
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left), _compile(node.right)
        return lambda x, y: op(lhs(x, y), rhs(x, y))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0])
        return lambda x, y: fn(arg(x, y))
    raise ValueError(f"unsupported construct in density expression: {ast.dump(node)}")


def density_from_expression(expr: str, c: float = 1.0) -> CoefficientField:
    """Compile a density expression (see module docstring)."""
    if not re.fullmatch(r"[0-9a-z_.+\-*/^() \t]*", expr):
        raise ValueError(f"illegal characters in density expression {expr!r}")
    try:
        tree = ast.parse(expr.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse density expression {expr!r}: {exc.msg}") from None
    fn = _compile(tree)
    return CoefficientField(lambda x, y: fn(x, y) + 0.0 * x, float(c), expr)


# ------------------------------------------------------------------ built-ins

BUILTIN_DENSITIES = {
    "const1": "1",
    "rho1": "1/(x^2 + y^2 + 1)",
    "rho2": "exp(x*y + 1)",
    "expxy": "exp(x*y + 1)",
    "sincos": "exp(sin(pi*x)*cos(pi*y))",
    "sincos-half": "exp(sin(pi*x/2)*cos(pi*y/2))",
    "coscos-inv": "1/(cos(pi*x)*cos(pi*y) + 2)",
}


def builtin_density(name: str, c: float = 1.0) -> CoefficientField:
    try:
        expr = BUILTIN_DENSITIES[name]
    except KeyError:
        raise ValueError(
            f"unknown density {name!r}; built-ins are {sorted(BUILTIN_DENSITIES)}") from None
    field = density_from_expression(expr, c)
    return CoefficientField(field.rho, field.c, name)


def make_density(spec: str, c: float = 1.0) -> CoefficientField:
    """Built-in id if it is one, otherwise an expression."""
    if spec in BUILTIN_DENSITIES:
        return builtin_density(spec, c)
    return density_from_expression(spec, c)


# --------------------------------------------------------------------- bounds

def density_bounds(field: CoefficientField, bbox, m: int = 512) -> DensityBounds:
    """Sample ``rho`` on an ``m x m`` grid covering ``bbox = (x0, y0, x1, y1)``."""
    if m < 64:
        raise ValueError(f"at least 64 samples per side are required, got {m}")
    x0, y0, x1, y1 = bbox
    X, Y = np.meshgrid(np.linspace(x0, x1, m), np.linspace(y0, y1, m))
    R = field(X, Y)
    bad = ~(R > 0)
    if bad.any():
        i = np.flatnonzero(bad.ravel())[0]
        raise DensityPositivityError(
            f"density is not positive at ({X.flat[i]:.6g}, {Y.flat[i]:.6g}): "
            f"rho = {R.flat[i]:.6g}")
    return DensityBounds(float(R.min()), float(R.max()), m)


# -------------------------------------------------------------------- presets

# family -> value of the bracket given (lower, upper)
_FAMILIES = {
    "raw": lambda lo, hi: 1.0,
    "sum": lambda lo, hi: hi + lo,
    "max": lambda lo, hi: hi,
    "plus1": lambda lo, hi: hi + 1.0,
}


def parse_preset(name: str) -> tuple[str, float | None]:
    """Split a preset id into ``(family, multiplier)``.

    Accepted forms: ``raw``, ``raw4``, ``sum2``, ``max4``, ``plus1-10``,
    ``8rhobar`` (alias of ``max8``).  A missing multiplier means the base
    value ``a`` is used.
    """
    s = name.strip().lower()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)rhobar", s)
    if m:
        return "max", float(m.group(1))
    m = re.fullmatch(r"(raw|sum|max|plus1)(?:-?(\d+(?:\.\d+)?))?", s)
    if not m:
        raise UnknownPresetError(
            f"unknown stabilization preset {name!r}; use raw[N], sum[N], max[N], "
            "plus1[-N] or Nrhobar")
    mult = m.group(2)
    return m.group(1), None if mult is None else float(mult)


def stabilization_preset(name: str, bounds: DensityBounds, k: int,
                         a: float | None = None) -> float:
    """Penalty ``a_S = (preset value) * k**2``.

    ``sumM`` is ``M(rho_max + rho_min)``, ``maxM`` is ``M rho_max``,
    ``plus1-M`` is ``M(rho_max + 1)`` and ``rawM`` is ``M``.  Without an
    explicit ``M`` the base value ``a`` is the multiplier.
    """
    family, mult = parse_preset(name)
    if mult is None:
        if a is None:
            raise ValueError(f"preset {name!r} needs a base value a")
        mult = float(a)
    if not mult > 0:
        raise ValueError(f"penalty multiplier must be positive, got {mult}")
    if int(k) != k or k < 1:
        raise ValueError(f"degree must be >= 1, got {k}")
    return mult * _FAMILIES[family](bounds.lower, bounds.upper) * k * k
