"""A small arithmetic expression language for multipliers and kernels.

Expressions use Python operator syntax over the variables ``x`` (and ``t``
for kernels), the functions ``sin cos tan exp sqrt pow log abs gamma`` and
the constants ``pi`` and ``e``.  Anything else is rejected at compile time.
"""

from __future__ import annotations

import ast
import math
import re

import numpy as np
from scipy import special

from .exceptions import ParseError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "pow": np.power,
    "log": np.log,
    "abs": np.abs,
    "gamma": special.gamma,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class Expression:
    """A compiled, vectorised expression.

    >>> f = Expression("x**2 + 1")
    >>> float(f(2.0))
    5.0
    """

    def __init__(self, source: str, variables=("x",)):
        if not isinstance(source, str):
            source = repr(float(source))
        self.source = source.strip()
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._code = compile(tree, "<expression>", "eval")

    def _check(self, node):
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(
            node.value, bool
        ):
            pass
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ParseError(f"unknown name {node.id!r} in expression {self.source!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                name = getattr(node.func, "id", "?")
                raise ParseError(f"unknown function {name!r} in expression {self.source!r}")
            if node.keywords:
                raise ParseError(f"keyword arguments are not allowed in {self.source!r}")
            want = 2 if node.func.id == "pow" else 1
            if len(node.args) != want:
                raise ParseError(f"{node.func.id} takes {want} argument(s) in {self.source!r}")
            for arg in node.args:
                self._check(arg)
        else:
            raise ParseError(f"unsupported syntax {type(node).__name__} in expression {self.source!r}")

    def __call__(self, *args):
        env = dict(CONSTANTS)
        env.update(FUNCTIONS)
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape if args else ()
        for name, value in zip(self.variables, args):
            env[name] = np.asarray(value, dtype=float)
        with np.errstate(all="ignore"):
            out = eval(self._code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape) if shape else np.asarray(out, dtype=float)

    def __eq__(self, other):
        return isinstance(other, Expression) and (self.canonical, self.variables) == (
            other.canonical,
            other.variables,
        )

    def __hash__(self):
        return hash((self.canonical, self.variables))

    @property
    def canonical(self) -> str:
        return ast.unparse(ast.parse(self.source, mode="eval"))

    def __repr__(self):
        return f"Expression({self.source!r})"


def _norm(source: str) -> str:
    return re.sub(r"\s+", "", ast.unparse(ast.parse(source, mode="eval")))


_KIND_PATTERNS = [
    ("laplace", [r"exp\(-x\*t\)", r"exp\(-t\*x\)", r"exp\(-\(x\*t\)\)"]),
    ("nmr", [r"exp\(-x/t\)", r"exp\(-\(x/t\)\)"]),
    ("abel", [r"1/sqrt\(x-t\)", r"\(x-t\)\*\*\(-0\.5\)", r"\(x-t\)\*\*-0\.5", r"pow\(x-t,-0\.5\)"]),
]
_CONV_TRIG = re.compile(r"^-?\d*\.?\d*\*?(sin|cos)\((x-t|t-x)\)$")


def kernel_kind(source: str) -> str:
    """Classify a kernel expression into one of the closed-form families."""
    s = _norm(source)
    for kind, patterns in _KIND_PATTERNS:
        if any(re.fullmatch(p, s) for p in patterns):
            return kind
    if _CONV_TRIG.match(s):
        return "convolution-trig"
    return "general"
