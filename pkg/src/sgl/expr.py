"""A small, safe arithmetic expression language for model and payoff inputs.

Grammar: numbers, ``+ - * / ^`` (``**`` also accepted), unary minus,
parentheses, the functions ``exp log sin cos sqrt abs min max``, the
constants ``pi`` and ``e``, and the variables ``t`` and ``x1 .. xd``.

Expressions are parsed with :mod:`ast` and checked against a whitelist of
node types, then evaluated by a tree walk over numpy arrays, so nothing
outside the grammar can execute.
"""
from __future__ import annotations

import ast
import math
import re
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "Expression", "compile_expression"]


class ExpressionError(ValueError):
    """Raised when an expression string is outside the supported grammar."""


_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_VARIADIC = {"min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_XVAR = re.compile(r"^x([1-9][0-9]*)$")


class Expression:
    """Compiled expression ``F(t, x)``.

    Parameters
    ----------
    source : str
        Expression text.
    d : int
        Number of admissible state variables ``x1 .. xd``.

    Notes
    -----
    ``x`` passed to :meth:`__call__` has shape ``(..., d)``; ``t`` is a scalar
    or broadcastable to ``x.shape[:-1]``.  The result always has shape
    ``x.shape[:-1]`` (or ``np.shape(t)`` when ``x`` is ``None``).
    """

    def __init__(self, source: str, d: int):
        self.source = str(source)
        self.d = int(d)
        text = self.source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._body = tree.body
        self.uses_x = False
        self.uses_t = False
        self._check(self._body)

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"unsupported literal in {self.source!r}")
        elif isinstance(node, ast.Name):
            name = node.id
            if name == "t":
                self.uses_t = True
            elif name in _CONSTS:
                pass
            else:
                m = _XVAR.match(name)
                if not m or int(m.group(1)) > self.d:
                    raise ExpressionError(f"unknown variable {name!r} in {self.source!r}")
                self.uses_x = True
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"unsupported operator in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ExpressionError(f"unsupported unary operator in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise ExpressionError(f"unsupported call in {self.source!r}")
            name = node.func.id
            if name in _FUNCS:
                if len(node.args) != 1:
                    raise ExpressionError(f"{name} takes one argument in {self.source!r}")
            elif name in _VARIADIC:
                if len(node.args) < 2:
                    raise ExpressionError(f"{name} needs at least two arguments in {self.source!r}")
            else:
                raise ExpressionError(f"unknown function {name!r} in {self.source!r}")
            for a in node.args:
                self._check(a)
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        name = node.func.id
        args = [self._eval(a, env) for a in node.args]
        if name in _FUNCS:
            return _FUNCS[name](args[0])
        out = args[0]
        for a in args[1:]:
            out = _VARIADIC[name](out, a)
        return out

    def __call__(self, t, x=None):
        env = {"t": np.asarray(t, dtype=float)}
        if x is not None:
            x = np.asarray(x, dtype=float)
            for i in range(self.d):
                env[f"x{i + 1}"] = x[..., i]
            shape = np.broadcast_shapes(x.shape[:-1], np.shape(t))
        else:
            if self.uses_x:
                raise ExpressionError(f"expression {self.source!r} needs a state argument")
            shape = np.shape(t)
        with np.errstate(all="ignore"):
            val = self._eval(self._body, env)
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def compile_expression(source: str | float | int, d: int) -> Expression:
    """Compile ``source`` (a string or a number) into an :class:`Expression`."""
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str):
        raise ExpressionError(f"expression must be a string or number, got {type(source).__name__}")
    return Expression(source, d)
