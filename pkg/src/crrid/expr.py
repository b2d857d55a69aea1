"""Closed grammar for initial-function expressions such as ``1+sin(t)``.

Accepted: the variable ``t``, numeric constants, ``+ - * /``, unary minus,
parentheses and the functions ``sin``, ``cos``, ``exp``. Expressions are
parsed with :mod:`ast` and checked against that whitelist; evaluation
returns the value and its exact derivative in t.
"""
from __future__ import annotations

import ast

import numpy as np

__all__ = ["GrammarError", "HistoryExpr", "parse_history"]

_FUNCS = {
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda x: -np.sin(x)),
    "exp": (np.exp, np.exp),
}


class GrammarError(ValueError):
    pass


def _check(node, text):
    if isinstance(node, ast.Expression):
        return _check(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise GrammarError(f"unsupported constant {node.value!r} at column {node.col_offset + 1}")
        return
    if isinstance(node, ast.Name):
        if node.id != "t":
            raise GrammarError(f"unknown name {node.id!r} at column {node.col_offset + 1}")
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        return _check(node.operand, text)
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
        _check(node.left, text)
        return _check(node.right, text)
    if isinstance(node, ast.Call):
        if (isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and len(node.args) == 1 and not node.keywords):
            return _check(node.args[0], text)
        raise GrammarError(f"unsupported call at column {node.col_offset + 1}; "
                           f"allowed functions: {', '.join(_FUNCS)}")
    col = getattr(node, "col_offset", 0) + 1
    raise GrammarError(f"unsupported syntax {type(node).__name__} at column {col} in {text!r}")


def _dual(node, t):
    """Return (value, d value / dt)."""
    if isinstance(node, ast.Constant):
        c = float(node.value)
        return np.full_like(t, c), np.zeros_like(t)
    if isinstance(node, ast.Name):
        return t.copy(), np.ones_like(t)
    if isinstance(node, ast.UnaryOp):
        v, d = _dual(node.operand, t)
        return (-v, -d) if isinstance(node.op, ast.USub) else (v, d)
    if isinstance(node, ast.BinOp):
        u, du = _dual(node.left, t)
        v, dv = _dual(node.right, t)
        if isinstance(node.op, ast.Add):
            return u + v, du + dv
        if isinstance(node.op, ast.Sub):
            return u - v, du - dv
        if isinstance(node.op, ast.Mult):
            return u * v, du * v + u * dv
        return u / v, (du * v - u * dv) / (v * v)
    f, df = _FUNCS[node.func.id]
    v, d = _dual(node.args[0], t)
    return f(v), df(v) * d


class HistoryExpr:
    """Parsed initial-function expression."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise GrammarError(f"syntax error at column {exc.offset}: {text!r}") from None
        _check(tree, text)
        self._tree = tree.body

    def _eval(self, t):
        arr = np.asarray(t, dtype=float)
        v, d = _dual(self._tree, np.atleast_1d(arr).astype(float))
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(d))):
            raise GrammarError(f"expression {self.text!r} is not finite on the history interval")
        if arr.ndim == 0:
            return v[0], d[0]
        return v, d

    def __call__(self, t):
        return self._eval(t)[0]

    def deriv(self, t):
        return self._eval(t)[1]


def parse_history(text: str) -> HistoryExpr:
    """Parse a constant or an expression in ``t``."""
    if not isinstance(text, str) or not text.strip():
        raise GrammarError("empty history expression")
    return HistoryExpr(text)
