"""
Small arithmetic expression language for problem data in config files.

Expressions are parsed with :mod:`ast` and only a whitelisted subset of nodes is
accepted, then evaluated elementwise with numpy. ``^`` is read as a power.

>>> e = Expression("max(x1 - 0.5, 0)^2 + z", ("x1", "z"))
>>> float(e(x1=1.0, z=2.0))
2.25
"""
from __future__ import annotations

import ast
import operator

import numpy as np

FUNCTIONS = {
    "abs": np.abs,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "max": np.maximum,
    "min": np.minimum,
}
CONSTANTS = {"pi": np.pi}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class ExpressionError(ValueError):
    pass


class Expression:
    """A validated expression over a fixed set of variable names."""

    def __init__(self, text: str, variables):
        if not isinstance(text, str):
            raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
        self.text = text
        self.variables = tuple(variables)
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric literals are allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                allowed = ", ".join(self.variables + tuple(CONSTANTS))
                raise ExpressionError(f"unknown name {node.id!r} in {self.text!r} (allowed: {allowed})")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.text!r}; allowed: {', '.join(FUNCTIONS)}")
            if node.keywords or not node.args:
                raise ExpressionError(f"bad call to {node.func.id} in {self.text!r}")
            if node.func.id in ("max", "min"):
                if len(node.args) < 2:
                    raise ExpressionError(f"{node.func.id} needs at least two arguments")
            elif len(node.args) != 1:
                raise ExpressionError(f"{node.func.id} takes one argument")
            for a in node.args:
                self._check(a)
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        fn = FUNCTIONS[node.func.id]
        args = [self._eval(a, env) for a in node.args]
        out = args[0]
        if len(args) == 1:
            return fn(out)
        for a in args[1:]:
            out = fn(out, a)
        return out

    def __call__(self, **env):
        missing = [v for v in self.variables if v not in env]
        if missing:
            raise ExpressionError(f"missing values for {missing}")
        arrays = [np.asarray(v, dtype=float) for v in env.values()]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        with np.errstate(all="ignore"):
            val = self._eval(self._tree, {k: np.asarray(v, dtype=float) for k, v in env.items()})
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def __repr__(self):
        return f"Expression({self.text!r})"
