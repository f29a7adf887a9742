"""Surface expressions such as ``t - (x^2 - y^2)/4`` turned into analytic fields.

Supported: numbers, the coordinates ``x1..xn`` (plus ``x, y, t`` when n = 3),
the constants ``pi`` and ``e``, ``+ - * /``, ``^`` or ``**`` for powers,
parentheses and ``sqrt(...)``.  ``^`` is rewritten to ``**`` first so it binds
tighter than ``*`` and ``-``; the text then goes through Python's own
expression grammar with a whitelist of node types and is never passed to ``eval``.
"""

from __future__ import annotations

import ast
import math

from .jets import AnalyticField, sqrt


class ExpressionError(ValueError):
    pass


_CONSTANTS = {"pi": math.pi, "e": math.e}


def coordinate_names(n: int) -> dict:
    names = {f"x{i + 1}": i for i in range(n)}
    if n == 3:
        names.update({"x": 0, "y": 1, "t": 2})
    return names


def _compile(node, names):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        c = node.value
        return lambda x: c
    if isinstance(node, ast.Name):
        if node.id in names:
            i = names[node.id]
            return lambda x: x[i]
        if node.id in _CONSTANTS:
            c = _CONSTANTS[node.id]
            return lambda x: c
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        a = _compile(node.operand, names)
        return (lambda x: -a(x)) if isinstance(node.op, ast.USub) else a
    if isinstance(node, ast.BinOp):
        a, b = _compile(node.left, names), _compile(node.right, names)
        op = node.op
        if isinstance(op, ast.Add):
            return lambda x: a(x) + b(x)
        if isinstance(op, ast.Sub):
            return lambda x: a(x) - b(x)
        if isinstance(op, ast.Mult):
            return lambda x: a(x) * b(x)
        if isinstance(op, ast.Div):
            return lambda x: a(x) / b(x)
        if isinstance(op, ast.Pow):
            if isinstance(node.right, ast.Constant) and isinstance(node.right.value, int) \
                    and node.right.value >= 0:
                p = node.right.value
                return lambda x: a(x) ** p
            return lambda x: a(x) ** b(x)
        raise ExpressionError(f"unsupported operator {type(op).__name__}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt":
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("sqrt takes exactly one argument")
        a = _compile(node.args[0], names)
        return lambda x: sqrt(a(x))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_field(text: str, n: int) -> AnalyticField:
    try:
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc
    fn = _compile(tree, coordinate_names(n))
    return AnalyticField(fn, n, name=text)
