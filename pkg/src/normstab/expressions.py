"""Tiny arithmetic expression language for vector fields in JSON configs.

Expressions are parsed with :mod:`ast` and validated against a whitelist
before compilation, so configs cannot execute arbitrary code.  The state
vector is exposed as ``u`` with constant integer indices (``u[0]``), plus
elementary functions and ``normsq(u)``/``norm(u)``.

Gallery problems use native Python callables and never go through here.
"""

import ast
import math

import numpy as np

from .errors import ParseError

_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "atan": math.atan,
    "abs": abs,
    "normsq": lambda v: float(np.dot(v, v)),
    "norm": lambda v: float(np.sqrt(np.dot(v, v))),
}

_CONSTS = {"pi": math.pi, "e": math.e}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.USub, ast.UAdd)


class _Validator(ast.NodeVisitor):
    def __init__(self, dim):
        self.dim = dim

    def generic_visit(self, node):
        raise ParseError(f"disallowed syntax: {type(node).__name__}")

    def visit_Expression(self, node):
        self.visit(node.body)

    def visit_BinOp(self, node):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            raise ParseError(f"operator not allowed: {type(node.op).__name__}")
        self.visit(node.left)
        self.visit(node.right)

    def visit_UnaryOp(self, node):
        if not isinstance(node.op, _ALLOWED_UNARY):
            raise ParseError(f"operator not allowed: {type(node.op).__name__}")
        self.visit(node.operand)

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ParseError("only whitelisted function calls are allowed")
        if node.keywords:
            raise ParseError("keyword arguments are not allowed")
        for arg in node.args:
            self.visit(arg)

    def visit_Name(self, node):
        if node.id != "u" and node.id not in _CONSTS:
            raise ParseError(f"unknown name: {node.id!r}")

    def visit_Subscript(self, node):
        if not (isinstance(node.value, ast.Name) and node.value.id == "u"):
            raise ParseError("only the state vector u may be indexed")
        idx = node.slice
        if not (isinstance(idx, ast.Constant) and isinstance(idx.value, int)):
            raise ParseError("indices must be integer literals")
        if not 0 <= idx.value < self.dim:
            raise ParseError(f"index u[{idx.value}] out of range for dim {self.dim}")

    def visit_Constant(self, node):
        if not isinstance(node.value, (int, float)):
            raise ParseError(f"literal not allowed: {node.value!r}")


def compile_scalar(src, dim):
    '''Compile one expression string to a callable u -> float.'''
    if not isinstance(src, str):
        raise ParseError(f"expression must be a string, got {type(src).__name__}")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {src!r}: {exc.msg}") from exc
    _Validator(dim).visit(tree)
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}}
    env.update(_FUNCS)
    env.update(_CONSTS)

    def evaluate(u):
        return float(eval(code, env, {"u": u}))

    return evaluate


def compile_vector(exprs, dim):
    '''Compile a component list (or ";"-joined string) to u -> ndarray(dim).'''
    if isinstance(exprs, str):
        exprs = [s for s in (part.strip() for part in exprs.split(";")) if s]
    if not isinstance(exprs, (list, tuple)):
        raise ParseError("vector expression must be a list of strings")
    if len(exprs) != dim:
        raise ParseError(f"expected {dim} components, got {len(exprs)}")
    comps = [compile_scalar(s, dim) for s in exprs]

    def evaluate(u):
        return np.array([c(u) for c in comps])

    return evaluate


def compile_matrix(rows, dim):
    '''Compile a list of rows (each a component list) to u -> ndarray(dim, dim).'''
    if not isinstance(rows, (list, tuple)) or len(rows) != dim:
        raise ParseError(f"expected {dim} matrix rows")
    row_fns = [compile_vector(r, dim) for r in rows]

    def evaluate(u):
        return np.array([fn(u) for fn in row_fns])

    return evaluate
