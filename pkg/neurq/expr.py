"""Expression evaluation and canonicalization.

Expressions are the AST nodes of ``neurq.sql.ast``. Inside plans every
column reference is keyed as ``alias.name``; evaluation compiles an
expression against a key -> row-position index.
"""

import operator
from typing import Any, Callable, Iterable, Mapping, Optional

from neurq.errors import TypeMismatch, UnknownColumn
from neurq.sql.ast import (
    AGGREGATES,
    Between,
    BinaryOp,
    ColumnRef,
    Expr,
    FuncCall,
    Literal,
    Star,
    UnaryOp,
)
from neurq.sql.unparse import render_expr

NUMERIC = frozenset({"int64", "float64"})

_ARITH = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "%": operator.mod,
}
_COMPARE = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_SCALAR_FUNCS: dict[str, Callable[[Any], Any]] = {
    "ABS": abs,
    "LENGTH": lambda s: len(s),
    "LOWER": lambda s: s.lower(),
    "UPPER": lambda s: s.upper(),
}

RowFn = Callable[[tuple], Any]


def _divide(a, b):
    return None if b == 0 else a / b


def compile_expr(expr: Expr, index: Mapping[str, int]) -> RowFn:
    """Compile an expression into a function of one row tuple.

    NULL propagates through arithmetic and comparisons; AND/OR use
    three-valued logic.
    """
    if isinstance(expr, Literal):
        value = expr.value
        return lambda row: value
    if isinstance(expr, ColumnRef):
        try:
            pos = index[expr.key]
        except KeyError:
            raise UnknownColumn(expr.key) from None
        return lambda row: row[pos]
    if isinstance(expr, UnaryOp):
        inner = compile_expr(expr.operand, index)
        if expr.op == "NOT":
            return lambda row: None if (v := inner(row)) is None else not v
        return lambda row: None if (v := inner(row)) is None else -v
    if isinstance(expr, Between):
        value_fn = compile_expr(expr.expr, index)
        low_fn = compile_expr(expr.low, index)
        high_fn = compile_expr(expr.high, index)
        negated = expr.negated

        def between(row):
            v, lo, hi = value_fn(row), low_fn(row), high_fn(row)
            if v is None or lo is None or hi is None:
                return None
            return (lo <= v <= hi) != negated

        return between
    if isinstance(expr, BinaryOp):
        left = compile_expr(expr.left, index)
        right = compile_expr(expr.right, index)
        if expr.op == "AND":
            def and_(row):
                a = left(row)
                if a is False:
                    return False
                b = right(row)
                if b is False:
                    return False
                return None if a is None or b is None else True
            return and_
        if expr.op == "OR":
            def or_(row):
                a = left(row)
                if a is True:
                    return True
                b = right(row)
                if b is True:
                    return True
                return None if a is None or b is None else False
            return or_
        fn = _COMPARE.get(expr.op) or _ARITH.get(expr.op) or (_divide if expr.op == "/" else None)
        if fn is None:
            raise TypeMismatch(f"unsupported operator {expr.op}")

        def binary(row):
            a, b = left(row), right(row)
            if a is None or b is None:
                return None
            return fn(a, b)

        return binary
    if isinstance(expr, FuncCall):
        if expr.name not in _SCALAR_FUNCS:
            raise TypeMismatch(f"{expr.name} is not a scalar function")
        fn = _SCALAR_FUNCS[expr.name]
        arg = compile_expr(expr.args[0], index)
        return lambda row: None if (v := arg(row)) is None else fn(v)
    raise TypeMismatch(f"cannot evaluate {type(expr).__name__}")


def compile_predicate(expr: Optional[Expr], index: Mapping[str, int]) -> Callable[[tuple], bool]:
    """Row filter keeping rows where the predicate is exactly TRUE."""
    if expr is None:
        return lambda row: True
    fn = compile_expr(expr, index)
    return lambda row: fn(row) is True


def evaluate(expr: Expr, row: tuple = (), index: Optional[Mapping[str, int]] = None) -> Any:
    return compile_expr(expr, index or {})(row)


# -- structure helpers --


def columns_of(expr: Optional[Expr]) -> set[str]:
    """Keys of every column the expression references."""
    if expr is None:
        return set()
    if isinstance(expr, ColumnRef):
        return {expr.key}
    if isinstance(expr, BinaryOp):
        return columns_of(expr.left) | columns_of(expr.right)
    if isinstance(expr, UnaryOp):
        return columns_of(expr.operand)
    if isinstance(expr, Between):
        return columns_of(expr.expr) | columns_of(expr.low) | columns_of(expr.high)
    if isinstance(expr, FuncCall):
        out: set[str] = set()
        for arg in expr.args:
            out |= columns_of(arg)
        return out
    return set()


def conjuncts(expr: Optional[Expr]) -> list[Expr]:
    if expr is None:
        return []
    if isinstance(expr, BinaryOp) and expr.op == "AND":
        return conjuncts(expr.left) + conjuncts(expr.right)
    return [expr]


def conjoin(terms: Iterable[Expr]) -> Optional[Expr]:
    result: Optional[Expr] = None
    for term in terms:
        result = term if result is None else BinaryOp("AND", result, term)
    return result


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace column references by key."""
    if isinstance(expr, ColumnRef):
        return mapping.get(expr.key, expr)
    if isinstance(expr, BinaryOp):
        return BinaryOp(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, UnaryOp):
        return UnaryOp(expr.op, substitute(expr.operand, mapping))
    if isinstance(expr, Between):
        return Between(
            substitute(expr.expr, mapping),
            substitute(expr.low, mapping),
            substitute(expr.high, mapping),
            expr.negated,
        )
    if isinstance(expr, FuncCall):
        return FuncCall(expr.name, tuple(substitute(a, mapping) for a in expr.args), expr.star)
    return expr


def strip_qualifiers(expr: Expr) -> Expr:
    """Drop ``alias.`` prefixes; used when pushing a predicate into storage."""
    return substitute(expr, {k: ColumnRef(None, k.split(".", 1)[-1]) for k in columns_of(expr)})


def contains_aggregate(expr: Expr) -> bool:
    if isinstance(expr, FuncCall):
        return expr.name in AGGREGATES or any(contains_aggregate(a) for a in expr.args)
    if isinstance(expr, BinaryOp):
        return contains_aggregate(expr.left) or contains_aggregate(expr.right)
    if isinstance(expr, UnaryOp):
        return contains_aggregate(expr.operand)
    if isinstance(expr, Between):
        return any(contains_aggregate(e) for e in (expr.expr, expr.low, expr.high))
    return False


def equi_keys(expr: Expr, left: set[str], right: set[str]) -> Optional[tuple[str, str]]:
    """(left key, right key) when ``expr`` is ``l = r`` across the two sides."""
    if not (isinstance(expr, BinaryOp) and expr.op == "="):
        return None
    a, b = expr.left, expr.right
    if not (isinstance(a, ColumnRef) and isinstance(b, ColumnRef)):
        return None
    if a.key in left and b.key in right:
        return a.key, b.key
    if b.key in left and a.key in right:
        return b.key, a.key
    return None


# -- canonical form --

_FLIP = {">": "<", ">=": "<="}


def canonical(expr: Optional[Expr]) -> str:
    """Text that is equal for trivially reordered expressions.

    Conjuncts and disjuncts are sorted, ``=``/``<>`` operands are sorted and
    ``a > b`` is written as ``b < a``.
    """
    if expr is None:
        return ""
    if isinstance(expr, BinaryOp) and expr.op in ("AND", "OR"):
        terms = _flatten(expr, expr.op)
        return "(" + f" {expr.op} ".join(sorted(canonical(t) for t in terms)) + ")"
    if isinstance(expr, BinaryOp) and expr.op in ("=", "<>"):
        left, right = sorted((canonical(expr.left), canonical(expr.right)))
        return f"({left} {expr.op} {right})"
    if isinstance(expr, BinaryOp) and expr.op in _FLIP:
        return f"({canonical(expr.right)} {_FLIP[expr.op]} {canonical(expr.left)})"
    if isinstance(expr, BinaryOp):
        return f"({canonical(expr.left)} {expr.op} {canonical(expr.right)})"
    if isinstance(expr, UnaryOp):
        return f"({expr.op} {canonical(expr.operand)})"
    if isinstance(expr, Between):
        neg = "NOT " if expr.negated else ""
        return f"({canonical(expr.expr)} {neg}BETWEEN {canonical(expr.low)} AND {canonical(expr.high)})"
    if isinstance(expr, FuncCall):
        return f"{expr.name}({'*' if expr.star else ','.join(canonical(a) for a in expr.args)})"
    if isinstance(expr, Literal):
        return f"{type(expr.value).__name__}:{render_expr(expr)}"
    return render_expr(expr)


def _flatten(expr: Expr, op: str) -> list[Expr]:
    if isinstance(expr, BinaryOp) and expr.op == op:
        return _flatten(expr.left, op) + _flatten(expr.right, op)
    return [expr]


# -- constant folding --


def fold_constants(expr: Expr) -> Expr:
    """Evaluate literal-only subexpressions and simplify boolean identities."""
    if isinstance(expr, BinaryOp):
        left, right = fold_constants(expr.left), fold_constants(expr.right)
        if expr.op == "AND":
            for a, b in ((left, right), (right, left)):
                if _is_bool(a, True):
                    return b
                if _is_bool(a, False):
                    return Literal(False)
        if expr.op == "OR":
            for a, b in ((left, right), (right, left)):
                if _is_bool(a, False):
                    return b
                if _is_bool(a, True):
                    return Literal(True)
        folded = BinaryOp(expr.op, left, right)
        if isinstance(left, Literal) and isinstance(right, Literal):
            return _try_literal(folded)
        return folded
    if isinstance(expr, UnaryOp):
        operand = fold_constants(expr.operand)
        folded = UnaryOp(expr.op, operand)
        return _try_literal(folded) if isinstance(operand, Literal) else folded
    if isinstance(expr, Between):
        parts = [fold_constants(e) for e in (expr.expr, expr.low, expr.high)]
        folded = Between(*parts, expr.negated)
        return _try_literal(folded) if all(isinstance(p, Literal) for p in parts) else folded
    if isinstance(expr, FuncCall):
        return FuncCall(expr.name, tuple(fold_constants(a) for a in expr.args), expr.star)
    return expr


def _is_bool(expr: Expr, value: bool) -> bool:
    return isinstance(expr, Literal) and expr.value is value


def _try_literal(expr: Expr) -> Expr:
    try:
        return Literal(evaluate(expr))
    except (TypeError, ArithmeticError, TypeMismatch):
        return expr


# -- typing --


def infer_type(expr: Expr, types: Mapping[str, str]) -> str:
    """Static type of an expression, raising TypeMismatch on bad operands.

    Returns one of int64, float64, text, bool, vector or null.
    """
    if isinstance(expr, Literal):
        v = expr.value
        if v is None:
            return "null"
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, int):
            return "int64"
        if isinstance(v, float):
            return "float64"
        return "text"
    if isinstance(expr, ColumnRef):
        if expr.key not in types:
            raise UnknownColumn(expr.key)
        return types[expr.key]
    if isinstance(expr, Star):
        return "null"
    if isinstance(expr, UnaryOp):
        inner = infer_type(expr.operand, types)
        if expr.op == "NOT":
            _require(inner, {"bool", "null"}, "NOT")
            return "bool"
        _require(inner, NUMERIC | {"null"}, "unary -")
        return inner
    if isinstance(expr, Between):
        kinds = [infer_type(e, types) for e in (expr.expr, expr.low, expr.high)]
        _comparable(kinds[0], kinds[1], "BETWEEN")
        _comparable(kinds[0], kinds[2], "BETWEEN")
        return "bool"
    if isinstance(expr, BinaryOp):
        a, b = infer_type(expr.left, types), infer_type(expr.right, types)
        if expr.op in ("AND", "OR"):
            _require(a, {"bool", "null"}, expr.op)
            _require(b, {"bool", "null"}, expr.op)
            return "bool"
        if expr.op in _COMPARE:
            _comparable(a, b, expr.op)
            return "bool"
        _require(a, NUMERIC | {"null"}, expr.op)
        _require(b, NUMERIC | {"null"}, expr.op)
        if expr.op == "/" or "float64" in (a, b):
            return "float64"
        return "int64"
    if isinstance(expr, FuncCall):
        arg_types = [infer_type(a, types) for a in expr.args]
        if expr.name == "COUNT":
            return "int64"
        if expr.name in ("SUM", "AVG"):
            _require(arg_types[0] if arg_types else "null", NUMERIC, expr.name)
            return "float64" if expr.name == "AVG" else arg_types[0]
        if expr.name in ("MIN", "MAX", "ABS"):
            return arg_types[0] if arg_types else "null"
        if expr.name == "LENGTH":
            _require(arg_types[0], {"text"}, expr.name)
            return "int64"
        if expr.name in ("LOWER", "UPPER"):
            _require(arg_types[0], {"text"}, expr.name)
            return "text"
        raise TypeMismatch(f"unknown function {expr.name}")
    raise TypeMismatch(f"cannot type {type(expr).__name__}")


def _require(kind: str, allowed: set[str] | frozenset[str], what: str) -> None:
    if kind not in allowed:
        raise TypeMismatch(f"{what} does not accept {kind}")


def _comparable(a: str, b: str, what: str) -> None:
    if "null" in (a, b) or a == b or (a in NUMERIC and b in NUMERIC):
        return
    raise TypeMismatch(f"cannot compare {a} with {b} in {what}")
