"""Render ASTs back to SQL text.

Parenthesization follows operator precedence so that ``parse(unparse(s))``
rebuilds the same tree.
"""

import re

from neurq.sql.ast import (
    Between,
    BinaryOp,
    ColumnRef,
    CreateModel,
    Cte,
    DropModel,
    Expr,
    FromClause,
    FromItem,
    FuncCall,
    Literal,
    PredictBlock,
    PredictRef,
    PredictStatement,
    Select,
    Star,
    Statement,
    SubqueryRef,
    TableRef,
    UnaryOp,
)
from neurq.sql.lexer import KEYWORDS

_PRECEDENCE = {
    "OR": 1, "AND": 2,
    "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}
_NOT, _COMPARE, _ADDITIVE, _UNARY, _PRIMARY = 3, 4, 5, 7, 8
_SIMPLE_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def quote_ident(name: str) -> str:
    if _SIMPLE_IDENT.match(name) and name.upper() not in KEYWORDS:
        return name
    return f'"{name}"'


def render_literal(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, int):
        return str(value) if value >= 0 else f"({value})"
    if isinstance(value, float):
        text = repr(value)
        if "e" in text or "n" in text:
            text = format(value, "f")
        return text if value >= 0 else f"({text})"
    escaped = str(value).replace("'", "''")
    return f"'{escaped}'"


def _precedence(expr: Expr) -> int:
    if isinstance(expr, BinaryOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Between):
        return _COMPARE
    if isinstance(expr, UnaryOp):
        return _NOT if expr.op == "NOT" else _UNARY
    return _PRIMARY


def render_expr(expr: Expr, parent: int = 0, right: bool = False) -> str:
    """SQL text of an expression.

    Args:
        expr: Expression node
        parent: Precedence of the enclosing operator
        right: Whether this is the right operand of a left-associative parent
    """
    own = _precedence(expr)
    if isinstance(expr, Literal):
        return render_literal(expr.value)
    if isinstance(expr, ColumnRef):
        name = quote_ident(expr.name)
        return f"{quote_ident(expr.table)}.{name}" if expr.table else name
    if isinstance(expr, Star):
        return f"{quote_ident(expr.table)}.*" if expr.table else "*"
    if isinstance(expr, FuncCall):
        if expr.star:
            return f"{expr.name}(*)"
        return f"{expr.name}({', '.join(render_expr(a) for a in expr.args)})"
    if isinstance(expr, BinaryOp):
        if own == _COMPARE:
            text = f"{render_expr(expr.left, _ADDITIVE)} {expr.op} {render_expr(expr.right, _ADDITIVE)}"
        else:
            text = f"{render_expr(expr.left, own)} {expr.op} {render_expr(expr.right, own, True)}"
    elif isinstance(expr, Between):
        keyword = "NOT BETWEEN" if expr.negated else "BETWEEN"
        text = (
            f"{render_expr(expr.expr, _ADDITIVE)} {keyword} "
            f"{render_expr(expr.low, _ADDITIVE)} AND {render_expr(expr.high, _ADDITIVE)}"
        )
    elif isinstance(expr, UnaryOp):
        if expr.op == "NOT":
            text = f"NOT {render_expr(expr.operand, _NOT)}"
        else:
            inner = render_expr(expr.operand, _UNARY)
            text = f"- {inner}" if inner.startswith("-") else f"-{inner}"
    else:
        raise TypeError(f"cannot render {type(expr).__name__}")
    if own < parent or (own == parent and right):
        return f"({text})"
    return text


def _render_from_item(item: FromItem) -> str:
    if isinstance(item, TableRef):
        name = quote_ident(item.name)
        return f"{name} AS {quote_ident(item.alias)}" if item.alias else name
    if isinstance(item, SubqueryRef):
        return f"({_render_select(item.query)}) AS {quote_ident(item.alias)}"
    if isinstance(item, PredictRef):
        text = f"({_render_predict(item.block)})"
        return f"{text} AS {quote_ident(item.alias)}" if item.alias else text
    raise TypeError(f"cannot render {type(item).__name__}")


def _render_from(clause: FromClause) -> str:
    parts = [_render_from_item(clause.first)]
    for join in clause.joins:
        if join.kind == "CROSS":
            parts.append(f"CROSS JOIN {_render_from_item(join.item)}")
        else:
            parts.append(f"JOIN {_render_from_item(join.item)} ON {render_expr(join.condition)}")
    return " ".join(parts)


def _render_ctes(ctes: tuple[Cte, ...]) -> str:
    if not ctes:
        return ""
    body = ", ".join(f"{quote_ident(c.name)} AS ({_render_select(c.query)})" for c in ctes)
    return f"WITH {body} "


def _render_select(select: Select) -> str:
    items = []
    for item in select.items:
        text = render_expr(item.expr)
        items.append(f"{text} AS {quote_ident(item.alias)}" if item.alias else text)
    parts = [f"{_render_ctes(select.ctes)}SELECT {', '.join(items)}"]
    if select.from_ is not None:
        parts.append(f"FROM {_render_from(select.from_)}")
    if select.where is not None:
        parts.append(f"WHERE {render_expr(select.where)}")
    if select.group_by:
        parts.append(f"GROUP BY {', '.join(render_expr(e) for e in select.group_by)}")
    if select.order_by:
        keys = [f"{render_expr(o.expr)}{' DESC' if o.descending else ''}" for o in select.order_by]
        parts.append(f"ORDER BY {', '.join(keys)}")
    if select.limit is not None:
        parts.append(f"LIMIT {select.limit}")
    return " ".join(parts)


def _render_predict(block: PredictBlock) -> str:
    parts = [
        f"PREDICT VALUE OF {render_expr(block.target)}",
        f"WITH PRIMARY KEY {render_expr(block.key)}",
        f"FROM {_render_from(block.source)}",
    ]
    if block.where is not None:
        parts.append(f"WHERE {render_expr(block.where)}")
    if block.train_on is not None:
        parts.append(f"TRAIN ON {', '.join(render_expr(c) for c in block.train_on)}")
    else:
        parts.append(f"USING MODEL {quote_ident(block.using_model)}")
    return " ".join(parts)


def unparse(stmt: Statement) -> str:
    """Render a statement as a single line of SQL."""
    if isinstance(stmt, Select):
        return _render_select(stmt)
    if isinstance(stmt, PredictStatement):
        return f"{_render_ctes(stmt.ctes)}{_render_predict(stmt.block)}"
    if isinstance(stmt, CreateModel):
        text = (
            f"CREATE MODEL {quote_ident(stmt.name)} KIND {quote_ident(stmt.kind)} "
            f"ON {quote_ident(stmt.table)} FEATURES ({', '.join(quote_ident(f) for f in stmt.features)})"
        )
        return f"{text} TARGET {quote_ident(stmt.target)}" if stmt.target else text
    if isinstance(stmt, DropModel):
        return f"DROP MODEL {quote_ident(stmt.name)}"
    raise TypeError(f"cannot unparse {type(stmt).__name__}")
