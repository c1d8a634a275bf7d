"""Recursive-descent parser for the neurq SQL dialect.

Grammar (keywords case-insensitive)::

    statement   := [WITH cte {, cte}] (select | predict) | create_model | drop_model [;]
    cte         := ident AS ( select )
    select      := SELECT items [FROM from] [WHERE expr] [GROUP BY exprs]
                   [ORDER BY order {, order}] [LIMIT int]
    from        := item { [INNER] JOIN item ON expr | CROSS JOIN item | , item }
    item        := ident [[AS] ident] | ( select | predict ) [AS] ident
    predict     := PREDICT VALUE OF colref WITH PRIMARY KEY colref FROM from
                   [WHERE expr] ( TRAIN ON colref {, colref} | USING MODEL ident )
    create_model:= CREATE MODEL ident KIND ident ON ident FEATURES ( ident {, ident} )
                   [TARGET ident]
    drop_model  := DROP MODEL ident
"""

from typing import Optional

from neurq.errors import SqlSyntaxError
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
    JoinClause,
    Literal,
    OrderItem,
    PredictBlock,
    PredictRef,
    PredictStatement,
    Select,
    SelectItem,
    Star,
    Statement,
    SubqueryRef,
    TableRef,
    UnaryOp,
)
from neurq.sql.lexer import Token, tokenize

_COMPARISONS = ("=", "<>", "<", "<=", ">", ">=")


def parse(text: str) -> Statement:
    """Parse one SQL statement.

    Args:
        text: SQL source

    Returns:
        Statement AST

    Raises:
        SqlSyntaxError: positioned at the offending token
    """
    return _Parser(tokenize(text)).statement()


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers --

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "KEYWORD" and self.tok.value in words

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "OP" and self.tok.value in ops

    def next(self) -> Token:
        tok = self.tok
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, *expected: str) -> SqlSyntaxError:
        return SqlSyntaxError(self.tok.line, self.tok.column, set(expected), self.tok.describe())

    def expect_kw(self, *words: str, clause: Optional[str] = None) -> None:
        """Consume a keyword sequence, reporting ``clause`` when it is missing."""
        for word in words:
            if not self.at_kw(word):
                raise self.fail(clause or word)
            self.next()

    def expect_op(self, op: str) -> None:
        if not self.at_op(op):
            raise self.fail(f"'{op}'")
        self.next()

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "IDENT":
            raise self.fail(what)
        return self.next().value

    # -- statements --

    def statement(self) -> Statement:
        if self.at_kw("CREATE"):
            stmt: Statement = self.create_model()
        elif self.at_kw("DROP"):
            self.next()
            self.expect_kw("MODEL")
            stmt = DropModel(self.ident("model name"))
        else:
            ctes = self.with_clause()
            if self.at_kw("PREDICT"):
                stmt = PredictStatement(self.predict(), ctes)
            elif self.at_kw("SELECT"):
                stmt = self.select(ctes)
            else:
                raise self.fail("SELECT", "PREDICT", "WITH", "CREATE", "DROP")
        if self.at_op(";"):
            self.next()
        if self.tok.kind != "EOF":
            raise self.fail("end of input")
        return stmt

    def with_clause(self) -> tuple[Cte, ...]:
        if not self.at_kw("WITH"):
            return ()
        self.next()
        ctes = []
        while True:
            name = self.ident("CTE name")
            self.expect_kw("AS")
            self.expect_op("(")
            ctes.append(Cte(name, self.select(())))
            self.expect_op(")")
            if not self.at_op(","):
                return tuple(ctes)
            self.next()

    def create_model(self) -> CreateModel:
        self.expect_kw("CREATE")
        self.expect_kw("MODEL")
        name = self.ident("model name")
        self.expect_kw("KIND")
        kind = self.ident("model kind")
        self.expect_kw("ON")
        table = self.ident("table name")
        self.expect_kw("FEATURES")
        self.expect_op("(")
        features = [self.ident("feature column")]
        while self.at_op(","):
            self.next()
            features.append(self.ident("feature column"))
        self.expect_op(")")
        target = None
        if self.at_kw("TARGET"):
            self.next()
            target = self.ident("target column")
        return CreateModel(name, kind, table, tuple(features), target)

    def select(self, ctes: tuple[Cte, ...]) -> Select:
        self.expect_kw("SELECT")
        items = [self.select_item()]
        while self.at_op(","):
            self.next()
            items.append(self.select_item())
        from_ = None
        if self.at_kw("FROM"):
            self.next()
            from_ = self.from_clause()
        where = None
        if self.at_kw("WHERE"):
            self.next()
            where = self.expr()
        group_by: list[Expr] = []
        if self.at_kw("GROUP"):
            self.next()
            self.expect_kw("BY")
            group_by.append(self.expr())
            while self.at_op(","):
                self.next()
                group_by.append(self.expr())
        order_by: list[OrderItem] = []
        if self.at_kw("ORDER"):
            self.next()
            self.expect_kw("BY")
            order_by.append(self.order_item())
            while self.at_op(","):
                self.next()
                order_by.append(self.order_item())
        limit = None
        if self.at_kw("LIMIT"):
            self.next()
            if self.tok.kind != "INT":
                raise self.fail("integer")
            limit = int(self.next().value)
        return Select(tuple(items), from_, where, tuple(group_by), tuple(order_by), limit, ctes)

    def select_item(self) -> SelectItem:
        if self.at_op("*"):
            self.next()
            return SelectItem(Star())
        if self.tok.kind == "IDENT" and self.peek().value == "." and self.peek(2).value == "*":
            table = self.next().value
            self.next()
            self.next()
            return SelectItem(Star(table))
        expr = self.expr()
        alias = None
        if self.at_kw("AS"):
            self.next()
            alias = self.ident("alias")
        elif self.tok.kind == "IDENT":
            alias = self.next().value
        return SelectItem(expr, alias)

    def order_item(self) -> OrderItem:
        expr = self.expr()
        descending = False
        if self.at_kw("ASC", "DESC"):
            descending = self.next().value == "DESC"
        return OrderItem(expr, descending)

    def from_clause(self) -> FromClause:
        first = self.from_item()
        joins = []
        while True:
            if self.at_kw("JOIN", "INNER"):
                if self.at_kw("INNER"):
                    self.next()
                self.expect_kw("JOIN")
                item = self.from_item()
                self.expect_kw("ON")
                joins.append(JoinClause("INNER", item, self.expr()))
            elif self.at_kw("CROSS"):
                self.next()
                self.expect_kw("JOIN")
                joins.append(JoinClause("CROSS", self.from_item()))
            elif self.at_op(","):
                self.next()
                joins.append(JoinClause("CROSS", self.from_item()))
            else:
                return FromClause(first, tuple(joins))

    def from_item(self) -> FromItem:
        if self.at_op("("):
            self.next()
            if self.at_kw("PREDICT"):
                block = self.predict()
                self.expect_op(")")
                return PredictRef(block, self.alias(required=False))
            query = self.select(())
            self.expect_op(")")
            return SubqueryRef(query, self.alias(required=True))
        name = self.ident("table name")
        return TableRef(name, self.alias(required=False))

    def alias(self, required: bool) -> Optional[str]:
        if self.at_kw("AS"):
            self.next()
            return self.ident("alias")
        if self.tok.kind == "IDENT":
            return self.next().value
        if required:
            raise self.fail("alias")
        return None

    def predict(self) -> PredictBlock:
        self.expect_kw("PREDICT")
        self.expect_kw("VALUE", "OF", clause="VALUE OF")
        target = self.column_ref()
        self.expect_kw("WITH", "PRIMARY", "KEY", clause="WITH PRIMARY KEY")
        key = self.column_ref()
        self.expect_kw("FROM")
        source = self.from_clause()
        where = None
        if self.at_kw("WHERE"):
            self.next()
            where = self.expr()
        if self.at_kw("TRAIN"):
            self.next()
            self.expect_kw("ON")
            cols = [self.column_ref()]
            while self.at_op(","):
                self.next()
                cols.append(self.column_ref())
            return PredictBlock(target, key, source, where, train_on=tuple(cols))
        if self.at_kw("USING"):
            self.next()
            self.expect_kw("MODEL")
            return PredictBlock(target, key, source, where, using_model=self.ident("model name"))
        raise self.fail("TRAIN ON", "USING MODEL")

    def column_ref(self) -> ColumnRef:
        first = self.ident("column reference")
        if self.at_op("."):
            self.next()
            return ColumnRef(first, self.ident("column name"))
        return ColumnRef(None, first)

    # -- expressions, lowest precedence first --

    def expr(self) -> Expr:
        left = self.and_expr()
        while self.at_kw("OR"):
            self.next()
            left = BinaryOp("OR", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at_kw("AND"):
            self.next()
            left = BinaryOp("AND", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.at_kw("NOT"):
            self.next()
            return UnaryOp("NOT", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        negated = False
        if self.at_kw("NOT") and self.peek().kind == "KEYWORD" and self.peek().value == "BETWEEN":
            self.next()
            negated = True
        if self.at_kw("BETWEEN"):
            self.next()
            low = self.additive()
            self.expect_kw("AND")
            high = self.additive()
            return Between(left, low, high, negated)
        if self.at_op(*_COMPARISONS):
            op = self.next().value
            return BinaryOp(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.term()
        while self.at_op("+", "-"):
            op = self.next().value
            left = BinaryOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.at_op("*", "/", "%"):
            op = self.next().value
            left = BinaryOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.next()
            return UnaryOp("-", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "INT":
            self.next()
            return Literal(int(tok.value))
        if tok.kind == "FLOAT":
            self.next()
            return Literal(float(tok.value))
        if tok.kind == "STRING":
            self.next()
            return Literal(tok.value)
        if self.at_kw("TRUE", "FALSE"):
            self.next()
            return Literal(tok.value == "TRUE")
        if self.at_kw("NULL"):
            self.next()
            return Literal(None)
        if self.at_op("("):
            self.next()
            inner = self.expr()
            self.expect_op(")")
            return inner
        if tok.kind == "IDENT":
            if self.peek().kind == "OP" and self.peek().value == "(":
                return self.func_call()
            return self.column_ref()
        raise self.fail("expression")

    def func_call(self) -> FuncCall:
        name = self.next().value.upper()
        self.expect_op("(")
        if self.at_op("*"):
            self.next()
            self.expect_op(")")
            return FuncCall(name, (), star=True)
        args: list[Expr] = []
        if not self.at_op(")"):
            args.append(self.expr())
            while self.at_op(","):
                self.next()
                args.append(self.expr())
        self.expect_op(")")
        return FuncCall(name, tuple(args))
