"""Tokenizer for the neurq SQL dialect."""

from dataclasses import dataclass

from neurq.errors import SqlSyntaxError

KEYWORDS = frozenset({
    "SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "AS", "JOIN", "INNER",
    "CROSS", "ON", "GROUP", "BY", "ORDER", "ASC", "DESC", "LIMIT", "WITH",
    "BETWEEN", "PREDICT", "VALUE", "OF", "PRIMARY", "KEY", "TRAIN", "USING",
    "MODEL", "CREATE", "DROP", "KIND", "FEATURES", "TARGET", "TRUE", "FALSE",
    "NULL",
})

_TWO_CHAR = ("<>", "!=", "<=", ">=")
_ONE_CHAR = ",().*+-/%=<>;"


@dataclass(frozen=True)
class Token:
    kind: str  # KEYWORD, IDENT, INT, FLOAT, STRING, OP, EOF
    value: str
    line: int
    column: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return f"'{self.value}'"
        return self.value


def tokenize(text: str) -> list[Token]:
    """Split SQL text into tokens with 1-based line/column positions.

    Keywords are matched case-insensitively and normalized to upper case;
    identifiers keep their case. ``"quoted"`` identifiers may shadow keywords.
    """
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance(count: int) -> None:
        nonlocal i, line, col
        for _ in range(count):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch.isspace():
            advance(1)
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                advance(1)
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word.upper() in KEYWORDS:
                tokens.append(Token("KEYWORD", word.upper(), start_line, start_col))
            else:
                tokens.append(Token("IDENT", word, start_line, start_col))
            advance(j - i)
        elif ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            kind = "INT"
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                kind = "FLOAT"
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(Token(kind, text[i:j], start_line, start_col))
            advance(j - i)
        elif ch == "'":
            j = i + 1
            chars = []
            while True:
                if j >= n:
                    raise SqlSyntaxError(start_line, start_col, ["closing quote"], "end of input")
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        chars.append("'")
                        j += 2
                        continue
                    break
                chars.append(text[j])
                j += 1
            tokens.append(Token("STRING", "".join(chars), start_line, start_col))
            advance(j + 1 - i)
        elif ch == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise SqlSyntaxError(start_line, start_col, ["closing double quote"], "end of input")
            tokens.append(Token("IDENT", text[i + 1:j], start_line, start_col))
            advance(j + 1 - i)
        elif text[i:i + 2] in _TWO_CHAR:
            op = text[i:i + 2]
            tokens.append(Token("OP", "<>" if op == "!=" else op, start_line, start_col))
            advance(2)
        elif ch in _ONE_CHAR:
            tokens.append(Token("OP", ch, start_line, start_col))
            advance(1)
        else:
            raise SqlSyntaxError(start_line, start_col, ["a token"], repr(ch))

    tokens.append(Token("EOF", "", *_eof_position(text)))
    return tokens


def _eof_position(text: str) -> tuple[int, int]:
    """Position of the last character, so EOF errors stay inside the input."""
    if not text:
        return 1, 1
    stripped = text.rstrip()
    if not stripped:
        return 1, 1
    lines = stripped.split("\n")
    return len(lines), max(1, len(lines[-1]))
