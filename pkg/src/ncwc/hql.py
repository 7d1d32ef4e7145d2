"""Minimal HQL front end: recursive-descent parser and pretty-printer.

Exactly six statement forms are supported:

    SELECT * FROM [db.]ident [LIMIT n]
    DESCRIBE [EXTENDED] [db.]ident
    SHOW TABLES
    SHOW DATABASES
    DROP TABLE [IF EXISTS] [db.]ident
    CREATE TABLE [IF NOT EXISTS] ident (col type, ...)
        [CLUSTERED BY (col, ...) INTO n BUCKETS]

Keywords are case-insensitive and reserved.  ``render`` produces a
canonical spelling such that parse(render(stmt)) == stmt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConnectorError, ParseError
from .schema import WarehouseType

KEYWORDS = {
    "SELECT", "FROM", "LIMIT", "DESCRIBE", "EXTENDED", "SHOW", "TABLES",
    "DATABASES", "DROP", "TABLE", "IF", "EXISTS", "CREATE", "NOT",
    "CLUSTERED", "BY", "INTO", "BUCKETS",
}


@dataclass(frozen=True)
class SelectAll:
    table: str
    database: str | None = None
    limit: int | None = None


@dataclass(frozen=True)
class Describe:
    table: str
    database: str | None = None
    extended: bool = False


@dataclass(frozen=True)
class ShowTables:
    pass


@dataclass(frozen=True)
class ShowDatabases:
    pass


@dataclass(frozen=True)
class DropTable:
    table: str
    database: str | None = None
    if_exists: bool = False


@dataclass(frozen=True)
class CreateTable:
    table: str
    columns: tuple[tuple[str, WarehouseType], ...]
    if_not_exists: bool = False
    bucket_cols: tuple[str, ...] = field(default=())
    num_buckets: int = 0


Statement = SelectAll | Describe | ShowTables | ShowDatabases | DropTable | CreateTable


@dataclass(frozen=True)
class _Token:
    kind: str  # KEYWORD | IDENT | NUMBER | PUNCT | EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[(),.*]|\S")


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        for m in _TOKEN_RE.finditer(line):
            raw = m.group(0)
            col = m.start() + 1
            if raw[0].isalpha() or raw[0] == "_":
                kind = "KEYWORD" if raw.upper() in KEYWORDS else "IDENT"
            elif raw.isdigit():
                kind = "NUMBER"
            elif raw in "(),.*":
                kind = "PUNCT"
            else:
                raise ParseError(line_no, col, ("a token",), raw)
            tokens.append(_Token(kind, raw, line_no, col))
    last_line = text.count("\n") + 1
    last_col = len(text.split("\n")[-1]) + 1
    tokens.append(_Token("EOF", "", last_line, last_col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, expected: tuple[str, ...]):
        tok = self.peek()
        found = tok.text if tok.kind != "EOF" else "end of input"
        raise ParseError(tok.line, tok.col, expected, found)

    def accept_keyword(self, word: str) -> bool:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.text.upper() == word:
            self.pos += 1
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        if not self.accept_keyword(word):
            self._fail((word,))

    def expect_punct(self, ch: str) -> None:
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == ch:
            self.pos += 1
            return
        self._fail((f"'{ch}'",))

    def accept_punct(self, ch: str) -> bool:
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == ch:
            self.pos += 1
            return True
        return False

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != "IDENT":
            self._fail((what,))
        if len(tok.text) > 64:
            raise ParseError(tok.line, tok.col, (f"{what} of at most 64 characters",), tok.text)
        self.pos += 1
        return tok.text

    def expect_number(self, what: str = "integer") -> int:
        tok = self.peek()
        if tok.kind != "NUMBER":
            self._fail((what,))
        self.pos += 1
        return int(tok.text)

    def expect_eof(self) -> None:
        if self.peek().kind != "EOF":
            self._fail(("end of statement",))

    def qualified_name(self) -> tuple[str | None, str]:
        first = self.expect_ident("table name")
        if self.accept_punct("."):
            second = self.expect_ident("table name")
            return first, second
        return None, first

    # -- statements ------------------------------------------------------

    def statement(self) -> Statement:
        if self.accept_keyword("SELECT"):
            stmt = self.select_rest()
        elif self.accept_keyword("DESCRIBE"):
            stmt = self.describe_rest()
        elif self.accept_keyword("SHOW"):
            stmt = self.show_rest()
        elif self.accept_keyword("DROP"):
            stmt = self.drop_rest()
        elif self.accept_keyword("CREATE"):
            stmt = self.create_rest()
        else:
            self._fail(("SELECT", "DESCRIBE", "SHOW", "DROP", "CREATE"))
        self.expect_eof()
        return stmt

    def select_rest(self) -> SelectAll:
        self.expect_punct("*")
        self.expect_keyword("FROM")
        database, table = self.qualified_name()
        limit = None
        if self.accept_keyword("LIMIT"):
            limit = self.expect_number("row limit")
        return SelectAll(table=table, database=database, limit=limit)

    def describe_rest(self) -> Describe:
        extended = self.accept_keyword("EXTENDED")
        database, table = self.qualified_name()
        return Describe(table=table, database=database, extended=extended)

    def show_rest(self):
        if self.accept_keyword("TABLES"):
            return ShowTables()
        if self.accept_keyword("DATABASES"):
            return ShowDatabases()
        self._fail(("TABLES", "DATABASES"))

    def drop_rest(self) -> DropTable:
        self.expect_keyword("TABLE")
        if_exists = False
        if self.accept_keyword("IF"):
            self.expect_keyword("EXISTS")
            if_exists = True
        database, table = self.qualified_name()
        return DropTable(table=table, database=database, if_exists=if_exists)

    def create_rest(self) -> CreateTable:
        self.expect_keyword("TABLE")
        if_not_exists = False
        if self.accept_keyword("IF"):
            self.expect_keyword("NOT")
            self.expect_keyword("EXISTS")
            if_not_exists = True
        table = self.expect_ident("table name")
        self.expect_punct("(")
        columns = [self.column_def()]
        while self.accept_punct(","):
            columns.append(self.column_def())
        self.expect_punct(")")
        bucket_cols: tuple[str, ...] = ()
        num_buckets = 0
        if self.accept_keyword("CLUSTERED"):
            self.expect_keyword("BY")
            self.expect_punct("(")
            cols = [self.expect_ident("column name")]
            while self.accept_punct(","):
                cols.append(self.expect_ident("column name"))
            self.expect_punct(")")
            self.expect_keyword("INTO")
            num_buckets = self.expect_number("bucket count")
            self.expect_keyword("BUCKETS")
            bucket_cols = tuple(cols)
        return CreateTable(
            table=table,
            columns=tuple(columns),
            if_not_exists=if_not_exists,
            bucket_cols=bucket_cols,
            num_buckets=num_buckets,
        )

    def column_def(self) -> tuple[str, WarehouseType]:
        name = self.expect_ident("column name")
        tok = self.peek()
        if tok.kind != "IDENT":
            self._fail(("column type",))
        self.pos += 1
        text = tok.text
        if self.accept_punct("("):
            params = [str(self.expect_number("type parameter"))]
            while self.accept_punct(","):
                params.append(str(self.expect_number("type parameter")))
            self.expect_punct(")")
            text += f"({','.join(params)})"
        try:
            wtype = WarehouseType.parse(text)
        except ConnectorError:
            raise ParseError(tok.line, tok.col, ("column type",), text) from None
        return name, wtype


def parse(text: str) -> Statement:
    return _Parser(text).statement()


def render(stmt: Statement) -> str:
    """Canonical spelling; parse(render(s)) == s for every statement."""
    if isinstance(stmt, SelectAll):
        out = f"SELECT * FROM {_qual(stmt.database, stmt.table)}"
        if stmt.limit is not None:
            out += f" LIMIT {stmt.limit}"
        return out
    if isinstance(stmt, Describe):
        mid = "EXTENDED " if stmt.extended else ""
        return f"DESCRIBE {mid}{_qual(stmt.database, stmt.table)}"
    if isinstance(stmt, ShowTables):
        return "SHOW TABLES"
    if isinstance(stmt, ShowDatabases):
        return "SHOW DATABASES"
    if isinstance(stmt, DropTable):
        mid = "IF EXISTS " if stmt.if_exists else ""
        return f"DROP TABLE {mid}{_qual(stmt.database, stmt.table)}"
    if isinstance(stmt, CreateTable):
        mid = "IF NOT EXISTS " if stmt.if_not_exists else ""
        cols = ", ".join(f"{n} {t.render()}" for n, t in stmt.columns)
        out = f"CREATE TABLE {mid}{stmt.table} ({cols})"
        if stmt.bucket_cols:
            out += f" CLUSTERED BY ({', '.join(stmt.bucket_cols)}) INTO {stmt.num_buckets} BUCKETS"
        return out
    raise ConnectorError("E_TYPE", f"not a statement: {stmt!r}")


def _qual(database: str | None, table: str) -> str:
    return table if database is None else f"{database}.{table}"
