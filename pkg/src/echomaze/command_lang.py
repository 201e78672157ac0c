"""Typed-or-spoken command language: normalization, parsing, rendering.

Grammar (recursive descent, all-or-nothing per utterance):

    program := stmt+
    stmt    := move | turn | repeat | query | answer | "go" | "stop"
    move    := ("move" | "go") "forward" [INT]          INT defaults to 1
    turn    := "turn" ("left" | "right" | "around")
    repeat  := "repeat" INT ["times"] "(" stmt+ ")"
    query   := "where" "am" "i" | "what" "is" "around" ["me"]
    answer  := "yes" | "no" | "left" | "right" | "forward"

A bare "go" not followed by "forward" means "start executing".  Limits:
Move cells in [1, 50], Repeat count in [1, 100], nesting depth <= 8.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class EmptyUtterance(ValueError):
    pass


class LimitExceeded(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class ParseError(ValueError):
    """Rejection of a whole utterance, pointing at the offending token."""

    def __init__(self, token_index: int, lexeme: str, expected: str):
        self.token_index = token_index
        self.lexeme = lexeme
        self.expected = expected
        if lexeme:
            where = f"token {token_index} ({lexeme!r})"
        else:
            where = f"end of utterance (token {token_index})"
        super().__init__(f"expected {expected} at {where}")


MAX_MOVE_CELLS = 50
MAX_REPEAT_COUNT = 100
MAX_NESTING_DEPTH = 8

_NUMBER_WORDS = {
    word: str(value)
    for value, word in enumerate(
        [
            "zero", "one", "two", "three", "four", "five", "six", "seven",
            "eight", "nine", "ten", "eleven", "twelve", "thirteen", "fourteen",
            "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
        ]
    )
}

_FILLERS = {"please", "uh", "um"}


def normalize(text: str) -> list[str]:
    """Lowercase, strip punctuation, map number words, drop fillers.

    Parentheses survive as standalone tokens (they group repeat bodies);
    every other non-alphanumeric character acts as whitespace.
    """
    out: list[str] = []
    word: list[str] = []

    def flush() -> None:
        if not word:
            return
        token = "".join(word)
        word.clear()
        token = _NUMBER_WORDS.get(token, token)
        if token not in _FILLERS:
            out.append(token)

    for ch in text.lower():
        if ch.isascii() and (ch.isalnum()):
            word.append(ch)
        elif ch in "()":
            flush()
            out.append(ch)
        else:
            flush()
    flush()
    if not out:
        raise EmptyUtterance("nothing left after normalization")
    return out


class TurnWord(Enum):
    LEFT = "left"
    RIGHT = "right"
    AROUND = "around"


class AnswerWord(Enum):
    YES = "yes"
    NO = "no"
    LEFT = "left"
    RIGHT = "right"
    FORWARD = "forward"


@dataclass(frozen=True)
class Move:
    cells: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.cells <= MAX_MOVE_CELLS:
            raise LimitExceeded(f"move count {self.cells} outside [1, {MAX_MOVE_CELLS}]")


@dataclass(frozen=True)
class Turn:
    direction: TurnWord


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple["CommandAst", ...]

    def __post_init__(self) -> None:
        if not 1 <= self.count <= MAX_REPEAT_COUNT:
            raise LimitExceeded(
                f"repeat count {self.count} outside [1, {MAX_REPEAT_COUNT}]"
            )


@dataclass(frozen=True)
class QueryPosition:
    pass


@dataclass(frozen=True)
class QuerySurroundings:
    pass


@dataclass(frozen=True)
class Answer:
    word: AnswerWord


@dataclass(frozen=True)
class Go:
    pass


@dataclass(frozen=True)
class Stop:
    pass


CommandAst = Move | Turn | Repeat | QueryPosition | QuerySurroundings | Answer | Go | Stop

_ANSWER_WORDS = {w.value: w for w in AnswerWord}


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def error(self, expected: str) -> ParseError:
        lexeme = self.tokens[self.pos] if self.pos < len(self.tokens) else ""
        return ParseError(self.pos, lexeme, expected)

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, token: str) -> None:
        if self.peek() != token:
            raise self.error(f'"{token}"')
        self.take()

    def program(self) -> list[CommandAst]:
        stmts = self.stmt_sequence(depth=0, stop_at_paren=False)
        if self.pos != len(self.tokens):
            raise self.error("a command")
        return stmts

    def stmt_sequence(self, depth: int, stop_at_paren: bool) -> list[CommandAst]:
        stmts = [self.stmt(depth)]
        while self.pos < len(self.tokens):
            if stop_at_paren and self.peek() == ")":
                break
            stmts.append(self.stmt(depth))
        return stmts

    def stmt(self, depth: int) -> CommandAst:
        head = self.peek()
        if head == "move":
            self.take()
            return self.move_tail()
        if head == "go":
            self.take()
            if self.peek() == "forward":
                return self.move_tail()
            return Go()
        if head == "turn":
            self.take()
            word = self.peek()
            if word not in ("left", "right", "around"):
                raise self.error('"left", "right", or "around"')
            self.take()
            return Turn(TurnWord(word))
        if head == "repeat":
            self.take()
            return self.repeat_tail(depth)
        if head == "where":
            self.take()
            self.expect("am")
            self.expect("i")
            return QueryPosition()
        if head == "what":
            self.take()
            self.expect("is")
            self.expect("around")
            if self.peek() == "me":
                self.take()
            return QuerySurroundings()
        if head == "stop":
            self.take()
            return Stop()
        if head is not None and head in _ANSWER_WORDS:
            self.take()
            return Answer(_ANSWER_WORDS[head])
        raise self.error("a command")

    def move_tail(self) -> Move:
        self.expect("forward")
        count = 1
        nxt = self.peek()
        if nxt is not None and nxt.isdigit():
            count = int(self.take())
        return Move(count)

    def repeat_tail(self, depth: int) -> Repeat:
        if depth + 1 > MAX_NESTING_DEPTH:
            raise LimitExceeded(f"repeat nesting deeper than {MAX_NESTING_DEPTH}")
        nxt = self.peek()
        if nxt is None or not nxt.isdigit():
            raise self.error("a repeat count")
        count = int(self.take())
        if self.peek() == "times":
            self.take()
        self.expect("(")
        body = self.stmt_sequence(depth + 1, stop_at_paren=True)
        self.expect(")")
        return Repeat(count, tuple(body))


def parse(tokens: list[str]) -> list[CommandAst]:
    """Parse normalized tokens into an AST list; rejects the whole utterance on error."""
    return _Parser(list(tokens)).program()


def parse_utterance(text: str) -> list[CommandAst]:
    return parse(normalize(text))


def render(ast: list[CommandAst] | tuple[CommandAst, ...]) -> str:
    """Canonical lowercase text that re-parses to an equal AST."""
    return " ".join(_render_one(node) for node in ast)


def _render_one(node: CommandAst) -> str:
    if isinstance(node, Move):
        return f"move forward {node.cells}"
    if isinstance(node, Turn):
        return f"turn {node.direction.value}"
    if isinstance(node, Repeat):
        return f"repeat {node.count} times ( {render(node.body)} )"
    if isinstance(node, QueryPosition):
        return "where am i"
    if isinstance(node, QuerySurroundings):
        return "what is around"
    if isinstance(node, Answer):
        return node.word.value
    if isinstance(node, Go):
        return "go"
    if isinstance(node, Stop):
        return "stop"
    raise TypeError(f"not a command node: {node!r}")


def recognition_rate(outcomes: list[tuple[str, bool]]) -> float:
    """Fraction of utterances that parsed."""
    if not outcomes:
        raise EmptyCorpus("no utterances to score")
    return sum(1 for _, parsed in outcomes if parsed) / len(outcomes)


@dataclass(frozen=True)
class ScriptLine:
    text: str
    expect_error: bool
    line_no: int


def read_script(text: str) -> list[ScriptLine]:
    """Script format: one utterance per line, ``#`` comments,
    ``@expect-error`` marks the following utterance as intentionally invalid."""
    lines: list[ScriptLine] = []
    expect_error = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "@expect-error":
            expect_error = True
            continue
        lines.append(ScriptLine(stripped, expect_error, line_no))
        expect_error = False
    return lines
