"""Tokenizer for Java-flavoured source text.

The token stream partitions the input exactly: concatenating the ``text``
fields of the returned tokens reproduces the source string byte for byte.
That property is what the rest of the pipeline leans on, so the lexer never
drops or normalizes characters, not even inside malformed constructs.

Classification rules worth spelling out:

* a comment opener inside a string literal is literal text, and a quote
  inside a comment is comment text; whichever construct opens first wins
* JAVADOC is any comment starting with ``/**`` (the degenerate ``/**/``
  included, so the "starts with /**" invariant stays exact)
* LINE_COMMENT runs to the end of the line but does not swallow the
  terminator; newlines always live in WHITESPACE tokens or inside
  multi-line comment/string bodies
* ANNOTATION_AT is the bare ``@`` character; the annotation name that
  follows is an ordinary WORD token
* PUNCT tokens are single characters. Downstream consumers only need
  brace/paren structure, and one-char tokens keep spans unambiguous.
* triple-quoted text blocks lex as one STRING_LIT with opaque contents,
  so modern sources do not trip the unterminated-literal check
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum, unique


@unique
class TokenKind(Enum):
    WORD = "word"
    NUMBER = "number"
    PUNCT = "punct"
    STRING_LIT = "string"
    CHAR_LIT = "char"
    LINE_COMMENT = "line_comment"
    BLOCK_COMMENT = "block_comment"
    JAVADOC = "javadoc"
    ANNOTATION_AT = "annotation_at"
    WHITESPACE = "whitespace"


#: kinds that never carry program structure
TRIVIA_KINDS = frozenset(
    {
        TokenKind.WHITESPACE,
        TokenKind.LINE_COMMENT,
        TokenKind.BLOCK_COMMENT,
        TokenKind.JAVADOC,
    }
)

COMMENT_KINDS = frozenset({TokenKind.LINE_COMMENT, TokenKind.BLOCK_COMMENT})


@dataclass(frozen=True)
class Pos:
    """Source position; lines are 1-based, columns 0-based."""

    line: int
    col: int


@dataclass(frozen=True)
class LexToken:
    kind: TokenKind
    text: str
    start: Pos
    end: Pos

    def __repr__(self) -> str:  # compact, the default is unreadable in diffs
        return f"LexToken({self.kind.name}, {self.text!r}, L{self.start.line}:{self.start.col})"


class LexError(ValueError):
    """Raised for constructs that cannot be tokenized (unterminated literals)."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


_WS_RE = re.compile(r"[ \t\r\n\f]+")
_WORD_RE = re.compile(r"(?:[^\W\d]|\$)(?:\w|\$)*")
# Order matters: radix prefixes before plain decimals, fractions before ints.
_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F_]+[lL]?"
    r"|0[bB][01_]+[lL]?"
    r"|\d[\d_]*\.(?:\d[\d_]*)?(?:[eE][+-]?\d+)?[fFdD]?"
    r"|\.\d[\d_]*(?:[eE][+-]?\d+)?[fFdD]?"
    r"|\d[\d_]*(?:[eE][+-]?\d+)?[fFdDlL]?"
)

_WS_CHARS = " \t\r\n\f"


def lex(source: str) -> list[LexToken]:
    """Tokenize ``source``, covering every character exactly once.

    Raises LexError for an unterminated block comment, string literal, or
    character literal, naming the line and column where the construct opened.
    """
    tokens: list[LexToken] = []
    pos = 0
    line = 1
    col = 0
    n = len(source)

    while pos < n:
        ch = source[pos]
        if ch in _WS_CHARS:
            m = _WS_RE.match(source, pos)
            text = m.group()
            kind = TokenKind.WHITESPACE
        elif ch == "/" and source.startswith("//", pos):
            end = source.find("\n", pos)
            text = source[pos:] if end == -1 else source[pos:end]
            kind = TokenKind.LINE_COMMENT
        elif ch == "/" and source.startswith("/*", pos):
            end = source.find("*/", pos + 2)
            if end == -1:
                raise LexError("unterminated block comment", line, col)
            text = source[pos : end + 2]
            kind = TokenKind.JAVADOC if text.startswith("/**") else TokenKind.BLOCK_COMMENT
        elif ch == '"':
            text = _scan_string(source, pos, line, col)
            kind = TokenKind.STRING_LIT
        elif ch == "'":
            text = _scan_char(source, pos, line, col)
            kind = TokenKind.CHAR_LIT
        elif ch == "@":
            text = "@"
            kind = TokenKind.ANNOTATION_AT
        elif ch.isdigit() or (ch == "." and pos + 1 < n and source[pos + 1].isdigit()):
            m = _NUMBER_RE.match(source, pos)
            text = m.group()
            kind = TokenKind.NUMBER
        else:
            m = _WORD_RE.match(source, pos)
            if m:
                text = m.group()
                kind = TokenKind.WORD
            else:
                text = ch
                kind = TokenKind.PUNCT

        start = Pos(line, col)
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n") - 1
        else:
            col += len(text)
        tokens.append(LexToken(kind, text, start, Pos(line, col)))
        pos += len(text)

    return tokens


def _scan_string(source: str, pos: int, line: int, col: int) -> str:
    n = len(source)
    if source.startswith('"""', pos):
        # Text block: contents are opaque, closed by the next triple quote.
        end = source.find('"""', pos + 3)
        if end == -1:
            raise LexError("unterminated text block", line, col)
        return source[pos : end + 3]
    i = pos + 1
    while i < n:
        c = source[i]
        if c == "\\":
            i += 2
            continue
        if c == '"':
            return source[pos : i + 1]
        if c == "\n":
            raise LexError("unterminated string literal", line, col)
        i += 1
    raise LexError("unterminated string literal", line, col)


def _scan_char(source: str, pos: int, line: int, col: int) -> str:
    n = len(source)
    i = pos + 1
    while i < n:
        c = source[i]
        if c == "\\":
            i += 2
            continue
        if c == "'":
            return source[pos : i + 1]
        if c == "\n":
            raise LexError("unterminated character literal", line, col)
        i += 1
    raise LexError("unterminated character literal", line, col)


def token_offsets(tokens: list[LexToken]) -> list[int]:
    """Character offset of each token's first character, plus the end offset.

    Returns a list of len(tokens) + 1 entries; the last entry is the total
    source length.
    """
    offs = [0]
    total = 0
    for t in tokens:
        total += len(t.text)
        offs.append(total)
    return offs


def roundtrip(tokens: list[LexToken]) -> str:
    """Concatenate token texts; equals the original source by construction."""
    return "".join(t.text for t in tokens)
