"""Input formulations: text rewrites applied to a method before modeling.

Three independent rewrites compose into eight canonical formats:

* RC removes line and block comments (Javadoc is kept)
* RJ removes Javadoc blocks (ordinary comments are kept)
* RS replaces every string literal with a placeholder token

Removal-type rewrites delete any line that is left whitespace-only by the
removal; lines that were already blank are untouched.  The rewrites operate
on a fresh tokenization of the current text, which makes each one idempotent
and makes every pair commute byte for byte.

A format's code string lists its rewrites in the fixed order RC, RJ, RS
joined by "+" ("RC+RJ+RS"); the empty combination is "Unmodified".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .extract import MethodUnit
from .lexer import COMMENT_KINDS, LexError, LexToken, TokenKind, lex

STRING_PLACEHOLDER = "<stringliteral>"
DEFAULT_MAX_TOKENS = 512

UNMODIFIED_CODE = "Unmodified"


@dataclass(frozen=True)
class InputFormat:
    """A combination of the three rewrites."""

    rc: bool = False
    rj: bool = False
    rs: bool = False

    @property
    def code(self) -> str:
        parts = [name for flag, name in ((self.rc, "RC"), (self.rj, "RJ"), (self.rs, "RS")) if flag]
        return "+".join(parts) if parts else UNMODIFIED_CODE

    @classmethod
    def parse(cls, code: str) -> "InputFormat":
        """Parse a canonical code string; raises ValueError for anything else."""
        if code == UNMODIFIED_CODE:
            return cls()
        flags = {"RC": False, "RJ": False, "RS": False}
        for part in code.split("+"):
            if part not in flags or flags[part]:
                raise ValueError(f"unknown input format code: {code!r}")
            flags[part] = True
        fmt = cls(rc=flags["RC"], rj=flags["RJ"], rs=flags["RS"])
        if fmt.code != code:
            raise ValueError(f"format code not in canonical order: {code!r}")
        return fmt

    def __str__(self) -> str:
        return self.code


UNMODIFIED = InputFormat()
RC = InputFormat(rc=True)
RJ = InputFormat(rj=True)
RS = InputFormat(rs=True)

#: the eight canonical formats, in presentation order
ALL_FORMATS: tuple[InputFormat, ...] = (
    UNMODIFIED,
    RC,
    RJ,
    RS,
    InputFormat(rc=True, rj=True),
    InputFormat(rc=True, rs=True),
    InputFormat(rj=True, rs=True),
    InputFormat(rc=True, rj=True, rs=True),
)


@dataclass
class FormattedSample:
    """A method rendered under one input format, ready for a classifier."""

    method_id: str
    format_code: str
    text: str
    token_count: int
    truncated: bool

    def to_json(self) -> dict:
        return {
            "id": self.method_id,
            "format": self.format_code,
            "text": self.text,
            "token_count": self.token_count,
            "truncated": self.truncated,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "FormattedSample":
        return cls(
            method_id=rec["id"],
            format_code=rec["format"],
            text=rec["text"],
            token_count=rec["token_count"],
            truncated=rec["truncated"],
        )


def strip_comments(text: str) -> str:
    """Drop line and block comments; delete lines emptied by the removal."""
    return _drop_tokens(text, COMMENT_KINDS)


def strip_javadoc(text: str) -> str:
    """Drop Javadoc blocks; delete lines emptied by the removal."""
    return _drop_tokens(text, frozenset({TokenKind.JAVADOC}))


def substitute_strings(text: str, placeholder: str = STRING_PLACEHOLDER) -> str:
    """Replace each string literal with ``placeholder``. No lines are removed."""
    return "".join(
        placeholder if t.kind is TokenKind.STRING_LIT else t.text for t in lex(text)
    )


def remove_comments(unit: MethodUnit) -> str:
    return strip_comments(unit.text)


def remove_javadoc(unit: MethodUnit) -> str:
    return strip_javadoc(unit.text)


def replace_strings(unit: MethodUnit, placeholder: str = STRING_PLACEHOLDER) -> str:
    return substitute_strings(unit.text, placeholder)


def _drop_tokens(text: str, kinds: frozenset) -> str:
    """Remove tokens of ``kinds``; a line left whitespace-only by a removal
    is deleted outright (terminator included).

    The bookkeeping works on output lines: a removed multi-line token takes
    its internal newlines with it, so text after the removal joins the line
    where the removal started, and the emptiness check applies to that merged
    line.
    """
    out: list[str] = []
    touched: set[int] = set()
    out_line = 0
    for t in lex(text):
        if t.kind in kinds:
            touched.add(out_line)
            continue
        out.append(t.text)
        out_line += t.text.count("\n")
    if not touched:
        return "".join(out)
    lines = "".join(out).splitlines(keepends=True)
    kept = [
        ln
        for i, ln in enumerate(lines)
        if not (i in touched and ln.strip() == "")
    ]
    return "".join(kept)


def count_code_tokens(text: str) -> int:
    """Number of non-whitespace tokens; the budget unit for truncation."""
    return sum(1 for t in _lex_lenient(text) if t.kind is not TokenKind.WHITESPACE)


def apply_format(
    unit: MethodUnit,
    fmt: InputFormat,
    *,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    placeholder: str = STRING_PLACEHOLDER,
) -> FormattedSample:
    """Render ``unit`` under ``fmt``, truncating to ``max_tokens`` code tokens.

    Rewrites apply in the fixed order RJ, RC, RS (the order is immaterial to
    the result; fixing it keeps runs reproducible).  ``token_count`` reports
    the post-rewrite, pre-truncation count.
    """
    text = unit.text
    if fmt.rj:
        text = strip_javadoc(text)
    if fmt.rc:
        text = strip_comments(text)
    if fmt.rs:
        text = substitute_strings(text, placeholder)

    toks = _lex_lenient(text)
    count = sum(1 for t in toks if t.kind is not TokenKind.WHITESPACE)
    truncated = count > max_tokens
    if truncated:
        text = _truncate_tokens(toks, max_tokens)
    return FormattedSample(
        method_id=unit.id,
        format_code=fmt.code,
        text=text,
        token_count=count,
        truncated=truncated,
    )


def _truncate_tokens(toks: list[LexToken], max_tokens: int) -> str:
    """Keep the first ``max_tokens`` non-whitespace tokens, cutting at a token
    boundary; trailing whitespace after the cut is dropped."""
    parts: list[str] = []
    seen = 0
    for t in toks:
        if t.kind is TokenKind.WHITESPACE:
            if seen < max_tokens:
                parts.append(t.text)
            continue
        if seen >= max_tokens:
            break
        parts.append(t.text)
        seen += 1
    while parts and parts[-1].strip() == "":
        parts.pop()
    return "".join(parts)


def _lex_lenient(text: str) -> list[LexToken]:
    """Lex, falling back to whitespace splitting for untokenizable text.

    Formatted text is produced by token-level rewrites so it normally lexes
    cleanly; the fallback only matters for callers feeding foreign text.
    """
    try:
        return lex(text)
    except LexError:
        toks: list[LexToken] = []
        from .lexer import Pos

        for piece in text.replace("\t", " ").split(" "):
            if piece:
                toks.append(LexToken(TokenKind.WORD, piece, Pos(1, 0), Pos(1, 0)))
            toks.append(LexToken(TokenKind.WHITESPACE, " ", Pos(1, 0), Pos(1, 0)))
        if toks:
            toks.pop()
        return toks


def format_all(
    units: Iterable[MethodUnit],
    fmt: InputFormat,
    *,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    placeholder: str = STRING_PLACEHOLDER,
) -> list[FormattedSample]:
    return [
        apply_format(u, fmt, max_tokens=max_tokens, placeholder=placeholder)
        for u in units
    ]
