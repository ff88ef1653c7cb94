"""Method-level extraction from Java source files.

Extraction is lexer-driven rather than grammar-driven: a method (or
constructor) is recognized as a statement whose significant-token prefix ends
in ``name ( params ) [throws ...]`` followed by a brace-matched body.  That
keeps the extractor robust on sources that do not parse cleanly, at the cost
of a handful of guard rules:

* control-flow headers (``if``/``for``/``while``/``switch``/``catch``/...)
  are rejected by a keyword check on the name position
* ``new Foo() { ... }`` anonymous-class allocations are rejected by looking
  at the token before the name; the methods inside the anonymous body are
  still picked up as their own units at the deeper nesting level
* enum constant bodies (``RED(1) { ... }``) are rejected by tracking which
  open brace belongs to an enum's constants section
* lambdas never match because ``->`` cannot appear between the parameter
  list and the body in this pattern
* abstract and interface method declarations end in ``;`` and therefore
  never reach the body check

Initializer blocks are deliberately not units, and a unit's body may contain
further units (anonymous or local classes); nested units are reported
separately.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .lexer import (
    COMMENT_KINDS,
    TRIVIA_KINDS,
    LexError,
    LexToken,
    TokenKind,
    lex,
    token_offsets,
)

log = logging.getLogger(__name__)

Span = tuple[int, int]  # byte offsets into the unit text, [start, end)

# Words that may legally precede "( ... ) {" without opening a method body.
_CONTROL_WORDS = frozenset(
    {
        "if",
        "for",
        "while",
        "switch",
        "catch",
        "synchronized",
        "return",
        "new",
        "do",
        "else",
        "try",
        "assert",
        "this",
        "super",
        "finally",
        "case",
        "throw",
        "yield",
    }
)

# Words that disqualify the token directly before a candidate method name.
_NAME_BLOCKERS = frozenset({"new", "record"})


class ExtractError(ValueError):
    """Raised when a file's brace structure cannot be reconciled."""


@dataclass
class MethodUnit:
    """One extracted method, constructor, or nested/anonymous method.

    All spans are byte offsets into ``text`` (UTF-8), half-open.  Comment,
    Javadoc, and string spans never overlap one another.  ``signature_span``
    and ``body_span`` are populated by the extractor but are not part of the
    serialized record, so they come back ``None`` after a JSONL round trip.
    """

    id: str
    project: str
    path: str
    start_line: int
    end_line: int
    text: str
    javadoc_span: Optional[Span] = None
    comment_spans: list[Span] = field(default_factory=list)
    annotation_spans: list[Span] = field(default_factory=list)
    string_spans: list[Span] = field(default_factory=list)
    signature_span: Optional[Span] = None
    body_span: Optional[Span] = None
    name: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "project": self.project,
            "path": self.path,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "text": self.text,
            "spans": {
                "javadoc": list(self.javadoc_span) if self.javadoc_span else None,
                "comments": [list(s) for s in self.comment_spans],
                "annotations": [list(s) for s in self.annotation_spans],
                "strings": [list(s) for s in self.string_spans],
            },
        }

    @classmethod
    def from_json(cls, rec: dict) -> "MethodUnit":
        spans = rec.get("spans", {})
        jd = spans.get("javadoc")
        return cls(
            id=rec["id"],
            project=rec["project"],
            path=rec["path"],
            start_line=rec["start_line"],
            end_line=rec["end_line"],
            text=rec["text"],
            javadoc_span=tuple(jd) if jd else None,
            comment_spans=[tuple(s) for s in spans.get("comments", [])],
            annotation_spans=[tuple(s) for s in spans.get("annotations", [])],
            string_spans=[tuple(s) for s in spans.get("strings", [])],
        )


def unit_id(project: str, path: str, start_line: int) -> str:
    """Stable unit identifier: content-independent, collision-resistant."""
    digest = hashlib.sha1(f"{project}\x00{path}\x00{start_line}".encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass
class _OpenUnit:
    stmt_first: int  # index of the statement's first significant token
    body_open: int  # index of the "{" token
    depth: int  # brace depth just before the body opened
    name: str
    param_open: int
    param_close: int


def extract_methods(source: str, *, project: str = "", path: str = "") -> list[MethodUnit]:
    """Extract every method-like unit from one file, outermost first.

    Raises ExtractError when braces are unbalanced, LexError when the file
    cannot be tokenized.
    """
    tokens = lex(source)
    offs = token_offsets(tokens)

    units: list[MethodUnit] = []
    open_units: list[_OpenUnit] = []
    depth = 0
    paren_depth = 0
    paren_stack: list[int] = []  # saved paren depth per open brace
    # "enum_consts" | "enum_body" | "block" | "inline"; inline braces
    # (annotation array args, array initializers) open mid-statement, so the
    # enclosing statement keeps accumulating after they close.
    brace_kinds: list[str] = []
    stmt_start: dict[int, Optional[int]] = {0: None}
    # Significant tokens of the current statement, per depth.
    stmt_tokens: dict[int, list[int]] = {0: []}

    for i, tok in enumerate(tokens):
        if tok.kind in TRIVIA_KINDS:
            continue
        if stmt_start.get(depth) is None:
            stmt_start[depth] = i
            stmt_tokens[depth] = []
        prefix = stmt_tokens.setdefault(depth, [])

        if tok.kind is TokenKind.PUNCT:
            ch = tok.text
            if ch == "(":
                paren_depth += 1
            elif ch == ")":
                paren_depth = max(0, paren_depth - 1)
            elif ch == ";" and paren_depth == 0:
                stmt_start[depth] = None
                stmt_tokens[depth] = []
                if brace_kinds and brace_kinds[-1] == "enum_consts":
                    brace_kinds[-1] = "enum_body"
                continue
            elif ch == "{":
                in_enum_consts = bool(brace_kinds) and brace_kinds[-1] == "enum_consts"
                opens_enum = any(
                    tokens[j].kind is TokenKind.WORD and tokens[j].text == "enum"
                    for j in prefix
                )
                match = None
                if paren_depth == 0 and not in_enum_consts and not opens_enum:
                    match = _match_method_prefix(tokens, prefix)
                if match is not None:
                    name, p_open, p_close = match
                    open_units.append(
                        _OpenUnit(
                            stmt_first=stmt_start[depth],  # type: ignore[arg-type]
                            body_open=i,
                            depth=depth,
                            name=name,
                            param_open=p_open,
                            param_close=p_close,
                        )
                    )
                if opens_enum:
                    kind = "enum_consts"
                elif paren_depth > 0 or _has_toplevel_assign(tokens, prefix):
                    kind = "inline"
                else:
                    kind = "block"
                brace_kinds.append(kind)
                paren_stack.append(paren_depth)
                paren_depth = 0
                depth += 1
                stmt_start[depth] = None
                stmt_tokens[depth] = []
                continue
            elif ch == "}":
                depth -= 1
                if depth < 0:
                    raise ExtractError(
                        f"{path or '<source>'}: unbalanced braces "
                        f"(extra '}}' at line {tok.start.line})"
                    )
                paren_depth = paren_stack.pop()
                closed_kind = brace_kinds.pop()
                stmt_start.pop(depth + 1, None)
                stmt_tokens.pop(depth + 1, None)
                if closed_kind != "inline":
                    stmt_start[depth] = None
                    stmt_tokens[depth] = []
                if open_units and open_units[-1].depth == depth:
                    pending = open_units.pop()
                    units.append(
                        _finalize_unit(source, tokens, offs, pending, i, project, path)
                    )
                continue
        prefix.append(i)

    if depth != 0:
        raise ExtractError(
            f"{path or '<source>'}: unbalanced braces ({depth} unclosed at end of file)"
        )
    units.sort(key=lambda u: (u.start_line, -(u.end_line - u.start_line)))
    return units


def _has_toplevel_assign(tokens: list[LexToken], prefix: list[int]) -> bool:
    """True when the statement prefix holds a ``=`` outside any parens.

    Comparison operators lex as adjacent single-char PUNCT tokens, so a lone
    ``=`` found at paren balance zero really is an assignment (or an array
    initializer), which means a following brace is part of an expression.
    """
    bal = 0
    for j in prefix:
        t = tokens[j]
        if t.kind is not TokenKind.PUNCT:
            continue
        if t.text == "(":
            bal += 1
        elif t.text == ")":
            bal = max(0, bal - 1)
        elif t.text == "=" and bal == 0:
            return True
    return False


def _match_method_prefix(
    tokens: list[LexToken], prefix: list[int]
) -> Optional[tuple[str, int, int]]:
    """Decide whether a statement prefix ends in a method header.

    ``prefix`` holds indices of the statement's significant tokens, in order,
    up to but excluding the "{" under consideration.  Returns
    (name, param_open_index, param_close_index) or None.
    """
    if len(prefix) < 3:
        return None

    # Walk back over an optional throws clause: words, dots, commas, and
    # annotation markers are the only things allowed after the parameter list.
    i = len(prefix) - 1
    while i >= 0:
        t = tokens[prefix[i]]
        if t.kind in (TokenKind.WORD, TokenKind.ANNOTATION_AT):
            i -= 1
            continue
        if t.kind is TokenKind.PUNCT and t.text in (".", ","):
            i -= 1
            continue
        break
    if i < 0:
        return None
    t = tokens[prefix[i]]
    if not (t.kind is TokenKind.PUNCT and t.text == ")"):
        return None
    tail_first = i + 1
    if tail_first < len(prefix):
        first_tail = tokens[prefix[tail_first]]
        if not (first_tail.kind is TokenKind.WORD and first_tail.text == "throws"):
            return None

    # Match the parameter list parens backwards.
    bal = 0
    j = i
    while j >= 0:
        t = tokens[prefix[j]]
        if t.kind is TokenKind.PUNCT and t.text == ")":
            bal += 1
        elif t.kind is TokenKind.PUNCT and t.text == "(":
            bal -= 1
            if bal == 0:
                break
        j -= 1
    if j < 0 or bal != 0:
        return None

    k = j - 1
    if k < 0:
        return None
    name_tok = tokens[prefix[k]]
    if name_tok.kind is not TokenKind.WORD or name_tok.text in _CONTROL_WORDS:
        return None
    if k >= 1:
        before = tokens[prefix[k - 1]]
        if before.kind is TokenKind.WORD and before.text in _NAME_BLOCKERS:
            return None
        if before.kind is TokenKind.PUNCT and before.text == ".":
            return None
        if before.kind is TokenKind.ANNOTATION_AT:
            return None
    return name_tok.text, prefix[j], prefix[i]


def _finalize_unit(
    source: str,
    tokens: list[LexToken],
    offs: list[int],
    pending: _OpenUnit,
    close_idx: int,
    project: str,
    path: str,
) -> MethodUnit:
    first = _attachment_start(tokens, pending.stmt_first)
    unit_start = offs[first]
    unit_end = offs[close_idx + 1]
    text = source[unit_start:unit_end]
    to_byte = _byte_offset_fn(text)

    def span(tok_a: int, tok_b: int) -> Span:
        return (to_byte(offs[tok_a] - unit_start), to_byte(offs[tok_b + 1] - unit_start))

    javadoc_span: Optional[Span] = None
    comment_spans: list[Span] = []
    string_spans: list[Span] = []
    for idx in range(first, close_idx + 1):
        kind = tokens[idx].kind
        if kind is TokenKind.JAVADOC and idx < pending.body_open and javadoc_span is None:
            javadoc_span = span(idx, idx)
        elif kind in COMMENT_KINDS:
            comment_spans.append(span(idx, idx))
        elif kind is TokenKind.STRING_LIT:
            string_spans.append(span(idx, idx))
    # A later header Javadoc wins over an earlier one; reclassify the rest.
    header_javadocs = [
        idx
        for idx in range(first, pending.body_open)
        if tokens[idx].kind is TokenKind.JAVADOC
    ]
    if len(header_javadocs) > 1:
        javadoc_span = span(header_javadocs[-1], header_javadocs[-1])
        for idx in header_javadocs[:-1]:
            comment_spans.append(span(idx, idx))
        comment_spans.sort()

    annotation_spans = [
        span(a, b) for a, b in _annotation_groups(tokens, first, pending.body_open)
    ]
    sig_first = _signature_start(tokens, pending.stmt_first, pending.body_open)
    sig_last = _last_significant_before(tokens, pending.body_open)
    signature_span = span(sig_first, sig_last) if sig_last is not None else None

    start_line = tokens[first].start.line
    end_line = tokens[close_idx].start.line
    return MethodUnit(
        id=unit_id(project, path, start_line),
        project=project,
        path=path,
        start_line=start_line,
        end_line=end_line,
        text=text,
        javadoc_span=javadoc_span,
        comment_spans=comment_spans,
        annotation_spans=annotation_spans,
        string_spans=string_spans,
        signature_span=signature_span,
        body_span=span(pending.body_open, close_idx),
        name=pending.name,
    )


def _attachment_start(tokens: list[LexToken], stmt_first: int) -> int:
    """First token of the unit, after pulling in attached leading trivia.

    Comments and Javadoc directly above the declaration attach across
    whitespace-only gaps (blank lines included).  A comment that starts on
    the same line as the previous statement's code is a trailing comment of
    that statement and does not attach.
    """
    run_start = stmt_first
    j = stmt_first - 1
    while j >= 0 and tokens[j].kind in TRIVIA_KINDS:
        j -= 1
    prev_line = tokens[j].end.line if j >= 0 else 0
    first_attached: Optional[int] = None
    for idx in range(j + 1, stmt_first):
        t = tokens[idx]
        if t.kind is TokenKind.WHITESPACE:
            continue
        if t.start.line > prev_line:
            first_attached = idx
            break
    if first_attached is not None:
        run_start = first_attached
    return run_start


def _annotation_groups(
    tokens: list[LexToken], first: int, body_open: int
) -> list[tuple[int, int]]:
    """Token index ranges of ``@Name`` / ``@Name(args)`` groups in the header."""
    groups: list[tuple[int, int]] = []
    idx = first
    while idx < body_open:
        if tokens[idx].kind is not TokenKind.ANNOTATION_AT:
            idx += 1
            continue
        start = idx
        idx += 1
        while idx < body_open and tokens[idx].kind in TRIVIA_KINDS:
            idx += 1
        if idx >= body_open or tokens[idx].kind is not TokenKind.WORD:
            continue
        end = idx
        idx += 1
        # Dotted names: @java.lang.Override
        while idx + 1 < body_open and _is_punct(tokens[idx], ".") and tokens[idx + 1].kind is TokenKind.WORD:
            end = idx + 1
            idx += 2
        probe = idx
        while probe < body_open and tokens[probe].kind in TRIVIA_KINDS:
            probe += 1
        if probe < body_open and _is_punct(tokens[probe], "("):
            bal = 0
            k = probe
            while k < body_open:
                if _is_punct(tokens[k], "("):
                    bal += 1
                elif _is_punct(tokens[k], ")"):
                    bal -= 1
                    if bal == 0:
                        break
                k += 1
            if k < body_open:
                end = k
                idx = k + 1
        groups.append((start, end))
    return groups


def _signature_start(tokens: list[LexToken], stmt_first: int, body_open: int) -> int:
    """First significant header token that is not part of a leading annotation."""
    idx = stmt_first
    while idx < body_open:
        t = tokens[idx]
        if t.kind in TRIVIA_KINDS:
            idx += 1
            continue
        if t.kind is TokenKind.ANNOTATION_AT:
            groups = _annotation_groups(tokens, idx, body_open)
            if groups and groups[0][0] == idx:
                idx = groups[0][1] + 1
                continue
        return idx
    return stmt_first


def _last_significant_before(tokens: list[LexToken], body_open: int) -> Optional[int]:
    for idx in range(body_open - 1, -1, -1):
        if tokens[idx].kind not in TRIVIA_KINDS:
            return idx
    return None


def _is_punct(tok: LexToken, ch: str) -> bool:
    return tok.kind is TokenKind.PUNCT and tok.text == ch


def _byte_offset_fn(text: str):
    """Map character offsets in ``text`` to UTF-8 byte offsets."""
    if text.isascii():
        return lambda i: i
    lengths = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        lengths.append(total)
    return lambda i: lengths[i]


def locate_method(
    units: Iterable[MethodUnit], path: str, line: int
) -> Optional[MethodUnit]:
    """Innermost unit in ``path`` whose line range contains ``line``.

    Nested units (anonymous-class methods) shadow their enclosing method for
    the lines they cover.  Returns None when no unit contains the line.
    """
    best: Optional[MethodUnit] = None
    for u in units:
        if u.path != path or not (u.start_line <= line <= u.end_line):
            continue
        if best is None:
            best = u
            continue
        size = u.end_line - u.start_line
        best_size = best.end_line - best.start_line
        if size < best_size or (size == best_size and u.start_line > best.start_line):
            best = u
    return best


@dataclass
class TreeExtraction:
    units: list[MethodUnit]
    skipped_files: list[tuple[str, str]]  # (path, reason)


def extract_tree(root: str, *, project: str = "") -> TreeExtraction:
    """Extract from every ``.java`` file under ``root``.

    Files that cannot be decoded as UTF-8 or whose brace structure is broken
    are skipped and reported; one bad file never aborts the walk.
    """
    units: list[MethodUnit] = []
    skipped: list[tuple[str, str]] = []
    for path in sorted(_walk_java(root)):
        rel = os.path.relpath(path, root)
        try:
            with open(path, encoding="utf-8") as fh:
                source = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            skipped.append((rel, str(exc)))
            continue
        try:
            units.extend(extract_methods(source, project=project, path=rel))
        except (ExtractError, LexError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            skipped.append((rel, str(exc)))
    return TreeExtraction(units=units, skipped_files=skipped)


def _walk_java(root: str) -> Iterator[str]:
    for dirpath, _dirnames, filenames in os.walk(root):
        for fn in filenames:
            if fn.endswith(".java"):
                yield os.path.join(dirpath, fn)
