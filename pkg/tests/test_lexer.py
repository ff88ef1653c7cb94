"""Tokenizer unit tests: classification, round-trip, error reporting."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lintkit.lexer import (
    LexError,
    TokenKind,
    lex,
    roundtrip,
    token_offsets,
)

from conftest import HANDCRAFTED_FILES, REFERENCE_SOURCE


def kinds(source):
    return [t.kind for t in lex(source)]


def significant(source):
    return [t for t in lex(source) if t.kind is not TokenKind.WHITESPACE]


class TestClassification:
    def test_string_swallows_comment_marker(self):
        toks = significant('"a//b"')
        assert [t.kind for t in toks] == [TokenKind.STRING_LIT]
        assert toks[0].text == '"a//b"'

    def test_javadoc_then_declaration(self):
        assert kinds("/** doc */ int x;") == [
            TokenKind.JAVADOC,
            TokenKind.WHITESPACE,
            TokenKind.WORD,
            TokenKind.WHITESPACE,
            TokenKind.WORD,
            TokenKind.PUNCT,
        ]

    def test_reference_method_trivia_census(self):
        toks = lex(REFERENCE_SOURCE)
        javadoc = [t for t in toks if t.kind is TokenKind.JAVADOC]
        line_comments = [t for t in toks if t.kind is TokenKind.LINE_COMMENT]
        strings = [t for t in toks if t.kind is TokenKind.STRING_LIT]
        assert len(javadoc) == 1
        assert len(line_comments) == 1
        assert line_comments[0].text == "// Print the attribute"
        assert len(strings) == 1
        assert strings[0].text == '"Attribute Value: "'

    def test_comment_swallows_quote(self):
        toks = significant('/* "not a string" */ // "nor this"')
        assert [t.kind for t in toks] == [
            TokenKind.BLOCK_COMMENT,
            TokenKind.LINE_COMMENT,
        ]

    def test_degenerate_javadoc_is_javadoc(self):
        toks = significant("/**/ /*a*/ /** b */")
        assert [t.kind for t in toks] == [
            TokenKind.JAVADOC,
            TokenKind.BLOCK_COMMENT,
            TokenKind.JAVADOC,
        ]

    def test_line_comment_excludes_newline(self):
        toks = lex("// ab\nx")
        assert toks[0].kind is TokenKind.LINE_COMMENT
        assert toks[0].text == "// ab"
        assert toks[1].kind is TokenKind.WHITESPACE

    def test_annotation_at_is_bare(self):
        toks = significant("@Override")
        assert [t.kind for t in toks] == [TokenKind.ANNOTATION_AT, TokenKind.WORD]
        assert toks[0].text == "@"

    def test_char_literals(self):
        toks = significant("'a' '\\'' '\\\\' '\\n'")
        assert all(t.kind is TokenKind.CHAR_LIT for t in toks)
        assert [t.text for t in toks] == ["'a'", "'\\''", "'\\\\'", "'\\n'"]

    def test_escaped_quote_in_string(self):
        toks = significant('"a\\"b" + "c"')
        assert toks[0].kind is TokenKind.STRING_LIT
        assert toks[0].text == '"a\\"b"'
        assert toks[2].kind is TokenKind.STRING_LIT

    def test_text_block_is_single_string(self):
        src = 'String s = """\n  has "quotes" and // markers\n  """;'
        strings = [t for t in lex(src) if t.kind is TokenKind.STRING_LIT]
        assert len(strings) == 1
        assert strings[0].text.startswith('"""')
        assert strings[0].text.endswith('"""')

    @pytest.mark.parametrize(
        "literal",
        ["0xFF_EC", "0b1010", "123_456L", "1_000.5e-3d", ".5f", "7", "2e10", "0x1p"],
    )
    def test_number_shapes(self, literal):
        # 0x1p lexes as number 0x1 then word p; the rest as a single number
        toks = significant(literal)
        assert toks[0].kind is TokenKind.NUMBER

    def test_dot_before_digit_is_number(self):
        toks = significant("a.5")
        assert [t.kind for t in toks] == [
            TokenKind.WORD,
            TokenKind.NUMBER,
        ]
        assert toks[1].text == ".5"

    def test_plain_dot_is_punct(self):
        toks = significant("a.b")
        assert [t.kind for t in toks] == [
            TokenKind.WORD,
            TokenKind.PUNCT,
            TokenKind.WORD,
        ]

    def test_punct_is_single_char(self):
        toks = significant("a == b && c::d ->")
        punct = [t for t in toks if t.kind is TokenKind.PUNCT]
        assert all(len(t.text) == 1 for t in punct)

    def test_dollar_and_unicode_words(self):
        toks = significant("café $var x$1 élément")
        assert all(t.kind is TokenKind.WORD for t in toks)


class TestInvariants:
    def test_marker_prefixes(self):
        src = "".join(HANDCRAFTED_FILES.values())
        for t in lex(src):
            if t.kind is TokenKind.JAVADOC:
                assert t.text.startswith("/**")
            elif t.kind is TokenKind.BLOCK_COMMENT:
                assert t.text.startswith("/*") and not t.text.startswith("/**")
            elif t.kind is TokenKind.LINE_COMMENT:
                assert t.text.startswith("//")

    def test_every_char_covered(self):
        src = HANDCRAFTED_FILES["Everything.java"]
        toks = lex(src)
        offs = token_offsets(toks)
        assert offs[0] == 0
        assert offs[-1] == len(src)
        for t, a, b in zip(toks, offs, offs[1:]):
            assert src[a:b] == t.text

    def test_positions_monotonic(self):
        toks = lex(HANDCRAFTED_FILES["Everything.java"])
        for prev, cur in zip(toks, toks[1:]):
            assert (prev.end.line, prev.end.col) == (cur.start.line, cur.start.col)

    @given(
        st.text(
            alphabet=st.sampled_from(list('abc _(){};"\'/*\n@.0123456789')),
            max_size=80,
        )
    )
    @settings(max_examples=300, deadline=None)
    def test_roundtrip_or_lex_error(self, source):
        try:
            toks = lex(source)
        except LexError:
            return
        assert roundtrip(toks) == source


class TestErrors:
    def test_unterminated_block_comment(self):
        with pytest.raises(LexError, match="block comment") as exc:
            lex("int x;\n/* oops")
        assert exc.value.line == 2
        assert exc.value.col == 0

    def test_unterminated_string(self):
        with pytest.raises(LexError, match="string") as exc:
            lex('x = "abc')
        assert exc.value.line == 1
        assert exc.value.col == 4

    def test_string_broken_by_newline(self):
        with pytest.raises(LexError, match="string"):
            lex('"ab\ncd"')

    def test_unterminated_char(self):
        with pytest.raises(LexError, match="character"):
            lex("'x")

    def test_unterminated_text_block(self):
        with pytest.raises(LexError, match="text block"):
            lex('"""\nnever closed')

    def test_error_names_position(self):
        with pytest.raises(LexError, match="line 3, column 2"):
            lex('a\nb\nc "unclosed')
