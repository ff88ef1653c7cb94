"""Shared fixtures: reference sources, a seeded Java generator, stub tools.

Also hosts the reporting hook that prints one pass/fail line per acceptance
criterion after the run (see test_acceptance.py).
"""

from __future__ import annotations

import random
import sys
import textwrap
from pathlib import Path

import pytest

from lintkit.extract import MethodUnit, extract_methods

# ---------------------------------------------------------------------------
# reference method (used across extract/transform/cli tests)

REFERENCE_SOURCE = """\
/**
 * Prints an attribute of an Object to the console
 * @param input The object whose attribute should be printed
 */
@Override
public void printAttribute(SomeObject input) {
    // Print the attribute
    System.out.println("Attribute Value: " + input.getAttribute().toString());
}
"""

REFERENCE_RC = """\
/**
 * Prints an attribute of an Object to the console
 * @param input The object whose attribute should be printed
 */
@Override
public void printAttribute(SomeObject input) {
    System.out.println("Attribute Value: " + input.getAttribute().toString());
}"""

REFERENCE_RJ = """\
@Override
public void printAttribute(SomeObject input) {
    // Print the attribute
    System.out.println("Attribute Value: " + input.getAttribute().toString());
}"""

REFERENCE_RS = """\
/**
 * Prints an attribute of an Object to the console
 * @param input The object whose attribute should be printed
 */
@Override
public void printAttribute(SomeObject input) {
    // Print the attribute
    System.out.println(<stringliteral> + input.getAttribute().toString());
}"""

REFERENCE_ALL_OPS = """\
@Override
public void printAttribute(SomeObject input) {
    System.out.println(<stringliteral> + input.getAttribute().toString());
}"""


@pytest.fixture
def reference_unit() -> MethodUnit:
    units = extract_methods(REFERENCE_SOURCE, project="demo", path="Printer.java")
    assert len(units) == 1
    return units[0]


def make_unit(text: str, unit_id: str = "u0") -> MethodUnit:
    """Wrap bare method text in a MethodUnit without running the extractor."""
    return MethodUnit(
        id=unit_id,
        project="test",
        path="Test.java",
        start_line=1,
        end_line=max(1, text.count("\n") + 1),
        text=text,
    )


# ---------------------------------------------------------------------------
# seeded Java generator

_RETURNS = ("void", "int", "String", "List<String>", "boolean", "double")
_PARAMS = ("", "int a", "String s, int b", "Map<String, Integer> m", "int[] xs")
_THROWS = ("", " throws IOException", " throws IOException, SQLException")


def generate_method(rng: random.Random, idx: int) -> str:
    """One random but always-lexable method with mixed trivia and literals."""
    lines: list[str] = []
    if rng.random() < 0.7:
        lines += [
            "/**",
            f" * Does thing number {idx}.",
            " * @param none nothing",
            " */",
        ]
    if rng.random() < 0.5:
        lines.append("@Override")
    if rng.random() < 0.3:
        lines.append(f'@SuppressWarnings({{"unchecked", "x{idx}"}})')
    ret = rng.choice(_RETURNS)
    throws = rng.choice(_THROWS)
    lines.append(f"public {ret} method{idx}({rng.choice(_PARAMS)}){throws} {{")
    for b in range(rng.randint(1, 6)):
        kind = rng.randrange(9)
        if kind == 0:
            lines.append(f"    int v{b} = {rng.randint(0, 999)};  // local {b}")
        elif kind == 1:
            lines.append(f"    // step {b} happens here")
        elif kind == 2:
            lines.append(f'    String s{b} = "text // not a comment {b}";')
        elif kind == 3:
            lines.append(f"    /* block note {b}")
            lines.append("       spanning lines */")
        elif kind == 4:
            lines.append(f"    char c{b} = '\\n';")
        elif kind == 5:
            lines.append(
                f'    call("a \\" quoted", {rng.random():.3f}f, 0x{rng.randrange(255):x});'
            )
        elif kind == 6:
            lines.append(f"    if (v{b} > {rng.randint(0, 9)}) {{")
            lines.append(f'        log("hit /* fake */ {b}");')
            lines.append("    }")
        elif kind == 7:
            lines.append(f"    double d{b} = {rng.randint(1, 99)}.5e{rng.randint(0, 3)};")
        else:
            lines.append(f"    int[] arr{b} = {{1, {rng.randint(2, 9)}, 3}};")
    if ret == "int":
        lines.append("    return 0;")
    elif ret == "boolean":
        lines.append("    return true;")
    elif ret == "double":
        lines.append("    return 0.0;")
    elif ret != "void":
        lines.append("    return null;")
    lines.append("}")
    return "\n".join(lines) + "\n"


def generate_class_file(rng: random.Random, idx: int) -> str:
    methods = "".join(
        textwrap.indent(generate_method(rng, idx * 10 + m), "    ")
        for m in range(rng.randint(1, 3))
    )
    return f"public class Gen{idx} {{\n{methods}}}\n"


HANDCRAFTED_FILES: dict[str, str] = {
    "CommentsInStrings.java": (
        'class A { void f() { String a = "// not a comment"; '
        'String b = "/* also not */"; } }\n'
    ),
    "StringsInComments.java": (
        'class B {\n    // contains "quoted text" here\n'
        '    /* and "more" over\n       two lines */\n    void g() { }\n}\n'
    ),
    "EscapedQuotes.java": (
        "class C { void h() { String s = \"a\\\"b\\\\\"; char q = '\\''; "
        "char bs = '\\\\'; } }\n"
    ),
    "JavadocPlain.java": (
        "class D {\n    /**\n     * Summary line.\n     * @param x input\n"
        "     */\n    void i(int x) { }\n}\n"
    ),
    "JavadocDegenerate.java": "class E {\n    /**/\n    void j() { }\n}\n",
    "TextBlock.java": (
        'class F { void k() { String t = """\n        line "one"\n'
        '        line /* two */\n        """; } }\n'
    ),
    "Unicode.java": (
        'class G { void l() { String s = "日本語のテキスト"; int élément = 1; } '
        "// café ☕\n}\n"
    ),
    "Numbers.java": (
        "class H { void m() { int a = 0xFF_EC; int b = 0b1010; long c = 123_456L;\n"
        "    double d = 1_000.5e-3d; float e = .5f; int f = 7; } }\n"
    ),
    "Annotations.java": (
        "class I {\n    @Deprecated\n    @SuppressWarnings({\"a\", \"b\"})\n"
        "    @java.lang.SafeVarargs\n    final void n(String... xs) { }\n}\n"
    ),
    "CrLf.java": "class J {\r\n    void o() {\r\n        // cr lf\r\n    }\r\n}\r\n",
    "OnlyComments.java": "// a file of commentary\n/* nothing else */\n/** not attached */\n",
    "EnumBodies.java": (
        "enum K {\n    RED(1) {\n        int v() { return 1; }\n    },\n"
        "    BLUE(2);\n    K(int x) { }\n    abstract int v();\n}\n"
    ),
    "InterfaceDefaults.java": (
        "interface L {\n    int q();\n    default int r() { return q() + 1; }\n}\n"
    ),
    "LambdasAndRefs.java": (
        "class M { void s(List<String> xs) { xs.forEach(x -> log(x)); "
        "xs.sort(String::compareTo); Runnable r = () -> { done(); }; } }\n"
    ),
    "Everything.java": (
        "class N {\n    /** doc with \"quote\" and // marker */\n    @Override\n"
        '    String t() throws IOException {\n        String u = "\\u0041\\n";\n'
        "        /* multi\n           line */\n        char c = 'x';  // end\n"
        '        return u + """\n            block "text"\n            """;\n    }\n}\n'
    ),
}


@pytest.fixture(scope="session")
def roundtrip_corpus_dir(tmp_path_factory) -> Path:
    """60 Java files: 15 handcrafted edge cases + 45 generated."""
    root = tmp_path_factory.mktemp("java-corpus")
    for name, content in HANDCRAFTED_FILES.items():
        (root / name).write_text(content, encoding="utf-8")
    rng = random.Random(20260823)
    for i in range(45):
        (root / f"Gen{i}.java").write_text(
            generate_class_file(rng, i), encoding="utf-8"
        )
    return root


# ---------------------------------------------------------------------------
# stub analyzer scripts for lintrun tests

STUB_PREAMBLE = """\
import json
import os
import sys
import time
"""


def write_stub_tool(path: Path, body: str) -> list[str]:
    """Write a stub analyzer; returns the command template for ToolchainConfig.

    The stub receives the report directory as argv[1] and sees
    LINTKIT_JAVA_VERSION / LINTKIT_BUILD_FILE in its environment.
    """
    path.write_text(STUB_PREAMBLE + textwrap.dedent(body), encoding="utf-8")
    return [sys.executable, str(path), "{report_dir}"]


# ---------------------------------------------------------------------------
# acceptance-criteria reporting

_acceptance_desc: dict[str, str] = {}
_acceptance_outcome: dict[str, str] = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        if item.module.__name__ != "test_acceptance":
            continue
        doc = (item.function.__doc__ or "").strip().splitlines()
        _acceptance_desc[item.nodeid] = doc[0] if doc else item.name


def pytest_runtest_logreport(report):
    if report.nodeid in _acceptance_desc:
        if report.when == "call" or (report.when == "setup" and report.failed):
            _acceptance_outcome[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcome:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_outcome):
        outcome = _acceptance_outcome[nodeid]
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{tag}] {_acceptance_desc[nodeid]}")
