"""Static-analyzer orchestration and report ingestion.

``run_analysis`` drives one analyzer over one Maven project with a retry
ladder: the Java version declared in the build file is tried first, then the
remaining supported versions, then the same ladder against each alternate
build file (root first, sub-module files in path order).  A
(java_version, build_file) pair is never attempted twice, a timeout kills
the whole process tree and aborts the ladder, and every attempt lands in the
run's attempt log.

Report parsers map tool-native bug identifiers onto short type ids through
versioned JSON tables shipped with the package, so the vocabulary can grow
without code changes.  Unknown identifiers map to a reserved "I?"/"S?" id
and are tallied rather than dropped.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import signal
import subprocess
import time
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, unique
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Sequence

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECONDS = 1500.0
SUPPORTED_JAVA_VERSIONS = (8, 11, 17)

UNKNOWN_INFER_TYPE = "I?"
UNKNOWN_SPOTBUGS_TYPE = "S?"


@unique
class Tool(Enum):
    INFER = "infer"
    SPOTBUGS = "spotbugs"


@unique
class RunStatus(Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    BUILD_FAIL = "build_fail"
    TOOL_FAIL = "tool_fail"


@dataclass
class IssueRecord:
    tool: Tool
    type_id: str
    path: str
    line: int
    message: str = ""

    def to_json(self) -> dict:
        return {
            "tool": self.tool.value,
            "type_id": self.type_id,
            "path": self.path,
            "line": self.line,
            "message": self.message,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "IssueRecord":
        return cls(
            tool=Tool(rec["tool"]),
            type_id=rec["type_id"],
            path=rec["path"],
            line=int(rec["line"]),
            message=rec.get("message", ""),
        )


@dataclass
class AttemptLog:
    java_version: int
    build_file: str
    status: RunStatus
    duration_seconds: float


@dataclass
class LintRun:
    project: str
    tool: Tool
    status: RunStatus
    java_version: Optional[int] = None
    build_file: Optional[str] = None
    duration_seconds: float = 0.0
    attempts: list[AttemptLog] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "project": self.project,
            "tool": self.tool.value,
            "status": self.status.value,
            "java_version": self.java_version,
            "build_file": self.build_file,
            "duration_seconds": self.duration_seconds,
            "attempts": [
                {
                    "java_version": a.java_version,
                    "build_file": a.build_file,
                    "status": a.status.value,
                    "duration_seconds": a.duration_seconds,
                }
                for a in self.attempts
            ],
        }


@dataclass
class CommandResult:
    returncode: int
    stdout: str
    stderr: str
    duration_seconds: float
    timed_out: bool


class CommandRunner(Protocol):
    def run(
        self,
        cmd: Sequence[str],
        *,
        cwd: str,
        env: dict[str, str],
        timeout: float,
    ) -> CommandResult: ...


class SubprocessRunner:
    """Runs commands in their own process group; a timeout kills the group,
    so stray build children cannot outlive the attempt."""

    def run(
        self,
        cmd: Sequence[str],
        *,
        cwd: str,
        env: dict[str, str],
        timeout: float,
    ) -> CommandResult:
        started = time.perf_counter()
        proc = subprocess.Popen(
            list(cmd),
            cwd=cwd,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            start_new_session=True,
        )
        try:
            stdout, stderr = proc.communicate(timeout=timeout)
            timed_out = False
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            stdout, stderr = proc.communicate()
            timed_out = True
        duration = time.perf_counter() - started
        return CommandResult(
            returncode=proc.returncode if not timed_out else -signal.SIGKILL,
            stdout=stdout or "",
            stderr=stderr or "",
            duration_seconds=duration,
            timed_out=timed_out,
        )


@dataclass
class ToolchainConfig:
    """Where the analyzer and JDKs live, and how to invoke a run.

    ``command`` may use the placeholders {build_file}, {report}, and
    {project}; ``report_path`` may use {project}.  Environment variables
    (LINTKIT_INFER_CMD, LINTKIT_SPOTBUGS_CMD, LINTKIT_JAVA8_HOME, ...) fill
    these in for CLI runs; tests pass explicit configs pointing at stubs.
    """

    command: list[str]
    report_path: str
    java_homes: dict[int, str] = field(default_factory=dict)
    base_env: Optional[dict[str, str]] = None

    @classmethod
    def from_env(cls, tool: Tool, environ: Optional[dict[str, str]] = None) -> "ToolchainConfig":
        env = dict(os.environ if environ is None else environ)
        if tool is Tool.INFER:
            cmd = env.get(
                "LINTKIT_INFER_CMD",
                "infer run --results-dir {report_dir} -- mvn -B -f {build_file} clean compile",
            )
            report = env.get("LINTKIT_INFER_REPORT", "{report_dir}/report.json")
        else:
            cmd = env.get(
                "LINTKIT_SPOTBUGS_CMD",
                "mvn -B -f {build_file} clean compile"
                " com.github.spotbugs:spotbugs-maven-plugin:spotbugs",
            )
            report = env.get("LINTKIT_SPOTBUGS_REPORT", "{project}/target/spotbugsXml.xml")
        homes = {}
        for v in SUPPORTED_JAVA_VERSIONS:
            home = env.get(f"LINTKIT_JAVA{v}_HOME")
            if home:
                homes[v] = home
        return cls(command=shlex.split(cmd), report_path=report, java_homes=homes)


def declared_java_version(pom_path: Path) -> Optional[int]:
    """Best-effort read of the Java release a Maven build file asks for.

    Checks the conventional properties (maven.compiler.source/target/release,
    java.version).  Returns None when nothing parseable is found.
    """
    try:
        tree = ET.parse(pom_path)
    except (ET.ParseError, OSError):
        return None
    root = tree.getroot()
    ns = ""
    if root.tag.startswith("{"):
        ns = root.tag[: root.tag.index("}") + 1]
    props = root.find(f"{ns}properties")
    if props is None:
        return None
    wanted = (
        "maven.compiler.release",
        "maven.compiler.source",
        "maven.compiler.target",
        "java.version",
    )
    for key in wanted:
        node = props.find(f"{ns}{key}")
        if node is not None and node.text:
            return _normalize_java_version(node.text.strip())
    return None


def _normalize_java_version(text: str) -> Optional[int]:
    if text.startswith("1."):
        text = text[2:]
    try:
        version = int(text)
    except ValueError:
        return None
    return version if version in SUPPORTED_JAVA_VERSIONS else None


def discover_build_files(project_dir: Path) -> list[Path]:
    """Root build file first, then sub-module files in path order."""
    root = project_dir / "pom.xml"
    rest = sorted(
        p for p in project_dir.rglob("pom.xml") if p != root
    )
    out = []
    if root.exists():
        out.append(root)
    out.extend(rest)
    return out


def run_analysis(
    project_dir: str | Path,
    tool: Tool,
    config: ToolchainConfig,
    *,
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS,
    runner: Optional[CommandRunner] = None,
) -> tuple[LintRun, list[IssueRecord]]:
    """Analyze one project, climbing the retry ladder on non-timeout failure.

    Returns the run descriptor and the parsed issues (empty unless OK).
    """
    project_dir = Path(project_dir)
    runner = runner or SubprocessRunner()
    project_name = project_dir.name
    build_files = discover_build_files(project_dir)
    run = LintRun(project=project_name, tool=tool, status=RunStatus.BUILD_FAIL)
    if not build_files:
        log.warning("%s: no build file found", project_name)
        run.status = RunStatus.TOOL_FAIL
        return run, []

    attempted: set[tuple[int, str]] = set()
    for build_file in build_files:
        declared = declared_java_version(build_file) or SUPPORTED_JAVA_VERSIONS[0]
        ladder = [declared] + [v for v in SUPPORTED_JAVA_VERSIONS if v != declared]
        for version in ladder:
            key = (version, str(build_file))
            if key in attempted:  # ladder construction already prevents this
                continue
            attempted.add(key)
            status, duration, issues = _attempt(
                project_dir, tool, config, build_file, version, timeout_seconds, runner
            )
            run.attempts.append(
                AttemptLog(
                    java_version=version,
                    build_file=str(build_file.relative_to(project_dir)),
                    status=status,
                    duration_seconds=duration,
                )
            )
            run.duration_seconds += duration
            run.status = status
            run.java_version = version
            run.build_file = str(build_file.relative_to(project_dir))
            if status is RunStatus.OK:
                return run, issues
            if status is RunStatus.TIMEOUT:
                # The budget is spent; retrying other configurations would
                # multiply it for a project that already ran 25 minutes.
                return run, []
    return run, []


def _attempt(
    project_dir: Path,
    tool: Tool,
    config: ToolchainConfig,
    build_file: Path,
    java_version: int,
    timeout_seconds: float,
    runner: CommandRunner,
) -> tuple[RunStatus, float, list[IssueRecord]]:
    report_dir = str(project_dir / "lintkit-out")
    subst = {
        "build_file": str(build_file),
        "project": str(project_dir),
        "report_dir": report_dir,
    }
    cmd = [part.format(**subst) for part in config.command]
    report_path = Path(config.report_path.format(**subst))
    env = dict(config.base_env if config.base_env is not None else os.environ)
    java_home = config.java_homes.get(java_version)
    if java_home:
        env["JAVA_HOME"] = java_home
    env["LINTKIT_JAVA_VERSION"] = str(java_version)
    env["LINTKIT_BUILD_FILE"] = str(build_file)

    result = runner.run(cmd, cwd=str(project_dir), env=env, timeout=timeout_seconds)
    if result.timed_out:
        return RunStatus.TIMEOUT, result.duration_seconds, []
    if result.returncode != 0:
        return RunStatus.BUILD_FAIL, result.duration_seconds, []
    try:
        data = report_path.read_bytes()
        if tool is Tool.INFER:
            parsed = parse_infer_report(data)
        else:
            parsed = parse_spotbugs_report(data)
    except (OSError, ReportParseError) as exc:
        log.warning("%s: analyzer exited cleanly but report unusable: %s", project_dir.name, exc)
        return RunStatus.TOOL_FAIL, result.duration_seconds, []
    return RunStatus.OK, result.duration_seconds, parsed.records


class ReportParseError(ValueError):
    """The report file exists but cannot be interpreted."""


@dataclass
class ParsedReport:
    records: list[IssueRecord]
    unknown_types: Counter = field(default_factory=Counter)
    dropped_no_line: int = 0

    @property
    def warning_summary(self) -> dict:
        return {
            "unknown_types": dict(self.unknown_types),
            "dropped_no_line": self.dropped_no_line,
        }


def _load_table(name: str) -> dict[str, str]:
    with resources.files("lintkit.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


_INFER_TABLE: Optional[dict[str, str]] = None
_SPOTBUGS_TABLE: Optional[dict[str, str]] = None


def infer_type_table() -> dict[str, str]:
    global _INFER_TABLE
    if _INFER_TABLE is None:
        _INFER_TABLE = _load_table("infer_types.json")
    return _INFER_TABLE


def spotbugs_type_table() -> dict[str, str]:
    global _SPOTBUGS_TABLE
    if _SPOTBUGS_TABLE is None:
        _SPOTBUGS_TABLE = _load_table("spotbugs_types.json")
    return _SPOTBUGS_TABLE


def parse_infer_report(data: bytes) -> ParsedReport:
    """Parse the JSON finding list one analyzer emits.

    Each entry needs bug_type, file, and line; a malformed entry raises
    ReportParseError naming its index.
    """
    try:
        entries = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ReportParseError(f"report is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ReportParseError("report root must be a JSON array of findings")
    table = infer_type_table()
    parsed = ParsedReport(records=[])
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ReportParseError(f"finding {i}: not an object")
        try:
            bug_type = entry["bug_type"]
            path = entry["file"]
            line = int(entry["line"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ReportParseError(f"finding {i}: missing or invalid field ({exc})") from exc
        type_id = table.get(bug_type)
        if type_id is None:
            parsed.unknown_types[bug_type] += 1
            type_id = UNKNOWN_INFER_TYPE
        parsed.records.append(
            IssueRecord(
                tool=Tool.INFER,
                type_id=type_id,
                path=path,
                line=line,
                message=entry.get("qualifier", ""),
            )
        )
    if parsed.unknown_types:
        log.warning(
            "infer report: %d finding(s) with unmapped bug types: %s",
            sum(parsed.unknown_types.values()),
            ", ".join(sorted(parsed.unknown_types)),
        )
    return parsed


def parse_spotbugs_report(data: bytes) -> ParsedReport:
    """Parse a BugCollection XML report.

    A bug instance needs a type attribute and a direct source-line child with
    both a line number and a source path; instances without one are dropped
    and counted, not fatal.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ReportParseError(f"report is not valid XML: {exc}") from exc
    table = spotbugs_type_table()
    parsed = ParsedReport(records=[])
    for bug in root.iter("BugInstance"):
        bug_type = bug.get("type")
        if not bug_type:
            raise ReportParseError("BugInstance without a type attribute")
        source_line = _primary_source_line(bug)
        if source_line is None:
            parsed.dropped_no_line += 1
            continue
        path, line = source_line
        type_id = table.get(bug_type)
        if type_id is None:
            parsed.unknown_types[bug_type] += 1
            type_id = UNKNOWN_SPOTBUGS_TYPE
        message = ""
        msg_node = bug.find("LongMessage")
        if msg_node is None:
            msg_node = bug.find("ShortMessage")
        if msg_node is not None and msg_node.text:
            message = msg_node.text.strip()
        parsed.records.append(
            IssueRecord(tool=Tool.SPOTBUGS, type_id=type_id, path=path, line=line, message=message)
        )
    if parsed.dropped_no_line:
        log.warning(
            "spotbugs report: dropped %d finding(s) without a source line",
            parsed.dropped_no_line,
        )
    return parsed


def _primary_source_line(bug: ET.Element) -> Optional[tuple[str, int]]:
    candidates = bug.findall("SourceLine")
    primary = [c for c in candidates if c.get("primary") == "true"]
    for node in primary + candidates:
        start = node.get("start")
        path = node.get("sourcepath")
        if start and path:
            try:
                return path, int(start)
            except ValueError:
                continue
    return None
