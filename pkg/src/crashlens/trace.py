"""Parsing and normalization of Java-style stack traces.

A raw trace is the usual JVM text: an exception header, one `at
pkg.Class.method(File.java:NN)` line per frame, and optionally one or more
`Caused by:` segments. Frames are flattened so the deepest cause leads: its
top frame is where the exception was actually thrown, which makes it the
crash point (position 0) of the parsed trace.

All types here are immutable values; every function is pure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime

from .errors import MalformedTraceError

# `at [module/]pkg.Class.method(location)`; the JDK 9+ module prefix is
# accepted and discarded. Method names may contain $ (lambdas) and <> (init);
# `#` appears in names rewritten by normalization, and accepting it here lets
# rendered normalized frames parse back.
_FRAME_RE = re.compile(
    r"^\s*at\s+"
    r"(?:[\w.$]+/)?"
    r"(?P<qualified>[\w$.<>#]+)"
    r"\((?P<location>[^()]*)\)"
    r"\s*$"
)

_CAUSED_BY_RE = re.compile(r"^\s*Caused by:\s*(?P<header>.*)$")

_HEADER_RE = re.compile(
    r"^\s*(?:Exception in thread \"[^\"]*\"\s+)?"
    r"(?P<type>[\w.$]+)(?::\s?(?P<message>.*))?$"
)

_NO_SOURCE_LOCATIONS = frozenset({"Unknown Source", "Native Method"})


@dataclass(frozen=True, slots=True)
class QualifiedMethod:
    """A method identity: package, declaring class, method name."""

    package: str
    class_name: str
    method: str

    def render(self) -> str:
        return f"{self.package}.{self.class_name}.{self.method}"

    @classmethod
    def parse(cls, text: str) -> "QualifiedMethod":
        """Split `package.Class.method` from the right; all parts non-empty."""
        parts = text.rsplit(".", 2)
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"not a qualified method name: {text!r}")
        return cls(package=parts[0], class_name=parts[1], method=parts[2])


@dataclass(frozen=True, slots=True)
class Frame:
    """One stack-trace entry. Position 0 is the most recent frame."""

    qualified_method: QualifiedMethod
    file_name: str
    line: int | None
    position: int

    def render(self) -> str:
        if self.line is None:
            location = self.file_name
        else:
            location = f"{self.file_name}:{self.line}"
        return f"at {self.qualified_method.render()}({location})"


@dataclass(frozen=True, slots=True)
class StackTrace:
    """Parsed trace: exception type, optional message, ordered frames.

    raw_text keeps the exact input, including any lines that are not frames
    (headers, `... N more`, message continuations).
    """

    exception_type: str
    message: str | None
    frames: tuple[Frame, ...]
    raw_text: str


@dataclass(frozen=True, slots=True)
class CrashReport:
    """One logged crash: identity, request context, and the parsed trace."""

    crash_id: str
    timestamp: datetime
    uri: str
    user: str | None
    session_id: str | None
    trace: StackTrace


@dataclass(frozen=True, slots=True)
class NormalizationRule:
    """Rewrites volatile identifier substrings (pattern -> replacement).

    The replacement must not reintroduce text its own pattern matches,
    otherwise normalization would not be idempotent.
    """

    pattern: str
    replacement: str

    def apply(self, text: str) -> str:
        return re.sub(self.pattern, self.replacement, text)


NormalizationRules = tuple[NormalizationRule, ...]

# Generated accessor classes, generated constructor accessors, and dynamic
# proxies carry a per-JVM counter in the class name; the counter says nothing
# about the code path, so it collapses to '#'.
DEFAULT_NORMALIZATION_RULES: NormalizationRules = (
    NormalizationRule(r"GeneratedMethodAccessor\d+", "GeneratedMethodAccessor#"),
    NormalizationRule(r"GeneratedConstructorAccessor\d+", "GeneratedConstructorAccessor#"),
    NormalizationRule(r"\$Proxy\d+", "$Proxy#"),
)


def parse_frame_line(line: str, position: int) -> Frame | None:
    match = _FRAME_RE.match(line)
    if match is None:
        return None
    qualified = match.group("qualified")
    try:
        method = QualifiedMethod.parse(qualified)
    except ValueError:
        # Fewer than three non-empty parts (e.g. default-package classes):
        # not a well-formed frame, the line stays in raw_text only.
        return None
    location = match.group("location").strip()
    file_name = location
    line_no: int | None = None
    if location not in _NO_SOURCE_LOCATIONS and ":" in location:
        candidate, _, digits = location.rpartition(":")
        if digits.isdigit():
            file_name = candidate
            line_no = int(digits)
    return Frame(qualified_method=method, file_name=file_name, line=line_no, position=position)


def parse_stack_trace(raw: str) -> StackTrace:
    """Parse raw JVM trace text into a StackTrace.

    Frames keep input order within each segment. When `Caused by:` segments
    exist, the deepest cause's frames come first (its top frame is position
    0), followed by the enclosing segments' frames, innermost to outermost.
    The exception type and message are taken from the deepest cause, since
    that is where the crash actually originates.

    Raises MalformedTraceError when no line matches the frame grammar.
    """
    if not raw.strip():
        raise MalformedTraceError("empty trace text")

    # One (header, frame-lines) bucket per exception segment, outermost first.
    headers: list[str | None] = [None]
    frame_lists: list[list[Frame]] = [[]]
    for line in raw.splitlines():
        caused = _CAUSED_BY_RE.match(line)
        if caused is not None:
            headers.append(caused.group("header"))
            frame_lists.append([])
            continue
        frame = parse_frame_line(line, position=0)
        if frame is not None:
            frame_lists[-1].append(frame)
            continue
        if len(headers) == 1 and headers[0] is None and not frame_lists[0] and line.strip():
            # First non-blank, non-frame line is the outermost header.
            headers[0] = line

    ordered: list[Frame] = []
    for frames in reversed(frame_lists):
        ordered.extend(frames)
    if not ordered:
        raise MalformedTraceError("no line matches the frame grammar")

    header = headers[-1]
    exception_type = ""
    message: str | None = None
    if header is not None:
        header_match = _HEADER_RE.match(header.strip())
        if header_match is not None:
            exception_type = header_match.group("type")
            message = header_match.group("message")
        else:
            message = header.strip()

    frames = tuple(replace(f, position=i) for i, f in enumerate(ordered))
    return StackTrace(
        exception_type=exception_type,
        message=message,
        frames=frames,
        raw_text=raw,
    )


def crash_point(trace: StackTrace) -> Frame:
    """The top frame (position 0), i.e. the signaler of the exception."""
    return trace.frames[0]


def qualified_file_name(frame: Frame) -> str:
    """`package.Class` of the frame's declaring source file.

    Inner-class suffixes after `$` are stripped (a.B$1 lives in a.B); class
    names that *start* with `$` (dynamic proxies) are kept whole.
    """
    return declaring_file(frame.qualified_method)


def declaring_file(method: QualifiedMethod) -> str:
    cls = method.class_name
    base = cls.partition("$")[0] or cls
    return f"{method.package}.{base}"


def normalize_frames(frames: tuple[Frame, ...], rules: NormalizationRules) -> tuple[Frame, ...]:
    """Apply every rule to each frame's identifier strings.

    Line numbers and positions are untouched. Idempotent for rule sets whose
    replacements are not matched by their own patterns.
    """
    out = []
    for frame in frames:
        pkg, cls, method = (
            frame.qualified_method.package,
            frame.qualified_method.class_name,
            frame.qualified_method.method,
        )
        file_name = frame.file_name
        for rule in rules:
            pkg = rule.apply(pkg)
            cls = rule.apply(cls)
            method = rule.apply(method)
            file_name = rule.apply(file_name)
        qm = frame.qualified_method
        if (pkg, cls, method) != (qm.package, qm.class_name, qm.method) or file_name != frame.file_name:
            frame = Frame(
                qualified_method=QualifiedMethod(pkg, cls, method),
                file_name=file_name,
                line=frame.line,
                position=frame.position,
            )
        out.append(frame)
    return tuple(out)


def normalize_trace(trace: StackTrace, rules: NormalizationRules) -> StackTrace:
    """Copy of `trace` with volatile identifier substrings rewritten."""
    normalized = normalize_frames(trace.frames, rules)
    if normalized == trace.frames:
        return trace
    return replace(trace, frames=normalized)


def method_sequence(frames: tuple[Frame, ...]) -> tuple[str, ...]:
    """The `package.Class.method` row per frame, top frame first."""
    return tuple(f.qualified_method.render() for f in frames)


def render_frames(frames: tuple[Frame, ...]) -> str:
    return "\n".join(f.render() for f in frames)
