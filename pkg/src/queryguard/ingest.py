"""Access-log ingestion: CLF parsing, cleaning, normalization, filtering, dedupe.

The output of this stage is the deduplicated set of normalized query strings
that the feature pipeline consumes. Queries carrying unsafe characters never
reach the model; they are flagged malicious on sight and reported separately.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence
from urllib.parse import unquote

BENIGN = "benign"
MALICIOUS = "malicious"
ATTACK_CLASSES = ("sqli", "xss", "dt", "rfi")

# Paper-style default; request paths ending in one of these are static content.
STATIC_EXTENSIONS = frozenset(
    {"html", "htm", "css", "js", "jpg", "jpeg", "png", "gif", "ico", "txt", "wav", "pdf", "zip"}
)

# Printable characters that must not appear in a query that reaches the model.
UNSAFE_PRINTABLE = frozenset('"#%<>')


class ParseError(ValueError):
    """A line does not follow the Common Log Format."""


class MalformedEncoding(ValueError):
    """A '%' is not followed by two hex digits (strict decoding only)."""


@dataclass(frozen=True)
class LogEntry:
    source_ip: str
    timestamp: str
    method: str
    request_path: str
    query_raw: Optional[str]
    protocol: str
    status: int
    body_size: int
    referer: Optional[str] = None
    user_agent: Optional[str] = None


@dataclass(frozen=True)
class RawQuery:
    text: str
    source_line: int
    day: int = 0


@dataclass(frozen=True)
class NormalizedQuery:
    text: str
    label: Optional[str] = None
    attack_class: Optional[str] = None
    day: int = 0


@dataclass
class IngestStats:
    lines: int = 0
    parse_errors: int = 0
    kept_after_clean: int = 0
    dropped_short: int = 0
    flagged: int = 0
    duplicates: int = 0


@dataclass
class IngestResult:
    kept: list[NormalizedQuery] = field(default_factory=list)
    flagged: list[NormalizedQuery] = field(default_factory=list)
    stats: IngestStats = field(default_factory=IngestStats)


# host ident authuser [timestamp] "request" status bytes ["referer" "user-agent"]
_CLF_RE = re.compile(
    r'^(?P<ip>\S+)\s+(?P<ident>\S+)\s+(?P<user>\S+)\s+\[(?P<ts>[^\]]*)\]\s+'
    r'"(?P<request>[^"]*)"\s+(?P<status>\S+)\s+(?P<size>\S+)'
    r'(?:\s+"(?P<referer>[^"]*)"\s+"(?P<agent>[^"]*)")?\s*$'
)


def parse_clf_line(line: str) -> LogEntry:
    """Parse one Common Log Format record (Combined trailer optional)."""
    m = _CLF_RE.match(line)
    if m is None:
        raise ParseError(f"not a CLF record: {line!r}")
    if not m.group("status").isdigit():
        raise ParseError(f"non-numeric status: {m.group('status')!r}")
    status = int(m.group("status"))
    if not 100 <= status <= 599:
        raise ParseError(f"status out of range: {status}")

    request = m.group("request").split(" ")
    if len(request) != 3:
        raise ParseError(f"malformed request field: {m.group('request')!r}")
    method, target, protocol = request

    path, sep, query = target.partition("?")
    query_raw = query if sep and query else None

    size_field = m.group("size")
    body_size = int(size_field) if size_field.isdigit() else 0

    def opt(value: Optional[str]) -> Optional[str]:
        return None if value in (None, "-") else value

    return LogEntry(
        source_ip=m.group("ip"),
        timestamp=m.group("ts"),
        method=method,
        request_path=path,
        query_raw=query_raw,
        protocol=protocol,
        status=status,
        body_size=body_size,
        referer=opt(m.group("referer")),
        user_agent=opt(m.group("agent")),
    )


def _extension(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    if "." not in name:
        return ""
    return name.rsplit(".", 1)[-1].lower()


def clean(
    entries: Sequence[LogEntry],
    day: int = 0,
    static_extensions: frozenset[str] = STATIC_EXTENSIONS,
    line_numbers: Optional[Sequence[int]] = None,
) -> list[RawQuery]:
    """Keep successful GET requests for dynamic resources that carry a query."""
    if line_numbers is None:
        line_numbers = range(1, len(entries) + 1)
    out = []
    for lineno, e in zip(line_numbers, entries):
        if e.method != "GET":
            continue
        if not 200 <= e.status < 300:
            continue
        if _extension(e.request_path) in static_extensions:
            continue
        if not e.query_raw:
            continue
        out.append(RawQuery(text=e.query_raw, source_line=lineno, day=day))
    return out


def decode_percent(text: str, max_depth: int = 3, strict: bool = False) -> str:
    """Percent-decode repeatedly until fixpoint or the depth cap.

    Latin-1 keeps raw byte semantics: %FF becomes chr(0xFF), which the
    character filter then flags. Invalid escapes stay in place so the stray
    '%' is caught downstream instead of being dropped here.
    """
    if strict and re.search(r"%(?![0-9a-fA-F]{2})", text):
        raise MalformedEncoding(f"stray %% in {text!r}")
    for _ in range(max_depth):
        decoded = unquote(text, encoding="latin-1")
        if decoded == text:
            break
        text = decoded
    return text


_BACKSLASH_ESCAPE = re.compile(r"\\([!-~])")


def _unescape_backslashes(text: str) -> str:
    # Applied to fixpoint so normalize stays idempotent on its own output.
    while _BACKSLASH_ESCAPE.search(text):
        text = _BACKSLASH_ESCAPE.sub(r"\1", text)
    return text


def normalize(q: RawQuery, max_depth: int = 3) -> Optional[NormalizedQuery]:
    """Decode, unescape and lowercase; None when the result is shorter than 4."""
    text = decode_percent(q.text, max_depth=max_depth)
    text = _unescape_backslashes(text)
    text = text.lower()
    if len(text) < 4:
        return None
    return NormalizedQuery(text=text, day=q.day)


def contains_unsafe(text: str) -> bool:
    """True when any character falls outside the safe printable range."""
    for ch in text:
        code = ord(ch)
        if code <= 32 or code >= 127 or ch in UNSAFE_PRINTABLE:
            return True
    return False


def char_filter(q: NormalizedQuery) -> bool:
    """Keep decision for a normalized query; False flags it as malicious."""
    return not contains_unsafe(q.text)


def dedupe(qs: Iterable[NormalizedQuery]) -> list[NormalizedQuery]:
    """Collapse exact-text duplicates to the first occurrence, order preserved."""
    seen: set[str] = set()
    out = []
    for q in qs:
        if q.text in seen:
            continue
        seen.add(q.text)
        out.append(q)
    return out


def ingest_lines(
    lines: Iterable[str],
    day: int = 0,
    static_extensions: frozenset[str] = STATIC_EXTENSIONS,
) -> IngestResult:
    """Full pipeline over raw log lines: parse, clean, normalize, filter, dedupe."""
    result = IngestResult()
    stats = result.stats
    entries: list[LogEntry] = []
    linenos: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        stats.lines += 1
        try:
            entries.append(parse_clf_line(line))
            linenos.append(lineno)
        except ParseError:
            stats.parse_errors += 1

    raw = clean(entries, day=day, static_extensions=static_extensions, line_numbers=linenos)
    stats.kept_after_clean = len(raw)

    normalized: list[NormalizedQuery] = []
    for rq in raw:
        nq = normalize(rq)
        if nq is None:
            stats.dropped_short += 1
            continue
        if contains_unsafe(nq.text):
            stats.flagged += 1
            result.flagged.append(replace(nq, label=MALICIOUS))
        else:
            normalized.append(nq)

    result.kept = dedupe(normalized)
    stats.duplicates = len(normalized) - len(result.kept)
    return result
