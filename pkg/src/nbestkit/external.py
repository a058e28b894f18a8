"""Pluggable external scorers over a stdin/stdout line protocol.

A scorer is any executable that, on startup, prints one handshake line

    QAD-SCORER 1 <name> <ref|noref>

and then answers each request line with one line containing a decimal
float.  Requests are ``src<TAB>hyp`` for reference-free scorers and
``src<TAB>hyp<TAB>ref`` for reference-based ones; tabs, newlines and
backslashes inside fields are escaped as ``\\t``, ``\\n``, ``\\\\``.
Everything is UTF-8 with LF line endings, flushed per batch.
"""

from __future__ import annotations

import math
import queue
import subprocess
import threading

from .errors import (
    ScorerCrashError,
    ScorerProtocolError,
    ScorerTimeoutError,
    ValidationError,
)
from .metrics import REFERENCE_BASED, ExternalScorerConfig

HANDSHAKE_MAGIC = "QAD-SCORER"
PROTOCOL_VERSION = "1"

_EOF = object()


def escape_field(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_field(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


class ExternalScorer:
    """Owns one scorer process and serializes access to it.

    The process is started lazily on first use and reused across score
    calls.  Callers may share an instance between threads; a lock keeps
    request/response pairing intact.
    """

    def __init__(self, cfg: ExternalScorerConfig, expected_kind: str | None = None):
        self.cfg = cfg
        self.expected_kind = expected_kind
        self.name: str | None = None
        self.kind: str | None = None
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._stderr: list[str] = []
        self._lock = threading.Lock()
        self._closed = False

    # -- process lifecycle -------------------------------------------------

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                list(self.cfg.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            raise ScorerCrashError(f"could not launch scorer {self.cfg.command}: {exc}")
        self._lines = queue.Queue()

        def read_stdout(stream, q):
            for raw in stream:
                q.put(raw.decode("utf-8").rstrip("\r\n"))
            q.put(_EOF)

        def read_stderr(stream, sink):
            for raw in stream:
                sink.append(raw.decode("utf-8", "replace"))

        threading.Thread(
            target=read_stdout, args=(self._proc.stdout, self._lines), daemon=True
        ).start()
        threading.Thread(
            target=read_stderr, args=(self._proc.stderr, self._stderr), daemon=True
        ).start()
        self._handshake()

    def _handshake(self):
        line = self._read_line()
        parts = line.split(" ")
        if len(parts) != 4 or parts[0] != HANDSHAKE_MAGIC:
            raise ScorerProtocolError(f"bad handshake line: {line!r}")
        if parts[1] != PROTOCOL_VERSION:
            raise ScorerProtocolError(f"unsupported protocol version: {parts[1]!r}")
        if parts[3] not in ("ref", "noref"):
            raise ScorerProtocolError(f"bad handshake kind: {parts[3]!r}")
        self.name = parts[2]
        self.kind = REFERENCE_BASED if parts[3] == "ref" else "reference_free"
        if self.expected_kind is not None and self.kind != self.expected_kind:
            raise ScorerProtocolError(
                f"scorer {self.name!r} declares {self.kind}, expected {self.expected_kind}"
            )

    def _read_line(self) -> str:
        try:
            item = self._lines.get(timeout=self.cfg.timeout)
        except queue.Empty:
            self._kill()
            raise ScorerTimeoutError(
                f"scorer did not answer within {self.cfg.timeout}s"
            ) from None
        if item is _EOF:
            code = self._proc.poll()
            raise ScorerCrashError(
                f"scorer exited (code {code}) before answering",
                stderr="".join(self._stderr),
            )
        return item

    def _ensure_started(self):
        if self._closed:
            raise ScorerCrashError("scorer already closed")
        if self._proc is None:
            self._start()

    def _kill(self):
        self._closed = True
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- scoring -----------------------------------------------------------

    def score(self, rows: list[tuple]) -> list[float]:
        """Score rows in order; one float per row.

        Rows are (src, hyp) for reference-free scorers and
        (src, hyp, ref) for reference-based ones.
        """
        with self._lock:
            self._ensure_started()
            out: list[float] = []
            for start in range(0, len(rows), self.cfg.batch_size):
                chunk = rows[start : start + self.cfg.batch_size]
                self._send_batch(chunk)
                for offset in range(len(chunk)):
                    line = self._read_line()
                    try:
                        value = float(line)
                    except ValueError:
                        value = math.nan
                    if not math.isfinite(value):
                        err = ScorerProtocolError(
                            f"response line {start + offset + 1} is not a finite "
                            f"decimal float: {line!r}"
                        )
                        err.row_index = start + offset
                        raise err
                    out.append(value)
            return out

    def _send_batch(self, chunk: list[tuple]):
        want_ref = self.kind == REFERENCE_BASED
        payload = []
        for row in chunk:
            ref = row[2] if len(row) > 2 else None
            if want_ref and ref is None:
                raise ValidationError(
                    f"scorer {self.name!r} is reference based but row has no reference"
                )
            fields = [escape_field(row[0]), escape_field(row[1])]
            if want_ref:
                fields.append(escape_field(ref))
            payload.append("\t".join(fields))
        data = ("".join(line + "\n" for line in payload)).encode("utf-8")
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._proc.poll()
            raise ScorerCrashError(
                "scorer pipe closed while sending batch",
                stderr="".join(self._stderr),
            ) from None


def external_score(cfg: ExternalScorerConfig, rows: list[tuple]) -> list[float]:
    """One-shot convenience: launch, handshake, score all rows, shut down."""
    with ExternalScorer(cfg) as scorer:
        return scorer.score(rows)
