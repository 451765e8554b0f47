"""Content simplification for the constrained link.

HTML bodies are stripped of multimedia and active content (img, video,
audio, source, picture, iframe, object, embed and script elements, plus
attributes carrying binary data: URIs) while text, links, document
structure and CSS pass through untouched. Everything that is not HTML
passes through unchanged.

Removal works by splicing byte ranges out of the original document rather
than re-serializing a parse tree, so documents that need no changes (and
all untouched regions of documents that do) stay byte-identical.
"""

from __future__ import annotations

import re
from html.parser import HTMLParser

BANNED_CONTAINERS = frozenset(
    {"script", "video", "audio", "picture", "iframe", "object"})
BANNED_VOIDS = frozenset({"img", "source", "embed"})
BANNED = BANNED_CONTAINERS | BANNED_VOIDS

_ATTR_RE = re.compile(
    r"""\s+[^\s=<>'"/]+\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]*))""")


def _is_binary_data_uri(value: str) -> bool:
    v = value.lower()
    if not v.startswith("data:"):
        return False
    if ";base64" in v.split(",", 1)[0]:
        return True
    return not (v.startswith("data:text/") or v.startswith("data:,"))


class _Scanner(HTMLParser):
    """Collects byte spans to delete; never mutates anything itself."""

    def __init__(self, text: str):
        super().__init__(convert_charrefs=True)
        self.text = text
        self.spans: list[tuple[int, int]] = []
        self._line_starts = [0]
        for i, ch in enumerate(text):
            if ch == "\n":
                self._line_starts.append(i + 1)
        self._banned_stack: list[str] = []
        self._banned_start = 0

    def _offset(self) -> int:
        line, col = self.getpos()
        return self._line_starts[line - 1] + col

    def _tag_end(self, start: int) -> int:
        close = self.text.find(">", start)
        return len(self.text) if close < 0 else close + 1

    # -- parser callbacks ---------------------------------------------------

    def handle_starttag(self, tag, attrs):
        start = self._offset()
        if self._banned_stack:
            if tag in BANNED_CONTAINERS:
                self._banned_stack.append(tag)
            return
        if tag in BANNED_CONTAINERS:
            self._banned_stack.append(tag)
            self._banned_start = start
            return
        if tag in BANNED_VOIDS:
            raw = self.get_starttag_text()
            self.spans.append((start, start + len(raw) if raw else self._tag_end(start)))
            return
        self._scan_attrs(start)

    def handle_startendtag(self, tag, attrs):
        if self._banned_stack:
            return
        start = self._offset()
        if tag in BANNED:
            raw = self.get_starttag_text()
            self.spans.append((start, start + len(raw) if raw else self._tag_end(start)))
            return
        self._scan_attrs(start)

    def handle_endtag(self, tag):
        if not self._banned_stack:
            return
        if tag in self._banned_stack:
            while self._banned_stack and self._banned_stack[-1] != tag:
                self._banned_stack.pop()
            self._banned_stack.pop()
            if not self._banned_stack:
                end = self._tag_end(self._offset())
                self.spans.append((self._banned_start, end))

    def close(self):
        super().close()
        if self._banned_stack:
            # unclosed multimedia/script container: drop through end of input
            self.spans.append((self._banned_start, len(self.text)))
            self._banned_stack.clear()

    # -- attribute scanning -------------------------------------------------

    def _scan_attrs(self, tag_start: int):
        raw = self.get_starttag_text()
        if not raw or "data:" not in raw:
            return
        for m in _ATTR_RE.finditer(raw):
            value = next(g for g in m.groups() if g is not None)
            if _is_binary_data_uri(value):
                self.spans.append((tag_start + m.start(), tag_start + m.end()))


def _splice(text: str, spans: list[tuple[int, int]]) -> str:
    merged: list[list[int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    pieces = []
    at = 0
    for start, end in merged:
        pieces.append(text[at:start])
        at = end
    pieces.append(text[at:])
    return "".join(pieces)


def _is_html(content_type: str) -> bool:
    mime = (content_type or "").split(";", 1)[0].strip().lower()
    return "html" in mime


def simplify_content(body: bytes, content_type: str) -> bytes:
    """Strip multimedia/script content from HTML bodies; pass everything
    else through unchanged. Never raises: malformed HTML is handled
    best-effort."""
    if not _is_html(content_type) or not body:
        return body
    # latin-1 maps bytes 1:1 onto code points, so character offsets are byte
    # offsets and untouched regions survive byte-exactly in any real charset
    text = body.decode("latin-1")
    scanner = _Scanner(text)
    try:
        scanner.feed(text)
        scanner.close()
    except Exception:
        pass  # keep whatever spans were found before the parser gave up
    if not scanner.spans:
        return body
    return _splice(text, scanner.spans).encode("latin-1")
