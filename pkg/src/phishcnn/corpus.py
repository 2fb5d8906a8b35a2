"""Corpus handling: manifest ingestion, sanitation, temporal splitting, and a
redirect-following page fetcher.

A manifest is line-delimited JSON, one record per line, with keys ``id``,
``url``, ``label`` (0 legitimate / 1 phishing), ``html_path`` (relative to the
manifest file) and ``collected_at`` (RFC 3339 UTC). Unknown keys are ignored.
HTML files are stored verbatim as fetched bytes and decoded as UTF-8 with
replacement characters on access.
"""
from __future__ import annotations

import hashlib
import json
import logging
import socket
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

_REDIRECT_STATUSES = (301, 302, 303, 307, 308)


class ManifestError(Exception):
    """Manifest file missing, malformed, or referencing bad data."""


class FetchError(Exception):
    """Fetch failed; ``status`` carries the HTTP status when one was seen."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


@dataclass
class DocumentRecord:
    """One labeled HTML document. Text is loaded lazily from ``html_path``
    unless ``html_text`` was supplied directly; treat instances as immutable
    after construction."""

    id: str
    url: str
    label: int
    content_digest: str
    collected_at: datetime | None = None
    split_tag: str | None = None
    html_path: Path | None = None
    html_text: str | None = field(default=None, repr=False, compare=False)

    @property
    def html(self) -> str:
        if self.html_text is not None:
            return self.html_text
        if self.html_path is None:
            raise ValueError(f"record {self.id!r} has no html source")
        return self.html_path.read_bytes().decode("utf-8", errors="replace")

    @classmethod
    def from_text(cls, id: str, url: str, label: int, html: str,
                  collected_at: datetime | None = None) -> "DocumentRecord":
        return cls(id=id, url=url, label=label,
                   content_digest=_digest(html.encode("utf-8")),
                   collected_at=collected_at, html_text=html)


@dataclass
class CorpusManifest:
    records: list[DocumentRecord]
    class_counts: dict[int, int]
    created_at: datetime

    @classmethod
    def from_records(cls, records: list[DocumentRecord]) -> "CorpusManifest":
        counts = {0: 0, 1: 0}
        for rec in records:
            counts[rec.label] += 1
        return cls(records=list(records), class_counts=counts,
                   created_at=datetime.now(timezone.utc))

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path: Path | str) -> CorpusManifest:
    """Parse a line-delimited JSON manifest, resolving HTML paths against the
    manifest's directory. Duplicate (url, content digest) pairs are dropped
    with a warning. HTML text itself is read lazily, later, on access."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    records: list[DocumentRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise ManifestError(f"{path}: line {lineno}: expected a JSON object")
        try:
            rec_id = str(obj["id"])
            url = str(obj["url"])
            label = obj["label"]
            html_rel = obj["html_path"]
        except KeyError as exc:
            raise ManifestError(f"{path}: line {lineno}: missing key {exc}") from exc
        if label not in (0, 1):
            raise ManifestError(f"{path}: line {lineno}: label must be 0 or 1, got {label!r}")
        html_path = (base / html_rel).resolve()
        if not html_path.is_file():
            raise ManifestError(f"{path}: line {lineno}: html file not found: {html_path}")
        collected_at = None
        raw_ts = obj.get("collected_at")
        if raw_ts is not None:
            try:
                collected_at = _parse_timestamp(str(raw_ts))
            except ValueError as exc:
                raise ManifestError(
                    f"{path}: line {lineno}: bad collected_at {raw_ts!r} ({exc})") from exc
        digest = _digest_file(html_path)
        key = (url, digest)
        if key in seen:
            logger.warning("%s: line %d: duplicate record for %s (same url and "
                           "content digest), dropped", path, lineno, url)
            continue
        seen.add(key)
        records.append(DocumentRecord(
            id=rec_id, url=url, label=int(label), content_digest=digest,
            collected_at=collected_at, html_path=html_path))
    return CorpusManifest.from_records(records)


def sanitize(manifest: CorpusManifest) -> CorpusManifest:
    """Drop empty documents and duplicate content digests (first occurrence
    wins); otherwise preserve order. Idempotent; drops are logged, not fatal."""
    kept: list[DocumentRecord] = []
    seen_digests: set[str] = set()
    for rec in manifest.records:
        if len(rec.html) == 0:
            logger.warning("sanitize: dropping %s (%s): empty content", rec.id, rec.url)
            continue
        if rec.content_digest in seen_digests:
            logger.warning("sanitize: dropping %s (%s): duplicate content", rec.id, rec.url)
            continue
        seen_digests.add(rec.content_digest)
        kept.append(rec)
    return CorpusManifest.from_records(kept)


def temporal_split(manifest: CorpusManifest, boundary: datetime) -> tuple[CorpusManifest, CorpusManifest]:
    """Partition records by collection time: strictly before the boundary goes
    to train, at or after it goes to test."""
    if boundary.tzinfo is None:
        boundary = boundary.replace(tzinfo=timezone.utc)
    train: list[DocumentRecord] = []
    test: list[DocumentRecord] = []
    for rec in manifest.records:
        if rec.collected_at is None:
            raise ManifestError(f"record {rec.id!r} has no collected_at timestamp; "
                                "cannot split temporally")
        if rec.collected_at < boundary:
            train.append(replace(rec, split_tag="train"))
        else:
            test.append(replace(rec, split_tag="test"))
    return CorpusManifest.from_records(train), CorpusManifest.from_records(test)


# ---------------------------------------------------------------------------
# Fetcher
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FetchLimits:
    timeout: float = 30.0
    max_bytes: int = 5 * 1024 * 1024
    max_redirects: int = 10


class _NoRedirect(urllib.request.HTTPRedirectHandler):
    def redirect_request(self, req, fp, code, msg, headers, newurl):
        return None


def fetch_bytes(url: str, limits: FetchLimits = FetchLimits()) -> bytes:
    """Fetch the body of the final landing page as raw bytes, following up to
    ``limits.max_redirects`` redirects manually.

    Proxy configuration is honored from the standard environment variables.
    No error correction or repair is applied to the returned bytes.
    """
    scheme = urllib.parse.urlparse(url).scheme
    if scheme not in ("http", "https"):
        raise FetchError(f"unsupported URL scheme {scheme!r} in {url}")
    opener = urllib.request.build_opener(_NoRedirect())
    current = url
    for hop in range(limits.max_redirects + 1):
        request = urllib.request.Request(current, headers={"User-Agent": "phishcnn/0.1"})
        try:
            response = opener.open(request, timeout=limits.timeout)
        except urllib.error.HTTPError as exc:
            if exc.code in _REDIRECT_STATUSES:
                location = exc.headers.get("Location")
                exc.close()
                if not location:
                    raise FetchError(f"{current}: redirect without Location header",
                                     status=exc.code)
                current = urllib.parse.urljoin(current, location)
                continue
            exc.close()
            raise FetchError(f"{current}: HTTP {exc.code}", status=exc.code)
        except (socket.timeout, TimeoutError) as exc:
            raise FetchError(f"{current}: timed out after {limits.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise FetchError(f"{current}: timed out after {limits.timeout}s") from exc
            raise FetchError(f"{current}: {exc.reason}") from exc
        with response:
            status = response.status
            if not 200 <= status < 300:
                raise FetchError(f"{current}: HTTP {status}", status=status)
            body = response.read(limits.max_bytes + 1)
        if len(body) > limits.max_bytes:
            raise FetchError(f"{current}: body exceeds {limits.max_bytes} bytes")
        return body
    raise FetchError(f"{url}: more than {limits.max_redirects} redirects")


def fetch_html(url: str, limits: FetchLimits = FetchLimits()) -> str:
    """Fetch the final landing page and decode it as UTF-8, replacing invalid
    byte sequences with the Unicode replacement character."""
    return fetch_bytes(url, limits).decode("utf-8", errors="replace")
