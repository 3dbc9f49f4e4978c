"""Polite fetching and the content-addressed snapshot archive.

Archive layout::

    <archive>/<hash[:2]>/<hash>.body
    <archive>/<hash[:2]>/<hash>.meta.json

The hash is the SHA-256 hex digest of the body. Every downstream stage reads
from the archive only.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import urlsplit
from urllib.robotparser import RobotFileParser

import requests

from .errors import FetchFailed, IntegrityError, PolicyRefused, SnapshotNotFound, StoreError

log = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})
META_KEYS = ("url", "fetched_at", "http_status", "content_type")


def digest(body: bytes) -> str:
    return hashlib.sha256(body).hexdigest()


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    text = ts.strftime("%Y-%m-%dT%H:%M:%S")
    if ts.microsecond:
        text += f".{ts.microsecond:06d}"
    return text + "Z"


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class RawSnapshot:
    snapshot_id: str
    source_url: str
    fetched_at: datetime
    http_status: int
    body: bytes
    content_type: str

    @classmethod
    def create(cls, source_url: str, body: bytes, *, fetched_at: datetime | None = None,
               http_status: int = 200, content_type: str = "text/html; charset=utf-8") -> "RawSnapshot":
        if fetched_at is None:
            fetched_at = datetime.now(timezone.utc)
        return cls(digest(body), source_url, fetched_at, http_status, bytes(body), content_type)

    def text(self) -> str:
        charset = "utf-8"
        for part in self.content_type.split(";")[1:]:
            key, _, value = part.strip().partition("=")
            if key.lower() == "charset" and value:
                charset = value.strip('"')
        return self.body.decode(charset, errors="replace")


@dataclass(frozen=True)
class CrawlPolicy:
    min_interval_ms: int = 1000
    max_retries: int = 3
    backoff_factor: float = 2.0
    respect_robots: bool = True
    user_agent: str = "tourmonitor/0.1 (+research; polite crawler)"
    backoff_base_ms: int = 250
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.min_interval_ms < 0:
            raise ValueError("min_interval_ms must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_factor < 1:
            raise ValueError("backoff_factor must be >= 1")


class Fetcher:
    """Fetch URLs while keeping per-host spacing and honouring robots.txt.

    Requests to one host are serialized; different hosts proceed concurrently
    when ``fetch_many`` is given more than one worker.
    """

    def __init__(self, policy: CrawlPolicy, session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic):
        self.policy = policy
        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", policy.user_agent)
        self.session.headers["User-Agent"] = policy.user_agent
        self._sleep = sleep
        self._clock = clock
        self._host_locks: dict[str, threading.Lock] = {}
        self._last_request: dict[str, float] = {}
        self._robots: dict[str, RobotFileParser] = {}
        self._guard = threading.Lock()
        self._last_fetched_at: datetime | None = None
        self.request_log: list[tuple[str, float, str]] = []

    def _host_lock(self, host: str) -> threading.Lock:
        with self._guard:
            return self._host_locks.setdefault(host, threading.Lock())

    def _request(self, host: str, url: str) -> requests.Response:
        # caller holds the host lock
        gap = self.policy.min_interval_ms / 1000.0
        last = self._last_request.get(host)
        if last is not None:
            wait = last + gap - self._clock()
            while wait > 0:
                self._sleep(wait)
                wait = last + gap - self._clock()
        now = self._clock()
        self._last_request[host] = now
        with self._guard:
            self.request_log.append((host, now, url))
        return self.session.get(url, timeout=self.policy.timeout_s)

    def _robots_for(self, parts) -> RobotFileParser:
        host = parts.netloc
        parser = self._robots.get(host)
        if parser is not None:
            return parser
        parser = RobotFileParser()
        robots_url = f"{parts.scheme}://{host}/robots.txt"
        try:
            resp = self._request(host, robots_url)
        except requests.RequestException as exc:
            log.warning("robots.txt unreachable for %s (%s); allowing", host, exc)
            parser.parse([])
        else:
            if resp.status_code in (401, 403):
                parser.disallow_all = True
            elif resp.status_code >= 400:
                parser.parse([])
            else:
                parser.parse(resp.text.splitlines())
        self._robots[host] = parser
        return parser

    def _stamp(self) -> datetime:
        now = datetime.now(timezone.utc)
        with self._guard:
            if self._last_fetched_at is not None and now < self._last_fetched_at:
                now = self._last_fetched_at
            self._last_fetched_at = now
        return now

    def fetch(self, url: str) -> RawSnapshot:
        parts = urlsplit(url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"not a fetchable URL: {url!r}")
        host = parts.netloc
        with self._host_lock(host):
            if self.policy.respect_robots:
                if not self._robots_for(parts).can_fetch(self.policy.user_agent, url):
                    raise PolicyRefused(url)
            attempts = 0
            last_exc: BaseException | None = None
            while True:
                attempts += 1
                try:
                    resp = self._request(host, url)
                except requests.RequestException as exc:
                    last_exc = exc
                    resp = None
                if resp is not None and (resp.status_code not in RETRY_STATUSES
                                         or attempts > self.policy.max_retries):
                    return RawSnapshot.create(
                        url, resp.content, fetched_at=self._stamp(),
                        http_status=resp.status_code,
                        content_type=resp.headers.get("Content-Type", "application/octet-stream"),
                    )
                if attempts > self.policy.max_retries:
                    raise FetchFailed(url, attempts, last_exc)
                delay = self.policy.backoff_base_ms / 1000.0 * self.policy.backoff_factor ** (attempts - 1)
                log.info("retrying %s in %.2fs (attempt %d)", url, delay, attempts)
                self._sleep(delay)

    def fetch_many(self, urls: Iterable[str], workers: int = 4) -> list[RawSnapshot | BaseException]:
        urls = list(urls)

        def one(u):
            try:
                return self.fetch(u)
            except (FetchFailed, PolicyRefused, ValueError) as exc:
                return exc

        if workers <= 1:
            return [one(u) for u in urls]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, urls))


_fetchers: dict[CrawlPolicy, Fetcher] = {}


def fetch(url: str, policy: CrawlPolicy) -> RawSnapshot:
    """Fetch one URL through a process-wide fetcher shared by equal policies."""
    fetcher = _fetchers.get(policy)
    if fetcher is None:
        fetcher = _fetchers.setdefault(policy, Fetcher(policy))
    return fetcher.fetch(url)


def _paths(snapshot_id: str, archive_dir: Path) -> tuple[Path, Path]:
    shard = Path(archive_dir) / snapshot_id[:2]
    return shard / f"{snapshot_id}.body", shard / f"{snapshot_id}.meta.json"


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def store_snapshot(snapshot: RawSnapshot, archive_dir: str | os.PathLike) -> str:
    """Write a snapshot once. Storing an identical body again is a no-op."""
    sid = digest(snapshot.body)
    if sid != snapshot.snapshot_id:
        raise IntegrityError(f"snapshot_id {snapshot.snapshot_id} does not match body digest {sid}")
    body_path, meta_path = _paths(sid, Path(archive_dir))
    try:
        body_path.parent.mkdir(parents=True, exist_ok=True)
        if body_path.exists():
            if body_path.read_bytes() != snapshot.body:
                raise IntegrityError(f"digest collision on {sid}")
            if meta_path.exists():
                return sid
        else:
            _atomic_write(body_path, snapshot.body)
        meta = {
            "url": snapshot.source_url,
            "fetched_at": format_timestamp(snapshot.fetched_at),
            "http_status": snapshot.http_status,
            "content_type": snapshot.content_type,
        }
        _atomic_write(meta_path, (json.dumps(meta, ensure_ascii=False) + "\n").encode("utf-8"))
    except OSError as exc:
        raise StoreError(f"cannot store {sid} in {archive_dir}: {exc}") from exc
    return sid


def load_snapshot(snapshot_id: str, archive_dir: str | os.PathLike) -> RawSnapshot:
    body_path, meta_path = _paths(snapshot_id, Path(archive_dir))
    if not body_path.is_file() or not meta_path.is_file():
        raise SnapshotNotFound(f"snapshot {snapshot_id} not in {archive_dir}")
    body = body_path.read_bytes()
    if digest(body) != snapshot_id:
        raise IntegrityError(f"archived body for {snapshot_id} is corrupt")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return RawSnapshot(
        snapshot_id=snapshot_id,
        source_url=meta["url"],
        fetched_at=parse_timestamp(meta["fetched_at"]),
        http_status=int(meta["http_status"]),
        body=body,
        content_type=meta["content_type"],
    )


def list_snapshots(archive_dir: str | os.PathLike) -> list[str]:
    root = Path(archive_dir)
    if not root.is_dir():
        return []
    return sorted(p.name[: -len(".body")] for p in root.glob("??/*.body"))


def archive_digest(archive_dir: str | os.PathLike) -> str:
    """Digest over the sorted snapshot ids plus their metadata sidecars."""
    h = hashlib.sha256()
    for sid in list_snapshots(archive_dir):
        _, meta_path = _paths(sid, Path(archive_dir))
        h.update(sid.encode())
        if meta_path.is_file():
            h.update(meta_path.read_bytes())
    return h.hexdigest()
