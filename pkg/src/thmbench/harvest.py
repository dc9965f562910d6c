"""Candidate-paper retrieval for a target month.

Queries an Atom feed (the live arXiv API or a local fixture feed) under a
category pattern, widening the submission window step by step until the
paper cap is met. Results are deduplicated and deterministically ordered.
"""

from __future__ import annotations

import calendar
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fnmatch import fnmatch
from xml.etree import ElementTree

import requests

from .errors import ConfigError, FeedParseError, NetworkError

ATOM_NS = "{http://www.w3.org/2005/Atom}"
ARXIV_NS = "{http://arxiv.org/schemas/atom}"

ARXIV_QUERY_URL = "http://export.arxiv.org/api/query"
ARXIV_EPRINT_URL = "https://arxiv.org/e-print/{arxiv_id}"
ARXIV_ABS_URL = "https://arxiv.org/abs/{arxiv_id}"


@dataclass
class PaperRecord:
    arxiv_id: str
    title: str
    abs_link: str
    source_link: str
    month: str
    retrieved_at: str = ""
    submitted: str = ""
    window: str = ""

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, data: dict) -> "PaperRecord":
        return cls(**{k: data.get(k, "") for k in (
            "arxiv_id", "title", "abs_link", "source_link", "month",
            "retrieved_at", "submitted", "window")})


@dataclass
class HarvestConfig:
    month: str
    category_pattern: str = "math.*"
    max_papers: int = 200
    widening_schedule: list[int] = field(default_factory=lambda: [0, 3, 7])
    page_size: int = 100
    politeness_delay: float = 3.0

    def validate(self) -> None:
        if not re.fullmatch(r"\d{4}-\d{2}", self.month):
            raise ConfigError(f"month must be YYYY-MM, got {self.month!r}")
        if self.max_papers < 1:
            raise ConfigError("max_papers must be >= 1")
        if any(b <= a for a, b in zip(self.widening_schedule,
                                      self.widening_schedule[1:])):
            raise ConfigError("widening_schedule must be strictly increasing")


@dataclass
class FeedEntry:
    arxiv_id: str
    title: str
    abs_link: str
    submitted: datetime
    primary_category: str


def month_window(month: str, pad_days: int) -> tuple[datetime, datetime]:
    year, mon = int(month[:4]), int(month[5:7])
    start = datetime(year, mon, 1, tzinfo=timezone.utc)
    last_day = calendar.monthrange(year, mon)[1]
    end = start + timedelta(days=last_day)
    return (start - timedelta(days=pad_days), end + timedelta(days=pad_days))


def _parse_timestamp(raw: str) -> datetime:
    value = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value


def parse_feed(xml_text: str) -> list[FeedEntry]:
    try:
        root = ElementTree.fromstring(xml_text)
    except ElementTree.ParseError as exc:
        raise FeedParseError(str(exc)) from exc
    entries = []
    for node in root.findall(f"{ATOM_NS}entry"):
        raw_id = (node.findtext(f"{ATOM_NS}id") or "").strip()
        arxiv_id = raw_id.rsplit("/", 1)[-1]
        title = " ".join((node.findtext(f"{ATOM_NS}title") or "").split())
        published = node.findtext(f"{ATOM_NS}published")
        if not arxiv_id or not published:
            raise FeedParseError(f"entry missing id or published: {raw_id!r}")
        primary = node.find(f"{ARXIV_NS}primary_category")
        category = primary.get("term", "") if primary is not None else ""
        entries.append(FeedEntry(
            arxiv_id=arxiv_id,
            title=title,
            abs_link=raw_id or ARXIV_ABS_URL.format(arxiv_id=arxiv_id),
            submitted=_parse_timestamp(published),
            primary_category=category,
        ))
    return entries


class FixtureFeedClient:
    """Feed backed by one local Atom file; windowing happens client-side."""

    def __init__(self, xml_text: str):
        self.entries = parse_feed(xml_text)
        self.query_count = 0

    def query(self, category_pattern: str, window: tuple[datetime, datetime],
              page_size: int, need: int) -> list[FeedEntry]:
        self.query_count += 1
        lo, hi = window
        return [e for e in self.entries
                if lo <= e.submitted < hi
                and fnmatch(e.primary_category, category_pattern)]


class ArxivFeedClient:
    """Paginated live-API client with a politeness delay between pages."""

    def __init__(self, politeness_delay: float = 3.0, max_attempts: int = 3,
                 session: requests.Session | None = None, sleep=time.sleep):
        self.politeness_delay = politeness_delay
        self.max_attempts = max_attempts
        self.session = session or requests.Session()
        self._sleep = sleep

    def query(self, category_pattern: str, window: tuple[datetime, datetime],
              page_size: int, need: int) -> list[FeedEntry]:
        lo, hi = window
        stamp = "%Y%m%d%H%M"
        search = (f"cat:{category_pattern} AND "
                  f"submittedDate:[{lo.strftime(stamp)} TO {hi.strftime(stamp)}]")
        collected: list[FeedEntry] = []
        start = 0
        while len(collected) < need:
            page = self._fetch_page(search, start, page_size)
            batch = [e for e in page
                     if lo <= e.submitted < hi
                     and fnmatch(e.primary_category, category_pattern)]
            collected.extend(batch)
            if len(page) < page_size:
                break
            start += page_size
            self._sleep(self.politeness_delay)
        return collected

    def _fetch_page(self, search: str, start: int,
                    page_size: int) -> list[FeedEntry]:
        params = {"search_query": search, "start": start,
                  "max_results": page_size, "sortBy": "submittedDate",
                  "sortOrder": "ascending"}
        last_error = None
        for attempt in range(self.max_attempts):
            try:
                response = self.session.get(ARXIV_QUERY_URL, params=params,
                                            timeout=60)
                if response.status_code != 200:
                    raise NetworkError(f"HTTP {response.status_code}")
                return parse_feed(response.text)
            except (requests.RequestException, NetworkError) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(2.0 * (attempt + 1))
        raise NetworkError(f"feed fetch failed after retries: {last_error}")


def fetch_month(config: HarvestConfig, client) -> list[PaperRecord]:
    """Widen the window until the cap is met; dedupe, order, truncate.

    Windows from the schedule are tried in order, stopping at the first
    that yields at least max_papers candidates (or after the last). An
    empty harvest is a value, not an error.
    """
    config.validate()
    retrieved_at = datetime.now(timezone.utc).isoformat()
    chosen: list[FeedEntry] = []
    chosen_pad = config.widening_schedule[0] if config.widening_schedule else 0
    for pad in config.widening_schedule:
        window = month_window(config.month, pad)
        entries = client.query(config.category_pattern, window,
                               config.page_size, config.max_papers)
        deduped: dict[str, FeedEntry] = {}
        for entry in entries:
            deduped.setdefault(entry.arxiv_id, entry)
        chosen = list(deduped.values())
        chosen_pad = pad
        if len(chosen) >= config.max_papers:
            break
    chosen.sort(key=lambda e: (e.submitted, e.arxiv_id))
    chosen = chosen[:config.max_papers]
    return [PaperRecord(
        arxiv_id=e.arxiv_id,
        title=e.title,
        abs_link=e.abs_link,
        source_link=ARXIV_EPRINT_URL.format(arxiv_id=e.arxiv_id),
        month=config.month,
        retrieved_at=retrieved_at,
        submitted=e.submitted.isoformat(),
        window=f"month±{chosen_pad}d",
    ) for e in chosen]


def source_url(record: PaperRecord) -> str:
    """Canonical e-print URL; any version suffix on the id is preserved."""
    if not record.arxiv_id:
        raise ConfigError("record has an empty arxiv_id")
    return ARXIV_EPRINT_URL.format(arxiv_id=record.arxiv_id)


class FixtureEprintStore:
    """Serves e-print blobs from a local directory keyed by arxiv id."""

    def __init__(self, root):
        from pathlib import Path
        self.root = Path(root)

    def fetch(self, record: PaperRecord) -> bytes:
        bare = re.sub(r"v\d+$", "", record.arxiv_id)
        for stem in (record.arxiv_id, bare):
            for suffix in (".tar.gz", ".gz", ".tex"):
                path = self.root / f"{stem}{suffix}"
                if path.exists():
                    return path.read_bytes()
        raise NetworkError(f"no fixture e-print for {record.arxiv_id}")


class HttpEprintStore:
    def __init__(self, session: requests.Session | None = None,
                 max_attempts: int = 3, sleep=time.sleep):
        self.session = session or requests.Session()
        self.max_attempts = max_attempts
        self._sleep = sleep

    def fetch(self, record: PaperRecord) -> bytes:
        url = source_url(record)
        last_error = None
        for attempt in range(self.max_attempts):
            try:
                response = self.session.get(url, timeout=120)
                if response.status_code != 200:
                    raise NetworkError(f"HTTP {response.status_code} for {url}")
                return response.content
            except (requests.RequestException, NetworkError) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(2.0 * (attempt + 1))
        raise NetworkError(f"e-print fetch failed after retries: {last_error}")
