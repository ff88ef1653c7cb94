"""Project discovery: a curated seed list plus a date-windowed API sweep.

The hosting service caps any single search at 1,000 results, so the sweep
walks backward through time in last-commit-date windows, halving a window
whenever it saturates the cap, and deduplicates against both itself and the
seed list.  Search I/O goes through a small client interface; tests use a
recorded-fixture client, and live runs use the REST client at the bottom of
this module.
"""

from __future__ import annotations

import logging
import time as _time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum, unique
from typing import Callable, Iterable, Optional, Sequence

log = logging.getLogger(__name__)


@unique
class ProjectSource(Enum):
    SEED_LIST = "seed_list"
    API_SEARCH = "api_search"


@dataclass
class ProjectRecord:
    full_name: str
    clone_url: str
    source: ProjectSource
    in_csn: bool = False
    has_root_pom: Optional[bool] = None
    last_commit_date: Optional[date] = None

    def to_json(self) -> dict:
        return {
            "full_name": self.full_name,
            "clone_url": self.clone_url,
            "source": self.source.value,
            "in_csn": self.in_csn,
            "has_root_pom": self.has_root_pom,
            "last_commit_date": self.last_commit_date.isoformat()
            if self.last_commit_date
            else None,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "ProjectRecord":
        lcd = rec.get("last_commit_date")
        return cls(
            full_name=rec["full_name"],
            clone_url=rec["clone_url"],
            source=ProjectSource(rec["source"]),
            in_csn=bool(rec.get("in_csn", False)),
            has_root_pom=rec.get("has_root_pom"),
            last_commit_date=date.fromisoformat(lcd) if lcd else None,
        )


class RepoUnreachable(RuntimeError):
    """The repository could not be probed (deleted, private, network error)."""


# Probe result: (is_public, has_root_pom).
RepoInspector = Callable[[ProjectRecord], tuple[bool, bool]]


def _trusting_inspector(rec: ProjectRecord) -> tuple[bool, bool]:
    """Use the probe fields already on the record; unknown pom counts as absent."""
    return True, bool(rec.has_root_pom)


@dataclass
class SeedFilterResult:
    kept: list[ProjectRecord]
    dropped_private: int = 0
    dropped_no_pom: int = 0
    skipped_unreachable: int = 0


def filter_seed_projects(
    seed: Iterable[ProjectRecord],
    inspector: RepoInspector = _trusting_inspector,
) -> SeedFilterResult:
    """Keep publicly accessible seed projects with a build file at the root.

    Unreachable repositories are skipped (and counted), never fatal.
    """
    result = SeedFilterResult(kept=[])
    for rec in seed:
        try:
            is_public, has_pom = inspector(rec)
        except RepoUnreachable as exc:
            log.warning("seed project %s unreachable: %s", rec.full_name, exc)
            result.skipped_unreachable += 1
            continue
        if not is_public:
            result.dropped_private += 1
            continue
        if not has_pom:
            result.dropped_no_pom += 1
            continue
        rec.has_root_pom = True
        result.kept.append(rec)
    return result


@dataclass
class SearchResult:
    items: list[ProjectRecord]
    total_count: int


class RateLimited(RuntimeError):
    def __init__(self, retry_after: float = 0.0):
        super().__init__(f"search rate limit hit (retry after {retry_after:.0f}s)")
        self.retry_after = retry_after


class SearchClient(ABC):
    """One date-windowed search against the project index."""

    cap: int = 1000

    @abstractmethod
    def search(self, pushed_after: date, pushed_before: date) -> SearchResult:
        """Projects whose last commit date falls in [pushed_after, pushed_before]."""


class FixtureSearchClient(SearchClient):
    """Serves recorded project records, honoring the per-query result cap.

    Mirrors the live endpoint's behavior: results sorted by last commit date
    descending, at most ``cap`` returned, with the true match count reported.
    """

    def __init__(self, records: Sequence[ProjectRecord], cap: int = 1000):
        self.cap = cap
        self._records = sorted(
            records,
            key=lambda r: (r.last_commit_date or date.min, r.full_name),
            reverse=True,
        )
        self.query_log: list[tuple[date, date]] = []

    def search(self, pushed_after: date, pushed_before: date) -> SearchResult:
        self.query_log.append((pushed_after, pushed_before))
        hits = [
            r
            for r in self._records
            if r.last_commit_date is not None
            and pushed_after <= r.last_commit_date <= pushed_before
        ]
        return SearchResult(items=hits[: self.cap], total_count=len(hits))


class FlakySearchClient(SearchClient):
    """Test double: rate-limits a fixed number of times before delegating."""

    def __init__(self, inner: SearchClient, failures: int, retry_after: float = 0.0):
        self.cap = inner.cap
        self._inner = inner
        self._failures = failures
        self._retry_after = retry_after
        self.rate_limit_hits = 0

    def search(self, pushed_after: date, pushed_before: date) -> SearchResult:
        if self._failures > 0:
            self._failures -= 1
            self.rate_limit_hits += 1
            raise RateLimited(self._retry_after)
        return self._inner.search(pushed_after, pushed_before)


@dataclass
class SweepConfig:
    start: date  # newest last-commit date to consider (inclusive)
    floor: date  # oldest last-commit date to consider (inclusive)
    window_days: int = 30
    min_window_days: int = 1
    max_attempts: int = 5  # per window, for rate-limit retries
    backoff_base: float = 1.0  # seconds; doubled per retry


@dataclass
class SweepStats:
    windows_queried: int = 0
    windows_split: int = 0
    rate_limit_retries: int = 0
    duplicates_skipped: int = 0
    seed_overlap_skipped: int = 0
    aborted_rate_limited: bool = False
    saturated_at_min_window: list[tuple[date, date]] = field(default_factory=list)


@dataclass
class SweepOutcome:
    projects: list[ProjectRecord]
    stats: SweepStats


def sweep_api_search(
    client: SearchClient,
    config: SweepConfig,
    *,
    seed_names: frozenset[str] = frozenset(),
    sleep: Callable[[float], None] = _time.sleep,
) -> SweepOutcome:
    """Walk date windows from ``config.start`` back to ``config.floor``.

    A window whose true match count exceeds the client's cap is split in
    half and both halves are re-queried, down to ``min_window_days`` (a
    saturated minimum-width window is accepted as-is and noted).  Rate limits
    back off exponentially; if a window stays rate-limited past
    ``max_attempts`` the sweep returns what it has, flagged as partial.

    The resulting set is independent of query order: records are keyed by
    project name and sorted before return.
    """
    if config.floor > config.start:
        raise ValueError("sweep floor must not be after its start date")
    stats = SweepStats()
    found: dict[str, ProjectRecord] = {}

    # Stack of [newest, oldest] windows still to query, newest first.
    pending: list[tuple[date, date]] = []
    cursor = config.start
    while cursor >= config.floor:
        older = max(config.floor, cursor - timedelta(days=config.window_days - 1))
        pending.append((older, cursor))
        cursor = older - timedelta(days=1)

    while pending:
        after, before = pending.pop(0)
        result = _query_with_backoff(client, after, before, config, stats, sleep)
        if result is None:
            stats.aborted_rate_limited = True
            break
        stats.windows_queried += 1
        width = (before - after).days + 1
        if result.total_count > client.cap and width > config.min_window_days:
            mid = after + timedelta(days=(width // 2) - 1)
            stats.windows_split += 1
            pending.insert(0, (mid + timedelta(days=1), before))
            pending.insert(1, (after, mid))
            continue
        if result.total_count > client.cap:
            log.warning(
                "window %s..%s saturated at minimum width; accepting %d of %d",
                after,
                before,
                len(result.items),
                result.total_count,
            )
            stats.saturated_at_min_window.append((after, before))
        for item in result.items:
            if item.full_name in seed_names:
                stats.seed_overlap_skipped += 1
                continue
            if item.full_name in found:
                stats.duplicates_skipped += 1
                continue
            found[item.full_name] = ProjectRecord(
                full_name=item.full_name,
                clone_url=item.clone_url,
                source=ProjectSource.API_SEARCH,
                in_csn=False,
                has_root_pom=item.has_root_pom,
                last_commit_date=item.last_commit_date,
            )

    projects = [found[name] for name in sorted(found)]
    return SweepOutcome(projects=projects, stats=stats)


def _query_with_backoff(
    client: SearchClient,
    after: date,
    before: date,
    config: SweepConfig,
    stats: SweepStats,
    sleep: Callable[[float], None],
) -> Optional[SearchResult]:
    delay = config.backoff_base
    for attempt in range(config.max_attempts):
        try:
            return client.search(after, before)
        except RateLimited as exc:
            stats.rate_limit_retries += 1
            wait = max(delay, exc.retry_after)
            log.info(
                "rate limited on %s..%s (attempt %d); backing off %.1fs",
                after,
                before,
                attempt + 1,
                wait,
            )
            sleep(wait)
            delay *= 2
    log.warning("window %s..%s still rate-limited; returning partial results", after, before)
    return None


class GitHubSearchClient(SearchClient):
    """REST client for the live repository search endpoint.

    Queries Java + Maven projects by pushed-date range.  Not exercised by the
    test suite (which runs offline); kept thin so the fixture client stays
    behaviorally equivalent.
    """

    def __init__(
        self,
        token: Optional[str] = None,
        api_root: str = "https://api.github.com",
        per_page: int = 100,
        session=None,
    ):
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._api_root = api_root.rstrip("/")
        self._headers = {"Accept": "application/vnd.github+json"}
        if token:
            self._headers["Authorization"] = f"Bearer {token}"
        self._per_page = per_page

    def search(self, pushed_after: date, pushed_before: date) -> SearchResult:
        query = (
            f"language:Java topic:maven "
            f"pushed:{pushed_after.isoformat()}..{pushed_before.isoformat()}"
        )
        items: list[ProjectRecord] = []
        total = 0
        page = 1
        while len(items) < self.cap:
            resp = self._session.get(
                f"{self._api_root}/search/repositories",
                params={
                    "q": query,
                    "sort": "updated",
                    "order": "desc",
                    "per_page": self._per_page,
                    "page": page,
                },
                headers=self._headers,
                timeout=30,
            )
            if resp.status_code in (403, 429):
                raise RateLimited(float(resp.headers.get("Retry-After", 60)))
            resp.raise_for_status()
            payload = resp.json()
            total = payload.get("total_count", 0)
            batch = payload.get("items", [])
            if not batch:
                break
            for item in batch:
                pushed = item.get("pushed_at", "")[:10]
                items.append(
                    ProjectRecord(
                        full_name=item["full_name"],
                        clone_url=item.get("clone_url", ""),
                        source=ProjectSource.API_SEARCH,
                        last_commit_date=date.fromisoformat(pushed) if pushed else None,
                    )
                )
            page += 1
        return SearchResult(items=items[: self.cap], total_count=total)
