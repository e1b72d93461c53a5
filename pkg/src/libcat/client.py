"""HTTP client for a union-catalog locations API, with a daily quota guard.

The remote service answers four lookup paths:

    /content/libraries/{OCLC_Number}
    /content/libraries/isbn/{ISBN}
    /content/libraries/issn/{ISSN}
    /content/libraries/sn/{Standard_Number}

Responses arrive as JSON or as an XML variant of the same shape, chosen
by the server's Content-Type:

    {"record": {"title": …, "oclc": …, "isbns": […]},
     "locations": [{"name": …, "country": …, "institution_id": …}]}

    <locationResponse>
      <record><title>…</title><oclc>…</oclc><isbn>…</isbn></record>
      <locations><location><name>…</name><country>…</country>
        <institutionId>…</institutionId></location></locations>
    </locationResponse>

Every physical HTTP request, retries and 404s included, costs one unit
of a daily budget (default 50 000 per UTC day). The budget is checked
and charged before the socket is touched, and can persist to a state
file so separate process runs share one day's allowance.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import threading
import time
import urllib.parse
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import requests

from .errors import QuotaExceededError, QuotaStateError, TransportError
from .identifiers import normalize_isbn
from .model import BookRecord, CatalogSnapshot, Holding, LibraryOrg, build_snapshot

DEFAULT_QUOTA_LIMIT = 50_000
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_SECONDS = 0.5


@dataclass(frozen=True, slots=True)
class Location:
    """One holding institution as reported by the locations API."""

    name: str
    country: str
    institution_id: str


@dataclass(frozen=True, slots=True)
class MatchedRecord:
    """The bibliographic fragment a lookup matched, as far as the API tells."""

    title: Optional[str] = None
    oclc: Optional[int] = None
    isbns: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class LocationResponse:
    matched_record: Optional[MatchedRecord]
    locations: tuple[Location, ...]

    @property
    def is_empty(self) -> bool:
        return self.matched_record is None and not self.locations


EMPTY_RESPONSE = LocationResponse(matched_record=None, locations=())


@dataclass(frozen=True, slots=True)
class QuotaState:
    """Point-in-time view of the daily consultation budget."""

    day: dt.date
    used: int
    limit: int

    @property
    def remaining(self) -> int:
        return max(0, self.limit - self.used)


def _utc_today() -> dt.date:
    return dt.datetime.now(dt.timezone.utc).date()


class QuotaStore:
    """Daily request budget with optional cross-process persistence.

    consume() charges before any request is issued; once the limit is
    reached it raises without side effects. The counter resets when the
    UTC day changes. Accounting is serialized under one lock, so
    concurrent lookups never overshoot the limit.
    """

    def __init__(
        self,
        limit: int = DEFAULT_QUOTA_LIMIT,
        state_path: "str | os.PathLike | None" = None,
        today: Optional[Callable[[], dt.date]] = None,
    ) -> None:
        if limit < 0:
            raise ValueError("quota limit must be non-negative")
        self.limit = limit
        self.state_path = os.fspath(state_path) if state_path is not None else None
        self._today = today if today is not None else _utc_today
        self._lock = threading.Lock()
        self._day, self._used = self._load()

    def _load(self) -> tuple[dt.date, int]:
        if self.state_path is None or not os.path.exists(self.state_path):
            return self._today(), 0
        try:
            with open(self.state_path, encoding="utf-8") as fh:
                obj = json.load(fh)
            day = dt.date.fromisoformat(obj["day"])
            used = int(obj["used"])
            if used < 0:
                raise ValueError("negative usage")
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise QuotaStateError(
                f"unreadable quota state file {self.state_path}: {exc}"
            ) from exc
        return day, used

    def _persist_locked(self) -> None:
        if self.state_path is None:
            return
        tmp = self.state_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"day": self._day.isoformat(), "used": self._used}, fh)
        os.replace(tmp, self.state_path)

    def _roll_locked(self) -> None:
        today = self._today()
        if today != self._day:
            self._day = today
            self._used = 0

    def consume(self, units: int = 1) -> int:
        """Charge `units` requests; returns the remaining budget.

        Raises QuotaExceededError, charging nothing, when the budget
        cannot cover the charge.
        """
        if units < 1:
            raise ValueError("units must be positive")
        with self._lock:
            self._roll_locked()
            if self._used + units > self.limit:
                raise QuotaExceededError(
                    f"daily limit of {self.limit} consultations is exhausted "
                    f"({self._used} used)"
                )
            self._used += units
            self._persist_locked()
            return self.limit - self._used

    def state(self) -> QuotaState:
        with self._lock:
            self._roll_locked()
            return QuotaState(self._day, self._used, self.limit)


def _text(element: Optional[ET.Element]) -> Optional[str]:
    if element is None or element.text is None:
        return None
    stripped = element.text.strip()
    return stripped if stripped else None


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _dedupe_locations(raw: Iterable[Location]) -> tuple[Location, ...]:
    seen: dict[str, Location] = {}
    for loc in raw:
        seen.setdefault(loc.institution_id, loc)
    return tuple(seen.values())


def _response_from_json(body: bytes) -> LocationResponse:
    try:
        obj = json.loads(body.decode("utf-8"))
        record = None
        fragment = obj.get("record")
        if fragment is not None:
            record = MatchedRecord(
                title=fragment.get("title"),
                oclc=fragment.get("oclc"),
                isbns=tuple(fragment.get("isbns", ())),
            )
        locations = [
            Location(
                name=item["name"],
                country=item["country"],
                institution_id=str(item["institution_id"]),
            )
            for item in obj.get("locations", ())
        ]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise TransportError(f"malformed JSON location response: {exc}") from exc
    return LocationResponse(record, _dedupe_locations(locations))


def _response_from_xml(body: bytes) -> LocationResponse:
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise TransportError(f"malformed XML location response: {exc}") from exc
    record = None
    locations: list[Location] = []
    for element in root.iter():
        name = _local(element.tag)
        if name == "record":
            oclc_text = _text(element.find("oclc"))
            record = MatchedRecord(
                title=_text(element.find("title")),
                oclc=int(oclc_text) if oclc_text else None,
                isbns=tuple(
                    t for t in (_text(e) for e in element.findall("isbn")) if t
                ),
            )
        elif name == "location":
            loc_name = _text(element.find("name"))
            country = _text(element.find("country"))
            inst = _text(element.find("institutionId"))
            if loc_name is None or country is None or inst is None:
                raise TransportError("XML location is missing a required field")
            locations.append(Location(loc_name, country, inst))
    return LocationResponse(record, _dedupe_locations(locations))


class CatalogClient:
    """Budgeted, retrying client for the four location lookups."""

    def __init__(
        self,
        base_url: str,
        quota: Optional[QuotaStore] = None,
        api_key: Optional[str] = None,
        api_key_header: str = "X-API-Key",
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF_SECONDS,
        timeout: float = 10.0,
        parallelism: int = 1,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not base_url:
            raise ValueError("base_url is required")
        if retries < 1:
            raise ValueError("retries must be at least 1")
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        self.base_url = base_url.rstrip("/")
        self.quota = quota if quota is not None else QuotaStore()
        self.api_key = api_key
        self.api_key_header = api_key_header
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.parallelism = parallelism
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep

    def _get(
        self, path: str, params: Optional[Mapping[str, str]] = None
    ) -> Optional[tuple[str, bytes]]:
        """One logical lookup: quota-charged attempts with backoff.

        Returns (content type, body) on 200, None on 404. Non-404 client
        errors fail immediately; connection errors and 5xx are retried.
        """
        url = self.base_url + path
        headers = {"Accept": "application/json"}
        if self.api_key:
            headers[self.api_key_header] = self.api_key
        failure: Optional[TransportError] = None
        for attempt in range(self.retries):
            self.quota.consume()
            try:
                response = self._session.get(
                    url, params=dict(params) if params else None,
                    headers=headers, timeout=self.timeout,
                )
            except requests.RequestException as exc:
                failure = TransportError(f"request failed for {path}: {exc}")
            else:
                if response.status_code == 200:
                    return response.headers.get("Content-Type", ""), response.content
                if response.status_code == 404:
                    return None
                if 500 <= response.status_code < 600:
                    failure = TransportError(
                        f"server error {response.status_code} for {path}"
                    )
                else:
                    raise TransportError(
                        f"unexpected status {response.status_code} for {path}"
                    )
            if attempt + 1 < self.retries:
                self._sleep(self.backoff * (2 ** attempt))
        assert failure is not None
        raise failure

    def _lookup(
        self, path: str, geo: Optional[Mapping[str, str]]
    ) -> LocationResponse:
        result = self._get(path, params=geo)
        if result is None:
            return EMPTY_RESPONSE
        content_type, body = result
        if "xml" in content_type.lower():
            return _response_from_xml(body)
        return _response_from_json(body)

    def get_by_oclc_number(
        self, number: int, geo: Optional[Mapping[str, str]] = None
    ) -> LocationResponse:
        if not isinstance(number, int) or number <= 0:
            raise ValueError(f"OCLC number must be a positive integer: {number!r}")
        return self._lookup(f"/content/libraries/{number}", geo)

    def get_by_isbn(
        self, isbn, geo: Optional[Mapping[str, str]] = None
    ) -> LocationResponse:
        digits = isbn.digits if hasattr(isbn, "digits") else normalize_isbn(str(isbn)).digits
        return self._lookup(f"/content/libraries/isbn/{digits}", geo)

    def get_by_issn(
        self, issn: str, geo: Optional[Mapping[str, str]] = None
    ) -> LocationResponse:
        issn = issn.strip()
        if not issn:
            raise ValueError("ISSN must be non-empty")
        return self._lookup(
            f"/content/libraries/issn/{urllib.parse.quote(issn, safe='')}", geo
        )

    def get_by_standard_number(
        self, sn: str, geo: Optional[Mapping[str, str]] = None
    ) -> LocationResponse:
        sn = sn.strip()
        if not sn:
            raise ValueError("standard number must be non-empty")
        return self._lookup(
            f"/content/libraries/sn/{urllib.parse.quote(sn, safe='')}", geo
        )


@dataclass(frozen=True, slots=True)
class HarvestResult:
    """Outcome of harvesting holdings for a batch of records.

    `delta` bundles the completed records with the libraries and
    holdings discovered for them, ready to merge into a dataset. A
    record appears in `skipped` when it was never looked up (no usable
    identifier, or the budget ran out first) and in `errors` when its
    lookup failed after retries.
    """

    queried: tuple[str, ...]
    skipped: tuple[tuple[str, str], ...]
    errors: tuple[tuple[str, str], ...]
    libraries: tuple[LibraryOrg, ...]
    holdings: tuple[Holding, ...]
    quota_exhausted: bool
    delta: CatalogSnapshot = field(compare=False)


def _lookup_plan(record: BookRecord) -> Optional[tuple[str, object]]:
    if record.oclc is not None:
        return ("oclc", record.oclc)
    if record.isbns:
        return ("isbn", record.isbns[0])
    return None


def harvest(
    client: CatalogClient,
    records: Sequence[BookRecord],
    parallelism: Optional[int] = None,
) -> HarvestResult:
    """Fetch holders for each record, by OCLC number when present else ISBN.

    Transport failures are collected per record and the rest of the
    batch proceeds; quota exhaustion stops the batch and the result
    carries what was gathered up to that point.
    """
    workers = parallelism if parallelism is not None else client.parallelism
    plans: list[tuple[BookRecord, Optional[tuple[str, object]]]] = [
        (record, _lookup_plan(record)) for record in records
    ]

    stop = threading.Event()

    def run_one(plan: Optional[tuple[str, object]]) -> Optional[LocationResponse]:
        if plan is None:
            return None
        if stop.is_set():
            raise QuotaExceededError("budget spent earlier in this batch")
        kind, value = plan
        try:
            if kind == "oclc":
                return client.get_by_oclc_number(value)  # type: ignore[arg-type]
            return client.get_by_isbn(value)
        except QuotaExceededError:
            stop.set()
            raise

    outcomes: list[object] = [None] * len(plans)
    if workers <= 1:
        for index, (_, plan) in enumerate(plans):
            try:
                outcomes[index] = run_one(plan)
            except (QuotaExceededError, TransportError) as exc:
                outcomes[index] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_one, plan) for _, plan in plans]
            for index, future in enumerate(futures):
                try:
                    outcomes[index] = future.result()
                except (QuotaExceededError, TransportError) as exc:
                    outcomes[index] = exc

    queried: list[str] = []
    skipped: list[tuple[str, str]] = []
    errors: list[tuple[str, str]] = []
    libraries: dict[str, LibraryOrg] = {}
    holdings: dict[tuple[str, str], Holding] = {}
    completed_records: list[BookRecord] = []
    quota_exhausted = False
    for (record, plan), outcome in zip(plans, outcomes):
        if plan is None:
            skipped.append((record.record_id, "no OCLC number or ISBN"))
            continue
        if isinstance(outcome, QuotaExceededError):
            quota_exhausted = True
            skipped.append((record.record_id, "quota exhausted"))
            continue
        if isinstance(outcome, TransportError):
            errors.append((record.record_id, str(outcome)))
            continue
        assert isinstance(outcome, LocationResponse)
        queried.append(record.record_id)
        completed_records.append(record)
        for loc in outcome.locations:
            libraries.setdefault(
                loc.institution_id,
                LibraryOrg(
                    library_id=loc.institution_id,
                    name=loc.name,
                    country=loc.country,
                    kind="other",
                ),
            )
            holdings.setdefault(
                (record.record_id, loc.institution_id),
                Holding(record.record_id, loc.institution_id),
            )
    delta = build_snapshot(completed_records, libraries.values(), holdings.values())
    return HarvestResult(
        queried=tuple(queried),
        skipped=tuple(skipped),
        errors=tuple(errors),
        libraries=tuple(libraries[k] for k in sorted(libraries)),
        holdings=tuple(holdings[k] for k in sorted(holdings)),
        quota_exhausted=quota_exhausted,
        delta=delta,
    )
