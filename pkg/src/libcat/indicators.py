"""The holdings indicator family and the standard reports.

Definitions, over a snapshot restricted by an optional library filter:

  libcitations   distinct libraries holding any edition of the target
  CI             sum of member titles' libcitations for an aggregate
  CIR            CI per title (the aggregate's mean inclusions)
  RCIR           CIR of the unit over CIR of a benchmark unit
  DR             CI over (titles x catalogs), the realized fraction of
                 possible inclusions, always within [0, 1]
  CNLS           a book's libcitations over the mean libcitations of its
                 classification class (the book itself included)
  rank in class  competition rank by descending libcitations; ties share
                 the best position (counts 9,7,7,2 rank 1,2,2,4)

Author profiles aggregate over work clusters: works is the number of
clusters touching the author's records, publications counts all member
editions of those clusters, holdings sums the clusters' libcitations.

Every function here is pure: it filters, counts, and returns. Rendering
and rounding live elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

from .errors import (
    AuthorNotFoundError,
    NoClassError,
    UndefinedRateError,
    UnknownTargetError,
)
from .identifiers import WorkCluster, cluster_works, fold_text
from .model import (
    AggregateUnit,
    BookRecord,
    CatalogSnapshot,
    LibraryFilter,
    apply_filter,
)

Target = Union[str, BookRecord, WorkCluster, AggregateUnit, Iterable[str]]


def _member_ids(target: Target, snapshot: CatalogSnapshot) -> frozenset[str]:
    if isinstance(target, BookRecord):
        ids = frozenset({target.record_id})
    elif isinstance(target, str):
        ids = frozenset({target})
    elif isinstance(target, (WorkCluster, AggregateUnit)):
        ids = target.member_record_ids
    else:
        ids = frozenset(target)
    for record_id in ids:
        if snapshot.get_record(record_id) is None:
            raise UnknownTargetError(f"no such record in snapshot: {record_id}")
    return ids


def libcitations(
    target: Target,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> int:
    """Distinct libraries holding any member edition of the target."""
    filtered = apply_filter(snapshot, library_filter)
    holders: set[str] = set()
    for record_id in _member_ids(target, filtered):
        holders.update(filtered.holders_of(record_id))
    return len(holders)


def catalog_inclusions(
    unit: AggregateUnit,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> int:
    """Total inclusions over the unit's titles: each title counts its own."""
    filtered = apply_filter(snapshot, library_filter)
    members = _member_ids(unit, filtered)
    return sum(filtered.libcitation_count(record_id) for record_id in members)


def cir(
    unit: AggregateUnit,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> float:
    """Mean inclusions per distinct member title."""
    filtered = apply_filter(snapshot, library_filter)
    members = _member_ids(unit, filtered)
    if not members:
        raise UndefinedRateError(f"unit {unit.unit_id} has no titles")
    total = sum(filtered.libcitation_count(record_id) for record_id in members)
    return total / len(members)


def rcir(
    unit: AggregateUnit,
    benchmark: AggregateUnit,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> float:
    """Unit CIR relative to a benchmark's; above 1 means above that average."""
    benchmark_cir = cir(benchmark, snapshot, library_filter)
    if benchmark_cir == 0:
        raise UndefinedRateError(
            f"benchmark {benchmark.unit_id} has zero inclusions per title"
        )
    return cir(unit, snapshot, library_filter) / benchmark_cir


def diffusion_rate(
    unit: AggregateUnit,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> float:
    """Realized fraction of possible inclusions: CI / (titles x catalogs)."""
    filtered = apply_filter(snapshot, library_filter)
    members = _member_ids(unit, filtered)
    if not members:
        raise UndefinedRateError(f"unit {unit.unit_id} has no titles")
    if filtered.n_libraries == 0:
        raise UndefinedRateError("no catalogs remain after filtering")
    total = sum(filtered.libcitation_count(record_id) for record_id in members)
    return total / (len(members) * filtered.n_libraries)


def _class_counts(filtered: CatalogSnapshot, lc_class: str) -> dict[str, int]:
    key = ("class_counts", lc_class)
    cached = filtered.memo.get(key)
    if cached is None:
        cached = {
            record.record_id: filtered.libcitation_count(record.record_id)
            for record in filtered.records_in_class(lc_class)
        }
        filtered.memo[key] = cached
    return cached


def _resolve_record(target: "str | BookRecord", snapshot: CatalogSnapshot) -> BookRecord:
    record_id = target.record_id if isinstance(target, BookRecord) else target
    record = snapshot.get_record(record_id)
    if record is None:
        raise UnknownTargetError(f"no such record in snapshot: {record_id}")
    return record


def cnls(
    record: "str | BookRecord",
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> float:
    """Libcitations over the mean of the record's classification class.

    The mean includes the record itself, so a singleton class scores 1.
    """
    filtered = apply_filter(snapshot, library_filter)
    resolved = _resolve_record(record, filtered)
    if resolved.lc_class is None:
        raise NoClassError(f"record {resolved.record_id} has no classification")
    counts = _class_counts(filtered, resolved.lc_class)
    mean = sum(counts.values()) / len(counts)
    if mean == 0:
        raise UndefinedRateError(
            f"class {resolved.lc_class} has zero mean libcitations"
        )
    return counts[resolved.record_id] / mean


def rank_in_class(
    record: "str | BookRecord",
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> tuple[int, int]:
    """(competition rank by descending libcitations, class size)."""
    filtered = apply_filter(snapshot, library_filter)
    resolved = _resolve_record(record, filtered)
    if resolved.lc_class is None:
        raise NoClassError(f"record {resolved.record_id} has no classification")
    counts = _class_counts(filtered, resolved.lc_class)
    mine = counts[resolved.record_id]
    rank = 1 + sum(1 for count in counts.values() if count > mine)
    return rank, len(counts)


# --- aggregate reports -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class BookIndicators:
    record_id: str
    libcitations: int
    cnls: Optional[float]
    rank_in_class: Optional[tuple[int, int]]


@dataclass(frozen=True, slots=True)
class IndicatorReport:
    unit_id: str
    label: str
    n_titles: int
    ci: int
    cir: float
    rcir: Optional[float]
    dr: float
    per_book: tuple[BookIndicators, ...]


def unit_report(
    unit: AggregateUnit,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
    benchmark: Optional[AggregateUnit] = None,
) -> IndicatorReport:
    """All aggregate indicators for one unit, plus its per-book breakdown.

    Per-book CNLS and rank are left blank where undefined (no class, or
    an all-zero class); the aggregate ratios raise instead, since a unit
    with no titles or no catalogs has nothing to report.
    """
    filtered = apply_filter(snapshot, library_filter)
    members = sorted(_member_ids(unit, filtered))
    ci_value = sum(filtered.libcitation_count(record_id) for record_id in members)
    cir_value = ci_value / len(members)
    if filtered.n_libraries == 0:
        raise UndefinedRateError("no catalogs remain after filtering")
    dr_value = ci_value / (len(members) * filtered.n_libraries)
    rcir_value: Optional[float] = None
    if benchmark is not None:
        benchmark_cir = cir(benchmark, snapshot, library_filter)
        if benchmark_cir == 0:
            raise UndefinedRateError(
                f"benchmark {benchmark.unit_id} has zero inclusions per title"
            )
        rcir_value = cir_value / benchmark_cir
    per_book = []
    for record_id in members:
        try:
            cnls_value: Optional[float] = cnls(record_id, filtered)
        except (NoClassError, UndefinedRateError):
            cnls_value = None
        try:
            rank: Optional[tuple[int, int]] = rank_in_class(record_id, filtered)
        except NoClassError:
            rank = None
        per_book.append(
            BookIndicators(record_id, filtered.libcitation_count(record_id), cnls_value, rank)
        )
    return IndicatorReport(
        unit_id=unit.unit_id,
        label=unit.label,
        n_titles=len(members),
        ci=ci_value,
        cir=cir_value,
        rcir=rcir_value,
        dr=dr_value,
        per_book=tuple(per_book),
    )


@dataclass(frozen=True, slots=True)
class AuthorProfile:
    heading: str
    works: int
    publications: int
    library_holdings: int


def author_profile(
    heading: str,
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> AuthorProfile:
    """Works, editions, and summed holdings for one contributor heading.

    Matching folds case, punctuation, and diacritics, the same folding
    the work key uses; spelling variants beyond that are out of scope.
    A cluster counts as the author's when any member record names the
    heading among its contributors, in any role.
    """
    folded = fold_text(heading)
    if not folded:
        raise AuthorNotFoundError(f"heading folds to nothing: {heading!r}")
    matching = {
        record.record_id
        for record in snapshot.records
        if any(fold_text(c.name) == folded for c in record.contributors)
    }
    if not matching:
        raise AuthorNotFoundError(f"no record names contributor {heading!r}")
    filtered = apply_filter(snapshot, library_filter)
    works = 0
    publications = 0
    holdings = 0
    for cluster in cluster_works(snapshot):
        if cluster.member_record_ids.isdisjoint(matching):
            continue
        works += 1
        publications += len(cluster.member_record_ids)
        holders: set[str] = set()
        for record_id in cluster.member_record_ids:
            holders.update(filtered.holders_of(record_id))
        holdings += len(holders)
    return AuthorProfile(heading, works, publications, holdings)


def author_profiles(
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> list[AuthorProfile]:
    """Profiles for every contributor heading, ranked by holdings.

    Headings that fold identically are one author; the displayed form is
    the lexicographically smallest variant seen. Order is descending
    holdings, then heading, so equal inputs render identically.
    """
    display: dict[str, str] = {}
    for record in snapshot.records:
        for contributor in record.contributors:
            folded = fold_text(contributor.name)
            if not folded:
                continue
            current = display.get(folded)
            if current is None or contributor.name < current:
                display[folded] = contributor.name
    profiles = [
        author_profile(name, snapshot, library_filter)
        for name in display.values()
    ]
    profiles.sort(key=lambda p: (-p.library_holdings, p.heading))
    return profiles


@dataclass(frozen=True, slots=True)
class CompositionRow:
    country: str
    academic: int
    public: int
    other: int

    @property
    def total(self) -> int:
        return self.academic + self.public + self.other


@dataclass(frozen=True, slots=True)
class CompositionReport:
    """Libraries per country broken down by kind, with column totals."""

    rows: tuple[CompositionRow, ...]
    total_academic: int
    total_public: int
    total_other: int

    @property
    def total(self) -> int:
        return self.total_academic + self.total_public + self.total_other


def composition_report(
    snapshot: CatalogSnapshot,
    library_filter: Optional[LibraryFilter] = None,
) -> CompositionReport:
    """Count the library population by country and kind (rows sorted by country)."""
    filtered = apply_filter(snapshot, library_filter)
    by_country: dict[str, dict[str, int]] = {}
    for library in filtered.libraries:
        bucket = by_country.setdefault(
            library.country, {"academic": 0, "public": 0, "other": 0}
        )
        bucket[library.kind] += 1
    rows = tuple(
        CompositionRow(
            country,
            by_country[country]["academic"],
            by_country[country]["public"],
            by_country[country]["other"],
        )
        for country in sorted(by_country)
    )
    return CompositionReport(
        rows=rows,
        total_academic=sum(r.academic for r in rows),
        total_public=sum(r.public for r in rows),
        total_other=sum(r.other for r in rows),
    )


@dataclass(frozen=True, slots=True)
class CoverageRow:
    metric: str
    covered: int
    total: int


MetricExtractor = Callable[[BookRecord, CatalogSnapshot], Optional[float]]


def default_metrics() -> "list[tuple[str, MetricExtractor]]":
    return [
        ("libcitations", lambda record, snap: snap.libcitation_count(record.record_id)),
        ("citations", lambda record, snap: record.citations),
    ]


def coverage_report(
    snapshot: CatalogSnapshot,
    metrics: "Optional[Sequence[tuple[str, MetricExtractor]]]" = None,
    library_filter: Optional[LibraryFilter] = None,
) -> tuple[CoverageRow, ...]:
    """Share of records with a nonzero value, per metric.

    A record with no value for a metric counts as uncovered; the
    denominator is always the full record count.
    """
    filtered = apply_filter(snapshot, library_filter)
    if filtered.n_records == 0:
        raise UndefinedRateError("coverage is undefined over zero records")
    if metrics is None:
        metrics = default_metrics()
    rows = []
    for name, extract in metrics:
        covered = sum(
            1
            for record in filtered.records
            if (value := extract(record, filtered)) is not None and value > 0
        )
        rows.append(CoverageRow(name, covered, filtered.n_records))
    return tuple(rows)
