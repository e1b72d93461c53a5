"""Parsing external record formats and persisting the canonical dataset.

Two XML inputs are supported, a Dublin Core flavor and MARC-XML, reading
only the narrow field subset the indicators need; everything else in the
source is ignored. Records that cannot yield a title are rejected per
record, not per document, and the parse report reconciles exactly:
accepted + rejected = records encountered.

The canonical on-disk form is line-delimited JSON, one entity per line,
tagged "R" (record), "L" (library), "H" (holding). Optional fields are
omitted when absent, never written as null. Saves are deterministic
(sorted by id) and atomic (write-then-rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .errors import DatasetError, IsbnError, ParseError
from .identifiers import looks_like_isbn, normalize_isbn, parse_oclc
from .model import (
    BookRecord,
    CatalogSnapshot,
    Contributor,
    Holding,
    Isbn,
    LibraryOrg,
    build_snapshot,
)

_YEAR = re.compile(r"\d{4}")
_ISBD_TRAIL = " /:;,.="


@dataclass
class ParseReport:
    """Per-document tally of what was kept and what was dropped, and why."""

    accepted: int = 0
    rejected: int = 0
    rejections: list[tuple[str, str]] = field(default_factory=list)

    def reject(self, locator: str, reason: str) -> None:
        self.rejected += 1
        self.rejections.append((locator, reason))


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1].lower()


def _parse_xml(document: "str | bytes") -> ET.Element:
    try:
        return ET.fromstring(document)
    except (ET.ParseError, ValueError) as exc:
        raise ParseError(f"not well-formed XML: {exc}") from exc


def _record_id_for(fields: dict) -> str:
    digest = hashlib.sha1(
        json.dumps(fields, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()
    return "r" + digest[:12]


def _build_record(
    title: str,
    contributors: list[tuple[str, str]],
    isbns: list[Isbn],
    oclc: Optional[int],
    year: Optional[int],
    language: Optional[str],
    lc_class: Optional[str],
) -> BookRecord:
    fields = {
        "title": title,
        "contributors": contributors,
        "isbns": sorted({i.digits for i in isbns}),
        "oclc": oclc,
        "year": year,
        "language": language,
        "lc": lc_class,
    }
    return BookRecord(
        record_id=_record_id_for(fields),
        title=title,
        oclc=oclc,
        isbns=tuple(isbns),
        contributors=tuple(Contributor(name, role) for name, role in contributors),
        year=year,
        language=language,
        lc_class=lc_class,
    )


def _finish(
    parsed: list[tuple[str, BookRecord]], report: ParseReport
) -> tuple[list[BookRecord], ParseReport]:
    records: list[BookRecord] = []
    seen: dict[str, str] = {}
    for locator, record in parsed:
        earlier = seen.get(record.record_id)
        if earlier is not None:
            report.reject(locator, f"duplicate of {earlier}")
            continue
        seen[record.record_id] = locator
        records.append(record)
        report.accepted += 1
    return records, report


# --- Dublin Core -------------------------------------------------------------

def _sniff_identifier(
    text: str, isbns: list[Isbn], oclc_holder: list[int]
) -> None:
    """Classify one dc:identifier value as ISBN, OCLC number, or noise."""
    value = text.strip()
    upper = value.upper()
    if upper.startswith("ISBN"):
        candidate = value[4:].lstrip(" :=")
        try:
            isbns.append(normalize_isbn(candidate))
        except IsbnError:
            pass
        return
    if value.startswith("(OCoLC)"):
        number = parse_oclc(value)
        if number is not None and not oclc_holder:
            oclc_holder.append(number)
        return
    if upper.startswith("OCLC"):
        number = parse_oclc(value[4:].lstrip(" :="))
        if number is not None and not oclc_holder:
            oclc_holder.append(number)
        return
    if looks_like_isbn(value):
        try:
            isbns.append(normalize_isbn(value))
        except IsbnError:
            pass


def parse_dublin_core(document: "str | bytes") -> tuple[list[BookRecord], ParseReport]:
    """Parse a Dublin Core XML document into book records.

    Element matching is by local name, so any dc namespace prefix works.
    Each child of the root is one record; a root that itself carries a
    title element is treated as a single record.
    """
    root = _parse_xml(document)
    children = list(root)
    if any(_local_name(el.tag) == "title" for el in root):
        nodes = [root]
    else:
        nodes = children

    report = ParseReport()
    parsed: list[tuple[str, BookRecord]] = []
    for index, node in enumerate(nodes, start=1):
        locator = f"record {index}"
        title: Optional[str] = None
        contributors: list[tuple[str, str]] = []
        isbns: list[Isbn] = []
        oclc_holder: list[int] = []
        year: Optional[int] = None
        language: Optional[str] = None
        lc_class: Optional[str] = None
        for el in node.iter():
            name = _local_name(el.tag)
            text = (el.text or "").strip()
            if not text:
                continue
            if name == "title" and title is None:
                title = text
            elif name == "creator":
                contributors.append((text, "author"))
            elif name == "contributor":
                contributors.append((text, "other"))
            elif name == "identifier":
                _sniff_identifier(text, isbns, oclc_holder)
            elif name == "date" and year is None:
                match = _YEAR.search(text)
                if match:
                    year = int(match.group())
            elif name == "language" and language is None:
                language = text
            elif name == "subject" and lc_class is None:
                lc_class = text
        if not title:
            report.reject(locator, "missing title")
            continue
        parsed.append(
            (
                locator,
                _build_record(
                    title,
                    contributors,
                    isbns,
                    oclc_holder[0] if oclc_holder else None,
                    year,
                    language,
                    lc_class,
                ),
            )
        )
    return _finish(parsed, report)


# --- MARC-XML ----------------------------------------------------------------

def _marc_subfields(record_node: ET.Element) -> dict[tuple[str, str], list[str]]:
    """Collect (datafield tag, subfield code) -> values, in document order."""
    out: dict[tuple[str, str], list[str]] = {}
    for df in record_node.iter():
        if _local_name(df.tag) != "datafield":
            continue
        tag = df.get("tag", "")
        for sf in df:
            if _local_name(sf.tag) != "subfield":
                continue
            code = sf.get("code", "")
            text = (sf.text or "").strip()
            if text:
                out.setdefault((tag, code), []).append(text)
    return out


def _marc_controlfields(record_node: ET.Element) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for cf in record_node.iter():
        if _local_name(cf.tag) != "controlfield":
            continue
        text = (cf.text or "").strip()
        if text:
            out.setdefault(cf.get("tag", ""), []).append(text)
    return out


def parse_marc_xml(document: "str | bytes") -> tuple[list[BookRecord], ParseReport]:
    """Parse MARC-XML into book records, reading the minimal field subset.

    245$a is the title (trailing ISBD punctuation trimmed), 100$a/700$a
    are contributors, 020$a holds ISBNs (first token; invalid ones are
    skipped), 001/035 yield an OCLC number only when prefixed "(OCoLC)",
    008 positions 7-10 give the year, 050$a the classification heading.
    """
    root = _parse_xml(document)
    if _local_name(root.tag) == "record":
        nodes = [root]
    else:
        nodes = [el for el in root.iter() if _local_name(el.tag) == "record"]

    report = ParseReport()
    parsed: list[tuple[str, BookRecord]] = []
    for index, node in enumerate(nodes, start=1):
        locator = f"record {index}"
        sub = _marc_subfields(node)
        control = _marc_controlfields(node)

        title = None
        for value in sub.get(("245", "a"), []):
            trimmed = value.rstrip(_ISBD_TRAIL).strip()
            if trimmed:
                title = trimmed
                break
        if not title:
            report.reject(locator, "missing title")
            continue

        contributors: list[tuple[str, str]] = []
        for tag, role in (("100", "author"), ("700", "other")):
            for value in sub.get((tag, "a"), []):
                name = value.rstrip(",. ").strip()
                if name:
                    contributors.append((name, role))

        isbns: list[Isbn] = []
        for value in sub.get(("020", "a"), []):
            token = value.split()[0] if value.split() else ""
            try:
                isbns.append(normalize_isbn(token))
            except IsbnError:
                continue

        oclc: Optional[int] = None
        for value in control.get("001", []) + sub.get(("035", "a"), []):
            if value.startswith("(OCoLC)"):
                oclc = parse_oclc(value)
                if oclc is not None:
                    break

        year: Optional[int] = None
        for value in control.get("008", []):
            chunk = value[7:11]
            if len(chunk) == 4 and chunk.isdigit():
                year = int(chunk)
                break

        lc_values = sub.get(("050", "a"), [])
        lc_class = lc_values[0].strip() if lc_values else None
        parsed.append(
            (
                locator,
                _build_record(title, contributors, isbns, oclc, year, None, lc_class),
            )
        )
    return _finish(parsed, report)


# --- canonical dataset -------------------------------------------------------

def _record_line(record: BookRecord) -> dict:
    line: dict = {"t": "R", "id": record.record_id}
    if record.oclc is not None:
        line["oclc"] = record.oclc
    if record.isbns:
        line["isbns"] = [i.digits for i in record.isbns]
    line["title"] = record.title
    if record.contributors:
        line["contributors"] = [[c.name, c.role] for c in record.contributors]
    if record.year is not None:
        line["year"] = record.year
    if record.language is not None:
        line["lang"] = record.language
    if record.lc_class is not None:
        line["lc"] = record.lc_class
    line["format"] = record.format
    if record.citations is not None:
        line["citations"] = record.citations
    return line


def _parse_record_line(obj: dict) -> BookRecord:
    return BookRecord(
        record_id=obj["id"],
        title=obj["title"],
        oclc=obj.get("oclc"),
        isbns=tuple(Isbn(d) for d in obj.get("isbns", [])),
        contributors=tuple(
            Contributor(name, role) for name, role in obj.get("contributors", [])
        ),
        year=obj.get("year"),
        language=obj.get("lang"),
        lc_class=obj.get("lc"),
        format=obj.get("format", "unknown"),
        citations=obj.get("citations"),
    )


def save_dataset(snapshot: CatalogSnapshot, path: "str | os.PathLike") -> None:
    """Write the snapshot to one JSON object per line, atomically.

    Output order is records, libraries, holdings, each sorted by id, so
    equal snapshots produce byte-identical files.
    """
    lines = []
    for record in snapshot.records:
        lines.append(_record_line(record))
    for library in snapshot.libraries:
        obj: dict = {
            "t": "L",
            "id": library.library_id,
            "name": library.name,
            "country": library.country,
            "kind": library.kind,
        }
        if library.memberships:
            obj["memberships"] = sorted(library.memberships)
        lines.append(obj)
    for holding in snapshot.holdings:
        lines.append(
            {
                "t": "H",
                "record": holding.record_id,
                "library": holding.library_id,
                "channel": holding.channel,
            }
        )
    text = "".join(
        json.dumps(line, ensure_ascii=False, separators=(",", ":")) + "\n"
        for line in lines
    )
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_dataset(path: "str | os.PathLike") -> CatalogSnapshot:
    """Load a canonical dataset file; malformed lines name their line number."""
    records: list[BookRecord] = []
    libraries: list[LibraryOrg] = []
    holdings: list[Holding] = []
    with open(path, encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {number}: not valid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "t" not in obj:
                raise DatasetError(f"line {number}: expected an object with a 't' tag")
            tag = obj["t"]
            try:
                if tag == "R":
                    records.append(_parse_record_line(obj))
                elif tag == "L":
                    libraries.append(
                        LibraryOrg(
                            library_id=obj["id"],
                            name=obj["name"],
                            country=obj["country"],
                            kind=obj.get("kind", "other"),
                            memberships=frozenset(obj.get("memberships", [])),
                        )
                    )
                elif tag == "H":
                    holdings.append(
                        Holding(
                            record_id=obj["record"],
                            library_id=obj["library"],
                            channel=obj.get("channel", "unspecified"),
                        )
                    )
                else:
                    raise DatasetError(f"line {number}: unknown entity tag {tag!r}")
            except DatasetError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"line {number}: {exc}") from exc
    return build_snapshot(records, libraries, holdings)


def merge_snapshots(base: CatalogSnapshot, delta: CatalogSnapshot) -> CatalogSnapshot:
    """Union of two snapshots; on id collisions the base entity wins."""
    records = {r.record_id: r for r in delta.records}
    records.update({r.record_id: r for r in base.records})
    libraries = {lib.library_id: lib for lib in delta.libraries}
    libraries.update({lib.library_id: lib for lib in base.libraries})
    holdings = {(h.record_id, h.library_id): h for h in delta.holdings}
    holdings.update({(h.record_id, h.library_id): h for h in base.holdings})
    taken_at = max(base.taken_at, delta.taken_at)
    return build_snapshot(records.values(), libraries.values(), holdings.values(), taken_at)
