"""Quota accounting, the HTTP client, and harvesting against the replay server."""

import datetime as dt
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import datasets
from libcat.client import (
    EMPTY_RESPONSE,
    CatalogClient,
    QuotaStore,
    _response_from_json,
    _response_from_xml,
    harvest,
)
from libcat.errors import (
    IsbnError,
    QuotaExceededError,
    QuotaStateError,
    TransportError,
)
from libcat.fixture import serve_fixture
from libcat.model import BookRecord, Holding, Isbn, LibraryOrg, build_snapshot

ISBN_A = "9780306406157"
ISBN_B = "9780231085625"


@pytest.fixture(scope="module")
def corpus():
    records = [
        BookRecord("r1", "Widely held work", oclc=1001, isbns=(Isbn(ISBN_A),)),
        BookRecord("r2", "Narrowly held work", isbns=(Isbn(ISBN_B),)),
        BookRecord("r3", "Unidentified work"),
        BookRecord("r4", "Unheld work", oclc=1002),
    ]
    libraries = [
        LibraryOrg("aaa", "Alpha Library", "US", "academic"),
        LibraryOrg("bbb", "Beta Library", "GB", "public"),
        LibraryOrg("ccc", "Gamma Library", "DE", "other"),
    ]
    holdings = [
        Holding("r1", "aaa"),
        Holding("r1", "bbb"),
        Holding("r1", "ccc"),
        Holding("r2", "aaa"),
        Holding("r3", "bbb"),
    ]
    return build_snapshot(records, libraries, holdings)


@pytest.fixture()
def server(corpus):
    with serve_fixture(corpus) as fixture:
        yield fixture


def make_client(server, limit=10_000, **kwargs):
    return CatalogClient(
        server.base_url, quota=QuotaStore(limit), sleep=lambda _: None, **kwargs
    )


class FakeResponse:
    def __init__(self, status_code, body=b"{}", content_type="application/json"):
        self.status_code = status_code
        self.content = body
        self.headers = {"Content-Type": content_type}


class ScriptedSession:
    """Stand-in for requests.Session driven by a url -> outcome callable."""

    def __init__(self, script):
        self.script = script
        self.calls = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append(url)
        outcome = self.script(url, len(self.calls))
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


class TestQuotaStore:
    def test_consume_charges_and_reports_remaining(self):
        store = QuotaStore(limit=5)
        assert store.consume() == 4
        assert store.consume(2) == 2
        state = store.state()
        assert state.used == 3
        assert state.remaining == 2

    def test_exhaustion_charges_nothing(self):
        store = QuotaStore(limit=2)
        store.consume(2)
        with pytest.raises(QuotaExceededError):
            store.consume()
        assert store.state().used == 2

    def test_zero_limit_blocks_immediately(self):
        store = QuotaStore(limit=0)
        with pytest.raises(QuotaExceededError):
            store.consume()

    def test_state_persists_across_instances(self, tmp_path):
        path = tmp_path / "quota.json"
        QuotaStore(limit=10, state_path=path).consume(7)
        reloaded = QuotaStore(limit=10, state_path=path)
        assert reloaded.state().used == 7
        with pytest.raises(QuotaExceededError):
            reloaded.consume(4)

    def test_corrupt_state_file_is_reported(self, tmp_path):
        path = tmp_path / "quota.json"
        path.write_text("{broken")
        with pytest.raises(QuotaStateError):
            QuotaStore(limit=10, state_path=path)
        path.write_text('{"day": "2026-08-17", "used": -3}')
        with pytest.raises(QuotaStateError):
            QuotaStore(limit=10, state_path=path)

    def test_day_rollover_resets_usage(self):
        days = [dt.date(2026, 8, 16)]
        store = QuotaStore(limit=3, today=lambda: days[0])
        store.consume(3)
        with pytest.raises(QuotaExceededError):
            store.consume()
        days[0] = dt.date(2026, 8, 17)
        assert store.consume() == 2
        assert store.state().day == dt.date(2026, 8, 17)
        assert store.state().used == 1

    def test_concurrent_consumers_never_overshoot(self):
        store = QuotaStore(limit=200)
        exhausted = threading.Event()

        def spin():
            while not exhausted.is_set():
                try:
                    store.consume()
                except QuotaExceededError:
                    exhausted.set()

        threads = [threading.Thread(target=spin) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert store.state().used == 200

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(1, 7), max_size=30), st.integers(0, 40))
    def test_usage_is_monotone_within_a_day(self, charges, limit):
        store = QuotaStore(limit=limit)
        previous = 0
        for units in charges:
            try:
                store.consume(units)
            except QuotaExceededError:
                assert previous + units > limit
            used = store.state().used
            assert used >= previous
            assert used <= limit
            previous = used


class TestResponseParsing:
    def test_malformed_json_is_a_transport_error(self):
        with pytest.raises(TransportError):
            _response_from_json(b"{nope")
        with pytest.raises(TransportError):
            _response_from_json(b'{"locations": [{"name": "x"}]}')

    def test_malformed_xml_is_a_transport_error(self):
        with pytest.raises(TransportError):
            _response_from_xml(b"<locationResponse>")
        with pytest.raises(TransportError):
            _response_from_xml(
                b"<locationResponse><locations><location><name>n</name>"
                b"</location></locations></locationResponse>"
            )

    def test_duplicate_institutions_collapse(self):
        body = (
            b'{"record": null, "locations": ['
            b'{"name": "A", "country": "US", "institution_id": "x"},'
            b'{"name": "B", "country": "GB", "institution_id": "x"}]}'
        )
        response = _response_from_json(body)
        assert len(response.locations) == 1
        assert response.locations[0].name == "A"


class TestClientLookups:
    def test_oclc_lookup_returns_sorted_locations(self, server):
        client = make_client(server)
        response = client.get_by_oclc_number(1001)
        assert [loc.institution_id for loc in response.locations] == [
            "aaa",
            "bbb",
            "ccc",
        ]
        assert response.matched_record.title == "Widely held work"
        assert response.matched_record.oclc == 1001
        assert response.matched_record.isbns == (ISBN_A,)

    def test_isbn_lookup_normalizes_ten_digit_form(self, server):
        client = make_client(server)
        response = client.get_by_isbn("0-306-40615-2")
        assert len(response.locations) == 3

    def test_isbn_lookup_accepts_isbn_value(self, server):
        client = make_client(server)
        response = client.get_by_isbn(Isbn(ISBN_B))
        assert [loc.institution_id for loc in response.locations] == ["aaa"]

    def test_unknown_identifier_is_empty_not_error(self, server):
        client = make_client(server)
        response = client.get_by_oclc_number(999_999)
        assert response is EMPTY_RESPONSE
        assert response.is_empty

    def test_matched_but_unheld_record_is_not_empty(self, server):
        client = make_client(server)
        response = client.get_by_oclc_number(1002)
        assert response.locations == ()
        assert not response.is_empty
        assert response.matched_record.title == "Unheld work"

    def test_xml_variant_parses_to_the_same_answer(self, server):
        client = make_client(server)
        plain = client.get_by_oclc_number(1001)
        via_xml = client.get_by_oclc_number(1001, geo={"format": "xml"})
        assert via_xml.locations == plain.locations
        assert via_xml.matched_record == plain.matched_record

    def test_standard_number_accepts_isbn_or_oclc_forms(self, server):
        client = make_client(server)
        assert len(client.get_by_standard_number(ISBN_A).locations) == 3
        assert len(client.get_by_standard_number("1001").locations) == 3

    def test_issn_lookup_of_unknown_serial_is_empty(self, server):
        client = make_client(server)
        assert client.get_by_issn("0138-9130").is_empty

    def test_malformed_identifier_fails_fast(self, server):
        client = make_client(server, retries=3)
        before = server.request_count
        with pytest.raises(TransportError):
            client.get_by_issn("not-an-issn")
        assert server.request_count == before + 1
        assert client.quota.state().used == 1

    def test_invalid_arguments_cost_nothing(self, server):
        client = make_client(server)
        with pytest.raises(ValueError):
            client.get_by_oclc_number(0)
        with pytest.raises(IsbnError):
            client.get_by_isbn("junk")
        assert client.quota.state().used == 0
        assert server.request_count == 0

    def test_every_request_charges_quota_including_misses(self, server):
        client = make_client(server)
        client.get_by_oclc_number(1001)
        client.get_by_oclc_number(999_999)
        assert client.quota.state().used == 2

    def test_quota_blocks_before_the_socket(self, server):
        client = make_client(server, limit=2)
        client.get_by_oclc_number(1001)
        client.get_by_isbn(ISBN_B)
        before = server.request_count
        with pytest.raises(QuotaExceededError):
            client.get_by_oclc_number(1001)
        assert server.request_count == before


class TestRetries:
    def test_connection_errors_are_retried_with_backoff(self):
        import requests as requests_module

        good = FakeResponse(
            200, b'{"record": {"title": "T"}, "locations": []}'
        )
        session = ScriptedSession(
            lambda url, n: requests_module.ConnectionError("boom") if n < 3 else good
        )
        sleeps = []
        client = CatalogClient(
            "http://unit.test",
            quota=QuotaStore(10),
            retries=3,
            session=session,
            sleep=sleeps.append,
        )
        response = client.get_by_oclc_number(5)
        assert response.matched_record.title == "T"
        assert sleeps == [0.5, 1.0]
        assert client.quota.state().used == 3

    def test_server_errors_exhaust_retries_then_raise(self):
        session = ScriptedSession(lambda url, n: FakeResponse(503))
        sleeps = []
        client = CatalogClient(
            "http://unit.test",
            quota=QuotaStore(10),
            retries=3,
            session=session,
            sleep=sleeps.append,
        )
        with pytest.raises(TransportError):
            client.get_by_oclc_number(5)
        assert len(session.calls) == 3
        assert sleeps == [0.5, 1.0]
        assert client.quota.state().used == 3

    def test_client_errors_do_not_retry(self):
        session = ScriptedSession(lambda url, n: FakeResponse(403))
        client = CatalogClient(
            "http://unit.test",
            quota=QuotaStore(10),
            retries=3,
            session=session,
            sleep=lambda _: None,
        )
        with pytest.raises(TransportError):
            client.get_by_oclc_number(5)
        assert len(session.calls) == 1
        assert client.quota.state().used == 1

    def test_each_retry_charges_the_quota(self):
        session = ScriptedSession(lambda url, n: FakeResponse(500))
        client = CatalogClient(
            "http://unit.test",
            quota=QuotaStore(2),
            retries=3,
            session=session,
            sleep=lambda _: None,
        )
        with pytest.raises(QuotaExceededError):
            client.get_by_oclc_number(5)
        assert len(session.calls) == 2


class TestHarvest:
    def test_mixed_batch(self, corpus, server):
        client = make_client(server)
        result = harvest(client, corpus.records)
        assert result.queried == ("r1", "r2", "r4")
        assert result.skipped == (("r3", "no OCLC number or ISBN"),)
        assert result.errors == ()
        assert not result.quota_exhausted
        pairs = {(h.record_id, h.library_id) for h in result.holdings}
        assert pairs == {("r1", "aaa"), ("r1", "bbb"), ("r1", "ccc"), ("r2", "aaa")}
        assert [lib.library_id for lib in result.libraries] == ["aaa", "bbb", "ccc"]
        assert result.delta.n_records == 3
        assert result.delta.libcitation_count("r4") == 0

    def test_harvested_entities_carry_neutral_defaults(self, corpus, server):
        client = make_client(server)
        result = harvest(client, corpus.records[:1])
        assert all(lib.kind == "other" for lib in result.libraries)
        assert all(h.channel == "unspecified" for h in result.holdings)

    def test_quota_exhaustion_keeps_partial_results(self, corpus, server):
        client = make_client(server, limit=2)
        result = harvest(client, corpus.records)
        assert result.quota_exhausted
        assert result.queried == ("r1", "r2")
        reasons = dict(result.skipped)
        assert reasons["r4"] == "quota exhausted"
        assert reasons["r3"] == "no OCLC number or ISBN"

    def test_transport_errors_do_not_stop_the_batch(self):
        good = FakeResponse(
            200,
            b'{"record": {"title": "T", "oclc": 1}, "locations": '
            b'[{"name": "A", "country": "US", "institution_id": "aaa"}]}',
        )

        def script(url, n):
            return FakeResponse(500) if url.endswith("/2") else good

        session = ScriptedSession(script)
        client = CatalogClient(
            "http://unit.test",
            quota=QuotaStore(100),
            retries=2,
            session=session,
            sleep=lambda _: None,
        )
        records = [
            BookRecord("r1", "Good", oclc=1),
            BookRecord("r2", "Bad", oclc=2),
            BookRecord("r3", "No identifier"),
        ]
        result = harvest(client, records)
        assert result.queried == ("r1",)
        assert [rid for rid, _ in result.errors] == ["r2"]
        assert result.skipped == (("r3", "no OCLC number or ISBN"),)
        assert client.quota.state().used == 3

    def test_parallel_matches_sequential(self, corpus, server):
        sequential = harvest(make_client(server), corpus.records, parallelism=1)
        parallel = harvest(make_client(server), corpus.records, parallelism=4)
        assert parallel == sequential

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10**9))
    def test_round_trip_reconstructs_known_holdings(self, seed):
        rng = random.Random(seed)
        snap = datasets.harvestable_snapshot(rng, max_records=25)
        with serve_fixture(snap) as fixture:
            client = CatalogClient(
                fixture.base_url, quota=QuotaStore(10_000), sleep=lambda _: None
            )
            result = harvest(client, snap.records)
        identified = {
            r.record_id for r in snap.records if r.oclc is not None or r.isbns
        }
        assert set(result.queried) == identified
        expected = {
            (h.record_id, h.library_id)
            for h in snap.holdings
            if h.record_id in identified
        }
        got = {(h.record_id, h.library_id) for h in result.delta.holdings}
        assert got == expected
