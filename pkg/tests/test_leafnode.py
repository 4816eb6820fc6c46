import logging
import statistics
import time

import pytest
from fastapi.testclient import TestClient

from hiersearch.crawler import CorpusFetcher
from hiersearch.exceptions import InvalidFlag, ServiceResult, handle_result
from hiersearch.harness.tiny3 import A_P0, A_P1, B_P0, SITE_A, SITE_B, tiny3_corpus
from hiersearch.indexer import build_index, load_index
from hiersearch.leafnode import LeafConfig, LeafService, create_leaf_app
from hiersearch.webcorpus import render_page
from tests.conftest import corpus_pages


@pytest.fixture
def edu_cn(fetcher) -> LeafService:
    return LeafService(LeafConfig(domain='edu.cn', site_roots=[A_P0, B_P0], export_page_size=2), fetcher)


@pytest.fixture
def client(edu_cn) -> TestClient:
    return TestClient(create_leaf_app(edu_cn))


def export_all(service: LeafService, cursor: int = 0, page_size: int = 2):
    records = []
    while True:
        page = service.export(cursor, page_size).value
        records += page.records
        cursor = page.next_cursor
        if page.done:
            return records, cursor


def test_config_normalizes_roots():
    config = LeafConfig(domain='hust.edu.cn', site_roots=['HTTP://HUST.edu.cn/p0.html#x'])
    assert config.site_roots == [A_P0]
    assert config.node_name == 'hust.edu.cn'
    assert LeafConfig(domain='edu.cn', name='cn-1').node_name == 'cn-1'


@pytest.mark.asyncio
async def test_refresh_builds_first_generation(edu_cn):
    report = await edu_cn.refresh()
    assert (report.generation, report.changed, report.tombstones) == (1, 5, 0)
    assert len(edu_cn.current.index) == 5
    assert edu_cn.current.crawl.stats.stop_urls == 2


@pytest.mark.asyncio
async def test_search_merges_replicas(edu_cn):
    await edu_cn.refresh()
    response = edu_cn.search('w9', 10).value
    assert [(result.url, result.score, result.sources) for result in response.results] == [
        (A_P0, 9, [SITE_A]),
        (A_P1, 1, [SITE_A, SITE_B]),
    ]
    assert response.results[0].title == 'w0 w9'
    assert edu_cn.search('w9', 1).value.results[0].url == A_P0
    assert edu_cn.search('', 10).success is False
    assert edu_cn.search('w9', 0).success is False


@pytest.mark.asyncio
async def test_export_pages_by_version(edu_cn):
    await edu_cn.refresh()
    first = edu_cn.export(0, 2).value
    assert [record.version for record in first.records] == [1, 2]
    assert (first.next_cursor, first.done) == (2, False)
    records, cursor = export_all(edu_cn)
    assert [record.version for record in records] == [1, 2, 3, 4, 5]
    assert cursor == 5
    tail = edu_cn.export(5, 2).value
    assert (tail.records, tail.next_cursor, tail.done) == ([], 5, True)


@pytest.mark.asyncio
async def test_unchanged_refresh_is_idempotent(edu_cn):
    await edu_cn.refresh()
    before = edu_cn.current.index
    report = await edu_cn.refresh()
    assert (report.generation, report.changed, report.tombstones) == (2, 0, 0)
    assert edu_cn.current.index == before
    assert edu_cn.export(5, 10).value.records == []


@pytest.mark.asyncio
async def test_refresh_reversions_changes_and_tombstones_removals(corpus, edu_cn):
    await edu_cn.refresh()
    edu_cn.fetcher.corpus = corpus.replace_page(A_P1, render_page(['w3', 'w5'], ['w8'], ['w3', 'w11'], []))
    report = await edu_cn.refresh()
    assert (report.changed, report.tombstones) == (2, 0)
    changed = edu_cn.export(5, 10).value.records
    assert [(record.url, record.origin_site, record.version) for record in changed] == [
        (A_P1, SITE_A, 6), (A_P1, SITE_B, 7),
    ]
    assert edu_cn.search('w11', 10).value.results[0].sources == [SITE_A, SITE_B]

    edu_cn.fetcher.corpus = edu_cn.fetcher.corpus.remove_page(A_P1)
    report = await edu_cn.refresh()
    assert (report.changed, report.tombstones) == (0, 2)
    tombstones = edu_cn.export(7, 10).value.records
    assert all(record.deleted for record in tombstones)
    assert [record.version for record in tombstones] == [8, 9]
    assert edu_cn.search('w3', 10).value.results == []


@pytest.mark.asyncio
async def test_unreachable_site_keeps_its_records(corpus, edu_cn):
    await edu_cn.refresh()
    edu_cn.fetcher.corpus = corpus.remove_page(B_P0)
    report = await edu_cn.refresh()
    # pku.edu.cn was skipped: only hust.edu.cn's copy of its root is tombstoned
    assert report.tombstones == 1
    live = {record.key for record in edu_cn.current.index.live_records()}
    assert (B_P0, SITE_B) in live
    assert (B_P0, SITE_A) not in live


@pytest.mark.asyncio
async def test_refresh_with_new_site_roots(edu_cn):
    await edu_cn.refresh()
    report = await edu_cn.refresh(site_roots=[A_P0])
    assert report.tombstones == 2
    assert {record.origin_site for record in edu_cn.current.index.live_records()} == {SITE_A}
    assert edu_cn.config.site_roots == [A_P0]


@pytest.mark.asyncio
async def test_refresh_persists_index(tmp_path, fetcher):
    path = tmp_path / 'leaf.json'
    service = LeafService(LeafConfig(domain='hust.edu.cn', site_roots=[A_P0]), fetcher, index_path=path)
    await service.refresh()
    index, generation = load_index(path)
    assert generation == 1
    assert index == service.current.index

    revived = LeafService(service.config, CorpusFetcher(tiny3_corpus()), index=index, generation=generation)
    report = await revived.refresh()
    assert (report.generation, report.changed) == (2, 0)


def test_http_surface(client, edu_cn):
    assert client.post('/v1/refresh').json() == {'generation': 1, 'changed': 5, 'tombstones': 0}
    body = client.get('/v1/search', params={'q': 'w3'}).json()
    assert body['query'] == 'w3'
    assert [result['url'] for result in body['results']] == [A_P1]
    assert 'failed_sources' not in body
    page = client.get('/v1/export', params={'cursor': 0, 'max': 10}).json()
    assert len(page['records']) == 5 and page['done'] is True
    default_page = client.get('/v1/export').json()
    assert len(default_page['records']) == 2
    assert client.get('/v1/health').json() == {'status': 'ok', 'node': 'edu.cn', 'role': 'leaf'}


@pytest.mark.parametrize('path, params, error', (
        ('/v1/search', {'q': '  '}, 'empty_query'),
        ('/v1/search', {'q': 'w3', 'limit': '0'}, 'invalid_limit'),
        ('/v1/search', {'q': 'w3', 'limit': 'ten'}, 'invalid_limit'),
        ('/v1/export', {'cursor': '-1'}, 'invalid_cursor'),
        ('/v1/export', {'cursor': 'abc'}, 'invalid_cursor'),
        ('/v1/export', {'max': '0'}, 'invalid_limit'),
        ('/v1/search', {'q': 'w3', 'exhaustive': 'maybe'}, 'invalid_flag'),
))
def test_http_errors(client, path, params, error):
    response = client.get(path, params=params)
    assert response.status_code == 400
    assert response.json()['error'] == error


def test_refresh_body_overrides_roots(client, edu_cn):
    assert client.post('/v1/refresh', json={'site_roots': [B_P0]}).status_code == 200
    assert edu_cn.config.site_roots == [B_P0]


@pytest.mark.perf
def test_single_term_query_latency(perf_corpus):
    service = LeafService(LeafConfig(domain='perf.edu', site_roots=[site.root_url for site in perf_corpus.sites]),
                          CorpusFetcher(perf_corpus),
                          index=build_index(corpus_pages(perf_corpus)))
    timings = []
    for term in sorted(service.current.index.postings)[:300]:
        started = time.perf_counter()
        assert service.search(term, 10).value.results
        timings.append(time.perf_counter() - started)
    assert statistics.median(timings) < 0.010


def test_failed_request_is_logged_as_error(client, caplog):
    with caplog.at_level(logging.ERROR, logger='hiersearch.exceptions'):
        assert client.get('/v1/search', params={'q': ' '}).status_code == 400
    assert 'EmptyQuery' in caplog.text
    assert all(record.levelno == logging.ERROR for record in caplog.records)


def test_service_result_unwraps_or_raises(caplog):
    assert handle_result(ServiceResult(['ok'])) == ['ok']
    failed = ServiceResult(InvalidFlag({'exhaustive': 'maybe'}))
    assert (failed.success, failed.status_code) == (False, 400)
    with caplog.at_level(logging.ERROR, logger='hiersearch.exceptions'):
        with pytest.raises(InvalidFlag):
            handle_result(failed)
    assert [record.levelname for record in caplog.records] == ['ERROR']
    assert 'caller=' in caplog.text
