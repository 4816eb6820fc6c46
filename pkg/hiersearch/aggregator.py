"""
Layer-2 node: harvests leaf metadata incrementally and ranks pages by how
many distinct sites' crawls produced a record for them (overlap count).
"""
import asyncio
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple
from urllib.parse import urlsplit

import httpx
from fastapi import Depends, FastAPI
from pydantic import AnyHttpUrl, conint, confloat

from .api import APIModel, HealthStatus, SearchResponse, SearchResult
from .exceptions import (AppExceptionCase, EmptyQuery, InvalidLimit, ServiceResult, app_exception_handler,
                         handle_result)
from .http import HttpClient
from .indexer import MetadataRecord, RecordKey, query_terms
from .leafnode import ExportPage
from .middleware import RequestLogMiddleware
from .query import SearchQuery
from .settings import get_settings

logger = logging.getLogger(__name__)


class LeafEndpoint(APIModel):
    name: str
    endpoint: AnyHttpUrl


class AggregatorConfig(APIModel):
    domain: str
    leaves: List[LeafEndpoint] = []
    listen_address: str = '127.0.0.1:8201'
    export_page_size: conint(ge=1) = 500
    harvest_interval: confloat(ge=0) = 0


@dataclass(frozen=True)
class UnifiedRecord:
    url: str
    title: str
    encoding: str
    abstract: str
    origins: Tuple[str, ...]
    merged_keywords: Mapping[str, int]

    @property
    def overlap_count(self) -> int:
        return len(self.origins)


@dataclass
class LeafCursor:
    name: str
    endpoint: str
    last_cursor: int = 0
    last_success_time: Optional[datetime] = None
    error_count: int = 0


class LeafStatus(APIModel):
    name: str
    endpoint: str
    last_cursor: int
    last_success_time: Optional[datetime]
    error_count: int


class HarvestReport(APIModel):
    leaves: int
    applied: int
    failed: List[str] = []


class OverlapCounts(APIModel):
    counts: Dict[str, int] = {}


class AggregateHit(NamedTuple):
    url: str
    overlap_count: int
    keyword_total: int
    title: str
    abstract: str
    origins: Tuple[str, ...]


def unify(url: str, replicas: Iterable[MetadataRecord]) -> Optional[UnifiedRecord]:
    live = [record for record in replicas if not record.deleted]
    if not live:
        return None
    home_site = urlsplit(url).hostname
    display = next((record for record in live if record.origin_site == home_site), None)
    if display is None:
        display = min(live, key=lambda record: (-record.keyword_total, record.origin_site))
    merged: Dict[str, int] = {}
    for record in live:
        for term, score in record.keywords:
            if score > merged.get(term, 0):
                merged[term] = score
    return UnifiedRecord(url=url,
                         title=display.title,
                         encoding=display.encoding,
                         abstract=display.abstract,
                         origins=tuple(sorted({record.origin_site for record in live})),
                         merged_keywords=merged)


def group_records(records: Iterable[MetadataRecord]) -> Dict[str, UnifiedRecord]:
    """Unified view recomputed from scratch."""
    by_url: Dict[str, List[MetadataRecord]] = {}
    for record in records:
        by_url.setdefault(record.url, []).append(record)
    unified = {}
    for url, replicas in by_url.items():
        record = unify(url, replicas)
        if record is not None:
            unified[url] = record
    return unified


class HarvestState:

    def __init__(self, leaves: Iterable[LeafEndpoint] = ()):
        self.leaves: Dict[str, LeafCursor] = {
            leaf.name: LeafCursor(name=leaf.name, endpoint=str(leaf.endpoint)) for leaf in leaves
        }
        self.records: Dict[Tuple[str, RecordKey], MetadataRecord] = {}
        self.replicas: Dict[str, Dict[Tuple[str, str], MetadataRecord]] = {}
        self.unified: Dict[str, UnifiedRecord] = {}
        self.postings: Dict[str, Set[str]] = {}

    def apply(self, records: Iterable[MetadataRecord], leaf: str = '') -> int:
        """
        Upsert records and tombstones exported by `leaf`; stale or repeated
        versions are ignored.

        Versions are ordered within one leaf only; replicas are kept per
        (leaf, url, origin site).
        """
        touched = set()
        applied = 0
        for record in records:
            current = self.records.get((leaf, record.key))
            if current is not None and current.version >= record.version:
                continue
            self.records[leaf, record.key] = record
            self.replicas.setdefault(record.url, {})[leaf, record.origin_site] = record
            touched.add(record.url)
            applied += 1
        for url in touched:
            self._regroup(url)
        return applied

    def _regroup(self, url: str) -> None:
        previous = self.unified.pop(url, None)
        if previous is not None:
            for term in previous.merged_keywords:
                urls = self.postings[term]
                urls.discard(url)
                if not urls:
                    del self.postings[term]
        record = unify(url, self.replicas.get(url, {}).values())
        if record is None:
            return
        self.unified[url] = record
        for term in record.merged_keywords:
            self.postings.setdefault(term, set()).add(url)

    def search(self, terms: Sequence[str]) -> List[AggregateHit]:
        terms = list(dict.fromkeys(terms))
        candidates = [self.postings.get(term, set()) for term in terms]
        if not candidates or not all(candidates):
            return []
        candidates.sort(key=len)
        urls = set.intersection(*candidates)
        hits = []
        for url in urls:
            record = self.unified[url]
            hits.append(AggregateHit(url=url,
                                     overlap_count=record.overlap_count,
                                     keyword_total=sum(record.merged_keywords[term] for term in terms),
                                     title=record.title,
                                     abstract=record.abstract,
                                     origins=record.origins))
        hits.sort(key=lambda hit: (-hit.overlap_count, -hit.keyword_total, hit.url))
        return hits


class Aggregator:

    def __init__(self, config: AggregatorConfig, transport: Optional[httpx.AsyncBaseTransport] = None):
        self.config = config
        self.state = HarvestState(config.leaves)
        settings = get_settings()
        self.clients: Dict[str, HttpClient] = {
            leaf.name: HttpClient(str(leaf.endpoint),
                                  concurrency=settings.http_concurrency,
                                  transport=transport,
                                  timeout=settings.http_timeout,
                                  max_try_count=settings.http_max_try_count)
            for leaf in config.leaves
        }
        self._harvest_lock = asyncio.Lock()

    async def harvest(self, leaves: Optional[Sequence[str]] = None) -> HarvestReport:
        async with self._harvest_lock:
            names = list(leaves) if leaves is not None else list(self.state.leaves)
            outcomes = await asyncio.gather(*(self._harvest_leaf(self.state.leaves[name]) for name in names))
        failed = [self.state.leaves[name].endpoint for name, (_, ok) in zip(names, outcomes) if not ok]
        report = HarvestReport(leaves=len(names), applied=sum(applied for applied, _ in outcomes), failed=failed)
        logger.info('Aggregator %s harvest: %s applied from %s leaves, %s failed',
                    self.config.domain, report.applied, report.leaves, len(failed))
        return report

    async def _harvest_leaf(self, cursor: LeafCursor) -> Tuple[int, bool]:
        client = self.clients[cursor.name]
        applied = 0
        while True:
            result = await client.request_json_api('get', '/v1/export', ExportPage,
                                                   params={'cursor': cursor.last_cursor,
                                                           'max': self.config.export_page_size})
            if not result.success:
                cursor.error_count += 1
                logger.warning('Leaf %s (%s) unreachable: %s', cursor.name, cursor.endpoint, result.error)
                return applied, False
            page: ExportPage = result.data
            applied += self.state.apply(page.records, cursor.name)
            progressed = page.next_cursor > cursor.last_cursor
            cursor.last_cursor = max(cursor.last_cursor, page.next_cursor)
            if page.done or not progressed:
                break
        cursor.last_success_time = datetime.now(timezone.utc)
        return applied, True

    def search(self, query: str, limit: int, exhaustive: bool = False) -> ServiceResult:
        terms = query_terms(query)
        if not terms:
            return ServiceResult(EmptyQuery({'q': query}))
        if not 1 <= limit <= get_settings().max_limit:
            return ServiceResult(InvalidLimit({'limit': limit}))
        hits = self.state.search(terms)
        if not exhaustive:
            hits = hits[:limit]
        results = [SearchResult(url=hit.url,
                                title=hit.title,
                                abstract=hit.abstract,
                                score=hit.overlap_count,
                                sources=list(hit.origins),
                                keyword_total=hit.keyword_total)
                   for hit in hits]
        return ServiceResult(SearchResponse(query=query, results=results))

    def leaf_status(self) -> List[LeafStatus]:
        return [LeafStatus(name=cursor.name,
                           endpoint=cursor.endpoint,
                           last_cursor=cursor.last_cursor,
                           last_success_time=cursor.last_success_time,
                           error_count=cursor.error_count)
                for cursor in self.state.leaves.values()]

    def overlap_counts(self) -> OverlapCounts:
        return OverlapCounts(counts={url: record.overlap_count for url, record in sorted(self.state.unified.items())})

    async def harvest_forever(self) -> None:
        while True:
            try:
                await self.harvest()
            except Exception:
                logger.exception('Harvest round failed')
            await asyncio.sleep(self.config.harvest_interval)


def create_aggregator_app(aggregator: Aggregator) -> FastAPI:
    app = FastAPI(title=f'hiersearch aggregator {aggregator.config.domain}')
    app.add_middleware(RequestLogMiddleware)
    app.add_exception_handler(AppExceptionCase, app_exception_handler)
    background: List[asyncio.Task] = []

    @app.on_event('startup')
    async def start_harvesting():
        if aggregator.config.harvest_interval > 0:
            background.append(asyncio.create_task(aggregator.harvest_forever()))

    @app.on_event('shutdown')
    async def stop_harvesting():
        for task in background:
            task.cancel()

    @app.get('/v1/search', response_model=SearchResponse, response_model_exclude_none=True)
    async def search(params: SearchQuery = Depends()):
        return handle_result(aggregator.search(params.q, params.limit, params.exhaustive))

    @app.post('/v1/harvest', response_model=HarvestReport)
    async def harvest():
        return await aggregator.harvest()

    @app.get('/v1/leaves', response_model=List[LeafStatus])
    async def leaves():
        return aggregator.leaf_status()

    @app.get('/v1/overlap', response_model=OverlapCounts)
    async def overlap():
        return aggregator.overlap_counts()

    @app.get('/v1/health', response_model=HealthStatus)
    async def health():
        return HealthStatus(node=aggregator.config.domain, role='aggregator')

    return app
