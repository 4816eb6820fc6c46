"""
Layer-3 node: crawls and indexes one third-level domain, answers searches
and exports its metadata records to harvesters by version cursor.
"""
import asyncio
import bisect
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import Body, Depends, FastAPI
from pydantic import conint, validator

from .api import APIModel, HealthStatus, SearchResponse, SearchResult
from .crawler import CrawlResult, Fetcher, crawl_domain
from .exceptions import (AppExceptionCase, EmptyQuery, InvalidLimit, ServiceResult, app_exception_handler,
                         handle_result)
from .indexer import Hit, LeafIndex, MetadataRecord, RecordKey, build_index, dump_index, query_terms, search_index
from .middleware import RequestLogMiddleware
from .query import ExportQuery, SearchQuery
from .settings import get_settings
from .webcorpus import normalize_url

logger = logging.getLogger(__name__)


class LeafConfig(APIModel):
    domain: str
    site_roots: List[str] = []
    listen_address: str = '127.0.0.1:8101'
    export_page_size: conint(ge=1) = 500
    name: Optional[str] = None

    @validator('site_roots', each_item=True)
    def normalize_root(cls, v: str) -> str:
        return normalize_url(v)

    @property
    def node_name(self) -> str:
        return self.name or self.domain


class ExportPage(APIModel):
    records: List[MetadataRecord] = []
    next_cursor: conint(ge=0) = 0
    done: bool = True


class RefreshRequest(APIModel):
    site_roots: Optional[List[str]] = None


class RefreshReport(APIModel):
    generation: int
    changed: int
    tombstones: int


@dataclass(frozen=True)
class LeafGeneration:
    number: int
    index: LeafIndex
    crawl: Optional[CrawlResult] = None


class LeafService:

    def __init__(self,
                 config: LeafConfig,
                 fetcher: Fetcher,
                 index: Optional[LeafIndex] = None,
                 generation: int = 0,
                 index_path: Optional[Path] = None):
        self.config = config
        self.fetcher = fetcher
        self.index_path = index_path
        self._current = LeafGeneration(number=generation, index=index or LeafIndex())
        self._refresh_lock = asyncio.Lock()

    @property
    def current(self) -> LeafGeneration:
        return self._current

    def search(self, query: str, limit: int) -> ServiceResult:
        terms = query_terms(query)
        if not terms:
            return ServiceResult(EmptyQuery({'q': query}))
        if not 1 <= limit <= get_settings().max_limit:
            return ServiceResult(InvalidLimit({'limit': limit}))
        by_url: Dict[str, List[Hit]] = {}
        for hit in search_index(self._current.index, terms):
            by_url.setdefault(hit.url, []).append(hit)
        ranked = [(min(hits, key=lambda hit: (-hit.score, hit.origin_site)), hits) for hits in by_url.values()]
        ranked.sort(key=lambda item: (-item[0].score, item[0].url))
        results = [SearchResult(url=best.url,
                                title=best.title,
                                abstract=best.abstract,
                                score=best.score,
                                sources=sorted(hit.origin_site for hit in hits))
                   for best, hits in ranked[:limit]]
        return ServiceResult(SearchResponse(query=query, results=results))

    def export(self, cursor: int, max_records: Optional[int] = None) -> ServiceResult:
        if max_records is None:
            max_records = self.config.export_page_size
        if max_records < 1:
            return ServiceResult(InvalidLimit({'max': max_records}))
        index = self._current.index
        start = bisect.bisect_right(index.versions, cursor)
        records = index.log[start:start + max_records]
        next_cursor = records[-1].version if records else cursor
        done = index.max_version <= next_cursor
        return ServiceResult(ExportPage(records=records, next_cursor=next_cursor, done=done))

    async def refresh(self, site_roots: Optional[List[str]] = None) -> RefreshReport:
        async with self._refresh_lock:
            if site_roots is not None:
                self.config = self.config.copy(update={'site_roots': [normalize_url(root) for root in site_roots]})
            crawl = await crawl_domain(self.fetcher, self.config.domain, self.config.site_roots)
            current = self._current
            skipped = set(crawl.stats.skipped_sites)
            fresh = build_index(crawl.pages)
            next_version = current.index.max_version + 1
            merged: Dict[RecordKey, MetadataRecord] = {}
            changed = tombstones = 0
            for key in sorted(fresh.records):
                record = fresh.records[key]
                previous = current.index.records.get(key)
                if previous is not None and previous.same_content(record):
                    merged[key] = previous
                    continue
                merged[key] = record.with_version(next_version)
                next_version += 1
                changed += 1
            for key in sorted(current.index.records):
                if key in merged:
                    continue
                previous = current.index.records[key]
                if previous.deleted or previous.origin_site in skipped:
                    merged[key] = previous
                    continue
                merged[key] = previous.tombstone(next_version)
                next_version += 1
                tombstones += 1
            generation = LeafGeneration(number=current.number + 1, index=LeafIndex(merged.values()), crawl=crawl)
            self._current = generation
            if self.index_path is not None:
                dump_index(generation.index, self.index_path, generation=generation.number)
            logger.info('Leaf %s generation %s: %s records, %s changed, %s tombstones',
                        self.config.node_name, generation.number, len(generation.index), changed, tombstones)
            return RefreshReport(generation=generation.number, changed=changed, tombstones=tombstones)


def create_leaf_app(service: LeafService) -> FastAPI:
    app = FastAPI(title=f'hiersearch leaf {service.config.node_name}')
    app.add_middleware(RequestLogMiddleware)
    app.add_exception_handler(AppExceptionCase, app_exception_handler)

    @app.get('/v1/search', response_model=SearchResponse, response_model_exclude_none=True)
    async def search(params: SearchQuery = Depends()):
        return handle_result(service.search(params.q, params.limit))

    @app.get('/v1/export', response_model=ExportPage)
    async def export(params: ExportQuery = Depends()):
        return handle_result(service.export(params.cursor, params.max))

    @app.post('/v1/refresh', response_model=RefreshReport)
    async def refresh(request: Optional[RefreshRequest] = Body(None)):
        return await service.refresh(request.site_roots if request else None)

    @app.get('/v1/health', response_model=HealthStatus)
    async def health():
        return HealthStatus(node=service.config.node_name, role='leaf')

    return app
