"""
Top-layer broker. Holds no pages: fans a query out to the aggregators and
adds up the scores each one gives the same url.
"""
import asyncio
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import httpx
from fastapi import Depends, FastAPI
from pydantic import AnyHttpUrl, conint, confloat, conlist

from .api import APIModel, HealthStatus, SearchResponse, SearchResult
from .exceptions import (AppExceptionCase, EmptyQuery, InvalidLimit, NoSources, ServiceResult,
                         app_exception_handler, handle_result)
from .http import HttpClient
from .indexer import query_terms
from .middleware import RequestLogMiddleware
from .query import SearchQuery
from .settings import get_settings

logger = logging.getLogger(__name__)


class AggregatorEndpoint(APIModel):
    name: str
    endpoint: AnyHttpUrl


class FederationConfig(APIModel):
    aggregators: conlist(AggregatorEndpoint, min_items=1)
    per_source_limit_factor: conint(ge=1) = 3
    timeout: confloat(gt=0) = 2.0
    listen_address: str = '127.0.0.1:8301'


@dataclass(frozen=True)
class SourceHit:
    url: str
    score: int
    keyword_total: int
    title: str = ''
    abstract: str = ''


@dataclass(frozen=True)
class MergedResult:
    url: str
    total_score: int
    keyword_total: int
    contributing_sources: Tuple[str, ...]
    title: str
    abstract: str


class SourceStatus(APIModel):
    name: str
    endpoint: str
    healthy: bool


def merge_results(lists: Mapping[str, Sequence[SourceHit]]) -> List[MergedResult]:
    groups: Dict[str, List[Tuple[str, SourceHit]]] = {}
    for name in sorted(lists):
        for hit in lists[name]:
            groups.setdefault(hit.url, []).append((name, hit))
    merged = []
    for url, entries in groups.items():
        _, best = min(entries, key=lambda entry: (-entry[1].score, entry[0]))
        merged.append(MergedResult(url=url,
                                   total_score=sum(hit.score for _, hit in entries),
                                   keyword_total=max(hit.keyword_total for _, hit in entries),
                                   contributing_sources=tuple(sorted({name for name, _ in entries})),
                                   title=best.title,
                                   abstract=best.abstract))
    merged.sort(key=lambda result: (-result.total_score, -result.keyword_total, result.url))
    return merged


class RootBroker:

    def __init__(self, config: FederationConfig, transport: Optional[httpx.AsyncBaseTransport] = None):
        self.config = config
        settings = get_settings()
        self.clients: Dict[str, HttpClient] = {
            source.name: HttpClient(str(source.endpoint),
                                    concurrency=settings.http_concurrency,
                                    transport=transport,
                                    timeout=config.timeout,
                                    max_try_count=1)
            for source in config.aggregators
        }

    async def _query_source(self, name: str, params: dict) -> Optional[List[SourceHit]]:
        try:
            result = await asyncio.wait_for(
                self.clients[name].request_json_api('get', '/v1/search', SearchResponse, params=params),
                timeout=self.config.timeout,
            )
        except asyncio.TimeoutError:
            logger.warning('Source %s timed out after %.1f s', name, self.config.timeout)
            return None
        if not result.success:
            logger.warning('Source %s failed: %s', name, result.error)
            return None
        return [SourceHit(url=item.url,
                          score=item.score,
                          keyword_total=item.keyword_total or 0,
                          title=item.title,
                          abstract=item.abstract)
                for item in result.data.results]

    async def federated_search(self, query: str, limit: int, exhaustive: bool = False) -> ServiceResult:
        if not query_terms(query):
            return ServiceResult(EmptyQuery({'q': query}))
        max_limit = get_settings().max_limit
        if not 1 <= limit <= max_limit:
            return ServiceResult(InvalidLimit({'limit': limit}))
        params = {'q': query,
                  'limit': min(limit * self.config.per_source_limit_factor, max_limit),
                  'exhaustive': 'true' if exhaustive else 'false'}
        names = list(self.clients)
        outcomes = await asyncio.gather(*(self._query_source(name, params) for name in names))
        lists = {name: hits for name, hits in zip(names, outcomes) if hits is not None}
        failed = sorted(name for name, hits in zip(names, outcomes) if hits is None)
        if not lists:
            return ServiceResult(NoSources({'failed_sources': failed}))
        merged = merge_results(lists)
        if not exhaustive:
            merged = merged[:limit]
        results = [SearchResult(url=result.url,
                                title=result.title,
                                abstract=result.abstract,
                                score=result.total_score,
                                sources=list(result.contributing_sources),
                                keyword_total=result.keyword_total)
                   for result in merged]
        return ServiceResult(SearchResponse(query=query, results=results, partial=bool(failed),
                                            failed_sources=failed))

    async def sources(self) -> List[SourceStatus]:
        async def check_health(name: str) -> bool:
            try:
                result = await asyncio.wait_for(
                    self.clients[name].request_json_api('get', '/v1/health', HealthStatus),
                    timeout=self.config.timeout,
                )
            except asyncio.TimeoutError:
                return False
            return result.success

        names = list(self.clients)
        health = await asyncio.gather(*(check_health(name) for name in names))
        return [SourceStatus(name=name, endpoint=self.clients[name].base_url, healthy=healthy)
                for name, healthy in zip(names, health)]


def create_root_app(broker: RootBroker) -> FastAPI:
    app = FastAPI(title='hiersearch root')
    app.add_middleware(RequestLogMiddleware)
    app.add_exception_handler(AppExceptionCase, app_exception_handler)

    @app.get('/v1/search', response_model=SearchResponse, response_model_exclude_none=True)
    async def search(params: SearchQuery = Depends()):
        return handle_result(await broker.federated_search(params.q, params.limit, params.exhaustive))

    @app.get('/v1/sources', response_model=List[SourceStatus])
    async def sources():
        return await broker.sources()

    @app.get('/v1/health', response_model=HealthStatus)
    async def health():
        return HealthStatus(node='root', role='root')

    return app
