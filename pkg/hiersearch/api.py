from typing import List, Optional

from pydantic import BaseModel, Extra

CANONICAL_SEPARATORS = (',', ':')


class APIModel(BaseModel):
    class Config:
        extra = Extra.ignore
        allow_population_by_field_name = True

    def canonical_json(self) -> str:
        return self.json(separators=CANONICAL_SEPARATORS)


class SearchResult(APIModel):
    url: str
    title: str = ''
    abstract: str = ''
    score: int
    sources: List[str] = []
    keyword_total: Optional[int] = None


class SearchResponse(APIModel):
    """
    Envelope shared by leaf, aggregator and root searches.

    `keyword_total` is only filled by aggregators and the root,
    `failed_sources` only by the root.
    """

    query: str
    results: List[SearchResult] = []
    partial: bool = False
    failed_sources: Optional[List[str]] = None


class HealthStatus(APIModel):
    status: str = 'ok'
    node: str
    role: str
