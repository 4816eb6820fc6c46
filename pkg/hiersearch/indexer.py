"""
Leaf indexer: fetched pages -> scored-keyword metadata records + postings.

A keyword's score is 8 per occurrence in the title, 4 per occurrence in an
h1 and 1 per occurrence anywhere in the body (h1 text is body text too).
"""
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from pydantic import conint, root_validator

from .api import APIModel, CANONICAL_SEPARATORS
from .crawler import FetchedPage
from .exceptions import EmptyQuery, InvalidLimit
from .html import DEFAULT_ENCODING, declared_encoding, parse_html

logger = logging.getLogger(__name__)

TITLE_WEIGHT = 8
H1_WEIGHT = 4
BODY_WEIGHT = 1
MAX_KEYWORDS = 64
ABSTRACT_LENGTH = 160

_TERM = re.compile(r'[A-Za-z0-9]+')

Keyword = Tuple[str, int]
RecordKey = Tuple[str, str]


def terms_of(text: str) -> List[str]:
    return [term.lower() for term in _TERM.findall(text)]


def query_terms(query: str) -> List[str]:
    """Distinct query terms in first-seen order."""
    return list(dict.fromkeys(terms_of(query or '')))


@dataclass(frozen=True)
class TokenizedDoc:
    url: str
    title_terms: List[str]
    h1_terms: List[str]
    body_terms: List[str]
    raw_title: str
    encoding: str
    abstract: str


def tokenize(page: FetchedPage) -> TokenizedDoc:
    soup = parse_html(page.html_bytes)
    title_tag = soup.find('title')
    raw_title = ' '.join(title_tag.get_text(' ').split()) if title_tag else ''
    h1_text = ' '.join(heading.get_text(' ') for heading in soup.find_all('h1'))
    body = soup.find('body')
    if body is None:
        if title_tag is not None:
            title_tag.extract()
        body = soup
    body_text = ' '.join(body.get_text(' ').split())
    return TokenizedDoc(url=page.url,
                        title_terms=terms_of(raw_title),
                        h1_terms=terms_of(h1_text),
                        body_terms=terms_of(body_text),
                        raw_title=raw_title,
                        encoding=declared_encoding(soup) or DEFAULT_ENCODING,
                        abstract=body_text[:ABSTRACT_LENGTH])


def score_keywords(doc: TokenizedDoc) -> List[Keyword]:
    scores: Counter = Counter()
    for term in doc.title_terms:
        scores[term] += TITLE_WEIGHT
    for term in doc.h1_terms:
        scores[term] += H1_WEIGHT
    for term in doc.body_terms:
        scores[term] += BODY_WEIGHT
    ranked = sorted((item for item in scores.items() if item[1] > 0), key=lambda item: (-item[1], item[0]))
    return ranked[:MAX_KEYWORDS]


class MetadataRecord(APIModel):
    url: str
    title: str = ''
    encoding: str = DEFAULT_ENCODING
    abstract: str = ''
    origin_site: str
    version: conint(ge=0) = 0
    deleted: bool = False
    keywords: List[Keyword] = []

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def check_keywords(cls, values):
        keywords = values['keywords']
        if values['deleted'] and keywords:
            raise ValueError('tombstones carry no keywords')
        if len(keywords) > MAX_KEYWORDS:
            raise ValueError(f'at most {MAX_KEYWORDS} keywords')
        if any(score <= 0 for _, score in keywords):
            raise ValueError('keyword scores must be positive')
        return values

    @property
    def key(self) -> RecordKey:
        return self.url, self.origin_site

    @property
    def keyword_total(self) -> int:
        return sum(score for _, score in self.keywords)

    def same_content(self, other: 'MetadataRecord') -> bool:
        return self.dict(exclude={'version'}) == other.dict(exclude={'version'})

    def with_version(self, version: int) -> 'MetadataRecord':
        return self.copy(update={'version': version})

    def tombstone(self, version: int) -> 'MetadataRecord':
        return MetadataRecord(url=self.url, origin_site=self.origin_site, version=version, deleted=True)


def make_record(doc: TokenizedDoc, origin_site: str, version: int) -> MetadataRecord:
    return MetadataRecord(url=doc.url,
                          title=doc.raw_title,
                          encoding=doc.encoding,
                          abstract=doc.abstract,
                          origin_site=origin_site,
                          version=version,
                          keywords=score_keywords(doc))


class Posting(NamedTuple):
    url: str
    origin_site: str
    score: int


class Hit(NamedTuple):
    url: str
    origin_site: str
    score: int
    title: str
    abstract: str


class LeafIndex:
    """
    Records keyed by (url, origin_site), tombstones included, plus postings
    over the live ones. Treated as immutable once built.
    """

    def __init__(self, records: Iterable[MetadataRecord] = ()):
        self.records: Dict[RecordKey, MetadataRecord] = {}
        for record in records:
            current = self.records.get(record.key)
            if current is None or record.version > current.version:
                self.records[record.key] = record
        postings: Dict[str, List[Posting]] = {}
        for record in self.records.values():
            if record.deleted:
                continue
            for term, score in record.keywords:
                postings.setdefault(term, []).append(Posting(record.url, record.origin_site, score))
        for term_postings in postings.values():
            term_postings.sort(key=lambda posting: (-posting.score, posting.url, posting.origin_site))
        self.postings = postings
        self.log: List[MetadataRecord] = sorted(self.records.values(), key=lambda record: record.version)
        self.versions: List[int] = [record.version for record in self.log]

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other):
        return isinstance(other, LeafIndex) and self.records == other.records

    @property
    def max_version(self) -> int:
        return self.versions[-1] if self.versions else 0

    def live_records(self) -> List[MetadataRecord]:
        return [record for record in self.log if not record.deleted]


def build_index(pages: Iterable[FetchedPage], start_version: int = 0) -> LeafIndex:
    latest: Dict[RecordKey, FetchedPage] = {}
    for page in pages:
        key = (page.url, page.origin_site)
        current = latest.get(key)
        if current is None or page.fetch_seq >= current.fetch_seq:
            latest[key] = page
    records = [make_record(tokenize(latest[key]), key[1], version)
               for version, key in enumerate(sorted(latest), start=start_version + 1)]
    logger.debug('Indexed %s records', len(records))
    return LeafIndex(records)


def search_index(index: LeafIndex, query: Sequence[str], limit: Optional[int] = None) -> List[Hit]:
    """
    Conjunctive search. Every (url, origin_site) replica is its own hit;
    `limit=None` returns all matches.
    """
    terms = list(dict.fromkeys(term.lower() for term in query if term))
    if not terms:
        raise EmptyQuery({'query': list(query)})
    if limit is not None and limit < 1:
        raise InvalidLimit({'limit': limit})
    term_postings = [index.postings.get(term, []) for term in terms]
    if not all(term_postings):
        return []
    term_postings.sort(key=len)
    scores: Dict[RecordKey, int] = {(p.url, p.origin_site): p.score for p in term_postings[0]}
    for postings in term_postings[1:]:
        matched = {}
        for posting in postings:
            key = (posting.url, posting.origin_site)
            if key in scores:
                matched[key] = scores[key] + posting.score
        scores = matched
        if not scores:
            return []
    hits = []
    for key, score in scores.items():
        record = index.records[key]
        hits.append(Hit(record.url, record.origin_site, score, record.title, record.abstract))
    hits.sort(key=lambda hit: (-hit.score, hit.url, hit.origin_site))
    return hits if limit is None else hits[:limit]


class IndexFile(APIModel):
    generation: conint(ge=0) = 0
    records: List[MetadataRecord] = []


def dump_index(index: LeafIndex, path: Path, generation: int = 0) -> None:
    document = IndexFile(generation=generation, records=index.log)
    Path(path).write_text(document.json(separators=CANONICAL_SEPARATORS))


def load_index(path: Path) -> Tuple[LeafIndex, int]:
    document = IndexFile.parse_file(path)
    return LeafIndex(document.records), document.generation
