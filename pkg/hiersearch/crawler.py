"""
Site-by-site spider.

A crawl follows links inside one site breadth-first. A link to any other
site is a "stop URL": its page is fetched and kept as content of the site
being crawled, but its own links are never followed.
"""
import abc
import asyncio
import base64
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Deque, List, Optional, Sequence, Set, Tuple
from urllib.parse import urljoin, urlsplit

import httpx

from .api import APIModel
from .exceptions import PageNotFound
from .html import anchor_hrefs, parse_html
from .http import HttpClient
from .webcorpus import Corpus, Manifest, PageSource, normalize_url, page_path, serve_page, MANIFEST_FILE

logger = logging.getLogger(__name__)

CRAWL_FILE = 'crawl.json'
FETCHABLE_SCHEMES = frozenset(('http', 'https'))


class FetchError(Exception):
    pass


class Fetcher(metaclass=abc.ABCMeta):
    """Anything that turns a URL into page bytes; shared by concurrent site crawls."""

    @abc.abstractmethod
    async def fetch(self, url: str) -> PageSource:
        ...


class CorpusFetcher(Fetcher):

    def __init__(self, corpus: Corpus):
        self.corpus = corpus

    async def fetch(self, url: str) -> PageSource:
        return serve_page(self.corpus, url)


class DirectoryFetcher(Fetcher):
    """Reads pages of a corpus saved with `save_corpus`, fresh on every fetch."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        manifest = Manifest.parse_file(self.directory / MANIFEST_FILE)
        self.sites = {site.site_name: site for site in manifest.sites()}

    async def fetch(self, url: str) -> PageSource:
        try:
            url = normalize_url(url)
        except ValueError:
            raise PageNotFound({'url': url})
        site = self.sites.get(urlsplit(url).hostname or '')
        if site is None:
            raise PageNotFound({'url': url})
        path = page_path(self.directory, site, url)
        if not path.is_file():
            raise PageNotFound({'url': url})
        return PageSource(html_bytes=path.read_bytes(), site_name=site.site_name)


class HttpFetcher(Fetcher):
    """
    HTTP GET binding.

    With `origin` set, every request goes to that server and the page's
    host travels in the Host header (one static server for all sites).
    """

    def __init__(self, http: HttpClient, origin: Optional[str] = None):
        self.http = http
        self.origin = origin.rstrip('/') if origin else None

    async def fetch(self, url: str) -> PageSource:
        parts = urlsplit(url)
        target, headers = url, None
        if self.origin:
            target = self.origin + (parts.path or '/')
            headers = {'host': parts.netloc}
        async with self.http.limit:
            async with self.http.create_client() as client:
                try:
                    response = await client.get(target, headers=headers)
                except httpx.HTTPError as e:
                    raise FetchError(f'{url}: {e}') from e
        if response.status_code == 404:
            raise PageNotFound({'url': url})
        if response.status_code != 200:
            raise FetchError(f'{url}: HTTP {response.status_code}')
        return PageSource(html_bytes=response.content, site_name=parts.hostname or '')


class LinkClass(str, Enum):
    INTERNAL = 'internal'
    STOP = 'stop'


@dataclass(frozen=True)
class FetchedPage:
    url: str
    html_bytes: bytes
    origin_site: str
    is_stop_url: bool
    fetch_seq: int


@dataclass
class SiteCrawl:
    site: str
    pages: List[FetchedPage] = field(default_factory=list)
    dead_links: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class CrawlStats:
    fetched: int = 0
    stop_urls: int = 0
    dead: int = 0
    skipped_sites: List[str] = field(default_factory=list)


@dataclass
class CrawlResult:
    domain: str
    pages: List[FetchedPage] = field(default_factory=list)
    dead_links: List[str] = field(default_factory=list)
    stats: CrawlStats = field(default_factory=CrawlStats)
    warnings: List[str] = field(default_factory=list)


def site_of(url: str) -> str:
    return urlsplit(normalize_url(url)).hostname or ''


def resolve_link(base_url: str, href: str) -> str:
    """Absolute normalized URL for `href`; ValueError when it cannot be fetched."""
    url = normalize_url(urljoin(base_url, href))
    parts = urlsplit(url)
    if parts.scheme not in FETCHABLE_SCHEMES or not parts.hostname:
        raise ValueError(f'Not a fetchable link: {href!r}')
    return url


def classify_link(base_url: str, href: str, current_site: str) -> LinkClass:
    try:
        url = resolve_link(base_url, href)
    except ValueError as e:
        logger.warning('Link %r on %s: %s', href, base_url, e)
        return LinkClass.STOP
    return LinkClass.INTERNAL if urlsplit(url).hostname == current_site.lower() else LinkClass.STOP


async def crawl_site(fetcher: Fetcher, site_root: str, site: str) -> SiteCrawl:
    site = site.lower()
    result = SiteCrawl(site=site)
    root = normalize_url(site_root)
    frontier: Deque[Tuple[str, bool]] = deque([(root, False)])
    seen: Set[str] = {root}
    while frontier:
        url, is_stop = frontier.popleft()
        try:
            source = await fetcher.fetch(url)
        except (PageNotFound, FetchError) as e:
            if url == root:
                logger.warning('Site %s skipped, root %s failed: %s', site, root, e)
                result.error = f'root {root} unreachable'
                return result
            logger.info('Dead link %s in site %s', url, site)
            result.dead_links.append(url)
            continue
        result.pages.append(FetchedPage(url=url,
                                        html_bytes=source.html_bytes,
                                        origin_site=site,
                                        is_stop_url=is_stop,
                                        fetch_seq=len(result.pages)))
        if is_stop:
            continue
        for href in anchor_hrefs(parse_html(source.html_bytes)):
            try:
                link = resolve_link(url, href)
            except ValueError as e:
                result.warnings.append(f'{url}: {e}')
                continue
            if link in seen:
                continue
            seen.add(link)
            frontier.append((link, urlsplit(link).hostname != site))
    return result


async def crawl_domain(fetcher: Fetcher, domain: str, site_roots: Sequence[str]) -> CrawlResult:
    roots = list(dict.fromkeys(normalize_url(root) for root in site_roots))
    crawls = await asyncio.gather(*(crawl_site(fetcher, root, site_of(root)) for root in roots))
    result = CrawlResult(domain=domain)
    for crawl in crawls:
        if crawl.error:
            result.stats.skipped_sites.append(crawl.site)
        offset = len(result.pages)
        result.pages.extend(FetchedPage(url=page.url,
                                        html_bytes=page.html_bytes,
                                        origin_site=page.origin_site,
                                        is_stop_url=page.is_stop_url,
                                        fetch_seq=offset + page.fetch_seq)
                            for page in crawl.pages)
        result.dead_links.extend(crawl.dead_links)
        result.warnings.extend(crawl.warnings)
    result.stats.fetched = len(result.pages)
    result.stats.stop_urls = sum(1 for page in result.pages if page.is_stop_url)
    result.stats.dead = len(result.dead_links)
    logger.info('Crawled %s: %s pages (%s stop URLs), %s dead links, %s sites skipped',
                domain, result.stats.fetched, result.stats.stop_urls, result.stats.dead,
                len(result.stats.skipped_sites))
    return result


class CrawledPageModel(APIModel):
    url: str
    origin_site: str
    is_stop_url: bool
    fetch_seq: int
    html: str

    @classmethod
    def from_page(cls, page: FetchedPage) -> 'CrawledPageModel':
        return cls(url=page.url, origin_site=page.origin_site, is_stop_url=page.is_stop_url,
                   fetch_seq=page.fetch_seq, html=base64.b64encode(page.html_bytes).decode('ascii'))

    def to_page(self) -> FetchedPage:
        return FetchedPage(url=self.url, html_bytes=base64.b64decode(self.html), origin_site=self.origin_site,
                           is_stop_url=self.is_stop_url, fetch_seq=self.fetch_seq)


class CrawlFile(APIModel):
    domain: str
    pages: List[CrawledPageModel] = []
    dead_links: List[str] = []
    skipped_sites: List[str] = []
    warnings: List[str] = []


def save_crawl(result: CrawlResult, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CRAWL_FILE
    document = CrawlFile(domain=result.domain,
                         pages=[CrawledPageModel.from_page(page) for page in result.pages],
                         dead_links=result.dead_links,
                         skipped_sites=result.stats.skipped_sites,
                         warnings=result.warnings)
    path.write_text(document.canonical_json())
    return path


def load_crawl(directory: Path) -> CrawlResult:
    document = CrawlFile.parse_file(Path(directory) / CRAWL_FILE)
    pages = [page.to_page() for page in document.pages]
    stats = CrawlStats(fetched=len(pages),
                       stop_urls=sum(1 for page in pages if page.is_stop_url),
                       dead=len(document.dead_links),
                       skipped_sites=list(document.skipped_sites))
    return CrawlResult(domain=document.domain, pages=pages, dead_links=list(document.dead_links),
                       stats=stats, warnings=list(document.warnings))
