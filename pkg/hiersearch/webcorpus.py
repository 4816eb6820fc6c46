"""
Deterministic synthetic web: domains of sites of interlinked HTML pages.

Every site draws from its own splitmix64 stream, so the same `CorpusSpec`
always produces byte-identical pages whatever order sites are built in.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
from urllib.parse import urldefrag, urlsplit, urlunsplit

from fastapi import FastAPI, Request
from pydantic import conint, confloat, constr, validator
from starlette.responses import Response

from .api import APIModel, HealthStatus
from .exceptions import AppExceptionCase, PageNotFound, app_exception_handler
from .middleware import RequestLogMiddleware

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MANIFEST_FILE = 'manifest.json'
SPEC_FILE = 'spec.json'
PAGES_DIR = 'corpus'


class SplitMix64:

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, bound: int) -> int:
        return self.next_u64() % bound

    def chance(self, probability: float) -> bool:
        return self.random() < probability


def site_stream_seed(seed: int, site_index: int) -> int:
    return SplitMix64(seed ^ (((site_index + 1) * GOLDEN_GAMMA) & MASK64)).next_u64()


def sample_indices(rng: SplitMix64, count: int, probability: float) -> List[int]:
    """
    Indices of `range(count)`, each kept independently with `probability`.

    Draws one geometric gap per kept index instead of one coin per index,
    all of them before the caller draws anything else.
    """
    if probability <= 0 or count <= 0:
        return []
    if probability >= 1:
        return list(range(count))
    log_miss = math.log(1.0 - probability)
    indices = []
    index = -1
    while True:
        index += 1 + int(math.log(1.0 - rng.random()) / log_miss)
        if index >= count:
            return indices
        indices.append(index)


class DomainSpec(APIModel):
    name: constr(regex=r'^[a-z0-9-]+(\.[a-z0-9-]+)+$')
    sites: conint(ge=1)
    pages_per_site: conint(ge=1)


class CorpusSpec(APIModel):
    seed: conint(ge=0, le=MASK64) = 0
    domains: List[DomainSpec]
    intra_link_prob: confloat(ge=0, le=1) = 0.05
    cross_site_link_prob: confloat(ge=0, le=1) = 0.05
    cross_domain_link_prob: confloat(ge=0, le=1) = 0.02
    vocab_size: conint(ge=10) = 200
    words_per_page: conint(ge=1) = 40

    @validator('domains')
    def unique_domain_names(cls, v: List[DomainSpec]) -> List[DomainSpec]:
        names = [domain.name for domain in v]
        if len(set(names)) != len(names):
            raise ValueError('domain names must be unique')
        return v

    @property
    def page_count(self) -> int:
        return sum(domain.sites * domain.pages_per_site for domain in self.domains)


@dataclass(frozen=True)
class Site:
    site_name: str
    domain: str
    root_url: str


@dataclass(frozen=True)
class PageSource:
    html_bytes: bytes
    site_name: str


@dataclass(frozen=True)
class Corpus:
    sites: Tuple[Site, ...]
    pages: Mapping[str, PageSource]
    spec: Optional[CorpusSpec] = None
    _by_name: Dict[str, Site] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, '_by_name', {site.site_name: site for site in self.sites})

    @property
    def domains(self) -> List[str]:
        return list(dict.fromkeys(site.domain for site in self.sites))

    def site(self, site_name: str) -> Site:
        return self._by_name[site_name]

    def has_site(self, site_name: str) -> bool:
        return site_name in self._by_name

    def sites_of(self, domain: str) -> List[Site]:
        return [site for site in self.sites if site.domain == domain]

    def replace_page(self, url: str, html_bytes: bytes) -> 'Corpus':
        url = normalize_url(url)
        site_name = urlsplit(url).hostname or ''
        if not self.has_site(site_name):
            raise KeyError(f'No site "{site_name}" for {url}')
        pages = dict(self.pages)
        pages[url] = PageSource(html_bytes=html_bytes, site_name=site_name)
        return Corpus(sites=self.sites, pages=pages, spec=self.spec)

    def remove_page(self, url: str) -> 'Corpus':
        url = normalize_url(url)
        pages = {key: value for key, value in self.pages.items() if key != url}
        return Corpus(sites=self.sites, pages=pages, spec=self.spec)


def normalize_url(url: str) -> str:
    """Lowercase scheme and host, drop the fragment, default an empty path to "/"."""
    url, _ = urldefrag(url.strip())
    parts = urlsplit(url)
    netloc = parts.netloc.lower()
    path = parts.path or ('/' if netloc else '')
    return urlunsplit((parts.scheme.lower(), netloc, path, parts.query, ''))


def page_url(site_name: str, index: int) -> str:
    return f'http://{site_name}/p{index}.html'


def render_page(title: Sequence[str],
                heading: Sequence[str],
                paragraph: Sequence[str],
                anchors: Iterable[Tuple[str, str]]) -> bytes:
    links = ''.join(f'<a href="{href}">{text}</a>' for href, text in anchors)
    return (f'<html><head><title>{" ".join(title)}</title></head>'
            f'<body><h1>{" ".join(heading)}</h1><p>{" ".join(paragraph)}</p>{links}</body></html>'
            ).encode('utf-8')


def _site_layout(spec: CorpusSpec) -> List[Site]:
    layout = []
    for domain in spec.domains:
        for index in range(domain.sites):
            site_name = f's{index:04d}.{domain.name}'
            layout.append(Site(site_name=site_name, domain=domain.name, root_url=page_url(site_name, 0)))
    return layout


def _generate_site(spec: CorpusSpec, layout: List[Site], site_index: int) -> Dict[str, PageSource]:
    rng = SplitMix64(site_stream_seed(spec.seed, site_index))
    site = layout[site_index]
    pages_per_site = {domain.name: domain.pages_per_site for domain in spec.domains}
    size = pages_per_site[site.domain]
    siblings = [other for other in layout if other.domain == site.domain and other is not site]
    foreign: Dict[str, List[Site]] = {}
    for other in layout:
        if other.domain != site.domain:
            foreign.setdefault(other.domain, []).append(other)
    foreign_domains = list(foreign)

    def words(count: int) -> List[str]:
        return [f'w{rng.below(spec.vocab_size)}' for _ in range(count)]

    pages = {}
    for index in range(size):
        title, heading, paragraph = words(2), words(2), words(spec.words_per_page)
        # binary-tree spine first: keeps every page reachable from p0
        hrefs = [f'p{child}.html' for child in (2 * index + 1, 2 * index + 2) if child < size]
        for target in sample_indices(rng, size - 1, spec.intra_link_prob):
            hrefs.append(f'p{target + (target >= index)}.html')
        for position in sample_indices(rng, len(siblings), spec.cross_site_link_prob):
            other = siblings[position]
            hrefs.append(page_url(other.site_name, rng.below(pages_per_site[other.domain])))
        for position in sample_indices(rng, len(foreign_domains), spec.cross_domain_link_prob):
            domain_sites = foreign[foreign_domains[position]]
            other = domain_sites[rng.below(len(domain_sites))]
            hrefs.append(page_url(other.site_name, rng.below(pages_per_site[other.domain])))
        anchors = [(href, word) for href, word in zip(hrefs, words(len(hrefs)))]
        html = render_page(title, heading, paragraph, anchors)
        pages[page_url(site.site_name, index)] = PageSource(html_bytes=html, site_name=site.site_name)
    return pages


def generate_corpus(spec: CorpusSpec) -> Corpus:
    layout = _site_layout(spec)
    pages: Dict[str, PageSource] = {}
    for site_index in range(len(layout)):
        pages.update(_generate_site(spec, layout, site_index))
    logger.info('Generated corpus seed=%s: %s sites, %s pages', spec.seed, len(layout), len(pages))
    return Corpus(sites=tuple(layout), pages=pages, spec=spec)


def serve_page(corpus: Corpus, url: str) -> PageSource:
    try:
        key = normalize_url(url)
    except ValueError:
        raise PageNotFound({'url': url})
    source = corpus.pages.get(key)
    if source is None:
        raise PageNotFound({'url': url})
    return source


class ManifestSite(APIModel):
    site: str
    root: str


class ManifestDomain(APIModel):
    name: str
    sites: List[ManifestSite] = []


class Manifest(APIModel):
    domains: List[ManifestDomain] = []

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> 'Manifest':
        return cls(domains=[
            ManifestDomain(name=domain,
                           sites=[ManifestSite(site=site.site_name, root=site.root_url)
                                  for site in corpus.sites_of(domain)])
            for domain in corpus.domains
        ])

    def sites(self) -> List[Site]:
        return [Site(site_name=entry.site, domain=domain.name, root_url=entry.root)
                for domain in self.domains for entry in domain.sites]

    def site_roots(self, domain: str) -> List[str]:
        for entry in self.domains:
            if entry.name == domain:
                return [site.root for site in entry.sites]
        raise KeyError(f'Domain "{domain}" is not in the manifest')


def page_path(directory: Path, site: Site, url: str) -> Path:
    relative = urlsplit(url).path.lstrip('/') or 'index.html'
    return directory / PAGES_DIR / site.domain / site.site_name / relative


def save_page(directory: Path, site: Site, url: str, html_bytes: bytes) -> None:
    path = page_path(directory, site, url)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(html_bytes)


def save_corpus(corpus: Corpus, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST_FILE).write_text(Manifest.from_corpus(corpus).canonical_json())
    if corpus.spec is not None:
        (directory / SPEC_FILE).write_text(corpus.spec.canonical_json())
    for url, source in corpus.pages.items():
        save_page(directory, corpus.site(source.site_name), url, source.html_bytes)


def load_manifest(path: Path) -> Manifest:
    return Manifest.parse_file(path)


def load_corpus(directory: Path) -> Corpus:
    directory = Path(directory)
    manifest = load_manifest(directory / MANIFEST_FILE)
    spec = CorpusSpec.parse_file(directory / SPEC_FILE) if (directory / SPEC_FILE).exists() else None
    sites = manifest.sites()
    pages: Dict[str, PageSource] = {}
    for site in sites:
        site_dir = directory / PAGES_DIR / site.domain / site.site_name
        if not site_dir.is_dir():
            continue
        for path in sorted(site_dir.rglob('*')):
            if path.is_file():
                url = f'http://{site.site_name}/{path.relative_to(site_dir).as_posix()}'
                pages[url] = PageSource(html_bytes=path.read_bytes(), site_name=site.site_name)
    return Corpus(sites=tuple(sites), pages=pages, spec=spec)


def create_corpus_app(corpus_provider: Callable[[], Corpus]) -> FastAPI:
    """
    Serve pages by virtual host: `GET http://<site>/<path>` returns the page.
    """
    app = FastAPI(title='hiersearch corpus')
    app.add_middleware(RequestLogMiddleware)
    app.add_exception_handler(AppExceptionCase, app_exception_handler)

    @app.get('/_health', response_model=HealthStatus)
    async def health():
        return HealthStatus(node='corpus', role='corpus')

    @app.get('/{path:path}')
    async def page(path: str, request: Request):
        url = f'http://{request.url.hostname}/{path}'
        source = serve_page(corpus_provider(), url)
        return Response(content=source.html_bytes, media_type='text/html')

    return app
