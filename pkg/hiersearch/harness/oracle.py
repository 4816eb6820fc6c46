"""
Brute-force oracles.

Everything here works straight off the raw HTML with regular expressions
and never imports the crawler, indexer or node code, so a bug in the
pipeline cannot certify itself.
"""
import re
from collections import Counter, deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple
from urllib.parse import urldefrag, urljoin, urlsplit, urlunsplit

from ..webcorpus import Corpus

_HREF = re.compile(r'<a\s[^>]*?href\s*=\s*"([^"]*)"', re.IGNORECASE)
_TITLE = re.compile(r'<title[^>]*>(.*?)</title>', re.IGNORECASE | re.DOTALL)
_H1 = re.compile(r'<h1[^>]*>(.*?)</h1>', re.IGNORECASE | re.DOTALL)
_BODY = re.compile(r'<body[^>]*>(.*)</body>', re.IGNORECASE | re.DOTALL)
_TAG = re.compile(r'<[^>]*>')
_WORD = re.compile(r'[A-Za-z0-9]+')

KEYWORD_CAP = 64


@dataclass(frozen=True)
class OracleHit:
    url: str
    total_score: int
    keyword_total: int
    sources: Tuple[str, ...]


def _words(text: str) -> List[str]:
    return [word.lower() for word in _WORD.findall(_TAG.sub(' ', text))]


def _canonical(base: str, href: str) -> Optional[str]:
    try:
        absolute, _ = urldefrag(urljoin(base, href.strip()))
        scheme, netloc, path, query, _ = urlsplit(absolute)
    except ValueError:
        return None
    if scheme.lower() not in ('http', 'https') or not netloc:
        return None
    return urlunsplit((scheme.lower(), netloc.lower(), path or '/', query, ''))


def _host(url: str) -> str:
    return urlsplit(url).hostname or ''


class LinkGraph:
    """Out-links and keyword tables of every page, read from raw HTML."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.links: Dict[str, List[str]] = {}
        for url, source in corpus.pages.items():
            html = source.html_bytes.decode('utf-8', errors='replace')
            targets = (_canonical(url, href) for href in _HREF.findall(html))
            self.links[url] = [target for target in targets if target is not None]
        self._reach: Dict[str, Set[str]] = {}
        self._keywords: Dict[str, Dict[str, int]] = {}

    def reachable(self, site_name: str) -> Set[str]:
        """Pages of a site reachable from its root over same-site links only."""
        if site_name not in self._reach:
            root = _canonical(self.corpus.site(site_name).root_url, '')
            seen: Set[str] = set()
            queue = deque([root] if root in self.corpus.pages else [])
            seen.update(queue)
            while queue:
                url = queue.popleft()
                for target in self.links[url]:
                    if target not in seen and _host(target) == site_name and target in self.corpus.pages:
                        seen.add(target)
                        queue.append(target)
            self._reach[site_name] = seen
        return self._reach[site_name]

    def stop_targets(self, site_name: str) -> Set[str]:
        return {target
                for url in self.reachable(site_name)
                for target in self.links[url]
                if _host(target) != site_name and target in self.corpus.pages}

    def keywords(self, url: str) -> Dict[str, int]:
        if url not in self._keywords:
            html = self.corpus.pages[url].html_bytes.decode('utf-8', errors='replace')
            scores: Counter = Counter()
            title = _TITLE.search(html)
            for word in _words(title.group(1) if title else ''):
                scores[word] += 8
            for heading in _H1.findall(html):
                for word in _words(heading):
                    scores[word] += 4
            body = _BODY.search(html)
            body_html = body.group(1) if body else _TITLE.sub(' ', html)
            for word in _words(body_html):
                scores[word] += 1
            ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:KEYWORD_CAP]
            self._keywords[url] = dict(ranked)
        return self._keywords[url]


def _crawled_sites(corpus: Corpus,
                   domains: Optional[Iterable[str]],
                   sites: Optional[Iterable[str]]) -> List[str]:
    if sites is not None:
        return list(sites)
    if domains is not None:
        wanted = set(domains)
        return [site.site_name for site in corpus.sites if site.domain in wanted]
    return [site.site_name for site in corpus.sites]


def oracle_overlap(corpus: Corpus,
                   domains: Optional[Iterable[str]] = None,
                   *,
                   sites: Optional[Iterable[str]] = None,
                   graph: Optional[LinkGraph] = None) -> Dict[str, int]:
    """
    Number of distinct crawled sites that hold a record of each url: its own
    site if that site is crawled, plus every other crawled site with an
    internally reachable page linking to it.
    """
    graph = graph or LinkGraph(corpus)
    counts: Counter = Counter()
    for site_name in _crawled_sites(corpus, domains, sites):
        for url in graph.reachable(site_name):
            counts[url] += 1
        for url in graph.stop_targets(site_name):
            counts[url] += 1
    return dict(counts)


def oracle_global_search(corpus: Corpus,
                         query: str,
                         groups: Optional[Mapping[str, Iterable[str]]] = None,
                         *,
                         graph: Optional[LinkGraph] = None) -> List[OracleHit]:
    """
    Whole-pipeline answer for `query` computed by direct scanning.

    `groups` maps aggregator name to the sites its leaves crawl; by default
    one group per second-level domain.
    """
    graph = graph or LinkGraph(corpus)
    terms = list(dict.fromkeys(word.lower() for word in _WORD.findall(query or '')))
    if not terms:
        return []
    if groups is None:
        groups = {domain: [site.site_name for site in corpus.sites_of(domain)] for domain in corpus.domains}
    totals: Counter = Counter()
    keyword_totals: Dict[str, int] = {}
    sources: Dict[str, List[str]] = {}
    for name, group_sites in groups.items():
        origins: Counter = Counter()
        for site_name in group_sites:
            for url in graph.reachable(site_name) | graph.stop_targets(site_name):
                origins[url] += 1
        for url, count in origins.items():
            keywords = graph.keywords(url)
            if not all(term in keywords for term in terms):
                continue
            totals[url] += count
            keyword_totals[url] = max(keyword_totals.get(url, 0), sum(keywords[term] for term in terms))
            sources.setdefault(url, []).append(name)
    hits = [OracleHit(url=url,
                      total_score=total,
                      keyword_total=keyword_totals[url],
                      sources=tuple(sorted(sources[url])))
            for url, total in totals.items()]
    hits.sort(key=lambda hit: (-hit.total_score, -hit.keyword_total, hit.url))
    return hits
