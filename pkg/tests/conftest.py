from typing import Dict, List

import pytest

from hiersearch.aggregator import Aggregator, AggregatorConfig, LeafEndpoint, create_aggregator_app
from hiersearch.crawler import CorpusFetcher, FetchedPage
from hiersearch.harness.hosting import NodeRouter
from hiersearch.harness.tiny3 import tiny3_corpus, tiny3_site_names
from hiersearch.leafnode import LeafConfig, LeafService, create_leaf_app
from hiersearch.webcorpus import Corpus, CorpusSpec, DomainSpec, generate_corpus


def leaf_endpoint(name: str) -> str:
    return f'http://leaf.{name}'


def agg_endpoint(domain: str) -> str:
    return f'http://agg.{domain}'


@pytest.fixture
def corpus() -> Corpus:
    return tiny3_corpus()


@pytest.fixture
def fetcher(corpus) -> CorpusFetcher:
    return CorpusFetcher(corpus)


@pytest.fixture
def small_spec() -> CorpusSpec:
    return CorpusSpec(seed=7,
                      domains=[DomainSpec(name='edu.cn', sites=3, pages_per_site=12),
                               DomainSpec(name='edu.us', sites=2, pages_per_site=12)],
                      intra_link_prob=0.1,
                      cross_site_link_prob=0.1,
                      cross_domain_link_prob=0.05,
                      vocab_size=30,
                      words_per_page=12)


@pytest.fixture
def tiny3_leaves(corpus, fetcher) -> Dict[str, LeafService]:
    """One unrefreshed leaf per tiny3 site, named after the site."""
    return {name: LeafService(LeafConfig(name=name, domain=name, site_roots=[corpus.site(name).root_url]), fetcher)
            for name in tiny3_site_names()}


@pytest.fixture
def router(tiny3_leaves) -> NodeRouter:
    router = NodeRouter()
    for name, service in tiny3_leaves.items():
        router.mount(f'leaf.{name}', create_leaf_app(service))
    return router


def make_aggregator(router: NodeRouter, domain: str, corpus: Corpus, **kwargs) -> Aggregator:
    config = AggregatorConfig(domain=domain,
                              leaves=[LeafEndpoint(name=site.site_name, endpoint=leaf_endpoint(site.site_name))
                                      for site in corpus.sites_of(domain)],
                              **kwargs)
    aggregator = Aggregator(config, transport=router)
    router.mount(f'agg.{domain}', create_aggregator_app(aggregator))
    return aggregator


def corpus_pages(corpus: Corpus) -> List[FetchedPage]:
    """Every page fetched once by its own site."""
    return [FetchedPage(url=url, html_bytes=source.html_bytes, origin_site=source.site_name, is_stop_url=False,
                        fetch_seq=seq)
            for seq, (url, source) in enumerate(sorted(corpus.pages.items()))]


@pytest.fixture(scope='session')
def perf_corpus() -> Corpus:
    """10,000 pages in 40 sites."""
    return generate_corpus(CorpusSpec(seed=11,
                                      domains=[DomainSpec(name='perf.edu', sites=40, pages_per_site=250)],
                                      vocab_size=1000))
