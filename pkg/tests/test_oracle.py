import asyncio

from hypothesis import HealthCheck, given, settings, strategies as st

from hiersearch.aggregator import group_records
from hiersearch.crawler import CorpusFetcher, FetchedPage, crawl_domain
from hiersearch.harness.oracle import LinkGraph, oracle_global_search, oracle_overlap
from hiersearch.harness.tiny3 import A_P0, A_P1, B_P0, C_P0, EXPECTED_OVERLAP, SITE_A, SITE_B, SITE_C
from hiersearch.indexer import build_index, score_keywords, tokenize
from hiersearch.webcorpus import CorpusSpec, DomainSpec, generate_corpus


def test_tiny3_overlap_over_all_sites(corpus):
    assert oracle_overlap(corpus) == EXPECTED_OVERLAP


def test_tiny3_overlap_by_domain(corpus):
    assert oracle_overlap(corpus, ['edu.us']) == {C_P0: 1, A_P1: 1}
    assert oracle_overlap(corpus, sites=[SITE_B]) == {B_P0: 1, A_P1: 1}


def test_link_graph(corpus):
    graph = LinkGraph(corpus)
    assert graph.links[A_P0] == [A_P1, B_P0]
    assert graph.reachable(SITE_A) == {A_P0, A_P1}
    assert graph.stop_targets(SITE_A) == {B_P0}
    assert graph.stop_targets(SITE_C) == {A_P1}
    assert graph.keywords(A_P1) == {'w3': 9, 'w5': 8, 'w8': 5, 'w9': 1}


def test_global_search(corpus):
    hits = oracle_global_search(corpus, 'w3')
    assert [(hit.url, hit.total_score, hit.keyword_total, hit.sources) for hit in hits] == [
        (A_P1, 3, 9, ('edu.cn', 'edu.us')),
    ]
    assert [hit.url for hit in oracle_global_search(corpus, 'w2')] == [B_P0, A_P0, C_P0]
    assert oracle_global_search(corpus, '') == []
    assert oracle_global_search(corpus, 'w2 w3') == []


def test_global_search_with_custom_groups(corpus):
    hits = oracle_global_search(corpus, 'w3', {'all': [SITE_A, SITE_B, SITE_C]})
    assert [(hit.url, hit.total_score, hit.sources) for hit in hits] == [(A_P1, 3, ('all',))]


corpus_specs = st.builds(
    CorpusSpec,
    seed=st.integers(min_value=0, max_value=2 ** 32),
    domains=st.just([DomainSpec(name='edu.cn', sites=2, pages_per_site=6),
                     DomainSpec(name='edu.us', sites=2, pages_per_site=5)]),
    intra_link_prob=st.floats(min_value=0, max_value=0.3),
    cross_site_link_prob=st.floats(min_value=0, max_value=0.3),
    cross_domain_link_prob=st.floats(min_value=0, max_value=0.3),
    vocab_size=st.just(15),
    words_per_page=st.integers(min_value=1, max_value=10),
)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(spec=corpus_specs)
def test_pipeline_overlap_matches_oracle(spec):
    corpus = generate_corpus(spec)
    fetcher = CorpusFetcher(corpus)
    for domain in corpus.domains:
        crawl = asyncio.run(crawl_domain(fetcher, domain, [site.root_url for site in corpus.sites_of(domain)]))
        grouped = group_records(build_index(crawl.pages).records.values())
        assert {url: record.overlap_count for url, record in grouped.items()} == oracle_overlap(corpus, [domain])


@settings(max_examples=25, deadline=None)
@given(spec=corpus_specs)
def test_regex_keywords_match_indexer(spec):
    corpus = generate_corpus(spec)
    graph = LinkGraph(corpus)
    for url in sorted(corpus.pages)[:5]:
        page = FetchedPage(url=url, html_bytes=corpus.pages[url].html_bytes, origin_site='x', is_stop_url=False,
                           fetch_seq=0)
        assert dict(score_keywords(tokenize(page))) == graph.keywords(url)
