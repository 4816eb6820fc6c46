from collections import defaultdict
from urllib.parse import urlsplit

import pytest
from fastapi.testclient import TestClient
from hypothesis import given, strategies as st
from pydantic import ValidationError

from hiersearch.exceptions import PageNotFound
from hiersearch.harness.oracle import LinkGraph
from hiersearch.harness.tiny3 import A_P0, A_P1, SITE_A
from hiersearch.webcorpus import (CorpusSpec, DomainSpec, Manifest, SplitMix64, create_corpus_app, generate_corpus,
                                  load_corpus, normalize_url, page_url, render_page, sample_indices, save_corpus,
                                  serve_page, site_stream_seed)


def test_splitmix64_reference_values():
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4


def test_splitmix64_helpers_stay_in_range():
    rng = SplitMix64(42)
    assert all(0 <= rng.random() < 1 for _ in range(200))
    assert all(0 <= rng.below(7) < 7 for _ in range(200))
    assert rng.chance(1.0) is True
    assert rng.chance(0.0) is False


def test_site_streams_differ():
    seeds = {site_stream_seed(7, index) for index in range(50)}
    assert len(seeds) == 50


@given(seed=st.integers(min_value=0, max_value=2 ** 64 - 1),
       count=st.integers(min_value=0, max_value=200),
       probability=st.floats(min_value=0, max_value=1))
def test_sample_indices_are_sorted_distinct_and_in_range(seed, count, probability):
    indices = sample_indices(SplitMix64(seed), count, probability)
    assert indices == sorted(set(indices))
    assert all(0 <= index < count for index in indices)


def test_sample_indices_edges():
    rng = SplitMix64(1)
    assert sample_indices(rng, 10, 0.0) == []
    assert sample_indices(rng, 10, 1.0) == list(range(10))
    assert sample_indices(rng, 0, 0.5) == []
    assert rng.state == SplitMix64(1).state
    assert 300 < len(sample_indices(rng, 10000, 0.05)) < 700


def test_generation_is_deterministic(small_spec):
    first = generate_corpus(small_spec)
    second = generate_corpus(CorpusSpec.parse_raw(small_spec.json()))
    assert first.pages == second.pages
    assert first.sites == second.sites


def test_seed_changes_pages(small_spec):
    other = generate_corpus(small_spec.copy(update={'seed': 8}))
    assert other.pages.keys() == generate_corpus(small_spec).pages.keys()
    assert other.pages != generate_corpus(small_spec).pages


def test_layout(small_spec):
    corpus = generate_corpus(small_spec)
    assert len(corpus.pages) == small_spec.page_count == 60
    assert corpus.domains == ['edu.cn', 'edu.us']
    assert [site.site_name for site in corpus.sites_of('edu.us')] == ['s0000.edu.us', 's0001.edu.us']
    for site in corpus.sites:
        assert site.root_url == page_url(site.site_name, 0)
        assert site.root_url in corpus.pages


def test_every_page_reachable_from_its_site_root(small_spec):
    corpus = generate_corpus(small_spec.copy(update={'intra_link_prob': 0.0,
                                                     'cross_site_link_prob': 0.0,
                                                     'cross_domain_link_prob': 0.0}))
    graph = LinkGraph(corpus)
    for site in corpus.sites:
        own_pages = {url for url, source in corpus.pages.items() if source.site_name == site.site_name}
        assert graph.reachable(site.site_name) == own_pages


def test_generated_hrefs_never_dangle(small_spec):
    corpus = generate_corpus(small_spec.copy(update={'intra_link_prob': 0.3,
                                                     'cross_site_link_prob': 0.5,
                                                     'cross_domain_link_prob': 0.5}))
    graph = LinkGraph(corpus)
    targets = {target for url in corpus.pages for target in graph.links[url]}
    assert targets <= set(corpus.pages)
    foreign = {target for url, links in graph.links.items() for target in links
               if corpus.pages[target].site_name != corpus.pages[url].site_name}
    assert {urlsplit(url).hostname.split('.', 1)[1] for url in foreign} == {'edu.cn', 'edu.us'}


def test_seed_42_has_a_page_linked_from_two_foreign_sites():
    corpus = generate_corpus(CorpusSpec(seed=42,
                                        domains=[DomainSpec(name='edu.cn', sites=3, pages_per_site=10)],
                                        cross_site_link_prob=0.2))
    graph = LinkGraph(corpus)
    linking_sites = defaultdict(set)
    for url, targets in graph.links.items():
        source_site = corpus.pages[url].site_name
        for target in targets:
            if corpus.pages[target].site_name != source_site:
                linking_sites[target].add(source_site)
    assert max(len(sites) for sites in linking_sites.values()) >= 2


def test_link_probabilities_bound_cross_links(small_spec):
    corpus = generate_corpus(small_spec.copy(update={'cross_site_link_prob': 0.0, 'cross_domain_link_prob': 0.0}))
    graph = LinkGraph(corpus)
    for url, targets in graph.links.items():
        site = corpus.pages[url].site_name
        assert all(target.startswith(f'http://{site}/') for target in targets)


def test_bad_spec_rejected():
    with pytest.raises(ValidationError):
        CorpusSpec(domains=[DomainSpec(name='edu.cn', sites=1, pages_per_site=1)] * 2)
    with pytest.raises(ValidationError):
        CorpusSpec(domains=[DomainSpec(name='edu.cn', sites=1, pages_per_site=1)], intra_link_prob=1.5)
    with pytest.raises(ValidationError):
        DomainSpec(name='localhost', sites=1, pages_per_site=1)


def test_render_page():
    assert render_page(['w1'], ['w2'], ['w3', 'w4'], [('p1.html', 'w5')]) == (
        b'<html><head><title>w1</title></head><body><h1>w2</h1><p>w3 w4</p>'
        b'<a href="p1.html">w5</a></body></html>')


@pytest.mark.parametrize('url, normalized', (
        ('HTTP://Hust.EDU.cn/p0.html#top', 'http://hust.edu.cn/p0.html'),
        ('http://hust.edu.cn', 'http://hust.edu.cn/'),
        ('http://hust.edu.cn/p0.html?x=1', 'http://hust.edu.cn/p0.html?x=1'),
))
def test_normalize_url(url, normalized):
    assert normalize_url(url) == normalized


def test_serve_page(corpus):
    assert serve_page(corpus, A_P0 + '#frag').site_name == SITE_A
    with pytest.raises(PageNotFound) as e:
        serve_page(corpus, 'http://hust.edu.cn/p9.html')
    assert e.value.context == {'url': 'http://hust.edu.cn/p9.html'}


def test_replace_and_remove_page_leave_original(corpus):
    changed = corpus.replace_page(A_P1, b'<html></html>')
    assert changed.pages[A_P1].html_bytes == b'<html></html>'
    assert corpus.pages[A_P1].html_bytes != b'<html></html>'
    removed = corpus.remove_page(A_P1)
    assert A_P1 not in removed.pages
    assert A_P1 in corpus.pages
    with pytest.raises(KeyError):
        corpus.replace_page('http://unknown.edu.cn/p0.html', b'')


def test_save_and_load(tmp_path, small_spec):
    corpus = generate_corpus(small_spec)
    save_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert loaded.pages == corpus.pages
    assert loaded.sites == corpus.sites
    assert loaded.spec == small_spec
    manifest = Manifest.parse_file(tmp_path / 'manifest.json')
    assert manifest.site_roots('edu.us') == ['http://s0000.edu.us/p0.html', 'http://s0001.edu.us/p0.html']
    assert (tmp_path / 'corpus' / 'edu.cn' / 's0002.edu.cn' / 'p11.html').is_file()


def test_corpus_app_serves_by_host(corpus):
    client = TestClient(create_corpus_app(lambda: corpus))
    response = client.get(A_P1)
    assert response.status_code == 200
    assert response.content == corpus.pages[A_P1].html_bytes
    missing = client.get('http://hust.edu.cn/p7.html')
    assert missing.status_code == 404
    assert missing.json()['error'] == 'not_found'
    assert client.get('/_health').json()['role'] == 'corpus'
