"""
Scripted runs of a whole search hierarchy.

A run boots a topology, plays its scripted events in step order, checks
each result against the event's expectations and the brute-force oracles,
and returns a transcript. The transcript carries no timings, so two runs of
the same script over the same corpus produce identical output.
"""
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import httpx

from ..webcorpus import Corpus, SplitMix64, render_page
from .hosting import AGGREGATOR, LEAF, ROOT, InProcessHost, Node, SubprocessHost, TopologyHost
from .models import (TINY3, EventKind, ScriptedEvent, TopologyError, TopologySpec, TranscriptEntry,
                     TranscriptReport, complete_topology, leaf_sites, resolve_corpus)
from .oracle import LinkGraph, oracle_global_search, oracle_overlap
from .tiny3 import A_P0, A_P1, B_P0, SITE_B

logger = logging.getLogger(__name__)

MAX_LISTED = 20
ROLES_ANY = (LEAF, AGGREGATOR, ROOT)

Outcome = Tuple[Dict[str, Any], List[str]]


class TopologyRunner:

    def __init__(self, spec: TopologySpec, host: TopologyHost, corpus: Corpus):
        self.spec = spec
        self.host = host
        self.corpus = corpus
        self.graph = LinkGraph(corpus)
        self.leaf_roots: Dict[str, List[str]] = {leaf.node_name: list(leaf.site_roots) for leaf in spec.leaves}
        self.export_cursors: Dict[str, int] = {}
        self.down: Set[str] = set()

    async def run(self) -> TranscriptReport:
        entries = []
        for event in sorted(self.spec.scripted_events, key=lambda event: event.step):
            handler = getattr(self, f'_on_{event.event.value}')
            try:
                result, failures = await handler(event)
            except TopologyError as e:
                result, failures = {}, [str(e)]
            failures = failures + check_expectations(event, result)
            prefix = f'step {event.step} {event.event.value}'
            entries.append(TranscriptEntry(step=event.step,
                                           event=event.event,
                                           target=event.target,
                                           result=result,
                                           failures=[f'{prefix}: {failure}' for failure in failures]))
            logger.info('%s -> %s', prefix, 'ok' if not failures else f'{len(failures)} failures')
        failures = [failure for entry in entries for failure in entry.failures]
        return TranscriptReport(name=self.spec.name, passed=not failures, failures=failures, entries=entries)

    async def _call(self, node: Node, method: str, path: str, **kwargs) -> Tuple[Optional[int], Any]:
        timeout = max(self.spec.root.timeout * 2, 5.0)
        async with self.host.client(node, timeout=timeout).create_client() as client:
            try:
                response = await client.request(method, path, **kwargs)
            except httpx.HTTPError as e:
                return None, {'error': type(e).__name__}
        try:
            return response.status_code, response.json()
        except ValueError:
            return response.status_code, {'error': 'bad_json'}

    def _set_corpus(self, corpus: Corpus) -> None:
        self.corpus = corpus
        self.graph = LinkGraph(corpus)

    def _sites_of_leaves(self, names: Sequence[str]) -> List[str]:
        sites: Dict[str, None] = {}
        for name in names:
            leaf = next(leaf for leaf in self.spec.leaves if leaf.node_name == name)
            for site in leaf_sites(leaf.copy(update={'site_roots': self.leaf_roots[name]})):
                sites[site] = None
        return list(sites)

    def _aggregator_sites(self, domain: str) -> List[str]:
        spec = next(spec for spec in self.spec.aggregators if spec.domain == domain)
        return self._sites_of_leaves(spec.leaves)

    async def _on_mutate_page(self, event: ScriptedEvent) -> Outcome:
        if not event.url or event.html is None:
            raise TopologyError('mutate_page needs url and html')
        try:
            corpus = self.corpus.replace_page(event.url, event.html.encode('utf-8'))
        except KeyError as e:
            raise TopologyError(str(e))
        self._set_corpus(corpus)
        await self.host.set_corpus(corpus)
        return {'url': event.url}, []

    async def _on_delete_page(self, event: ScriptedEvent) -> Outcome:
        if not event.url:
            raise TopologyError('delete_page needs url')
        corpus = self.corpus.remove_page(event.url)
        self._set_corpus(corpus)
        await self.host.set_corpus(corpus)
        return {'url': event.url}, []

    async def _on_kill_node(self, event: ScriptedEvent) -> Outcome:
        nodes = self.host.resolve(event.target, ROLES_ANY)
        for node in nodes:
            await self.host.kill(node)
            self.down.add(node.key)
        return {'nodes': [node.key for node in nodes]}, []

    async def _on_revive_node(self, event: ScriptedEvent) -> Outcome:
        nodes = self.host.resolve(event.target, ROLES_ANY)
        for node in nodes:
            await self.host.revive(node)
            self.down.discard(node.key)
        return {'nodes': [node.key for node in nodes]}, []

    async def _refresh(self, node: Node) -> Tuple[Optional[int], Any]:
        return await self._call(node, 'post', '/v1/refresh', json={'site_roots': self.leaf_roots[node.name]})

    async def _on_refresh(self, event: ScriptedEvent) -> Outcome:
        reports, failed = {}, []
        for node in self.host.resolve(event.target, (LEAF,)):
            status, body = await self._refresh(node)
            if status == 200:
                reports[node.name] = body
            else:
                failed.append(node.name)
        return {'changed': sum(report['changed'] for report in reports.values()),
                'tombstones': sum(report['tombstones'] for report in reports.values()),
                'failed': failed,
                'reports': reports}, []

    async def _on_remove_site(self, event: ScriptedEvent) -> Outcome:
        if not event.site:
            raise TopologyError('remove_site needs site')
        if event.target:
            nodes = self.host.resolve(event.target, (LEAF,))
        else:
            nodes = [node for node in self.host.resolve(None, (LEAF,))
                     if event.site in self._sites_of_leaves([node.name])]
        if not nodes:
            raise TopologyError(f'no leaf crawls {event.site}')
        reports, failed = {}, []
        for node in nodes:
            self.leaf_roots[node.name] = [root for root in self.leaf_roots[node.name]
                                          if httpx.URL(root).host != event.site]
            status, body = await self._refresh(node)
            if status == 200:
                reports[node.name] = body
            else:
                failed.append(node.name)
        return {'site': event.site,
                'tombstones': sum(report['tombstones'] for report in reports.values()),
                'failed': failed,
                'reports': reports}, []

    async def _on_harvest(self, event: ScriptedEvent) -> Outcome:
        names = self.host.endpoint_names()
        reports, unreachable, failed_leaves = {}, [], set()
        for node in self.host.resolve(event.target, (AGGREGATOR,)):
            status, body = await self._call(node, 'post', '/v1/harvest')
            if status != 200:
                unreachable.append(node.name)
                continue
            body['failed'] = sorted(names.get(endpoint.rstrip('/'), endpoint) for endpoint in body['failed'])
            failed_leaves.update(body['failed'])
            reports[node.name] = body
        return {'applied': sum(report['applied'] for report in reports.values()),
                'failed': sorted(failed_leaves),
                'unreachable': unreachable,
                'reports': reports}, []

    async def _on_query(self, event: ScriptedEvent) -> Outcome:
        [node] = self.host.resolve(event.target or ROOT, ROLES_ANY)
        exhaustive = event.exhaustive or event.oracle
        params = {'q': event.q or '', 'limit': event.limit, 'exhaustive': 'true' if exhaustive else 'false'}
        status, body = await self._call(node, 'get', '/v1/search', params=params)
        result = {'status': status, **body}
        failures = []
        if event.oracle:
            if node.role != ROOT:
                raise TopologyError('oracle comparison needs the root as target')
            if status == 200:
                failures += self._compare_with_oracle(event.q or '', body.get('results', []))
            else:
                failures.append(f'status {status}')
        return result, failures

    def _compare_with_oracle(self, query: str, results: List[dict]) -> List[str]:
        groups = {spec.domain: self._aggregator_sites(spec.domain)
                  for spec in self.spec.aggregators if f'{AGGREGATOR}:{spec.domain}' not in self.down}
        wanted = [(hit.url, hit.total_score, hit.keyword_total, list(hit.sources))
                  for hit in oracle_global_search(self.corpus, query, groups, graph=self.graph)]
        got = [(item['url'], item['score'], item.get('keyword_total'), item.get('sources', []))
               for item in results]
        if got == wanted:
            return []
        for position, (left, right) in enumerate(zip(got, wanted)):
            if left != right:
                return [f'rank {position}: got {left}, oracle {right}']
        return [f'got {len(got)} results, oracle {len(wanted)}']

    async def _export_all(self, node: Node, cursor: int) -> Tuple[Optional[List[dict]], int]:
        records = []
        while True:
            status, body = await self._call(node, 'get', '/v1/export', params={'cursor': cursor})
            if status != 200:
                return None, cursor
            records += body['records']
            progressed = body['next_cursor'] > cursor
            cursor = max(cursor, body['next_cursor'])
            if body['done'] or not progressed:
                return records, cursor

    async def _on_export(self, event: ScriptedEvent) -> Outcome:
        [node] = self.host.resolve(event.target, (LEAF,))
        start = event.cursor if event.cursor is not None else self.export_cursors.get(node.name, 0)
        records, cursor = await self._export_all(node, start)
        if records is None:
            return {'cursor': start, 'status': 'unreachable'}, []
        self.export_cursors[node.name] = cursor
        return {'cursor': start,
                'next_cursor': cursor,
                'count': len(records),
                'records': [{'url': record['url'],
                             'origin_site': record['origin_site'],
                             'version': record['version'],
                             'deleted': record['deleted']} for record in records]}, []

    async def _on_check_coverage(self, event: ScriptedEvent) -> Outcome:
        covered: Set[str] = set()
        expected: Set[str] = set()
        failures = []
        for node in self.host.resolve(event.target, (LEAF,)):
            if node.key in self.down:
                continue
            records, _ = await self._export_all(node, 0)
            if records is None:
                failures.append(f'leaf {node.name} unreachable')
                continue
            covered.update(record['url'] for record in records if not record['deleted'])
            sites = set(self._sites_of_leaves([node.name]))
            expected.update(url for url, source in self.corpus.pages.items() if source.site_name in sites)
        missing = sorted(expected - covered)
        if missing:
            failures.append(f'{len(missing)} pages of crawled sites have no record: {missing[:MAX_LISTED]}')
        return {'expected': len(expected), 'covered': len(covered & expected), 'missing': missing[:MAX_LISTED]}, \
            failures

    async def _on_check_overlap(self, event: ScriptedEvent) -> Outcome:
        result, failures = {}, []
        for node in self.host.resolve(event.target, (AGGREGATOR,)):
            if node.key in self.down:
                continue
            status, body = await self._call(node, 'get', '/v1/overlap')
            if status != 200:
                failures.append(f'aggregator {node.name} unreachable')
                continue
            got: Dict[str, int] = body['counts']
            wanted = oracle_overlap(self.corpus, sites=self._aggregator_sites(node.name), graph=self.graph)
            mismatches = {url: [got.get(url, 0), wanted.get(url, 0)]
                          for url in sorted(set(got) | set(wanted)) if got.get(url, 0) != wanted.get(url, 0)}
            if mismatches:
                listed = dict(list(mismatches.items())[:MAX_LISTED])
                failures.append(f'aggregator {node.name}: {len(mismatches)} overlap counts differ '
                                f'(got, oracle): {listed}')
            result[node.name] = {'urls': len(got), 'mismatches': len(mismatches)}
        return result, failures


def check_expectations(event: ScriptedEvent, result: Dict[str, Any]) -> List[str]:
    """
    Keys understood besides plain result fields: `urls` (exact ordered list),
    `top`, `count`, `scores` ({url: score}) and `absent` (urls that must not appear).
    """
    failures = []
    results = result.get('results', [])
    by_url = {item['url']: item for item in results}
    for key, wanted in event.expect.items():
        if key == 'urls':
            got = [item['url'] for item in results]
        elif key == 'top':
            got = results[0]['url'] if results else None
        elif key == 'count':
            got = result['count'] if 'count' in result else len(results)
        elif key == 'scores':
            got = {url: by_url[url]['score'] if url in by_url else None for url in wanted}
        elif key == 'absent':
            got = [url for url in wanted if url in by_url]
            wanted = []
        else:
            got = result.get(key)
        if got != wanted:
            failures.append(f'expected {key}={wanted!r}, got {got!r}')
    return failures


async def run_topology(spec: TopologySpec,
                       *,
                       subprocess: bool = False,
                       workdir: Optional[Path] = None,
                       base_dir: Optional[Path] = None) -> TranscriptReport:
    corpus = resolve_corpus(spec, base_dir)
    try:
        spec = complete_topology(spec, corpus)
    except TopologyError as e:
        return TranscriptReport(name=spec.name, passed=False, failures=[str(e)])

    with tempfile.TemporaryDirectory(prefix='hiersearch-') as scratch:
        if subprocess:
            host: TopologyHost = SubprocessHost(spec, corpus, Path(workdir or scratch))
        else:
            host = InProcessHost(spec, corpus)
        try:
            await host.start()
            return await TopologyRunner(spec, host, corpus).run()
        except TopologyError as e:
            logger.error('Topology %s aborted: %s', spec.name, e)
            return TranscriptReport(name=spec.name, passed=False, failures=[str(e)])
        finally:
            await host.stop()


def random_queries(corpus: Corpus, count: int, seed: int) -> List[str]:
    """One- and two-term queries over the corpus vocabulary, reproducible from `seed`."""
    graph = LinkGraph(corpus)
    vocabulary = sorted({term for url in sorted(corpus.pages) for term in graph.keywords(url)})
    if not vocabulary:
        return []
    rng = SplitMix64(seed)
    queries = []
    for _ in range(count):
        terms = [vocabulary[rng.below(len(vocabulary))]]
        if rng.chance(1 / 3):
            terms.append(vocabulary[rng.below(len(vocabulary))])
        queries.append(' '.join(terms))
    return queries


def acceptance_script(queries: Sequence[str]) -> List[ScriptedEvent]:
    """Crawl everything, harvest everything, check coverage and overlap, then compare each query with the oracle."""
    events = [ScriptedEvent(step=0, event=EventKind.REFRESH),
              ScriptedEvent(step=1, event=EventKind.HARVEST),
              ScriptedEvent(step=2, event=EventKind.CHECK_COVERAGE),
              ScriptedEvent(step=3, event=EventKind.CHECK_OVERLAP)]
    events += [ScriptedEvent(step=4 + i, event=EventKind.QUERY, q=query, oracle=True, limit=10)
               for i, query in enumerate(queries)]
    return events


def tiny3_topology() -> TopologySpec:
    b_p0_unlinked = render_page(['w2', 'w6'], ['w7'], ['w6', 'w1'], []).decode('utf-8')
    events = [
        ScriptedEvent(step=0, event=EventKind.REFRESH),
        ScriptedEvent(step=1, event=EventKind.HARVEST),
        ScriptedEvent(step=2, event=EventKind.CHECK_COVERAGE),
        ScriptedEvent(step=3, event=EventKind.CHECK_OVERLAP),
        ScriptedEvent(step=4, event=EventKind.QUERY, target='edu.cn', q='w9', expect={'urls': [A_P1, A_P0]}),
        ScriptedEvent(step=5, event=EventKind.QUERY, q='w3', oracle=True, expect={'scores': {A_P1: 3}}),
        ScriptedEvent(step=6, event=EventKind.KILL_NODE, target='edu.us'),
        ScriptedEvent(step=7, event=EventKind.QUERY, q='w3',
                      expect={'scores': {A_P1: 2}, 'partial': True, 'failed_sources': ['edu.us']}),
        ScriptedEvent(step=8, event=EventKind.REVIVE_NODE, target='edu.us'),
        ScriptedEvent(step=9, event=EventKind.MUTATE_PAGE, url=B_P0, html=b_p0_unlinked),
        ScriptedEvent(step=10, event=EventKind.REFRESH, target=SITE_B, expect={'changed': 1, 'tombstones': 1}),
        ScriptedEvent(step=11, event=EventKind.HARVEST),
        ScriptedEvent(step=12, event=EventKind.CHECK_OVERLAP),
        ScriptedEvent(step=13, event=EventKind.QUERY, q='w3', oracle=True,
                      expect={'scores': {A_P1: 2}, 'partial': False}),
    ]
    return TopologySpec(name=TINY3, corpus=TINY3, scripted_events=events)
