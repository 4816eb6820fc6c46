import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

import uvicorn

from . import __version__
from .aggregator import Aggregator, AggregatorConfig, HarvestReport, create_aggregator_app
from .api import SearchResponse
from .crawler import DirectoryFetcher, Fetcher, HttpFetcher, crawl_domain, load_crawl, save_crawl
from .http import HttpClient
from .indexer import LeafIndex, build_index, dump_index, load_index
from .leafnode import LeafConfig, LeafService, create_leaf_app
from .rootnode import FederationConfig, RootBroker, create_root_app
from .settings import get_settings
from .webcorpus import CorpusSpec, MANIFEST_FILE, create_corpus_app, generate_corpus, load_corpus, load_manifest, \
    save_corpus

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else get_settings().log_level
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def split_address(address: str):
    host, _, port = address.rpartition(':')
    return host or '127.0.0.1', int(port)


def serve(app, address: str) -> None:
    host, port = split_address(address)
    uvicorn.run(app, host=host, port=port, log_level=get_settings().log_level.lower())


def make_fetcher(corpus: Optional[Path], origin: Optional[str]) -> Fetcher:
    if origin:
        settings = get_settings()
        return HttpFetcher(HttpClient(origin, concurrency=settings.http_concurrency, timeout=settings.http_timeout),
                           origin=origin)
    if corpus is None:
        raise SystemExit('either a corpus directory or --origin is required')
    return DirectoryFetcher(corpus)


def cmd_gen(args) -> int:
    if args.tiny3:
        from .harness.tiny3 import tiny3_corpus
        corpus = tiny3_corpus()
    else:
        corpus = generate_corpus(CorpusSpec.parse_file(args.spec))
    save_corpus(corpus, args.out)
    print(f'{len(corpus.pages)} pages in {len(corpus.sites)} sites written to {args.out}')
    return 0


def cmd_crawl(args) -> int:
    manifest_path: Optional[Path] = args.manifest
    if manifest_path is not None and manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_FILE
    if manifest_path is None and args.corpus is not None:
        manifest_path = args.corpus / MANIFEST_FILE
    corpus_dir = args.corpus or (manifest_path.parent if manifest_path is not None else None)
    roots: List[str] = args.site_root or []
    if not roots:
        if manifest_path is None:
            raise SystemExit('crawl needs --manifest (or --corpus) unless --site-root is given')
        manifest = load_manifest(manifest_path)
        sites = {site.site_name: site for site in manifest.sites()}
        roots = [sites[args.domain].root_url] if args.domain in sites else manifest.site_roots(args.domain)
    fetcher = make_fetcher(corpus_dir, args.origin)
    result = asyncio.run(crawl_domain(fetcher, args.domain, roots))
    path = save_crawl(result, args.out)
    print(f'{result.stats.fetched} pages ({result.stats.stop_urls} stop URLs), '
          f'{result.stats.dead} dead links -> {path}')
    return 0


def cmd_index(args) -> int:
    crawl = load_crawl(args.crawl)
    index = build_index(crawl.pages)
    dump_index(index, args.out, generation=1)
    print(f'{len(index)} records -> {args.out}')
    return 0


def cmd_serve_corpus(args) -> int:
    corpus = load_corpus(args.corpus)
    serve(create_corpus_app(lambda: corpus), args.listen)
    return 0


def cmd_serve_leaf(args) -> int:
    config = LeafConfig.parse_file(args.config)
    index: Optional[LeafIndex] = None
    generation = 0
    if args.index and args.index.exists():
        index, generation = load_index(args.index)
        logger.info('Loaded %s records of generation %s from %s', len(index), generation, args.index)
    service = LeafService(config, make_fetcher(args.corpus, args.origin), index=index, generation=generation,
                          index_path=args.index)
    serve(create_leaf_app(service), config.listen_address)
    return 0


def cmd_serve_agg(args) -> int:
    config = AggregatorConfig.parse_file(args.config)
    serve(create_aggregator_app(Aggregator(config)), config.listen_address)
    return 0


def cmd_serve_root(args) -> int:
    config = FederationConfig.parse_file(args.config)
    serve(create_root_app(RootBroker(config)), config.listen_address)
    return 0


def cmd_harvest(args) -> int:
    client = HttpClient(args.endpoint, timeout=get_settings().http_timeout, max_try_count=1)
    result = asyncio.run(client.request_json_api('post', '/v1/harvest', HarvestReport))
    if not result.success:
        print(f'harvest failed: {result.error}', file=sys.stderr)
        return 1
    print(result.data.json(indent=2))
    return 0


def cmd_query(args) -> int:
    client = HttpClient(args.endpoint, timeout=get_settings().http_timeout, max_try_count=1)
    params = {'q': args.q, 'limit': args.limit, 'exhaustive': 'true' if args.exhaustive else 'false'}
    result = asyncio.run(client.request_json_api('get', '/v1/search', SearchResponse, params=params))
    if not result.success:
        print(f'query failed: {result.error}', file=sys.stderr)
        return 1
    print(result.data.json(indent=2, exclude_none=True))
    return 0


def cmd_run(args) -> int:
    from .harness import TopologySpec, run_topology, tiny3_topology

    if args.tiny3:
        spec, base_dir = tiny3_topology(), None
    else:
        spec, base_dir = TopologySpec.parse_file(args.spec), args.spec.parent
    report = asyncio.run(run_topology(spec, subprocess=args.subprocess, workdir=args.workdir, base_dir=base_dir))
    document = report.json(indent=2)
    if args.transcript:
        args.transcript.write_text(document)
    else:
        print(document)
    for failure in report.failures:
        print(failure, file=sys.stderr)
    print(f'{report.name}: {"passed" if report.passed else "FAILED"}', file=sys.stderr)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='hiersearch', description='Hierarchical site-scoped search engine')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help='generate a synthetic corpus')
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument('--spec', type=Path, help='corpus spec JSON')
    source.add_argument('--tiny3', action='store_true', help='the three-site reference web')
    gen.add_argument('--out', type=Path, required=True)
    gen.set_defaults(handler=cmd_gen)

    crawl = commands.add_parser('crawl', help='crawl one domain of a saved corpus')
    crawl.add_argument('--manifest', type=Path, help='manifest.json of a saved corpus, pages are read beside it')
    crawl.add_argument('--corpus', type=Path, help='corpus directory, same as --manifest <dir>/manifest.json')
    crawl.add_argument('--origin', help='corpus server URL, used instead of reading files')
    crawl.add_argument('--domain', required=True, help='second-level domain or site name from the manifest')
    crawl.add_argument('--site-root', action='append', help='explicit site root, repeatable')
    crawl.add_argument('--out', type=Path, required=True)
    crawl.set_defaults(handler=cmd_crawl)

    index = commands.add_parser('index', help='build a leaf index file from a crawl')
    index.add_argument('--crawl', type=Path, required=True, help='directory holding crawl.json')
    index.add_argument('--out', type=Path, required=True)
    index.set_defaults(handler=cmd_index)

    serve_corpus = commands.add_parser('serve-corpus', help='serve a saved corpus over HTTP by virtual host')
    serve_corpus.add_argument('--corpus', type=Path, required=True)
    serve_corpus.add_argument('--listen', default='127.0.0.1:8000')
    serve_corpus.set_defaults(handler=cmd_serve_corpus)

    serve_leaf = commands.add_parser('serve-leaf', help='run a leaf node')
    serve_leaf.add_argument('--config', type=Path, required=True)
    serve_leaf.add_argument('--corpus', type=Path)
    serve_leaf.add_argument('--origin')
    serve_leaf.add_argument('--index', type=Path, help='index file to boot from and persist to')
    serve_leaf.set_defaults(handler=cmd_serve_leaf)

    serve_agg = commands.add_parser('serve-agg', help='run an aggregator node')
    serve_agg.add_argument('--config', type=Path, required=True)
    serve_agg.set_defaults(handler=cmd_serve_agg)

    serve_root = commands.add_parser('serve-root', help='run the root broker')
    serve_root.add_argument('--config', type=Path, required=True)
    serve_root.set_defaults(handler=cmd_serve_root)

    harvest = commands.add_parser('harvest', help='trigger one harvest round on an aggregator')
    harvest.add_argument('endpoint')
    harvest.set_defaults(handler=cmd_harvest)

    query = commands.add_parser('query', help='search any node')
    query.add_argument('endpoint')
    query.add_argument('q')
    query.add_argument('--limit', type=int, default=get_settings().default_limit)
    query.add_argument('--exhaustive', action='store_true')
    query.set_defaults(handler=cmd_query)

    run = commands.add_parser('run', help='run a scripted topology')
    script = run.add_mutually_exclusive_group(required=True)
    script.add_argument('--spec', type=Path, help='topology spec JSON')
    script.add_argument('--tiny3', action='store_true', help='the built-in reference scenario')
    run.add_argument('--transcript', type=Path, help='write the transcript here instead of stdout')
    run.add_argument('--subprocess', action='store_true', help='one OS process per node')
    run.add_argument('--workdir', type=Path, help='keep subprocess configs and logs here')
    run.set_defaults(handler=cmd_run)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    sys.exit(args.handler(args))
