"""
Where the nodes of a topology live: either as ASGI apps behind one in-process
transport, or as separate `python -m hiersearch serve-*` processes.
"""
import abc
import asyncio
import logging
import socket
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set

import httpx

from ..aggregator import Aggregator, AggregatorConfig, LeafEndpoint, create_aggregator_app
from ..api import HealthStatus
from ..crawler import CorpusFetcher
from ..http import HttpClient
from ..leafnode import LeafService, create_leaf_app
from ..rootnode import AggregatorEndpoint, FederationConfig, RootBroker, create_root_app
from ..webcorpus import Corpus, page_path, save_corpus, save_page
from .models import TopologyError, TopologySpec

logger = logging.getLogger(__name__)

LEAF = 'leaf'
AGGREGATOR = 'agg'
ROOT = 'root'
ROLES = (LEAF, AGGREGATOR, ROOT)


@dataclass(frozen=True)
class Node:
    role: str
    name: str
    endpoint: str

    @property
    def key(self) -> str:
        return ROOT if self.role == ROOT else f'{self.role}:{self.name}'


class NodeRouter(httpx.AsyncBaseTransport):
    """Routes requests by host name to mounted ASGI apps; a killed host refuses connections."""

    def __init__(self):
        self._apps: Dict[str, httpx.ASGITransport] = {}
        self._down: Set[str] = set()

    def mount(self, host: str, app) -> None:
        self._apps[host] = httpx.ASGITransport(app=app)

    def kill(self, host: str) -> None:
        self._down.add(host)

    def revive(self, host: str) -> None:
        self._down.discard(host)

    async def handle_async_request(self, request: httpx.Request) -> httpx.Response:
        host = request.url.host
        if host in self._down or host not in self._apps:
            raise httpx.ConnectError(f'{host} is unreachable', request=request)
        return await self._apps[host].handle_async_request(request)


class TopologyHost(metaclass=abc.ABCMeta):
    transport: Optional[httpx.AsyncBaseTransport] = None

    def __init__(self, topology: TopologySpec):
        self.topology = topology
        self.nodes: Dict[str, Node] = {}

    def add_node(self, role: str, name: str, endpoint: str) -> Node:
        node = Node(role=role, name=name, endpoint=endpoint)
        self.nodes[node.key] = node
        return node

    def resolve(self, target: Optional[str], roles: Sequence[str]) -> List[Node]:
        """
        Nodes addressed by `target`; all nodes of `roles` when it is empty.
        A bare name is looked up among aggregators first, then leaves.
        """
        if not target:
            return [node for node in self.nodes.values() if node.role in roles]
        if target in self.nodes:
            node = self.nodes[target]
        else:
            candidates = [self.nodes.get(f'{role}:{target}') for role in (AGGREGATOR, LEAF) if role in roles]
            node = next((candidate for candidate in candidates if candidate is not None), None)
        if node is None or node.role not in roles:
            raise TopologyError(f'no {"/".join(roles)} node named "{target}"')
        return [node]

    def endpoint_names(self) -> Dict[str, str]:
        return {node.endpoint: node.name for node in self.nodes.values()}

    def client(self, node: Node, timeout: float = 5.0) -> HttpClient:
        return HttpClient(node.endpoint, transport=self.transport, timeout=timeout, max_try_count=1)

    @abc.abstractmethod
    async def start(self) -> None:
        ...

    @abc.abstractmethod
    async def stop(self) -> None:
        ...

    @abc.abstractmethod
    async def kill(self, node: Node) -> None:
        ...

    @abc.abstractmethod
    async def revive(self, node: Node) -> None:
        ...

    @abc.abstractmethod
    async def set_corpus(self, corpus: Corpus) -> None:
        ...


class InProcessHost(TopologyHost):

    def __init__(self, topology: TopologySpec, corpus: Corpus):
        super().__init__(topology)
        self.router = NodeRouter()
        self.transport = self.router
        self.fetcher = CorpusFetcher(corpus)
        for leaf in topology.leaves:
            node = self.add_node(LEAF, leaf.node_name, f'http://leaf.{leaf.node_name}')
            self.router.mount(_host(node), create_leaf_app(LeafService(leaf, self.fetcher)))
        for spec in topology.aggregators:
            node = self.add_node(AGGREGATOR, spec.domain, f'http://agg.{spec.domain}')
            config = AggregatorConfig(domain=spec.domain,
                                      export_page_size=spec.export_page_size,
                                      leaves=[LeafEndpoint(name=name, endpoint=self.nodes[f'{LEAF}:{name}'].endpoint)
                                              for name in spec.leaves])
            self.router.mount(_host(node), create_aggregator_app(Aggregator(config, transport=self.router)))
        node = self.add_node(ROOT, ROOT, 'http://root.hiersearch')
        self.router.mount(_host(node), create_root_app(RootBroker(_federation(topology, self.nodes),
                                                                  transport=self.router)))

    async def start(self) -> None:
        logger.info('In-process topology %s: %s nodes', self.topology.name, len(self.nodes))

    async def stop(self) -> None:
        pass

    async def kill(self, node: Node) -> None:
        self.router.kill(_host(node))

    async def revive(self, node: Node) -> None:
        self.router.revive(_host(node))

    async def set_corpus(self, corpus: Corpus) -> None:
        self.fetcher.corpus = corpus


class SubprocessHost(TopologyHost):
    """
    One OS process per node on free localhost ports. Leaves keep their index
    in the work directory so a revived leaf comes back with its versions.
    """

    def __init__(self, topology: TopologySpec, corpus: Corpus, workdir: Path, boot_timeout: float = 20.0):
        super().__init__(topology)
        self.workdir = Path(workdir)
        self.corpus_dir = self.workdir / 'corpus'
        self.corpus = corpus
        self.boot_timeout = boot_timeout
        self.commands: Dict[str, List[str]] = {}
        self.processes: Dict[str, asyncio.subprocess.Process] = {}
        self.workdir.mkdir(parents=True, exist_ok=True)
        save_corpus(corpus, self.corpus_dir)

        for leaf in topology.leaves:
            port = free_port()
            node = self.add_node(LEAF, leaf.node_name, f'http://127.0.0.1:{port}')
            config = self._write_config(node, leaf.copy(update={'listen_address': f'127.0.0.1:{port}'}))
            self.commands[node.key] = ['serve-leaf', '--config', str(config), '--corpus', str(self.corpus_dir),
                                       '--index', str(self.workdir / f'{node.name}.index.json')]
        for spec in topology.aggregators:
            port = free_port()
            node = self.add_node(AGGREGATOR, spec.domain, f'http://127.0.0.1:{port}')
            config = AggregatorConfig(domain=spec.domain,
                                      listen_address=f'127.0.0.1:{port}',
                                      export_page_size=spec.export_page_size,
                                      leaves=[LeafEndpoint(name=name, endpoint=self.nodes[f'{LEAF}:{name}'].endpoint)
                                              for name in spec.leaves])
            self.commands[node.key] = ['serve-agg', '--config', str(self._write_config(node, config))]
        port = free_port()
        node = self.add_node(ROOT, ROOT, f'http://127.0.0.1:{port}')
        config = _federation(topology, self.nodes).copy(update={'listen_address': f'127.0.0.1:{port}'})
        self.commands[node.key] = ['serve-root', '--config', str(self._write_config(node, config))]

    def _write_config(self, node: Node, config) -> Path:
        path = self.workdir / f'{node.key.replace(":", "-")}.json'
        path.write_text(config.json(indent=2))
        return path

    async def start(self) -> None:
        for node in self.nodes.values():
            await self._spawn(node)

    async def _spawn(self, node: Node) -> None:
        log = open(self.workdir / f'{node.key.replace(":", "-")}.log', 'ab')
        try:
            process = await asyncio.create_subprocess_exec(sys.executable, '-m', 'hiersearch',
                                                           *self.commands[node.key],
                                                           stdout=log, stderr=log)
        finally:
            log.close()
        self.processes[node.key] = process
        client = self.client(node, timeout=1.0)
        deadline = asyncio.get_running_loop().time() + self.boot_timeout
        while asyncio.get_running_loop().time() < deadline:
            if process.returncode is not None:
                break
            result = await client.request_json_api('get', '/v1/health', HealthStatus)
            if result.success:
                logger.info('Node %s up at %s (pid %s)', node.key, node.endpoint, process.pid)
                return
            await asyncio.sleep(0.1)
        await self._terminate(node)
        raise TopologyError(f'node {node.key} failed to boot')

    async def _terminate(self, node: Node) -> None:
        process = self.processes.pop(node.key, None)
        if process is None or process.returncode is not None:
            return
        process.terminate()
        try:
            await asyncio.wait_for(process.wait(), timeout=5.0)
        except asyncio.TimeoutError:
            process.kill()
            await process.wait()

    async def stop(self) -> None:
        for node in reversed(list(self.nodes.values())):
            await self._terminate(node)

    async def kill(self, node: Node) -> None:
        await self._terminate(node)

    async def revive(self, node: Node) -> None:
        if node.key not in self.processes:
            await self._spawn(node)

    async def set_corpus(self, corpus: Corpus) -> None:
        for url, source in self.corpus.pages.items():
            if url not in corpus.pages:
                page_path(self.corpus_dir, corpus.site(source.site_name), url).unlink(missing_ok=True)
        for url, source in corpus.pages.items():
            previous = self.corpus.pages.get(url)
            if previous is None or previous.html_bytes != source.html_bytes:
                save_page(self.corpus_dir, corpus.site(source.site_name), url, source.html_bytes)
        self.corpus = corpus


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(('127.0.0.1', 0))
        return sock.getsockname()[1]


def _host(node: Node) -> str:
    return httpx.URL(node.endpoint).host


def _federation(topology: TopologySpec, nodes: Dict[str, Node]) -> FederationConfig:
    return FederationConfig(aggregators=[AggregatorEndpoint(name=spec.domain,
                                                            endpoint=nodes[f'{AGGREGATOR}:{spec.domain}'].endpoint)
                                         for spec in topology.aggregators],
                            per_source_limit_factor=topology.root.per_source_limit_factor,
                            timeout=topology.root.timeout)
