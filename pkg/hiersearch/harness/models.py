from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
from urllib.parse import urlsplit

from pydantic import conint, confloat, root_validator

from ..api import APIModel
from ..leafnode import LeafConfig
from ..webcorpus import Corpus, CorpusSpec, generate_corpus, load_corpus
from .tiny3 import tiny3_corpus

TINY3 = 'tiny3'


class TopologyError(Exception):
    pass


class EventKind(str, Enum):
    MUTATE_PAGE = 'mutate_page'
    DELETE_PAGE = 'delete_page'
    REMOVE_SITE = 'remove_site'
    KILL_NODE = 'kill_node'
    REVIVE_NODE = 'revive_node'
    HARVEST = 'harvest'
    REFRESH = 'refresh'
    QUERY = 'query'
    EXPORT = 'export'
    CHECK_COVERAGE = 'check_coverage'
    CHECK_OVERLAP = 'check_overlap'


class ScriptedEvent(APIModel):
    """
    One scripted step. `target` names a node ("root", an aggregator domain or
    a leaf name; prefix with "leaf:" or "agg:" to disambiguate); leaving it
    empty addresses every node the event applies to.
    """

    step: conint(ge=0) = 0
    event: EventKind
    target: Optional[str] = None
    url: Optional[str] = None
    html: Optional[str] = None
    site: Optional[str] = None
    q: Optional[str] = None
    limit: conint(ge=1) = 10
    exhaustive: bool = False
    cursor: Optional[conint(ge=0)] = None
    oracle: bool = False
    expect: Dict[str, Any] = {}


class AggregatorSpec(APIModel):
    domain: str
    leaves: List[str] = []
    export_page_size: conint(ge=1) = 500


class RootSpec(APIModel):
    per_source_limit_factor: conint(ge=1) = 3
    timeout: confloat(gt=0) = 2.0


class TopologySpec(APIModel):
    name: str = 'topology'
    corpus: Union[CorpusSpec, str]
    leaves: List[LeafConfig] = []
    aggregators: List[AggregatorSpec] = []
    root: RootSpec = RootSpec()
    scripted_events: List[ScriptedEvent] = []

    @root_validator(skip_on_failure=True)
    def check_aggregator_leaves(cls, values):
        leaves = values['leaves']
        if leaves:
            names = {leaf.node_name for leaf in leaves}
            if len(names) != len(leaves):
                raise ValueError('leaf names must be unique')
            for aggregator in values['aggregators']:
                unknown = [name for name in aggregator.leaves if name not in names]
                if unknown:
                    raise ValueError(f'aggregator {aggregator.domain} lists unknown leaves {unknown}')
        return values


class TranscriptEntry(APIModel):
    step: int
    event: EventKind
    target: Optional[str] = None
    result: Dict[str, Any] = {}
    failures: List[str] = []


class TranscriptReport(APIModel):
    name: str
    passed: bool
    failures: List[str] = []
    entries: List[TranscriptEntry] = []


def resolve_corpus(spec: TopologySpec, base_dir: Optional[Path] = None) -> Corpus:
    if isinstance(spec.corpus, CorpusSpec):
        return generate_corpus(spec.corpus)
    if spec.corpus == TINY3:
        return tiny3_corpus()
    path = Path(spec.corpus)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_corpus(path)


def leaf_sites(leaf: LeafConfig) -> List[str]:
    return list(dict.fromkeys(urlsplit(root).hostname or '' for root in leaf.site_roots))


def complete_topology(spec: TopologySpec, corpus: Corpus) -> TopologySpec:
    """
    Fill in the defaults: one leaf per site when no leaves are given, one
    aggregator per second-level domain when no aggregators are given.
    """
    leaves = spec.leaves or [LeafConfig(name=site.site_name, domain=site.site_name, site_roots=[site.root_url])
                             for site in corpus.sites]
    for leaf in leaves:
        unknown = [site for site in leaf_sites(leaf) if not corpus.has_site(site)]
        if unknown:
            raise TopologyError(f'leaf {leaf.node_name} crawls sites missing from the corpus: {unknown}')
    aggregators = spec.aggregators
    if not aggregators:
        aggregators = []
        for domain in corpus.domains:
            members = [leaf.node_name for leaf in leaves
                       if any(corpus.site(site).domain == domain for site in leaf_sites(leaf))]
            if members:
                aggregators.append(AggregatorSpec(domain=domain, leaves=members))
    return spec.copy(update={'leaves': leaves, 'aggregators': aggregators})
