from .models import (AggregatorSpec, EventKind, RootSpec, ScriptedEvent, TopologyError, TopologySpec,
                     TranscriptEntry, TranscriptReport, complete_topology, resolve_corpus)
from .oracle import LinkGraph, OracleHit, oracle_global_search, oracle_overlap
from .topology import TopologyRunner, acceptance_script, random_queries, run_topology, tiny3_topology
