"""Hypothesis-guided retrieval over a knowledge graph for question answering."""

from .chains import ChainKind, ChainSet, ReasoningChain, search_chains, serialize_chain
from .kg import EntityRecord, KnowledgeGraph, ingest, load_graph_files
from .linker import AnchorSet, EntityIndex, build_index, link
from .pipeline import ABLATIONS, PipelineConfig, PipelineDeps, PipelineTrace, load_config, load_deps, run
from .rerank import Fragment, PrunedChains, chunk, rerank

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "AnchorSet",
    "ChainKind",
    "ChainSet",
    "EntityIndex",
    "EntityRecord",
    "Fragment",
    "KnowledgeGraph",
    "PipelineConfig",
    "PipelineDeps",
    "PipelineTrace",
    "PrunedChains",
    "ReasoningChain",
    "build_index",
    "chunk",
    "ingest",
    "link",
    "load_config",
    "load_deps",
    "load_graph_files",
    "rerank",
    "run",
    "search_chains",
    "serialize_chain",
]
