"""End-to-end retrieval-augmented answering over the knowledge graph.

Stage order: hypothesis output -> entity extraction -> linking -> chain
search -> fragment rerank -> reader prompt -> reader. Ablation flags switch
stages off; every run records what it did in a :class:`PipelineTrace`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import sys
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .chains import DEFAULT_GLOBAL_CAP, DEFAULT_PER_PAIR_CAP, ChainSet, search_chains, serialize_chain
from .extraction import extract_entities
from .kg import KnowledgeGraph
from .linker import EntityIndex, link
from .prompts import PromptSet, render_entity_prompt, render_ho_prompt, render_reader_prompt
from .providers import GenerationParams, ProviderError, Providers
from .rerank import Fragment, FragmentSource, PrunedChains, ScoredChain, chunk, rerank, whole_text_fragment
from .text import DictionarySegmenter, Tokenizer, WhitespaceTokenizer

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

STAGES = (
    "hypothesis",
    "extraction",
    "linking",
    "chain_search",
    "chunking",
    "rerank",
    "reader_prompt",
    "reader",
)

ABLATIONS: dict[str, dict[str, bool]] = {
    "full": {},
    "w/o-HO": {"use_ho": False},
    "w/o-Chains": {"use_chains": False},
    "w/o-Description": {"use_descriptions": False},
    "w/o-Fragment": {"use_fragments": False},
    "w/o-Reranker": {"use_reranker": False},
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    k: int = 3
    top_k: int = 10
    delta: float = 0.7
    lc: int = 10
    oc: int = 4
    min_hops: int = 1
    per_pair_cap: int | None = DEFAULT_PER_PAIR_CAP
    global_cap: int | None = DEFAULT_GLOBAL_CAP
    generation: GenerationParams = field(default_factory=GenerationParams)
    aggregation: str = "max"
    use_ho: bool = True
    use_fragments: bool = True
    use_descriptions: bool = True
    use_chains: bool = True
    use_reranker: bool = True
    # rerank against the raw query alone instead of the hypothesis-aware reference
    query_only_rerank: bool = False
    tokenizer: str = "whitespace"
    prompt_locale: str = "en"
    prompt_dir: str | None = None
    stopwords_path: str | None = None
    graph_path: str | None = None
    entity_index_path: str | None = None
    ho_cache_path: str | None = None
    providers: str = "http"
    generator_fixtures: str | None = None
    generator_fallback: str | None = None
    embedder_dim: int = 256
    embedder_seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.generation, Mapping):
            self.generation = GenerationParams(**self.generation)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if not 0 <= self.oc < self.lc:
            raise ValueError("need 0 <= oc < lc")
        if self.min_hops < 1:
            raise ValueError("min_hops must be >= 1")
        if self.aggregation not in ("max", "mean"):
            raise ValueError("aggregation must be 'max' or 'mean'")
        if self.tokenizer not in ("whitespace", "dictionary"):
            raise ValueError("tokenizer must be 'whitespace' or 'dictionary'")
        if self.providers not in ("http", "doubles"):
            raise ValueError("providers must be 'http' or 'doubles'")

    @property
    def flags(self) -> dict[str, bool]:
        return {
            "use_ho": self.use_ho,
            "use_fragments": self.use_fragments,
            "use_descriptions": self.use_descriptions,
            "use_chains": self.use_chains,
            "use_reranker": self.use_reranker,
        }

    def with_ablation(self, name: str) -> "PipelineConfig":
        if name not in ABLATIONS:
            raise KeyError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        return dataclasses.replace(self, **ABLATIONS[name])

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: str | Path | None = None) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        values = dict(data)
        if "delta" not in values and "δ" in values:
            values["delta"] = values.pop("δ")
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if base_dir is not None:
            for key in ("prompt_dir", "stopwords_path", "graph_path", "entity_index_path",
                        "ho_cache_path", "generator_fixtures"):
                if values.get(key):
                    values[key] = str(Path(base_dir) / values[key])
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def load_config(path: str | Path) -> PipelineConfig:
    """Read a TOML or JSON key-value config; relative paths resolve against its directory."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".json":
        data = json.loads(raw.decode("utf-8"))
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    return PipelineConfig.from_mapping(data, base_dir=path.parent)


class HOCache:
    """Hypothesis outputs keyed by (query, generation params), optionally mirrored to JSONL."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["text"]

    @staticmethod
    def key(query: str, params: GenerationParams) -> str:
        blob = json.dumps([query, params.max_tokens, params.temperature], ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def __len__(self) -> int:
        return len(self._data)

    def get_or_generate(self, query: str, params: GenerationParams, fn: Callable[[], str]) -> str:
        key = self.key(query, params)
        with self._lock:
            if key in self._data:
                return self._data[key]
            # holding the lock serializes generation too, so concurrent
            # callers never issue a duplicate request for the same query
            text = fn()
            self._data[key] = text
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "text": text}, ensure_ascii=False) + "\n")
            return text


@dataclass
class PipelineDeps:
    graph: KnowledgeGraph
    index: EntityIndex
    providers: Providers
    stopwords: set[str] = field(default_factory=set)
    tokenizer: Tokenizer = field(default_factory=WhitespaceTokenizer)
    prompts: PromptSet | None = None
    ho_cache: HOCache = field(default_factory=HOCache)


def make_tokenizer(name: str, g: KnowledgeGraph) -> Tokenizer:
    if name == "dictionary":
        return DictionarySegmenter(e.name for e in g.entities)
    return WhitespaceTokenizer()


@dataclass
class PipelineTrace:
    query: str
    flags: dict[str, bool]
    stages: list[str] = field(default_factory=list)
    hypothesis_output: str = ""
    mentions: list[str] = field(default_factory=list)
    mention_sources: tuple[int, int] = (0, 0)
    anchors: list[dict[str, Any]] = field(default_factory=list)
    unlinked: list[dict[str, Any]] = field(default_factory=list)
    chain_counts: dict[str, int] = field(default_factory=lambda: {"raw": 0, "capped": 0, "pruned": 0})
    truncated: bool = False
    fragments: list[dict[str, Any]] = field(default_factory=list)
    pruned: list[dict[str, Any]] = field(default_factory=list)
    reader_prompt: str = ""
    answer: str = ""
    durations: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_durations: bool = True) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["mention_sources"] = list(self.mention_sources)
        if not include_durations:
            out.pop("durations")
        return out

    def to_json(self, include_durations: bool = True, **kwargs) -> str:
        return json.dumps(self.to_dict(include_durations), ensure_ascii=False, **kwargs)


def _scored_dict(item: ScoredChain, g: KnowledgeGraph, with_descriptions: bool) -> dict[str, Any]:
    c = item.chain
    return {
        "text": serialize_chain(c, g, with_descriptions),
        "score": item.score,
        "kind": c.kind.label,
        "hops": c.hops,
        "nodes": list(c.nodes),
        "best_fragment": item.best_fragment,
    }


def run(query: str, cfg: PipelineConfig, deps: PipelineDeps, *, answer: bool = True) -> PipelineTrace:
    """Answer ``query``; the generator is called at most twice.

    With ``answer=False`` the run stops after the reader prompt is built.
    """
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    g = deps.graph
    prov = deps.providers
    trace = PipelineTrace(query=query, flags=cfg.flags)

    @contextmanager
    def stage(name: str):
        t0 = time.perf_counter()
        try:
            yield
        except ProviderError as exc:
            raise PipelineError(name, exc) from exc
        finally:
            trace.durations[name] = time.perf_counter() - t0
        trace.stages.append(name)

    ho = ""
    if cfg.use_ho:
        with stage("hypothesis"):
            prompt = render_ho_prompt(query, deps.prompts)
            ho = deps.ho_cache.get_or_generate(
                query, cfg.generation, lambda: prov.generator.generate(prompt, cfg.generation)
            )
        if not ho.strip():
            logger.info("empty hypothesis output; continuing with the query alone")
            ho = ""
    trace.hypothesis_output = ho

    with stage("extraction"):
        extracted = extract_entities(query, ho, prov.recognizer)
    trace.mentions = extracted.mentions
    trace.mention_sources = extracted.source_counts

    with stage("linking"):
        anchors = link(extracted.mentions, deps.index, prov.embedder, cfg.delta)
    trace.anchors = [
        {"id": a, "name": g.name(a), "mention": anchors.provenance[a][0], "similarity": anchors.provenance[a][1]}
        for a in anchors.anchors
    ]
    trace.unlinked = [{"mention": m, "best_similarity": s} for m, s in anchors.unlinked]

    if cfg.use_chains:
        with stage("chain_search"):
            found: ChainSet = search_chains(
                g, anchors.anchors, cfg.k,
                per_pair_cap=cfg.per_pair_cap, global_cap=cfg.global_cap, min_hops=cfg.min_hops,
            )
        trace.chain_counts["raw"] = found.raw_count
        trace.chain_counts["capped"] = len(found)
        trace.truncated = found.truncated

        if cfg.use_reranker:
            fragments: list[Fragment]
            if cfg.query_only_rerank:
                fragments = [Fragment(query, 0, FragmentSource.QUERY)]
            elif cfg.use_fragments:
                with stage("chunking"):
                    fragments = chunk(query, ho, cfg.lc, cfg.oc, deps.stopwords, deps.tokenizer)
            else:
                fragments = whole_text_fragment(query, ho, deps.stopwords, deps.tokenizer)
            trace.fragments = [{"text": f.text, "source": f.source.value} for f in fragments]
            with stage("rerank"):
                pruned = rerank(
                    found.chains, fragments, prov.scorer, g, cfg.top_k,
                    aggregation=cfg.aggregation, query=query,
                )
        else:
            pruned = PrunedChains([ScoredChain(c, None, -1) for c in found.chains[: cfg.top_k]], len(found))
        trace.chain_counts["pruned"] = len(pruned)
        trace.pruned = [_scored_dict(s, g, cfg.use_descriptions) for s in pruned]
        with stage("reader_prompt"):
            prompt = render_reader_prompt(
                query, pruned, g, with_descriptions=cfg.use_descriptions, prompts=deps.prompts
            )
    else:
        with stage("reader_prompt"):
            prompt = render_entity_prompt(query, anchors.anchors, g, prompts=deps.prompts)
    trace.reader_prompt = prompt
    if not answer:
        return trace

    with stage("reader"):
        trace.answer = prov.generator.generate(prompt, cfg.generation)
    return trace


def run_ablation_suite(
    queries: Sequence[str],
    cfg_base: PipelineConfig,
    deps: PipelineDeps,
    ablations: Sequence[str] = tuple(ABLATIONS),
) -> dict[str, list[PipelineTrace]]:
    """Run every query under each ablation; hypothesis outputs are shared through the cache."""
    results: dict[str, list[PipelineTrace]] = {name: [] for name in ablations}
    for query in queries:
        for name in ablations:
            results[name].append(run(query, cfg_base.with_ablation(name), deps))
    return results


def _load_generator_fixtures(path: str | Path, fallback: str | None):
    from .providers import ScriptedGenerator, prompt_hash

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    fixtures = {}
    for key, text in data.get("fixtures", {}).items():
        is_hash = len(key) == 64 and all(c in "0123456789abcdef" for c in key)
        fixtures[key if is_hash else prompt_hash(key)] = text
    kwargs: dict[str, Any] = {"rules": [tuple(r) for r in data.get("rules", [])]}
    chosen = fallback if fallback is not None else data.get("fallback")
    if chosen is not None:
        kwargs["fallback"] = chosen
    return ScriptedGenerator(fixtures, **kwargs)


def build_providers(cfg: PipelineConfig, g: KnowledgeGraph) -> Providers:
    """HTTP adapters from the environment, or the offline doubles seeded from the graph."""
    if cfg.providers == "http":
        return Providers.from_env()
    from .providers import GazetteerRecognizer, HashingEmbedder, LexicalOverlapScorer, ScriptedGenerator

    if cfg.generator_fixtures:
        generator = _load_generator_fixtures(cfg.generator_fixtures, cfg.generator_fallback)
    elif cfg.generator_fallback is not None:
        generator = ScriptedGenerator(fallback=cfg.generator_fallback)
    else:
        generator = ScriptedGenerator()
    return Providers(
        generator=generator,
        embedder=HashingEmbedder(cfg.embedder_dim, cfg.embedder_seed),
        scorer=LexicalOverlapScorer(),
        recognizer=GazetteerRecognizer(e.name for e in g.entities),
    )


def load_deps(cfg: PipelineConfig, providers: Providers | None = None) -> PipelineDeps:
    """Load the graph snapshot, stopwords, providers and entity index named by ``cfg``."""
    from .linker import build_index, load_or_build
    from .text import load_stopwords

    if not cfg.graph_path:
        raise ValueError("config needs graph_path")
    g = KnowledgeGraph.load(cfg.graph_path)
    providers = providers or build_providers(cfg, g)
    try:
        if cfg.entity_index_path:
            index = load_or_build(cfg.entity_index_path, g, providers.embedder)
        else:
            index = build_index(g, providers.embedder)
    except ProviderError as exc:
        raise PipelineError("index", exc) from exc
    return PipelineDeps(
        graph=g,
        index=index,
        providers=providers,
        stopwords=load_stopwords(cfg.stopwords_path) if cfg.stopwords_path else set(),
        tokenizer=make_tokenizer(cfg.tokenizer, g),
        prompts=PromptSet.load(cfg.prompt_locale, cfg.prompt_dir),
        ho_cache=HOCache(cfg.ho_cache_path),
    )
