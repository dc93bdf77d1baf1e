"""Dense entity linking against pre-embedded KG entity names."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .kg import KnowledgeGraph
from .providers import Embedder, l2_normalize

logger = logging.getLogger(__name__)

_ROW_BLOCK = 65536


@dataclass(frozen=True)
class EntityIndex:
    """Unit-norm name embeddings, row ``i`` for entity id ``i``."""

    matrix: np.ndarray
    provider_tag: str
    graph_hash: str

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return int(self.matrix.shape[0])

    def save(self, path: str | Path) -> None:
        """JSON header line followed by little-endian float32 rows; written atomically."""
        header = {
            "dim": self.dim,
            "count": len(self),
            "provider_tag": self.provider_tag,
            "graph_hash": self.graph_hash,
        }
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
                fh.write(np.ascontiguousarray(self.matrix, dtype="<f4").tobytes())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str | Path) -> "EntityIndex":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        count, dim = header["count"], header["dim"]
        matrix = np.frombuffer(raw, dtype="<f4")
        if matrix.size != count * dim:
            raise ValueError(f"{path}: expected {count}x{dim} floats, found {matrix.size}")
        return cls(matrix.reshape(count, dim).astype(np.float32), header["provider_tag"], header["graph_hash"])


def build_index(g: KnowledgeGraph, embedder: Embedder, *, batch_size: int = 256) -> EntityIndex:
    names = [e.name for e in g.entities]
    blocks = []
    for start in range(0, len(names), batch_size):
        blocks.append(l2_normalize(embedder.embed(names[start : start + batch_size])))
    dims = {b.shape[1] for b in blocks}
    if len(dims) > 1:
        raise ValueError(f"embedder dimension drifted during build: {sorted(dims)}")
    matrix = np.vstack(blocks).astype(np.float32) if blocks else np.zeros((0, 0), np.float32)
    return EntityIndex(matrix, embedder.tag, g.fingerprint)


def load_or_build(path: str | Path, g: KnowledgeGraph, embedder: Embedder) -> EntityIndex:
    """Reuse the cached index at ``path`` if it matches this graph and embedder, else rebuild it."""
    path = Path(path)
    if path.exists():
        try:
            index = EntityIndex.load(path)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            logger.warning("discarding unreadable index cache %s: %s", path, exc)
        else:
            if _cache_valid(index, g, embedder):
                return index
            logger.info("index cache %s is stale; rebuilding", path)
    index = build_index(g, embedder)
    index.save(path)
    return index


def _cache_valid(index: EntityIndex, g: KnowledgeGraph, embedder: Embedder) -> bool:
    if index.graph_hash != g.fingerprint or index.provider_tag != embedder.tag or len(index) != len(g):
        return False
    if not len(g):
        return True
    probe = l2_normalize(embedder.embed([g.entities[0].name]))[0]
    if probe.shape[0] != index.dim:
        return False
    return bool(np.allclose(probe, index.matrix[0], atol=1e-4))


@dataclass
class AnchorSet:
    anchors: list[int] = field(default_factory=list)
    provenance: dict[int, tuple[str, float]] = field(default_factory=dict)
    unlinked: list[tuple[str, float | None]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.anchors)

    def __iter__(self):
        return iter(self.anchors)


def best_matches(index: EntityIndex, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive inner-product argmax; ties go to the lowest entity id."""
    n_q = queries.shape[0]
    best_id = np.full(n_q, -1, dtype=np.int64)
    best_sim = np.full(n_q, -np.inf)
    q = np.asarray(queries, dtype=np.float64).T
    for lo in range(0, len(index), _ROW_BLOCK):
        sims = index.matrix[lo : lo + _ROW_BLOCK].astype(np.float64) @ q
        arg = np.argmax(sims, axis=0)
        val = sims[arg, np.arange(n_q)]
        better = val > best_sim
        best_id[better] = arg[better] + lo
        best_sim[better] = val[better]
    return best_id, best_sim


def link(mentions: Sequence[str], index: EntityIndex, embedder: Embedder, delta: float = 0.7) -> AnchorSet:
    """Link each mention to its most similar entity if that similarity exceeds ``delta``."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    result = AnchorSet()
    mentions = [m for m in mentions if m]
    if not mentions or not len(index):
        result.unlinked = [(m, None) for m in mentions]
        return result
    if embedder.tag != index.provider_tag:
        raise ValueError(f"index built with {index.provider_tag!r}, linking with {embedder.tag!r}")
    vectors = l2_normalize(embedder.embed(mentions))
    if vectors.shape[1] != index.dim:
        raise ValueError(f"mention embeddings have dim {vectors.shape[1]}, index has {index.dim}")
    ids, sims = best_matches(index, vectors)
    for mention, eid, sim in zip(mentions, ids.tolist(), sims.tolist()):
        if sim > delta:
            prev = result.provenance.get(eid)
            if prev is None:
                result.anchors.append(eid)
                result.provenance[eid] = (mention, sim)
            elif sim > prev[1]:
                result.provenance[eid] = (mention, sim)
        else:
            result.unlinked.append((mention, sim))
    if result.unlinked:
        logger.debug("unlinked mentions: %s", result.unlinked)
    return result
