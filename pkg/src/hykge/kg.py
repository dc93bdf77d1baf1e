"""Immutable knowledge-graph store.

Entities and relations are interned to dense integer ids in first-seen
order. Triplets are deduplicated and kept as a sorted ``(T, 3)`` int64
array; forward and reverse adjacency are CSR indexes built from it, so a
graph with millions of facts stays compact and is safe to share between
threads once constructed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from array import array
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .text import normalize

__all__ = [
    "Direction",
    "EntityRecord",
    "IngestError",
    "KnowledgeGraph",
    "SnapshotError",
    "ingest",
    "load_graph_files",
    "read_entities",
    "read_triples",
]

SNAPSHOT_MAGIC = b"HYKG"
SNAPSHOT_VERSION = 1


class Direction(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class IngestError(ValueError):
    """Raised for malformed input lines or unresolved triple endpoints."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class EntityRecord:
    id: int
    name: str
    description: str | None = None
    type: str | None = None

    @property
    def full_description(self) -> str | None:
        """Description with the optional entity type appended."""
        if self.type and self.description:
            return f"{self.description} (type: {self.type})"
        if self.type:
            return f"(type: {self.type})"
        return self.description


def _csr(keys: np.ndarray, first: np.ndarray, second: np.ndarray, n: int):
    order = np.lexsort((second, first, keys))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=ptr[1:])
    return ptr, first[order], second[order]


class KnowledgeGraph:
    """Entities, relations, deduplicated triplets and adjacency indexes.

    Build instances with :func:`ingest` or :meth:`load`; the constructor
    expects already-interned data.
    """

    def __init__(
        self,
        entities: Sequence[EntityRecord],
        relations: Sequence[str],
        triplets: np.ndarray,
    ) -> None:
        self.entities: tuple[EntityRecord, ...] = tuple(entities)
        self.relations: tuple[str, ...] = tuple(relations)
        n = len(self.entities)
        arr = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        if arr.size:
            if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= n:
                raise ValueError("triplet endpoint outside entity table")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= len(self.relations):
                raise ValueError("triplet relation outside relation table")
            arr = np.unique(arr, axis=0)
        self.triplets = arr
        self.triplets.setflags(write=False)
        h, r, t = arr[:, 0], arr[:, 1], arr[:, 2]
        self._fwd = _csr(h, r, t, n)
        self._rev = _csr(t, r, h, n)
        for part in (*self._fwd, *self._rev):
            part.setflags(write=False)
        self._by_name: dict[str, int] = {}
        for rec in self.entities:
            self._by_name.setdefault(rec.name, rec.id)

    def __len__(self) -> int:
        return len(self.entities)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.entities == other.entities
            and self.relations == other.relations
            and np.array_equal(self.triplets, other.triplets)
        )

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={len(self.entities)}, "
            f"relations={len(self.relations)}, triplets={len(self.triplets)})"
        )

    @property
    def num_triplets(self) -> int:
        return int(self.triplets.shape[0])

    def _check(self, v: int) -> None:
        if not 0 <= v < len(self.entities):
            raise IndexError(f"invalid entity id {v!r}")

    def neighbors(self, v: int, direction: Direction | str = Direction.FORWARD) -> list[tuple[int, int]]:
        """Adjacent ``(relation_id, entity_id)`` pairs, sorted.

        Forward gives the out-edges ``(v, r, u)`` as ``(r, u)``; reverse gives
        the in-edges ``(u, r, v)`` as ``(r, u)``.
        """
        self._check(v)
        ptr, rel, ent = self._fwd if Direction(direction) is Direction.FORWARD else self._rev
        lo, hi = ptr[v], ptr[v + 1]
        return list(zip(rel[lo:hi].tolist(), ent[lo:hi].tolist()))

    def degree(self, v: int, direction: Direction | str = Direction.FORWARD) -> int:
        self._check(v)
        ptr = self._fwd[0] if Direction(direction) is Direction.FORWARD else self._rev[0]
        return int(ptr[v + 1] - ptr[v])

    def lookup_by_name(self, name: str) -> int | None:
        """Exact-name lookup after NFC normalization and trimming; lowest id wins."""
        return self._by_name.get(normalize(name))

    def name(self, v: int) -> str:
        return self.entities[v].name

    def description(self, v: int) -> str | None:
        return self.entities[v].full_description

    def relation_name(self, r: int) -> str:
        return self.relations[r]

    def has_triplet(self, head: int, relation: int, tail: int) -> bool:
        ptr, rel, ent = self._fwd
        lo, hi = int(ptr[head]), int(ptr[head + 1])
        if lo == hi:
            return False
        rels = rel[lo:hi]
        a = lo + int(np.searchsorted(rels, relation, side="left"))
        b = lo + int(np.searchsorted(rels, relation, side="right"))
        if a == b:
            return False
        i = a + int(np.searchsorted(ent[a:b], tail))
        return i < b and int(ent[i]) == tail

    def iter_triplets(self) -> Iterator[tuple[int, int, int]]:
        for h, r, t in self.triplets.tolist():
            yield h, r, t

    def _header(self) -> dict[str, Any]:
        return {
            "entities": [[e.name, e.description, e.type] for e in self.entities],
            "relations": list(self.relations),
            "triplets": self.num_triplets,
        }

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(json.dumps(self._header(), ensure_ascii=False, sort_keys=True).encode("utf-8"))
        digest.update(self.triplets.astype("<i8").tobytes())
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        """Write a versioned binary snapshot (``HYKG`` magic, version byte, JSON header, triplets)."""
        header = json.dumps(self._header(), ensure_ascii=False).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(bytes([SNAPSHOT_VERSION]))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(self.triplets.astype("<i8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeGraph":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != SNAPSHOT_MAGIC:
                raise SnapshotError(f"{path}: not a graph snapshot")
            version = fh.read(1)
            if not version or version[0] != SNAPSHOT_VERSION:
                got = version[0] if version else None
                raise SnapshotError(f"{path}: snapshot version {got}, expected {SNAPSHOT_VERSION}")
            (size,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(size).decode("utf-8"))
            raw = fh.read()
        count = header["triplets"]
        triplets = np.frombuffer(raw, dtype="<i8")
        if triplets.size != 3 * count:
            raise SnapshotError(f"{path}: truncated triplet block")
        entities = [
            EntityRecord(i, name, desc, typ) for i, (name, desc, typ) in enumerate(header["entities"])
        ]
        return cls(entities, header["relations"], triplets.reshape(-1, 3).astype(np.int64))


def _entity_fields(item: Any, line: int, source: str | None) -> tuple[str, str | None, str | None]:
    if isinstance(item, EntityRecord):
        raw_name, desc, typ = item.name, item.description, item.type
    elif isinstance(item, Mapping):
        raw_name, desc, typ = item.get("name"), item.get("description"), item.get("type")
    elif isinstance(item, str):
        raw_name, desc, typ = item, None, None
    else:
        raise IngestError(f"unsupported entity record {item!r}", line, source)
    if not isinstance(raw_name, str) or not normalize(raw_name):
        raise IngestError("entity record needs a non-empty 'name'", line, source)
    for label, value in (("description", desc), ("type", typ)):
        if value is not None and not isinstance(value, str):
            raise IngestError(f"entity '{label}' must be a string", line, source)
    desc = normalize(desc) if desc else None
    typ = normalize(typ) if typ else None
    return normalize(raw_name), desc or None, typ or None


def ingest(
    entity_stream: Iterable[Any],
    triple_stream: Iterable[Sequence[str]],
    *,
    auto_create: bool = False,
) -> KnowledgeGraph:
    """Build a graph from entity records and ``(head, relation, tail)`` name triples.

    Entity records may be mappings with ``name``/``description``/``type``
    keys, :class:`EntityRecord` instances, or bare names. Identical records
    collapse to one entity; records that share a name but differ otherwise
    become distinct entities, and triple endpoints resolve to the lowest id
    carrying that name. Dangling endpoints raise unless ``auto_create``.
    """
    records: list[EntityRecord] = []
    seen: dict[tuple[str, str | None, str | None], int] = {}
    by_name: dict[str, int] = {}
    for lineno, item in enumerate(entity_stream, 1):
        line, source = lineno, None
        if isinstance(item, _Located):
            line, source, item = item.line, item.source, item.value
        key = _entity_fields(item, line, source)
        if key in seen:
            continue
        eid = len(records)
        seen[key] = eid
        records.append(EntityRecord(eid, *key))
        by_name.setdefault(key[0], eid)

    relations: list[str] = []
    rel_ids: dict[str, int] = {}
    flat = array("q")
    for lineno, item in enumerate(triple_stream, 1):
        line, source = lineno, None
        if isinstance(item, _Located):
            line, source, item = item.line, item.source, item.value
        try:
            head, rel, tail = item
        except (TypeError, ValueError):
            raise IngestError(f"expected (head, relation, tail), got {item!r}", line, source) from None
        if not all(isinstance(x, str) for x in (head, rel, tail)):
            raise IngestError("triple fields must be strings", line, source)
        ids = []
        for endpoint in (head, tail):
            name = normalize(endpoint)
            if not name:
                raise IngestError("empty entity name in triple", line, source)
            eid = by_name.get(name)
            if eid is None:
                if not auto_create:
                    raise IngestError(f"unknown entity {name!r}", line, source)
                eid = len(records)
                records.append(EntityRecord(eid, name))
                by_name[name] = eid
                seen[(name, None, None)] = eid
            ids.append(eid)
        rname = normalize(rel)
        if not rname:
            raise IngestError("empty relation name in triple", line, source)
        rid = rel_ids.get(rname)
        if rid is None:
            rid = rel_ids[rname] = len(relations)
            relations.append(rname)
        flat.extend((ids[0], rid, ids[1]))

    triplets = np.frombuffer(flat, dtype=np.int64).reshape(-1, 3) if flat else np.empty((0, 3), np.int64)
    return KnowledgeGraph(records, relations, triplets)


@dataclass(frozen=True)
class _Located:
    value: Any
    line: int
    source: str


def read_entities(path: str | Path) -> Iterator[_Located]:
    """Yield entity objects from a JSON-lines file, tagged with their line number."""
    source = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"malformed JSON ({exc.msg})", lineno, source) from None
            if not isinstance(obj, dict):
                raise IngestError("entity line must be a JSON object", lineno, source)
            yield _Located(obj, lineno, source)


def read_triples(path: str | Path) -> Iterator[_Located]:
    """Yield name triples from JSON-lines (``head``/``relation``/``tail``) or 3-column TSV.

    The format is sniffed per line: lines starting with ``{`` are JSON.
    """
    source = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    triple = (obj["head"], obj["relation"], obj["tail"])
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise IngestError("malformed triple JSON line", lineno, source) from None
            else:
                triple = tuple(line.split("\t"))
                if len(triple) != 3:
                    raise IngestError(f"expected 3 tab-separated columns, got {len(triple)}", lineno, source)
            yield _Located(triple, lineno, source)


def load_graph_files(
    entities_path: str | Path, triples_path: str | Path, *, auto_create: bool = False
) -> KnowledgeGraph:
    return ingest(read_entities(entities_path), read_triples(triples_path), auto_create=auto_create)
