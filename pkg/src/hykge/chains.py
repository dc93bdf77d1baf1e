"""Reasoning-chain search between anchor entities.

Three chain families connect two anchors ``A`` and ``B`` within ``k`` hops:

* path            ``A -> ... -> B``                    direction pattern ``F+``
* co-ancestor     ``A -> ... -> X <- ... <- B``        pattern ``F+B+``
* co-occurrence   ``A <- ... <- X -> ... -> B``        pattern ``B+F+``

Directions are read left to right: ``F`` means the edge is stored as
``(left, r, right)``, ``B`` means it is stored as ``(right, r, left)``.
Chains are simple (no repeated node). Paths are always stored from their
true head; co-ancestor and co-occurrence chains are oriented so the smaller
endpoint id comes first.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

from .kg import Direction, KnowledgeGraph

__all__ = [
    "ChainKind",
    "ChainSet",
    "ReasoningChain",
    "classify",
    "search_chains",
    "serialize_chain",
    "validate_chain",
]

DEFAULT_PER_PAIR_CAP = 200
DEFAULT_GLOBAL_CAP = 5000

_PATTERNS = {
    "path": re.compile(r"F+"),
    "co_ancestor": re.compile(r"F+B+"),
    "co_occurrence": re.compile(r"B+F+"),
}


class ChainKind(IntEnum):
    PATH = 0
    CO_ANCESTOR = 1
    CO_OCCURRENCE = 2

    @property
    def label(self) -> str:
        return ("path", "co_ancestor", "co_occurrence")[self]


def classify(directions: str) -> ChainKind | None:
    """Chain family for a left-to-right direction string, or ``None``."""
    for kind in ChainKind:
        if _PATTERNS[kind.label].fullmatch(directions):
            return kind
    return None


@dataclass(frozen=True)
class ReasoningChain:
    kind: ChainKind
    nodes: tuple[int, ...]
    relations: tuple[int, ...]
    directions: str
    head_description: str | None = field(default=None, compare=False)
    tail_description: str | None = field(default=None, compare=False)

    @property
    def hops(self) -> int:
        return len(self.relations)

    @property
    def head(self) -> int:
        return self.nodes[0]

    @property
    def tail(self) -> int:
        return self.nodes[-1]

    @property
    def key(self) -> tuple:
        return (int(self.kind), self.nodes, self.relations, self.directions)

    @property
    def sort_key(self) -> tuple:
        return (self.hops, int(self.kind), self.nodes, self.relations, self.directions)

    def reversed(self) -> "ReasoningChain":
        flipped = self.directions[::-1].translate(str.maketrans("FB", "BF"))
        return ReasoningChain(
            self.kind,
            self.nodes[::-1],
            self.relations[::-1],
            flipped,
            self.tail_description,
            self.head_description,
        )

    def canonical(self) -> "ReasoningChain":
        """Canonical orientation used for deduplication."""
        if set(self.directions) == {"B"}:
            rev = self.reversed()
            return ReasoningChain(
                ChainKind.PATH, rev.nodes, rev.relations, rev.directions,
                rev.head_description, rev.tail_description,
            )
        if self.kind is not ChainKind.PATH and self.nodes[0] > self.nodes[-1]:
            return self.reversed()
        return self


@dataclass
class ChainSet:
    chains: list[ReasoningChain] = field(default_factory=list)
    truncated: bool = False
    raw_count: int = 0

    def __len__(self) -> int:
        return len(self.chains)

    def __iter__(self):
        return iter(self.chains)

    def keys(self) -> set[tuple]:
        return {c.key for c in self.chains}


class _Walker:
    """Depth-limited DFS over direction-patterned simple walks from one anchor."""

    def __init__(self, g: KnowledgeGraph, anchors: set[int], k: int) -> None:
        self.g = g
        self.anchors = anchors
        self.k = k
        self._fwd: dict[int, list[tuple[int, int]]] = {}
        self._rev: dict[int, list[tuple[int, int]]] = {}

    def _adj(self, v: int, d: str) -> list[tuple[int, int]]:
        cache = self._fwd if d == "F" else self._rev
        out = cache.get(v)
        if out is None:
            out = cache[v] = self.g.neighbors(v, Direction.FORWARD if d == "F" else Direction.REVERSE)
        return out

    def walk(self, start: int, emit) -> None:
        nodes = [start]
        rels: list[int] = []
        dirs: list[str] = []
        on_path = {start}

        def step(v: int, switched: bool) -> None:
            last = dirs[-1] if dirs else None
            for d in ("F", "B"):
                turning = last is not None and d != last
                if turning and switched:
                    continue
                for r, u in self._adj(v, d):
                    if u in on_path:
                        continue
                    nodes.append(u)
                    rels.append(r)
                    dirs.append(d)
                    on_path.add(u)
                    if u in self.anchors:
                        emit(nodes, rels, dirs)
                    if len(rels) < self.k:
                        step(u, switched or turning)
                    on_path.discard(u)
                    dirs.pop()
                    rels.pop()
                    nodes.pop()

        step(start, False)


def search_chains(
    g: KnowledgeGraph,
    anchors: Iterable[int],
    k: int = 3,
    *,
    per_pair_cap: int | None = DEFAULT_PER_PAIR_CAP,
    global_cap: int | None = DEFAULT_GLOBAL_CAP,
    min_hops: int = 1,
) -> ChainSet:
    """Enumerate all reasoning chains of at most ``k`` hops between anchor pairs.

    Output is ordered by (hops, kind, nodes, relations, directions). Caps keep
    the first chains in that order, per unordered anchor pair and overall;
    ``None`` disables a cap.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    anchor_set = {int(a) for a in anchors}
    for a in anchor_set:
        if not 0 <= a < len(g):
            raise IndexError(f"anchor {a} is not an entity id")
    if len(anchor_set) < 2:
        return ChainSet()

    per_pair: dict[tuple[int, int], list[ReasoningChain]] = defaultdict(list)
    seen: set[tuple] = set()

    def emit(nodes: list[int], rels: list[int], dirs: list[str]) -> None:
        start, end = nodes[0], nodes[-1]
        pattern = "".join(dirs)
        kind = classify(pattern)
        # all-backward walks are paths found again from the other end
        if kind is None or len(rels) < min_hops:
            return
        if kind is not ChainKind.PATH and start > end:
            return
        chain = ReasoningChain(
            kind, tuple(nodes), tuple(rels), pattern,
            g.description(start), g.description(end),
        )
        if chain.key in seen:
            return
        seen.add(chain.key)
        per_pair[(min(start, end), max(start, end))].append(chain)

    walker = _Walker(g, anchor_set, k)
    for a in sorted(anchor_set):
        walker.walk(a, emit)

    raw = sum(len(v) for v in per_pair.values())
    truncated = False
    merged: list[ReasoningChain] = []
    for pair in sorted(per_pair):
        chains = sorted(per_pair[pair], key=lambda c: c.sort_key)
        if per_pair_cap is not None and len(chains) > per_pair_cap:
            chains = chains[:per_pair_cap]
            truncated = True
        merged.extend(chains)
    merged.sort(key=lambda c: c.sort_key)
    if global_cap is not None and len(merged) > global_cap:
        merged = merged[:global_cap]
        truncated = True
    return ChainSet(merged, truncated, raw)


def validate_chain(chain: ReasoningChain, g: KnowledgeGraph, k: int | None = None) -> None:
    """Raise ``ValueError`` unless ``chain`` satisfies every structural invariant."""
    n = len(chain.nodes)
    if n != chain.hops + 1 or len(chain.directions) != chain.hops:
        raise ValueError("inconsistent chain lengths")
    if chain.hops < 1 or (k is not None and chain.hops > k):
        raise ValueError(f"hop count {chain.hops} out of range")
    if len(set(chain.nodes)) != n:
        raise ValueError("chain revisits a node")
    if classify(chain.directions) is not chain.kind:
        raise ValueError(f"direction pattern {chain.directions} does not match {chain.kind.label}")
    for i, (r, d) in enumerate(zip(chain.relations, chain.directions)):
        left, right = chain.nodes[i], chain.nodes[i + 1]
        head, tail = (left, right) if d == "F" else (right, left)
        if not g.has_triplet(head, r, tail):
            raise ValueError(f"edge ({head}, {r}, {tail}) is not a triplet")


def serialize_chain(chain: ReasoningChain, g: KnowledgeGraph, with_descriptions: bool = True) -> str:
    """Render ``A → r → B ← s ← C`` with an optional ``| name: description`` suffix."""
    parts = [g.name(chain.nodes[0])]
    for i, (r, d) in enumerate(zip(chain.relations, chain.directions)):
        arrow = "→" if d == "F" else "←"
        parts.append(f" {arrow} {g.relation_name(r)} {arrow} {g.name(chain.nodes[i + 1])}")
    text = "".join(parts)
    if with_descriptions:
        for node, desc in ((chain.head, chain.head_description), (chain.tail, chain.tail_description)):
            if desc:
                text += f" | {g.name(node)}: {desc}"
    return text
