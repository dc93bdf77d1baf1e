import random
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hykge.kg import ingest
from hykge.linker import EntityIndex, build_index, link, load_or_build
from hykge.providers import HashingEmbedder

from oracles import oracle_link


def _names(rng, n):
    names = set()
    while len(names) < n:
        names.add("".join(rng.choices(string.ascii_lowercase, k=rng.randint(4, 12))))
    return sorted(names)


def _mentions(rng, names, n):
    out = []
    for i in range(n):
        base = rng.choice(names)
        if i % 3 == 0:
            out.append(base)
        elif i % 3 == 1:
            pos = rng.randrange(len(base))
            out.append(base[:pos] + rng.choice(string.ascii_lowercase) + base[pos + 1 :])
        else:
            out.append("".join(rng.choices(string.ascii_lowercase, k=rng.randint(3, 10))))
    return out


@pytest.fixture(scope="module")
def big():
    rng = random.Random(5)
    names = _names(rng, 200)
    g = ingest(names, [])
    emb = HashingEmbedder()
    return g, emb, build_index(g, emb), _mentions(rng, names, 50)


def test_three_entity_index():
    g = ingest(["a", "b", "c"], [])
    index = build_index(g, HashingEmbedder())
    assert index.matrix.shape == (3, 256)
    assert np.allclose(np.linalg.norm(index.matrix, axis=1), 1.0, atol=1e-4)


def test_rows_match_direct_embedding(big):
    g, emb, index, _ = big
    direct = emb.embed([e.name for e in g.entities]).astype(np.float32)
    assert np.allclose(index.matrix, direct, atol=1e-6)


def test_rebuild_is_byte_identical(tmp_path, big):
    g, emb, index, _ = big
    index.save(tmp_path / "a.idx")
    build_index(g, HashingEmbedder()).save(tmp_path / "b.idx")
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()
    loaded = EntityIndex.load(tmp_path / "a.idx")
    assert np.array_equal(loaded.matrix, index.matrix)
    assert loaded.provider_tag == index.provider_tag and loaded.graph_hash == g.fingerprint


def test_cache_reused_and_invalidated(tmp_path):
    g = ingest(["alpha", "beta"], [])
    path = tmp_path / "e.idx"
    first = load_or_build(path, g, HashingEmbedder())
    stamp = path.stat().st_mtime_ns
    again = load_or_build(path, g, HashingEmbedder())
    assert path.stat().st_mtime_ns == stamp
    assert np.array_equal(first.matrix, again.matrix)
    # a different embedder dimension invalidates the cache
    other = load_or_build(path, g, HashingEmbedder(dim=64))
    assert other.dim == 64
    # a different graph invalidates it too
    g2 = ingest(["alpha", "beta", "gamma"], [])
    assert len(load_or_build(path, g2, HashingEmbedder(dim=64))) == 3


def test_corrupt_cache_rebuilt(tmp_path):
    g = ingest(["alpha"], [])
    path = tmp_path / "e.idx"
    path.write_bytes(b'{"dim": 4, "count": 9, "provider_tag": "x", "graph_hash": "y"}\n\x00\x01')
    assert len(load_or_build(path, g, HashingEmbedder())) == 1


def test_exact_name_links_with_similarity_one():
    g = ingest(["gastric ulcer", "kidney stones"], [])
    emb = HashingEmbedder()
    res = link(["kidney stones"], build_index(g, emb), emb, 0.7)
    assert res.anchors == [1]
    assert res.provenance[1][1] == pytest.approx(1.0, abs=1e-6)


def test_unrelated_mention_not_linked():
    g = ingest(["abc"], [])
    emb = HashingEmbedder()
    res = link(["xyz"], build_index(g, emb), emb, 0.7)
    assert res.anchors == []
    assert res.unlinked[0][0] == "xyz"


def test_strict_threshold_boundary():
    g = ingest(["abc"], [])
    emb = HashingEmbedder()
    index = build_index(g, emb)
    sim = float(emb.embed(["abd"])[0].astype(np.float64) @ index.matrix[0].astype(np.float64))
    assert link(["abd"], index, emb, sim).anchors == []
    assert link(["abd"], index, emb, sim - 1e-9).anchors == [0]


def test_ties_go_to_lowest_id():
    class Const:
        tag = "const"

        def embed(self, texts):
            return np.ones((len(texts), 4), dtype=np.float32)

    g = ingest(["p", "q", "r"], [])
    index = build_index(g, Const())
    assert link(["anything"], index, Const(), 0.5).anchors == [0]


def test_provider_mismatch_rejected(big):
    _, _, index, _ = big
    with pytest.raises(ValueError):
        link(["x"], index, HashingEmbedder(seed=3), 0.7)


@pytest.mark.parametrize("delta", [0.5, 0.7, 0.9])
def test_link_matches_exhaustive_oracle(big, delta):
    g, emb, index, mentions = big
    # independent recomputation of both sides of the similarity matrix
    entity_matrix = emb.embed([e.name for e in g.entities]).astype(np.float32)
    mention_vecs = emb.embed(mentions)
    expected = oracle_link(mention_vecs, entity_matrix, delta)
    res = link(mentions, index, emb, delta)
    want = {}
    for mention, (eid, sim) in zip(mentions, expected):
        if eid is not None and (eid not in want or sim > want[eid][1]):
            want[eid] = (mention, sim)
    assert set(res.anchors) == set(want)
    assert len(res.anchors) == len(set(res.anchors))
    for eid, (mention, sim) in want.items():
        assert res.provenance[eid][0] == mention
        assert res.provenance[eid][1] == pytest.approx(sim, abs=1e-9)
        assert res.provenance[eid][1] > delta


def test_threshold_monotonicity(big):
    _, emb, index, mentions = big
    sets = [set(link(mentions, index, emb, d).anchors) for d in (0.5, 0.7, 0.9)]
    assert sets[2] <= sets[1] <= sets[0]


class _Scaled:
    """Wraps an embedder and scales its raw output before normalization."""

    def __init__(self, inner, factor):
        self.inner, self.factor, self.tag = inner, factor, inner.tag

    def embed(self, texts):
        return self.inner.embed(texts) * self.factor


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.01, max_value=1000.0))
def test_scale_invariance(factor):
    rng = random.Random(9)
    names = _names(rng, 30)
    g = ingest(names, [])
    emb = HashingEmbedder()
    mentions = _mentions(rng, names, 15)
    base = link(mentions, build_index(g, emb), emb, 0.6)
    scaled = _Scaled(emb, factor)
    assert link(mentions, build_index(g, scaled), scaled, 0.6).anchors == base.anchors
