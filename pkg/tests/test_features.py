import numpy as np
import pytest
import torch

from citeimpact.features import (EmbeddingError, EmbeddingTable, HashingProvider, SentenceEncoderProvider,
                                 SnapshotGate, TextEmbeddingProvider, embed_metadata, embed_papers,
                                 init_snapshot_state, make_provider, paper_text)

from conftest import rec


def test_hashing_provider_is_deterministic_and_normalized():
    p = HashingProvider(64)
    assert isinstance(p, TextEmbeddingProvider)
    a = p.embed(["graph neural network", "protein folding"])
    b = HashingProvider(64).embed(["graph neural network", "protein folding"])
    assert a.shape == (2, 64) and np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


def test_paper_text():
    assert paper_text(rec("a", 1, title="T", abstract="Abs")) == "T. Abs"
    assert paper_text(rec("a", 1, title="T", abstract="")) == "T"


def test_metadata_vectors_are_means_of_visible_papers(small_network, small_table):
    net, table = small_network, small_table
    P = table.paper_vectors
    for t in (1998, 2008, 2019):
        meta = embed_metadata(net, table, t)
        for a_pos in range(0, len(net.author_ids), 17):
            aid = net.author_ids[a_pos]
            papers = [i for i, r in enumerate(net.records()) if aid in r.author_ids and r.pub_time <= t]
            expect = P[papers].mean(axis=0) if papers else np.zeros(P.shape[1])
            assert np.allclose(meta["author"][a_pos], expect, atol=1e-12)
        for v_pos, vid in enumerate(net.venue_ids):
            papers = [i for i, r in enumerate(net.records()) if r.venue_id == vid and r.pub_time <= t]
            expect = P[papers].mean(axis=0) if papers else np.zeros(P.shape[1])
            assert np.allclose(meta["venue"][v_pos], expect, atol=1e-12)
        for k, step in enumerate(net.time_steps):
            papers = [i for i, r in enumerate(net.records()) if r.pub_time == step and step <= t]
            expect = P[papers].mean(axis=0) if papers else np.zeros(P.shape[1])
            assert np.allclose(meta["time"][k], expect, atol=1e-12)


def test_lookup_unknown_metadata_is_zero(small_table):
    out = small_table.lookup("author", ["no-such-author"], 2010)
    assert out.shape == (1, small_table.dimension) and not out.any()


def test_table_save_load(tmp_path, small_network, small_table):
    small_table.save(tmp_path)
    back = EmbeddingTable.load(small_network, tmp_path)
    assert np.array_equal(back.paper_vectors, small_table.paper_vectors)


def test_table_rejects_non_finite(small_network):
    v = np.zeros((len(small_network), 4))
    v[0, 0] = np.nan
    with pytest.raises(ValueError):
        EmbeddingTable(small_network, v)


class _Broken:
    dimension = 4
    deterministic = True

    def embed(self, texts):
        raise RuntimeError("service down")


class _Model:
    def encode(self, texts, batch_size=64):
        return np.ones((len(texts), 3))


def test_provider_failures_are_reported():
    with pytest.raises(EmbeddingError, match="service down"):
        embed_papers(_Broken(), [rec("a", 1)])
    with pytest.raises(EmbeddingError, match="shape"):
        SentenceEncoderProvider(dimension=5, model=_Model()).embed(["x"])


def test_injected_sentence_encoder():
    p = SentenceEncoderProvider(dimension=3, model=_Model())
    assert embed_papers(p, [rec("a", 1), rec("b", 1)]).shape == (2, 3)


def test_make_provider():
    assert isinstance(make_provider("hashing", 16), HashingProvider)
    with pytest.raises(ValueError):
        make_provider("nope")


def test_snapshot_gate_formula():
    torch.manual_seed(0)
    h_t, h_tgt = torch.randn(3, 4, dtype=torch.float64), torch.randn(3, 4, dtype=torch.float64)
    w1, w2 = torch.randn(4, 4, dtype=torch.float64), torch.randn(4, 4, dtype=torch.float64)
    expect = torch.sigmoid(h_t @ w1.T + h_tgt @ w2.T) * h_t
    assert torch.allclose(init_snapshot_state(h_t, h_tgt, w1, w2), expect)
    scalar = SnapshotGate(4, scalar=True).double()
    out = scalar(h_t, h_tgt)
    ratio = out / h_t
    assert torch.allclose(ratio, ratio[:, :1].expand_as(ratio))
