import numpy as np
import pytest
import torch
import torch.nn.functional as F

from citeimpact.encoder import (CitationGNNEncoder, CompGAT, EncoderConfig, EncoderState, GINConv, collate, encode,
                                segment_softmax, snapshot_type)
from citeimpact.graphbuild import SamplingConfig, build_dynamic_graph, build_snapshot, placeholder_snapshot

SAMPLING = SamplingConfig(2, (6, 2))


def gatv2_oracle(gat, h, src, dst):
    """Per-destination loop implementation of GATv2 attention."""
    n = h.shape[0]
    left = gat.w_left(h).view(n, gat.heads, gat.head_dim)
    right = gat.w_right(h).view(n, gat.heads, gat.head_dim)
    out = torch.zeros(len(src), gat.heads, dtype=h.dtype)
    for i in range(n):
        idx = [k for k in range(len(dst)) if dst[k] == i]
        if not idx:
            continue
        logits = torch.stack([(F.leaky_relu(left[i] + right[src[k]], 0.2) * gat.attn).sum(-1) for k in idx])
        out[idx] = torch.softmax(logits, dim=0)
    return out


def test_segment_softmax_matches_grouped_softmax():
    logits = torch.randn(7, 2, dtype=torch.float64)
    index = torch.tensor([0, 0, 2, 2, 2, 3, 0])
    out = segment_softmax(logits, index, 4)
    for g in (0, 2, 3):
        m = index == g
        assert torch.allclose(out[m], torch.softmax(logits[m], dim=0))


def test_compgat_attention_simplex_on_real_snapshots(small_network):
    net = small_network
    rng = np.random.default_rng(0)
    ids = [p for p in net.paper_ids if net.pub_time[net.idx(p)] <= 2012]
    torch.manual_seed(0)
    gat = CompGAT(16, heads=4).double()
    checked = 0
    for pid in rng.choice(ids, 25, replace=False):
        snap = build_snapshot(net, pid, int(rng.integers(2012, 2020)), SAMPLING)
        for rel in ("cites", "cited_by"):
            e = torch.as_tensor(snap.edges[rel])
            if e.shape[1] == 0:
                continue
            h = torch.randn(len(snap.nodes["paper"]), 16, dtype=torch.float64)
            c = torch.as_tensor(snap.cocite_strengths[rel])
            plain = gatv2_oracle(gat, h, e[0].tolist(), e[1].tolist())
            for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
                alpha, _, _ = gat.attention(h, e, c, lam)
                sums = torch.zeros(h.shape[0], 4, dtype=h.dtype).index_add(0, e[1], alpha)
                has_in = torch.bincount(e[1], minlength=h.shape[0]) > 0
                assert torch.allclose(sums[has_in], torch.ones_like(sums[has_in]), atol=1e-6)
                if lam == 0.0:
                    assert torch.allclose(alpha, plain, atol=1e-6)
                if lam == 1.0:
                    assert torch.allclose(alpha, c.unsqueeze(-1).expand_as(alpha), atol=1e-6)
            checked += 1
    assert checked >= 20


def test_compgat_forward_matches_explicit_messages():
    torch.manual_seed(1)
    gat = CompGAT(8, heads=2).double()
    h = torch.randn(4, 8, dtype=torch.float64)
    e = torch.tensor([[1, 2, 3, 0], [0, 0, 1, 2]])
    c = torch.tensor([0.25, 0.75, 1.0, 1.0], dtype=torch.float64)
    alpha, left, right = gat.attention(h, e, c, 0.5)
    agg = torch.zeros(4, 2, 4, dtype=torch.float64)
    for k in range(4):
        s, d = e[0, k], e[1, k]
        for head in range(2):
            pair = torch.cat([left[d, head], right[s, head]])
            agg[d, head] += alpha[k, head] * (pair @ gat.w_c[head])
    expect = F.leaky_relu(gat.norm(h + gat.out(agg.reshape(4, 8))), 0.2)
    assert torch.allclose(gat(h, e, c, 0.5), expect)


def test_gin_formula():
    torch.manual_seed(2)
    gin = GINConv(3).double()
    h_src = torch.randn(2, 3, dtype=torch.float64)
    h_dst = torch.randn(2, 3, dtype=torch.float64)
    e = torch.tensor([[0, 1, 1], [0, 0, 1]])
    pooled = torch.stack([h_src[0] + h_src[1], h_src[1]])
    assert torch.allclose(gin(h_src, h_dst, e, 0.3), gin.mlp(1.3 * h_dst + pooled))


def test_snapshot_type_bins():
    assert [snapshot_type(a, (0, 1, 2, 5)) for a in (0, 1, 2, 3, 5, 6, 20)] == [0, 1, 2, 3, 3, 4, 4]


@pytest.fixture(scope="module")
def graphs(small_network):
    rng = np.random.default_rng(3)
    ids = [p for p in small_network.paper_ids if small_network.pub_time[small_network.idx(p)] <= 2012]
    return [build_dynamic_graph(small_network, p, 2014, 3, SAMPLING) for p in rng.choice(ids, 6, replace=False)]


def small_encoder(table, **kw):
    torch.manual_seed(0)
    cfg = EncoderConfig(input_dim=table.dimension, hidden_dim=8, layers=2, heads=2, temporal_depth=1,
                        temporal_heads=2, T=3, **kw)
    return CitationGNNEncoder(cfg).double()


def test_batch_rows_are_independent(graphs, small_table):
    enc = small_encoder(small_table)
    together = enc(collate(graphs, small_table, dtype=torch.float64))
    alone = torch.cat([enc(collate([g], small_table, dtype=torch.float64)) for g in graphs])
    assert together.shape == (len(graphs), 8)
    assert torch.allclose(together, alone, atol=1e-10)


def test_placeholder_snapshots_do_not_contribute(small_network, small_table):
    net = small_network
    young = next(p for p in net.paper_ids if net.pub_time[net.idx(p)] == 2013
                 and len(net.references_of(net.idx(p))))
    g = build_dynamic_graph(net, young, 2014, 3, SAMPLING)
    assert g.mask.tolist() == [False, True, True]
    enc = small_encoder(small_table)
    base = enc(collate([g], small_table, dtype=torch.float64))
    batch = collate([g], small_table, dtype=torch.float64)
    batch.snapshots[0].x["time"].normal_()
    assert torch.allclose(enc(batch), base, atol=1e-12)


def test_state_capture_and_encode(graphs, small_table):
    enc = small_encoder(small_table, share_snapshots=True, readout="mean", scalar_gate=True)
    state = EncoderState()
    out = enc(collate(graphs, small_table, dtype=torch.float64), state)
    assert len(state.snapshot_states) == 2 and state.snapshot_states[0].shape == (len(graphs), 3, 8)
    vecs = encode(graphs, small_table, enc, batch_size=4)
    assert np.allclose(vecs, out.detach().numpy())


def test_encoder_rejects_wrong_T(graphs, small_table):
    enc = small_encoder(small_table)
    enc.cfg = EncoderConfig(input_dim=small_table.dimension, hidden_dim=8, layers=2, heads=2, temporal_depth=1,
                            temporal_heads=2, T=4)
    with pytest.raises(ValueError):
        enc(collate(graphs, small_table))


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(cocite_weight=1.5)
    with pytest.raises(ValueError):
        EncoderConfig(hidden_dim=10, heads=4)


def test_placeholder_only_time_node():
    s = placeholder_snapshot("x", 2000)
    assert s.placeholder and s.nodes["time"] == (2000,)


def test_dropout_only_in_training(graphs, small_table):
    enc = small_encoder(small_table, dropout=0.5)
    batch = collate(graphs, small_table, dtype=torch.float64)
    enc.eval()
    assert torch.equal(enc(batch), enc(batch))
    enc.train()
    assert not torch.allclose(enc(batch), enc(batch))
