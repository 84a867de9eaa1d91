import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from citeimpact.corpus import ingest_corpus, synth_corpus
from citeimpact.graphbuild import (NotYetPublishedError, PAPER_RELATIONS, RELATIONS, SamplingConfig,
                                   build_dynamic_graph, build_graphs, build_snapshot, cocitation_strengths,
                                   load_graphs, normalize_groups, raw_cocitation_counts, save_graphs)


def brute_top(net, cands, t, limit):
    key = sorted(cands, key=lambda c: (-net.pub_time[c], -net.citations_at(net.paper_ids[c], t), net.paper_ids[c]))
    return set(key[:limit])


def test_hop1_selection_matches_brute_force_sort(small_network):
    net = small_network
    t = 2015
    cfg = SamplingConfig(k=1, K=(5,))
    rng = np.random.default_rng(1)
    eligible = [p for p in net.paper_ids if net.pub_time[net.idx(p)] <= t]
    for pid in rng.choice(eligible, 40, replace=False):
        i = net.idx(pid)
        snap = build_snapshot(net, pid, t, cfg)
        refs = [r for r in net.references_of(i).tolist() if net.pub_time[r] <= t]
        citers = net.citers_of(i, t).tolist()
        expect = brute_top(net, refs, t, 5) | brute_top(net, citers, t, 5)
        got = {net.idx(p) for p in snap.nodes["paper"][1:]}
        assert got == expect
        roles = snap.paper_node_roles
        assert roles[pid] == "target"
        for p in snap.nodes["paper"][1:]:
            assert roles[p] == ("reference" if net.idx(p) in refs else "citation")


def test_snapshot_is_induced_and_target_first(small_network):
    net = small_network
    pid = net.paper_ids[100]
    t = 2018
    snap = build_snapshot(net, pid, t, SamplingConfig(2, (10, 3)))
    papers = [net.idx(p) for p in snap.nodes["paper"]]
    assert snap.nodes["paper"][0] == pid and snap.hops[0] == 0
    expect = {(a, b) for a in range(len(papers)) for b in range(len(papers))
              if papers[b] in net.references_of(papers[a]).tolist()}
    got = set(map(tuple, snap.edges["cites"].T.tolist()))
    assert got == expect
    assert np.array_equal(snap.edges["cited_by"], snap.edges["cites"][::-1])
    assert t in snap.nodes["time"]
    assert all(net.pub_time[p] <= t for p in papers)
    assert max(snap.hops) <= 2
    for r, (st_, dt) in RELATIONS.items():
        e = snap.edges[r]
        if e.shape[1]:
            assert e[0].max() < len(snap.nodes[st_]) and e[1].max() < len(snap.nodes[dt])


def test_metadata_nodes_match_papers(tiny_network):
    snap = build_snapshot(tiny_network, "c", 2002)
    assert set(snap.nodes["paper"]) == {"a", "b", "c", "d", "e"}
    assert set(snap.nodes["author"]) == {"A1", "A2", "A3"}
    assert set(snap.nodes["venue"]) == {"V1", "V2"}
    assert snap.nodes["time"] == (2000, 2001, 2002)
    assert snap.edges["have"].shape[1] == 5


def test_cocitation_strengths_match_dense_products():
    net = ingest_corpus(synth_corpus(50, seed=11))
    t = net.horizon
    A = net.adjacency(t).toarray()  # citing x cited
    co_cited = A.T @ A  # papers citing both endpoints
    coupled = A @ A.T  # references shared by both endpoints
    for pid in net.paper_ids[::5]:
        snap = build_snapshot(net, pid, t)
        g = np.array([net.idx(p) for p in snap.nodes["paper"]])
        for rel, dense in (("cites", co_cited), ("cited_by", coupled)):
            e = g[snap.edges[rel]]
            raw = raw_cocitation_counts(net, rel, e[0], e[1], t)
            assert np.array_equal(raw, dense[e[0], e[1]])
            s = snap.cocite_strengths[rel]
            sums = np.bincount(snap.edges[rel][1], weights=s)
            has_in = np.bincount(snap.edges[rel][1], minlength=len(sums)) > 0
            assert np.allclose(sums[has_in], 1.0, atol=1e-9)


def test_normalize_groups_uniform_fallback():
    out = normalize_groups(np.array([0.0, 0.0, 2.0, 6.0]), np.array([0, 0, 1, 1]))
    assert np.allclose(out, [0.5, 0.5, 0.25, 0.75])


def test_cocitation_ignores_future_citations(tiny_network):
    g = {"cites": np.array([[tiny_network.idx("c")], [tiny_network.idx("a")]]),
         "cited_by": np.array([[tiny_network.idx("a")], [tiny_network.idx("c")]])}
    early = cocitation_strengths(tiny_network, g, 2001)
    assert set(early) == set(PAPER_RELATIONS)
    # at 2002, d and e both cite a and c
    assert raw_cocitation_counts(tiny_network, "cites", g["cites"][0], g["cites"][1], 2001)[0] == 0
    assert raw_cocitation_counts(tiny_network, "cites", g["cites"][0], g["cites"][1], 2002)[0] == 2


def test_placeholders_before_publication(tiny_network):
    g = build_dynamic_graph(tiny_network, "f", 2004, T=4)
    assert [s.time_step for s in g.snapshots] == [2001, 2002, 2003, 2004]
    assert g.mask.tolist() == [False, False, True, True]
    ph = g.snapshots[0]
    assert ph.nodes["paper"] == () and ph.nodes["time"] == (2001,)


def test_not_yet_published(tiny_network):
    with pytest.raises(NotYetPublishedError) as exc:
        build_dynamic_graph(tiny_network, "f", 2002)
    assert exc.value.code == "not-yet-published"


def test_graph_file_round_trip(tmp_path, small_network):
    targets = list(small_network.paper_ids[:40])
    graphs = build_graphs(small_network, targets, 2016, T=3, sampling=SamplingConfig(2, (8, 2)))
    save_graphs(graphs, tmp_path / "g.jsonl")
    assert load_graphs(tmp_path / "g.jsonl") == graphs


def test_snapshot_equality_is_structural(tiny_network):
    assert build_snapshot(tiny_network, "c", 2002) == build_snapshot(tiny_network, "c", 2002)
    assert build_snapshot(tiny_network, "c", 2002) != build_snapshot(tiny_network, "c", 2003)


@settings(max_examples=20, deadline=None)
@given(k1=st.integers(1, 6), k2=st.integers(1, 3), idx=st.integers(0, 299))
def test_sampling_bounds(small_network, k1, k2, idx):
    net = small_network
    pid = net.paper_ids[idx]
    t = max(int(net.pub_time[idx]), 2010)
    snap = build_snapshot(net, pid, t, SamplingConfig(2, (k1, k2)))
    hop1 = sum(1 for h in snap.hops if h == 1)
    assert hop1 <= 2 * k1
    assert len(snap.nodes["paper"]) <= 1 + 2 * k1 + 2 * k1 * 2 * k2
