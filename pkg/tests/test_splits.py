import math

import numpy as np
import pytest

from citeimpact.corpus import ingest_corpus, synth_corpus
from citeimpact.graphbuild import SamplingConfig, build_dynamic_graph
from citeimpact.splits import (CATEGORIES, HorizonError, SplitError, categorize, eligible_papers, label_increment,
                               load_splits, log_transform, make_splits, save_splits)

from conftest import rec
from leakage import perturb_future


def test_label_is_log_increment(tiny_network):
    # a: cited by c (2001), d and e (2002)
    assert label_increment(tiny_network, "a", 2000, delta=2) == pytest.approx(math.log(4))
    assert label_increment(tiny_network, "a", 2001, delta=1) == pytest.approx(math.log(3))
    assert label_increment(tiny_network, "a", 2001, delta=1, base=10) == pytest.approx(math.log10(3))


def test_label_beyond_horizon(tiny_network):
    with pytest.raises(HorizonError):
        label_increment(tiny_network, "a", 2001, delta=5)


def test_log_transform_zero():
    assert log_transform(0) == 0.0


def test_categorize_precedence():
    assert categorize(2010, 2010, True) == "immediate"
    assert categorize(2008, 2010, True) == "previous"
    assert categorize(2008, 2010, False) == "fresh"


def test_eligibility_needs_metadata_and_reference():
    recs = [rec("a", 2000), rec("b", 2001, refs=("a",)), rec("c", 2001, refs=("a",), abstract=""),
            rec("d", 2002, refs=("b",))]
    net = ingest_corpus(recs)
    assert eligible_papers(net, 2001) == ["b"]
    assert eligible_papers(net, 2002) == ["b", "d"]


def test_split_point_order_enforced(small_network):
    with pytest.raises(SplitError):
        make_splits(small_network, 2014, train_point=2012, val_point=2011)


def test_split_horizon(small_network):
    with pytest.raises(HorizonError):
        make_splits(small_network, 2016, delta=5)


@pytest.fixture(scope="module")
def splits_5k():
    net = ingest_corpus(synth_corpus(5000, seed=1))
    return net, make_splits(net, 2014, delta=5, n_test=1500, seed=0)


def test_split_integrity(splits_5k):
    net, sp = splits_5k
    train_ids = {s.target for s in sp.train}
    assert {s.observation_point for s in sp.train} == {2009}
    assert {s.observation_point for s in sp.val} == {2011}
    for s in sp.test:
        assert s.category in CATEGORIES
        if s.category == "fresh":
            assert s.target not in train_ids
        if s.category == "immediate":
            assert s.pub_time == 2014
        if s.category == "previous":
            assert s.target in train_ids
    counts = sp.category_counts()
    assert all(counts[c] > 0 for c in CATEGORIES)


def test_splits_deterministic_and_persisted(tmp_path, small_network):
    a = make_splits(small_network, 2014, n_test=50, seed=3)
    b = make_splits(small_network, 2014, n_test=50, seed=3)
    assert a == b
    save_splits(a, tmp_path)
    assert load_splits(tmp_path) == a


def test_labels_and_graphs_ignore_future_events(small_network):
    recs = list(small_network.records())
    obs, delta = 2010, 5
    sampling = SamplingConfig(2, (10, 3))
    after_obs = perturb_future(recs, obs, seed=1)
    after_label = perturb_future(recs, obs + delta, seed=2)
    rng = np.random.default_rng(0)
    targets = rng.choice(eligible_papers(small_network, obs), 25, replace=False)
    assert eligible_papers(after_obs, obs) == eligible_papers(small_network, obs)
    # the perturbation is visible to anything that looks past the horizon
    assert after_obs.n_cites != small_network.n_cites
    assert any(build_dynamic_graph(after_obs, p, obs + 3, 5, sampling)
               != build_dynamic_graph(small_network, p, obs + 3, 5, sampling) for p in targets)
    assert any(label_increment(after_obs, p, obs, delta) != label_increment(small_network, p, obs, delta)
               for p in targets)
    for pid in targets:
        g = build_dynamic_graph(small_network, pid, obs, 5, sampling)
        assert build_dynamic_graph(after_obs, pid, obs, 5, sampling) == g
        assert build_dynamic_graph(small_network.truncated(obs), pid, obs, 5, sampling) == g
        y = label_increment(small_network, pid, obs, delta)
        assert label_increment(after_label, pid, obs, delta) == y
