"""Observation-point sample splits and log citation-increment labels."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .corpus import GlobalCitationNetwork

CATEGORIES = ("previous", "fresh", "immediate")


class HorizonError(ValueError):
    """Requested time lies beyond the corpus coverage."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSpec:
    target: str
    observation_point: int
    label: float
    category: str
    accumulated_citations: int
    horizon_citations: int
    pub_time: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


@dataclass(frozen=True)
class Splits:
    train: tuple[SampleSpec, ...]
    val: tuple[SampleSpec, ...]
    test: tuple[SampleSpec, ...]

    def __iter__(self):
        return iter((self.train, self.val, self.test))

    def category_counts(self) -> dict[str, int]:
        return {c: sum(s.category == c for s in self.test) for c in CATEGORIES}


def log_transform(x, base: Optional[float] = None):
    """``log(1 + x)``, natural unless ``base`` is given."""
    y = np.log1p(x)
    return y if base is None else y / math.log(base)


def label_increment(network: GlobalCitationNetwork, target: str, obs_point: int, delta: int = 5,
                    base: Optional[float] = None) -> float:
    """Log of one plus the citations ``target`` gains in ``(obs_point, obs_point + delta]``."""
    if obs_point + delta > network.horizon:
        raise HorizonError(f"label horizon {obs_point + delta} beyond corpus coverage {network.horizon}")
    inc = network.citations_at(target, obs_point + delta) - network.citations_at(target, obs_point)
    return float(log_transform(inc, base))


def eligible_papers(network: GlobalCitationNetwork, point: int) -> list[str]:
    """Papers published by ``point`` with complete metadata and at least one reference known at ``point``."""
    out = []
    for i, pid in enumerate(network.paper_ids):
        if network.pub_time[i] > point:
            continue
        if not network.papers[pid].has_complete_metadata:
            continue
        refs = network.references_of(i)
        if len(refs) and (network.pub_time[refs] <= point).any():
            out.append(pid)
    return out


def categorize(target_pub_time: int, test_point: int, in_train: bool) -> str:
    if target_pub_time == test_point:
        return "immediate"
    return "previous" if in_train else "fresh"


def _samples(network, ids, point, delta, base, category=None, train_ids=frozenset(), test_point=None):
    out = []
    for pid in ids:
        i = network.idx(pid)
        acc = network.citations_at(pid, point)
        hor = network.citations_at(pid, point + delta)
        pub = int(network.pub_time[i])
        cat = category or categorize(pub, test_point, pid in train_ids)
        out.append(SampleSpec(pid, int(point), float(log_transform(hor - acc, base)), cat, acc, hor, pub))
    return tuple(out)


def _subsample(ids: list[str], n: Optional[int], rng: np.random.Generator) -> list[str]:
    if n is None or n >= len(ids):
        return ids
    pick = rng.choice(len(ids), size=n, replace=False)
    return [ids[j] for j in sorted(pick)]


def make_splits(network: GlobalCitationNetwork, test_point: int, delta: int = 5, n_test: int = 300_000,
                seed: int = 0, train_point: Optional[int] = None, val_point: Optional[int] = None,
                n_train: Optional[int] = None, n_val: Optional[int] = None,
                base: Optional[float] = None) -> Splits:
    """Train/val/test samples at staggered observation points.

    Defaults: training point 5 steps and validation point 3 steps before the
    test point.  Every split uses the same prediction interval ``delta``.
    Test samples are categorized as ``immediate`` (published at the test
    point), ``previous`` (also a training target) or ``fresh``.
    """
    train_point = test_point - 5 if train_point is None else train_point
    val_point = test_point - 3 if val_point is None else val_point
    if not train_point < val_point < test_point:
        raise SplitError(f"need train < val < test, got {train_point}, {val_point}, {test_point}")
    if delta < 1:
        raise SplitError("delta must be >= 1")
    if test_point + delta > network.horizon:
        raise HorizonError(f"test labels need coverage to {test_point + delta}, corpus ends at {network.horizon}")

    rng = np.random.default_rng(seed)
    train_ids = _subsample(eligible_papers(network, train_point), n_train, rng)
    val_ids = _subsample(eligible_papers(network, val_point), n_val, rng)
    test_pool = eligible_papers(network, test_point)
    test_ids = _subsample(test_pool, n_test, rng)

    train = _samples(network, train_ids, train_point, delta, base, category="previous")
    val = _samples(network, val_ids, val_point, delta, base, category="previous")
    test = _samples(network, test_ids, test_point, delta, base, train_ids=frozenset(train_ids),
                    test_point=test_point)
    return Splits(train, val, test)


def save_samples(samples: Iterable[SampleSpec], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")


def load_samples(path: str | Path) -> tuple[SampleSpec, ...]:
    with open(path) as fh:
        return tuple(SampleSpec(**json.loads(line)) for line in fh if line.strip())


def save_splits(splits: Splits, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, samples in zip(("train", "val", "test"), splits):
        save_samples(samples, out / f"{name}.jsonl")
    return out


def load_splits(split_dir: str | Path) -> Splits:
    d = Path(split_dir)
    return Splits(*(load_samples(d / f"{name}.jsonl") for name in ("train", "val", "test")))
