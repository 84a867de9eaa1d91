"""Paper corpus ingestion and the time-stamped global citation network.

A corpus is a stream of :class:`PaperRecord` rows (one JSON object per line on
disk).  :func:`ingest_corpus` cleans the stream and freezes it into a
:class:`GlobalCitationNetwork`, which every later stage treats as read-only.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

STORE_FORMAT = "citeimpact-network"
STORE_VERSION = 1

RECORD_FIELDS = ("paper_id", "title", "abstract", "author_ids", "venue_id", "pub_time", "references")


class CorpusError(Exception):
    pass


class RecordError(CorpusError):
    """A corpus line could not be parsed into a record."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DuplicatePaperError(CorpusError):
    pass


class UnknownPaperError(KeyError):
    pass


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    abstract: str
    author_ids: tuple[str, ...]
    venue_id: Optional[str]
    pub_time: int
    references: tuple[str, ...] = ()
    high_impact: bool = False

    @property
    def has_complete_metadata(self) -> bool:
        """Title, abstract, authors and venue all present, or flagged high-impact without venue."""
        if not (self.title and self.abstract and self.author_ids):
            return False
        return self.venue_id is not None or self.high_impact

    def to_dict(self) -> dict:
        d = {
            "paper_id": self.paper_id,
            "title": self.title,
            "abstract": self.abstract,
            "author_ids": list(self.author_ids),
            "venue_id": self.venue_id,
            "pub_time": self.pub_time,
            "references": list(self.references),
        }
        if self.high_impact:
            d["high_impact"] = True
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping, lineno: int = 0) -> "PaperRecord":
        if not isinstance(d, Mapping):
            raise RecordError(lineno, "record is not an object")
        missing = [k for k in RECORD_FIELDS if k not in d and k != "venue_id"]
        if missing:
            raise RecordError(lineno, f"missing fields {missing}")
        pid = d["paper_id"]
        if not isinstance(pid, str) or not pid:
            raise RecordError(lineno, "paper_id must be a non-empty string")
        for key in ("title", "abstract"):
            if not isinstance(d[key], str):
                raise RecordError(lineno, f"{key} must be a string")
        authors = d["author_ids"]
        if not isinstance(authors, list) or not all(isinstance(a, str) for a in authors):
            raise RecordError(lineno, "author_ids must be a list of strings")
        venue = d.get("venue_id")
        if venue is not None and not isinstance(venue, str):
            raise RecordError(lineno, "venue_id must be a string or null")
        t = d["pub_time"]
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or int(t) != t:
            raise RecordError(lineno, "pub_time must be a finite integer")
        refs = d["references"]
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            raise RecordError(lineno, "references must be a list of strings")
        hi = d.get("high_impact", False)
        if not isinstance(hi, bool):
            raise RecordError(lineno, "high_impact must be a boolean")
        return cls(pid, d["title"], d["abstract"], tuple(authors), venue or None, int(t), tuple(refs), hi)


def read_corpus(path: str | Path, strict: bool = False,
                errors: Optional[list] = None) -> Iterator[PaperRecord]:
    """Yield records from a line-delimited JSON corpus.

    Malformed lines raise :class:`RecordError` under ``strict``; otherwise they
    are logged, appended to ``errors`` when given, and skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordError(lineno, f"invalid JSON ({exc.msg})") from None
                yield PaperRecord.from_dict(obj, lineno)
            except RecordError as exc:
                if strict:
                    raise
                logger.warning("skipping malformed record: %s", exc)
                if errors is not None:
                    errors.append(exc)


def write_corpus(records: Iterable[PaperRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
            n += 1
    return n


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class IngestStats:
    dangling_references: int = 0
    self_citations: int = 0
    duplicate_references: int = 0
    excluded_incomplete: int = 0
    malformed_records: int = 0


class GlobalCitationNetwork:
    """Immutable citation + metadata graph.

    Papers are indexed by position in sorted ``paper_ids`` order, so any
    permutation of the input stream produces the same network.  Edge arrays:

    * ``cite_src -> cite_dst`` (citing -> cited), tagged with ``cite_time``
      (the citing paper's ``pub_time``)
    * ``writes``: (author index, paper index)
    * ``publishes``: (venue index, paper index)
    * ``have``: (time index, paper index)
    """

    def __init__(self, records: Iterable[PaperRecord], stats: IngestStats = IngestStats()):
        recs = sorted(records, key=lambda r: r.paper_id)
        self.stats = stats
        self.paper_ids: tuple[str, ...] = tuple(r.paper_id for r in recs)
        self.index: Mapping[str, int] = MappingProxyType({p: i for i, p in enumerate(self.paper_ids)})
        self.papers: Mapping[str, PaperRecord] = MappingProxyType({r.paper_id: r for r in recs})
        n = len(recs)
        self.pub_time = _readonly(np.array([r.pub_time for r in recs], dtype=np.int64))

        src, dst = [], []
        for i, r in enumerate(recs):
            for ref in r.references:
                src.append(i)
                dst.append(self.index[ref])
        src = np.array(src, dtype=np.int64)
        dst = np.array(dst, dtype=np.int64)
        order = np.lexsort((dst, src))
        self.cite_src = _readonly(src[order])
        self.cite_dst = _readonly(dst[order])
        self.cite_time = _readonly(self.pub_time[self.cite_src])
        # out-neighbours (references), CSR sorted by cited index
        self._ref_ptr = _readonly(np.concatenate([[0], np.cumsum(np.bincount(self.cite_src, minlength=n))]))
        # in-neighbours (citers), CSR sorted by citing time then index
        in_order = np.lexsort((self.cite_src, self.cite_time, self.cite_dst))
        self._cit_idx = _readonly(self.cite_src[in_order])
        self._cit_time = _readonly(self.cite_time[in_order])
        self._cit_ptr = _readonly(np.concatenate([[0], np.cumsum(np.bincount(self.cite_dst, minlength=n))]))

        self.author_ids: tuple[str, ...] = tuple(sorted({a for r in recs for a in r.author_ids}))
        self.venue_ids: tuple[str, ...] = tuple(sorted({r.venue_id for r in recs if r.venue_id is not None}))
        self.time_steps: tuple[int, ...] = tuple(sorted({r.pub_time for r in recs}))
        self.author_index = MappingProxyType({a: i for i, a in enumerate(self.author_ids)})
        self.venue_index = MappingProxyType({v: i for i, v in enumerate(self.venue_ids)})
        self.time_index = MappingProxyType({t: i for i, t in enumerate(self.time_steps)})

        writes = sorted({(self.author_index[a], i) for i, r in enumerate(recs) for a in r.author_ids})
        self.writes = _readonly(np.array(writes, dtype=np.int64).reshape(-1, 2))
        pubs = [(self.venue_index[r.venue_id], i) for i, r in enumerate(recs) if r.venue_id is not None]
        self.publishes = _readonly(np.array(pubs, dtype=np.int64).reshape(-1, 2))
        have = [(self.time_index[r.pub_time], i) for i, r in enumerate(recs)]
        self.have = _readonly(np.array(have, dtype=np.int64).reshape(-1, 2))

        self._paper_authors = tuple(tuple(sorted({self.author_index[a] for a in r.author_ids})) for r in recs)
        self._cache: dict = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------------ basics
    def __len__(self) -> int:
        return len(self.paper_ids)

    def __contains__(self, paper_id: object) -> bool:
        return paper_id in self.index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GlobalCitationNetwork):
            return NotImplemented
        return dict(self.papers) == dict(other.papers) and self.stats == other.stats

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_cites(self) -> int:
        return len(self.cite_src)

    @property
    def horizon(self) -> int:
        """Latest time step covered by the corpus."""
        return int(self.pub_time.max())

    def idx(self, paper_id: str) -> int:
        try:
            return self.index[paper_id]
        except KeyError:
            raise UnknownPaperError(paper_id) from None

    def paper_authors(self, i: int) -> tuple[int, ...]:
        return self._paper_authors[i]

    def paper_venue(self, i: int) -> Optional[int]:
        v = self.papers[self.paper_ids[i]].venue_id
        return None if v is None else self.venue_index[v]

    # --------------------------------------------------------------- queries
    def references_of(self, i: int) -> np.ndarray:
        """Indices cited by paper ``i`` (ascending)."""
        return self.cite_dst[self._ref_ptr[i]:self._ref_ptr[i + 1]]

    def citers_of(self, i: int, t: Optional[int] = None) -> np.ndarray:
        """Indices of papers citing ``i`` with citation time ``<= t``, oldest first."""
        lo, hi = self._cit_ptr[i], self._cit_ptr[i + 1]
        if t is not None:
            hi = lo + np.searchsorted(self._cit_time[lo:hi], t, side="right")
        return self._cit_idx[lo:hi]

    def citations_at(self, paper_id: str, t: int) -> int:
        """Number of citations ``paper_id`` has received up to and including ``t``."""
        i = self.idx(paper_id)
        lo, hi = self._cit_ptr[i], self._cit_ptr[i + 1]
        return int(np.searchsorted(self._cit_time[lo:hi], t, side="right"))

    def _cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    def citation_counts(self, t: int) -> np.ndarray:
        """Vector of ``citations_at`` for every paper at time ``t``."""

        def build():
            keep = self.cite_time <= t
            return _readonly(np.bincount(self.cite_dst[keep], minlength=len(self)).astype(np.int64))

        return self._cached(("counts", int(t)), build)

    def adjacency(self, t: Optional[int] = None) -> sp.csr_matrix:
        """Sparse citing x cited matrix restricted to citation time ``<= t``."""

        def build():
            keep = np.ones(self.n_cites, bool) if t is None else self.cite_time <= t
            n = len(self)
            data = np.ones(int(keep.sum()), dtype=np.float64)
            return sp.csr_matrix((data, (self.cite_src[keep], self.cite_dst[keep])), shape=(n, n))

        return self._cached(("adj", t), build)

    def truncated(self, t: int) -> "GlobalCitationNetwork":
        """The network as it looked at time ``t``: papers published after ``t`` removed."""
        kept = {p for p, r in self.papers.items() if r.pub_time <= t}
        recs = []
        for p in sorted(kept):
            r = self.papers[p]
            recs.append(PaperRecord(r.paper_id, r.title, r.abstract, r.author_ids, r.venue_id, r.pub_time,
                                    tuple(x for x in r.references if x in kept), r.high_impact))
        return GlobalCitationNetwork(recs, self.stats)

    def records(self) -> Iterator[PaperRecord]:
        for p in self.paper_ids:
            yield self.papers[p]


def ingest_corpus(records: Iterable[PaperRecord], malformed: int = 0) -> GlobalCitationNetwork:
    """Clean a record stream and build the global network.

    References to papers outside the corpus and self-citations are dropped and
    counted; papers without a venue are admitted only when flagged
    ``high_impact``.  A duplicate ``paper_id`` aborts ingestion.
    """
    by_id: dict[str, PaperRecord] = {}
    excluded: set[str] = set()
    for rec in records:
        if rec.paper_id in by_id or rec.paper_id in excluded:
            raise DuplicatePaperError(f"duplicate paper_id {rec.paper_id!r}")
        if rec.venue_id is None and not rec.high_impact:
            excluded.add(rec.paper_id)
            continue
        by_id[rec.paper_id] = rec

    dangling = self_cites = dupes = 0
    cleaned = []
    for pid, rec in by_id.items():
        seen: set[str] = set()
        refs = []
        for ref in rec.references:
            if ref == pid:
                self_cites += 1
            elif ref not in by_id:
                dangling += 1
            elif ref in seen:
                dupes += 1
            else:
                seen.add(ref)
                refs.append(ref)
        cleaned.append(PaperRecord(rec.paper_id, rec.title, rec.abstract, rec.author_ids, rec.venue_id,
                                   rec.pub_time, tuple(refs), rec.high_impact))
    stats = IngestStats(dangling, self_cites, dupes, len(excluded), malformed)
    if dangling or self_cites or excluded:
        logger.info("ingest: dropped %d dangling references, %d self-citations; excluded %d papers without venue",
                    dangling, self_cites, len(excluded))
    return GlobalCitationNetwork(cleaned, stats)


def ingest_file(path: str | Path, strict: bool = False) -> GlobalCitationNetwork:
    errors: list[RecordError] = []
    records = list(read_corpus(path, strict=strict, errors=errors))
    return ingest_corpus(records, malformed=len(errors))


def citations_at(network: GlobalCitationNetwork, paper_id: str, t: int) -> int:
    return network.citations_at(paper_id, t)


# --------------------------------------------------------------------- store
#
# Layout of a network store directory:
#   meta.json       format tag, version, node/edge counts, ingest counters
#   papers.jsonl    cleaned PaperRecords sorted by paper_id (node table)
#   cites.tsv       citing_id <TAB> cited_id <TAB> time
#   writes.tsv      author_id <TAB> paper_id
#   publishes.tsv   venue_id <TAB> paper_id
#   have.tsv        time <TAB> paper_id


def save_network(network: GlobalCitationNetwork, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(network.records(), out / "papers.jsonl")
    ids = network.paper_ids
    with open(out / "cites.tsv", "w") as fh:
        fh.write("citing_id\tcited_id\ttime\n")
        for s, d, t in zip(network.cite_src, network.cite_dst, network.cite_time):
            fh.write(f"{ids[s]}\t{ids[d]}\t{t}\n")
    with open(out / "writes.tsv", "w") as fh:
        fh.write("author_id\tpaper_id\n")
        for a, p in network.writes:
            fh.write(f"{network.author_ids[a]}\t{ids[p]}\n")
    with open(out / "publishes.tsv", "w") as fh:
        fh.write("venue_id\tpaper_id\n")
        for v, p in network.publishes:
            fh.write(f"{network.venue_ids[v]}\t{ids[p]}\n")
    with open(out / "have.tsv", "w") as fh:
        fh.write("time\tpaper_id\n")
        for t, p in network.have:
            fh.write(f"{network.time_steps[t]}\t{ids[p]}\n")
    meta = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "counts": {
            "paper": len(network), "author": len(network.author_ids), "venue": len(network.venue_ids),
            "time": len(network.time_steps), "cites": network.n_cites, "writes": len(network.writes),
            "publishes": len(network.publishes), "have": len(network.have),
        },
        "ingest": network.stats.__dict__,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_network(store_dir: str | Path) -> GlobalCitationNetwork:
    store = Path(store_dir)
    meta = json.loads((store / "meta.json").read_text())
    if meta.get("format") != STORE_FORMAT:
        raise CorpusError(f"{store} is not a network store")
    if meta.get("version") != STORE_VERSION:
        raise CorpusError(f"unsupported network store version {meta.get('version')}")
    recs = list(read_corpus(store / "papers.jsonl", strict=True))
    net = GlobalCitationNetwork(recs, IngestStats(**meta["ingest"]))
    if net.n_cites != meta["counts"]["cites"] or len(net) != meta["counts"]["paper"]:
        raise CorpusError(f"{store}: node/edge tables disagree with meta.json")
    return net


# ----------------------------------------------------------------- synthetic

TIER_WORDS = (
    ("routine", "replication", "minor", "note"),
    ("incremental", "extension", "variant", "study"),
    ("improved", "effective", "practical", "method"),
    ("novel", "principled", "general", "framework"),
    ("seminal", "breakthrough", "foundational", "paradigm"),
)

TOPIC_WORDS = (
    "graph", "network", "citation", "learning", "protein", "catalyst", "memory", "cognition", "language",
    "vision", "optimization", "sampling", "kernel", "polymer", "synthesis", "behavior", "attention",
    "inference", "dynamics", "spectral", "reaction", "survey", "benchmark", "embedding", "molecule",
    "therapy", "decision", "bias", "signal", "control",
)


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic corpus generator.

    Reference targets are drawn with probability
    ``pa_mix * attachment + (1 - pa_mix) * uniform`` where attachment is
    proportional to ``(in_degree + 1) * fitness * exp(-aging * age)``.
    """

    start_time: int = 1990
    n_steps: int = 30
    growth: float = 0.08
    mean_refs: float = 8.0
    pa_mix: float = 0.8
    aging: float = 0.15
    fitness_sigma: float = 0.7
    n_authors: Optional[int] = None
    n_venues: int = 25
    zipf_exponent: float = 1.1
    max_authors: int = 4
    missing_venue_rate: float = 0.0
    topic_words: int = 6


@dataclass
class SyntheticCorpus:
    """Records of a generated corpus plus the generator's own bookkeeping."""

    records: list[PaperRecord]
    counts: dict = field(default_factory=dict)
    fitness: dict = field(default_factory=dict)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _zipf_probs(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s
    return w / w.sum()


def synth_corpus(n_papers: int, seed: int, params: SynthParams = SynthParams()) -> SyntheticCorpus:
    """Generate a citation corpus with preferential attachment.

    Papers are emitted in ``pub_time`` order and cite only papers from earlier
    time steps.  Each paper carries a hidden fitness that scales its
    attractiveness and is echoed by tier words in its title and abstract, so
    text is informative about impact.
    """
    if n_papers < 1:
        raise ValueError("n_papers must be >= 1")
    rng = np.random.default_rng(seed)
    p = params
    n_steps = max(1, min(p.n_steps, n_papers))
    w = np.exp(p.growth * np.arange(n_steps))
    per_step = np.floor(w / w.sum() * n_papers).astype(int)
    per_step[np.argsort(-(w / w.sum() * n_papers - per_step), kind="stable")[: n_papers - per_step.sum()]] += 1
    times = np.repeat(p.start_time + np.arange(n_steps), per_step)

    n_authors = p.n_authors or max(2, n_papers // 2)
    author_p = _zipf_probs(n_authors, p.zipf_exponent)
    venue_p = _zipf_probs(p.n_venues, p.zipf_exponent)
    fitness = rng.lognormal(0.0, p.fitness_sigma, n_papers)
    tier_cut = np.quantile(fitness, [0.2, 0.4, 0.6, 0.8]) if n_papers > 1 else np.array([])
    indeg = np.zeros(n_papers, dtype=np.float64)
    width = len(str(n_papers - 1))

    records = []
    counts = {"paper": n_papers, "cites": 0, "writes": 0, "publishes": 0, "have": n_papers}
    authors_used: set[int] = set()
    venues_used: set[int] = set()
    start = 0
    for step in range(n_steps):
        stop = start + per_step[step]
        t = int(p.start_time + step)
        if start > 0:
            age = t - times[:start]
            attach = (indeg[:start] + 1.0) * fitness[:start] * np.exp(-p.aging * age)
            probs = p.pa_mix * attach / attach.sum() + (1.0 - p.pa_mix) / start
            probs /= probs.sum()
        new_cites = []
        for i in range(start, stop):
            refs: list[int] = []
            if start > 0:
                k = min(start, int(rng.poisson(p.mean_refs)))
                if k:
                    refs = sorted(int(x) for x in rng.choice(start, size=k, replace=False, p=probs))
            new_cites.extend(refs)
            n_auth = int(rng.integers(1, p.max_authors + 1))
            auth = sorted({int(a) for a in rng.choice(n_authors, size=n_auth, p=author_p)})
            authors_used.update(auth)
            venue = int(rng.choice(p.n_venues, p=venue_p))
            missing = p.missing_venue_rate > 0 and rng.random() < p.missing_venue_rate
            tier = int(np.searchsorted(tier_cut, fitness[i]))
            words = TIER_WORDS[tier]
            topics = [TOPIC_WORDS[j] for j in rng.choice(len(TOPIC_WORDS), size=p.topic_words)]
            title = " ".join([words[0], topics[0], topics[1], words[3]])
            abstract = " ".join(topics + list(words[1:3]) + [words[0]])
            counts["cites"] += len(refs)
            counts["writes"] += len(auth)
            if not missing:
                venues_used.add(venue)
                counts["publishes"] += 1
            records.append(PaperRecord(
                paper_id=f"P{i:0{width}d}", title=title, abstract=abstract,
                author_ids=tuple(f"A{a}" for a in auth),
                venue_id=None if missing else f"V{venue}", pub_time=t,
                references=tuple(f"P{r:0{width}d}" for r in refs),
                high_impact=bool(missing),
            ))
        for r in new_cites:
            indeg[r] += 1
        start = stop
    counts["author"] = len(authors_used)
    counts["venue"] = len(venues_used)
    counts["time"] = len(set(times.tolist()))
    return SyntheticCorpus(records, counts, {r.paper_id: float(f) for r, f in zip(records, fitness)})
