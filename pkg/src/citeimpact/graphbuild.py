"""Per-target dynamic heterogeneous graphs.

Each snapshot is the k-hop cited/citing neighbourhood of a target paper as the
global network stood at one time step, decorated with author, venue and time
nodes.  Relations are stored with local node indices as ``(2, E)`` arrays of
``(src, dst)``; messages flow from ``src`` to ``dst``.

Relation directions:

=============  ===========  ===========
relation       src type     dst type
=============  ===========  ===========
cites          paper        paper        (citing -> cited)
cited_by       paper        paper        (cited -> citing)
writes         author       paper
written_by     paper        author
publishes      venue        paper
published_in   paper        venue
have           time         paper
had_by         paper        time
=============  ===========  ===========
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import GlobalCitationNetwork, UnknownPaperError

NODE_TYPES = ("paper", "author", "venue", "time")
RELATIONS = {
    "cites": ("paper", "paper"),
    "cited_by": ("paper", "paper"),
    "writes": ("author", "paper"),
    "written_by": ("paper", "author"),
    "publishes": ("venue", "paper"),
    "published_in": ("paper", "venue"),
    "have": ("time", "paper"),
    "had_by": ("paper", "time"),
}
REVERSE = {
    "cites": "cited_by", "cited_by": "cites", "writes": "written_by", "written_by": "writes",
    "publishes": "published_in", "published_in": "publishes", "have": "had_by", "had_by": "have",
}
PAPER_RELATIONS = ("cites", "cited_by")
METADATA_RELATIONS = ("writes", "written_by", "publishes", "published_in", "have", "had_by")
ROLES = ("reference", "citation", "target")
ROLE_ID = {r: i for i, r in enumerate(ROLES)}


class NotYetPublishedError(ValueError):
    """The target paper does not exist yet at the requested time step."""

    code = "not-yet-published"


@dataclass(frozen=True)
class SamplingConfig:
    """Neighbour sampling knobs.

    ``per_direction``: ``K_i`` caps cited and citing neighbours separately
    (otherwise jointly).  ``expand_both``: hop >= 2 expands every frontier paper
    in both directions (otherwise only along the direction that reached it).
    """

    k: int = 2
    K: tuple[int, ...] = (100, 20)
    per_direction: bool = True
    expand_both: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.K) != self.k:
            raise ValueError(f"K needs {self.k} entries, got {len(self.K)}")


def _empty_edges() -> np.ndarray:
    return np.zeros((2, 0), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class HeteroSnapshot:
    time_step: int
    target_paper_id: str
    nodes: Mapping[str, tuple]
    edges: Mapping[str, np.ndarray]
    roles: tuple[str, ...] = ()
    hops: tuple[int, ...] = ()
    cocite_strengths: Mapping[str, np.ndarray] = field(default_factory=dict)
    placeholder: bool = False

    @property
    def paper_node_roles(self) -> dict[str, str]:
        return dict(zip(self.nodes["paper"], self.roles))

    def num_nodes(self, ntype: str) -> int:
        return len(self.nodes[ntype])

    def target_index(self) -> Optional[int]:
        return None if self.placeholder else 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeteroSnapshot):
            return NotImplemented
        return (
            self.time_step == other.time_step
            and self.target_paper_id == other.target_paper_id
            and self.placeholder == other.placeholder
            and {k: tuple(v) for k, v in self.nodes.items()} == {k: tuple(v) for k, v in other.nodes.items()}
            and tuple(self.roles) == tuple(other.roles)
            and tuple(self.hops) == tuple(other.hops)
            and self.edges.keys() == other.edges.keys()
            and all(np.array_equal(self.edges[r], other.edges[r]) for r in self.edges)
            and self.cocite_strengths.keys() == other.cocite_strengths.keys()
            and all(np.array_equal(self.cocite_strengths[r], other.cocite_strengths[r])
                    for r in self.cocite_strengths)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=True)
class DynamicHeteroGraph:
    target_paper_id: str
    observation_point: int
    target_pub_time: int
    snapshots: tuple[HeteroSnapshot, ...]

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def mask(self) -> np.ndarray:
        """True for real snapshots, False for pre-publication placeholders."""
        return np.array([not s.placeholder for s in self.snapshots], dtype=bool)


# ------------------------------------------------------------------ sampling

def _select(network: GlobalCitationNetwork, cands: np.ndarray, t: int, limit: int) -> np.ndarray:
    """Top ``limit`` candidates: newest first, then most cited at ``t``, then paper_id."""
    if len(cands) <= limit:
        return np.sort(cands)
    counts = network.citation_counts(t)[cands]
    pub = network.pub_time[cands]
    # paper index order is paper_id order, so the last key is the id tie-break
    order = np.lexsort((cands, -counts, -pub))
    return np.sort(cands[order[:limit]])


def _neighbours(network: GlobalCitationNetwork, i: int, direction: str, t: int) -> np.ndarray:
    if direction == "cited":
        refs = network.references_of(i)
        return refs[network.pub_time[refs] <= t]
    return network.citers_of(i, t)


def sample_papers(network: GlobalCitationNetwork, target: int, t: int,
                  sampling: SamplingConfig) -> tuple[list[int], dict[int, str], dict[int, int]]:
    """Hop-by-hop neighbour sampling; returns (paper indices, roles, hops)."""
    roles = {target: "target"}
    hops = {target: 0}
    frontier = [target]
    for hop in range(1, sampling.k + 1):
        limit = sampling.K[hop - 1]
        found: dict[int, str] = {}
        for p in sorted(frontier):
            if hop == 1 or sampling.expand_both:
                directions = ("cited", "citing")
            else:
                directions = ("cited",) if roles[p] == "reference" else ("citing",)
            per_dir = {}
            for d in directions:
                cands = _neighbours(network, p, d, t)
                per_dir[d] = cands[[c not in hops for c in cands.tolist()]] if len(cands) else cands
            if sampling.per_direction:
                chosen = {d: _select(network, c, t, limit) for d, c in per_dir.items()}
            else:
                both = np.unique(np.concatenate(list(per_dir.values())))
                keep = set(_select(network, both, t, limit).tolist())
                chosen = {d: np.array([c for c in per_dir[d].tolist() if c in keep], dtype=np.int64)
                          for d in per_dir}
            for d in directions:
                for c in chosen[d].tolist():
                    if c in found:
                        continue
                    if hop == 1:
                        found[c] = "reference" if d == "cited" else "citation"
                    else:
                        found[c] = roles[p]
        for c, role in found.items():
            roles[c] = role
            hops[c] = hop
        frontier = list(found)
        if not frontier:
            break
    others = sorted(p for p in roles if p != target)
    return [target] + others, roles, hops


# ------------------------------------------------------------ co-citation

def raw_cocitation_counts(network: GlobalCitationNetwork, relation: str, src: np.ndarray,
                          dst: np.ndarray, t: int) -> np.ndarray:
    """Shared-neighbour counts for global paper index pairs at time ``t``.

    ``cites`` edges count papers citing both endpoints (co-cited); ``cited_by``
    edges count references shared by both endpoints (bibliographic coupling).
    """
    A = network.adjacency(t)
    if relation == "cites":
        A = A.T.tocsr()
    elif relation != "cited_by":
        raise ValueError(f"no co-citation strength for relation {relation!r}")
    if len(src) == 0:
        return np.zeros(0)
    return np.asarray(A[src].multiply(A[dst]).sum(axis=1)).ravel()


def normalize_groups(raw: np.ndarray, dst: np.ndarray, n_dst: Optional[int] = None) -> np.ndarray:
    """Divide by per-destination sums; all-zero groups become uniform."""
    raw = np.asarray(raw, dtype=np.float64)
    if len(raw) == 0:
        return raw
    n_dst = int(dst.max()) + 1 if n_dst is None else n_dst
    total = np.bincount(dst, weights=raw, minlength=n_dst)
    deg = np.bincount(dst, minlength=n_dst).astype(np.float64)
    zero = total[dst] == 0
    out = np.empty_like(raw)
    out[~zero] = raw[~zero] / total[dst[~zero]]
    out[zero] = 1.0 / deg[dst[zero]]
    return out


def cocitation_strengths(network: GlobalCitationNetwork, snapshot_edges: Mapping[str, np.ndarray],
                         t: int) -> dict[str, np.ndarray]:
    """Normalized co-cited/co-citing strengths for paper-paper edges.

    ``snapshot_edges`` maps ``cites``/``cited_by`` to ``(2, E)`` arrays of
    global paper indices.  Each destination's in-edges of one relation sum to 1.
    """
    out = {}
    for rel in PAPER_RELATIONS:
        if rel not in snapshot_edges:
            continue
        e = np.asarray(snapshot_edges[rel], dtype=np.int64).reshape(2, -1)
        raw = raw_cocitation_counts(network, rel, e[0], e[1], t)
        _, dst_local = np.unique(e[1], return_inverse=True)
        out[rel] = normalize_groups(raw, dst_local.ravel())
    return out


# --------------------------------------------------------------- snapshots

def placeholder_snapshot(target: str, t: int) -> HeteroSnapshot:
    nodes = {"paper": (), "author": (), "venue": (), "time": (int(t),)}
    return HeteroSnapshot(
        time_step=int(t), target_paper_id=target, nodes=nodes,
        edges={r: _empty_edges() for r in RELATIONS},
        cocite_strengths={r: np.zeros(0) for r in PAPER_RELATIONS}, placeholder=True,
    )


def build_snapshot(network: GlobalCitationNetwork, target: str, t: int,
                   sampling: SamplingConfig = SamplingConfig()) -> HeteroSnapshot:
    """Heterogeneous subgraph around ``target`` at time step ``t``."""
    ti = network.idx(target)
    if network.pub_time[ti] > t:
        raise NotYetPublishedError(f"{target} is published at {network.pub_time[ti]}, after t={t}")
    papers, roles, hops = sample_papers(network, ti, t, sampling)
    local = {p: j for j, p in enumerate(papers)}

    src, dst = [], []
    for p in papers:
        for r in network.references_of(p).tolist():
            if r in local:
                src.append(local[p])
                dst.append(local[r])
    cites = np.array([src, dst], dtype=np.int64).reshape(2, -1)

    author_set, venue_set = set(), set()
    time_set = {int(t)}
    for p in papers:
        author_set.update(network.paper_authors(p))
        v = network.paper_venue(p)
        if v is not None:
            venue_set.add(v)
        time_set.add(int(network.pub_time[p]))
    authors = sorted(author_set)
    venues = sorted(venue_set)
    times = sorted(time_set)
    a_local = {a: j for j, a in enumerate(authors)}
    v_local = {v: j for j, v in enumerate(venues)}
    t_local = {x: j for j, x in enumerate(times)}
    writes = [(a_local[a], j) for j, p in enumerate(papers) for a in network.paper_authors(p)]
    pubs = [(v_local[network.paper_venue(p)], j) for j, p in enumerate(papers) if network.paper_venue(p) is not None]
    have = [(t_local[int(network.pub_time[p])], j) for j, p in enumerate(papers)]

    def arr(pairs):
        return np.array(pairs, dtype=np.int64).reshape(-1, 2).T.copy()

    edges = {"cites": cites, "cited_by": cites[::-1].copy(), "writes": arr(writes), "publishes": arr(pubs),
             "have": arr(have)}
    for rel in ("writes", "publishes", "have"):
        edges[REVERSE[rel]] = edges[rel][::-1].copy()
    edges = {r: edges[r] for r in RELATIONS}

    g = np.array(papers, dtype=np.int64)
    strengths = cocitation_strengths(network, {r: g[edges[r]] for r in PAPER_RELATIONS}, t)

    nodes = {
        "paper": tuple(network.paper_ids[p] for p in papers),
        "author": tuple(network.author_ids[a] for a in authors),
        "venue": tuple(network.venue_ids[v] for v in venues),
        "time": tuple(times),
    }
    return HeteroSnapshot(
        time_step=int(t), target_paper_id=target, nodes=nodes, edges=edges,
        roles=tuple(roles[p] for p in papers), hops=tuple(hops[p] for p in papers),
        cocite_strengths=strengths,
    )


def build_dynamic_graph(network: GlobalCitationNetwork, target: str, observation_point: int, T: int = 5,
                        sampling: SamplingConfig = SamplingConfig()) -> DynamicHeteroGraph:
    """``T`` consecutive snapshots ending at ``observation_point``.

    Years before the target's publication become placeholder snapshots that
    carry only their time node.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    pub = int(network.pub_time[network.idx(target)])
    if pub > observation_point:
        raise NotYetPublishedError(f"{target} is published at {pub}, after observation point {observation_point}")
    snaps = []
    for t in range(observation_point - T + 1, observation_point + 1):
        if t < pub:
            snaps.append(placeholder_snapshot(target, t))
        else:
            snaps.append(build_snapshot(network, target, t, sampling))
    return DynamicHeteroGraph(target, int(observation_point), pub, tuple(snaps))


# ------------------------------------------------------------ serialization
#
# Graph files are JSON lines, one DynamicHeteroGraph per line:
#   {"target": str, "observation_point": int, "target_pub_time": int,
#    "snapshots": [{"time_step": int, "placeholder": bool,
#                   "nodes": {type: [ids]}, "edges": {relation: [[src...], [dst...]]},
#                   "roles": [str], "hops": [int], "strengths": {relation: [float]}}]}
# Floats are written with repr precision, so a load/save cycle is lossless.

def snapshot_to_dict(s: HeteroSnapshot) -> dict:
    return {
        "time_step": s.time_step,
        "placeholder": s.placeholder,
        "nodes": {k: list(v) for k, v in s.nodes.items()},
        "edges": {r: s.edges[r].tolist() for r in RELATIONS},
        "roles": list(s.roles),
        "hops": list(s.hops),
        "strengths": {r: s.cocite_strengths[r].tolist() for r in PAPER_RELATIONS},
    }


def snapshot_from_dict(d: Mapping, target: str) -> HeteroSnapshot:
    return HeteroSnapshot(
        time_step=int(d["time_step"]), target_paper_id=target,
        nodes={k: tuple(v) for k, v in d["nodes"].items()},
        edges={r: np.array(d["edges"][r], dtype=np.int64).reshape(2, -1) for r in RELATIONS},
        roles=tuple(d["roles"]), hops=tuple(d["hops"]),
        cocite_strengths={r: np.array(d["strengths"][r], dtype=np.float64) for r in PAPER_RELATIONS},
        placeholder=bool(d["placeholder"]),
    )


def graph_to_dict(g: DynamicHeteroGraph) -> dict:
    return {"target": g.target_paper_id, "observation_point": g.observation_point,
            "target_pub_time": g.target_pub_time, "snapshots": [snapshot_to_dict(s) for s in g.snapshots]}


def graph_from_dict(d: Mapping) -> DynamicHeteroGraph:
    target = d["target"]
    return DynamicHeteroGraph(target, int(d["observation_point"]), int(d["target_pub_time"]),
                              tuple(snapshot_from_dict(s, target) for s in d["snapshots"]))


def save_graphs(graphs: Iterable[DynamicHeteroGraph], path: str | Path) -> int:
    n = 0
    with open(path, "w") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_dict(g), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def load_graphs(path: str | Path) -> list[DynamicHeteroGraph]:
    with open(path) as fh:
        return [graph_from_dict(json.loads(line)) for line in fh if line.strip()]


def build_graphs(network: GlobalCitationNetwork, targets: Sequence[str], observation_point: int, T: int = 5,
                 sampling: SamplingConfig = SamplingConfig()) -> list[DynamicHeteroGraph]:
    missing = [p for p in targets if p not in network]
    if missing:
        raise UnknownPaperError(missing[0])
    return [build_dynamic_graph(network, p, observation_point, T, sampling) for p in targets]
