"""Citation-aware GNN encoder.

``L`` integrated layers, each running, for every snapshot, a relational
message-passing pass (CompGAT on paper-paper relations, GIN on metadata
relations, summed per destination type), a type-specific attention readout
into the snapshot state, and then a Transformer encoder across snapshots.
The target representation is the layer-average of snapshot states summed over
real (non-placeholder) snapshots.

Graphs are collated into :class:`GraphBatch` objects: for every snapshot
position, the snapshots of all graphs in the batch form one disjoint union.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .features import EmbeddingTable, SnapshotGate
from .graphbuild import (METADATA_RELATIONS, NODE_TYPES, PAPER_RELATIONS, RELATIONS, ROLE_ID,
                         DynamicHeteroGraph)


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 384
    hidden_dim: int = 64
    layers: int = 4
    cocite_weight: float = 0.5
    gin_eps: float = 0.0
    heads: int = 4
    temporal_depth: int = 4
    temporal_heads: int = 4
    T: int = 5
    snapshot_bins: tuple[int, ...] = (0, 1, 2, 5)
    share_snapshots: bool = False
    softmax_over_c: bool = False
    scalar_gate: bool = False
    readout: str = "attention"
    dropout: float = 0.0
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if not 0.0 <= self.cocite_weight <= 1.0:
            raise ValueError("cocite_weight must lie in [0, 1]")
        if self.hidden_dim % self.heads or self.hidden_dim % self.temporal_heads:
            raise ValueError("hidden_dim must be divisible by the head counts")
        if self.readout not in ("attention", "mean"):
            raise ValueError("readout must be 'attention' or 'mean'")

    @property
    def n_snapshot_types(self) -> int:
        return len(self.snapshot_bins) + 1

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        names = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in names}
        if "snapshot_bins" in d:
            d["snapshot_bins"] = tuple(d["snapshot_bins"])
        return cls(**d)


def snapshot_type(age: int, bins: Sequence[int]) -> int:
    """Bin index of a snapshot ``age`` (time since the target's publication)."""
    return int(np.searchsorted(np.asarray(bins), max(age, 0), side="left"))


# ------------------------------------------------------------------ batching

@dataclass
class SnapshotBatch:
    x: dict
    edges: dict
    strengths: dict
    paper_graph: torch.Tensor
    paper_role: torch.Tensor
    readout_mask: torch.Tensor
    time_index: torch.Tensor
    target_index: torch.Tensor

    def to(self, dtype) -> "SnapshotBatch":
        return replace(self, x={k: v.to(dtype) for k, v in self.x.items()},
                       strengths={k: v.to(dtype) for k, v in self.strengths.items()})


@dataclass
class GraphBatch:
    snapshots: list
    target_x: torch.Tensor
    mask: torch.Tensor
    snapshot_types: torch.Tensor
    targets: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.target_x.shape[0]

    def to(self, dtype) -> "GraphBatch":
        return replace(self, snapshots=[s.to(dtype) for s in self.snapshots], target_x=self.target_x.to(dtype))


@dataclass(frozen=True)
class GraphFeatures:
    """Table-independent batching inputs of one graph, reusable across epochs.

    Node features are kept as row indices into the embedding table, so the
    cached form stays small; vectors are gathered at collate time.
    """

    target_paper_id: str
    target_row: int
    snapshots: tuple
    mask: np.ndarray
    types: np.ndarray


def graph_features(g: DynamicHeteroGraph, table: EmbeddingTable,
                   snapshot_bins: Sequence[int] = (0, 1, 2, 5)) -> GraphFeatures:
    snaps = []
    for snap in g.snapshots:
        snaps.append({
            "t": snap.time_step,
            "rows": {nt: table.indices(nt, snap.nodes[nt]) for nt in NODE_TYPES},
            "edges": {r: np.asarray(snap.edges[r], dtype=np.int64) for r in RELATIONS},
            "strengths": {r: np.asarray(snap.cocite_strengths[r], dtype=np.float64) for r in PAPER_RELATIONS},
            "role": np.array([ROLE_ID[r] for r in snap.roles], dtype=np.int64),
            "readout": np.array([h <= 1 for h in snap.hops], dtype=bool),
            "time_pos": snap.nodes["time"].index(snap.time_step),
            "placeholder": snap.placeholder,
        })
    types = np.array([snapshot_type(s.time_step - g.target_pub_time, snapshot_bins) for s in g.snapshots],
                     dtype=np.int64)
    return GraphFeatures(g.target_paper_id, int(table.indices("paper", [g.target_paper_id])[0]), tuple(snaps),
                         np.asarray(g.mask, dtype=bool), types)


def collate(graphs: Sequence[DynamicHeteroGraph], table: EmbeddingTable,
            snapshot_bins: Sequence[int] = (0, 1, 2, 5), dtype=torch.float32,
            features: Optional[Sequence[GraphFeatures]] = None) -> GraphBatch:
    """Stack graphs into per-snapshot disjoint unions with raw input features.

    ``features`` may carry precomputed :func:`graph_features` of ``graphs``.
    """
    if not graphs:
        raise ValueError("empty batch")
    T = graphs[0].T
    if any(g.T != T for g in graphs):
        raise ValueError("all graphs in a batch need the same number of snapshots")
    if features is None:
        features = [graph_features(g, table, snapshot_bins) for g in graphs]
    return collate_features(features, table, dtype)


def collate_features(features: Sequence[GraphFeatures], table: EmbeddingTable,
                     dtype=torch.float32) -> GraphBatch:
    T = len(features[0].snapshots)
    dim = table.dimension
    snaps = []
    for s in range(T):
        x = {nt: [] for nt in NODE_TYPES}
        edges = {r: [] for r in RELATIONS}
        strengths = {r: [] for r in PAPER_RELATIONS}
        offset = {nt: 0 for nt in NODE_TYPES}
        paper_graph, role, readout, time_index, target_index = [], [], [], [], []
        for b, f in enumerate(features):
            snap = f.snapshots[s]
            rows = snap["rows"]
            for nt in NODE_TYPES:
                if len(rows[nt]):
                    x[nt].append(table.gather(nt, rows[nt], snap["t"]))
            for r, (st, dt) in RELATIONS.items():
                e = snap["edges"][r]
                if e.shape[1]:
                    edges[r].append(e + np.array([[offset[st]], [offset[dt]]]))
            for r in PAPER_RELATIONS:
                strengths[r].append(snap["strengths"][r])
            n_p = len(rows["paper"])
            paper_graph.append(np.full(n_p, b, dtype=np.int64))
            role.append(snap["role"])
            readout.append(snap["readout"])
            time_index.append(offset["time"] + snap["time_pos"])
            target_index.append(offset["paper"] if not snap["placeholder"] else -1)
            for nt in NODE_TYPES:
                offset[nt] += len(rows[nt])
        snaps.append(SnapshotBatch(
            x={nt: torch.as_tensor(np.concatenate(x[nt]) if x[nt] else np.zeros((0, dim)), dtype=dtype)
               for nt in NODE_TYPES},
            edges={r: torch.as_tensor(np.concatenate(edges[r], axis=1) if edges[r] else np.zeros((2, 0)),
                                      dtype=torch.long) for r in RELATIONS},
            strengths={r: torch.as_tensor(np.concatenate(strengths[r]), dtype=dtype) for r in PAPER_RELATIONS},
            paper_graph=torch.as_tensor(np.concatenate(paper_graph), dtype=torch.long),
            paper_role=torch.as_tensor(np.concatenate(role), dtype=torch.long),
            readout_mask=torch.as_tensor(np.concatenate(readout), dtype=torch.bool),
            time_index=torch.as_tensor(time_index, dtype=torch.long),
            target_index=torch.as_tensor(target_index, dtype=torch.long),
        ))
    target_x = torch.as_tensor(table.gather("paper", np.array([f.target_row for f in features]), 0), dtype=dtype)
    mask = torch.as_tensor(np.stack([f.mask for f in features]), dtype=torch.bool)
    types = torch.as_tensor(np.stack([f.types for f in features]), dtype=torch.long)
    return GraphBatch(snaps, target_x, mask, types, [f.target_paper_id for f in features])


# ---------------------------------------------------------------- primitives

def segment_softmax(logits: torch.Tensor, index: torch.Tensor, n: int) -> torch.Tensor:
    """Softmax of ``logits`` over entries sharing the same ``index`` (dim 0)."""
    if logits.shape[0] == 0:
        return logits
    shape = (n,) + tuple(logits.shape[1:])
    idx = index.view(-1, *([1] * (logits.dim() - 1))).expand_as(logits)
    peak = torch.full(shape, float("-inf"), dtype=logits.dtype).scatter_reduce(
        0, idx, logits.detach(), reduce="amax", include_self=True)
    ex = torch.exp(logits - peak.index_select(0, index))
    denom = torch.zeros(shape, dtype=logits.dtype).index_add(0, index, ex)
    return ex / denom.index_select(0, index)


class CompGAT(nn.Module):
    """GATv2 attention mixed with co-citation strengths.

    ``alpha_ij = lam * c_ij + (1 - lam) * softmax_i(e_ij)`` per destination
    ``i``; messages are ``W_c [W_left h_i || W_right h_j]`` per head, heads are
    concatenated and projected, and the output is
    ``LeakyReLU(LayerNorm(h_i + h_in))``.
    """

    def __init__(self, dim: int, heads: int = 4, negative_slope: float = 0.2, softmax_over_c: bool = False):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.slope = negative_slope
        self.softmax_over_c = softmax_over_c
        self.w_left = nn.Linear(dim, dim, bias=False)
        self.w_right = nn.Linear(dim, dim, bias=False)
        self.attn = nn.Parameter(torch.empty(heads, self.head_dim))
        self.w_c = nn.Parameter(torch.empty(heads, 2 * self.head_dim, self.head_dim))
        self.out = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)
        nn.init.xavier_uniform_(self.attn)
        nn.init.xavier_uniform_(self.w_c)

    def attention(self, h: torch.Tensor, edges: torch.Tensor, strengths: torch.Tensor,
                  lam: float) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return ``(alpha, left, right)``; ``alpha`` has shape ``(E, heads)``."""
        n = h.shape[0]
        left = self.w_left(h).view(n, self.heads, self.head_dim)
        right = self.w_right(h).view(n, self.heads, self.head_dim)
        src, dst = edges
        alpha = self._alpha(left.index_select(0, dst), right.index_select(0, src), dst, n, strengths, lam)
        return alpha, left, right

    def _alpha(self, left_dst, right_src, dst, n, strengths, lam):
        e = (F.leaky_relu(left_dst + right_src, self.slope) * self.attn).sum(-1)
        a_e = segment_softmax(e, dst, n)
        c = segment_softmax(strengths, dst, n) if self.softmax_over_c else strengths
        return lam * c.unsqueeze(-1) + (1.0 - lam) * a_e

    def forward(self, h: torch.Tensor, edges: torch.Tensor, strengths: torch.Tensor, lam: float) -> torch.Tensor:
        n, k = h.shape[0], self.head_dim
        src, dst = edges
        left = self.w_left(h).view(n, self.heads, k)
        right = self.w_right(h).view(n, self.heads, k)
        # W_c [l || r] splits into W_c_left l + W_c_right r, applied per node before gathering per edge.
        left_msg = torch.einsum("nhk,hkd->nhd", left, self.w_c[:, :k])
        right_msg = torch.einsum("nhk,hkd->nhd", right, self.w_c[:, k:])
        at_dst = torch.cat([left, left_msg], dim=-1).index_select(0, dst)
        at_src = torch.cat([right, right_msg], dim=-1).index_select(0, src)
        alpha = self._alpha(at_dst[..., :k], at_src[..., :k], dst, n, strengths, lam)
        msg = (at_dst[..., k:] + at_src[..., k:]) * alpha.unsqueeze(-1)
        h_in = torch.zeros(n, self.heads, k, dtype=h.dtype).index_add(0, dst, msg)
        h_in = self.out(h_in.reshape(n, self.heads * k))
        return F.leaky_relu(self.norm(h + h_in), self.slope)


class GINConv(nn.Module):
    """``f((1 + eps) * h_dst + sum of neighbour states)`` with a two-layer MLP ``f``."""

    def __init__(self, dim: int, negative_slope: float = 0.2):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.LeakyReLU(negative_slope), nn.Linear(dim, dim))

    def forward(self, h_src: torch.Tensor, h_dst: torch.Tensor, edges: torch.Tensor, eps: float) -> torch.Tensor:
        src, dst = edges
        pooled = torch.zeros_like(h_dst).index_add(0, dst, h_src.index_select(0, src))
        return self.mlp((1.0 + eps) * h_dst + pooled)


def relation_aggregate(outputs: Sequence[torch.Tensor]) -> torch.Tensor:
    """Fuse per-relation outputs for one node type by elementwise sum."""
    if not outputs:
        raise ValueError("no relation targets this node type")
    total = outputs[0]
    for o in outputs[1:]:
        total = total + o
    return total


class RelationalLayer(nn.Module):
    """One heterogeneous message-passing pass over a snapshot."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.compgat = nn.ModuleDict({r: CompGAT(cfg.hidden_dim, cfg.heads, cfg.negative_slope, cfg.softmax_over_c)
                                      for r in PAPER_RELATIONS})
        self.gin = nn.ModuleDict({r: GINConv(cfg.hidden_dim, cfg.negative_slope) for r in METADATA_RELATIONS})

    def forward(self, h: dict, snap: SnapshotBatch) -> dict:
        outputs = {nt: [] for nt in NODE_TYPES}
        for r in PAPER_RELATIONS:
            outputs["paper"].append(self.compgat[r](h["paper"], snap.edges[r], snap.strengths[r],
                                                    self.cfg.cocite_weight))
        for r in METADATA_RELATIONS:
            st, dt = RELATIONS[r]
            outputs[dt].append(self.gin[r](h[st], h[dt], snap.edges[r], self.cfg.gin_eps))
        return {nt: relation_aggregate(outputs[nt]) for nt in NODE_TYPES}


class SnapshotReadout(nn.Module):
    """Attention readout of 1-hop paper nodes into the snapshot state.

    Logits combine a GATv2-style state/paper term with a type term built from
    the snapshot-age bin and the paper role embeddings.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.slope = cfg.negative_slope
        self.mode = cfg.readout
        self.w_s = nn.Linear(d, d, bias=False)
        self.w_p = nn.Linear(d, d, bias=False)
        self.w_a = nn.Linear(d, 1, bias=False)
        self.w_t = nn.Linear(d, 1, bias=False)
        self.snapshot_emb = nn.Embedding(cfg.n_snapshot_types, d)
        self.role_emb = nn.Embedding(len(ROLE_ID), d)

    def attention(self, h_s, h_p, graph, role, stype):
        proj = self.w_p(h_p)
        e = self.w_a(F.leaky_relu(self.w_s(h_s).index_select(0, graph) + proj, self.slope)).squeeze(-1)
        e = e + self.w_t(F.leaky_relu(self.snapshot_emb(stype).index_select(0, graph) + self.role_emb(role), self.slope)).squeeze(-1)
        return segment_softmax(e, graph, h_s.shape[0]), proj

    def forward(self, h_s: torch.Tensor, h_paper: torch.Tensor, snap: SnapshotBatch,
                stype: torch.Tensor) -> torch.Tensor:
        b = h_s.shape[0]
        if self.mode == "mean":
            graph = snap.paper_graph
            sums = torch.zeros_like(h_s).index_add(0, graph, self.w_p(h_paper))
            cnt = torch.zeros(b, dtype=h_s.dtype).index_add(0, graph, torch.ones_like(graph, dtype=h_s.dtype))
            return h_s + sums / cnt.clamp(min=1).unsqueeze(-1)
        sel = snap.readout_mask
        graph = snap.paper_graph[sel]
        alpha, proj = self.attention(h_s, h_paper[sel], graph, snap.paper_role[sel], stype)
        update = torch.zeros_like(h_s).index_add(0, graph, alpha.unsqueeze(-1) * proj)
        return h_s + update


class TemporalEncoder(nn.Module):
    """Transformer encoder over the snapshot sequence with learned positions."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.pos = nn.Embedding(cfg.T, d)
        layer = nn.TransformerEncoderLayer(d, cfg.temporal_heads, dim_feedforward=2 * d, dropout=cfg.dropout,
                                           batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, cfg.temporal_depth, enable_nested_tensor=False)

    def forward(self, states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``states``: ``(B, T, d)``; ``mask`` is True at real snapshots."""
        if not mask.any(dim=1).all():
            raise ValueError("every sequence needs at least one unmasked snapshot")
        out = self.encoder(states + self.pos.weight[: states.shape[1]], src_key_padding_mask=~mask)
        return torch.where(mask.unsqueeze(-1), out, states)


@dataclass
class EncoderState:
    """Hidden states collected during a forward pass (for inspection and tests)."""

    node_states: list = field(default_factory=list)
    snapshot_states: list = field(default_factory=list)


class CitationGNNEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.input_proj = nn.ModuleDict({nt: nn.Linear(cfg.input_dim, d) for nt in NODE_TYPES})
        self.input_drop = nn.Dropout(cfg.dropout)
        self.gate = SnapshotGate(d, scalar=cfg.scalar_gate)
        n_struct = 1 if cfg.share_snapshots else cfg.T
        self.structural = nn.ModuleList(
            nn.ModuleList(RelationalLayer(cfg) for _ in range(n_struct)) for _ in range(cfg.layers))
        self.readout = nn.ModuleList(SnapshotReadout(cfg) for _ in range(cfg.layers))
        self.temporal = nn.ModuleList(TemporalEncoder(cfg) for _ in range(cfg.layers))

    def forward(self, batch: GraphBatch, state: Optional[EncoderState] = None) -> torch.Tensor:
        T = len(batch.snapshots)
        if T != self.cfg.T:
            raise ValueError(f"encoder built for T={self.cfg.T}, batch has {T} snapshots")
        h = [{nt: self.input_drop(self.input_proj[nt](s.x[nt])) for nt in NODE_TYPES} for s in batch.snapshots]
        target = self.input_drop(self.input_proj["paper"](batch.target_x))
        seq = torch.stack([self.gate(h[s]["time"][snap.time_index], target)
                           for s, snap in enumerate(batch.snapshots)], dim=1)
        per_layer = []
        for layer in range(self.cfg.layers):
            states = []
            for s, snap in enumerate(batch.snapshots):
                struct = self.structural[layer][0 if self.cfg.share_snapshots else s]
                h[s] = struct(h[s], snap)
                states.append(self.readout[layer](seq[:, s], h[s]["paper"], snap, batch.snapshot_types[:, s]))
            seq = self.temporal[layer](torch.stack(states, dim=1), batch.mask)
            per_layer.append(seq)
            if state is not None:
                state.node_states.append([dict(x) for x in h])
                state.snapshot_states.append(seq)
        pooled = torch.stack(per_layer).mean(dim=0)
        pooled = torch.where(batch.mask.unsqueeze(-1), pooled, torch.zeros_like(pooled))
        return pooled.sum(dim=1)


def encode(graphs: Sequence[DynamicHeteroGraph], table: EmbeddingTable, encoder: CitationGNNEncoder,
           batch_size: int = 32) -> np.ndarray:
    """Target representations for ``graphs`` in eval mode."""
    dtype = next(encoder.parameters()).dtype
    was_training = encoder.training
    encoder.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(graphs), batch_size):
            batch = collate(graphs[start:start + batch_size], table, encoder.cfg.snapshot_bins, dtype)
            out.append(encoder(batch).cpu().numpy())
    encoder.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, encoder.cfg.hidden_dim))
