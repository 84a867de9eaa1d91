"""Popularity-aware disentanglement of the predicted citation increment.

Three perspective heads (diffusion, conformity, contribution) each encode the
target representation and predict a share of the increment; the shares sum to
the prediction.  Auxiliary objectives shape the heads:

* diffusion: triplet contrast of the original graph against a view with
  lowly-cited papers dropped (positive) and one with highly-cited papers
  dropped (negative);
* conformity: classification of equal-frequency bins of accumulated citations;
* all pairs: squared-cosine orthogonality between head encodings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .corpus import GlobalCitationNetwork
from .graphbuild import (PAPER_RELATIONS, RELATIONS, DynamicHeteroGraph, HeteroSnapshot,
                         normalize_groups)

PERSPECTIVES = ("diffusion", "conformity", "contribution")


# ------------------------------------------------------------------- heads

def mlp(n_in: int, n_hidden: int, n_out: int, negative_slope: float = 0.2) -> nn.Sequential:
    return nn.Sequential(nn.Linear(n_in, n_hidden), nn.LeakyReLU(negative_slope), nn.Linear(n_hidden, n_out))


@dataclass(frozen=True)
class PredictionBreakdown:
    dif: float
    con: float
    contribution: float
    total: float


def combine_parts(dif, con, contribution):
    """The one summation order used for totals everywhere."""
    return (dif + con) + contribution


@dataclass
class HeadOutput:
    encodings: dict
    parts: torch.Tensor
    total: torch.Tensor

    def breakdowns(self) -> list[PredictionBreakdown]:
        p = self.parts.detach().cpu().numpy()
        tot = self.total.detach().cpu().numpy()
        return [PredictionBreakdown(float(a), float(b), float(c), float(t)) for (a, b, c), t in zip(p, tot)]


class PerspectiveHeads(nn.Module):
    """Per-perspective encoder and predictor MLPs plus the auxiliary heads.

    With ``single=True`` only one head exists and its prediction is reported
    as the contribution value (diffusion and conformity are zero).
    """

    def __init__(self, dim: int, n_bins: int = 5, proj_dim: Optional[int] = None, single: bool = False,
                 negative_slope: float = 0.2):
        super().__init__()
        self.single = single
        names = ("contribution",) if single else PERSPECTIVES
        self.enc = nn.ModuleDict({v: mlp(dim, dim, dim, negative_slope) for v in names})
        self.pred = nn.ModuleDict({v: mlp(dim, dim, 1, negative_slope) for v in names})
        if not single:
            self.projector = mlp(dim, dim, proj_dim or dim, negative_slope)
            self.classifier = mlp(dim, dim, n_bins, negative_slope)

    def forward(self, o: torch.Tensor) -> HeadOutput:
        enc = {v: self.enc[v](o) for v in self.enc}
        preds = {v: self.pred[v](enc[v]).squeeze(-1) for v in self.enc}
        zero = torch.zeros(o.shape[0], dtype=o.dtype)
        dif = preds.get("diffusion", zero)
        con = preds.get("conformity", zero)
        ctr = preds["contribution"]
        return HeadOutput(enc, torch.stack([dif, con, ctr], dim=-1), combine_parts(dif, con, ctr))

    def project(self, enc_dif: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.projector(enc_dif), dim=-1)

    def classify(self, enc_con: torch.Tensor) -> torch.Tensor:
        return self.classifier(enc_con)


def perspective_forward(heads: PerspectiveHeads, o: torch.Tensor):
    """``(enc_dif, enc_con, enc_ctr, breakdowns)`` for a batch of representations."""
    out = heads(o)
    e = out.encodings
    return e.get("diffusion"), e.get("conformity"), e["contribution"], out.breakdowns()


# ------------------------------------------------------------ augmentation

@dataclass(frozen=True)
class AugmentationSpec:
    mode: str
    drop_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("positive", "negative"):
            raise ValueError("mode must be 'positive' or 'negative'")
        if not 0.0 <= self.drop_fraction <= 0.9:
            raise ValueError("drop_fraction must lie in [0, 0.9]")


def drop_probabilities(citations: np.ndarray, mode: str) -> np.ndarray:
    """Selection weights for dropping, from citation counts normalized within the subgraph."""
    c = np.asarray(citations, dtype=np.float64)
    n = len(c)
    if n == 0:
        return c
    w = c / c.sum() if c.sum() > 0 else np.full(n, 1.0 / n)
    sel = 1.0 - w if mode == "positive" else w
    if sel.sum() <= 0:
        sel = np.ones(n)
    return sel / sel.sum()


def choose_drops(citations: np.ndarray, mode: str, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Indices to drop; the count is ``rho * n`` with stochastic rounding."""
    n = len(citations)
    if n == 0 or rho <= 0:
        return np.zeros(0, dtype=np.int64)
    k = min(n, int(math.floor(rho * n + rng.random())))
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    p = drop_probabilities(citations, mode) + 1e-12
    return np.sort(rng.choice(n, size=k, replace=False, p=p / p.sum()))


def induced_snapshot(snap: HeteroSnapshot, keep_paper: np.ndarray) -> HeteroSnapshot:
    """Restrict a snapshot to the kept paper nodes; metadata left without edges is removed."""
    if snap.placeholder or keep_paper.all():
        return snap
    new_paper = -np.ones(len(keep_paper), dtype=np.int64)
    new_paper[keep_paper] = np.arange(int(keep_paper.sum()))
    edges = {}
    for r in PAPER_RELATIONS:
        e = snap.edges[r]
        ok = keep_paper[e[0]] & keep_paper[e[1]]
        edges[r] = new_paper[e[:, ok]]
    strengths = {}
    for r in PAPER_RELATIONS:
        e = snap.edges[r]
        ok = keep_paper[e[0]] & keep_paper[e[1]]
        strengths[r] = normalize_groups(snap.cocite_strengths[r][ok], edges[r][1], int(keep_paper.sum())) \
            if ok.any() else np.zeros(0)
    nodes = {"paper": tuple(p for p, k in zip(snap.nodes["paper"], keep_paper) if k)}
    for fwd in ("writes", "publishes", "have"):
        meta_type = RELATIONS[fwd][0]
        e = snap.edges[fwd]
        ok = keep_paper[e[1]]
        used = np.zeros(len(snap.nodes[meta_type]), dtype=bool)
        used[e[0, ok]] = True
        if meta_type == "time":
            used[snap.nodes["time"].index(snap.time_step)] = True
        remap = -np.ones(len(used), dtype=np.int64)
        remap[used] = np.arange(int(used.sum()))
        nodes[meta_type] = tuple(x for x, u in zip(snap.nodes[meta_type], used) if u)
        kept = np.stack([remap[e[0, ok]], new_paper[e[1, ok]]]) if ok.any() else np.zeros((2, 0), np.int64)
        edges[fwd] = kept
    edges["written_by"] = edges["writes"][::-1].copy()
    edges["published_in"] = edges["publishes"][::-1].copy()
    edges["had_by"] = edges["have"][::-1].copy()
    return replace(snap, nodes={k: nodes[k] for k in snap.nodes}, edges={r: edges[r] for r in RELATIONS},
                   roles=tuple(r for r, k in zip(snap.roles, keep_paper) if k),
                   hops=tuple(h for h, k in zip(snap.hops, keep_paper) if k), cocite_strengths=strengths)


def augment_views(graph: DynamicHeteroGraph, network: GlobalCitationNetwork,
                  spec: AugmentationSpec) -> DynamicHeteroGraph:
    """Citation-weighted node dropping, snapshot by snapshot.

    Positive views preferentially drop lowly-cited papers, negative views
    highly-cited ones.  The target paper is never dropped.
    """
    rng = np.random.default_rng(spec.seed)
    snaps = []
    for snap in graph.snapshots:
        if snap.placeholder or len(snap.nodes["paper"]) <= 1:
            snaps.append(snap)
            continue
        idx = np.array([network.index[p] for p in snap.nodes["paper"][1:]])
        cites = network.citation_counts(snap.time_step)[idx]
        drop = choose_drops(cites, spec.mode, spec.drop_fraction, rng) + 1
        keep = np.ones(len(snap.nodes["paper"]), dtype=bool)
        keep[drop] = False
        snaps.append(induced_snapshot(snap, keep))
    return replace(graph, snapshots=tuple(snaps))


# ------------------------------------------------------------------ losses

def diffusion_loss(z_ori: torch.Tensor, z_pos: torch.Tensor, z_neg: torch.Tensor, tau: float = 0.4) -> torch.Tensor:
    """Triplet InfoNCE: ``-log(exp(s_pos/tau) / (exp(s_pos/tau) + exp(s_neg/tau)))``, batch mean."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    s_pos = (z_ori * z_pos).sum(-1) / tau
    s_neg = (z_ori * z_neg).sum(-1) / tau
    return (torch.logsumexp(torch.stack([s_pos, s_neg], dim=-1), dim=-1) - s_pos).mean()


def conformity_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    m = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= m):
        raise ValueError(f"bin labels must lie in [0, {m})")
    return F.cross_entropy(logits, labels)


def orthogonal_loss(enc_dif: torch.Tensor, enc_con: torch.Tensor, enc_ctr: torch.Tensor,
                    literal: bool = False) -> torch.Tensor:
    """Mean squared cosine similarity over the three head pairs and the batch.

    Pairs containing a zero vector are skipped.  ``literal=True`` uses
    ``||v1 * v2||^2 / (||v1|| ||v2||)`` with an elementwise product instead.
    """
    vals = []
    masks = []
    for a, b in ((enc_dif, enc_con), (enc_dif, enc_ctr), (enc_con, enc_ctr)):
        na = (a * a).sum(-1)
        nb = (b * b).sum(-1)
        ok = (na > 0) & (nb > 0)
        safe_na = torch.where(ok, na, torch.ones_like(na))
        safe_nb = torch.where(ok, nb, torch.ones_like(nb))
        if literal:
            v = ((a * b) ** 2).sum(-1) / torch.sqrt(safe_na * safe_nb)
        else:
            v = (a * b).sum(-1) ** 2 / (safe_na * safe_nb)
        vals.append(torch.where(ok, v, torch.zeros_like(v)))
        masks.append(ok)
    valid = torch.stack(masks)
    if not valid.all():
        warnings.warn(f"orthogonal_loss: skipped {int((~valid).sum())} pairs with a zero vector", RuntimeWarning)
    if not valid.any():
        return enc_dif.sum() * 0.0
    return torch.stack(vals).sum() / valid.sum()


@dataclass
class LossComponents:
    total: torch.Tensor
    reg: torch.Tensor
    dif: Optional[torch.Tensor] = None
    con: Optional[torch.Tensor] = None
    ort: Optional[torch.Tensor] = None

    @property
    def dis(self) -> Optional[torch.Tensor]:
        if self.dif is None:
            return None
        return self.dif + self.con + self.ort

    def as_record(self) -> dict:
        def f(x):
            return None if x is None else float(x.detach())
        return {"L": f(self.total), "L_reg": f(self.reg), "L_dif": f(self.dif), "L_con": f(self.con),
                "L_ort": f(self.ort)}


def total_loss(pred_total: torch.Tensor, labels: torch.Tensor, alpha: float = 0.5, *,
               z: Optional[tuple] = None, con_logits: Optional[torch.Tensor] = None,
               bin_labels: Optional[torch.Tensor] = None, encodings: Optional[tuple] = None,
               tau: float = 0.4, literal_orthogonal: bool = False) -> LossComponents:
    """``L = L_reg + alpha * (L_dif + L_con + L_ort)``.

    ``z`` is ``(z_ori, z_pos, z_neg)`` and ``encodings`` the three head
    encodings.  Without auxiliary inputs (single-head models) ``L = L_reg``.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    labels = torch.as_tensor(labels, dtype=pred_total.dtype)
    reg = F.mse_loss(pred_total, labels)
    if z is None:
        return LossComponents(reg, reg)
    dif = diffusion_loss(*z, tau=tau)
    con = conformity_loss(con_logits, bin_labels)
    ort = orthogonal_loss(*encodings, literal=literal_orthogonal)
    return LossComponents(reg + alpha * (dif + con + ort), reg, dif, con, ort)


# ----------------------------------------------------------------- binning

@dataclass(frozen=True)
class BinEdges:
    """Upper (inclusive) edges of all but the last bin, fitted on training data."""

    edges: tuple[float, ...]
    n_bins: int

    @property
    def n_effective(self) -> int:
        return len(self.edges) + 1

    def assign(self, values) -> np.ndarray:
        """Bin indices; a value equal to an edge goes to the lower bin."""
        return np.searchsorted(np.asarray(self.edges, dtype=np.float64), np.asarray(values, dtype=np.float64),
                               side="left").astype(np.int64)


def bin_labels(train_values: Sequence[float], M: int = 5, ties: str = "rank") -> tuple[np.ndarray, BinEdges]:
    """Equal-frequency bins over training values.

    ``ties="rank"`` orders training samples by value with a stable sort (ties
    keep sample order), so bin sizes differ by at most one; ``ties="value"``
    gives equal values the same label.  Edges for held-out data are the
    largest training value of each bin, applied with :meth:`BinEdges.assign`.
    With fewer than ``M`` distinct values each distinct value gets its own bin
    and a warning is emitted.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    if ties not in ("rank", "value"):
        raise ValueError("ties must be 'rank' or 'value'")
    v = np.asarray(train_values, dtype=np.float64)
    n = len(v)
    if n == 0:
        raise ValueError("no training values to bin")
    distinct = np.unique(v)
    if len(distinct) < M:
        warnings.warn(f"only {len(distinct)} distinct values for {M} bins; merging degenerate bins", RuntimeWarning)
        edges = BinEdges(tuple(distinct[:-1].tolist()), M)
        return edges.assign(v), edges
    order = np.argsort(v, kind="stable")
    rank_bins = np.empty(n, dtype=np.int64)
    rank_bins[order] = (np.arange(n) * M) // n
    upper = np.array([v[order][rank_bins[order] == m].max() for m in range(M - 1)])
    edge_vals = np.unique(upper)
    if len(edge_vals) < M - 1:
        warnings.warn("tied values straddle bin boundaries; some held-out bins merge", RuntimeWarning)
    edges = BinEdges(tuple(edge_vals.tolist()), M)
    if ties == "rank":
        return rank_bins, edges
    return edges.assign(v), edges
