"""Model assembly, data preparation, the training loop and checkpoint I/O."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .config import RunConfig
from .corpus import GlobalCitationNetwork, load_network
from .disentangle import (AugmentationSpec, BinEdges, HeadOutput, LossComponents, PerspectiveHeads, augment_views,
                          bin_labels, total_loss)
from .encoder import (CitationGNNEncoder, EncoderConfig, GraphBatch, GraphFeatures, collate, collate_features,
                      graph_features)
from .evaluation import EvalReport, male, metric_rows, predictions_frame, report_composition
from .features import EmbeddingTable, make_provider
from .graphbuild import DynamicHeteroGraph, build_dynamic_graph
from .splits import SampleSpec, Splits, load_splits, make_splits

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "citeimpact-checkpoint"
CHECKPOINT_VERSION = 1

EVAL_BATCH = 64

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class NonFiniteLossError(RuntimeError):
    pass


class ImpactModel(nn.Module):
    """Graph encoder followed by the perspective heads."""

    def __init__(self, enc_cfg: EncoderConfig, n_bins: int = 5, disentangle: bool = True,
                 proj_dim: Optional[int] = None):
        super().__init__()
        self.encoder = CitationGNNEncoder(enc_cfg)
        self.heads = PerspectiveHeads(enc_cfg.hidden_dim, n_bins, proj_dim, single=not disentangle,
                                      negative_slope=enc_cfg.negative_slope)

    @property
    def disentangle(self) -> bool:
        return not self.heads.single

    def forward(self, batch: GraphBatch) -> tuple[torch.Tensor, HeadOutput]:
        o = self.encoder(batch)
        return o, self.heads(o)


def build_model(cfg: RunConfig, input_dim: int) -> ImpactModel:
    torch.manual_seed(cfg.train.seed)
    model = ImpactModel(cfg.encoder_config(input_dim), cfg.model.n_bins, cfg.model.disentangle, cfg.model.proj_dim)
    return model.to(DTYPES[cfg.train.dtype])


# ---------------------------------------------------------------------- data

@dataclass
class Dataset:
    samples: tuple
    graphs: list
    bins: Optional[np.ndarray] = None
    _features: Optional[list] = field(default=None, repr=False, compare=False)

    def features(self, table: EmbeddingTable, snapshot_bins: Sequence[int]) -> list[GraphFeatures]:
        """Batching inputs of every graph, computed once and reused."""
        if self._features is None:
            self._features = [graph_features(g, table, snapshot_bins) for g in self.graphs]
        return self._features

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.float64)


@dataclass
class PreparedData:
    network: GlobalCitationNetwork
    table: EmbeddingTable
    train: Dataset
    val: Dataset
    test: Dataset
    bin_edges: BinEdges


class GraphCache:
    """Builds each (target, observation point) graph once."""

    def __init__(self, network: GlobalCitationNetwork, cfg: RunConfig):
        self.network = network
        self.T = cfg.graph.T
        self.sampling = cfg.graph.sampling()
        self._graphs: dict = {}

    def get(self, s: SampleSpec) -> DynamicHeteroGraph:
        key = (s.target, s.observation_point)
        if key not in self._graphs:
            self._graphs[key] = build_dynamic_graph(self.network, s.target, s.observation_point, self.T,
                                                    self.sampling)
        return self._graphs[key]


def prepare_data(network: GlobalCitationNetwork, splits: Splits, table: EmbeddingTable,
                 cfg: RunConfig) -> PreparedData:
    """Build graphs for every sample and conformity bins from the training horizon citations."""
    cache = GraphCache(network, cfg)
    train_bins, edges = bin_labels([s.horizon_citations for s in splits.train], cfg.model.n_bins,
                                   cfg.train.bin_ties)

    def ds(samples, bins=None):
        if bins is None:
            bins = edges.assign([s.horizon_citations for s in samples])
        return Dataset(tuple(samples), [cache.get(s) for s in samples], np.asarray(bins))

    return PreparedData(network, table, ds(splits.train, train_bins), ds(splits.val), ds(splits.test), edges)


def load_inputs(cfg: RunConfig) -> tuple[GlobalCitationNetwork, Splits, EmbeddingTable]:
    """Load or build network, splits and embeddings from the paths in ``cfg.data``."""
    d = cfg.data
    if d.network is None:
        raise ValueError("data.network must point to a network store")
    network = load_network(d.network)
    if d.splits and Path(d.splits, "train.jsonl").exists():
        splits = load_splits(d.splits)
    else:
        if d.test_point is None:
            raise ValueError("data.test_point is required to build splits")
        splits = make_splits(network, d.test_point, d.delta, d.n_test, d.split_seed, d.train_point, d.val_point,
                             d.n_train, d.n_val)
    if d.embeddings and Path(d.embeddings, "paper_vectors.npy").exists():
        table = EmbeddingTable.load(network, d.embeddings)
    else:
        table = EmbeddingTable.build(network, make_provider(d.provider, d.embedding_dim))
    return network, splits, table


def load_data(cfg: RunConfig) -> PreparedData:
    return prepare_data(*load_inputs(cfg), cfg)


def split_dataset(network: GlobalCitationNetwork, samples: Sequence[SampleSpec], cfg: RunConfig,
                  bin_edges: BinEdges) -> Dataset:
    """Graphs and conformity bins for one split, binned with fixed (training) edges."""
    cache = GraphCache(network, cfg)
    return Dataset(tuple(samples), [cache.get(s) for s in samples],
                   np.asarray(bin_edges.assign([s.horizon_citations for s in samples])))


# ------------------------------------------------------------------ training

def _view_seed(seed: int, epoch: int, index: int, view: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, index, view]).generate_state(1)[0])


def compute_loss(model: ImpactModel, batch: GraphBatch, labels, bins=None, alpha: float = 0.5, tau: float = 0.4,
                 views: Optional[tuple[GraphBatch, GraphBatch]] = None,
                 literal_orthogonal: bool = False) -> tuple[LossComponents, HeadOutput]:
    """Forward the original batch (and augmented views when disentangling) and combine the losses."""
    dtype = batch.target_x.dtype
    labels = torch.as_tensor(np.asarray(labels), dtype=dtype)
    o, out = model(batch)
    if not model.disentangle or views is None:
        return total_loss(out.total, labels, alpha), out
    heads = model.heads
    enc = out.encodings
    z_ori = heads.project(enc["diffusion"])
    z_views = []
    for view in views:
        o_v = model.encoder(view)
        z_views.append(heads.project(heads.enc["diffusion"](o_v)))
    comps = total_loss(out.total, labels, alpha, z=(z_ori, *z_views), con_logits=heads.classify(enc["conformity"]),
                       bin_labels=torch.as_tensor(np.asarray(bins), dtype=torch.long),
                       encodings=(enc["diffusion"], enc["conformity"], enc["contribution"]), tau=tau,
                       literal_orthogonal=literal_orthogonal)
    return comps, out


@dataclass
class Predictions:
    parts: np.ndarray
    total: np.ndarray


def predict(model: ImpactModel, graphs: Sequence[DynamicHeteroGraph], table: EmbeddingTable,
            batch_size: int = 64, features: Optional[Sequence[GraphFeatures]] = None) -> Predictions:
    dtype = next(model.parameters()).dtype
    bins = model.encoder.cfg.snapshot_bins
    if features is None:
        features = [graph_features(g, table, bins) for g in graphs]
    batches = [collate_features(features[start:start + batch_size], table, dtype)
               for start in range(0, len(features), batch_size)]
    return predict_batches(model, batches)


def predict_batches(model: ImpactModel, batches: Sequence[GraphBatch]) -> Predictions:
    was_training = model.training
    model.eval()
    parts, totals = [], []
    with torch.no_grad():
        for batch in batches:
            _, out = model(batch)
            parts.append(out.parts.cpu().numpy())
            totals.append(out.total.cpu().numpy())
    model.train(was_training)
    if not parts:
        return Predictions(np.zeros((0, 3)), np.zeros(0))
    return Predictions(np.concatenate(parts), np.concatenate(totals))


@dataclass
class TrainResult:
    model: ImpactModel
    checkpoint: dict
    history: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        return self.checkpoint["best_epoch"]


def _dump_batch(out_dir: Optional[str], epoch: int, step: int, targets, comps: LossComponents) -> Optional[Path]:
    if not out_dir:
        return None
    path = Path(out_dir) / f"nonfinite_epoch{epoch}_step{step}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"epoch": epoch, "step": step, "targets": list(targets),
                                "losses": comps.as_record()}, indent=2))
    return path


def train(cfg: RunConfig, data: Optional[PreparedData] = None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Adam training with per-epoch validation MALE, best-checkpoint retention and patience."""
    cfg.validate()
    if data is None:
        data = load_data(cfg)
    tc = cfg.train
    dtype = DTYPES[tc.dtype]
    model = build_model(cfg, data.table.dimension)
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    rng = np.random.default_rng(tc.seed)
    bins_cfg = model.encoder.cfg.snapshot_bins
    use_views = model.disentangle and tc.alpha > 0
    train_set, val_set = data.train, data.val
    if len(train_set) == 0:
        raise ValueError("empty training set")

    train_feats = train_set.features(data.table, bins_cfg)

    def eval_batches(ds: Dataset) -> list[GraphBatch]:
        feats = ds.features(data.table, bins_cfg)
        return [collate_features(feats[s:s + EVAL_BATCH], data.table, dtype) for s in range(0, len(ds), EVAL_BATCH)]

    val_batches = eval_batches(val_set) if len(val_set) else []
    train_batches = eval_batches(train_set) if tc.track_train_metrics or tc.stop_train_male is not None else []

    best_val, best_state, best_epoch, stale = math.inf, None, 0, 0
    history, steps = [], []
    out_dir = Path(tc.out_dir) if tc.out_dir else None
    step_log = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        step_log = open(out_dir / "loss_log.jsonl", "w")
    try:
        for epoch in range(1, tc.max_epochs + 1):
            t0 = time.perf_counter()
            model.train()
            order = rng.permutation(len(train_set))
            epoch_losses = []
            for step, start in enumerate(range(0, len(order), tc.batch_size)):
                idx = order[start:start + tc.batch_size]
                graphs = [train_set.graphs[i] for i in idx]
                batch = collate_features([train_feats[i] for i in idx], data.table, dtype)
                views = None
                if use_views:
                    views = tuple(
                        collate([augment_views(g, data.network, AugmentationSpec(mode, tc.drop_fraction,
                                                                                 _view_seed(tc.seed, epoch, int(i), v)))
                                 for g, i in zip(graphs, idx)], data.table, bins_cfg, dtype)
                        for v, mode in enumerate(("positive", "negative")))
                comps, _ = compute_loss(model, batch, train_set.labels[idx], train_set.bins[idx], tc.alpha, tc.tau,
                                        views, cfg.model.literal_orthogonal)
                if not torch.isfinite(comps.total):
                    dump = _dump_batch(tc.out_dir, epoch, step, batch.targets, comps)
                    raise NonFiniteLossError(f"non-finite loss at epoch {epoch} step {step}: {comps.as_record()}"
                                             + (f" (batch dumped to {dump})" if dump else ""))
                opt.zero_grad()
                comps.total.backward()
                opt.step()
                rec = {"epoch": epoch, "step": step, **comps.as_record()}
                steps.append(rec)
                epoch_losses.append(rec["L"])
                if step_log:
                    step_log.write(json.dumps(rec) + "\n")

            entry = {"epoch": epoch, "loss": float(np.mean(epoch_losses)), "seconds": 0.0}
            if val_batches:
                entry["val_male"] = male(val_set.labels, predict_batches(model, val_batches).total)
            if train_batches:
                entry["train_male"] = male(train_set.labels, predict_batches(model, train_batches).total)
            score = entry.get("val_male", entry["loss"])
            if score < best_val:
                best_val, best_epoch, stale = score, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                stale += 1
            entry["seconds"] = time.perf_counter() - t0
            history.append(entry)
            logger.info("epoch %d: %s", epoch, entry)
            if on_epoch:
                on_epoch(entry)
            if stale >= tc.patience:
                break
            if tc.stop_train_male is not None and entry["train_male"] < tc.stop_train_male:
                break
    finally:
        if step_log:
            step_log.close()

    model.load_state_dict(best_state)
    ckpt = make_checkpoint(model, cfg, data.bin_edges, history, best_epoch)
    if out_dir:
        save_checkpoint(ckpt, out_dir / "checkpoint.pt")
    return TrainResult(model, ckpt, history, steps)


# -------------------------------------------------------------- checkpoints

def make_checkpoint(model: ImpactModel, cfg: RunConfig, bin_edges: BinEdges, history=(), best_epoch: int = 0) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "input_dim": model.encoder.cfg.input_dim,
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "bin_edges": {"edges": list(bin_edges.edges), "n_bins": bin_edges.n_bins},
        "history": list(history),
        "best_epoch": best_epoch,
    }


def save_checkpoint(ckpt: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(ckpt, path)
    return path


def load_checkpoint(path_or_ckpt) -> tuple[ImpactModel, RunConfig, dict]:
    ckpt = path_or_ckpt if isinstance(path_or_ckpt, dict) else torch.load(path_or_ckpt, weights_only=False)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a citeimpact checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
    cfg = RunConfig.from_dict(ckpt["config"])
    model = build_model(cfg, ckpt["input_dim"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, cfg, ckpt


# --------------------------------------------------------------- evaluation

def evaluate(model: ImpactModel, dataset: Dataset, table: EmbeddingTable, with_composition: bool = True,
             batch_size: int = 64) -> EvalReport:
    """Batch inference with metrics overall and per category."""
    pred = predict(model, dataset.graphs, table, batch_size)
    frame = predictions_frame(dataset.samples, pred.parts, pred.total)
    rows = metric_rows(frame)
    comp = report_composition(frame) if with_composition and model.disentangle else None
    return EvalReport(rows, frame, comp)
