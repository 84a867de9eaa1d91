"""Initial node embeddings.

Paper vectors come from a pluggable text embedding provider applied to
``"title. abstract"``.  Author, venue and time vectors at step ``t`` are the
mean of their connected papers published by ``t`` (zero when there are none).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import scipy.sparse as sp
import torch

from .corpus import GlobalCitationNetwork, PaperRecord


class EmbeddingError(RuntimeError):
    pass


@runtime_checkable
class TextEmbeddingProvider(Protocol):
    dimension: int
    deterministic: bool

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingProvider:
    """Signed feature-hashing bag of words and bigrams, L2-normalized."""

    deterministic = True

    def __init__(self, dimension: int = 384):
        from sklearn.feature_extraction.text import HashingVectorizer

        self.dimension = dimension
        self._vec = HashingVectorizer(n_features=dimension, ngram_range=(1, 2), alternate_sign=True,
                                      norm="l2", lowercase=True)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return self._vec.transform(list(texts)).toarray().astype(np.float64)


class SentenceEncoderProvider:
    """Adapter for a pretrained sentence encoder (``sentence-transformers``).

    The model is loaded on first use; pass ``model`` to inject an object with
    an ``encode`` method instead.
    """

    deterministic = True

    def __init__(self, model_name: str = "sentence-transformers/all-MiniLM-L6-v2", dimension: int = 384,
                 model=None, batch_size: int = 64):
        self.model_name = model_name
        self.dimension = dimension
        self.batch_size = batch_size
        self._model = model

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
                self._model = SentenceTransformer(self.model_name)
            except Exception as exc:  # network or missing weights
                raise EmbeddingError(f"cannot load sentence encoder {self.model_name!r}: {exc}") from exc
        return self._model

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vecs = np.asarray(self._load().encode(list(texts), batch_size=self.batch_size), dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[1] != self.dimension:
            raise EmbeddingError(f"encoder returned shape {vecs.shape}, expected (*, {self.dimension})")
        return vecs


def make_provider(name: str, dim: int = 384) -> TextEmbeddingProvider:
    if name == "hashing":
        return HashingProvider(dim)
    if name == "external":
        return SentenceEncoderProvider(dimension=dim)
    raise ValueError(f"unknown provider {name!r}")


def paper_text(rec: PaperRecord) -> str:
    title = rec.title.strip()
    abstract = rec.abstract.strip()
    return f"{title}. {abstract}" if abstract else title


def embed_papers(provider: TextEmbeddingProvider, papers: Sequence[PaperRecord],
                 batch_size: int = 1024) -> np.ndarray:
    """One vector per paper, in input order."""
    out = np.zeros((len(papers), provider.dimension))
    for start in range(0, len(papers), batch_size):
        chunk = papers[start:start + batch_size]
        try:
            vecs = np.asarray(provider.embed([paper_text(r) for r in chunk]), dtype=np.float64)
        except EmbeddingError:
            raise
        except Exception as exc:
            raise EmbeddingError(f"provider failed on papers {chunk[0].paper_id}..{chunk[-1].paper_id}: {exc}") from exc
        if vecs.shape != (len(chunk), provider.dimension) or not np.isfinite(vecs).all():
            raise EmbeddingError(f"provider returned invalid vectors for batch starting {chunk[0].paper_id}")
        out[start:start + len(chunk)] = vecs
    return out


def _incidence(pairs: np.ndarray, n_rows: int, n_papers: int) -> sp.csr_matrix:
    data = np.ones(len(pairs))
    return sp.csr_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n_rows, n_papers))


class EmbeddingTable:
    """Paper vectors plus lazily computed, cached metadata vectors per time step."""

    def __init__(self, network: GlobalCitationNetwork, paper_vectors: np.ndarray):
        paper_vectors = np.asarray(paper_vectors, dtype=np.float64)
        if paper_vectors.shape[0] != len(network):
            raise ValueError("need one paper vector per network paper")
        if not np.isfinite(paper_vectors).all():
            raise ValueError("paper vectors must be finite")
        paper_vectors.flags.writeable = False
        self.network = network
        self.paper_vectors = paper_vectors
        self.dimension = paper_vectors.shape[1]
        n = len(network)
        self._incidence = {
            "author": _incidence(network.writes, len(network.author_ids), n),
            "venue": _incidence(network.publishes, len(network.venue_ids), n),
            "time": _incidence(network.have, len(network.time_steps), n),
        }
        self._ids = {"author": network.author_index, "venue": network.venue_index, "time": network.time_index}
        self._cache: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def build(cls, network: GlobalCitationNetwork, provider: TextEmbeddingProvider) -> "EmbeddingTable":
        return cls(network, embed_papers(provider, list(network.records())))

    def metadata_vectors(self, ntype: str, t: int) -> np.ndarray:
        """All ``ntype`` vectors at step ``t`` as an array aligned with the network's id order."""
        key = (ntype, int(t))
        with self._lock:
            if key not in self._cache:
                inc = self._incidence[ntype]
                visible = sp.diags((self.network.pub_time <= t).astype(np.float64))
                inc = inc @ visible
                deg = np.asarray(inc.sum(axis=1)).ravel()
                scale = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
                vecs = sp.diags(scale) @ inc @ self.paper_vectors
                vecs = np.asarray(vecs)
                vecs.flags.writeable = False
                self._cache[key] = vecs
            return self._cache[key]

    def indices(self, ntype: str, ids: Sequence) -> np.ndarray:
        """Row indices of ``ids`` in the ``ntype`` table; -1 marks unknown metadata ids."""
        if ntype == "paper":
            return np.fromiter((self.network.index[p] for p in ids), dtype=np.int64, count=len(ids))
        table = self._ids[ntype]
        return np.fromiter((table.get(x, -1) for x in ids), dtype=np.int64, count=len(ids))

    def gather(self, ntype: str, idx: np.ndarray, t: int) -> np.ndarray:
        """Vectors for precomputed row indices (unknown rows are zero)."""
        if ntype == "paper":
            return self.paper_vectors[idx]
        table = self.metadata_vectors(ntype, t)
        out = np.zeros((len(idx), self.dimension))
        known = idx >= 0
        out[known] = table[idx[known]]
        return out

    def lookup(self, ntype: str, ids: Sequence, t: int) -> np.ndarray:
        return self.gather(ntype, self.indices(ntype, ids), t)

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.save(out / "paper_vectors.npy", self.paper_vectors)
        (out / "paper_ids.json").write_text(json.dumps(list(self.network.paper_ids)))
        return out

    @classmethod
    def load(cls, network: GlobalCitationNetwork, in_dir: str | Path) -> "EmbeddingTable":
        d = Path(in_dir)
        ids = json.loads((d / "paper_ids.json").read_text())
        if tuple(ids) != network.paper_ids:
            raise ValueError("embedding table was built for a different network")
        return cls(network, np.load(d / "paper_vectors.npy"))


def embed_metadata(network: GlobalCitationNetwork, paper_vectors: np.ndarray, t: int) -> dict[str, np.ndarray]:
    table = paper_vectors if isinstance(paper_vectors, EmbeddingTable) else EmbeddingTable(network, paper_vectors)
    return {ntype: table.metadata_vectors(ntype, t) for ntype in ("author", "venue", "time")}


def init_snapshot_state(time_vec: torch.Tensor, target_vec: torch.Tensor, w_ipt: torch.Tensor,
                        w_tgt: torch.Tensor) -> torch.Tensor:
    """Gate the time embedding with the target paper: ``sigmoid(W_ipt h_time + W_tgt h_target) * h_time``.

    ``w_ipt``/``w_tgt`` are ``(out, dim)``; an ``out`` of 1 gives a scalar gate.
    """
    if time_vec.shape[-1] != w_ipt.shape[-1] or target_vec.shape[-1] != w_tgt.shape[-1]:
        raise ValueError("gate weight and input dimensions do not match")
    if w_ipt.shape[0] not in (1, time_vec.shape[-1]):
        raise ValueError("gate must be scalar or match the time vector dimension")
    gate = torch.sigmoid(time_vec @ w_ipt.T + target_vec @ w_tgt.T)
    return gate * time_vec


class SnapshotGate(torch.nn.Module):
    def __init__(self, dim: int, scalar: bool = False):
        super().__init__()
        out = 1 if scalar else dim
        self.w_ipt = torch.nn.Parameter(torch.empty(out, dim))
        self.w_tgt = torch.nn.Parameter(torch.empty(out, dim))
        torch.nn.init.xavier_uniform_(self.w_ipt)
        torch.nn.init.xavier_uniform_(self.w_tgt)

    def forward(self, time_vec: torch.Tensor, target_vec: torch.Tensor) -> torch.Tensor:
        return init_snapshot_state(time_vec, target_vec, self.w_ipt, self.w_tgt)
