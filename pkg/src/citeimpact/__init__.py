"""Citation-impact prediction on dynamic heterogeneous citation graphs.

The predicted log citation increment of a paper is split into diffusion,
conformity and contribution values.  Typical use::

    from citeimpact import synth_corpus, ingest_corpus, make_splits, load_config, train
"""

from .config import RunConfig, load_config
from .corpus import GlobalCitationNetwork, PaperRecord, ingest_corpus, ingest_file, load_network, save_network, synth_corpus
from .disentangle import PredictionBreakdown, bin_labels, diffusion_loss, conformity_loss, orthogonal_loss, total_loss
from .encoder import CitationGNNEncoder, EncoderConfig, collate, encode
from .evaluation import EvalReport, log_r2, male, report_composition
from .features import EmbeddingTable, HashingProvider, SentenceEncoderProvider
from .graphbuild import DynamicHeteroGraph, HeteroSnapshot, SamplingConfig, build_dynamic_graph, build_snapshot
from .splits import SampleSpec, Splits, make_splits
from .training import ImpactModel, evaluate, load_checkpoint, predict, prepare_data, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "GlobalCitationNetwork", "PaperRecord", "ingest_corpus", "ingest_file",
    "load_network", "save_network", "synth_corpus", "PredictionBreakdown", "bin_labels", "diffusion_loss",
    "conformity_loss", "orthogonal_loss", "total_loss", "CitationGNNEncoder", "EncoderConfig", "collate", "encode",
    "EvalReport", "log_r2", "male", "report_composition", "EmbeddingTable", "HashingProvider",
    "SentenceEncoderProvider", "DynamicHeteroGraph", "HeteroSnapshot", "SamplingConfig", "build_dynamic_graph",
    "build_snapshot", "SampleSpec", "Splits", "make_splits", "ImpactModel", "evaluate", "load_checkpoint", "predict",
    "prepare_data", "save_checkpoint", "train", "__version__",
]
