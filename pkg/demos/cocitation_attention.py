"""Show how the co-citation weight moves attention away from plain GATv2.

For one snapshot, the attention of the target paper over its references is
printed for several values of the mixing weight.  At weight 0 the scores are
learned attention only; at weight 1 they equal the normalized co-citation
strengths.
"""

import numpy as np
import torch

from citeimpact import SamplingConfig, build_snapshot, ingest_corpus, synth_corpus
from citeimpact.encoder import CompGAT


def main() -> None:
    network = ingest_corpus(synth_corpus(300, seed=2))
    target = next(p for p in network.paper_ids
                  if network.pub_time[network.idx(p)] == 2010 and len(network.references_of(network.idx(p))) >= 4)
    snap = build_snapshot(network, target, 2015, SamplingConfig(2, (6, 2)))
    edges = torch.as_tensor(snap.edges["cited_by"])
    strengths = torch.as_tensor(snap.cocite_strengths["cited_by"])
    into_target = (edges[1] == 0).nonzero().ravel()
    sources = [snap.nodes["paper"][i] for i in edges[0, into_target].tolist()]
    print(f"target {target}: {len(sources)} incoming cited_by edges from {sources}")

    torch.manual_seed(0)
    gat = CompGAT(16, heads=2).double()
    h = torch.randn(len(snap.nodes["paper"]), 16, dtype=torch.float64)
    print("co-citation strengths:", np.round(strengths[into_target].numpy(), 3))
    for lam in (0.0, 0.5, 1.0):
        alpha, _, _ = gat.attention(h, edges, strengths, lam)
        print(f"weight {lam:.1f}, head 0 attention:", np.round(alpha[into_target, 0].detach().numpy(), 3))


if __name__ == "__main__":
    main()
