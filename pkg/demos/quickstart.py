"""Train a small model on a synthetic corpus and print the value breakdowns.

Run with ``python3 demos/quickstart.py``.  It takes about a minute on one CPU.
"""

import numpy as np

from citeimpact import (EmbeddingTable, HashingProvider, evaluate, ingest_corpus, load_config, make_splits,
                        prepare_data, synth_corpus, train)


def main() -> None:
    network = ingest_corpus(synth_corpus(400, seed=1))
    splits = make_splits(network, 2014, delta=5, n_test=60, seed=0, n_train=60, n_val=30)
    print("test categories:", splits.category_counts())

    table = EmbeddingTable.build(network, HashingProvider(64))
    cfg = load_config(None, ["graph.T=3", "graph.K=[8,2]", "model.hidden_dim=16", "model.layers=1",
                             "model.temporal_depth=1", "train.lr=3e-3", "train.max_epochs=15", "train.patience=5"])
    data = prepare_data(network, splits, table, cfg)
    result = train(cfg, data, on_epoch=lambda e: print(f"epoch {e['epoch']:>2}  loss {e['loss']:.3f}  "
                                                     f"val MALE {e['val_male']:.3f}"))

    report = evaluate(result.model, data.test, table)
    print(report.table().round(3))

    frame = report.predictions
    print("\nfirst five test papers (diffusion + conformity + contribution = total):")
    for row in frame.head().itertuples():
        print(f"  {row.paper_id:>8}  {row.dif:+.3f} {row.con:+.3f} {row.contribution:+.3f} = {row.total:+.3f}"
              f"   label {row.label:.3f} ({row.category})")
    shares = report.composition["by_category"]
    if shares is not None and len(shares):
        print("\nmean percentage shares by category (all-positive samples only):")
        print(shares[["category", "n", "dif_pct_mean", "con_pct_mean", "contribution_pct_mean"]].round(1))
    print("\nbaseline MALE (training mean):",
          round(float(np.abs(frame["label"] - data.train.labels.mean()).mean()), 3))


if __name__ == "__main__":
    main()
