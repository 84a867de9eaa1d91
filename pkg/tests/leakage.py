"""Leakage auditor: perturb events after a horizon and check that outputs stay fixed."""

import numpy as np

from citeimpact.corpus import PaperRecord, ingest_corpus


def perturb_future(records, horizon: int, seed: int = 0, n_new: int = 40):
    """Rewrite every event after ``horizon`` and add new future papers.

    Papers published after ``horizon`` get fresh random reference lists; new
    papers (reusing existing authors and venues) are appended at later steps.
    Everything at or before ``horizon`` is left untouched.
    """
    rng = np.random.default_rng(seed)
    records = list(records)
    by_time = sorted(records, key=lambda r: r.pub_time)
    out = []
    for r in records:
        if r.pub_time <= horizon:
            out.append(r)
            continue
        earlier = [x.paper_id for x in by_time if x.pub_time < r.pub_time]
        k = min(len(earlier), int(rng.integers(0, 12)))
        refs = tuple(rng.choice(earlier, size=k, replace=False).tolist()) if k else ()
        out.append(PaperRecord(r.paper_id, r.title, r.abstract, r.author_ids, r.venue_id, r.pub_time, refs,
                               r.high_impact))
    authors = sorted({a for r in records for a in r.author_ids})
    venues = sorted({r.venue_id for r in records if r.venue_id})
    last = max(r.pub_time for r in records)
    pool = [r.paper_id for r in records]
    for j in range(n_new):
        t = int(rng.integers(horizon + 1, max(horizon + 2, last + 1)))
        refs = tuple(rng.choice(pool, size=min(len(pool), 15), replace=False).tolist())
        out.append(PaperRecord(f"ZZ{j:04d}", "future work", "future abstract",
                               tuple(rng.choice(authors, size=2, replace=False).tolist()),
                               str(rng.choice(venues)), t, refs))
    return ingest_corpus(out)
