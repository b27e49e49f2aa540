import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from temprel import RelationSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_probs(rng, n_labels=3):
    """One random probability vector."""
    v = rng.dirichlet(np.ones(n_labels))
    return v


def random_consistent_relations(rng, max_nodes=12, doc_id="doc"):
    """A random closure-consistent relation set built from a latent order.

    Entities occupy moments; same moment -> Overlap, earlier -> Before.
    """
    n = int(rng.integers(3, max_nodes + 1))
    n_moments = int(rng.integers(2, n + 1))
    moment = rng.integers(0, n_moments, n)
    rs = RelationSet(doc_id=doc_id)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    keep = rng.random(len(pairs)) < 0.6
    for (i, j), k in zip(pairs, keep):
        if not k:
            continue
        if rng.random() < 0.5:
            i, j = j, i
        if moment[i] < moment[j]:
            label = "Before"
        elif moment[i] > moment[j]:
            label = "After"
        else:
            label = "Overlap"
        rs.add(f"n{i}", f"n{j}", label)
    return rs
