import numpy as np
import pytest

from difficalib.embedding_store import EmbeddingDataset


@pytest.fixture
def tiny_dataset():
    """3 samples, 2 dims, 2 classes."""
    return EmbeddingDataset(
        features=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=np.float32),
        labels=np.array([0, 1, 1], dtype=np.int64),
        ids=np.array([10, 20, 30], dtype=np.uint64),
        num_classes=2,
    )


def make_ds(features, labels, ids, k):
    return EmbeddingDataset(
        features=np.asarray(features, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        ids=np.asarray(ids, dtype=np.uint64),
        num_classes=k,
    )
