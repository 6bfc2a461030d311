"""
Pytest configuration and shared fixtures for testing.
Provides small graphs, a random graph factory, a toy dataset and trained models.
"""

from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from hypothesis import strategies as st

from config.settings import ExperimentConfig
from src.models.dataset import DatasetBundle
from src.models.gcn import GcnHyper, TrainReport
from src.models.graph import SparseGraph
from src.services import dataset_service, gcn_service

TOY_NODES = 40
TOY_FEATURES = 8
TOY_CLASSES = 3


def make_random_graph(num_nodes: int, density: float, seed: int, connected: bool = True) -> SparseGraph:
    """Random unit-weight graph; a Hamiltonian path is added when ``connected``."""
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(num_nodes, k=1)
    keep = rng.random(len(rows)) < density
    pairs = np.stack([rows[keep], cols[keep]], axis=1)
    if connected:
        path = np.stack([np.arange(num_nodes - 1), np.arange(1, num_nodes)], axis=1)
        pairs = np.unique(np.concatenate([pairs, path]), axis=0)
    return SparseGraph.from_edges(num_nodes, pairs)


def make_two_block_graph(sizes, density: float, seed: int) -> SparseGraph:
    """Disjoint union of connected random graphs."""
    blocks, offset = [], 0
    for i, size in enumerate(sizes):
        pairs, _ = make_random_graph(size, density, seed + i).edge_array()
        blocks.append(pairs + offset)
        offset += size
    return SparseGraph.from_edges(offset, np.concatenate(blocks))


@st.composite
def weighted_graphs(draw, max_nodes: int = 25):
    """Arbitrary graphs with positive finite weights, pairs drawn in either orientation."""
    num_nodes = draw(st.integers(min_value=1, max_value=max_nodes))
    candidates = [(p, q) for p in range(num_nodes) for q in range(p + 1, num_nodes)]
    pairs = draw(st.lists(st.sampled_from(candidates), unique=True, max_size=60)) if candidates else []
    flips = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    weights = draw(st.lists(
        st.floats(min_value=0.0, max_value=1e300, exclude_min=True, allow_nan=False, allow_infinity=False),
        min_size=len(pairs),
        max_size=len(pairs),
    ))
    oriented = [(q, p) if flip else (p, q) for (p, q), flip in zip(pairs, flips)]
    return SparseGraph.from_edges(num_nodes, np.array(oriented, dtype=np.int64).reshape(-1, 2), weights=weights)


@pytest.fixture
def random_graph_factory() -> Callable[..., SparseGraph]:
    """
    Provide the random graph builder.

    Returns:
        Callable (num_nodes, density, seed, connected=True) -> SparseGraph
    """
    return make_random_graph


@pytest.fixture
def path_graph() -> SparseGraph:
    """Path 0-1-2-3."""
    return SparseGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def cycle_graph() -> SparseGraph:
    """Cycle 0-1-2-3-0."""
    return SparseGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])


@pytest.fixture
def toy_bundle() -> DatasetBundle:
    """
    Provide a small separable dataset.

    Returns:
        DatasetBundle with 40 nodes, 8 features, 3 classes and a
        mostly-homophilous random graph
    """
    rng = np.random.default_rng(7)
    labels = np.arange(TOY_NODES) % TOY_CLASSES
    centers = rng.normal(size=(TOY_CLASSES, TOY_FEATURES)) * 2.0
    features = np.abs(centers[labels] + rng.normal(scale=0.7, size=(TOY_NODES, TOY_FEATURES)))

    pairs = []
    for p in range(TOY_NODES):
        for q in range(p + 1, TOY_NODES):
            same = labels[p] == labels[q]
            if rng.random() < (0.25 if same else 0.03):
                pairs.append((p, q))
    edge_list = np.array(pairs, dtype=np.int64)

    train_mask = np.zeros(TOY_NODES, dtype=bool)
    train_mask[:6] = True
    val_mask = np.zeros(TOY_NODES, dtype=bool)
    val_mask[6:12] = True
    test_mask = np.zeros(TOY_NODES, dtype=bool)
    test_mask[12:] = True

    return DatasetBundle(
        features=features,
        labels=labels.astype(np.int64),
        edge_list=edge_list,
        train_mask=train_mask,
        val_mask=val_mask,
        test_mask=test_mask,
        num_classes=TOY_CLASSES,
    ).validate()


@pytest.fixture
def toy_graph(toy_bundle) -> SparseGraph:
    return dataset_service.graph_from_bundle(toy_bundle)


@pytest.fixture
def toy_dataset_dir(tmp_path, toy_bundle) -> Path:
    """Toy dataset written in the five-file layout."""
    directory = tmp_path / "toy"
    dataset_service.save_dataset(toy_bundle, directory)
    return directory


@pytest.fixture
def small_hyper() -> GcnHyper:
    return GcnHyper(hidden_dim=8, max_epochs=30, seed=0)


@pytest.fixture
def trained_report(toy_bundle, toy_graph, small_hyper) -> TrainReport:
    """GCN trained on the toy dataset."""
    return gcn_service.train(toy_bundle, toy_graph, small_hyper)


@pytest.fixture
def experiment_config(toy_dataset_dir, tmp_path) -> ExperimentConfig:
    """
    Provide a fast end-to-end configuration over the toy dataset.

    Returns:
        ExperimentConfig writing under tmp_path/out
    """
    return ExperimentConfig(
        dataset=str(toy_dataset_dir),
        output=str(tmp_path / "out"),
        hidden_dim=8,
        max_epochs=20,
        knn_k=3,
        num_eigenpairs=4,
        eig_tol=1e-8,
        prune_fraction=0.2,
        attack_rhos=[0.0, 0.05, 0.5],
    )
