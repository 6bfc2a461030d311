"""
Tests for dataset loading, validation, graph persistence and Planetoid conversion.
"""

import pickle

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from pydantic import ValidationError

from src.models.graph import SparseGraph
from src.services import dataset_service
from src.utils.errors import DataValidationError, DatasetLoadError
from tests.conftest import weighted_graphs


def _write(directory, name, text):
    (directory / name).write_text(text, encoding="utf-8")


class TestLoadDataset:
    """Test cases for the five-file dataset layout."""

    def test_round_trip(self, toy_bundle, toy_dataset_dir):
        """Saved bundles load back with identical arrays."""
        loaded = dataset_service.load_dataset(toy_dataset_dir)

        np.testing.assert_array_equal(loaded.features, toy_bundle.features)
        np.testing.assert_array_equal(loaded.labels, toy_bundle.labels)
        np.testing.assert_array_equal(loaded.edge_list, toy_bundle.edge_list)
        for name in ("train", "val", "test"):
            np.testing.assert_array_equal(loaded.mask(name), toy_bundle.mask(name))
        assert loaded.num_classes == toy_bundle.num_classes

    def test_missing_file_is_named(self, toy_dataset_dir):
        (toy_dataset_dir / "masks.txt").unlink()

        with pytest.raises(DatasetLoadError, match="masks.txt"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_label_out_of_range(self, toy_dataset_dir, toy_bundle):
        labels = toy_bundle.labels.copy()
        labels[4] = 7
        _write(toy_dataset_dir, "labels.txt", "".join(f"{v}\n" for v in labels))

        with pytest.raises(DataValidationError, match=r"label 7 at node 4 outside \[0, 3\)"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_self_loop_in_edges(self, toy_dataset_dir):
        _write(toy_dataset_dir, "edges.txt", "0 1\n5 5\n")

        with pytest.raises(DataValidationError, match="self-loop at node 5"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_reversed_duplicate_edge(self, toy_dataset_dir):
        _write(toy_dataset_dir, "edges.txt", "1 2\n2 1\n")

        with pytest.raises(DataValidationError, match=r"duplicate edge \(1, 2\)"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_edges_accept_either_orientation(self, toy_dataset_dir):
        _write(toy_dataset_dir, "edges.txt", "3 1\n0 2\n")

        bundle = dataset_service.load_dataset(toy_dataset_dir)

        assert bundle.edge_list.tolist() == [[1, 3], [0, 2]]

    def test_unknown_mask_value(self, toy_dataset_dir, toy_bundle):
        lines = ["train"] * toy_bundle.num_nodes
        lines[3] = "holdout"
        _write(toy_dataset_dir, "masks.txt", "\n".join(lines) + "\n")

        with pytest.raises(DataValidationError, match="masks.txt line 4"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_feature_shape_mismatch(self, toy_dataset_dir):
        _write(toy_dataset_dir, "meta.txt", "nodes=40\nfeatures=9\nclasses=3\n")

        with pytest.raises(DataValidationError, match="features.csv has shape"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_class_without_training_node(self, toy_dataset_dir, toy_bundle):
        split = np.full(toy_bundle.num_nodes, "none", dtype=object)
        split[toy_bundle.train_mask & (toy_bundle.labels != 2)] = "train"
        split[toy_bundle.test_mask] = "test"
        _write(toy_dataset_dir, "masks.txt", "".join(f"{v}\n" for v in split))

        with pytest.raises(DataValidationError, match="class 2 has no training node"):
            dataset_service.load_dataset(toy_dataset_dir)

    def test_normalize_features(self, toy_dataset_dir):
        bundle = dataset_service.load_dataset(toy_dataset_dir, normalize_features=True)

        np.testing.assert_allclose(bundle.features.sum(axis=1), 1.0)


class TestDatasetBundle:
    """Test cases for bundle invariants checked by validate()."""

    def test_overlapping_masks(self, toy_bundle):
        test_mask = toy_bundle.test_mask.copy()
        test_mask[3] = True

        with pytest.raises(DataValidationError, match="node 3 is in both train and test masks"):
            toy_bundle.model_copy(update={"test_mask": test_mask}).validate()

    def test_non_boolean_mask(self, toy_bundle):
        with pytest.raises(DataValidationError, match="val_mask must be a boolean vector"):
            toy_bundle.model_copy(update={"val_mask": toy_bundle.val_mask.astype(int)}).validate()

    def test_non_finite_feature_row(self, toy_bundle):
        features = toy_bundle.features.copy()
        features[5, 2] = np.nan

        with pytest.raises(DataValidationError, match="row 5"):
            toy_bundle.model_copy(update={"features": features}).validate()

    def test_fields_are_frozen(self, toy_bundle):
        with pytest.raises(ValidationError):
            toy_bundle.num_classes = 4

    def test_unknown_mask_name(self, toy_bundle):
        with pytest.raises(DataValidationError, match="unknown mask"):
            toy_bundle.mask("holdout")


class TestNormalizeRows:
    def test_zero_rows_stay_zero(self):
        features = np.array([[1.0, 3.0], [0.0, 0.0]])

        np.testing.assert_array_equal(dataset_service.normalize_rows(features), [[0.25, 0.75], [0.0, 0.0]])


class TestGraphFiles:
    """Test cases for the graph save format."""

    def test_round_trip_is_bit_exact(self, tmp_path):
        """Arbitrary weights survive save/load exactly."""
        graph = SparseGraph.from_edges(5, [(0, 1), (1, 4), (2, 3)], weights=[0.1, 1.0 / 3.0, 2.5e-17])
        path = tmp_path / "g.graph"

        dataset_service.save_graph(graph, path)
        loaded = dataset_service.load_graph(path)

        assert loaded == graph
        assert path.read_text().splitlines()[0] == "nodes=5 edges=3"

    @settings(max_examples=50, deadline=None)
    @given(graph=weighted_graphs())
    def test_arbitrary_graph_round_trip(self, tmp_path_factory, graph):
        path = tmp_path_factory.mktemp("graphs") / "g.graph"

        dataset_service.save_graph(graph, path)

        assert dataset_service.load_graph(path) == graph

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.graph"
        path.write_text("nodes=3 edges=2\n0 1 1.0\n")

        with pytest.raises(DataValidationError, match="declares 2 edges"):
            dataset_service.load_graph(path)

    def test_graph_from_bundle(self, toy_bundle):
        graph = dataset_service.graph_from_bundle(toy_bundle)

        assert graph.num_nodes == toy_bundle.num_nodes
        assert graph.num_edges == toy_bundle.num_edges
        assert set(graph.weights.tolist()) <= {1.0}

    def test_edge_list_orientation(self, tmp_path):
        path = tmp_path / "edges.txt"

        dataset_service.save_edge_list(np.array([[3, 1], [0, 2]]), path, header="h", canonical=False)
        header, pairs = dataset_service.load_edge_list(path, skip_header=True)

        assert header == "h"
        assert pairs.tolist() == [[3, 1], [0, 2]]


class TestConvertPlanetoid:
    """Test cases for the Planetoid converter."""

    @pytest.fixture
    def raw_dir(self, tmp_path):
        """
        Minimal CiteSeer-shaped raw files.

        Six labelled nodes, test indices 8, 6, 9 (node 7 missing from the
        test set), a self-loop and a duplicate in the adjacency dict.
        """
        raw = tmp_path / "raw"
        raw.mkdir()
        allx = np.arange(12, dtype=float).reshape(6, 2)
        parts = {
            "x": sp.csr_matrix(allx[:2]),
            "allx": sp.csr_matrix(allx),
            "tx": sp.csr_matrix(np.array([[100.0, 0.0], [200.0, 0.0], [300.0, 0.0]])),
            "y": np.array([[1, 0], [0, 1]]),
            "ally": np.array([[1, 0], [0, 1], [1, 0], [0, 1], [1, 0], [0, 1]]),
            "ty": np.array([[1, 0], [0, 1], [0, 1]]),
            "graph": {0: [1, 2, 0], 1: [0], 2: [0, 3], 3: [2], 6: [7], 8: [9], 9: [8, 8]},
        }
        for part, obj in parts.items():
            with open(raw / f"ind.citeseer.{part}", "wb") as f:
                pickle.dump(obj, f)
        (raw / "ind.citeseer.test.index").write_text("8\n6\n9\n")
        return raw

    def test_convert(self, raw_dir, tmp_path):
        out = tmp_path / "citeseer"
        bundle = dataset_service.convert_planetoid(raw_dir, "citeseer", out)

        assert bundle.num_nodes == 10
        assert bundle.edge_list.tolist() == [[0, 1], [0, 2], [2, 3], [6, 7], [8, 9]]
        # the missing test index becomes a zero row
        np.testing.assert_array_equal(bundle.features[7], [0.0, 0.0])
        assert np.flatnonzero(bundle.train_mask).tolist() == [0, 1]
        assert np.flatnonzero(bundle.val_mask).tolist() == [2, 3, 4, 5]
        assert np.flatnonzero(bundle.test_mask).tolist() == [6, 8, 9]

        reloaded = dataset_service.load_dataset(out)
        np.testing.assert_array_equal(reloaded.features, bundle.features)

    def test_test_rows_follow_index_order(self, raw_dir, tmp_path):
        """Rows are placed by sorted index, then permuted to the listed order."""
        bundle = dataset_service.convert_planetoid(raw_dir, "citeseer", tmp_path / "c")

        np.testing.assert_array_equal(bundle.features[[6, 8, 9], 0], [200.0, 100.0, 300.0])
        np.testing.assert_array_equal(bundle.labels[[6, 8, 9]], [1, 0, 1])

    def test_missing_raw_file(self, raw_dir, tmp_path):
        (raw_dir / "ind.citeseer.ty").unlink()

        with pytest.raises(DatasetLoadError, match="ind.citeseer.ty"):
            dataset_service.convert_planetoid(raw_dir, "citeseer", tmp_path / "c")
