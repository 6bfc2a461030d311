"""
Data model for transductive node-classification datasets.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from src.utils.errors import DataValidationError

MASK_NAMES = ("train", "val", "test")


class DatasetBundle(BaseModel):
    """
    Features, labels, undirected edges and split masks of one dataset.

    Attributes:
        features: Real matrix N x d
        labels: Integer vector of length N with values in [0, C)
        edge_list: Integer array (M, 2), canonical p < q, one row per undirected edge
        train_mask, val_mask, test_mask: Boolean vectors of length N
        num_classes: C
    """

    features: np.ndarray
    labels: np.ndarray
    edge_list: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("features", "labels", "edge_list", "train_mask", "val_mask", "test_mask", mode="before")
    @classmethod
    def as_array(cls, v):
        return np.asarray(v)

    @field_validator("num_classes", mode="before")
    @classmethod
    def as_int(cls, v):
        return int(v)

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        return int(len(self.edge_list))

    def mask(self, name: str) -> np.ndarray:
        """Look up a split mask by name."""
        if name not in MASK_NAMES:
            raise DataValidationError(f"unknown mask '{name}', expected one of {MASK_NAMES}")
        return getattr(self, f"{name}_mask")

    def validate(self) -> "DatasetBundle":
        """
        Check every bundle invariant, reporting the first offending record.

        Returns:
            The bundle itself, for chaining

        Raises:
            DataValidationError: On the first violated invariant
        """
        n = self.num_nodes
        if self.features.ndim != 2:
            raise DataValidationError(f"features must be 2-D, got shape {self.features.shape}")
        if not np.isfinite(self.features).all():
            row = int(np.flatnonzero(~np.isfinite(self.features).all(axis=1))[0])
            raise DataValidationError(f"non-finite feature value in row {row}")
        if self.labels.shape != (n,):
            raise DataValidationError(f"expected {n} labels, got {self.labels.shape[0]}")

        bad_labels = np.flatnonzero((self.labels < 0) | (self.labels >= self.num_classes))
        if len(bad_labels):
            node = int(bad_labels[0])
            raise DataValidationError(
                f"label {self.labels[node]} at node {node} outside [0, {self.num_classes})"
            )

        for name in MASK_NAMES:
            mask = self.mask(name)
            if mask.shape != (n,) or mask.dtype != np.bool_:
                raise DataValidationError(f"{name}_mask must be a boolean vector of length {n}")
        for i, first in enumerate(MASK_NAMES):
            for second in MASK_NAMES[i + 1:]:
                overlap = np.flatnonzero(self.mask(first) & self.mask(second))
                if len(overlap):
                    raise DataValidationError(
                        f"node {overlap[0]} is in both {first} and {second} masks"
                    )

        train_classes = np.unique(self.labels[self.train_mask])
        missing = np.setdiff1d(np.arange(self.num_classes), train_classes)
        if len(missing):
            raise DataValidationError(f"class {missing[0]} has no training node")

        edges = self.edge_list
        if edges.ndim != 2 or (len(edges) and edges.shape[1] != 2):
            raise DataValidationError(f"edge_list must have shape (M, 2), got {edges.shape}")
        if len(edges):
            out_of_range = np.flatnonzero((edges < 0).any(axis=1) | (edges >= n).any(axis=1))
            if len(out_of_range):
                p, q = edges[out_of_range[0]]
                raise DataValidationError(f"edge ({p}, {q}) references a node outside [0, {n})")
            loops = np.flatnonzero(edges[:, 0] == edges[:, 1])
            if len(loops):
                raise DataValidationError(f"self-loop at node {edges[loops[0], 0]}")
            lo = edges.min(axis=1)
            hi = edges.max(axis=1)
            keys = lo * n + hi
            _, first, counts = np.unique(keys, return_index=True, return_counts=True)
            if (counts > 1).any():
                dup = int(np.sort(first[counts > 1])[0])
                raise DataValidationError(f"duplicate edge ({lo[dup]}, {hi[dup]})")
        return self
