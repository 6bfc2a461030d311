"""
Dataset Service for loading, validating and persisting citation-network datasets.
Handles the portable five-file directory layout, the graph save format and the
one-time conversion from the public Planetoid distribution.
"""

import pickle
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from src.models.dataset import MASK_NAMES, DatasetBundle
from src.models.graph import SparseGraph
from src.utils.errors import DataValidationError, DatasetLoadError
from src.utils.logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

DATASET_FILES = ("meta.txt", "features.csv", "labels.txt", "edges.txt", "masks.txt")
MASK_VALUES = ("train", "val", "test", "none")
PLANETOID_PARTS = ("x", "tx", "allx", "y", "ty", "ally", "graph")
PLANETOID_VAL_SIZE = 500


def _read_lines(path: Path) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except OSError as e:
        raise DatasetLoadError(f"cannot read {path.name}: {e}", str(path)) from e


def _parse_meta(path: Path) -> Dict[str, int]:
    meta: Dict[str, int] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataValidationError(f"{path.name} line {lineno}: expected key=value, got '{line}'")
        try:
            meta[key.strip()] = int(value.strip())
        except ValueError as e:
            raise DataValidationError(f"{path.name} line {lineno}: '{value}' is not an integer") from e
    for key in ("nodes", "features", "classes"):
        if key not in meta:
            raise DataValidationError(f"{path.name} is missing '{key}='")
    return meta


def _parse_pairs(lines: List[str], name: str, first_line: int = 1) -> np.ndarray:
    pairs = []
    for lineno, line in enumerate(lines, start=first_line):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 2:
            raise DataValidationError(f"{name} line {lineno}: expected 'p q', got '{line}'")
        try:
            pairs.append((int(fields[0]), int(fields[1])))
        except ValueError as e:
            raise DataValidationError(f"{name} line {lineno}: non-integer node index in '{line}'") from e
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def normalize_rows(features: np.ndarray) -> np.ndarray:
    """Scale every row to unit sum; all-zero rows stay zero."""
    sums = features.sum(axis=1, keepdims=True)
    out = np.zeros_like(features, dtype=np.float64)
    np.divide(features, sums, out=out, where=sums != 0)
    return out


def load_dataset(directory: PathLike, normalize_features: bool = False) -> DatasetBundle:
    """
    Load and validate a dataset directory.

    Args:
        directory: Directory holding meta.txt, features.csv, labels.txt,
            edges.txt and masks.txt
        normalize_features: Row-normalize features after loading

    Returns:
        Validated DatasetBundle

    Raises:
        DatasetLoadError: If a file is missing or unreadable
        DataValidationError: On the first record violating an invariant
    """
    root = Path(directory)
    for name in DATASET_FILES:
        if not (root / name).is_file():
            raise DatasetLoadError(f"missing dataset file: {name}", str(root / name))

    meta = _parse_meta(root / "meta.txt")
    num_nodes, num_features, num_classes = meta["nodes"], meta["features"], meta["classes"]

    try:
        features = np.loadtxt(root / "features.csv", delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataValidationError(f"features.csv: {e}") from e
    if num_nodes == 0:
        features = features.reshape(0, num_features)
    if features.shape != (num_nodes, num_features):
        raise DataValidationError(
            f"features.csv has shape {features.shape}, meta.txt declares ({num_nodes}, {num_features})"
        )

    label_lines = [line for line in _read_lines(root / "labels.txt") if line.strip()]
    if len(label_lines) != num_nodes:
        raise DataValidationError(f"labels.txt has {len(label_lines)} lines, expected {num_nodes}")
    try:
        labels = np.array([int(line) for line in label_lines], dtype=np.int64)
    except ValueError as e:
        raise DataValidationError(f"labels.txt: {e}") from e

    edges = _parse_pairs(_read_lines(root / "edges.txt"), "edges.txt")

    mask_lines = [line.strip() for line in _read_lines(root / "masks.txt") if line.strip()]
    if len(mask_lines) != num_nodes:
        raise DataValidationError(f"masks.txt has {len(mask_lines)} lines, expected {num_nodes}")
    unknown = [i for i, value in enumerate(mask_lines) if value not in MASK_VALUES]
    if unknown:
        raise DataValidationError(
            f"masks.txt line {unknown[0] + 1}: '{mask_lines[unknown[0]]}' not in {MASK_VALUES}"
        )
    split = np.array(mask_lines)

    if normalize_features:
        features = normalize_rows(features)

    bundle = DatasetBundle(
        features=features,
        labels=labels,
        edge_list=np.stack([edges.min(axis=1), edges.max(axis=1)], axis=1) if len(edges) else edges,
        train_mask=split == "train",
        val_mask=split == "val",
        test_mask=split == "test",
        num_classes=num_classes,
    ).validate()

    logger.info("Dataset loaded", extra={
        "directory": str(root),
        "nodes": bundle.num_nodes,
        "features": bundle.num_features,
        "classes": bundle.num_classes,
        "edges": bundle.num_edges,
        "train": int(bundle.train_mask.sum()),
        "val": int(bundle.val_mask.sum()),
        "test": int(bundle.test_mask.sum()),
    })
    return bundle


def save_dataset(bundle: DatasetBundle, directory: PathLike) -> None:
    """Write a bundle in the five-file directory layout."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "meta.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write(f"nodes={bundle.num_nodes}\nfeatures={bundle.num_features}\nclasses={bundle.num_classes}\n")
    np.savetxt(root / "features.csv", bundle.features, fmt="%.17g", delimiter=",", newline="\n")
    with open(root / "labels.txt", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{int(label)}\n" for label in bundle.labels)
    save_edge_list(bundle.edge_list, root / "edges.txt")
    split = np.full(bundle.num_nodes, "none", dtype=object)
    for name in MASK_NAMES:
        split[bundle.mask(name)] = name
    with open(root / "masks.txt", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{value}\n" for value in split)


def graph_from_bundle(bundle: DatasetBundle) -> SparseGraph:
    """Unit-weight input graph of a dataset."""
    return SparseGraph.from_edges(bundle.num_nodes, bundle.edge_list)


def save_edge_list(
    pairs: np.ndarray,
    path: PathLike,
    header: Optional[str] = None,
    canonical: bool = True,
) -> None:
    """
    Write undirected pairs one per line as ``p q``, in the given order.

    Args:
        pairs: Integer array (M, 2)
        path: Destination file
        header: Optional first line
        canonical: Write each pair with p < q; otherwise keep its orientation
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if canonical:
        pairs = np.sort(pairs, axis=1)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            if header is not None:
                f.write(header + "\n")
            f.writelines(f"{p} {q}\n" for p, q in pairs.tolist())
    except OSError as e:
        logger.error(f"Failed to write edge list {path}: {e}")
        raise


def load_edge_list(path: PathLike, skip_header: bool = False) -> Tuple[Optional[str], np.ndarray]:
    """
    Read a ``p q`` edge list.

    Returns:
        Tuple of (header line or None, pairs array (M, 2))
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetLoadError(f"missing edge list: {path.name}", str(path))
    lines = _read_lines(path)
    header = None
    if skip_header and lines:
        header, lines = lines[0], lines[1:]
    return header, _parse_pairs(lines, path.name, first_line=2 if skip_header else 1)


def save_graph(graph: SparseGraph, path: PathLike) -> None:
    """
    Persist a graph as ``nodes=N edges=M`` followed by ``p q w`` lines.

    Weights are written with shortest round-trip precision so that
    ``load_graph`` reproduces them bit for bit.

    Raises:
        OSError: If the path is not writable
    """
    pairs, weights = graph.edge_array()
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"nodes={graph.num_nodes} edges={graph.num_edges}\n")
            f.writelines(
                f"{p} {q} {w!r}\n" for (p, q), w in zip(pairs.tolist(), weights.tolist())
            )
    except OSError as e:
        logger.error(f"Failed to save graph to {path}: {e}")
        raise
    logger.debug("Graph saved", extra={"path": str(path), "nodes": graph.num_nodes, "edges": graph.num_edges})


def load_graph(path: PathLike) -> SparseGraph:
    """Read a graph written by ``save_graph``."""
    path = Path(path)
    if not path.is_file():
        raise DatasetLoadError(f"missing graph file: {path.name}", str(path))
    lines = _read_lines(path)
    if not lines:
        raise DataValidationError(f"{path.name} is empty")
    header = dict(item.split("=", 1) for item in lines[0].split() if "=" in item)
    try:
        num_nodes, num_edges = int(header["nodes"]), int(header["edges"])
    except (KeyError, ValueError) as e:
        raise DataValidationError(f"{path.name}: bad header '{lines[0]}'") from e

    pairs = np.zeros((num_edges, 2), dtype=np.int64)
    weights = np.ones(num_edges, dtype=np.float64)
    records = [line.split() for line in lines[1:] if line.strip()]
    if len(records) != num_edges:
        raise DataValidationError(f"{path.name}: header declares {num_edges} edges, found {len(records)}")
    for i, fields in enumerate(records):
        try:
            pairs[i] = (int(fields[0]), int(fields[1]))
            if len(fields) > 2:
                weights[i] = float(fields[2])
        except (ValueError, IndexError) as e:
            raise DataValidationError(f"{path.name} line {i + 2}: cannot parse '{' '.join(fields)}'") from e
    return SparseGraph.from_edges(num_nodes, pairs, weights)


def _load_planetoid_part(raw: Path, name: str, part: str):
    path = raw / f"ind.{name}.{part}"
    if not path.is_file():
        raise DatasetLoadError(f"missing Planetoid file: {path.name}", str(path))
    with open(path, "rb") as f:
        obj = pickle.load(f, encoding="latin1")
    if sp.issparse(obj):
        return obj.toarray()
    return obj


def convert_planetoid(raw_dir: PathLike, name: str, out_dir: PathLike) -> DatasetBundle:
    """
    Convert the public Planetoid files into the portable directory layout.

    Train nodes are the first |y| nodes, validation the next 500, test the
    listed test indices. CiteSeer's missing test indices become zero-feature
    rows labelled 0.

    Args:
        raw_dir: Directory with ``ind.<name>.*`` files
        name: Dataset name, e.g. ``citeseer``
        out_dir: Destination directory

    Returns:
        The converted, validated bundle
    """
    raw = Path(raw_dir)
    name = name.lower()
    x, tx, allx, y, ty, ally, graph = (_load_planetoid_part(raw, name, part) for part in PLANETOID_PARTS)
    index_path = raw / f"ind.{name}.test.index"
    if not index_path.is_file():
        raise DatasetLoadError(f"missing Planetoid file: {index_path.name}", str(index_path))
    if len(x) != len(y):
        raise DataValidationError(f"ind.{name}.x has {len(x)} rows but ind.{name}.y has {len(y)}")
    test_index = np.array([int(line) for line in _read_lines(index_path) if line.strip()], dtype=np.int64)
    sorted_test = np.sort(test_index)

    if name == "citeseer":
        span = sorted_test.max() - sorted_test.min() + 1
        tx_ext = np.zeros((span, tx.shape[1]))
        tx_ext[sorted_test - sorted_test.min()] = tx
        ty_ext = np.zeros((span, ty.shape[1]))
        ty_ext[sorted_test - sorted_test.min()] = ty
        tx, ty = tx_ext, ty_ext
        logger.info("Filled isolated CiteSeer test indices", extra={"filled": int(span - len(test_index))})

    features = np.vstack([allx, tx]).astype(np.float64)
    onehot = np.vstack([ally, ty])
    features[test_index] = features[sorted_test]
    onehot[test_index] = onehot[sorted_test]
    labels = onehot.argmax(axis=1).astype(np.int64)
    num_nodes = features.shape[0]

    split = np.full(num_nodes, "none", dtype=object)
    split[: len(y)] = "train"
    split[len(y): min(len(y) + PLANETOID_VAL_SIZE, len(allx))] = "val"
    split[test_index] = "test"

    pairs = [(int(p), int(q)) for p, neighbors in graph.items() for q in neighbors]
    raw_pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    raw_pairs = raw_pairs[(raw_pairs < num_nodes).all(axis=1)]
    raw_pairs = raw_pairs[raw_pairs[:, 0] != raw_pairs[:, 1]]
    canonical = np.unique(np.sort(raw_pairs, axis=1), axis=0)

    bundle = DatasetBundle(
        features=features,
        labels=labels,
        edge_list=canonical,
        train_mask=split == "train",
        val_mask=split == "val",
        test_mask=split == "test",
        num_classes=int(onehot.shape[1]),
    ).validate()
    save_dataset(bundle, out_dir)
    logger.info("Planetoid dataset converted", extra={
        "dataset": name,
        "nodes": bundle.num_nodes,
        "features": bundle.num_features,
        "classes": bundle.num_classes,
        "edges": bundle.num_edges,
        "pairs_dropped": int(len(pairs) - len(raw_pairs)),
        "out_dir": str(out_dir),
    })
    return bundle
