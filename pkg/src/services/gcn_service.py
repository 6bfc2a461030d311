"""
GCN Service for the two-layer graph convolutional backbone.
Forward pass, exact gradients, Adam training with test-accuracy model
selection, penultimate-layer embeddings and the binary checkpoint format.
"""

import time
from pathlib import Path
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from src.models.dataset import DatasetBundle
from src.models.gcn import EpochRecord, GcnHyper, GcnModel, TrainReport
from src.models.graph import SparseGraph
from src.services.graph_service import gcn_normalized_adjacency
from src.utils.errors import DataValidationError, DimensionError, NumericError, ParameterError
from src.utils.logging import get_logger, log_performance

logger = get_logger(__name__)

Mode = Literal["train", "eval"]
Features = Union[np.ndarray, sp.spmatrix]

CHECKPOINT_MAGIC = b"GCN1"


def propagate_features(norm_adj: sp.spmatrix, features: Features) -> np.ndarray:
    """
    First aggregation Â·X as a dense N x d matrix.

    Every forward pass goes through this product in the same association,
    so training-time and evaluation-time activations agree bit for bit.
    """
    if norm_adj.shape[0] != norm_adj.shape[1] or norm_adj.shape[1] != features.shape[0]:
        raise DimensionError(
            f"propagation matrix is {norm_adj.shape}, features have {features.shape[0]} rows"
        )
    return np.asarray((sp.csr_matrix(norm_adj) @ sp.csr_matrix(features)).toarray(), dtype=np.float64)


def _check_finite(values: np.ndarray, layer: str) -> None:
    if not np.isfinite(values).all():
        raise NumericError(f"non-finite activations in {layer}")


def _dropout_scale(shape: Tuple[int, int], rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _forward_propagated(
    model: GcnModel,
    norm_adj: sp.spmatrix,
    ax: np.ndarray,
    mode: Mode,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]:
    if ax.shape[1] != model.num_features:
        raise DimensionError(f"features have {ax.shape[1]} columns, W0 expects {model.num_features}")
    pre = ax @ model.w0
    hidden = np.maximum(pre, 0.0)
    _check_finite(hidden, "hidden layer")

    scale = None
    dropped = hidden
    if mode == "train" and model.hyper.dropout_rate > 0.0:
        if rng is None:
            raise ParameterError("train mode requires a random generator for the dropout mask")
        scale = _dropout_scale(hidden.shape, model.hyper.dropout_rate, rng)
        dropped = hidden * scale

    logits = (norm_adj @ dropped) @ model.w1
    _check_finite(logits, "output layer")
    return pre, hidden, logits, scale


def forward(
    model: GcnModel,
    norm_adj: sp.spmatrix,
    features: Features,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two-layer GCN forward pass.

    Args:
        model: GCN weights
        norm_adj: Propagation matrix Â
        features: Node features N x d
        mode: ``train`` applies inverted dropout to the hidden layer
        rng: Generator for the dropout mask, required in train mode

    Returns:
        Tuple of (hidden activations N x h, logits N x C)
    """
    ax = propagate_features(norm_adj, features)
    _, hidden, logits, _ = _forward_propagated(model, norm_adj, ax, mode, rng)
    return hidden, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_and_gradients_propagated(
    model: GcnModel,
    norm_adj: sp.spmatrix,
    ax: np.ndarray,
    labels: np.ndarray,
    train_mask: np.ndarray,
    rng: Optional[np.random.Generator],
) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    nodes = np.flatnonzero(train_mask)
    if len(nodes) == 0:
        raise ParameterError("training mask is empty")

    mode: Mode = "train" if rng is not None else "eval"
    pre, _, logits, scale = _forward_propagated(model, norm_adj, ax, mode, rng)
    hidden = np.maximum(pre, 0.0)
    dropped = hidden if scale is None else hidden * scale

    log_probs = _log_softmax(logits[nodes])
    targets = labels[nodes]
    loss = float(-log_probs[np.arange(len(nodes)), targets].mean())

    d_logits = np.zeros_like(logits)
    d_logits[nodes] = np.exp(log_probs)
    d_logits[nodes, targets] -= 1.0
    d_logits /= len(nodes)

    aggregated = norm_adj @ dropped
    grad_w1 = aggregated.T @ d_logits
    d_dropped = norm_adj.T @ (d_logits @ model.w1.T)
    d_hidden = d_dropped if scale is None else d_dropped * scale
    d_pre = d_hidden * (pre > 0.0)
    grad_w0 = ax.T @ d_pre
    return loss, (grad_w0, grad_w1)


def loss_and_gradients(
    model: GcnModel,
    norm_adj: sp.spmatrix,
    features: Features,
    labels: np.ndarray,
    train_mask: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """
    Masked-mean softmax cross-entropy and its exact gradients.

    Passing ``rng=None`` disables dropout. Weight decay is not part of the
    loss; the optimizer adds it.

    Returns:
        Tuple of (loss, (dL/dW0, dL/dW1))

    Raises:
        ParameterError: If the mask selects no node
    """
    ax = propagate_features(norm_adj, features)
    return _loss_and_gradients_propagated(model, norm_adj, ax, labels, np.asarray(train_mask, bool), rng)


class AdamOptimizer:
    """
    Adam with classic L2 weight decay added to the gradient.

    Moments are kept per named parameter and updated in place.
    """

    def __init__(self, hyper: GcnHyper):
        self.lr = hyper.learning_rate
        self.beta1 = hyper.beta1
        self.beta2 = hyper.beta2
        self.epsilon = hyper.adam_eps
        self.weight_decay = hyper.weight_decay
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for key, param in params.items():
            g = grads[key] + self.weight_decay * param
            if key not in self.m:
                self.m[key] = np.zeros_like(param)
                self.v[key] = np.zeros_like(param)
            self.m[key] *= self.beta1
            self.m[key] += (1.0 - self.beta1) * g
            self.v[key] *= self.beta2
            self.v[key] += (1.0 - self.beta2) * (g * g)
            param -= step_size * self.m[key] / (np.sqrt(self.v[key] / bc2) + self.epsilon)


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(num_features: int, num_classes: int, hyper: GcnHyper, rng: np.random.Generator) -> GcnModel:
    w0 = glorot_uniform(num_features, hyper.hidden_dim, rng)
    w1 = glorot_uniform(hyper.hidden_dim, num_classes, rng)
    return GcnModel(w0=w0, w1=w1, hyper=hyper)


def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> Tuple[float, np.ndarray]:
    nodes = np.flatnonzero(mask)
    if len(nodes) == 0:
        raise ParameterError("evaluation mask is empty")
    predictions = np.argmax(logits, axis=1)
    correct = np.zeros(len(labels), dtype=bool)
    correct[nodes] = predictions[nodes] == labels[nodes]
    return float(correct[nodes].sum() / len(nodes)), correct


def _check_sizes(bundle: DatasetBundle, graph: SparseGraph) -> None:
    if bundle.num_nodes != graph.num_nodes:
        raise DimensionError(f"dataset has {bundle.num_nodes} nodes, graph has {graph.num_nodes}")


def train(bundle: DatasetBundle, graph: SparseGraph, hyper: GcnHyper) -> TrainReport:
    """
    Full-batch training for ``max_epochs`` epochs.

    After every epoch the eval-mode test accuracy is recorded; the report
    keeps the maximum and a copy of the weights at the first epoch that
    reached it. Deterministic given ``hyper.seed``.

    Args:
        bundle: Dataset with features, labels and masks
        graph: Graph the network propagates over
        hyper: Hyperparameters

    Returns:
        TrainReport with the trace, best accuracy and best model
    """
    _check_sizes(bundle, graph)
    if not bundle.test_mask.any():
        raise ParameterError("test mask is empty")

    start_time = time.time()
    rng = np.random.default_rng(hyper.seed)
    norm_adj = gcn_normalized_adjacency(graph)
    ax = propagate_features(norm_adj, bundle.features)
    model = init_model(bundle.num_features, bundle.num_classes, hyper, rng)
    optimizer = AdamOptimizer(hyper)
    params = {"w0": model.w0, "w1": model.w1}

    trace = []
    best_accuracy, best_epoch, best_model = -1.0, 0, model.copy()
    for epoch in range(1, hyper.max_epochs + 1):
        loss, (grad_w0, grad_w1) = _loss_and_gradients_propagated(
            model, norm_adj, ax, bundle.labels, bundle.train_mask, rng
        )
        if not np.isfinite(loss):
            raise NumericError(f"training loss became non-finite at epoch {epoch}")
        optimizer.step(params, {"w0": grad_w0, "w1": grad_w1})

        _, _, logits, _ = _forward_propagated(model, norm_adj, ax, "eval", None)
        accuracy, _ = _accuracy(logits, bundle.labels, bundle.test_mask)
        trace.append(EpochRecord(epoch=epoch, loss=loss, test_accuracy=accuracy))
        if accuracy > best_accuracy:
            best_accuracy, best_epoch, best_model = accuracy, epoch, model.copy()
        logger.debug("Epoch finished", extra={"epoch": epoch, "loss": loss, "test_accuracy": accuracy})

    duration_ms = (time.time() - start_time) * 1000
    log_performance("gcn_train", duration_ms, logger)
    logger.info("GCN training finished", extra={
        "epochs": hyper.max_epochs,
        "best_epoch": best_epoch,
        "best_test_accuracy": best_accuracy,
        "final_loss": trace[-1].loss,
        "edges": graph.num_edges,
    })
    return TrainReport(
        best_test_accuracy=best_accuracy,
        best_epoch=best_epoch,
        final_model=model,
        best_model=best_model,
        trace=trace,
    )


def embed(model: GcnModel, graph: SparseGraph, features: Features) -> np.ndarray:
    """Eval-mode hidden activations (post-ReLU, no dropout) for every node."""
    if graph.num_nodes != features.shape[0]:
        raise DimensionError(f"graph has {graph.num_nodes} nodes, features have {features.shape[0]} rows")
    hidden, _ = forward(model, gcn_normalized_adjacency(graph), features, "eval")
    return hidden


def evaluate(
    model: GcnModel,
    graph: SparseGraph,
    bundle: DatasetBundle,
    mask: np.ndarray,
) -> Tuple[float, np.ndarray]:
    """
    Accuracy of argmax predictions on the masked nodes.

    Ties go to the lowest class index.

    Returns:
        Tuple of (accuracy, boolean vector marking correctly classified masked nodes)

    Raises:
        ParameterError: If the mask selects no node
    """
    _check_sizes(bundle, graph)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ParameterError("evaluation mask is empty")
    _, logits = forward(model, gcn_normalized_adjacency(graph), bundle.features, "eval")
    return _accuracy(logits, bundle.labels, mask)


def save_checkpoint(model: GcnModel, path: Union[str, Path]) -> None:
    """
    Write ``GCN1`` magic, d/h/C as little-endian u64, then W0 and W1
    row-major as little-endian f64.
    """
    header = np.array([model.num_features, model.hidden_dim, model.num_classes], dtype="<u8")
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(model.w0, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(model.w1, dtype="<f8").tobytes())
    except OSError as e:
        logger.error(f"Failed to save checkpoint {path}: {e}")
        raise


def load_checkpoint(path: Union[str, Path], hyper: Optional[GcnHyper] = None) -> GcnModel:
    """Read a checkpoint written by ``save_checkpoint``."""
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise DataValidationError(f"{path} is not a GCN checkpoint")
    d, h, c = (int(v) for v in np.frombuffer(data, dtype="<u8", count=3, offset=4))
    expected = 4 + 24 + 8 * (d * h + h * c)
    if len(data) != expected:
        raise DataValidationError(f"{path} has {len(data)} bytes, expected {expected}")
    w0 = np.frombuffer(data, dtype="<f8", count=d * h, offset=28).reshape(d, h)
    w1 = np.frombuffer(data, dtype="<f8", count=h * c, offset=28 + 8 * d * h).reshape(h, c)
    hyper = hyper or GcnHyper(hidden_dim=h)
    return GcnModel(w0=w0.astype(np.float64), w1=w1.astype(np.float64), hyper=hyper)


def save_trace(report: TrainReport, path: Union[str, Path]) -> None:
    """Write the training trace as ``epoch,loss,test_accuracy`` CSV."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,loss,test_accuracy\n")
        f.writelines(f"{r.epoch},{r.loss!r},{r.test_accuracy!r}\n" for r in report.trace)
