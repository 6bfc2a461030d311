"""
Data models for the 2-layer GCN backbone: hyperparameters, weights and training reports.
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.errors import DimensionError, NumericError


class GcnHyper(BaseModel):
    """
    Hyperparameters of the GCN backbone and its Adam training loop.
    """

    hidden_dim: int = Field(default=64, ge=1)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    learning_rate: float = Field(default=0.01, gt=0.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    max_epochs: int = Field(default=200, ge=1)
    seed: int = Field(default=0)

    # Adam constants
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)

    model_config = {
        "frozen": True,
        "json_schema_extra": {
            "example": {
                "hidden_dim": 64,
                "dropout_rate": 0.5,
                "learning_rate": 0.01,
                "weight_decay": 5e-4,
                "max_epochs": 200,
                "seed": 0,
            }
        },
    }


class GcnModel(BaseModel):
    """
    Two weight matrices of the GCN plus the hyperparameters that produced them.

    Attributes:
        w0: Real matrix d x h (first layer)
        w1: Real matrix h x C (second layer)
        hyper: Hyperparameters
    """

    w0: np.ndarray
    w1: np.ndarray
    hyper: GcnHyper = Field(default_factory=GcnHyper)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("w0", "w1", mode="before")
    @classmethod
    def as_float_matrix(cls, v):
        return np.asarray(v, dtype=np.float64)

    @model_validator(mode="after")
    def validate_weights(self):
        if self.w0.ndim != 2 or self.w1.ndim != 2:
            raise DimensionError("GCN weights must be 2-D matrices")
        if self.w0.shape[1] != self.w1.shape[0]:
            raise DimensionError(
                f"hidden dimensions disagree: W0 is {self.w0.shape}, W1 is {self.w1.shape}"
            )
        if not (np.isfinite(self.w0).all() and np.isfinite(self.w1).all()):
            raise NumericError("GCN weights contain non-finite entries")
        return self

    @property
    def num_features(self) -> int:
        return int(self.w0.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.w0.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.w1.shape[1])

    def copy(self) -> "GcnModel":
        return GcnModel(w0=self.w0.copy(), w1=self.w1.copy(), hyper=self.hyper)


class EpochRecord(BaseModel):
    """One entry of the training trace."""

    epoch: int
    loss: float
    test_accuracy: float

    model_config = {"frozen": True}


class TrainReport(BaseModel):
    """
    Outcome of a full training run.

    ``best_test_accuracy`` is the maximum over the trace and ``best_model`` is
    a frozen copy of the weights at ``best_epoch`` (first epoch reaching it).
    """

    best_test_accuracy: float
    best_epoch: int
    final_model: GcnModel
    best_model: GcnModel
    trace: List[EpochRecord] = Field(default_factory=list)

    @property
    def accuracies(self) -> List[float]:
        return [record.test_accuracy for record in self.trace]

    def record_at(self, epoch: int) -> Optional[EpochRecord]:
        return next((r for r in self.trace if r.epoch == epoch), None)
