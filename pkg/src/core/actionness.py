"""
Per-frame actionness head.

A one-hidden-layer network, sigmoid(w2 . relu(W1 x + b1) + b2), trained by
mini-batch gradient descent on binary cross-entropy. Frames inside a label
span are positives.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import orjson

from src.core.conditioning import Sample
from src.core.detection import ProposalScorer
from src.core.exceptions import ModelException, StorageException
from src.utils.config import TrainingConfig
from src.utils.logger import get_logger, get_performance_logger


logger = get_logger(__name__)
perf_logger = get_performance_logger(__name__)

PARAMS = ("w1", "b1", "w2", "b2")


@dataclass(eq=False)
class ActionnessModel:
    """Weights of the actionness head.

    Attributes:
        c: Input channels
        h: Hidden units
        w1: H x C input weights
        b1: H hidden biases
        w2: H output weights
        b2: Output bias
        seed: Seed the model was initialized and trained with
        final_loss: Mean BCE over the training frames after the last epoch
    """

    c: int
    h: int
    w1: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)
    b2: float = 0.0
    seed: int = 0
    final_loss: Optional[float] = None

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(self.h, self.c)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(self.h)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(self.h)
        self.b2 = float(self.b2)
        if not all(np.isfinite(p).all() for p in (self.w1, self.b1, self.w2, self.b2)):
            raise ModelException("Model weights must be finite")

    @classmethod
    def initialize(cls, c: int, h: int, seed: int) -> "ActionnessModel":
        """Uniform fan-in initialization from `seed`."""
        rng = np.random.default_rng(seed)
        bound_in, bound_hidden = 1.0 / math.sqrt(c), 1.0 / math.sqrt(h)
        return cls(
            c=c,
            h=h,
            w1=rng.uniform(-bound_in, bound_in, size=(h, c)),
            b1=rng.uniform(-bound_in, bound_in, size=h),
            w2=rng.uniform(-bound_hidden, bound_hidden, size=h),
            b2=float(rng.uniform(-bound_hidden, bound_hidden)),
            seed=seed,
        )

    @classmethod
    def zeros(cls, c: int, h: int) -> "ActionnessModel":
        return cls(c=c, h=h, w1=np.zeros((h, c)), b1=np.zeros(h), w2=np.zeros(h), b2=0.0)

    def params(self) -> Dict[str, Union[np.ndarray, float]]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "ActionnessModel":
        return ActionnessModel(
            self.c, self.h, self.w1.copy(), self.b1.copy(), self.w2.copy(),
            self.b2, self.seed, self.final_loss
        )

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        hidden = np.maximum(x @ self.w1.T + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Per-row probabilities of an n x C matrix."""
        return _sigmoid(self.logits(x))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.c:
            raise ModelException(
                f"Model expects {self.c} channels, got input of shape {x.shape}",
                details={"expected": self.c, "actual": list(x.shape)}
            )
        return x

    def to_dict(self) -> Dict:
        return {
            "c": self.c,
            "h": self.h,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "seed": self.seed,
            "final_loss": self.final_loss,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ActionnessModel":
        try:
            return cls(
                c=int(data["c"]),
                h=int(data["h"]),
                w1=data["w1"],
                b1=data["b1"],
                w2=data["w2"],
                b2=data["b2"],
                seed=int(data.get("seed", 0)),
                final_loss=data.get("final_loss"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelException(f"Malformed model record: {e}", cause=e)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def actionness_forward(model: ActionnessModel, sample: Sample) -> np.ndarray:
    """N-vector of per-frame probabilities for a sample."""
    return model.forward(sample.features)


def bce_loss(model: ActionnessModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy, computed from logits."""
    z = model.logits(x)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss_and_grad(
    model: ActionnessModel,
    x: np.ndarray,
    y: np.ndarray
) -> Tuple[float, Dict[str, Union[np.ndarray, float]]]:
    """Mean BCE and its analytic gradient with respect to every parameter."""
    x = model._check_input(x)
    y = np.asarray(y, dtype=np.float64)
    pre = x @ model.w1.T + model.b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ model.w2 + model.b2
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

    dz = (_sigmoid(z) - y) / x.shape[0]
    d_pre = np.outer(dz, model.w2) * (pre > 0)
    grads = {
        "w1": d_pre.T @ x,
        "b1": d_pre.sum(axis=0),
        "w2": hidden.T @ dz,
        "b2": float(dz.sum()),
    }
    return loss, grads


def frame_labels(sample: Sample) -> np.ndarray:
    """1 for rows inside any label span, else 0."""
    y = np.zeros(sample.n_frames)
    for span in sample.labels:
        lo, hi = span.row_range()
        y[max(lo, 0):min(hi, sample.n_frames)] = 1.0
    return y


def stack_frames(samples: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray]:
    """All rows of all samples with their frame labels."""
    if not samples:
        raise ModelException("No samples to train on")
    x = np.concatenate([s.features for s in samples], axis=0).astype(np.float64)
    y = np.concatenate([frame_labels(s) for s in samples])
    return x, y


def train_actionness(
    samples: Sequence[Sample],
    config: TrainingConfig,
    seed: int
) -> ActionnessModel:
    """Fit the actionness head on labeled samples.

    Args:
        samples: Training samples (real and synthetic)
        config: Epochs, learning rate, hidden size and batch size
        seed: Seeds the initialization and the batch order

    Returns:
        Trained model with `final_loss` set

    Raises:
        ModelException: If every frame is positive or every frame is negative
    """
    x, y = stack_frames(samples)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.shape[0]:
        raise ModelException(
            "Training frames are all positive or all negative",
            details={"positives": n_pos, "frames": int(y.shape[0])}
        )

    model = ActionnessModel.initialize(x.shape[1], config.hidden, seed)
    rng = np.random.default_rng([seed, 1])

    with perf_logger.timed("actionness_train"):
        for epoch in range(config.epochs):
            order = rng.permutation(x.shape[0])
            for lo in range(0, x.shape[0], config.batch_size):
                batch = order[lo:lo + config.batch_size]
                _, grads = loss_and_grad(model, x[batch], y[batch])
                model.w1 = model.w1 - config.lr * grads["w1"]
                model.b1 = model.b1 - config.lr * grads["b1"]
                model.w2 = model.w2 - config.lr * grads["w2"]
                model.b2 = model.b2 - config.lr * grads["b2"]
            if not np.isfinite(model.w1).all():
                raise ModelException(
                    f"Training diverged at epoch {epoch}; lower the learning rate",
                    details={"epoch": epoch, "lr": config.lr}
                )

    model.final_loss = bce_loss(model, x, y)
    logger.info(
        "actionness_trained",
        frames=int(x.shape[0]),
        positives=n_pos,
        epochs=config.epochs,
        final_loss=round(model.final_loss, 6)
    )
    return model


class ActionnessScorer(ProposalScorer):
    """Scores frames with a trained actionness head."""

    name = "actionness"

    def __init__(self, model: ActionnessModel):
        self.model = model

    def frame_scores(self, sample: Sample) -> np.ndarray:
        return actionness_forward(self.model, sample)


def save_model(model: ActionnessModel, path: Union[str, Path]) -> None:
    """Write the model as JSON.

    Raises:
        StorageException: On I/O failure
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(model.to_dict(), option=orjson.OPT_SORT_KEYS) + b"\n")
    except OSError as e:
        raise StorageException(f"Cannot write model {path}", path=str(path), operation="write", cause=e)


def load_model(path: Union[str, Path]) -> ActionnessModel:
    """Read a model written by save_model.

    Raises:
        ModelException: If the file is missing or malformed
    """
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise ModelException(f"Cannot read model {path}", cause=e, details={"path": str(path)})
    return ActionnessModel.from_dict(data)
