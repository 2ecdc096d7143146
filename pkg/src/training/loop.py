"""
Training Loop

Epoch loop shared by the cloud and solar nets: shuffled mini-batches,
Adam updates, one validation loss per epoch, best-checkpoint tracking,
early stopping and learning-rate reduction on plateau.

Rules (both monitor the validation loss, counted independently):
- improvement means strictly lower than the best loss so far
- early stopping fires after `early_stop_patience` consecutive epochs
  without improvement
- the learning rate is multiplied by `lr_factor` after `lr_patience`
  consecutive epochs without improvement; that counter then restarts

The history's `lr` column is the rate in effect after the epoch's
scheduler update.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.exceptions import TrainingError
from src.core.models import TrainConfig
from src.tensor.autodiff import Tensor, no_grad
from src.tensor.module import Module
from src.training.optim import Adam


logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "lr"]

LossFn = Callable[[Module, List[Any], np.random.Generator], Tensor]
ValFn = Callable[[Module], float]


class EarlyStopping:
    """
    Example:
        >>> stopper = EarlyStopping(patience=2)
        >>> [stopper.update(v, e) for e, v in enumerate([1.0, 0.9, 0.9, 0.9], start=1)]
        [True, True, False, False]
        >>> stopper.should_stop, stopper.best_epoch
        (True, 2)
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.counter = 0

    def update(self, val_loss: float, epoch: int) -> bool:
        """Record an epoch; return True when it improved on the best loss"""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


class ReduceLROnPlateau:
    """Multiply the optimizer's learning rate by `factor` after `patience` stagnant epochs"""

    def __init__(self, optimizer: Adam, factor: float, patience: int):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best_loss = math.inf
        self.counter = 0
        self.reductions = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.counter = 0
        else:
            self.counter += 1
            if self.counter >= self.patience:
                self.optimizer.lr = self.optimizer.lr * self.factor
                self.reductions += 1
                self.counter = 0
                logger.info(f"Validation loss plateaued, learning rate -> {self.optimizer.lr:.3g}")
        return self.optimizer.lr


@dataclass
class TrainResult:
    """Outcome of a training run; the model already holds the best weights"""
    best_epoch: int
    best_val_loss: float
    history: pd.DataFrame
    stopped_early: bool
    best_state: Dict[str, np.ndarray]

    def write_history(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history.to_csv(path, index=False, lineterminator="\n")
        return path


def _batches(items: Sequence[Any], batch_size: int, rng: np.random.Generator) -> List[List[Any]]:
    order = rng.permutation(len(items))
    return [[items[i] for i in order[start:start + batch_size]] for start in range(0, len(items), batch_size)]


def _finite(value: float, what: str, epoch: int) -> float:
    if not np.isfinite(value):
        raise TrainingError(f"Non-finite {what} ({value}) at epoch {epoch}")
    return float(value)


def train_loop(
    model: Module,
    train_items: Sequence[Any],
    loss_fn: LossFn,
    val_fn: ValFn,
    cfg: TrainConfig,
    checkpoint_path: Optional[Path] = None,
    name: str = "model",
) -> TrainResult:
    """
    Fit a model and keep the weights of its best validation epoch

    Args:
        model: Module whose parameters are optimised
        train_items: Training examples; batched and shuffled with cfg.seed every epoch
        loss_fn: (model, batch, rng) -> scalar training loss
        val_fn: model -> validation loss, evaluated once per epoch
        cfg: Epoch budget, learning-rate schedule and patience values
        checkpoint_path: When given, the best weights are saved there via model.save

    Returns:
        TrainResult; the model's parameters are restored to the best epoch

    Raises:
        TrainingError: On empty training data or non-finite losses/gradients
    """
    if len(train_items) == 0:
        raise TrainingError(f"{name}: training split is empty")

    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model.parameters(), lr=cfg.lr_init)
    stopper = EarlyStopping(cfg.early_stop_patience)
    scheduler = ReduceLROnPlateau(optimizer, cfg.lr_factor, cfg.lr_patience)
    best_state = model.state_dict()
    rows = []

    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for batch in _batches(train_items, cfg.batch_size, rng):
            optimizer.zero_grad()
            loss = loss_fn(model, batch, rng)
            losses.append(_finite(loss.item(), "training loss", epoch))
            loss.backward()
            optimizer.step()
        optimizer.zero_grad()

        with no_grad():
            val_loss = _finite(val_fn(model), "validation loss", epoch)
        if stopper.update(val_loss, epoch):
            best_state = model.state_dict()
        lr = scheduler.step(val_loss)
        rows.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss, "lr": lr})
        logger.debug(f"{name} epoch {epoch}: train {rows[-1]['train_loss']:.6f} val {val_loss:.6f} lr {lr:.3g}")

        if stopper.should_stop:
            logger.info(f"{name}: early stop after epoch {epoch}, best epoch {stopper.best_epoch}")
            break

    model.load_state_dict(best_state)
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    result = TrainResult(
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best_loss,
        history=history,
        stopped_early=stopper.should_stop,
        best_state=best_state,
    )
    if checkpoint_path is not None:
        model.save(checkpoint_path, meta={"best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss})
    logger.info(f"✅ {name}: best val loss {result.best_val_loss:.6f} at epoch {result.best_epoch}")
    return result
