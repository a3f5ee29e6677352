"""Training-schedule controllers driven by validation loss.

Both controllers are pure state machines: each step takes the previous
:class:`ScheduleState` and one epoch's validation loss and returns a new state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

INITIAL_LR = 1e-4  # Nadam learning rate
EARLY_STOP_PATIENCE = 5
PLATEAU_PATIENCE = 3
PLATEAU_FACTOR = 0.2


@dataclass(frozen=True)
class ScheduleState:
    best_loss: float = math.inf
    epochs_since_improve: int = 0
    current_lr: float = INITIAL_LR
    best_epoch: int = 0
    stopped: bool = False
    epoch: int = 0  # 1-based index of the last epoch seen

    def __post_init__(self):
        if self.epochs_since_improve < 0:
            raise ValueError("epochs_since_improve must be >= 0")
        if not self.current_lr > 0:
            raise ValueError("current_lr must be positive")


def _check(val_loss: float) -> None:
    if not math.isfinite(val_loss):
        raise ValueError(f"validation loss must be finite, got {val_loss}")


def early_stopping_step(state: ScheduleState, val_loss: float, patience: int = EARLY_STOP_PATIENCE) -> ScheduleState:
    """Stop once the loss has failed to strictly improve for ``patience`` epochs.

    ``best_epoch`` names the epoch whose weights should be restored.
    """
    _check(val_loss)
    epoch = state.epoch + 1
    if state.stopped:
        return replace(state, epoch=epoch)
    if val_loss < state.best_loss:
        return replace(state, best_loss=val_loss, epochs_since_improve=0, best_epoch=epoch, epoch=epoch)
    waited = state.epochs_since_improve + 1
    return replace(state, epochs_since_improve=waited, stopped=waited >= patience, epoch=epoch)


def plateau_lr_step(state: ScheduleState, val_loss: float, patience: int = PLATEAU_PATIENCE,
                    factor: float = PLATEAU_FACTOR) -> ScheduleState:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""
    _check(val_loss)
    epoch = state.epoch + 1
    if val_loss < state.best_loss:
        return replace(state, best_loss=val_loss, epochs_since_improve=0, best_epoch=epoch, epoch=epoch)
    waited = state.epochs_since_improve + 1
    if waited >= patience:
        return replace(state, current_lr=state.current_lr * factor, epochs_since_improve=0, epoch=epoch)
    return replace(state, epochs_since_improve=waited, epoch=epoch)


def replay(losses, step, **kwargs):
    """Fold ``step`` over ``losses`` from a fresh state; returns every intermediate state."""
    state = ScheduleState()
    states = []
    for loss in losses:
        state = step(state, loss, **kwargs)
        states.append(state)
    return states
