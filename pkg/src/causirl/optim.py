"""Adam with L2 weight decay, plus a cosine learning-rate schedule."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError, ScheduleOverrunWarning


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    schedule: str = "constant"  # "constant" | "cosine"

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigurationError("lr must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("betas must lie in (0, 1)")
        if not self.eps > 0:
            raise ConfigurationError("eps must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_adam(params):
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(params, grads, state, cfg, lr=None):
    """One Adam update. Pure: returns ``(new_params, new_state)``.

    Weight decay is added to the gradient before the moment updates
    (``g + wd * theta``), not decoupled. ``lr`` overrides ``cfg.lr`` for
    scheduled training.
    """
    lr = cfg.lr if lr is None else lr
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}")
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_params, m_out, v_out = {}, {}, {}
    for k, theta in params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {theta.shape}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * theta
        m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        denom = np.sqrt(v) / math.sqrt(bc2) + cfg.eps
        new_params[k] = theta - (lr / bc1) * m / denom
        m_out[k], v_out[k] = m, v
    return new_params, AdamState(m_out, v_out, t)


def cosine_lr(lr0, t, T):
    """``lr0 * (1 + cos(pi t / T)) / 2``; past ``T`` returns 0 with a warning."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    if t > T:
        warnings.warn(f"cosine schedule overrun: step {t} > {T}", ScheduleOverrunWarning, stacklevel=2)
        return 0.0
    return max(0.0, lr0 * (1.0 + math.cos(math.pi * t / T)) / 2.0)


class Adam:
    """Stateful convenience wrapper that drives an :class:`MlpModel`-like object."""

    def __init__(self, model, cfg, total_epochs=None):
        self.model = model
        self.cfg = cfg
        self.total_epochs = total_epochs
        self.state = init_adam(model.parameters())
        self.epoch = 0

    def current_lr(self):
        if self.cfg.schedule == "cosine":
            return cosine_lr(self.cfg.lr, self.epoch, self.total_epochs)
        return self.cfg.lr

    def step(self, grads):
        params, self.state = adam_step(self.model.parameters(), grads, self.state, self.cfg, lr=self.current_lr())
        self.model.set_parameters(params)

    def end_epoch(self):
        self.epoch += 1
