import math

import numpy as np

from mplab.config.validations import Adam, Constant, Sgd, Warmup
from mplab.errors import ConfigError


def learning_rate(schedule, base_lr, step):
    """Rate for the 1-based ``step``. Warmup rises linearly to ``base_lr`` then decays as 1/sqrt(step)."""
    if isinstance(schedule, Constant):
        return base_lr
    if isinstance(schedule, Warmup):
        return base_lr * min(step / schedule.steps, math.sqrt(schedule.steps / step))
    raise ConfigError(f"unknown learning-rate schedule {schedule!r}")


def clip_gradients(grads, max_norm):
    """Rescale trainable gradients to global L2 norm ``max_norm``; 0 disables clipping."""
    if max_norm <= 0:
        return grads
    norm = grads.norm()
    if norm <= max_norm or norm == 0.0:
        return grads
    return grads.scale(max_norm / norm)


class Optimizer:
    def __init__(self, cfg, schedule, base_lr):
        self.cfg = cfg
        self.schedule = schedule
        self.base_lr = base_lr
        self.steps = 0

    @property
    def lr(self):
        return learning_rate(self.schedule, self.base_lr, max(self.steps, 1))

    def step(self, params, grads):
        """Return updated parameters; buffer entries are left untouched."""
        self.steps += 1
        lr = learning_rate(self.schedule, self.base_lr, self.steps)
        updated = {name: self._update(name, params[name], grads[name], lr) for name in params.trainable_names}
        return params.replace(updated)

    def _update(self, name, value, grad, lr):
        raise NotImplementedError


class SgdOptimizer(Optimizer):
    def __init__(self, cfg, schedule, base_lr):
        super().__init__(cfg, schedule, base_lr)
        self.velocity = {}

    def _update(self, name, value, grad, lr):
        v = self.velocity.get(name)
        v = grad.copy() if v is None else self.cfg.momentum * v + grad
        self.velocity[name] = v
        return value - lr * v


class AdamOptimizer(Optimizer):
    def __init__(self, cfg, schedule, base_lr):
        super().__init__(cfg, schedule, base_lr)
        self.m, self.v = {}, {}

    def _update(self, name, value, grad, lr):
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        m = b1 * self.m.get(name, 0.0) + (1.0 - b1) * grad
        v = b2 * self.v.get(name, 0.0) + (1.0 - b2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1.0 - b1**self.steps)
        v_hat = v / (1.0 - b2**self.steps)
        return value - lr * m_hat / (np.sqrt(v_hat) + self.cfg.eps)


def make_optimizer(cfg, schedule, base_lr=None):
    """Optimizer for ``cfg`` (Adam or Sgd) at ``base_lr``, defaulting to the configured rate."""
    base_lr = cfg.lr if base_lr is None else base_lr
    if isinstance(cfg, Adam):
        return AdamOptimizer(cfg, schedule, base_lr)
    if isinstance(cfg, Sgd):
        return SgdOptimizer(cfg, schedule, base_lr)
    raise ConfigError(f"unknown optimizer {cfg!r}")
