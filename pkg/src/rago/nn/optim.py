"""AdamW with decoupled weight decay and the step-then-exponential LR schedule."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(weights, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
    """One in-place AdamW update of every parameter in ``weights``.

    ``grads`` maps the same paths to arrays; missing entries count as zero.
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for path, p in weights.items():
        g = grads.get(path)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(path)
        if m is None:
            m = state.m[path] = np.zeros_like(p.data)
            state.v[path] = np.zeros_like(p.data)
        v = state.v[path]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data * (1.0 - lr * weight_decay) - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def lr_schedule(epoch, base_lr=1e-3, hold_epochs=100, decay=0.999):
    """Constant ``base_lr`` up to ``hold_epochs``, then ``base_lr * decay**(epoch - hold_epochs)``."""
    if epoch <= hold_epochs:
        return base_lr
    return base_lr * decay ** (epoch - hold_epochs)


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
