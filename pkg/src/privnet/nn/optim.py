"""Adam updates and global-norm gradient clipping on lists of ndarrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError


@dataclass
class AdamState:
    """Moment accumulators for one group of parameters.

    ``m`` and ``v`` hold one array per parameter, shape-congruent with it.
    """

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError(f"Adam learning rate must be positive, got {self.lr}")

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        arrays = [np.asarray(getattr(p, "data", p)) for p in params]
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays], **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; the inputs are left untouched.
    """
    if len(params) != len(grads):
        raise DimensionError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state = AdamState.for_params(params, lr=state.lr, beta1=state.beta1,
                                     beta2=state.beta2, eps=state.eps)
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape or m.shape != p.shape:
            raise DimensionError(f"adam_step: param shape {p.shape} vs grad shape {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads)))


def clip_global_norm(grads, max_norm: float):
    """Rescale ``grads`` jointly so their concatenated L2 norm is at most ``max_norm``.

    Returns ``(clipped, norm_before)``.
    """
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return [np.asarray(g) for g in grads], norm
    scale = max_norm / norm
    return [np.asarray(g) * scale for g in grads], norm
