from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidStateError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam with bias-corrected moments (Kingma & Ba), PyTorch's update form.

    ``step`` consumes the gradients: they are reset to None afterwards.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps, 0,
                               [np.zeros_like(p.data) for p in self.params],
                               [np.zeros_like(p.data) for p in self.params])

    def step(self):
        st = self.state
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise InvalidStateError(f"parameter {i} {p.shape} has no gradient")
        st.step += 1
        bc1 = 1.0 - st.beta1 ** st.step
        bc2 = 1.0 - st.beta2 ** st.step
        for p, m, v in zip(self.params, st.m, st.v):
            g = p.grad
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            denom = np.sqrt(v / bc2) + st.eps
            p.data -= st.lr * (m / bc1) / denom
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def adam_step(params, state):
    """Functional form: update ``params`` in place from their gradients."""
    opt = Adam.__new__(Adam)
    opt.params = list(params)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in opt.params]
        state.v = [np.zeros_like(p.data) for p in opt.params]
    opt.state = state
    opt.step()
    return params, state
