"""
Adam with bias correction.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from vfi_tensor.services.tensor import GradPair

from ..exceptions import OptimizerStateError

logger = logging.getLogger(__name__)

M_PREFIX = "optim.m."
V_PREFIX = "optim.v."


@dataclass
class AdamState:
    """First and second moments per parameter name, plus the step count"""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    Apply one Adam update to every parameter in place.

    Missing moments are created as zeros; existing ones must match the
    parameter shape.
    """
    if set(params) != set(grads):
        raise OptimizerStateError(f"gradients given for {sorted(set(grads) ^ set(params))} do not match parameters")
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise OptimizerStateError(f"{name}: gradient {grad.shape} does not match parameter {value.shape}")
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        if m.shape != value.shape or v.shape != value.shape:
            raise OptimizerStateError(f"{name}: moments {m.shape}/{v.shape} do not match parameter {value.shape}")
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


class Adam:
    """Adam over a network's named GradPairs"""

    def __init__(self, parameters: Iterable[Tuple[str, GradPair]], beta1=0.9, beta2=0.999, eps=1e-8):
        self.parameters = dict(parameters)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self, lr: float) -> None:
        adam_step(
            {name: pair.value for name, pair in self.parameters.items()},
            {name: pair.grad for name, pair in self.parameters.items()},
            self.state, lr, self.beta1, self.beta2, self.eps,
        )

    def state_tensors(self) -> Dict[str, np.ndarray]:
        """Moments in parameter order, named for the checkpoint table"""
        tensors = {}
        for name in self.parameters:
            if name in self.state.m:
                tensors[M_PREFIX + name] = self.state.m[name]
        for name in self.parameters:
            if name in self.state.v:
                tensors[V_PREFIX + name] = self.state.v[name]
        return tensors

    def load_state_tensors(self, tensors: Dict[str, np.ndarray], step: int) -> None:
        state = AdamState(step=step)
        for key, value in tensors.items():
            prefix = M_PREFIX if key.startswith(M_PREFIX) else V_PREFIX if key.startswith(V_PREFIX) else None
            name = key[len(prefix):] if prefix else None
            if name not in self.parameters:
                raise OptimizerStateError(f"optimizer moment '{key}' has no matching parameter")
            if value.shape != self.parameters[name].shape:
                raise OptimizerStateError(f"{key}: shape {value.shape} does not match {self.parameters[name].shape}")
            (state.m if prefix == M_PREFIX else state.v)[name] = np.array(value, dtype=self.parameters[name].value.dtype)
        self.state = state
        logger.debug(f"Restored Adam state at step {step} ({len(tensors)} moment tensor(s))")
