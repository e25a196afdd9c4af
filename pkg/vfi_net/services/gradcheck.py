"""
End-to-end finite-difference check of a network's backward pass.
"""
import logging
from typing import Dict

import numpy as np
from pydantic import BaseModel, Field

from vfi_tensor.services.gradcheck import max_relative_error, numeric_gradient, sample_indices

from .models import FlavrConfig
from .network import build

logger = logging.getLogger(__name__)


class GradientCheckReport(BaseModel):
    max_relative_error: float = Field(..., description="Worst relative error over all probes")
    probes: int = Field(..., description="Finite-difference probes evaluated")
    skipped: int = Field(..., description="Probes discarded for straddling a ReLU kink")
    worst: Dict[str, float] = Field(default_factory=dict, description="Worst error per parameter (and 'input')")

    def passed(self, tolerance: float = 1e-5) -> bool:
        return self.max_relative_error <= tolerance


def check_network_gradients(
    config: FlavrConfig,
    seed: int = 0,
    size: int = 16,
    samples_per_parameter: int = 2,
    input_samples: int = 8,
    data_seed: int = 12,
    h: float = 1e-5,
    floor: float = 1e-4,
) -> GradientCheckReport:
    """
    Compare analytic gradients of sum_j <forward(x)_j, r_j> with central
    differences, for sampled entries of every parameter and of the input.

    Args:
        config: Network to check (float64 recommended)
        seed: Initialization seed
        size: Input height and width
        samples_per_parameter: Entries probed per parameter tensor
        input_samples: Entries of the input probed
        data_seed: Seed of the input x and the projections r
        h: Finite-difference step
        floor: Relative-error denominator floor

    Returns:
        GradientCheckReport
    """
    net = build(config, seed)
    rng = np.random.default_rng(data_seed)
    x = rng.uniform(0, 1, size=(1, 3, config.input_frames, size, size)).astype(config.np_dtype)
    projections = [rng.standard_normal((1, 3, size, size)) for _ in range(config.output_frames)]

    def objective() -> float:
        return float(sum(np.sum(out * r) for out, r in zip(net.forward(x), projections)))

    objective()
    net.zero_grads()
    grad_input = net.backward(projections)

    probe_rng = np.random.default_rng(0)
    worst: Dict[str, float] = {}
    probes = skipped = 0
    targets = [(name, pair.value, pair.grad) for name, pair in net.parameters()]
    targets.append(("input", x, grad_input))
    for name, array, grad in targets:
        count = input_samples if name == "input" else samples_per_parameter
        indices = sample_indices(array.shape, count, probe_rng)
        analytic = np.array([grad[i] for i in indices])
        numeric = numeric_gradient(objective, array, h=h, indices=indices, signature=net.relu_masks)
        worst[name] = max_relative_error(analytic, numeric, floor=floor)
        probes += len(indices)
        skipped += int(np.isnan(numeric).sum())

    report = GradientCheckReport(
        max_relative_error=max(worst.values()), probes=probes, skipped=skipped, worst=worst
    )
    logger.info(
        f"Gradient check: max relative error {report.max_relative_error:.3e} over {probes} probe(s), "
        f"{skipped} skipped at kinks"
    )
    return report
