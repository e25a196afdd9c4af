"""
Forward-pass timing.

Inputs are allocated and validated before the clock starts; the timed region
contains only the forward call(s). Warmup passes are run and discarded.
"""
import logging
import math
import time
from typing import Callable, List, Optional, Sequence

import logfire
import numpy as np

from vfi_net.services.models import FlavrConfig
from vfi_net.services.network import Network, build, check_input
from vfi_tensor.services.parallel import get_num_workers

from ..exceptions import BenchProtocolError, RecursiveBaselineError
from .models import BenchReport, ScalingRow, ScalingStudy

logger = logging.getLogger(__name__)


def _measure(fn: Callable[[], object], warmup: int, runs: int) -> List[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return times


def _check_protocol(warmup: int, runs: int) -> None:
    if runs < 1:
        raise BenchProtocolError(f"runs must be >= 1, got {runs}")
    if warmup < 0:
        raise BenchProtocolError(f"warmup must be >= 0, got {warmup}")


def bench_input(config: FlavrConfig, height: int, width: int, seed: int = 0, batch: int = 1) -> np.ndarray:
    """A validated random input [batch, 3, 2C, H, W] in the network dtype"""
    rng = np.random.default_rng(seed)
    return check_input(config, rng.standard_normal((batch, 3, config.input_frames, height, width)))


def time_forward(
    net: Network,
    height: int,
    width: int,
    warmup: int = 3,
    runs: int = 20,
    seed: int = 0,
    batch: int = 1,
) -> BenchReport:
    """
    Time single-shot forward passes.

    Args:
        net: Network under test; its config fixes k and C
        height: Input height (must suit the network's spatial factor)
        width: Input width
        warmup: Discarded passes before measuring
        runs: Measured passes
        seed: Seed of the random input
        batch: Windows per forward pass

    Returns:
        BenchReport with one wall time per measured pass
    """
    _check_protocol(warmup, runs)
    x = bench_input(net.config, height, width, seed, batch)
    calls_before = net.forward_calls
    times = _measure(lambda: net.forward(x), warmup, runs)
    calls = (net.forward_calls - calls_before) // (warmup + runs)
    report = BenchReport(
        k=net.config.k,
        context=net.config.context,
        height=height,
        width=width,
        batch=batch,
        widths=net.config.encoder_widths,
        dtype=net.config.dtype,
        warmup=warmup,
        workers=get_num_workers(),
        forward_calls=calls,
        times=times,
    )
    logger.info(f"Bench {report.summary()}")
    return report


#----------------------------------------------------------------------------------------------------------------------------------------------
# Recursive baseline
#----------------------------------------------------------------------------------------------------------------------------------------------

def recursive_rounds(k: int) -> int:
    """log2(k) for a power of two k >= 2"""
    if k < 2 or k & (k - 1):
        raise RecursiveBaselineError(f"recursive k=2 interpolation needs a power-of-two factor, got {k}")
    return int(math.log2(k))


def recursive_interpolate(net: Network, x: np.ndarray, k: int) -> List[np.ndarray]:
    """
    Predict the k - 1 frames of the central gap with a k=2 network applied in
    log2(k) rounds, each round bisecting every gap left by the previous one.

    Each new gap takes as context the C nearest known frames on either side
    (inputs and frames predicted in earlier rounds); all gaps of a round go
    through one batched forward pass.

    Args:
        net: Network with k = 2
        x: Input window [B, 3, 2C, H, W] whose frames are k apart
        k: Power-of-two interpolation factor

    Returns:
        k - 1 frames [B, 3, H, W] in temporal order
    """
    if net.config.k != 2:
        raise RecursiveBaselineError(f"recursive baseline needs a k=2 network, got k={net.config.k}")
    rounds = recursive_rounds(k)
    context = net.config.context
    x = check_input(net.config, x)
    known = {(j - context + 1) * k: x[:, :, j] for j in range(2 * context)}
    batch = x.shape[0]

    step = k
    for _ in range(rounds):
        gaps = list(range(0, k, step))
        windows = []
        for start in gaps:
            times = sorted(known)
            left = [t for t in times if t <= start][-context:]
            right = [t for t in times if t >= start + step][:context]
            windows.append(np.stack([known[t] for t in left + right], axis=2))
        preds = net.forward(np.concatenate(windows, axis=0))[0]
        for n, start in enumerate(gaps):
            known[start + step // 2] = preds[n * batch:(n + 1) * batch]
        step //= 2
    return [known[t] for t in range(1, k)]


def time_recursive(
    net: Network,
    k: int,
    height: int,
    width: int,
    warmup: int = 3,
    runs: int = 20,
    seed: int = 0,
) -> BenchReport:
    """Time recursive_interpolate for factor k with a k=2 network"""
    _check_protocol(warmup, runs)
    rounds = recursive_rounds(k)
    x = bench_input(net.config, height, width, seed)
    times = _measure(lambda: recursive_interpolate(net, x, k), warmup, runs)
    report = BenchReport(
        k=k,
        context=net.config.context,
        height=height,
        width=width,
        widths=net.config.encoder_widths,
        dtype=net.config.dtype,
        mode="recursive",
        warmup=warmup,
        workers=get_num_workers(),
        forward_calls=rounds,
        times=times,
    )
    logger.info(f"Bench {report.summary()}")
    return report


def scaling_study(
    base_config: FlavrConfig,
    ks: Sequence[int],
    height: int,
    width: int,
    warmup: int = 3,
    runs: int = 20,
    seed: int = 0,
    recursive: bool = True,
) -> ScalingStudy:
    """
    Mean single-shot forward time per k relative to k=2.

    Only the prediction head depends on k, so every network shares the
    encoder and decoder widths of base_config. The recursive baseline reuses
    the k=2 network and is left empty for factors that are not powers of two.
    """
    ks = sorted(set(ks) | {2})
    study = ScalingStudy(height=height, width=width)
    with logfire.span("scaling study {ks} at {height}x{width}", ks=ks, height=height, width=width):
        singles = {}
        nets = {}
        for k in ks:
            config = FlavrConfig.from_mapping({**base_config.model_dump(), "k": k})
            nets[k] = build(config, seed)
            singles[k] = time_forward(nets[k], height, width, warmup, runs, seed)
            study.reports.append(singles[k])

        base = singles[2].mean
        for k in ks:
            recursive_time: Optional[float] = None
            if recursive:
                try:
                    report = time_recursive(nets[2], k, height, width, warmup, runs, seed)
                    study.reports.append(report)
                    recursive_time = report.mean
                except RecursiveBaselineError as e:
                    logger.info(f"Recursive baseline unavailable for k={k}: {e.message}")
            study.rows.append(ScalingRow(
                k=k,
                mean_time=singles[k].mean,
                ratio=singles[k].mean / base,
                recursive_time=recursive_time,
                recursive_ratio=recursive_time / base if recursive_time is not None else None,
            ))
    for row in study.rows:
        logger.info(f"k={row.k}: single-shot x{row.ratio:.2f}, recursive x{row.recursive_ratio or float('nan'):.2f}")
    return study
