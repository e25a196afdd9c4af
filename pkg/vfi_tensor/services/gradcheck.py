"""
Central finite-difference utilities for checking analytic gradients.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


def sample_indices(shape: Sequence[int], count: int, rng: np.random.Generator) -> List[Index]:
    """Up to count distinct multi-indices of an array, all of them if it is small"""
    size = int(np.prod(shape))
    if size <= count:
        return [tuple(int(i) for i in idx) for idx in np.ndindex(*shape)]
    flat = rng.choice(size, size=count, replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in sorted(flat)]


def numeric_gradient(
    fn: Callable[[], float],
    array: np.ndarray,
    h: float = 1e-5,
    indices: Optional[List[Index]] = None,
    signature: Optional[Callable[[], List[np.ndarray]]] = None,
) -> np.ndarray:
    """
    Central-difference derivative of a scalar function w.r.t. entries of array.

    The array is perturbed in place and restored after every probe.

    Args:
        fn: Re-evaluates the scalar objective from the current array contents
        array: Buffer to perturb
        h: Step size
        indices: Entries to probe (all entries by default)
        signature: Optional callable returning the activation pattern after fn;
            probes whose +h or -h pattern differs from the unperturbed one
            straddle a kink and are reported as NaN

    Returns:
        Array of derivatives, one per probed index
    """
    if indices is None:
        indices = [tuple(idx) for idx in np.ndindex(*array.shape)]
    baseline = None
    if signature is not None:
        fn()
        baseline = [mask.copy() for mask in signature()]

    out = np.empty(len(indices), dtype=np.float64)
    for n, idx in enumerate(indices):
        saved = array[idx]
        array[idx] = saved + h
        plus = fn()
        crossed = baseline is not None and not _same_pattern(baseline, signature())
        array[idx] = saved - h
        minus = fn()
        crossed = crossed or (baseline is not None and not _same_pattern(baseline, signature()))
        array[idx] = saved
        out[n] = np.nan if crossed else (plus - minus) / (2.0 * h)
    skipped = int(np.isnan(out).sum())
    if skipped:
        logger.debug(f"Skipped {skipped} probe(s) straddling an activation kink")
    return out


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), NaN probes propagate"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def max_relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """Largest relative error ignoring kink-straddling (NaN) probes"""
    errors = relative_error(analytic, numeric, floor)
    errors = errors[~np.isnan(errors)]
    return float(errors.max()) if errors.size else 0.0
