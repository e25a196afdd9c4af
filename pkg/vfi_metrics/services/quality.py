"""
Full-reference image quality: PSNR and SSIM on [0, 1] images.

SSIM uses the common Gaussian form: 11x11 window, sigma 1.5, K1 = 0.01,
K2 = 0.03, dynamic range L = 1, valid-mode filtering (no padding), one value
per RGB channel averaged over channels.
"""
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import MetricShapeError, WindowTooLargeError

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0


def _check_pair(op: str, pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricShapeError(f"{op}: prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred, gt


def psnr(pred, gt) -> float:
    """
    Peak signal-to-noise ratio in dB with MAX = 1.

    The prediction is clamped to [0, 1] first. Identical images report
    PSNR_CAP instead of infinity.
    """
    pred, gt = _check_pair("psnr", pred, gt)
    return psnr_from_mse(float(np.mean((np.clip(pred, 0.0, 1.0) - gt) ** 2)))


def psnr_from_mse(mse: float) -> float:
    """PSNR in dB of a mean squared error, capped at PSNR_CAP"""
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * float(np.log10(DYNAMIC_RANGE ** 2 / mse)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2D Gaussian weights [size, size]"""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    profile = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    window = np.outer(profile, profile)
    return window / window.sum()


def _filter(image: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Weighted mean over every fully contained window position (valid mode)"""
    patches = sliding_window_view(image, window.shape)
    return np.tensordot(patches, window, axes=([2, 3], [0, 1]))


def _ssim_plane(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_x, mu_y = _filter(x, window), _filter(y, window)
    sigma_x = _filter(x * x, window) - mu_x ** 2
    sigma_y = _filter(y * y, window) - mu_y ** 2
    sigma_xy = _filter(x * y, window) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    denominator = (mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x + sigma_y + c2)
    return float(np.mean(numerator / denominator))


def ssim(pred, gt) -> float:
    """
    Structural similarity with an 11x11 Gaussian window (sigma 1.5),
    K1 = 0.01, K2 = 0.03 and L = 1.

    Args:
        pred: Image [C, H, W] (channels first) or [H, W]
        gt: Reference of the same shape

    Returns:
        Mean SSIM over window positions, averaged over channels
    """
    pred, gt = _check_pair("ssim", pred, gt)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    if pred.ndim != 3:
        raise MetricShapeError(f"ssim: expected [C, H, W] or [H, W], got {pred.shape}")
    height, width = pred.shape[1:]
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise WindowTooLargeError(f"ssim: image {height}x{width} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    pred = np.clip(pred, 0.0, 1.0)
    window = gaussian_window()
    return float(np.mean([_ssim_plane(p, g, window) for p, g in zip(pred, gt)]))
