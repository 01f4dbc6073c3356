"""Reconstruction quality and compression-efficiency measures.

Two error figures are computed side by side: plain per-pixel MSE and a
mean-normalized MSE that divides by the product of the two image means.
PSNR always derives from plain MSE with peak value 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeanError, ShapeMismatchError

PSNR_CAP_DB = 99.0
DEGENERATE_MEAN_TOLERANCE = 1e-12


@dataclass(frozen=True)
class QualityReport:
    normalized_mse: float
    plain_mse: float
    psnr_db: float
    compression_ratio: float


def _check_pair(predicted, original):
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(original, dtype=float)
    if p.shape != m.shape:
        raise ShapeMismatchError(f"shape mismatch: {p.shape} vs {m.shape}")
    return p, m


def plain_mse(predicted, original):
    """Mean squared error per element."""
    p, m = _check_pair(predicted, original)
    return float(np.mean((p - m) ** 2))


def normalized_mse(predicted, original):
    """MSE divided by the product of the two sample means.

    Raises DegenerateMeanError when ``|mean(P) * mean(M)|`` is below
    tolerance (for example two all-black images), instead of silently
    returning zero or infinity.
    """
    p, m = _check_pair(predicted, original)
    denom = float(p.mean()) * float(m.mean())
    if abs(denom) < DEGENERATE_MEAN_TOLERANCE:
        raise DegenerateMeanError(
            f"mean product {denom:.3e} too small to normalize the error"
        )
    return float(np.mean((p - m) ** 2) / denom)


def psnr(predicted, original):
    """Peak signal-to-noise ratio in dB for peak value 1, capped at 99 dB."""
    mse = plain_mse(predicted, original)
    if mse <= 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def compression_ratio(latent_length, width, height, channels):
    """Latent size over pixel count, as a fraction in (0, 1]."""
    for name, value in (
        ("latent_length", latent_length),
        ("width", width),
        ("height", height),
        ("channels", channels),
    ):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    return latent_length / (width * height * channels)


def quality_report(predicted, original, latent_length):
    """Bundle all measures for one reconstructed image."""
    p, m = _check_pair(predicted, original)
    h, w = p.shape[0], p.shape[1]
    c = p.shape[2] if p.ndim == 3 else 1
    return QualityReport(
        normalized_mse=normalized_mse(p, m),
        plain_mse=plain_mse(p, m),
        psnr_db=psnr(p, m),
        compression_ratio=compression_ratio(latent_length, w, h, c),
    )
