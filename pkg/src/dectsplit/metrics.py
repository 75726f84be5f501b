"""Reconstruction quality metric."""

from __future__ import annotations

import numpy as np


def error_metric(x, x_star, roi=None):
    """Normalized l2 distance in decibels: 20 log10(||x - x*|| / ||x*||).

    Returns -inf when x equals the reference exactly. An optional boolean
    ROI mask restricts both norms to the masked pixels.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise ValueError("shape mismatch between image and reference")
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        x = x[roi]
        x_star = x_star[roi]
    ref = float(np.linalg.norm(x_star))
    if ref == 0.0:
        raise ValueError("reference image has zero norm")
    num = float(np.linalg.norm(x - x_star))
    if num == 0.0:
        return float("-inf")
    return 20.0 * np.log10(num / ref)
