"""Standard normal quantile function."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri


def inv_norm_cdf(p):
    """Quantile of the standard normal distribution.

    Thin validating wrapper around :func:`scipy.special.ndtri`, which is
    accurate to a few ulps across the open unit interval.

    Parameters
    ----------
    p : float or array_like
        Probabilities strictly inside ``(0, 1)``.

    Returns
    -------
    float or ndarray
        ``z`` with ``Phi(z) = p``.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    z = ndtri(arr)
    return float(z) if z.ndim == 0 else z
