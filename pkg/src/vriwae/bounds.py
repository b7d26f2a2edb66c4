"""Monte Carlo evaluation of the ELBO / IWAE / VR-IWAE bound family.

All weight arithmetic happens in the log domain with max-shift stabilization:
an N-sample bound estimate is

    (1/(1-alpha)) * [logsumexp((1-alpha) * log_w) - log N],

which recovers the IWAE bound at alpha = 0 and a single ELBO sample at N = 1.
The alpha -> 1 ELBO limit is a separate code path (``elbo_estimate``), never
approximated by alpha = 1 - eps: the 1/(1-alpha) prefactor is singular there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import LogWeightBatch

__all__ = [
    "NormalizedWeights",
    "vr_iwae_estimate",
    "elbo_estimate",
    "normalized_weights",
    "ess",
    "vr_iwae_from_logw",
    "normalized_from_logw",
    "ess_from_logw",
]


@dataclass(frozen=True)
class NormalizedWeights:
    """Self-normalized weights wbar_i = w_i^(1-alpha) / sum_j w_j^(1-alpha).

    Mathematically every entry is strictly positive; in float64 an entry whose
    log weight trails the maximum by more than ~745 nats underflows to exactly
    0.0, which is accepted (never NaN/Inf, and the sum stays 1).
    """

    wbar: np.ndarray
    alpha: float

    def __post_init__(self):
        wbar = np.asarray(self.wbar, dtype=float)
        object.__setattr__(self, "wbar", wbar)
        if not np.all(np.isfinite(wbar)) or np.any(wbar < 0.0):
            raise ValueError("normalized weights must be finite and nonnegative")
        if abs(float(wbar.sum()) - 1.0) > 1e-12:
            raise ValueError("normalized weights must sum to 1 within 1e-12")


def vr_iwae_from_logw(log_w, alpha: float, axis: int = -1) -> np.ndarray:
    """Bound estimate from raw log weights; broadcasts over leading axes."""
    log_w = np.asarray(log_w, dtype=float)
    n = log_w.shape[axis]
    return (logsumexp((1.0 - alpha) * log_w, axis=axis) - np.log(n)) / (1.0 - alpha)


def normalized_from_logw(log_w, alpha: float, axis: int = -1) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    v = (1.0 - alpha) * log_w
    v = v - np.max(v, axis=axis, keepdims=True)
    u = np.exp(v)
    return u / np.sum(u, axis=axis, keepdims=True)


def ess_from_logw(log_w, alpha: float, axis: int = -1) -> np.ndarray:
    """Effective sample size 1 / sum_i wbar_i^2, a value in [1, N]."""
    v = (1.0 - alpha) * np.asarray(log_w, dtype=float)
    return np.exp(2.0 * logsumexp(v, axis=axis) - logsumexp(2.0 * v, axis=axis))


def vr_iwae_estimate(logw: LogWeightBatch) -> float:
    """One unbiased sample of the N-sample VR-IWAE bound."""
    return float(vr_iwae_from_logw(logw.log_w, logw.alpha))


def elbo_estimate(logw: LogWeightBatch) -> float:
    """N-sample ELBO estimate, the alpha -> 1 limit of the bound family."""
    return float(np.mean(logw.log_w))


def normalized_weights(logw: LogWeightBatch) -> NormalizedWeights:
    return NormalizedWeights(
        wbar=normalized_from_logw(logw.log_w, logw.alpha), alpha=logw.alpha
    )


def ess(logw: LogWeightBatch) -> float:
    return float(ess_from_logw(logw.log_w, logw.alpha))
