"""Closed-form ground truth for the unit Gaussian pair N(theta, I) / N(phi, I).

With D = ||phi - theta||^2 and delta_k = phi_k - theta_k, the quantities the
estimator diagnostics are tested against are all available exactly:

    d/dphi_k VR          = -alpha * delta_k
    gamma^2              = (exp((1-alpha)^2 D) - 1) / (1 - alpha)
    d/dphi_k gamma^2     = 2 (1-alpha) delta_k exp((1-alpha)^2 D)
    log E[w^(1-alpha)]   = -alpha (1-alpha) D / 2

A constant-eta VIMCO baseline with ratio rho = eta / E[w^(1-alpha)] has the
1/N-scale asymptotic variance

    A(rho) = (alpha^2/(1-alpha)^2) e^((1-alpha)^2 D) (1 + (1-alpha)^2 delta_k^2)
             + rho (rho - 2 alpha) / (1-alpha)^2,

minimized at rho = alpha. The arithmetic-mean, geometric-mean and optimal
baselines correspond to rho = 1, exp(-(1-alpha)^2 D / 2) and alpha. At
alpha = 0 the optimal baseline instead has a 1/N^3-scale variance constant,
and at optimality (theta = phi) exact non-asymptotic variances are known for
every N. SNR predictions combine the mean expansion

    E[grad] = d VR - (1/2N) d gamma^2 + o(1/N)

with the appropriate variance scale (1/N, or 1/N^3 for the optimal baseline
at alpha = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianSetting",
    "grad_vr",
    "gamma_sq",
    "grad_gamma_sq",
    "log_norm_const",
    "eta_ratio",
    "asymptotic_variance",
    "snr_prediction",
    "optimality_variance",
]


@dataclass(frozen=True)
class GaussianSetting:
    """A (theta, phi, alpha) configuration plus the coordinate under study."""

    theta: np.ndarray
    phi: np.ndarray
    alpha: float
    coord: int = 0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        if theta.shape != phi.shape or theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta and phi must be matching finite vectors")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
            raise ValueError("theta and phi must be finite")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0,1)")
        if not 0 <= self.coord < theta.size:
            raise ValueError("coordinate index out of range")

    @property
    def dist_sq(self) -> float:
        return float(np.sum((self.phi - self.theta) ** 2))

    @property
    def delta_k(self) -> float:
        return float(self.phi[self.coord] - self.theta[self.coord])


def grad_vr(s: GaussianSetting) -> float:
    return -s.alpha * s.delta_k


def gamma_sq(s: GaussianSetting) -> float:
    oma = 1.0 - s.alpha
    return float(np.expm1(oma**2 * s.dist_sq)) / oma


def grad_gamma_sq(s: GaussianSetting) -> float:
    oma = 1.0 - s.alpha
    return 2.0 * oma * s.delta_k * np.exp(oma**2 * s.dist_sq)


def log_norm_const(s: GaussianSetting) -> float:
    """log E[w^(1-alpha)]; the INTER estimator's exact global baseline."""
    return -0.5 * s.alpha * (1.0 - s.alpha) * s.dist_sq


def eta_ratio(s: GaussianSetting, kind) -> float:
    """rho = eta / E[w^(1-alpha)] for a named baseline kind."""
    kind, ratio = _parse_kind(kind)
    if kind == "am":
        return 1.0
    if kind == "gm":
        return float(np.exp(-0.5 * (1.0 - s.alpha) ** 2 * s.dist_sq))
    if kind == "star":
        return s.alpha
    if kind == "const":
        return ratio
    raise ValueError(f"unknown baseline kind {kind!r}")


def _parse_kind(kind):
    if isinstance(kind, tuple):
        name, ratio = kind
        return name, float(ratio)
    return kind, None


def _a_eta(s: GaussianSetting, rho: float) -> float:
    oma = 1.0 - s.alpha
    lead = (s.alpha**2 / oma**2) * np.exp(oma**2 * s.dist_sq) * (1.0 + oma**2 * s.delta_k**2)
    return float(lead + rho * (rho - 2.0 * s.alpha) / oma**2)


def _psi_v_star_alpha0(s: GaussianSetting) -> float:
    d2 = s.delta_k**2
    big_d = s.dist_sq
    return float(
        (0.25 + 4.0 * d2) * np.exp(6.0 * big_d)
        - 6.0 * d2 * np.exp(4.0 * big_d)
        + (np.exp(big_d) - 0.25) * 4.0 * d2 * np.exp(2.0 * big_d)
    )


def asymptotic_variance(s: GaussianSetting, kind) -> float:
    """Leading variance constant: Var ~ A/N, except Var ~ A/N^3 for the
    optimal baseline at alpha = 0 (which routes to its dedicated constant)."""
    name, _ = _parse_kind(kind)
    if name == "star" and s.alpha == 0.0:
        return _psi_v_star_alpha0(s)
    return _a_eta(s, eta_ratio(s, kind))


def snr_prediction(s: GaussianSetting, kind, n: int) -> float:
    """Predicted |mean| / std at sample size n for the given baseline kind."""
    if n < 1:
        raise ValueError("n must be >= 1")
    num = abs(grad_vr(s) - grad_gamma_sq(s) / (2.0 * n))
    var = asymptotic_variance(s, kind)
    name, _ = _parse_kind(kind)
    scale = n**3 if (name == "star" and s.alpha == 0.0) else n
    return num / np.sqrt(var / scale)


def optimality_variance(n: int, alpha: float, kind) -> float:
    """Exact estimator variance per coordinate at optimality (theta = phi).

    AM and GM share (1/n) V(dlogq) with V(dlogq) = 1 for the unit Gaussian;
    the optimal baseline gets the strictly smaller
    (1/n) [1 + (n/(1-alpha)) log(1 - (1-alpha)/n)]^2.
    """
    name, _ = _parse_kind(kind)
    if n < 1:
        raise ValueError("n must be >= 1")
    if name in ("am", "gm"):
        return 1.0 / n
    if name == "star":
        oma = 1.0 - alpha
        if oma / n >= 1.0:
            raise ValueError("need (1-alpha)/n < 1 for the log to exist")
        bracket = 1.0 + (n / oma) * np.log1p(-oma / n)
        return bracket**2 / n
    raise ValueError(f"unknown baseline kind {name!r}")
