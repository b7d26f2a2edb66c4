"""REINFORCE gradient estimators for the VR-IWAE bound.

The bound's score-function gradient has two parts: a self-normalized term
``sum_j wbar_j d log w_j`` shared by every estimator, plus a score term that
couples ``sum_i d log q_i`` to the realized bound value. The estimators here
differ only in how they tame the score term:

* NAIVE    - no baseline (variance grows linearly in N; kept as a foil),
* INTER    - exact global baseline log E[w^(1-alpha)] (analytic models only),
* VIMCO    - per-sample baselines: the score of sample i is weighted by

      log(1 - wbar_i + f_{-i} / sum_j w_j^(1-alpha)),

  where f_{-i} >= 0 never depends on z_i. Arithmetic-mean (AM),
  geometric-mean (GM), constant-eta, and covariance-optimal (star)
  baselines are provided; the star baseline at alpha = 0 collapses to
  f_{-i} = 0 and has a dedicated closed form.

Everything is computed in the log domain. Leave-one-out quantities are built
from prefix/suffix scans, so entry i never touches sample i: perturbing z_i
leaves f_{-i} bit-identical while keeping the cost O(N), not O(N^2).

All kernels broadcast over leading batch axes: ``logw`` may be shaped
``(*batch, N)`` with scores ``(*batch, N, coords)``, which is what the
replicated diagnostics build on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import LogWeightBatch, ScoreMatrix

__all__ = [
    "Baseline",
    "GradientEstimate",
    "AM",
    "GM",
    "STAR_LEAVE_ONE_OUT",
    "STAR_ALPHA_ZERO",
    "const_eta",
    "star_prev_batch",
    "naive_grad",
    "inter_grad",
    "vimco_grad",
    "vimco_star_alpha0",
    "f_star_leave_one_out",
    "eta_star_estimate",
    "eta_star_vector",
    "elbo_reinforce_grad",
    "make_estimator",
    "ESTIMATOR_NAMES",
]

_VIMCO_KINDS = ("am", "gm", "const", "star-loo", "star-prev", "star0")
ESTIMATOR_NAMES = ("naive", "inter", "am", "gm", "star")

# centered score second moments below this are treated as degenerate
_SCORE_VAR_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Baseline:
    """Estimator kind tag, carrying the payload some kinds need.

    ``const`` carries a nonnegative eta; ``star-prev`` carries the
    per-coordinate eta estimates from the previous optimization batch;
    ``star-loo`` optionally carries a subsample size n0 < N used to form its
    leave-one-out statistics.
    """

    kind: str
    eta: float | None = None
    eta_vector: np.ndarray | None = None
    n0: int | None = None

    def __post_init__(self):
        if self.kind == "const":
            if self.eta is None or self.eta < 0.0:
                raise ValueError("const baseline needs a nonnegative eta")
        if self.kind == "star-prev":
            vec = np.asarray(self.eta_vector, dtype=float)
            if vec.ndim != 1 or np.any(vec < 0.0) or not np.all(np.isfinite(vec)):
                raise ValueError("star-prev needs a finite nonnegative eta vector")
            object.__setattr__(self, "eta_vector", vec)

    def __repr__(self):
        if self.kind == "const":
            return f"Baseline(const, eta={self.eta})"
        return f"Baseline({self.kind})"


AM = Baseline("am")
GM = Baseline("gm")
STAR_LEAVE_ONE_OUT = Baseline("star-loo")
STAR_ALPHA_ZERO = Baseline("star0")


def const_eta(eta: float) -> Baseline:
    return Baseline("const", eta=float(eta))


def star_prev_batch(eta_vector) -> Baseline:
    return Baseline("star-prev", eta_vector=np.asarray(eta_vector, dtype=float))


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """One realized estimator output over the full parameter vector."""

    grad: np.ndarray
    kind: Baseline
    n: int
    alpha: float
    aux: np.ndarray | None = None

    def __post_init__(self):
        grad = np.asarray(self.grad, dtype=float)
        object.__setattr__(self, "grad", grad)
        if not np.all(np.isfinite(grad)):
            raise ValueError("gradient estimate contains non-finite entries")


# ---------------------------------------------------------------------------
# leave-one-out scans
# ---------------------------------------------------------------------------


def _loo_logsumexp(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Leave-one-out logsumexp: out[i] = LSE of v with entry i removed.

    Prefix/suffix running logaddexp scans; out[i] never reads v[i], so
    perturbing one entry leaves its own leave-one-out value bit-identical.
    """
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    pad = np.full(v.shape[:-1] + (1,), -np.inf)
    pref = np.concatenate([pad, np.logaddexp.accumulate(v[..., :-1], axis=-1)], axis=-1)
    rev = np.logaddexp.accumulate(v[..., :0:-1], axis=-1)[..., ::-1]
    suf = np.concatenate([rev, pad], axis=-1)
    return np.moveaxis(np.logaddexp(pref, suf), -1, axis)


def _loo_sum(c: np.ndarray, axis: int = -1) -> np.ndarray:
    """Leave-one-out plain sum via prefix/suffix cumulative sums."""
    c = np.moveaxis(np.asarray(c, dtype=float), axis, -1)
    pad = np.zeros(c.shape[:-1] + (1,))
    pref = np.concatenate([pad, np.cumsum(c[..., :-1], axis=-1)], axis=-1)
    suf = np.concatenate([np.cumsum(c[..., :0:-1], axis=-1)[..., ::-1], pad], axis=-1)
    return np.moveaxis(pref + suf, -1, axis)


# ---------------------------------------------------------------------------
# array kernels (batch axes in front)
# ---------------------------------------------------------------------------


def _weight_parts(logw, alpha):
    v = (1.0 - alpha) * np.asarray(logw, dtype=float)
    lse = logsumexp(v, axis=-1)
    wbar = np.exp(v - lse[..., None])
    return v, lse, wbar


def _scatter_phi(first, second_phi, phi_indices):
    grad = np.array(first, copy=True)
    grad[..., phi_indices] += second_phi
    return grad


def naive_grad_arrays(logw, q_scores, w_scores, phi_indices, alpha, log_base=0.0):
    """NAIVE estimator; ``log_base`` subtracts a global baseline (INTER)."""
    v, lse, wbar = _weight_parts(logw, alpha)
    n = np.asarray(logw).shape[-1]
    first = np.einsum("...n,...np->...p", wbar, w_scores)
    coef = ((lse - np.log(n)) - log_base) / (1.0 - alpha)
    second = coef[..., None] * np.sum(q_scores, axis=-2)
    return _scatter_phi(first, second, phi_indices)


def _log_f_star_loo(v, q_scores, alpha, n0=None):
    """log f_{-i} for the covariance-optimal baseline, per phi coordinate.

    Returns an (..., N, b) array of log baselines. Statistics are formed on
    the first n0 samples (default all N): samples inside that block get true
    leave-one-out statistics, samples outside reuse the full block sums.
    Negative covariance estimates clamp to zero and near-degenerate score
    variances fall back to eta = 0, both of which surface here as -inf.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(q_scores, dtype=float)
    n = v.shape[-1]
    n0 = n if n0 is None else int(n0)
    if not 3 <= n0 <= n:
        raise ValueError(f"star baseline needs 3 <= n0 <= N, got n0={n0}, N={n}")

    vb = v[..., :n0]
    sb = s[..., :n0, :]
    # one u-scale per batch row; zero (bit-exact leave-one-out) unless the
    # weights are extreme enough that exp(v) would overflow
    m = np.max(vb, axis=-1, keepdims=True)
    shift = np.where(m > 600.0, m, 0.0)
    u = np.exp(vb - shift)  # (..., n0)

    us = u[..., None] * sb
    comps = {
        (1, 0): u[..., None],
        (1, 1): us,
        (1, 2): us * sb,
        (0, 1): sb,
        (0, 2): sb * sb,
    }

    def stats(i_inside):
        if i_inside:
            return {k: _loo_sum(c, axis=-2) / (n0 - 1) for k, c in comps.items()}
        return {k: np.sum(c, axis=-2, keepdims=True) / n0 for k, c in comps.items()}

    def f_from(a):
        with np.errstate(divide="ignore", invalid="ignore"):
            num = a[(1, 2)] - np.where(a[(1, 0)] > 0.0, a[(1, 1)] ** 2 / a[(1, 0)], 0.0)
            den = a[(0, 2)] - a[(0, 1)] ** 2
            f = np.where(den > _SCORE_VAR_FLOOR, alpha * num / den, 0.0)
        return np.clip(f, 0.0, None)

    f_in = f_from(stats(True))  # (..., n0, b)
    with np.errstate(divide="ignore"):
        log_f_in = np.log(f_in) + shift[..., None]
        if n0 == n:
            return log_f_in
        f_out = f_from(stats(False))  # (..., 1, b)
        log_f_out = np.log(f_out) + shift[..., None]
    tail = np.broadcast_to(log_f_out, log_f_in.shape[:-2] + (n - n0,) + log_f_in.shape[-1:])
    return np.concatenate([log_f_in, tail], axis=-2)


def vimco_grad_arrays(logw, q_scores, w_scores, phi_indices, alpha, kind: Baseline):
    """Generalized VIMCO estimator on raw arrays; see module docstring."""
    logw = np.asarray(logw, dtype=float)
    n = logw.shape[-1]
    if kind.kind not in _VIMCO_KINDS:
        raise ValueError(f"not a VIMCO baseline kind: {kind.kind!r}")
    if kind.kind in ("am", "gm") and n < 2:
        raise ValueError(f"{kind.kind} baseline needs N >= 2 (leave-one-out mean)")
    if kind.kind == "star0":
        if alpha != 0.0:
            raise ValueError("star0 baseline is only valid at alpha = 0")
        if n < 2:
            raise ValueError("star0 baseline needs N >= 2")

    v, lse, wbar = _weight_parts(logw, alpha)
    first = np.einsum("...n,...np->...p", wbar, w_scores)
    loo = _loo_logsumexp(v)

    per_coord = False
    if kind.kind == "am":
        log_f = loo - np.log(n - 1)
    elif kind.kind == "gm":
        log_f = _loo_sum(v) / (n - 1)
    elif kind.kind in ("const", "star0"):
        eta = 0.0 if kind.kind == "star0" else kind.eta
        with np.errstate(divide="ignore"):
            log_f = np.full(logw.shape, np.log(eta))
    elif kind.kind == "star-prev":
        if kind.eta_vector.size != len(phi_indices):
            raise ValueError("star-prev eta vector length must match phi block")
        with np.errstate(divide="ignore"):
            log_f = np.broadcast_to(np.log(kind.eta_vector), logw.shape + kind.eta_vector.shape)
        per_coord = True
    else:  # star-loo
        log_f = _log_f_star_loo(v, q_scores, alpha, n0=kind.n0)
        per_coord = True

    if per_coord:
        log_arg = np.logaddexp(loo[..., None], log_f) - lse[..., None, None]
        if not np.all(np.isfinite(log_arg)):
            raise ValueError("VIMCO baseline argument not strictly positive")
        second = -np.einsum("...nb,...nb->...b", log_arg, q_scores) / (1.0 - alpha)
    else:
        log_arg = np.logaddexp(loo, log_f) - lse[..., None]
        if not np.all(np.isfinite(log_arg)):
            raise ValueError("VIMCO baseline argument not strictly positive")
        second = -np.einsum("...n,...nb->...b", log_arg, q_scores) / (1.0 - alpha)
    return _scatter_phi(first, second, phi_indices)


def elbo_grad_arrays(logw, q_scores, w_scores, phi_indices, loo_baseline=True):
    """ELBO (alpha -> 1 code path) REINFORCE gradient with per-sample baselines.

    g = mean_j [ d log w_j + d log q_j * (log w_j - b_{-j}) ], with b_{-j} the
    leave-one-out mean of the log weights; the baseline is independent of z_j
    so the estimator stays unbiased for the ELBO gradient.
    """
    logw = np.asarray(logw, dtype=float)
    n = logw.shape[-1]
    first = np.mean(w_scores, axis=-2)
    if loo_baseline and n >= 2:
        signal = logw - _loo_sum(logw) / (n - 1)
    else:
        signal = logw
    second = np.einsum("...n,...nb->...b", signal, q_scores) / n
    return _scatter_phi(first, second, phi_indices)


# ---------------------------------------------------------------------------
# typed single-batch operations
# ---------------------------------------------------------------------------


def naive_grad(logw: LogWeightBatch, scores: ScoreMatrix) -> GradientEstimate:
    """Plain unbiased REINFORCE estimator of the bound gradient (no baseline)."""
    grad = naive_grad_arrays(
        logw.log_w, scores.q_scores, scores.w_scores, scores.phi_indices, logw.alpha
    )
    return GradientEstimate(grad=grad, kind=Baseline("naive"), n=logw.n, alpha=logw.alpha)


def inter_grad(logw: LogWeightBatch, scores: ScoreMatrix, log_norm_const: float) -> GradientEstimate:
    """NAIVE with the exact global baseline log E[w^(1-alpha)] subtracted.

    Only usable when the caller can supply log E[w^(1-alpha)] exactly
    (analytic models); remains unbiased for the bound gradient.
    """
    grad = naive_grad_arrays(
        logw.log_w,
        scores.q_scores,
        scores.w_scores,
        scores.phi_indices,
        logw.alpha,
        log_base=float(log_norm_const),
    )
    return GradientEstimate(grad=grad, kind=Baseline("inter"), n=logw.n, alpha=logw.alpha)


def vimco_grad(logw: LogWeightBatch, scores: ScoreMatrix, kind: Baseline) -> GradientEstimate:
    """Generalized VIMCO estimator with the requested per-sample baseline."""
    grad = vimco_grad_arrays(
        logw.log_w, scores.q_scores, scores.w_scores, scores.phi_indices, logw.alpha, kind
    )
    return GradientEstimate(grad=grad, kind=kind, n=logw.n, alpha=logw.alpha)


def vimco_star_alpha0(logw: LogWeightBatch, scores: ScoreMatrix) -> GradientEstimate:
    """Covariance-optimal estimator at alpha = 0, direct closed form:

        sum_j [ wbar_j d log w_j - log(1 - wbar_j) d log q_j ].

    Algebraically identical to ``vimco_grad`` with a constant eta = 0
    baseline; transcribed independently as a cross-check.
    """
    if logw.alpha != 0.0:
        raise ValueError("closed form requires alpha = 0")
    if logw.n < 2:
        raise ValueError("needs N >= 2: log(1 - wbar) diverges at N = 1")
    _, lse, wbar = _weight_parts(logw.log_w, 0.0)
    first = np.einsum("n,np->p", wbar, scores.w_scores)
    log_one_minus = _loo_logsumexp(logw.log_w) - lse
    second = -np.einsum("n,nb->b", log_one_minus, scores.q_scores)
    grad = _scatter_phi(first, second, scores.phi_indices)
    return GradientEstimate(grad=grad, kind=STAR_ALPHA_ZERO, n=logw.n, alpha=0.0)


def f_star_leave_one_out(
    logw: LogWeightBatch, scores: ScoreMatrix, coordinate: int, n0: int | None = None
) -> np.ndarray:
    """Leave-one-out covariance-optimal baselines f_{-i} for one phi coordinate.

    ``coordinate`` indexes the phi block (a column of q_scores). All N values
    are returned; at alpha = 0 the alpha prefactor makes them identically 0.
    """
    if logw.n < 3:
        raise ValueError("leave-one-out sample variance needs N >= 3")
    v = (1.0 - logw.alpha) * logw.log_w
    log_f = _log_f_star_loo(v, scores.q_scores[:, [coordinate]], logw.alpha, n0=n0)
    return np.exp(log_f[:, 0])


def eta_star_estimate(
    prev_logw: LogWeightBatch, prev_scores: ScoreMatrix, coordinate: int, n0: int | None = None
) -> float:
    """Plug-in estimate of the optimal constant baseline eta for one coordinate.

    Sample-moment version of cov(alpha u [s - E(u s)/E(u)], s) / var(s) with
    u = w^(1-alpha), clamped at 0; a score variance below 1e-12 returns 0.
    """
    return float(eta_star_vector(prev_logw, prev_scores, n0=n0)[coordinate])


def eta_star_vector(
    prev_logw: LogWeightBatch, prev_scores: ScoreMatrix, n0: int | None = None
) -> np.ndarray:
    """Per-phi-coordinate eta estimates from a (previous) batch."""
    alpha = prev_logw.alpha
    v = (1.0 - alpha) * prev_logw.log_w
    s = prev_scores.q_scores
    m = n0 if n0 is not None else v.size
    if not 1 <= m <= v.size:
        raise ValueError("n0 out of range")
    v, s = v[:m], s[:m, :]
    shift = max(float(np.max(v)) - 600.0, 0.0)
    u = np.exp(v - shift)
    m10 = float(np.mean(u))
    m11 = np.mean(u[:, None] * s, axis=0)
    m12 = np.mean(u[:, None] * s * s, axis=0)
    m01 = np.mean(s, axis=0)
    m02 = np.mean(s * s, axis=0)
    den = m02 - m01**2
    num = m12 - (m11**2 / m10 if m10 > 0.0 else 0.0)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        eta = np.where(den > _SCORE_VAR_FLOOR, alpha * num / den * np.exp(shift), 0.0)
    return np.clip(eta, 0.0, None)


def elbo_reinforce_grad(
    logw: LogWeightBatch, scores: ScoreMatrix, loo_baseline: bool = True
) -> GradientEstimate:
    """Unbiased REINFORCE estimator of the ELBO gradient (alpha -> 1 path)."""
    grad = elbo_grad_arrays(
        logw.log_w, scores.q_scores, scores.w_scores, scores.phi_indices,
        loo_baseline=loo_baseline,
    )
    return GradientEstimate(grad=grad, kind=Baseline("elbo"), n=logw.n, alpha=1.0)


# ---------------------------------------------------------------------------
# name-based dispatch used by diagnostics, the optimizer and the CLI
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EstimatorFn:
    """Named estimator closure over raw arrays, broadcasting over batch axes."""

    name: str
    fn: object

    def __call__(self, logw, q_scores, w_scores, phi_indices):
        return self.fn(logw, q_scores, w_scores, phi_indices)


def make_estimator(
    name: str,
    alpha: float,
    model=None,
    params=None,
    star_mode: str = "loo",
    n0: int | None = None,
) -> EstimatorFn:
    """Resolve an estimator name to an array kernel.

    ``star`` dispatches on alpha: the dedicated closed form at alpha = 0,
    otherwise the leave-one-out baseline (``star_mode='loo'``). ``inter``
    needs a model exposing the exact log E[w^(1-alpha)].
    """
    if name == "naive":
        fn = lambda lw, q, w, idx: naive_grad_arrays(lw, q, w, idx, alpha)
    elif name == "inter":
        if model is None or not hasattr(model, "log_norm_const"):
            raise ValueError("inter needs a model with an exact log E[w^(1-alpha)]")
        base = model.log_norm_const(params, alpha)
        fn = lambda lw, q, w, idx: naive_grad_arrays(lw, q, w, idx, alpha, log_base=base)
    elif name in ("am", "gm"):
        kind = AM if name == "am" else GM
        fn = lambda lw, q, w, idx: vimco_grad_arrays(lw, q, w, idx, alpha, kind)
    elif name == "star":
        if alpha == 0.0:
            kind = STAR_ALPHA_ZERO
        elif star_mode == "loo":
            kind = Baseline("star-loo", n0=n0)
        else:
            raise ValueError("star-prev requires an explicit Baseline with eta vector")
        fn = lambda lw, q, w, idx: vimco_grad_arrays(lw, q, w, idx, alpha, kind)
    elif name == "elbo":
        fn = lambda lw, q, w, idx: elbo_grad_arrays(lw, q, w, idx)
    else:
        raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}")
    return EstimatorFn(name=name, fn=fn)
