"""Probabilistic-model interface consumed by the gradient estimators.

A model bundles a fixed observation together with

* i.i.d. sampling from the variational density q(z),
* log importance weights  log w(z) = log p(x, z) - log q(z),
* closed-form score functions d/dpsi log q(z) and d/dpsi log w(z),

for a parameter vector split into a theta-block (generative parameters) and
a phi-block (variational parameters). Estimators only ever see arrays of
log weights and scores, never model internals, so a pseudo-marginal model
whose weight is itself a Monte Carlo estimate plugs in unchanged.

All model methods broadcast over leading batch axes: ``sample`` accepts a
shape tuple and the evaluation methods accept latents of shape
``(*batch, n, latent_dim)``, which is what makes replicated sweeps cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, runtime_checkable

import numpy as np

from .rng import derive_rng

__all__ = [
    "ParamVector",
    "SampleBatch",
    "LogWeightBatch",
    "ScoreMatrix",
    "Model",
    "GaussianModel",
    "draw_batch",
    "eval_log_weights",
    "eval_scores",
]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ParamVector:
    """Parameter vector with a fixed theta-block / phi-block partition.

    ``values[:n_theta]`` is the theta-block, the remainder is the phi-block.
    The partition is a property of the model and never changes across calls.
    """

    values: np.ndarray
    names: tuple[str, ...]
    n_theta: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("parameter values must be a 1-d vector")
        if len(self.names) != values.size:
            raise ValueError("names and values disagree on dimension")
        if not 0 <= self.n_theta <= values.size:
            raise ValueError("theta-block size out of range")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must all be finite")

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return self.values[: self.n_theta]

    @property
    def phi(self) -> np.ndarray:
        return self.values[self.n_theta :]

    @property
    def phi_indices(self) -> np.ndarray:
        return np.arange(self.n_theta, self.dim)

    def with_values(self, values) -> "ParamVector":
        return replace(self, values=np.asarray(values, dtype=float))


@dataclass(frozen=True)
class SampleBatch:
    """N i.i.d. latent draws plus the seed path that produced them.

    Re-drawing with the same ``seed_record`` reproduces the batch bit-exactly.
    """

    latents: np.ndarray  # (n, latent_dim)
    seed_record: tuple
    n: int

    def __post_init__(self):
        latents = np.asarray(self.latents, dtype=float)
        object.__setattr__(self, "latents", latents)
        if latents.shape[0] != self.n:
            raise ValueError("latents length disagrees with n")
        if self.n < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class LogWeightBatch:
    """Finite log importance weights log w(z_i) together with alpha."""

    log_w: np.ndarray  # (n,)
    alpha: float

    def __post_init__(self):
        log_w = np.asarray(self.log_w, dtype=float)
        object.__setattr__(self, "log_w", log_w)
        if log_w.ndim != 1 or log_w.size < 1:
            raise ValueError("log_w must be a non-empty 1-d array")
        if not np.all(np.isfinite(log_w)):
            raise ValueError("log weights must be finite (positive densities)")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0,1), got {self.alpha}")

    @property
    def n(self) -> int:
        return self.log_w.size


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-sample score values for one batch.

    ``q_scores[i, k]`` is d/dphi_k log q(z_i) for the k-th phi coordinate;
    ``w_scores[i, p]`` is d/dpsi_p log w(z_i) over the full parameter vector.
    For phi coordinates w_scores = (d log p) - q_scores, which reduces to
    -q_scores whenever p does not depend on phi; q never depends on theta.
    """

    q_scores: np.ndarray  # (n, b)
    w_scores: np.ndarray  # (n, dim)
    phi_indices: np.ndarray  # (b,) positions of phi coords in the full vector

    def __post_init__(self):
        q = np.asarray(self.q_scores, dtype=float)
        w = np.asarray(self.w_scores, dtype=float)
        idx = np.asarray(self.phi_indices, dtype=int)
        object.__setattr__(self, "q_scores", q)
        object.__setattr__(self, "w_scores", w)
        object.__setattr__(self, "phi_indices", idx)
        if q.ndim != 2 or w.ndim != 2 or q.shape[0] != w.shape[0]:
            raise ValueError("q_scores and w_scores must share the sample axis")
        if idx.size != q.shape[1]:
            raise ValueError("phi_indices must index every q_scores column")

    @property
    def n(self) -> int:
        return self.q_scores.shape[0]

    @property
    def dim(self) -> int:
        return self.w_scores.shape[1]


@runtime_checkable
class Model(Protocol):
    """Structural interface every estimator-facing model implements."""

    param_names: tuple[str, ...]
    n_theta: int
    latent_dim: int

    def sample(self, params: ParamVector, shape, rng) -> np.ndarray: ...

    def log_weight(self, params: ParamVector, z, beta=1.0, rng=None) -> np.ndarray: ...

    def q_scores(self, params: ParamVector, z) -> np.ndarray: ...

    def w_scores(self, params: ParamVector, z, beta=1.0) -> np.ndarray: ...

    def trainable_mask(self) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianModel:
    """Unit-covariance Gaussian pair: target N(z; theta, I), proposal N(z; phi, I).

    The observation is folded in with p(x) = 1, so w(z) = p(z|x)/q(z|x) and
    E[w] = 1 for every (theta, phi): the log weight is

        log w(z) = -||phi - theta||^2 / 2 - <z - phi, phi - theta>.

    theta is held fixed during optimization (only the phi-block is trainable),
    matching the synthetic experiments this model exists for. Tempering with
    beta raises the target density to the power beta inside the weight.
    """

    dim: int = 1

    @property
    def param_names(self) -> tuple[str, ...]:
        theta = tuple(f"theta_{k}" for k in range(self.dim))
        phi = tuple(f"phi_{k}" for k in range(self.dim))
        return theta + phi

    @property
    def n_theta(self) -> int:
        return self.dim

    @property
    def latent_dim(self) -> int:
        return self.dim

    def params(self, theta, phi) -> ParamVector:
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (self.dim,))
        phi = np.broadcast_to(np.asarray(phi, dtype=float), (self.dim,))
        return ParamVector(
            values=np.concatenate([theta, phi]),
            names=self.param_names,
            n_theta=self.dim,
        )

    def sample(self, params, shape, rng) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return params.phi + rng.standard_normal(shape + (self.dim,))

    def log_weight(self, params, z, beta=1.0, rng=None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        theta, phi = params.theta, params.phi
        log_p = -0.5 * np.sum((z - theta) ** 2, axis=-1) - self.dim * _HALF_LOG_2PI
        log_q = -0.5 * np.sum((z - phi) ** 2, axis=-1) - self.dim * _HALF_LOG_2PI
        return beta * log_p - log_q

    def q_scores(self, params, z) -> np.ndarray:
        return np.asarray(z, dtype=float) - params.phi

    def w_scores(self, params, z, beta=1.0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d_theta = beta * (z - params.theta)
        d_phi = -(z - params.phi)
        return np.concatenate([d_theta, d_phi], axis=-1)

    def trainable_mask(self) -> np.ndarray:
        # theta is fixed; only the variational block moves under SGA
        return np.concatenate([np.zeros(self.dim, bool), np.ones(self.dim, bool)])

    def log_norm_const(self, params, alpha: float) -> float:
        """Exact log E[w^(1-alpha)] = -alpha(1-alpha)||theta-phi||^2 / 2."""
        dist_sq = float(np.sum((params.theta - params.phi) ** 2))
        return -0.5 * alpha * (1.0 - alpha) * dist_sq


def _as_seed_record(rng_seed) -> tuple:
    if isinstance(rng_seed, tuple):
        return rng_seed
    return (int(rng_seed),)


def draw_batch(model: Model, params: ParamVector, n: int, rng_seed) -> SampleBatch:
    """Draw n i.i.d. latents from q; deterministic given ``rng_seed``.

    ``rng_seed`` is an integer root seed or a ``(root, *path)`` tuple naming a
    derived stream.
    """
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    record = _as_seed_record(rng_seed)
    rng = derive_rng(*record)
    latents = model.sample(params, (n,), rng)
    return SampleBatch(latents=latents, seed_record=record, n=n)


def eval_log_weights(
    model: Model, params: ParamVector, batch: SampleBatch, alpha: float, beta: float = 1.0
) -> LogWeightBatch:
    """Evaluate log w(z_i) for every sample in the batch.

    A model reporting a -inf (or non-finite) density anywhere is an error:
    the weights are assumed strictly positive, and clamping silently would
    corrupt every downstream estimator.
    """
    pf_rng = derive_rng(*batch.seed_record, "weight")
    log_w = np.asarray(model.log_weight(params, batch.latents, beta=beta, rng=pf_rng))
    bad = ~np.isfinite(log_w)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise ValueError(
            f"non-finite log weight at sample indices {idx.tolist()[:5]}"
            " (model density vanished at a drawn latent)"
        )
    return LogWeightBatch(log_w=log_w, alpha=alpha)


def eval_scores(
    model: Model, params: ParamVector, batch: SampleBatch, beta: float = 1.0
) -> ScoreMatrix:
    """Closed-form scores for every sample; no numerical differentiation."""
    q = np.asarray(model.q_scores(params, batch.latents))
    w = np.asarray(model.w_scores(params, batch.latents, beta=beta))
    phi_indices = np.arange(model.n_theta, len(model.param_names))
    return ScoreMatrix(q_scores=q, w_scores=w, phi_indices=phi_indices)
