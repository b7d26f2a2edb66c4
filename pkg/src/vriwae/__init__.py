"""Importance weighted variational inference without reparameterized gradients.

Score-function (REINFORCE) estimation of the VR-IWAE bound gradient with the
NAIVE, INTER and generalized VIMCO (AM / GM / constant-eta / star) baselines,
a closed-form Gaussian oracle used as ground truth, replicated SNR and
variance diagnostics, ESS-annealed stochastic gradient ascent, and a
pseudo-marginal stochastic-volatility model driven by a bootstrap particle
filter.
"""

from .bounds import (
    NormalizedWeights,
    elbo_estimate,
    ess,
    normalized_weights,
    vr_iwae_estimate,
)
from .estimators import (
    AM,
    GM,
    STAR_ALPHA_ZERO,
    STAR_LEAVE_ONE_OUT,
    Baseline,
    GradientEstimate,
    const_eta,
    eta_star_estimate,
    f_star_leave_one_out,
    inter_grad,
    make_estimator,
    naive_grad,
    star_prev_batch,
    vimco_grad,
    vimco_star_alpha0,
)
from .gaussian_oracle import GaussianSetting
from .models import (
    GaussianModel,
    LogWeightBatch,
    ParamVector,
    SampleBatch,
    ScoreMatrix,
    draw_batch,
    eval_log_weights,
    eval_scores,
)
from .rng import derive_rng

__version__ = "0.1.0"
