import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vriwae.bounds import (
    NormalizedWeights,
    elbo_estimate,
    ess,
    normalized_weights,
    vr_iwae_estimate,
)
from vriwae.models import LogWeightBatch


def lwb(values, alpha):
    return LogWeightBatch(log_w=np.asarray(values, dtype=float), alpha=alpha)


def test_single_sample_recovers_elbo():
    for alpha in (0.0, 0.5, 0.9):
        assert vr_iwae_estimate(lwb([1.7], alpha)) == pytest.approx(1.7, abs=1e-12)


def test_constant_weights_give_zero():
    for alpha, n in [(0.0, 3), (0.5, 10)]:
        assert vr_iwae_estimate(lwb([0.0] * n, alpha)) == pytest.approx(0.0, abs=1e-12)


def test_two_point_example():
    est = vr_iwae_estimate(lwb([np.log(2.0), np.log(4.0)], 0.0))
    assert est == pytest.approx(np.log(3.0), abs=1e-12)


def test_elbo_estimate_is_plain_mean():
    assert elbo_estimate(lwb([1.0, 3.0], 0.3)) == pytest.approx(2.0)


def test_normalized_weights_examples():
    nw = normalized_weights(lwb([0.0, 0.0, 0.0], 0.0))
    assert np.allclose(nw.wbar, 1.0 / 3.0, atol=1e-15)

    nw = normalized_weights(lwb([np.log(2.0), 0.0], 0.5))
    r = np.sqrt(2.0)
    assert nw.wbar[0] == pytest.approx(r / (1 + r), abs=1e-12)
    assert nw.wbar[1] == pytest.approx(1 / (1 + r), abs=1e-12)

    # identical entries are uniform at any alpha
    nw = normalized_weights(lwb([-3.3] * 5, 0.7))
    assert np.allclose(nw.wbar, 0.2, atol=1e-15)


def test_ess_examples():
    assert ess(lwb([2.0] * 7, 0.3)) == pytest.approx(7.0, abs=1e-9)
    assert ess(lwb([100.0, 0.0, 0.0], 0.0)) == pytest.approx(1.0, abs=1e-10)
    r = np.sqrt(2.0)
    expect = 1.0 / ((r / (1 + r)) ** 2 + (1 / (1 + r)) ** 2)
    assert ess(lwb([np.log(2.0), 0.0], 0.5)) == pytest.approx(expect, abs=1e-9)


def test_normalized_weights_invariant_enforced():
    with pytest.raises(ValueError):
        NormalizedWeights(wbar=np.array([0.6, 0.6]), alpha=0.0)
    with pytest.raises(ValueError):
        NormalizedWeights(wbar=np.array([1.2, -0.2]), alpha=0.0)
    # underflow to exactly 0.0 is tolerated; strict positivity holds in exact
    # arithmetic but not in float64 when weights span ~745 nats
    NormalizedWeights(wbar=np.array([1.0, 0.0]), alpha=0.0)


def test_weights_positive_at_moderate_spread():
    nw = normalized_weights(lwb(np.linspace(-300, 300, 11), 0.0))
    assert np.all(nw.wbar > 0.0)


@given(
    logw=arrays(np.float64, st.integers(1, 40),
                elements=st.floats(-700.0, 700.0)),
    alpha=st.sampled_from([0.0, 0.3, 0.5, 0.9]),
)
@settings(max_examples=200, deadline=None)
def test_normalized_weights_stable_over_wide_range(logw, alpha):
    nw = normalized_weights(lwb(logw, alpha))
    assert np.all(np.isfinite(nw.wbar))
    assert nw.wbar.sum() == pytest.approx(1.0, abs=1e-12)
    e = ess(lwb(logw, alpha))
    assert 1.0 - 1e-9 <= e <= len(logw) + 1e-9


@given(
    logw=arrays(np.float64, st.integers(1, 30),
                elements=st.floats(-50.0, 50.0)),
    alpha=st.sampled_from([0.0, 0.25, 0.8]),
    c=st.floats(-100.0, 100.0),
)
@settings(max_examples=200, deadline=None)
def test_logsumexp_shift_invariance(logw, alpha, c):
    base = vr_iwae_estimate(lwb(logw, alpha))
    shifted = vr_iwae_estimate(lwb(logw + c, alpha))
    assert shifted - base == pytest.approx(c, abs=1e-9)


def test_paired_tightening_in_n():
    # same 2N samples: bound over first N vs over all 2N, R replicates
    rng = np.random.default_rng(314)
    reps, n = 10**4, 16
    theta, phi = 0.0, 1.0
    z = phi + rng.standard_normal((reps, 2 * n))
    logw = -0.5 * (phi - theta) ** 2 - (z - phi) * (phi - theta)
    for alpha in (0.0, 0.5):
        from vriwae.bounds import vr_iwae_from_logw

        small = vr_iwae_from_logw(logw[:, :n], alpha)
        big = vr_iwae_from_logw(logw, alpha)
        diff = big - small
        se = diff.std(ddof=1) / np.sqrt(reps)
        assert diff.mean() >= -3 * se


def test_paired_monotonicity_in_alpha():
    rng = np.random.default_rng(2718)
    reps, n = 10**4, 16
    theta, phi = 0.0, 1.0
    z = phi + rng.standard_normal((reps, n))
    logw = -0.5 * (phi - theta) ** 2 - (z - phi) * (phi - theta)
    from vriwae.bounds import vr_iwae_from_logw

    lo = vr_iwae_from_logw(logw, 0.7)
    hi = vr_iwae_from_logw(logw, 0.2)
    diff = hi - lo
    se = diff.std(ddof=1) / np.sqrt(reps)
    assert diff.mean() >= -3 * se
