import numpy as np
import pytest

from vriwae.models import (
    GaussianModel,
    LogWeightBatch,
    ParamVector,
    draw_batch,
    eval_log_weights,
    eval_scores,
)


@pytest.fixture
def gauss1():
    return GaussianModel(dim=1)


def test_draw_batch_deterministic(gauss1):
    p = gauss1.params(0.0, 0.0)
    a = draw_batch(gauss1, p, 3, 123)
    b = draw_batch(gauss1, p, 3, 123)
    assert np.array_equal(a.latents, b.latents)
    assert a.seed_record == b.seed_record == (123,)


def test_draw_batch_clt_band(gauss1):
    n = 10**5
    p = gauss1.params(0.0, 2.0)
    batch = draw_batch(gauss1, p, n, 9)
    assert abs(batch.latents.mean() - 2.0) < 4.0 / np.sqrt(n)


def test_draw_batch_rejects_bad_n(gauss1):
    with pytest.raises(ValueError):
        draw_batch(gauss1, gauss1.params(0.0, 0.0), 0, 1)


def test_param_vector_rejects_non_finite(gauss1):
    with pytest.raises(ValueError):
        gauss1.params(np.nan, 0.0)


def test_log_weight_values(gauss1):
    # log w = -||theta-phi||^2/2 - <z-phi, phi-theta>
    p = gauss1.params(0.0, 1.0)
    z = np.array([[1.0], [0.0]])
    lw = gauss1.log_weight(p, z)
    assert lw[0] == pytest.approx(-0.5, abs=1e-12)
    assert lw[1] == pytest.approx(0.5, abs=1e-12)
    p_eq = gauss1.params(1.3, 1.3)
    assert np.allclose(gauss1.log_weight(p_eq, z), 0.0, atol=1e-12)


def test_eval_log_weights_all_finite_and_alpha_checked(gauss1):
    p = gauss1.params(0.0, 1.0)
    batch = draw_batch(gauss1, p, 10, 3)
    lw = eval_log_weights(gauss1, p, batch, alpha=0.5)
    assert np.all(np.isfinite(lw.log_w)) and lw.alpha == 0.5
    with pytest.raises(ValueError):
        LogWeightBatch(log_w=np.zeros(3), alpha=1.0)
    with pytest.raises(ValueError):
        LogWeightBatch(log_w=np.array([0.0, -np.inf]), alpha=0.0)


class _VanishingModel(GaussianModel):
    def log_weight(self, params, z, beta=1.0, rng=None):
        lw = super().log_weight(params, z, beta=beta)
        return np.where(np.arange(lw.shape[-1]) == 1, -np.inf, lw)


def test_eval_log_weights_errors_on_vanishing_density():
    m = _VanishingModel(dim=1)
    p = m.params(0.0, 0.0)
    batch = draw_batch(m, p, 4, 5)
    with pytest.raises(ValueError, match="non-finite log weight"):
        eval_log_weights(m, p, batch, alpha=0.0)


def test_scores_closed_form(gauss1):
    p = gauss1.params(0.0, 1.0)
    z = np.array([[3.0], [1.0]])
    q = gauss1.q_scores(p, z)
    assert q[0, 0] == pytest.approx(2.0) and q[1, 0] == pytest.approx(0.0)
    w = gauss1.w_scores(p, z)
    # theta column then phi column; phi block is -q since p is phi-free
    assert w[0, 1] == pytest.approx(-2.0)
    assert w[0, 0] == pytest.approx(3.0)


def test_score_identity_monte_carlo(gauss1):
    m = 10**5
    p = gauss1.params(0.3, -0.7)
    batch = draw_batch(gauss1, p, m, 11)
    sc = eval_scores(gauss1, p, batch)
    mean = sc.q_scores.mean(axis=0)
    band = 4.0 * sc.q_scores.std(axis=0, ddof=1) / np.sqrt(m)
    assert np.all(np.abs(mean) <= band)


@pytest.mark.parametrize("dim", [1, 3])
def test_scores_match_finite_differences(dim):
    model = GaussianModel(dim=dim)
    rng = np.random.default_rng(17)
    h = 1e-5
    for _ in range(20):
        theta = rng.normal(size=dim)
        phi = rng.normal(size=dim)
        z = rng.normal(size=(1, dim))
        p = model.params(theta, phi)
        analytic = model.q_scores(p, z)[0]

        def log_q(phi_vec):
            return -0.5 * np.sum((z[0] - phi_vec) ** 2) - 0.5 * dim * np.log(2 * np.pi)

        for k in range(dim):
            e = np.zeros(dim)
            e[k] = h
            fd = (log_q(phi + e) - log_q(phi - e)) / (2 * h)
            assert analytic[k] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_score_matrix_shapes_and_phi_indices(gauss1):
    p = gauss1.params(0.0, 1.0)
    batch = draw_batch(gauss1, p, 6, 2)
    sc = eval_scores(gauss1, p, batch)
    assert sc.q_scores.shape == (6, 1)
    assert sc.w_scores.shape == (6, 2)
    assert np.array_equal(sc.phi_indices, [1])


def test_param_vector_blocks():
    p = ParamVector(values=np.array([1.0, 2.0, 3.0]), names=("a", "b", "c"), n_theta=1)
    assert np.array_equal(p.theta, [1.0])
    assert np.array_equal(p.phi, [2.0, 3.0])
    assert np.array_equal(p.phi_indices, [1, 2])


def test_tempered_weight_scales_target_only(gauss1):
    p = gauss1.params(0.5, -0.5)
    z = np.array([[0.2]])
    lw_half = gauss1.log_weight(p, z, beta=0.5)
    log_p = -0.5 * (0.2 - 0.5) ** 2 - 0.5 * np.log(2 * np.pi)
    log_q = -0.5 * (0.2 + 0.5) ** 2 - 0.5 * np.log(2 * np.pi)
    assert lw_half[0] == pytest.approx(0.5 * log_p - log_q, abs=1e-12)
