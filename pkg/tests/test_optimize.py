import numpy as np
import pytest

from vriwae.models import GaussianModel
from vriwae.optimize import (
    DEFAULT_ALPHA_LADDER,
    AnnealState,
    NonFiniteGradientError,
    SgaConfig,
    alpha_anneal_step,
    run_sga,
    sga_step,
)
from vriwae.rng import derive_rng


def gauss_setup(theta=0.0, phi=1.0):
    model = GaussianModel(dim=1)
    return model, model.params(theta, phi)


def test_anneal_state_validation():
    with pytest.raises(ValueError):
        AnnealState(alpha_ladder=(0.5, 0.9))  # rising
    with pytest.raises(ValueError):
        AnnealState(alpha_ladder=(1.0, 0.5))
    with pytest.raises(ValueError):
        AnnealState(alpha_ladder=(0.5,), ess_threshold_frac=0.0)


def test_alpha_anneal_steps_down_on_high_ess():
    st = AnnealState(alpha_ladder=(0.9, 0.5, 0.0), ess_threshold_frac=0.5)
    n = 100
    st2 = alpha_anneal_step(float(n), n, st)  # uniform weights, full ESS
    assert st2.alpha == 0.5
    st3 = alpha_anneal_step(1.0, n, st2)  # degenerate weights: no move
    assert st3.alpha == 0.5
    st4 = alpha_anneal_step(float(n), n, alpha_anneal_step(float(n), n, st2))
    assert st4.alpha == 0.0  # ladder exhausted, stays at the final rung
    with pytest.raises(ValueError):
        alpha_anneal_step(0.0, n, st)


def test_beta_ramp_schedule():
    st = AnnealState(alpha_ladder=(0.0,), likelihood_ramp=True)
    assert st.beta == pytest.approx(0.001)
    late = AnnealState(alpha_ladder=(0.0,), likelihood_ramp=True, step_index=200_000)
    assert late.beta == 1.0
    plain = AnnealState(alpha_ladder=(0.0,))
    assert plain.beta == 1.0


def test_sga_step_zero_estimator_keeps_params():
    model, p = gauss_setup(0.5, 0.5)
    zero = lambda lw, q, w, idx: np.zeros(2)
    st = AnnealState.fixed(0.0)
    p2, st2, rec = sga_step(model, p, zero, 16, st, 0.1, derive_rng(0, 1))
    assert np.array_equal(p2.values, p.values)
    assert st2.step_index == st.step_index + 1


def test_sga_step_zero_step_size_still_advances_anneal():
    model, p = gauss_setup()
    st = AnnealState(alpha_ladder=(0.9, 0.0), ess_threshold_frac=0.5)
    p2, st2, rec = sga_step(model, p, "am", 64, st, 0.0, derive_rng(0, 2))
    assert np.array_equal(p2.values, p.values)
    assert st2.step_index == 1


def test_negated_estimator_flips_every_update():
    model, p = gauss_setup()
    g = np.array([0.0, 0.37])
    plus = lambda lw, q, w, idx: g
    minus = lambda lw, q, w, idx: -g
    st = AnnealState.fixed(0.0)
    p_plus, _, _ = sga_step(model, p, plus, 16, st, 0.2, derive_rng(0, 3))
    p_minus, _, _ = sga_step(model, p, minus, 16, st, 0.2, derive_rng(0, 3))
    assert np.allclose(p_plus.values - p.values, -(p_minus.values - p.values))


def test_theta_block_is_frozen_for_the_gaussian_model():
    model, p = gauss_setup()
    ones = lambda lw, q, w, idx: np.ones(2)
    p2, _, _ = sga_step(model, p, ones, 16, AnnealState.fixed(0.0), 0.5, derive_rng(0, 4))
    assert p2.values[0] == p.values[0]  # theta untouched
    assert p2.values[1] == p.values[1] + 0.5


def test_non_finite_gradient_aborts_with_record():
    model, p = gauss_setup()
    bad = lambda lw, q, w, idx: np.array([np.nan, 1.0])
    with pytest.raises(NonFiniteGradientError) as err:
        sga_step(model, p, bad, 16, AnnealState.fixed(0.0), 0.1, derive_rng(0, 5))
    assert err.value.record is not None and err.value.record.iteration == 1


def test_run_sga_zero_iterations_keeps_initial_record():
    model, p = gauss_setup()
    traj = run_sga(SgaConfig(model=model, params0=p, iterations=0, n=8))
    assert traj.records == []
    assert np.array_equal(traj.initial.params, p.values)
    assert np.array_equal(traj.final_params, p.values)


def test_run_sga_deterministic_given_seed():
    model, p = gauss_setup()
    cfg = dict(model=model, params0=p, kind="am", n=32, iterations=40,
               step_size=0.05, seed=7, anneal=AnnealState.fixed(0.5))
    a = run_sga(SgaConfig(**cfg))
    b = run_sga(SgaConfig(**cfg))
    assert all(np.array_equal(x.params, y.params) for x, y in zip(a.records, b.records))


def test_alpha_monotone_beta_monotone_along_trajectory():
    model, p = gauss_setup(0.0, 2.0)
    cfg = SgaConfig(
        model=model, params0=p, kind="star", n=50, iterations=300,
        step_size=0.1, seed=3,
        anneal=AnnealState(alpha_ladder=DEFAULT_ALPHA_LADDER, likelihood_ramp=True),
    )
    traj = run_sga(cfg)
    alphas = [r.alpha for r in traj.records]
    betas = [r.beta for r in traj.records]
    assert all(a2 <= a1 for a1, a2 in zip(alphas, alphas[1:]))
    assert all(b2 >= b1 for b1, b2 in zip(betas, betas[1:]))
    assert all(0.0 <= a < 1.0 for a in alphas)
    assert all(0.0 < b <= 1.0 for b in betas)
    assert traj.terminal_alpha <= alphas[0]


def test_moderate_convergence_with_am_at_positive_alpha():
    model, p = gauss_setup(0.0, 1.0)
    cfg = SgaConfig(
        model=model, params0=p, kind="am", n=64, iterations=400,
        step_size=0.1, seed=11, anneal=AnnealState.fixed(0.5),
    )
    traj = run_sga(cfg)
    assert abs(traj.final_params[1] - 0.0) < 0.08


def test_inv_sqrt_schedule_and_grad_norm_stop():
    model, p = gauss_setup(0.0, 1.0)
    cfg = SgaConfig(
        model=model, params0=p, kind="am", n=64, iterations=2000,
        step_size=0.2, step_schedule="inv-sqrt", seed=13,
        anneal=AnnealState.fixed(0.5), grad_norm_tol=0.08, stop_window=20,
    )
    traj = run_sga(cfg)
    assert traj.stopped_early
    assert len(traj.records) < 2000


def test_trajectory_serialization(tmp_path):
    model, p = gauss_setup()
    traj = run_sga(SgaConfig(model=model, params0=p, kind="star", n=16,
                             iterations=5, step_size=0.1, seed=1))
    csv_path = tmp_path / "traj.csv"
    json_path = tmp_path / "traj.json"
    traj.to_csv(csv_path)
    traj.to_json(json_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["iter", "theta_0", "phi_0"]
    assert len(lines) == 1 + 1 + 5  # header, initial record, five steps

    import json

    payload = json.loads(json_path.read_text())
    assert len(payload["records"]) == 6
    assert payload["records"][0]["iter"] == 0


def test_star_prev_mode_runs():
    model, p = gauss_setup(0.0, 1.0)
    cfg = SgaConfig(
        model=model, params0=p, kind="star", star_mode="prev", n=32,
        iterations=30, step_size=0.05, seed=5, anneal=AnnealState.fixed(0.5),
    )
    traj = run_sga(cfg)
    assert len(traj.records) == 30
    assert np.isfinite(traj.final_params).all()
