"""Config-driven experiment runner.

Subcommands: ``snr-sweep``, ``variance-sweep``, ``optimize``,
``gaussian-verify``, ``ssm-fit``, plus ``run --config FILE`` to replay a JSON
config. Every invocation writes its artifacts into a fresh output directory
together with a ``manifest.json`` (config echo, library version, seed,
wall-clock). Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .diagnostics import fit_loglog_slope, measure_variance_curve, snr_sweep
from .estimators import ESTIMATOR_NAMES
from .gaussian_oracle import GaussianSetting, optimality_variance, snr_prediction
from .models import GaussianModel
from .optimize import DEFAULT_ALPHA_LADDER, AnnealState, SgaConfig, run_sga
from .rng import derive_rng
from .svol import (
    DEFAULT_DATA_PARAMS,
    PseudoMarginalSvModel,
    SvParams,
    default_synthetic_series,
    simulate_sv,
)

SUBCOMMANDS = ("snr-sweep", "variance-sweep", "optimize", "gaussian-verify", "ssm-fit")
_KINDS = ESTIMATOR_NAMES + ("elbo",)


class ConfigError(Exception):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentConfig:
    subcommand: str
    model: str = "gaussian"
    theta: float = 0.0
    phi: float = 1.0
    dim: int = 1
    data: str | None = None
    simulate: bool = False
    estimators: tuple = ("star",)
    alphas: tuple = (0.0,)
    n_grid: tuple = (100,)
    n: int = 100
    replicates: int = 1000
    seed: int = 0
    seeds: int = 1
    alpha_ladder: tuple | None = None
    ess_threshold: float = 0.5
    likelihood_ramp: bool = False
    iterations: int = 1000
    step_size: float = 0.1
    step_schedule: str = "constant"
    grad_norm_tol: float | None = None
    particles: int = 64
    coordinate: int | None = None
    share_star_mean: bool = False
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str = "out"
    tolerance: float = 0.25


def parse_ngrid(text: str):
    """Either a comma list (``5,10,20``) or the shorthand ``a x b^i..j``."""
    text = text.strip()
    if "x" in text and "^" in text:
        base_part, exp_part = text.split("x", 1)
        radix_part, rng_part = exp_part.split("^", 1)
        lo, hi = rng_part.split("..", 1)
        a, b = int(base_part), int(radix_part)
        return tuple(a * b**j for j in range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(","))


def _parse_floats(text):
    return tuple(float(v) for v in str(text).split(","))


def _parse_names(text):
    return tuple(s.strip() for s in str(text).split(","))


def validate_config(payload) -> ExperimentConfig:
    """Build and structurally validate a config, reporting all errors at once.

    ``payload`` is a dict (parsed JSON or collected CLI flags); string forms
    of list-valued fields are accepted.
    """
    errors = []
    if isinstance(payload, str):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as e:
            raise ConfigError([f"config: not valid JSON ({e})"]) from None
    payload = dict(payload)

    sub = payload.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError([f"subcommand: must be one of {SUBCOMMANDS}, got {sub!r}"])

    for key, parser in (
        ("alphas", _parse_floats),
        ("estimators", _parse_names),
        ("n_grid", parse_ngrid),
        ("alpha_ladder", _parse_floats),
    ):
        if key in payload and isinstance(payload[key], str):
            try:
                payload[key] = parser(payload[key])
            except Exception:
                errors.append(f"{key}: cannot parse {payload[key]!r}")
                payload.pop(key)

    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(payload) - known
    for key in sorted(unknown):
        errors.append(f"{key}: unknown field")
        payload.pop(key)

    cfg = ExperimentConfig(**payload)

    if cfg.model not in ("gaussian", "svol"):
        errors.append(f"model: must be 'gaussian' or 'svol', got {cfg.model!r}")
    for a in tuple(cfg.alphas) + tuple(cfg.alpha_ladder or ()):
        if not 0.0 <= a < 1.0:
            errors.append(f"alpha: must lie in [0,1), got {a}")
    if cfg.alpha_ladder and any(
        b > a for a, b in zip(cfg.alpha_ladder, cfg.alpha_ladder[1:])
    ):
        errors.append("alpha_ladder: must be nonincreasing")
    if any(b <= a for a, b in zip(cfg.n_grid, cfg.n_grid[1:])):
        errors.append(f"n_grid: must be strictly increasing, got {list(cfg.n_grid)}")
    if any(n < 1 for n in cfg.n_grid) or cfg.n < 1:
        errors.append("n_grid/n: sample sizes must be >= 1")
    for name in cfg.estimators:
        if name not in _KINDS:
            errors.append(f"estimators: unknown kind {name!r} (choose from {_KINDS})")
    if cfg.replicates < 2:
        errors.append("replicates: must be >= 2")
    if not 0.0 < cfg.ess_threshold < 1.0:
        errors.append("ess_threshold: must lie in (0,1)")
    if cfg.model == "svol" and not cfg.simulate:
        if cfg.data is None:
            errors.append("data: svol needs --data FILE or --simulate")
        elif not os.path.exists(cfg.data):
            errors.append(f"data: file does not exist: {cfg.data}")
    if cfg.subcommand == "gaussian-verify" and cfg.model != "gaussian":
        errors.append("model: gaussian-verify only supports the gaussian model")
    if errors:
        raise ConfigError(errors)
    return cfg


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _prepare_outdir(cfg):
    if os.path.exists(cfg.out) and os.listdir(cfg.out):
        raise ConfigError([f"out: directory {cfg.out!r} exists and is not empty"])
    os.makedirs(cfg.out, exist_ok=True)


def _write_manifest(cfg, started, extra=None):
    manifest = {
        "config": asdict(cfg),
        "version": __version__,
        "seed": cfg.seed,
        "wallclock_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)
        fh.write("\n")


def _gaussian(cfg):
    model = GaussianModel(dim=cfg.dim)
    return model, model.params(cfg.theta, cfg.phi)


def _svol(cfg):
    if cfg.simulate:
        data = default_synthetic_series()
    else:
        data = load_series(cfg.data)
    model = PseudoMarginalSvModel(data=data, particles=cfg.particles)
    return model, model.init_params()


def load_series(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:2]] != ["t", "x"]:
            raise ConfigError([f"data: expected CSV header 't,x' in {path}"])
        return np.array([float(row[1]) for row in reader])


def write_series(path, data):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"])
        for t, x in enumerate(np.asarray(data), start=1):
            writer.writerow([t, repr(float(x))])


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_snr_sweep(cfg):
    model, params = _gaussian(cfg) if cfg.model == "gaussian" else _svol(cfg)
    report = snr_sweep(
        model, params, cfg.estimators, cfg.alphas, cfg.n_grid, cfg.replicates,
        seeds=[cfg.seed + k for k in range(cfg.seeds)],
        share_star_mean_at_alpha0=cfg.share_star_mean, workers=cfg.workers,
    )
    report.to_csv(os.path.join(cfg.out, "snr.csv"))
    report.to_json(os.path.join(cfg.out, "snr.json"))
    return {"rows": len(report.rows)}


def _cmd_variance_sweep(cfg):
    model, params = _gaussian(cfg) if cfg.model == "gaussian" else _svol(cfg)
    rows = []
    slopes = {}
    for name in cfg.estimators:
        for alpha in cfg.alphas:
            curve = measure_variance_curve(
                model, params, name, cfg.n_grid, alpha, cfg.replicates, cfg.seed,
                coordinate=cfg.coordinate,
            )
            slopes[f"{name}@alpha={alpha}"] = fit_loglog_slope(curve, top_fraction=0.5)
            rows.extend((name, alpha, n, var) for n, var in curve)
    with open(os.path.join(cfg.out, "variance.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "alpha", "n", "variance"])
        for name, alpha, n, var in rows:
            writer.writerow([name, repr(float(alpha)), n, repr(float(var))])
    with open(os.path.join(cfg.out, "slopes.json"), "w") as fh:
        json.dump(slopes, fh, indent=1)
        fh.write("\n")
    return {"slopes": slopes}


def _anneal_from(cfg):
    if cfg.alpha_ladder:
        ladder = tuple(cfg.alpha_ladder)
    else:
        ladder = (cfg.alphas[0],)
    return AnnealState(
        alpha_ladder=ladder, ess_threshold_frac=cfg.ess_threshold,
        likelihood_ramp=cfg.likelihood_ramp,
    )


def _cmd_optimize(cfg):
    model, params = _gaussian(cfg) if cfg.model == "gaussian" else _svol(cfg)
    run = SgaConfig(
        model=model, params0=params, kind=cfg.estimators[0], n=cfg.n,
        anneal=_anneal_from(cfg), iterations=cfg.iterations,
        step_size=cfg.step_size, step_schedule=cfg.step_schedule,
        seed=cfg.seed, grad_norm_tol=cfg.grad_norm_tol,
    )
    traj = run_sga(run)
    traj.to_csv(os.path.join(cfg.out, "trajectory.csv"))
    traj.to_json(os.path.join(cfg.out, "trajectory.json"))
    return {
        "iterations_run": len(traj.records),
        "terminal_alpha": traj.terminal_alpha,
        "stopped_early": traj.stopped_early,
    }


def _cmd_gaussian_verify(cfg):
    model, params = _gaussian(cfg)
    n = max(cfg.n_grid)
    checks = []
    at_optimum = float(np.sum((params.theta - params.phi) ** 2)) == 0.0
    for name in cfg.estimators:
        if name not in ("am", "gm", "star"):
            continue
        for alpha in cfg.alphas:
            setting = GaussianSetting(
                theta=params.theta, phi=params.phi, alpha=alpha, coord=0
            )
            rng = derive_rng(cfg.seed, "verify", name, float(alpha))
            z = model.sample(params, (cfg.replicates, n), rng)
            logw = model.log_weight(params, z)
            from .estimators import make_estimator

            fn = make_estimator(name, alpha, model=model, params=params)
            grads = fn(logw, model.q_scores(params, z), model.w_scores(params, z),
                       np.array([1]))[:, 1]
            if at_optimum:
                emp = float(grads.var(ddof=1))
                ref = optimality_variance(n, alpha, name)
                label = f"variance {name} alpha={alpha} N={n}"
            else:
                emp = float(abs(grads.mean()) / grads.std(ddof=1))
                ref = snr_prediction(setting, name, n)
                label = f"snr {name} alpha={alpha} N={n}"
            rel = abs(emp - ref) / ref
            checks.append(
                {"check": label, "empirical": emp, "analytic": ref,
                 "rel_err": rel, "pass": bool(rel <= cfg.tolerance)}
            )
    with open(os.path.join(cfg.out, "verify.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "empirical", "analytic", "rel_err", "pass"])
        for c in checks:
            writer.writerow([c["check"], repr(c["empirical"]), repr(c["analytic"]),
                             repr(c["rel_err"]), int(c["pass"])])
    for c in checks:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['check']}: empirical={c['empirical']:.5g} "
              f"analytic={c['analytic']:.5g} rel_err={c['rel_err']:.3f}")
    if not all(c["pass"] for c in checks):
        raise RuntimeError("gaussian-verify: at least one tolerance check failed")
    return {"checks": len(checks)}


def _cmd_ssm_fit(cfg):
    model, params = _svol(cfg)
    write_series(os.path.join(cfg.out, "data.csv"), model.data)
    run = SgaConfig(
        model=model, params0=params, kind=cfg.estimators[0], n=cfg.n,
        anneal=_anneal_from(cfg), iterations=cfg.iterations,
        step_size=cfg.step_size, step_schedule=cfg.step_schedule,
        seed=cfg.seed, grad_norm_tol=cfg.grad_norm_tol,
    )
    traj = run_sga(run)
    traj.to_csv(os.path.join(cfg.out, "trajectory.csv"))
    summary = posterior_summary(model, params.with_values(traj.final_params), cfg.seed)
    summary["iterations_run"] = len(traj.records)
    summary["terminal_alpha"] = traj.terminal_alpha
    with open(os.path.join(cfg.out, "posterior.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    return {"terminal_alpha": traj.terminal_alpha, "iterations_run": len(traj.records)}


def posterior_summary(model, params, seed, draws=4096):
    """Fitted-variational summaries in both parameterizations."""
    q = model.family(params)
    z = q.sample((draws,), derive_rng(seed, "posterior"))
    natural = np.stack(
        [z[:, 0], -np.tanh(z[:, 1] / 2.0), np.exp(z[:, 2])], axis=-1
    )
    names_z = ("beta0", "logit_beta1", "log_sigma_sq")
    names_nat = ("beta0", "beta1", "sigma_sq")
    return {
        "unconstrained": {
            name: {"mean": float(q.mu[k]), "std": float(np.sqrt((q.chol @ q.chol.T)[k, k]))}
            for k, name in enumerate(names_z)
        },
        "natural": {
            name: {"mean": float(natural[:, k].mean()), "std": float(natural[:, k].std(ddof=1))}
            for k, name in enumerate(names_nat)
        },
    }


_BODIES = {
    "snr-sweep": _cmd_snr_sweep,
    "variance-sweep": _cmd_variance_sweep,
    "optimize": _cmd_optimize,
    "gaussian-verify": _cmd_gaussian_verify,
    "ssm-fit": _cmd_ssm_fit,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(prog="vriwae", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run_p = sub.add_parser("run", help="replay a JSON config file")
    run_p.add_argument("--config", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="gaussian")
    common.add_argument("--theta", type=float, default=0.0)
    common.add_argument("--phi", type=float, default=1.0)
    common.add_argument("--dim", type=int, default=1)
    common.add_argument("--data")
    common.add_argument("--simulate", action="store_true")
    common.add_argument("--estimators", default="star")
    common.add_argument("--alphas", default="0.0")
    common.add_argument("--ngrid", dest="n_grid", default="100")
    common.add_argument("--n", type=int, default=100)
    common.add_argument("--reps", dest="replicates", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--seeds", type=int, default=1)
    common.add_argument("--alpha-ladder", dest="alpha_ladder")
    common.add_argument("--tau", dest="ess_threshold", type=float, default=0.5)
    common.add_argument("--likelihood-ramp", dest="likelihood_ramp", action="store_true")
    common.add_argument("--iters", dest="iterations", type=int, default=1000)
    common.add_argument("--step", dest="step_size", type=float, default=0.1)
    common.add_argument("--step-schedule", dest="step_schedule", default="constant")
    common.add_argument("--grad-norm-tol", dest="grad_norm_tol", type=float)
    common.add_argument("--particles", type=int, default=64)
    common.add_argument("--coordinate", type=int)
    common.add_argument("--share-star-mean", dest="share_star_mean", action="store_true")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--tolerance", type=float, default=0.25)
    common.add_argument("--out", default="out")

    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0

    try:
        if args.subcommand == "run":
            if not os.path.exists(args.config):
                print(f"config: file does not exist: {args.config}", file=sys.stderr)
                return 2
            with open(args.config) as fh:
                cfg = validate_config(fh.read())
        else:
            payload = {
                k: v for k, v in vars(args).items()
                if v is not None and k != "subcommand"
            }
            cfg = validate_config({"subcommand": args.subcommand, **payload})
        _prepare_outdir(cfg)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2

    started = time.time()
    try:
        extra = _BODIES[cfg.subcommand](cfg)
        _write_manifest(cfg, started, extra)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 1
    return 0


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
