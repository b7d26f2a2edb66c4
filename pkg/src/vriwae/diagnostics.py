"""Replicated Monte Carlo SNR and variance measurement for the estimators.

For each grid cell (estimator, alpha, N) the harness draws ``replicates``
independent N-sample batches, evaluates the estimator on every batch in one
vectorized pass, and reports per-coordinate empirical mean, standard
deviation and SNR = |mean| / std, next to the closed-form prediction when the
model is the analytic Gaussian pair. Log-log slopes fitted over the top of
the N grid quantify the scaling laws (sqrt(N) growth vs 1/sqrt(N) collapse).

Batch draws are keyed by (seed, alpha, N) only, not by estimator, so
different estimators see identical batches and mean comparisons are paired.
Reports are deterministic given the root seed regardless of how cells are
distributed over workers.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import make_estimator
from .gaussian_oracle import GaussianSetting, snr_prediction
from .models import GaussianModel
from .rng import derive_rng

__all__ = [
    "SnrRow",
    "SnrReport",
    "measure_snr",
    "measure_variance_curve",
    "fit_loglog_slope",
    "snr_sweep",
    "slope_table",
]

CSV_COLUMNS = (
    "estimator",
    "alpha",
    "n",
    "coordinate",
    "mean",
    "std",
    "snr",
    "analytic_snr",
    "replicates",
    "seed",
    "degenerate",
)


@dataclass(frozen=True)
class SnrRow:
    estimator: str
    alpha: float
    n: int
    coordinate: str
    mean: float
    std: float
    snr: float
    analytic_snr: float | None
    replicates: int
    seed: int
    degenerate: bool = False


@dataclass
class SnrReport:
    rows: list = field(default_factory=list)

    def filtered(self, **match) -> list:
        return [
            r for r in self.rows
            if all(getattr(r, k) == v for k, v in match.items())
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in sorted_rows(self.rows):
                writer.writerow([_csv_value(getattr(r, c)) for c in CSV_COLUMNS])

    def to_json(self, path):
        payload = [asdict(r) for r in sorted_rows(self.rows)]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")


def sorted_rows(rows):
    return sorted(rows, key=lambda r: (r.estimator, r.alpha, r.n, r.seed, r.coordinate))


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(float(v))
    return v


# replicate-axis chunk bounding peak memory; fixed so streams stay reproducible
_REPLICATE_CHUNK = 4096


def _gradient_samples(model, params, names, n, alpha, replicates, seed, beta=1.0):
    """Per-replicate gradient draws, one (replicates, dim) array per estimator.

    Batches are shared across estimator names: the stream is keyed by
    (seed, alpha, n) only. Replicates are evaluated in fixed-size chunks;
    chunked draws consume the stream in the same order as a single call, so
    results do not depend on the chunking.
    """
    rng = derive_rng(seed, "snr", float(alpha), int(n))
    phi_idx = np.arange(model.n_theta, len(model.param_names))
    fns = {
        name: make_estimator(name, alpha, model=model, params=params)
        for name in names
    }
    pieces = {name: [] for name in names}
    done = 0
    while done < replicates:
        m = min(_REPLICATE_CHUNK, replicates - done)
        z = model.sample(params, (m, n), rng)
        logw = model.log_weight(params, z, beta=beta, rng=rng)
        q = model.q_scores(params, z)
        w = model.w_scores(params, z, beta=beta)
        for name in names:
            pieces[name].append(fns[name](logw, q, w, phi_idx))
        done += m
    return {name: np.concatenate(chunks, axis=0) for name, chunks in pieces.items()}


def _analytic_snr(model, params, name, alpha, n, coord):
    if not isinstance(model, GaussianModel) or name not in ("am", "gm", "star"):
        return None
    if coord < model.n_theta:
        return None  # oracle covers the variational block only
    setting = GaussianSetting(
        theta=params.theta, phi=params.phi, alpha=alpha, coord=coord - model.n_theta
    )
    return float(snr_prediction(setting, name, n))


def _rows_from_grads(model, params, name, alpha, n, grads, replicates, seed):
    rows = []
    mean = grads.mean(axis=0)
    std = grads.std(axis=0, ddof=1)
    for coord, cname in enumerate(model.param_names):
        degenerate = std[coord] == 0.0
        snr = np.inf if degenerate else abs(mean[coord]) / std[coord]
        rows.append(
            SnrRow(
                estimator=name,
                alpha=float(alpha),
                n=int(n),
                coordinate=cname,
                mean=float(mean[coord]),
                std=float(std[coord]),
                snr=float(snr),
                analytic_snr=_analytic_snr(model, params, name, alpha, n, coord),
                replicates=int(replicates),
                seed=int(seed),
                degenerate=bool(degenerate),
            )
        )
    return rows


def measure_snr(model, params, kind, n, alpha, replicates, seed, beta=1.0) -> list:
    """One grid cell: replicated estimator draws summarized per coordinate.

    A zero empirical standard deviation (degenerate estimator) is reported as
    an infinite SNR with the ``degenerate`` flag set, never dropped.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard deviation")
    grads = _gradient_samples(model, params, [kind], n, alpha, replicates, seed, beta)[kind]
    return _rows_from_grads(model, params, kind, alpha, n, grads, replicates, seed)


def measure_variance_curve(
    model, params, kind, n_grid, alpha, replicates, seed, coordinate=None, beta=1.0
):
    """Empirical estimator variance along an N grid for one coordinate."""
    if coordinate is None:
        coordinate = model.n_theta  # first variational coordinate
    out = []
    for n in n_grid:
        grads = _gradient_samples(
            model, params, [kind], n, alpha, replicates, seed, beta
        )[kind]
        out.append((int(n), float(grads[:, coordinate].var(ddof=1))))
    return out


def fit_loglog_slope(points, top_fraction=None) -> float:
    """OLS slope of log(value) against log(n).

    ``top_fraction`` keeps only that fraction of the largest-n points
    (asymptotic window); default fits everything it is given.
    """
    pts = sorted((float(n), float(v)) for n, v in points)
    if top_fraction is not None:
        keep = max(3, int(np.ceil(len(pts) * top_fraction)))
        pts = pts[-keep:]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a slope")
    n = np.array([p[0] for p in pts])
    val = np.array([p[1] for p in pts])
    if np.any(n <= 0) or np.any(val <= 0):
        raise ValueError("log-log fit needs strictly positive points")
    return float(np.polyfit(np.log(n), np.log(val), 1)[0])


def _sweep_cell(args):
    (model, params, names, alpha, n, replicates, seed, beta, share_star) = args
    grads = _gradient_samples(model, params, names, n, alpha, replicates, seed, beta)
    rows = []
    star_mean = None
    if share_star and alpha == 0.0 and "star" in grads:
        star_mean = grads["star"].mean(axis=0)
    for name in names:
        cell_rows = _rows_from_grads(
            model, params, name, alpha, n, grads[name], replicates, seed
        )
        if star_mean is not None and name in ("am", "gm"):
            cell_rows = [
                SnrRow(
                    **{
                        **asdict(r),
                        "mean": float(star_mean[k]),
                        "snr": float("inf")
                        if r.degenerate
                        else abs(float(star_mean[k])) / r.std,
                    }
                )
                for k, r in enumerate(cell_rows)
            ]
        rows.extend(cell_rows)
    return rows


def snr_sweep(
    model,
    params,
    kinds,
    alphas,
    n_grid,
    replicates,
    seeds,
    beta=1.0,
    share_star_mean_at_alpha0=False,
    workers=1,
) -> SnrReport:
    """Full (kind, alpha, N, seed) grid; deterministic given the seed list.

    ``share_star_mean_at_alpha0`` substitutes the star estimator's empirical
    mean as the SNR numerator for AM/GM at alpha = 0, where their own mean
    estimate is too noisy to be useful near the optimum; all estimators are
    unbiased so the expectation is shared.
    """
    seeds = [int(s) for s in seeds]
    cells = [
        (model, params, tuple(kinds), float(alpha), int(n), int(replicates),
         seed, beta, share_star_mean_at_alpha0)
        for seed in seeds
        for alpha in alphas
        for n in n_grid
    ]
    report = SnrReport()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(_sweep_cell, cells, chunksize=1):
                report.rows.extend(rows)
    else:
        for cell in cells:
            report.rows.extend(_sweep_cell(cell))
    report.rows = sorted_rows(report.rows)
    return report


def slope_table(report: SnrReport, coordinate, top_fraction=0.5):
    """Per (estimator, alpha) log-log SNR slope, seed-averaged SNR per N."""
    out = {}
    keys = sorted({(r.estimator, r.alpha) for r in report.rows})
    for est, alpha in keys:
        rows = report.filtered(estimator=est, alpha=alpha, coordinate=coordinate)
        by_n = {}
        for r in rows:
            by_n.setdefault(r.n, []).append(r.snr)
        points = [(n, float(np.mean(v))) for n, v in sorted(by_n.items())]
        out[(est, alpha)] = fit_loglog_slope(points, top_fraction=top_fraction)
    return out
