"""Simulation harness: BHq multiple testing and the desk-scale experiments.

Three experiment kinds are provided, each driven by a fully seeded
:class:`SimScenario` so that identical scenarios produce bit-identical
output tables:

* ``coverage``: empirical coverage of the Gaussian-approximation
  confidence intervals for the projected parameters of the selected model,
  at several nominal levels;
* ``sigma-compare``: the variance estimators against the long-run
  selected-model benchmark computed on an independent copy of the data,
  split by whether the selection screened (captured the true support);
* ``fdr``: BHq applied to the exact selective p-values, sweeping the
  design correlation and the penalty multiplier, reporting false discovery
  proportion and power.

Replicates are embarrassingly parallel; each replicate derives its own
random substream from the scenario seed, so thread count never changes
the results. Every output row carries the scenario hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoRoot, ValidationError
from .events import build_event
from .inference import (
    TestSpec,
    gaussian_approx_interval,
    selective_pvalue,
    sigma2_pseudolik,
    sigma2_pseudolik_regularized,
)
from .model import RegressionData, build_projection, ols_sigma2
from .solver import TuningSpec, choose_lambda, fit_sqrt_lasso

_KINDS = ("coverage", "sigma-compare", "fdr")


@dataclass(frozen=True)
class SimScenario:
    """One reproducible experiment configuration.

    ``amplitude`` is in noise units: planted coefficients have magnitude
    ``amplitude * sigma_true`` on unit-norm columns. ``rho_grid`` and
    ``kappa_grid`` default to the scalar settings and only matter for the
    fdr kind.
    """

    kind: str
    n: int
    p: int
    sparsity: int
    rho: float
    amplitude: float
    sigma_true: float = 1.0
    kappa: float = 0.8
    replicates: int = 100
    seed: int = 0
    q: float = 0.2
    levels: tuple = (0.85, 0.90, 0.95, 0.97)
    rho_grid: tuple | None = None
    kappa_grid: tuple | None = None
    lambda_draws: int = 1000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"kind must be one of {_KINDS}")
        if not 0.0 <= self.rho < 1.0:
            raise ValidationError("rho must lie in [0, 1)")
        if self.sparsity > self.p:
            raise ValidationError("sparsity cannot exceed p")
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if not 0.0 < self.q < 1.0:
            raise ValidationError("q must lie in (0, 1)")
        for lv in self.levels:
            if not 0.5 < lv < 1.0:
                raise ValidationError("levels must lie in (0.5, 1)")


def scenario_hash(s: SimScenario) -> str:
    payload = json.dumps(asdict(s), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class SimResult:
    scenario: SimScenario
    hash: str
    records: list = field(default_factory=list)
    summary: list = field(default_factory=list)


@dataclass(frozen=True)
class BhqResult:
    """Rejections of the BHq step-up procedure at level q."""

    q: float
    rejected: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rejected", np.asarray(self.rejected, dtype=np.int64))


def bhq(pvalues, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up: indices of the rejected hypotheses.

    Sorts the m p-values, finds the largest i with ``p_(i) <= i q / m``,
    and rejects everything at or below that value (so ties at the
    threshold are all rejected). Returns sorted original indices.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise ValidationError("pvalues must be a vector")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValidationError("p-values must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise ValidationError("q must lie in (0, 1)")
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    p_sorted = np.sort(p)
    ranks = np.arange(1, m + 1)
    ok = np.flatnonzero(p_sorted <= ranks * q / m)
    if ok.size == 0:
        return np.zeros(0, dtype=np.int64)
    cut = p_sorted[ok[-1]]
    return np.flatnonzero(p <= cut).astype(np.int64)


# ---------------------------------------------------------------------------
# data generation


def equicorrelated_design(rng, n, p, rho):
    """n x p Gaussian design with pairwise correlation rho, unit-norm columns."""
    G = rng.standard_normal((n, p))
    if rho > 0:
        g = rng.standard_normal((n, 1))
        G = math.sqrt(1.0 - rho) * G + math.sqrt(rho) * g
    return G / np.linalg.norm(G, axis=0)


def _planted_coefficients(rng, p, k, amplitude, sigma_true, random_signs):
    beta = np.zeros(p)
    if k:
        signs = rng.choice((-1.0, 1.0), size=k) if random_signs else np.ones(k)
        beta[:k] = amplitude * sigma_true * signs
    return beta


def _lambda_seed(ss) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def _map_replicates(fn, n_rep, threads):
    if threads <= 1:
        return [fn(i) for i in range(n_rep)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n_rep)))


# ---------------------------------------------------------------------------
# coverage of the Gaussian-approximation intervals


def run_coverage_sim(s: SimScenario, threads: int = 1) -> SimResult:
    """Interval coverage for the projected parameters of selected models.

    Per replicate: draw design and response, fit, build the event, form
    intervals at every level for every selected variable, and record
    whether each interval covers its projected target
    ``(X_E^+ X beta_true)_j``. Replicates selecting nothing are recorded
    and excluded from the coverage denominators.
    """
    if s.kind != "coverage":
        raise ValidationError("scenario kind must be 'coverage'")
    h = scenario_hash(s)
    children = np.random.SeedSequence(s.seed).spawn(s.replicates)

    def one(rep):
        ss_data, ss_lam = children[rep].spawn(2)
        rng = np.random.default_rng(ss_data)
        X = equicorrelated_design(rng, s.n, s.p, s.rho)
        beta_true = _planted_coefficients(
            rng, s.p, s.sparsity, s.amplitude, s.sigma_true, random_signs=False
        )
        y = X @ beta_true + s.sigma_true * rng.standard_normal(s.n)
        data = RegressionData(y=y, X=X, normalized=True)
        lam = choose_lambda(
            X, TuningSpec(kappa=s.kappa, mc_draws=s.lambda_draws, seed=_lambda_seed(ss_lam))
        )
        fit = fit_sqrt_lasso(data, lam)
        rec = {"scenario_hash": h, "replicate": rep, "lambda": lam,
               "n_active": int(fit.model.size)}
        if fit.model.size == 0:
            rec["covered"] = {}
            return rec
        proj = build_projection(data, fit.model)
        event, geom, _ = build_event(fit, data, proj)
        plugin = sigma2_pseudolik_regularized(event, data, proj)
        targets = proj.pinv @ (X @ beta_true)
        row_norms = np.linalg.norm(proj.pinv, axis=1)
        covered = {}
        for level in s.levels:
            flags = []
            for pos, j in enumerate(fit.model.active):
                lo, hi = gaussian_approx_interval(
                    event, geom, data, proj, TestSpec(j=int(j)), fit.model,
                    level, plugin, on_bracket_failure="unbounded",
                )
                flags.append(bool(lo * row_norms[pos] <= targets[pos] <= hi * row_norms[pos]))
            covered[f"{level:g}"] = flags
        rec["covered"] = covered
        rec["sigma2_plr"] = plugin
        return rec

    records = _map_replicates(one, s.replicates, threads)
    summary = []
    for level in s.levels:
        key = f"{level:g}"
        flags = [f for r in records for f in r["covered"].get(key, ())]
        summary.append({
            "scenario_hash": h,
            "level": level,
            "n_intervals": len(flags),
            "coverage": float(np.mean(flags)) if flags else math.nan,
        })
    return SimResult(scenario=s, hash=h, records=records, summary=summary)


# ---------------------------------------------------------------------------
# variance estimator comparison


def run_sigma_sim(s: SimScenario, threads: int = 1) -> SimResult:
    """Variance estimates against the independent-copy benchmark.

    The benchmark refits OLS on the selected columns of an independent
    copy of the data from the same distribution, which is the long-run
    residual variance of the selected model whether or not it screened.
    Ratios estimate/benchmark are reported per replicate together with the
    screening indicator.
    """
    if s.kind != "sigma-compare":
        raise ValidationError("scenario kind must be 'sigma-compare'")
    h = scenario_hash(s)
    children = np.random.SeedSequence(s.seed).spawn(s.replicates)
    support = frozenset(range(s.sparsity))

    def one(rep):
        ss_data, ss_lam, ss_copy = children[rep].spawn(3)
        rng = np.random.default_rng(ss_data)
        X = equicorrelated_design(rng, s.n, s.p, s.rho)
        beta_true = _planted_coefficients(
            rng, s.p, s.sparsity, s.amplitude, s.sigma_true, random_signs=True
        )
        y = X @ beta_true + s.sigma_true * rng.standard_normal(s.n)
        data = RegressionData(y=y, X=X, normalized=True)
        lam = choose_lambda(
            X, TuningSpec(kappa=s.kappa, mc_draws=s.lambda_draws, seed=_lambda_seed(ss_lam))
        )
        fit = fit_sqrt_lasso(data, lam)
        rec = {"scenario_hash": h, "replicate": rep, "lambda": lam,
               "n_active": int(fit.model.size)}
        proj = build_projection(data, fit.model)
        s2_ols = ols_sigma2(data, proj)
        if fit.model.size == 0:
            # empty selection: no constraints bind, all estimators reduce
            # to the empty-model residual mean square
            s2_pl = s2_plr = s2_ols
        else:
            event, _, _ = build_event(fit, data, proj)
            try:
                s2_pl = sigma2_pseudolik(event, data, proj)
            except NoRoot:
                s2_pl = math.nan
            s2_plr = sigma2_pseudolik_regularized(event, data, proj)

        rng2 = np.random.default_rng(ss_copy)
        X2 = equicorrelated_design(rng2, s.n, s.p, s.rho)
        y2 = X2 @ beta_true + s.sigma_true * rng2.standard_normal(s.n)
        data2 = RegressionData(y=y2, X=X2, normalized=True)
        proj2 = build_projection(data2, fit.model)
        benchmark = ols_sigma2(data2, proj2)

        rec.update({
            "sigma2_ols": s2_ols, "sigma2_pl": s2_pl, "sigma2_plr": s2_plr,
            "benchmark": benchmark,
            "ratio_ols": s2_ols / benchmark,
            "ratio_pl": s2_pl / benchmark,
            "ratio_plr": s2_plr / benchmark,
            "screening": bool(support <= set(int(j) for j in fit.model.active)),
        })
        return rec

    records = _map_replicates(one, s.replicates, threads)
    summary = []
    for screening in (True, False):
        rows = [r for r in records if r.get("screening") is screening]
        entry = {"scenario_hash": h, "screening": screening, "n_replicates": len(rows)}
        for key in ("ratio_ols", "ratio_pl", "ratio_plr"):
            vals = [r[key] for r in rows if not math.isnan(r[key])]
            entry[f"median_{key}"] = float(np.median(vals)) if vals else math.nan
        summary.append(entry)
    summary.append({
        "scenario_hash": h, "screening": "any", "n_replicates": len(records),
        "screening_fraction": float(np.mean([r["screening"] for r in records]))
        if records else math.nan,
    })
    return SimResult(scenario=s, hash=h, records=records, summary=summary)


# ---------------------------------------------------------------------------
# FDR control with BHq on the exact p-values


def run_fdr_sim(s: SimScenario, threads: int = 1) -> SimResult:
    """BHq on the exact selective p-values across (rho, kappa) grids.

    The design and response are shared across the kappa grid within one
    replicate so the sweep is compared on common draws. FDP counts
    rejected variables outside the true support; power counts recovered
    signals out of the planted ``sparsity``.
    """
    if s.kind != "fdr":
        raise ValidationError("scenario kind must be 'fdr'")
    h = scenario_hash(s)
    rho_grid = s.rho_grid if s.rho_grid is not None else (s.rho,)
    kappa_grid = s.kappa_grid if s.kappa_grid is not None else (s.kappa,)
    root = np.random.SeedSequence(s.seed)
    rho_children = root.spawn(len(rho_grid))
    support = np.arange(s.sparsity)

    records = []
    for rho, rho_child in zip(rho_grid, rho_children):
        children = rho_child.spawn(s.replicates)

        def one(rep, rho=rho, children=children):
            ss_data, ss_lam = children[rep].spawn(2)
            rng = np.random.default_rng(ss_data)
            X = equicorrelated_design(rng, s.n, s.p, rho)
            beta_true = _planted_coefficients(
                rng, s.p, s.sparsity, s.amplitude, s.sigma_true, random_signs=True
            )
            y = X @ beta_true + s.sigma_true * rng.standard_normal(s.n)
            data = RegressionData(y=y, X=X, normalized=True)
            # the Monte-Carlo expectation is kappa-free; scale it per kappa
            base = choose_lambda(
                X, TuningSpec(kappa=1.0, mc_draws=s.lambda_draws, seed=_lambda_seed(ss_lam))
            )
            out = []
            for kappa in kappa_grid:
                fit = fit_sqrt_lasso(data, kappa * base)
                rec = {"scenario_hash": h, "replicate": rep, "rho": rho,
                       "kappa": kappa, "lambda": kappa * base,
                       "n_active": int(fit.model.size)}
                if fit.model.size == 0:
                    rec.update({
                        "n_rejected": 0, "fdp": 0.0,
                        "power": 0.0 if s.sparsity else math.nan,
                    })
                    out.append(rec)
                    continue
                proj = build_projection(data, fit.model)
                event, geom, _ = build_event(fit, data, proj)
                pvals = np.array([
                    selective_pvalue(event, geom, data, proj, TestSpec(j=int(j)), fit.model)
                    for j in fit.model.active
                ])
                rej_pos = bhq(pvals, s.q)
                rejected = fit.model.active[rej_pos]
                n_rej = rejected.size
                false_rej = np.setdiff1d(rejected, support).size
                true_rej = np.intersect1d(rejected, support).size
                rec.update({
                    "n_rejected": int(n_rej),
                    "fdp": false_rej / max(1, n_rej),
                    "power": true_rej / s.sparsity if s.sparsity else math.nan,
                })
                out.append(rec)
            return out

        for chunk in _map_replicates(one, s.replicates, threads):
            records.extend(chunk)

    summary = []
    for rho in rho_grid:
        for kappa in kappa_grid:
            rows = [r for r in records if r["rho"] == rho and r["kappa"] == kappa]
            powers = [r["power"] for r in rows if not math.isnan(r["power"])]
            summary.append({
                "scenario_hash": h, "rho": rho, "kappa": kappa,
                "n_replicates": len(rows),
                "fdr": float(np.mean([r["fdp"] for r in rows])),
                "power": float(np.mean(powers)) if powers else math.nan,
                "rejection_rate": float(np.mean([r["n_rejected"] > 0 for r in rows])),
                "mean_active": float(np.mean([r["n_active"] for r in rows])),
            })
    return SimResult(scenario=s, hash=h, records=records, summary=summary)


def run_simulation(s: SimScenario, threads: int = 1) -> SimResult:
    runner = {
        "coverage": run_coverage_sim,
        "sigma-compare": run_sigma_sim,
        "fdr": run_fdr_sim,
    }[s.kind]
    return runner(s, threads=threads)


# ---------------------------------------------------------------------------
# output and presets


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_json_safe(rec), sort_keys=True) + "\n")


def write_summary_csv(summary, path):
    if not summary:
        raise ValidationError("nothing to write")
    keys = sorted({k for row in summary for k in row})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(summary)


# Desk-scale presets are the CI-sized runs; paper-scale presets reproduce
# the original experiment dimensions and are deliberately outside CI.
PRESETS = {
    "coverage-desk": SimScenario(
        kind="coverage", n=150, p=200, sparsity=10, rho=0.3, amplitude=6.0,
        sigma_true=1.0, kappa=0.8, replicates=80, seed=20260810,
    ),
    "coverage-paper": SimScenario(
        kind="coverage", n=150, p=200, sparsity=10, rho=0.3, amplitude=6.0,
        sigma_true=1.0, kappa=0.8, replicates=800, seed=20260810,
    ),
    "sigma-desk": SimScenario(
        kind="sigma-compare", n=250, p=500, sparsity=10, rho=0.3, amplitude=7.0,
        sigma_true=3.0, kappa=0.8, replicates=200, seed=20260811,
    ),
    "sigma-paper": SimScenario(
        kind="sigma-compare", n=1000, p=2000, sparsity=40, rho=0.3, amplitude=7.0,
        sigma_true=3.0, kappa=0.8, replicates=200, seed=20260811,
    ),
    "fdr-desk": SimScenario(
        kind="fdr", n=500, p=600, sparsity=10, rho=0.3, amplitude=3.5,
        sigma_true=1.0, kappa=0.8, q=0.2, replicates=100, seed=20260812,
        rho_grid=(0.0, 0.3, 0.6), kappa_grid=(0.6, 0.8, 1.0),
    ),
    "fdr-paper": SimScenario(
        kind="fdr", n=2000, p=2500, sparsity=30, rho=0.3, amplitude=3.5,
        sigma_true=1.0, kappa=0.8, q=0.2, replicates=100, seed=20260812,
        rho_grid=(0.0, 0.3, 0.6), kappa_grid=(0.6, 0.8, 1.0),
    ),
}
