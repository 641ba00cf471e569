import json
import math
from dataclasses import replace

import numpy as np
import pytest

from selinf.errors import ValidationError
from selinf.simulate import (
    PRESETS,
    SimScenario,
    bhq,
    equicorrelated_design,
    run_coverage_sim,
    run_fdr_sim,
    run_sigma_sim,
    run_simulation,
    scenario_hash,
    write_jsonl,
    write_summary_csv,
)

TINY_COVERAGE = SimScenario(
    kind="coverage", n=50, p=30, sparsity=3, rho=0.3, amplitude=5.0,
    sigma_true=1.0, kappa=0.8, replicates=6, seed=5, levels=(0.9,),
    lambda_draws=200,
)
TINY_SIGMA = SimScenario(
    kind="sigma-compare", n=60, p=40, sparsity=3, rho=0.3, amplitude=6.0,
    sigma_true=2.0, kappa=0.8, replicates=6, seed=6, lambda_draws=200,
)
TINY_FDR = SimScenario(
    kind="fdr", n=60, p=50, sparsity=3, rho=0.0, amplitude=4.0,
    sigma_true=1.0, kappa=0.8, q=0.2, replicates=5, seed=7, lambda_draws=200,
    rho_grid=(0.0, 0.3), kappa_grid=(0.8,),
)


# ---------------------------------------------------------------------------
# BHq


def test_bhq_nothing_significant():
    assert bhq(np.ones(5), 0.1).size == 0


def test_bhq_hand_worked_example():
    rejected = bhq(np.array([0.001, 0.002, 0.9]), 0.1)
    assert rejected.tolist() == [0, 1]


def test_bhq_single_test_reduces_to_threshold():
    assert bhq(np.array([0.04]), 0.05).tolist() == [0]
    assert bhq(np.array([0.06]), 0.05).size == 0


def test_bhq_ties_at_threshold_all_rejected():
    p = np.array([0.02, 0.02, 0.9, 0.9])
    rejected = bhq(p, 0.05)
    assert rejected.tolist() == [0, 1]


def test_bhq_monotone_in_q():
    rng = np.random.default_rng(90)
    p = rng.uniform(size=40)
    p[:5] = rng.uniform(0, 0.01, size=5)
    prev = set()
    for q in (0.01, 0.05, 0.1, 0.2, 0.4):
        cur = set(bhq(p, q).tolist())
        assert prev <= cur
        prev = cur


def test_bhq_against_statsmodels_oracle():
    from statsmodels.stats.multitest import multipletests

    rng = np.random.default_rng(91)
    for _ in range(20):
        p = rng.uniform(size=rng.integers(1, 30))
        q = float(rng.uniform(0.02, 0.4))
        ours = np.zeros(p.size, dtype=bool)
        ours[bhq(p, q)] = True
        ref = multipletests(p, alpha=q, method="fdr_bh")[0]
        np.testing.assert_array_equal(ours, ref)


def test_bhq_validation():
    with pytest.raises(ValidationError):
        bhq(np.array([0.5, 1.5]), 0.1)
    with pytest.raises(ValidationError):
        bhq(np.array([0.5]), 0.0)


# ---------------------------------------------------------------------------
# scenarios and determinism


def test_scenario_validation():
    with pytest.raises(ValidationError):
        SimScenario(kind="bogus", n=10, p=5, sparsity=1, rho=0.0, amplitude=1.0)
    with pytest.raises(ValidationError):
        SimScenario(kind="fdr", n=10, p=5, sparsity=9, rho=0.0, amplitude=1.0)
    with pytest.raises(ValidationError):
        SimScenario(kind="fdr", n=10, p=5, sparsity=1, rho=1.0, amplitude=1.0)
    with pytest.raises(ValidationError):
        run_coverage_sim(TINY_FDR)


def test_scenario_hash_stable_and_sensitive():
    a = scenario_hash(TINY_COVERAGE)
    assert a == scenario_hash(TINY_COVERAGE)
    assert a != scenario_hash(replace(TINY_COVERAGE, seed=99))


def test_equicorrelated_design_properties():
    rng = np.random.default_rng(92)
    X = equicorrelated_design(rng, 400, 6, 0.3)
    np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0, atol=1e-12)
    corr = np.corrcoef(X.T)
    off = corr[~np.eye(6, dtype=bool)]
    assert abs(off.mean() - 0.3) < 0.1


def test_simulations_are_deterministic_and_thread_invariant():
    res1 = run_coverage_sim(TINY_COVERAGE, threads=1)
    res2 = run_coverage_sim(TINY_COVERAGE, threads=3)
    assert res1.hash == res2.hash
    assert json.dumps(res1.records, sort_keys=True) == json.dumps(
        res2.records, sort_keys=True
    )
    assert res1.summary == res2.summary

    fdr1 = run_fdr_sim(TINY_FDR, threads=1)
    fdr2 = run_fdr_sim(TINY_FDR, threads=3)
    assert json.dumps(fdr1.records, sort_keys=True) == json.dumps(
        fdr2.records, sort_keys=True
    )
    assert fdr1.summary == fdr2.summary


def test_coverage_sim_output_shape():
    res = run_simulation(TINY_COVERAGE)
    assert len(res.records) == 6
    assert all(r["scenario_hash"] == res.hash for r in res.records)
    (row,) = res.summary
    assert row["level"] == 0.9
    assert row["n_intervals"] > 0
    assert 0.5 <= row["coverage"] <= 1.0


def test_sigma_sim_output_shape():
    res = run_sigma_sim(TINY_SIGMA)
    assert len(res.records) == 6
    selected = [r for r in res.records if r["n_active"] > 0]
    assert selected, "tiny scenario never selected anything"
    for r in selected:
        assert r["benchmark"] > 0
        assert r["ratio_plr"] > 0
        assert isinstance(r["screening"], bool)
    kinds = {row["screening"] for row in res.summary}
    assert kinds == {True, False, "any"}


def test_fdr_sim_output_shape():
    res = run_fdr_sim(TINY_FDR)
    assert len(res.records) == 5 * 2  # replicates x rho grid
    for r in res.records:
        assert 0.0 <= r["fdp"] <= 1.0
        assert 0.0 <= r["power"] <= 1.0
    assert len(res.summary) == 2
    for row in res.summary:
        assert row["n_replicates"] == 5


def test_writers_roundtrip(tmp_path):
    res = run_simulation(TINY_COVERAGE)
    jl = tmp_path / "records.jsonl"
    cs = tmp_path / "summary.csv"
    write_jsonl(res.records, jl)
    write_summary_csv(res.summary, cs)
    lines = jl.read_text().strip().splitlines()
    assert len(lines) == len(res.records)
    assert all(json.loads(line)["scenario_hash"] == res.hash for line in lines)
    header = cs.read_text().splitlines()[0]
    assert "coverage" in header


def test_coverage_null_model_sanity():
    # no signal: intervals for the projected parameters of whatever gets
    # selected still cover at the nominal rate, within Monte-Carlo error
    s = SimScenario(
        kind="coverage", n=50, p=30, sparsity=0, rho=0.0, amplitude=0.0,
        sigma_true=1.0, kappa=0.8, replicates=100, seed=13, levels=(0.95,),
        lambda_draws=300,
    )
    res = run_coverage_sim(s, threads=2)
    (row,) = res.summary
    assert row["n_intervals"] >= 50
    se = math.sqrt(0.95 * 0.05 / row["n_intervals"])
    assert abs(row["coverage"] - 0.95) <= 4.0 * se


def test_sigma_null_model_ratios_concentrate_at_one():
    # nothing planted and (mostly) nothing selected: no truncation binds and
    # every estimator tracks the independent-copy benchmark
    s = SimScenario(
        kind="sigma-compare", n=80, p=40, sparsity=0, rho=0.0, amplitude=0.0,
        sigma_true=1.0, kappa=0.9, replicates=16, seed=14, lambda_draws=300,
    )
    res = run_sigma_sim(s, threads=2)
    for key in ("ratio_ols", "ratio_pl", "ratio_plr"):
        vals = [r[key] for r in res.records if not math.isnan(r[key])]
        assert vals
        assert abs(float(np.median(vals)) - 1.0) <= 0.25


def test_fdr_global_null_calibration():
    # k = 0: power is undefined, FDP is 0 whenever nothing is rejected, and
    # the rejection rate stays at or below q up to Monte-Carlo slack
    s = SimScenario(
        kind="fdr", n=60, p=40, sparsity=0, rho=0.0, amplitude=0.0,
        sigma_true=1.0, kappa=0.8, q=0.2, replicates=60, seed=15,
        lambda_draws=300,
    )
    res = run_fdr_sim(s, threads=2)
    (row,) = res.summary
    assert math.isnan(row["power"])
    for r in res.records:
        if r["n_rejected"] == 0:
            assert r["fdp"] == 0.0
    slack = 3.0 * math.sqrt(0.2 * 0.8 / 60)
    assert row["rejection_rate"] <= 0.2 + slack


def test_presets_well_formed():
    for name, preset in PRESETS.items():
        assert scenario_hash(preset)
        assert preset.kind in ("coverage", "sigma-compare", "fdr")
        if name.endswith("-desk"):
            assert preset.n * preset.p <= 500 * 600
