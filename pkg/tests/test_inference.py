"""
Test Inference: design matrices, clustered logistic fits and odds ratios
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from errors import DesignError, FitError
from fairness import spread
from inference import (
    DesignSpec,
    build_design,
    fit_logistic,
    inference_summary,
    log_likelihood,
    max_ror,
    model_probability,
    odds_ratios,
    or_table,
)
from simulation import Treatment, TrialResponse


def _cell_responses(cells, diff=2, per_participant=5):
    """Responses reproducing exact (successes, failures) counts per (treatment, group) cell"""
    out = []
    pid = 0
    for (treatment, group), (hits, misses) in cells.items():
        outcomes = [True] * hits + [False] * misses
        for i, correct in enumerate(outcomes):
            if i % per_participant == 0:
                pid += 1
            out.append(TrialResponse(
                participant_id=pid,
                trial_id=f"{treatment.value}-{group}-{i}",
                treatment=treatment,
                group=group,
                diff=diff + (i % 3) if diff else 2,
                correct=correct,
                chosen_in_set=None if treatment == Treatment.CONTROL else True,
            ))
    return out


def _clustered_sample(seed, n_participants=50, per_participant=10):
    """Two treatments, two groups, random diff and a participant random effect"""
    rng = np.random.default_rng(seed)
    beta = np.array([0.2, 0.5, -0.4, -0.3, -0.15])
    responses = []
    for pid in range(n_participants):
        treatment = Treatment.CONTROL if pid % 2 == 0 else Treatment.MARGINAL
        effect = rng.normal(0.0, 0.5)
        for j in range(per_participant):
            group = int(rng.integers(0, 2))
            diff = int(rng.integers(1, 5))
            t = float(treatment == Treatment.MARGINAL)
            eta = beta @ np.array([1.0, t, group, t * group, diff]) + effect
            responses.append(TrialResponse(
                pid, f"p{pid}-{j}", treatment, group, diff, bool(rng.uniform() < expit(eta)),
                None if treatment == Treatment.CONTROL else bool(rng.uniform() < 0.7),
            ))
    return responses


def test_design_column_counts():
    print("\n" + "=" * 60)
    print("Design matrices")
    print("=" * 60)

    small = build_design(_clustered_sample(0))
    assert small.shape[1] == 5
    assert small.terms == ["intercept", "treat[marginal]", "group[1]", "treat[marginal]:group[1]", "diff"]

    cells = {(t, g): (6, 4) for t in Treatment for g in range(4)}
    large = build_design(_cell_responses(cells, diff=1))
    print(f"4 treatments x 4 groups: {large.shape[1]} columns")
    assert large.shape[1] == 17
    assert large.treatments == ["control", "avgk", "marginal", "conditional"]

    row = large.row_for("control", 0, diff=0.0)
    assert row.tolist() == [1.0] + [0.0] * 16
    assert len(np.unique(large.clusters)) == 32
    print("✓ dummy coding")


def test_design_rejects_degenerate_columns():
    constant_diff = _cell_responses({(Treatment.CONTROL, 0): (5, 5), (Treatment.CONTROL, 1): (4, 6),
                                     (Treatment.MARGINAL, 0): (6, 4), (Treatment.MARGINAL, 1): (7, 3)}, diff=0)
    with pytest.raises(DesignError) as exc:
        build_design(constant_diff)
    assert exc.value.term == "diff"
    assert build_design(constant_diff, DesignSpec(include_diff=False)).shape[1] == 4

    missing_cell = _cell_responses({(Treatment.CONTROL, 0): (5, 5), (Treatment.CONTROL, 1): (4, 6),
                                    (Treatment.MARGINAL, 0): (6, 4), (Treatment.AVGK, 1): (7, 3)})
    with pytest.raises(DesignError) as exc:
        build_design(missing_cell)
    assert exc.value.term == "treat[marginal]:group[1]"

    with pytest.raises(DesignError):
        build_design(_cell_responses({(Treatment.CONTROL, 0): (5, 5), (Treatment.CONTROL, 1): (4, 6)}))
    with pytest.raises(DesignError):
        build_design(_clustered_sample(1), DesignSpec(reference_group=7))


def test_intercept_only_closed_form():
    y = np.array([1.0] * 75 + [0.0] * 25)
    fit = fit_logistic(np.ones((100, 1)), y, np.arange(100) // 4)
    assert fit.converged
    assert fit.beta[0] == pytest.approx(math.log(3.0), abs=1e-6)


def test_balanced_covariate_has_zero_slope():
    x = np.array([1.0] * 60 + [-1.0] * 60)
    y = np.array(([1.0] * 40 + [0.0] * 20) * 2)
    fit = fit_logistic(np.column_stack([np.ones(120), x]), y, np.arange(120) // 6)
    assert abs(fit.beta[1]) <= 1e-8
    assert fit.beta[0] == pytest.approx(math.log(2.0), abs=1e-8)


def test_fit_errors():
    X = np.column_stack([np.ones(20), np.arange(20.0)])
    y = np.array([0.0, 1.0] * 10)
    with pytest.raises(FitError):
        fit_logistic(np.column_stack([X, X[:, 1]]), y, np.arange(20))
    with pytest.raises(FitError):
        fit_logistic(X, y, np.zeros(20))

    separated = (np.arange(20.0) >= 10).astype(float)
    with pytest.raises(FitError) as exc:
        fit_logistic(X, separated, np.arange(20))
    assert "separation" in str(exc.value)


def test_fit_matches_generic_optimizer():
    """Ten clustered samples against a quasi-Newton maximizer of the same likelihood"""
    print("\n" + "=" * 60)
    print("Likelihood oracle")
    print("=" * 60)

    worst = 0.0
    for seed in range(10):
        design = build_design(_clustered_sample(seed))
        fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
        assert fit.converged

        def negative(beta):
            return -log_likelihood(design.X, design.y, beta)

        def gradient(beta):
            return -design.X.T @ (design.y - expit(design.X @ beta))

        oracle = minimize(negative, np.zeros(design.X.shape[1]), jac=gradient, method="BFGS",
                          options={"gtol": 1e-10, "maxiter": 10000})
        worst = max(worst, float(np.max(np.abs(oracle.x - fit.beta))))
        assert np.allclose(oracle.x, fit.beta, atol=1e-4)
        assert fit.log_likelihood >= -oracle.fun - 1e-9
    print(f"max coefficient difference: {worst:.2e}")
    print("✓ IRLS agrees with BFGS")


def test_sandwich_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    for seed in range(3):
        design = build_design(_clustered_sample(seed))
        fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
        oracle = sm.GLM(design.y, design.X, family=sm.families.Binomial()).fit(
            cov_type="cluster", cov_kwds={"groups": design.clusters, "use_correction": False}
        )
        assert np.allclose(fit.beta, oracle.params, atol=1e-6)
        assert np.allclose(fit.covariance, oracle.cov_params(), rtol=1e-5, atol=1e-10)


def test_one_observation_per_cluster_is_hc0():
    sm = pytest.importorskip("statsmodels.api")
    design = build_design(_clustered_sample(4))
    n = len(design.y)
    fit = fit_logistic(design.X, design.y, np.arange(n), terms=design.terms)
    oracle = sm.GLM(design.y, design.X, family=sm.families.Binomial()).fit(cov_type="HC0")
    assert np.allclose(fit.covariance, oracle.cov_params(), rtol=1e-5, atol=1e-10)
    eigenvalues = np.linalg.eigvalsh(fit.covariance)
    assert eigenvalues.min() >= -1e-10


def test_sandwich_agrees_with_model_covariance_on_average():
    rng = np.random.default_rng(11)
    sandwich, model, estimates = [], [], []
    for _ in range(200):
        x = rng.normal(size=400)
        X = np.column_stack([np.ones(400), x])
        y = (rng.uniform(size=400) < expit(0.3 + 0.8 * x)).astype(float)
        fit = fit_logistic(X, y, np.arange(400))
        sandwich.append(np.diag(fit.covariance))
        model.append(np.diag(fit.model_covariance))
        estimates.append(fit.beta)
    ratio = np.mean(sandwich, axis=0) / np.mean(model, axis=0)
    empirical = np.var(estimates, axis=0) / np.mean(model, axis=0)
    assert np.all(np.abs(ratio - 1.0) < 0.1)
    assert np.all(np.abs(empirical - 1.0) < 0.3)


def test_odds_ratio_arithmetic():
    cells = {
        (Treatment.CONTROL, 0): (50, 50), (Treatment.CONTROL, 1): (50, 50),
        (Treatment.MARGINAL, 0): (75, 25), (Treatment.MARGINAL, 1): (75, 25),
    }
    spec = DesignSpec(include_diff=False)
    design = build_design(_cell_responses(cells), spec)
    fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
    ors = odds_ratios(fit, spec)
    for g in (0, 1):
        assert ors[("marginal", g)].odds_ratio == pytest.approx(3.0, abs=1e-8)
        assert ors[("control", g)].odds_ratio == 1.0
        assert model_probability(fit, spec, "marginal", g) == pytest.approx(0.75, abs=1e-9)


def _table_fixture():
    """Control odds chosen so marginal-vs-control ORs are 1.34, 1.20, 1.08, 1.06"""
    control = {0: (50, 67), 1: (50, 60), 2: (50, 54), 3: (50, 53)}
    cells = {}
    for g, counts in control.items():
        cells[(Treatment.CONTROL, g)] = counts
        cells[(Treatment.MARGINAL, g)] = (100, 100)
    return cells


def test_table_fixture_odds_ratios():
    print("\n" + "=" * 60)
    print("Odds ratios and maxROR")
    print("=" * 60)

    spec = DesignSpec(include_diff=False)
    design = build_design(_cell_responses(_table_fixture()), spec)
    fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
    ors = odds_ratios(fit, spec)

    for g, expected in enumerate((1.34, 1.20, 1.08, 1.06)):
        assert ors[("marginal", g)].odds_ratio == pytest.approx(expected, abs=1e-9)
        assert ors[("control", g)].odds_ratio == 1.0
        assert ors[("marginal", g)].ci_low < expected < ors[("marginal", g)].ci_high

    rors = max_ror(ors)
    print(or_table(ors, reference="control").to_string())
    assert rors["marginal"][0] == pytest.approx(1.34 / 1.06, abs=1e-9)
    assert round(rors["marginal"][0], 3) == 1.264
    assert rors["marginal"][1] == (0, 3)
    assert rors["control"][0] == 1.0

    summary = inference_summary(fit, ors, spec)
    json.dumps(summary)
    assert summary["or_table"]["marginal"]["maxROR"] == pytest.approx(1.264, abs=1e-3)
    print("✓ maxROR reproduced")


def test_odds_ratios_ignore_diff():
    design = build_design(_clustered_sample(5))
    fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
    at_zero = odds_ratios(fit, DesignSpec(), at_diff=0.0)
    at_three = odds_ratios(fit, DesignSpec(), at_diff=3.0)
    for key in at_zero:
        assert at_zero[key].odds_ratio == pytest.approx(at_three[key].odds_ratio, rel=1e-12)
        p_t, p_c = at_three[key].p_treated, at_three[key].p_reference
        assert (p_t / (1 - p_t)) / (p_c / (1 - p_c)) == pytest.approx(at_three[key].odds_ratio, rel=1e-9)


def test_max_ror_examples():
    assert max_ror({("conditional", 0): 1.43, ("conditional", 1): 1.12})["conditional"][0] == pytest.approx(1.277, abs=1e-3)
    assert max_ror({("avgk", 0): 1.1, ("avgk", 1): 1.1, ("avgk", 2): 1.1})["avgk"] == (1.0, (0, 1))

    ors = {("marginal", 0): 1.34, ("marginal", 1): 1.20, ("marginal", 2): 1.08, ("marginal", 3): 1.06}
    relabeled = {("marginal", 3 - g): v for (_, g), v in ors.items()}
    assert max_ror(ors)["marginal"][0] == max_ror(relabeled)["marginal"][0]
    assert max_ror(ors)["marginal"][0] >= 1.0

    tied = {0: 1.2, 1: 1.5, 2: 1.5, 3: 1.0, 4: 1.0}
    ratio, pair = max_ror({("marginal", g): v for g, v in tied.items()})["marginal"]
    assert pair == spread(tied)[1] == (1, 3)
    assert ratio == pytest.approx(1.5)

    with pytest.raises(DesignError):
        max_ror({("marginal", 0): 1.2})


def test_non_converged_fit_has_no_odds_ratios():
    design = build_design(_clustered_sample(6))
    fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms, max_iter=1)
    assert not fit.converged
    with pytest.raises(FitError):
        odds_ratios(fit)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
