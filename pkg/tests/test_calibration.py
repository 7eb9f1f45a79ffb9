"""
Test Calibration: conformal quantiles, Mondrian thresholds and avg-k
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

import math

import numpy as np
import pytest

from conformal import (
    Method,
    ScoreConfig,
    SetPredictor,
    calibrate_avgk,
    calibrate_marginal,
    calibrate_mondrian,
    conformal_quantile,
    empirical_coverage,
    load_predictor,
    predict_batch,
    save_predictor,
)
from data import LabeledDataset, ProbRecord
from errors import CalibrationError, InsufficientGroupError
from simulation import SyntheticTaskSpec, generate_task

LAC = ScoreConfig(kind="lac")


def _synthetic(n: int, m: int, seed: int, concentration: float = 0.5, group: int = 0, prefix: str = "ex"):
    """Dirichlet probabilities with labels drawn from the probabilities themselves"""
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.full(m, concentration), size=n)
    cdf = np.cumsum(probs, axis=1)
    labels = np.minimum((rng.uniform(size=(n, 1)) > cdf).sum(axis=1), m - 1)
    return [ProbRecord(f"{prefix}{seed}-{i}", tuple(probs[i].tolist()), int(labels[i]), group) for i in range(n)]


def _dataset(records, n_g=1):
    return LabeledDataset(records, n_g=n_g)


def _true_prob_records(true_probs, group=0, prefix="r"):
    return [ProbRecord(f"{prefix}{i}", (p, 1.0 - p), 0, group) for i, p in enumerate(true_probs)]


def test_conformal_quantile_examples():
    """Order-statistic examples"""
    print("\n" + "=" * 60)
    print("Conformal quantile")
    print("=" * 60)

    assert conformal_quantile(list(range(1, 11)), 0.2) == 9
    assert conformal_quantile([0.3, 0.1, 0.5, 0.2, 0.4], 0.05) == math.inf
    assert conformal_quantile([0.42], 0.5) == 0.42
    with pytest.raises(CalibrationError):
        conformal_quantile([], 0.1)
    with pytest.raises(CalibrationError):
        conformal_quantile([0.1], 1.0)
    print("✓ quantile examples pass")


def test_conformal_quantile_matches_sorted_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        scores = rng.normal(size=n)
        alpha = float(rng.uniform(0.01, 0.99))
        r = math.ceil((n + 1) * (1 - alpha))
        expected = math.inf if r > n else sorted(scores)[r - 1]
        got = conformal_quantile(scores, alpha)
        if math.isinf(expected):
            assert math.isinf(got)
        else:
            assert abs(got - expected) <= 1e-12


def test_quantile_monotone_in_alpha():
    scores = np.random.default_rng(1).uniform(size=200)
    values = [conformal_quantile(scores, a) for a in np.linspace(0.5, 0.01, 40)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_calibrate_marginal_examples():
    cal = _dataset(_true_prob_records([0.9, 0.8, 0.1]))
    pred = calibrate_marginal(cal, LAC, 0.25)
    assert pred.method == Method.MARGINAL
    assert pred.q_hat == pytest.approx(0.9)
    assert pred.n_cal == 3

    doubled = _dataset(_true_prob_records([0.9, 0.8, 0.1] * 2))
    assert calibrate_marginal(doubled, LAC, 0.25).q_hat == pytest.approx(0.9)

    assert calibrate_marginal(cal, LAC, 0.01).q_hat == math.inf

    with pytest.raises(CalibrationError):
        calibrate_marginal(LabeledDataset([], m=2), LAC, 0.1)


def test_calibrate_mondrian_examples():
    """Per-group order statistics"""
    print("\n" + "=" * 60)
    print("Mondrian calibration")
    print("=" * 60)

    easy = _true_prob_records([0.9, 0.8, 0.7, 0.6], group=0, prefix="e")
    hard = _true_prob_records([0.5, 0.4, 0.3, 0.2], group=1, prefix="h")
    cal = _dataset(easy + hard, n_g=2)

    pred = calibrate_mondrian(cal, LAC, 0.2, min_group_n=4)
    print(f"thresholds: {pred.q_hat_by_group}")
    assert pred.q_hat_by_group[0] == pytest.approx(0.4)
    assert pred.q_hat_by_group[1] == pytest.approx(0.8)

    twins = _dataset(
        _true_prob_records([0.9, 0.8, 0.7, 0.6], group=0, prefix="a")
        + _true_prob_records([0.9, 0.8, 0.7, 0.6], group=1, prefix="b"),
        n_g=2,
    )
    mondrian = calibrate_mondrian(twins, LAC, 0.2, min_group_n=4)
    marginal = calibrate_marginal(twins, LAC, 0.2)
    assert mondrian.q_hat_by_group[0] == mondrian.q_hat_by_group[1] == marginal.q_hat
    print("✓ per-group thresholds")


def test_mondrian_small_group_is_an_error():
    records = _synthetic(40, 3, seed=1, group=0, prefix="a") + _synthetic(10, 3, seed=2, group=1, prefix="b")
    cal = _dataset(records, n_g=2)
    with pytest.raises(InsufficientGroupError) as exc:
        calibrate_mondrian(cal, LAC, 0.1, min_group_n=30)
    assert exc.value.group == 1
    assert exc.value.count == 10


def test_calibrate_avgk_examples():
    """Full enumeration of the avg-k threshold"""
    cal = _dataset([
        ProbRecord("a", (0.7, 0.1, 0.1, 0.1), 0, 0),
        ProbRecord("b", (0.4, 0.3, 0.2, 0.1), 1, 0),
    ])
    pred = calibrate_avgk(cal, 1.0)
    assert pred.q_k == pytest.approx(0.3)

    full = calibrate_avgk(cal, 4.0)
    assert full.q_k == -math.inf

    with pytest.raises(CalibrationError):
        calibrate_avgk(cal, 0.0)
    with pytest.raises(CalibrationError):
        calibrate_avgk(cal, 4.5)


def test_avgk_one_hot():
    records = [ProbRecord(f"o{i}", tuple(1.0 if j == i % 3 else 0.0 for j in range(3)), i % 3, 0) for i in range(9)]
    pred = calibrate_avgk(_dataset(records), 1.0)
    assert pred.q_k == 0.0


def test_empirical_coverage():
    class _Set:
        def __init__(self, members):
            self.members = members

    sets = [_Set((0, 1))] * 9 + [_Set((2,))]
    assert empirical_coverage(sets, [0] * 10) == pytest.approx(0.9)
    assert empirical_coverage(sets[:9], [1] * 9) == 1.0
    assert empirical_coverage(sets[:9], [2] * 9) == 0.0
    with pytest.raises(CalibrationError):
        empirical_coverage(sets, [0] * 9)


def test_predictor_serialization(tmp_path):
    cal = _dataset(_synthetic(60, 3, seed=4, group=0, prefix="a") + _synthetic(60, 3, seed=5, group=1, prefix="b"), n_g=2)
    cfg = ScoreConfig(kind="aps", randomized=True, u_mode="seeded")

    for pred in (
        calibrate_marginal(cal, cfg, 0.01, seed=9),
        calibrate_mondrian(cal, cfg, 0.1, min_group_n=30, seed=9),
        calibrate_avgk(cal, 3.0),
    ):
        assert SetPredictor.from_dict(pred.to_dict()) == pred
        path = str(tmp_path / f"{pred.method.value}.json")
        save_predictor(pred, path, metadata={"config_hash": "abc"})
        assert load_predictor(path) == pred

    assert calibrate_marginal(cal, cfg, 0.001).to_dict()["q_hat"] == "inf"


def test_predictor_fields_follow_method():
    with pytest.raises(CalibrationError):
        SetPredictor(method=Method.MARGINAL, m=3, n_g=1, n_cal=5, score_cfg=LAC, alpha=0.1)
    with pytest.raises(CalibrationError):
        SetPredictor(method=Method.MONDRIAN, m=3, n_g=2, n_cal=5, score_cfg=LAC, alpha=0.1,
                     q_hat_by_group={0: 0.5})
    with pytest.raises(CalibrationError):
        SetPredictor(method=Method.AVGK, m=3, n_g=1, n_cal=5, k=1.0, q_k=0.2, q_hat=0.5)


def test_marginal_coverage_guarantee():
    """Repeated (cal, test) draws with n = 2000 each, for lac and raps"""
    print("\n" + "=" * 60)
    print("Marginal coverage over repeated draws")
    print("=" * 60)

    alpha = 0.1
    for cfg in (LAC, ScoreConfig(kind="raps")):
        coverages = []
        for draw in range(50):
            cal = _dataset(_synthetic(2000, 10, seed=1000 + draw, prefix="c"))
            test = _dataset(_synthetic(2000, 10, seed=5000 + draw, prefix="t"))
            pred = calibrate_marginal(cal, cfg, alpha)
            sets = predict_batch(test, pred)
            coverages.append(empirical_coverage(sets, test.labels()))

        coverages = np.array(coverages)
        print(f"{cfg.kind.value}: mean coverage {coverages.mean():.4f}, min {coverages.min():.4f}")
        assert coverages.mean() >= 1 - alpha
        assert np.mean(np.abs(coverages - (1 - alpha)) <= 0.02) >= 0.9
    print("✓ coverage holds")


def _biased_task(n, seed):
    return generate_task(SyntheticTaskSpec(group_weights=(0.5, 0.5), group_accuracy=(0.85, 0.55), n=n, seed=seed))


def test_mondrian_group_coverage():
    """Every group covered on every draw, where marginal sets leave the hard group short"""
    print("\n" + "=" * 60)
    print("Mondrian vs marginal group coverage")
    print("=" * 60)

    alpha = 0.1
    marginal_hard = []
    for draw in range(20):
        cal = _biased_task(10000, seed=600 + draw)
        test = _biased_task(4000, seed=700 + draw)
        groups = test.groups()

        mondrian = predict_batch(test, calibrate_mondrian(cal, LAC, alpha))
        for g in (0, 1):
            coverage = np.mean([s.covered for s in mondrian if s.group == g])
            assert 0.87 <= coverage <= 0.93, f"draw {draw} group {g}: {coverage:.4f}"

        marginal = predict_batch(test, calibrate_marginal(cal, LAC, alpha))
        covered = np.array([s.covered for s in marginal])
        marginal_hard.append(covered[groups == 1].mean())

    print(f"marginal hard-group coverage: mean {np.mean(marginal_hard):.4f}")
    assert np.mean(marginal_hard) < 1 - alpha - 0.02
    print("✓ Mondrian covers both groups")


def test_avgk_average_size_near_k():
    cal = _dataset(_synthetic(20000, 10, seed=77, prefix="c"))
    test = _dataset(_synthetic(20000, 10, seed=78, prefix="t"))
    for k in (1.0, 2.5):
        pred = calibrate_avgk(cal, k)
        assert pred.force_nonempty is False
        sizes = [s.size for s in predict_batch(test, pred)]
        assert abs(np.mean(sizes) - k) <= 0.05

    forced = calibrate_avgk(cal, 1.0, force_nonempty=True)
    sizes = [s.size for s in predict_batch(test, forced)]
    assert min(sizes) == 1
    assert np.mean(sizes) > 1.05


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
