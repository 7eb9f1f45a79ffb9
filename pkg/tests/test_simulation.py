"""
Test Simulation: synthetic tasks, simulated participants and the mechanism benchmark
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

import math

import numpy as np
import pytest

from conformal import PredictionSet
from errors import DatasetParseError, SimulationError
from simulation.mechanism import DEFAULT_PARTICIPANTS, DEFAULT_TRIALS
from simulation import (
    HumanModel,
    SyntheticTaskSpec,
    Treatment,
    TrialResponse,
    calibrated_concentration,
    default_sweep_configs,
    expected_group_accuracy,
    expected_group_adoption,
    generate_task,
    read_responses_csv,
    run_mechanism_benchmark,
    run_mechanism_sweep,
    simulate_responses,
    write_responses_csv,
)


def _full_sets(ds):
    return [PredictionSet(r.example_id, tuple(range(ds.m)), True, r.group, r.label) for r in ds]


def _singleton_sets(ds):
    return [PredictionSet(r.example_id, (r.label,), True, r.group, r.label) for r in ds]


def _arm_accuracy(responses, treatment, group):
    hits = [r.correct for r in responses if r.treatment == treatment and r.group == group]
    return float(np.mean(hits)), len(hits)


def test_generator_matches_group_accuracy():
    print("\n" + "=" * 60)
    print("Synthetic task generator")
    print("=" * 60)

    ds = generate_task(SyntheticTaskSpec(group_accuracy=(0.85, 0.55), n=20000, seed=1))
    for g, target in enumerate((0.85, 0.55)):
        measured = ds.top1_accuracy(g)
        print(f"group {g}: top-1 {measured:.4f} (target {target})")
        assert abs(measured - target) <= 0.02

    counts = ds.group_counts()
    assert counts[0] / len(ds) == pytest.approx(0.2, abs=0.02)
    assert np.allclose(ds.probs_matrix().sum(axis=1), 1.0, atol=1e-9)
    print("✓ per-group accuracy within tolerance")


def test_generator_is_deterministic():
    spec = SyntheticTaskSpec(n=500, seed=7)
    assert generate_task(spec) == generate_task(spec)
    other = generate_task(SyntheticTaskSpec(n=500, seed=8))
    assert not np.array_equal(generate_task(spec).probs_matrix(), other.probs_matrix())


def test_generator_perfect_accuracy():
    ds = generate_task(SyntheticTaskSpec(group_accuracy=(1.0, 1.0), concentration=200.0, n=2000, seed=2))
    assert ds.top1_accuracy() >= 0.99


def test_task_spec_validation():
    with pytest.raises(SimulationError):
        SyntheticTaskSpec(group_weights=(0.5, 0.6))
    with pytest.raises(SimulationError):
        SyntheticTaskSpec(group_accuracy=(0.0, 0.5))
    with pytest.raises(SimulationError):
        HumanModel(reliance=1.5)
    spec = SyntheticTaskSpec(group_accuracy=(0.9, 0.6), n=100, seed=3)
    assert SyntheticTaskSpec.from_dict(spec.to_dict()) == spec


def test_control_response_cannot_carry_adoption():
    with pytest.raises(SimulationError):
        TrialResponse(0, "t", Treatment.CONTROL, 0, 2, True, chosen_in_set=True)
    with pytest.raises(SimulationError):
        TrialResponse(0, "t", Treatment.MARGINAL, 0, 0, True, chosen_in_set=True)


def test_no_reliance_reduces_to_unaided():
    ds = generate_task(SyntheticTaskSpec(n=3000, seed=4))
    hm = HumanModel(skill=(0.7, 0.5), reliance=0.0, seed=4)
    sets = _singleton_sets(ds)
    assert expected_group_accuracy(sets, hm, 2) == pytest.approx({0: 0.7, 1: 0.5})

    responses = simulate_responses({Treatment.CONTROL: None, Treatment.MARGINAL: sets}, ds, hm, 200, 100)
    for g, u in enumerate(hm.skill):
        acc, n = _arm_accuracy(responses, Treatment.MARGINAL, g)
        assert abs(acc - u) <= 3 * math.sqrt(u * (1 - u) / n)


def test_full_reliance_on_correct_singletons_is_perfect():
    ds = generate_task(SyntheticTaskSpec(n=1000, seed=5))
    hm = HumanModel(reliance=1.0, seed=5)
    sets = _singleton_sets(ds)
    responses = simulate_responses({Treatment.CONTROL: None, Treatment.MARGINAL: sets}, ds, hm, 20, 50)
    aided = [r for r in responses if r.treatment == Treatment.MARGINAL]
    assert all(r.correct for r in aided)
    assert all(r.chosen_in_set for r in aided)
    assert expected_group_accuracy(sets, hm, 2) == pytest.approx({0: 1.0, 1: 1.0})


def test_full_reliance_on_full_sets_matches_closed_form():
    print("\n" + "=" * 60)
    print("Closed-form accuracy with full label sets")
    print("=" * 60)

    ds = generate_task(SyntheticTaskSpec(n=3000, seed=6))
    hm = HumanModel(skill=(0.65, 0.55), reliance=1.0, seed=6)
    sets = _full_sets(ds)
    expected = expected_group_accuracy(sets, hm, 2)
    for g, u in enumerate(hm.skill):
        assert expected[g] == pytest.approx(u + (1 - u) / ds.m)

    responses = simulate_responses({Treatment.CONTROL: None, Treatment.MARGINAL: sets}, ds, hm, 200, 100)
    for g in range(2):
        acc, n = _arm_accuracy(responses, Treatment.MARGINAL, g)
        p = expected[g]
        print(f"group {g}: simulated {acc:.4f}, expected {p:.4f}")
        assert abs(acc - p) <= 3 * math.sqrt(p * (1 - p) / n)
    print("✓ simulation converges to the closed form")


def test_expected_accuracy_decreases_with_size():
    ds = generate_task(SyntheticTaskSpec(n=200, seed=9))
    hm = HumanModel(seed=9)

    def sized(s):
        out = []
        for r in ds:
            others = [c for c in range(ds.m) if c != r.label][:s - 1]
            out.append(PredictionSet(r.example_id, tuple(sorted([r.label] + others)), True, r.group, r.label))
        return out

    previous = None
    for s in range(1, ds.m + 1):
        sets = sized(s)
        assert all(x.size == s and x.covered for x in sets)
        acc = expected_group_accuracy(sets, hm, 2)
        if previous is not None:
            assert all(acc[g] < previous[g] for g in range(2))
        previous = acc


def test_expected_adoption_limits():
    ds = generate_task(SyntheticTaskSpec(n=200, seed=10))
    full = expected_group_adoption(_full_sets(ds), HumanModel(reliance=0.3), 2, ds.m)
    assert full == pytest.approx({0: 1.0, 1: 1.0})
    single = expected_group_adoption(_singleton_sets(ds), HumanModel(skill=(0.6, 0.5), reliance=0.0), 2, ds.m)
    assert single == pytest.approx({0: 0.6, 1: 0.5})


def test_responses_shape_and_determinism():
    ds = generate_task(SyntheticTaskSpec(n=500, seed=11))
    hm = HumanModel(seed=11)
    marginal = [PredictionSet(r.example_id, (r.label, (r.label + 1) % ds.m), True, r.group, r.label)
                for r in ds]
    arms = {Treatment.CONTROL: None, Treatment.AVGK: _singleton_sets(ds), Treatment.MARGINAL: marginal}

    responses = simulate_responses(arms, ds, hm, 30, 20)
    assert len(responses) == 600
    assert responses == simulate_responses(arms, ds, hm, 30, 20)
    assert [r.treatment for r in responses[::20][:3]] == [Treatment.CONTROL, Treatment.AVGK, Treatment.MARGINAL]
    assert all(r.diff == 2 for r in responses)
    assert all(r.chosen_in_set is None for r in responses if r.treatment == Treatment.CONTROL)

    # participant 30 reuses the trial sample of participant 0
    first = [r.trial_id for r in responses if r.participant_id == 0]
    again = simulate_responses(arms, ds, hm, 31, 20)
    assert [r.trial_id for r in again if r.participant_id == 30] == first


def test_simulation_errors():
    ds = generate_task(SyntheticTaskSpec(n=100, seed=12))
    hm = HumanModel(seed=12)
    sets = _singleton_sets(ds)
    with pytest.raises(SimulationError):
        simulate_responses({Treatment.MARGINAL: sets}, ds, hm, 4, 10)
    with pytest.raises(SimulationError):
        simulate_responses({Treatment.CONTROL: None, Treatment.AVGK: sets}, ds, hm, 4, 10)
    with pytest.raises(SimulationError):
        simulate_responses({Treatment.CONTROL: None, Treatment.MARGINAL: sets[:50]}, ds, hm, 4, 60)


def test_response_csv(tmp_path):
    ds = generate_task(SyntheticTaskSpec(n=200, seed=13))
    arms = {Treatment.CONTROL: None, Treatment.MARGINAL: _singleton_sets(ds)}
    responses = simulate_responses(arms, ds, HumanModel(seed=13), 6, 10)
    path = str(tmp_path / "responses.csv")
    write_responses_csv(responses, path)

    with open(path, encoding="utf-8") as f:
        assert f.readline().strip() == "participant_id,trial_id,treatment,group,diff,correct,chosen_in_set"
    assert read_responses_csv(path) == responses

    bad = tmp_path / "bad.csv"
    bad.write_text("participant_id,trial_id\n1,a\n", encoding="utf-8")
    with pytest.raises(DatasetParseError):
        read_responses_csv(str(bad))


def test_mechanism_benchmark_flags():
    print("\n" + "=" * 60)
    print("Mechanism benchmark")
    print("=" * 60)

    report = run_mechanism_benchmark(
        SyntheticTaskSpec(group_accuracy=(0.85, 0.55), n=40000, seed=0), HumanModel(), alpha=0.1
    )
    for tag in ("avgk", "marginal", "conditional"):
        r = report.reports[tag]
        print(f"{tag:<12} dcov={r.delta_cov:.4f} dsize={r.delta_size:.4f} "
              f"dt={r.delta_accuracy_improvement:.4f} expected dt={report.expected_delta_t[tag]:.4f}")
    print(f"flags: {report.flags}")

    assert report.all_passed
    assert report.n_responses == DEFAULT_PARTICIPANTS * DEFAULT_TRIALS
    assert len(report.key_factors.rows) == 3
    assert set(report.to_dict()["flags"]) == {
        "mondrian_coverage_equalized",
        "marginal_coverage_gap_larger",
        "mondrian_size_gap_larger",
        "mondrian_disparate_impact_larger",
    }
    print("✓ mechanism checks hold")


def test_mechanism_without_bias():
    report = run_mechanism_benchmark(
        SyntheticTaskSpec(group_accuracy=(0.7, 0.7), n=20000, seed=1),
        HumanModel(skill=(0.6, 0.6), seed=1),
        simulate=False,
    )
    for tag, r in report.reports.items():
        assert r.delta_cov < 0.04, tag
        assert r.delta_size < 0.3, tag
        assert report.expected_delta_t[tag] < 0.025, tag


def test_mondrian_disparate_impact_over_seeds():
    print("\n" + "=" * 60)
    print("Disparate impact over 20 seeds")
    print("=" * 60)

    wins = 0
    for seed in range(20):
        report = run_mechanism_benchmark(
            SyntheticTaskSpec(group_accuracy=(0.85, 0.55), n=20000, seed=seed),
            HumanModel(seed=seed), simulate=False,
        )
        wins += report.flags["mondrian_disparate_impact_larger"]
    print(f"Mondrian disparate impact larger in {wins}/20 seeds")
    assert wins >= 18


def test_calibrated_concentration_tracks_accuracy():
    accuracy = (0.8, 0.5)
    concentration = calibrated_concentration(accuracy)
    assert concentration == (72.0, 18.0)
    ds = generate_task(SyntheticTaskSpec(group_accuracy=accuracy, group_concentration=concentration,
                                         n=20000, seed=14))
    probs, groups = ds.probs_matrix(), ds.groups()
    top = probs.max(axis=1)
    for g, a in enumerate(accuracy):
        assert abs(top[groups == g].mean() - a) < 0.03
        assert abs((probs[groups == g].argmax(axis=1) == ds.labels()[groups == g]).mean() - a) < 0.03

    spec = SyntheticTaskSpec(group_concentration=concentration)
    assert SyntheticTaskSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(SimulationError):
        SyntheticTaskSpec(group_concentration=(10.0,))
    with pytest.raises(SimulationError):
        calibrated_concentration((1.0, 0.5))


def test_mechanism_sweep():
    print("\n" + "=" * 60)
    print("Key-factor sweep over 20 configurations")
    print("=" * 60)

    configs = default_sweep_configs()
    assert len(configs) == 20
    assert configs == default_sweep_configs()
    assert all(hm.skill[0] == hm.skill[1] for _, hm in configs)
    assert all(spec.group_accuracy[0] - spec.group_accuracy[1] >= 0.15 - 1e-3 for spec, _ in configs)

    sweep = run_mechanism_sweep(configs)
    spearman = sweep.key_factors.spearman
    print(f"spearman: {spearman}")
    assert len(sweep.key_factors.rows) == 60
    assert sweep.key_factors.rows["adoption_diff"].notna().all()
    # the more improved group gets the smaller sets
    assert spearman["size_diff"] < 0
    assert sweep.flags["size_correlates_more_than_coverage"] is True
    assert sweep.to_dict()["flags"] == sweep.flags
    print("✓ size difference tracks disparate impact more closely than coverage difference")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
