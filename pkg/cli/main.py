"""
Command-line pipeline: calibrate, predict, tune, audit, simulate, stats and
the mechanism benchmarks

Exit codes: 0 success, 1 internal error, 2 user, data or configuration error.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from conformal import (
    Method,
    calibrate_avgk,
    calibrate_marginal,
    calibrate_mondrian,
    empirical_coverage,
    load_predictor,
    predict_batch,
    save_predictor,
    set_size_summary,
    read_sets_csv,
    write_sets_csv,
)
from data import LabeledDataset, load_dataset, load_names, save_dataset, split
from errors import ConfigError, ToolkitError
from fairness import build_treatment_report, format_report, key_factor_table
from inference import DesignSpec, build_design, fit_logistic, inference_summary, odds_ratios, or_table
from simulation import (
    HumanModel,
    SyntheticTaskSpec,
    Treatment,
    default_sweep_configs,
    generate_task,
    read_responses_csv,
    run_mechanism_benchmark,
    run_mechanism_sweep,
    write_responses_csv,
)
from tuning import search_avgk, search_score_config, tune_avgk
from .config import RunConfig, provenance, resolve_config, verify_output, write_json, write_sidecar

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2

DISPARATE_IMPACT_FLAG = "mondrian_disparate_impact_larger"


def _banner(title: str):
    print("=" * 60)
    print(title)
    print("=" * 60)


def _mark(ok: bool) -> str:
    return "✓" if ok else "✗"


def _out(config: RunConfig, name: str) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return os.path.join(config.output_dir, name)


def _load(path: Optional[str], config: RunConfig) -> Optional[LabeledDataset]:
    if not path:
        return None
    return load_dataset(path, format=config.task.format, names_path=config.task.names, n_g=config.task.n_g)


def load_splits(config: RunConfig) -> Tuple[Optional[LabeledDataset], Optional[LabeledDataset], Optional[LabeledDataset]]:
    """(cal, calval, test) from dataset paths, or from splitting the synthetic task"""
    task = config.task
    if task.synthetic is None and not task.has_paths:
        raise ConfigError("task needs dataset paths or a synthetic task")
    if task.synthetic is not None:
        calval, cal, test = split(generate_task(task.synthetic), task.split)
        return cal, calval, test
    return _load(task.cal, config), _load(task.calval, config), _load(task.test, config)


def _require(ds: Optional[LabeledDataset], name: str) -> LabeledDataset:
    if ds is None:
        raise ConfigError(f"this command needs a {name} dataset")
    return ds


def cmd_calibrate(config: RunConfig) -> Dict:
    cal, calval, _ = load_splits(config)
    cal = _require(cal, "cal")

    nonempty = config.nonempty_sets()
    if config.method == Method.MARGINAL:
        pred = calibrate_marginal(cal, config.score, config.alpha, seed=config.seed, force_nonempty=nonempty)
    elif config.method == Method.MONDRIAN:
        pred = calibrate_mondrian(cal, config.score, config.alpha, min_group_n=config.min_group_n,
                                  seed=config.seed, force_nonempty=nonempty)
    else:
        k = config.k
        if k is None:
            k = tune_avgk(cal, _require(calval, "calval"), 1.0 - config.alpha, force_nonempty=nonempty)
        pred = calibrate_avgk(cal, k, seed=config.seed, force_nonempty=nonempty)

    summary = {"n_cal": len(cal), "method": pred.method.value}
    if calval is not None:
        sets = predict_batch(calval, pred, jobs=config.jobs)
        summary["calval_coverage"] = empirical_coverage(sets, calval.labels())
        summary["calval_avg_size"] = set_size_summary(sets)["avg_size"]

    path = _out(config, "predictor.json")
    save_predictor(pred, path, metadata={**provenance(config), "summary": summary})

    _banner(f"Calibration: {pred.method.value}")
    print(f"n_cal:     {len(cal)}")
    if pred.method == Method.MARGINAL:
        print(f"q_hat:     {pred.q_hat}")
    elif pred.method == Method.MONDRIAN:
        for g, q in sorted(pred.q_hat_by_group.items()):
            print(f"q_hat[{cal.group_name(g)}]: {q}")
    else:
        print(f"k:         {pred.k:.5f}")
        print(f"q_k:       {pred.q_k}")
    if "calval_coverage" in summary:
        print(f"calval coverage: {summary['calval_coverage']:.4f}")
    print(f"✓ predictor written to {path}")
    return summary


def cmd_predict(config: RunConfig, predictor_path: Optional[str] = None, data_path: Optional[str] = None) -> Dict:
    pred = load_predictor(predictor_path or os.path.join(config.output_dir, "predictor.json"))
    if data_path:
        ds = _load(data_path, config)
    else:
        ds = _require(load_splits(config)[2], "test")

    sets = predict_batch(ds, pred, jobs=config.jobs)
    path = _out(config, "sets.csv")
    write_sets_csv(sets, path)
    write_sidecar(path, config, len(sets))

    summary = set_size_summary(sets)
    _banner(f"Prediction: {pred.method.value}")
    print(f"records:  {summary['n']}")
    print(f"coverage: {summary['coverage']:.4f}")
    print(f"avg size: {summary['avg_size']:.4f}")
    print(f"✓ sets written to {path}")
    return summary


def cmd_tune(config: RunConfig) -> Dict:
    cal, calval, _ = load_splits(config)
    cal, calval = _require(cal, "cal"), _require(calval, "calval")

    if config.method == Method.AVGK:
        result = search_avgk(cal, calval, 1.0 - config.alpha, force_nonempty=config.nonempty_sets())
        payload = {"avgk": result.to_dict()}
        _banner("Tuning: avg-k budget")
        print(f"k:        {result.k:.5f}")
        print(f"coverage: {result.coverage:.4f} (target {result.target_coverage:.4f})")
    else:
        report = search_score_config(cal, calval, config.score.kind, config.method, config.alpha,
                                     config.tune, jobs=config.jobs, min_group_n=config.min_group_n)
        payload = {"tuning": report.to_dict(), "score": report.winner.cfg.to_dict()}
        _banner(f"Tuning: {report.kind.value} / {report.method.value}")
        print(f"trials:   {len(report.trials)}")
        print(f"winner:   {report.winner.cfg.to_dict()}")
        print(f"avg size: {report.winner.avg_size:.4f}")
        print(f"coverage: {report.winner.coverage:.4f}")
        print(f"{_mark(not report.fallback)} coverage target {'met' if not report.fallback else 'missed'}")

    path = _out(config, "tuning.json")
    write_json(path, payload, config)
    print(f"✓ tuning report written to {path}")
    return payload


def _tagged(paths: Sequence[str]) -> List[Tuple[str, str]]:
    """`tag=path` pairs; a bare path is tagged with its file stem"""
    out = []
    for item in paths:
        tag, sep, path = item.partition("=")
        if not sep:
            tag, path = os.path.splitext(os.path.basename(item))[0], item
        out.append((tag, path))
    return out


def cmd_audit(config: RunConfig, set_paths: Sequence[str], responses_path: Optional[str] = None) -> Dict:
    if not set_paths:
        raise ConfigError("audit needs at least one prediction-set file")
    tagged = [(tag, read_sets_csv(path)) for tag, path in _tagged(set_paths)]

    n_g = config.task.n_g
    group_names = None
    if config.task.names:
        _, group_names = load_names(config.task.names)
        n_g = n_g or (len(group_names) if group_names else None)
    if n_g is None:
        n_g = max((s.group for _, sets in tagged for s in sets), default=-1) + 1

    responses = read_responses_csv(responses_path) if responses_path else []
    control = [r for r in responses if r.treatment == Treatment.CONTROL] or None

    reports = []
    for tag, sets in tagged:
        treated = [r for r in responses if r.treatment.value == tag]
        report = build_treatment_report(sets, n_g, treatment=tag, responses=treated or None,
                                        control=control if treated else None)
        reports.append((tag, report))
        print(format_report(report, group_names))

    payload: Dict = {"reports": {tag: r.to_dict() for tag, r in reports}}
    with_improvements = [(tag, r) for tag, r in reports if r.improvements is not None]
    if with_improvements:
        payload["key_factors"] = key_factor_table(with_improvements).to_dict()

    path = _out(config, "audit.json")
    write_json(path, payload, config)
    print(f"✓ audit written to {path}")
    return payload


def _synthetic(config: RunConfig) -> SyntheticTaskSpec:
    if config.task.synthetic is None:
        raise ConfigError("this command needs a synthetic task")
    return config.task.synthetic


def cmd_simulate(config: RunConfig, export_task: bool = False) -> Dict:
    spec = _synthetic(config)
    hm = config.human_model or HumanModel(seed=config.seed)
    report = run_mechanism_benchmark(
        spec, hm, alpha=config.alpha, score_cfg=config.score,
        participants=config.participants, trials_per_participant=config.trials_per_participant,
        min_group_n=config.min_group_n, jobs=config.jobs,
    )

    responses_path = _out(config, "responses.csv")
    write_responses_csv(report.responses, responses_path)
    write_sidecar(responses_path, config, len(report.responses))
    factors_path = _out(config, "key_factors.csv")
    report.key_factors.to_csv(factors_path)
    write_sidecar(factors_path, config, len(report.key_factors.rows))
    if export_task:
        task_path = _out(config, "task_test.csv")
        save_dataset(report.dataset, task_path)
        write_sidecar(task_path, config, len(report.dataset))

    payload = report.to_dict()
    path = _out(config, "simulate.json")
    write_json(path, payload, config)

    _banner("Mechanism benchmark")
    for tag, r in report.reports.items():
        print(f"{tag:<12} dcov={r.delta_cov:.4f} dsize={r.delta_size:.4f} "
              f"delta_t={r.delta_accuracy_improvement:.4f} (expected {report.expected_delta_t[tag]:.4f})")
    for name, ok in report.flags.items():
        print(f"  {_mark(ok)} {name}")
    print(f"✓ {report.n_responses} responses written to {responses_path}")
    return payload


def cmd_stats(config: RunConfig, responses_path: str, include_diff: bool = True, at_diff: float = 0.0) -> Dict:
    responses = read_responses_csv(responses_path)
    spec = DesignSpec(include_diff=include_diff)
    design = build_design(responses, spec)
    fit = fit_logistic(design.X, design.y, design.clusters, terms=design.terms)
    ors = odds_ratios(fit, spec, at_diff=at_diff)
    payload = inference_summary(fit, ors, spec)

    path = _out(config, "stats.json")
    write_json(path, payload, config)

    _banner("Odds ratios against control")
    table = or_table(ors, reference=spec.reference_treatment)
    print(f"{'group':<10}" + "".join(f"{t:>14}" for t in table.columns))
    for g in design.groups:
        cells = [f"{ors[(t, g)].odds_ratio:.3f}{ors[(t, g)].stars}" for t in table.columns]
        print(f"{g:<10}" + "".join(f"{c:>14}" for c in cells))
    print(f"{'maxROR':<10}" + "".join(f"{v:>14.3f}" for v in table.loc['maxROR']))
    print(f"{_mark(fit.converged)} fit converged after {fit.iterations} iterations, {fit.n_clusters} clusters")
    print(f"✓ statistics written to {path}")
    return payload


def cmd_bench_mechanism(config: RunConfig, seeds: int = 20) -> Dict:
    base = config.task.synthetic or SyntheticTaskSpec()
    hm = config.human_model or HumanModel()
    runs = []
    for offset in range(seeds):
        seed = config.seed + offset
        report = run_mechanism_benchmark(
            replace(base, seed=seed), replace(hm, seed=seed), alpha=config.alpha, score_cfg=config.score,
            simulate=False, min_group_n=config.min_group_n, jobs=config.jobs,
        )
        runs.append({
            "seed": seed,
            "flags": report.flags,
            "delta_cov": {t: r.delta_cov for t, r in report.reports.items()},
            "delta_size": {t: r.delta_size for t, r in report.reports.items()},
            "expected_delta_t": report.expected_delta_t,
        })
    wins = sum(run["flags"][DISPARATE_IMPACT_FLAG] for run in runs)
    payload = {"n_seeds": seeds, "disparate_impact_wins": wins, "runs": runs}

    path = _out(config, "bench_mechanism.json")
    write_json(path, payload, config)

    _banner(f"Mechanism benchmark over {seeds} seeds")
    for run in runs:
        marks = " ".join(_mark(ok) for ok in run["flags"].values())
        print(f"seed {run['seed']:>4}: {marks}")
    print(f"Mondrian disparate impact larger in {wins}/{seeds} seeds")
    print(f"✓ benchmark written to {path}")
    return payload


def cmd_bench_sweep(config: RunConfig, n_configs: int = 20, n: int = 6000) -> Dict:
    configs = default_sweep_configs(n_configs=n_configs, seed=config.seed, n=n)
    sweep = run_mechanism_sweep(configs, alpha=config.alpha, score_cfg=config.score,
                                min_group_n=config.min_group_n, jobs=config.jobs)
    payload = sweep.to_dict()
    path = _out(config, "bench_sweep.json")
    write_json(path, payload, config)
    factors_path = _out(config, "sweep_key_factors.csv")
    sweep.key_factors.to_csv(factors_path)
    write_sidecar(factors_path, config, len(sweep.key_factors.rows))

    _banner(f"Key-factor sweep over {n_configs} configurations")
    for column, rho in sweep.key_factors.spearman.items():
        print(f"spearman({column}, delta_t) = {'undefined' if rho is None else f'{rho:+.3f}'}")
    for name, ok in sweep.flags.items():
        print(f"  {'-' if ok is None else _mark(ok)} {name}")
    print(f"✓ sweep written to {path}")
    return payload


def cmd_verify(paths: Sequence[str]) -> bool:
    _banner("Provenance check")
    all_ok = True
    for path in paths:
        result = verify_output(path)
        all_ok = all_ok and result["ok"]
        detail = "" if result["ok"] else f" (embedded {result['embedded']}, derived {result['derived']})"
        print(f"  {_mark(result['ok'])} {path}{detail}")
    return all_ok


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON run configuration")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--alpha", type=float)
    shared.add_argument("--method", choices=[m.value for m in Method])
    shared.add_argument("--score", choices=["lac", "aps", "raps", "saps"])
    shared.add_argument("--k", type=float, help="avg-k budget; tuned on calval when absent")
    shared.add_argument("--out", dest="output_dir", help="output directory")
    shared.add_argument("--jobs", type=int, help="worker threads; never changes outputs")

    parser = argparse.ArgumentParser(prog="conformal-fairness", description="Set prediction and fairness audits")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--verify", nargs="+", metavar="FILE", help="check the config hash embedded in outputs")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("calibrate", parents=[shared], help="calibrate a set predictor")
    p = sub.add_parser("predict", parents=[shared], help="predict sets for a dataset")
    p.add_argument("--predictor", help="predictor artifact (default: <out>/predictor.json)")
    p.add_argument("--data", help="dataset to predict (default: the test split)")
    sub.add_parser("tune", parents=[shared], help="tune score hyperparameters or the avg-k budget")
    p = sub.add_parser("audit", parents=[shared], help="audit prediction sets per group")
    p.add_argument("--sets", nargs="+", default=[], help="set CSVs, optionally as treatment=path")
    p.add_argument("--responses", help="response CSV for accuracy improvements")
    p = sub.add_parser("simulate", parents=[shared], help="simulate participants on a synthetic task")
    p.add_argument("--export-task", action="store_true", help="also write the synthetic test split")
    p = sub.add_parser("stats", parents=[shared], help="fit the clustered logistic model")
    p.add_argument("--responses", required=True)
    p.add_argument("--no-diff", action="store_true", help="leave the difficulty covariate out")
    p.add_argument("--at-diff", type=float, default=0.0)
    p = sub.add_parser("bench-mechanism", parents=[shared], help="mechanism checks over many seeds")
    p.add_argument("--seeds", type=int, default=20)
    p = sub.add_parser("bench-sweep", parents=[shared], help="key-factor sweep over configurations")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--n", type=int, default=6000)
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    return {key: getattr(args, key, None) for key in ("seed", "alpha", "method", "score", "k", "output_dir", "jobs")}


def run(args: argparse.Namespace) -> int:
    if args.verify:
        return EXIT_OK if cmd_verify(args.verify) else EXIT_USER

    config = resolve_config(args.config, _overrides(args))
    if args.command == "calibrate":
        cmd_calibrate(config)
    elif args.command == "predict":
        cmd_predict(config, args.predictor, args.data)
    elif args.command == "tune":
        cmd_tune(config)
    elif args.command == "audit":
        cmd_audit(config, args.sets, args.responses)
    elif args.command == "simulate":
        cmd_simulate(config, export_task=args.export_task)
    elif args.command == "stats":
        cmd_stats(config, args.responses, include_diff=not args.no_diff, at_diff=args.at_diff)
    elif args.command == "bench-mechanism":
        cmd_bench_mechanism(config, seeds=args.seeds)
    elif args.command == "bench-sweep":
        cmd_bench_sweep(config, n_configs=args.configs, n=args.n)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.verify and args.command is None:
        parser.print_help()
        return EXIT_USER
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    try:
        return run(args)
    except ToolkitError as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return getattr(e, "exit_code", EXIT_USER)
    except KeyboardInterrupt:
        print("\n✗ interrupted", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:
        logger.exception("internal error")
        print(f"✗ internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
