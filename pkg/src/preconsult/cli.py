"""Command-line entry point chaining the library into one pipeline.

Subcommands: stats, rebalance, validate, simulate, judge, inertia, agree,
report. Every subcommand is idempotent for fixed inputs and seed, writes
only to its declared output paths, and exits 0 on success, 1 on runtime
errors, and 2 on usage errors. With --json-errors, runtime errors are
printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import corpus as corpus_mod
from . import inertia as inertia_mod
from . import judge as judge_mod
from . import rebalance as rebalance_mod
from . import report as report_mod
from . import validator as validator_mod
from .clients import ClientError, HttpEmbeddingProvider, client_factory_from_config, spec_from_config
from .simulate import audit_record_to_dict, load_simulation_config, run_batch


def _print_json(payload: dict[str, Any]) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False,
                                    separators=(",", ":")) + "\n")


def _read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _load_json(path: str | Path) -> Any:
    with Path(path).open("r", encoding="utf-8") as handle:
        return json.load(handle)


# -- subcommand handlers --


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = corpus_mod.load_corpus(args.infile, strict=not args.lenient)
    histogram = corpus_mod.turn_histogram(corpus)
    _print_json({
        "source": corpus.source,
        "n": len(corpus),
        "skipped_lines": len(corpus.skipped_lines),
        "histogram": {str(k): v for k, v in histogram.items()},
    })
    return 0


def cmd_rebalance(args: argparse.Namespace) -> int:
    corpus = corpus_mod.load_corpus(args.infile)
    config = rebalance_mod.RebalanceConfig(t_min=args.t_min, seed=args.seed,
                                           target_size=args.target_size)
    if args.mode == "uniform":
        binning = rebalance_mod.bin_by_turn_count(corpus)
        quota = rebalance_mod.determine_quota(binning, config.t_min)
        sampled = rebalance_mod.uniform_sample(corpus, binning, config)
        summary = {
            "mode": "uniform",
            "n": binning.total_n,
            "t_min": config.t_min,
            "b_prime": binning.selected_count,
            "q": quota,
            "per_bin": {str(k): v for k, v in
                        sorted(corpus_mod.turn_histogram(sampled).items())},
            "total": len(sampled),
            "seed": config.seed,
            "out": str(args.outfile),
        }
    else:
        if config.target_size is None:
            raise rebalance_mod.RebalanceError(
                "--target-size is required for skewed mode")
        sampled = rebalance_mod.skewed_sample(corpus, config)
        summary = {
            "mode": "skewed",
            "n": len(corpus),
            "target_size": config.target_size,
            "per_bin": {str(k): v for k, v in
                        sorted(corpus_mod.turn_histogram(sampled).items())}
            if sampled.dialogues else {},
            "total": len(sampled),
            "seed": config.seed,
            "out": str(args.outfile),
        }
    corpus_mod.save_corpus(sampled, args.outfile)
    _print_json(summary)
    return 0


def _load_rules(path: str | None) -> validator_mod.FormatRules:
    if path is None:
        return validator_mod.FormatRules()
    return validator_mod.rules_from_dict(_load_json(path))


def cmd_validate(args: argparse.Namespace) -> int:
    rules = _load_rules(args.rules)
    corpus = corpus_mod.load_corpus(args.infile)
    verdicts = []
    for dialogue in corpus.dialogues:
        for turn in dialogue.turns:
            verdicts.append(validator_mod.evaluate_turn(
                turn.doctor_raw, rules, turn_index=turn.index,
                dialogue_id=dialogue.id))
    _write_jsonl(args.outfile, (validator_mod.verdict_to_dict(v) for v in verdicts))
    fcsr = validator_mod.compute_fcsr(verdicts) if verdicts else None
    _print_json({
        "n_dialogues": len(corpus),
        "n_turns": len(verdicts),
        "fcsr": str(fcsr) if fcsr is not None else None,
        "fcsr_decimal": f"{float(fcsr):.3f}" if fcsr is not None else None,
        "out": str(args.outfile),
    })
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config, doctor_factory, patient_factory = load_simulation_config(args.config)
    cases = corpus_mod.load_cases(args.cases)
    transcripts = run_batch(config, cases, parallelism=args.parallelism,
                            doctor_factory=doctor_factory,
                            patient_factory=patient_factory)
    dialogues = [t.to_dialogue() for t in transcripts if t.dialogue.turns]
    empty = [t for t in transcripts if not t.dialogue.turns]
    corpus_mod.save_corpus(corpus_mod.Corpus(dialogues=dialogues, source="simulate"),
                           args.outfile)
    if args.audit:
        _write_jsonl(args.audit, (audit_record_to_dict(r)
                                  for t in transcripts for r in t.audit))
    _print_json({
        "cases": len(cases),
        "transcripts": len(dialogues),
        "failed_empty": len(empty),
        "errors": sum(1 for t in transcripts if t.error is not None),
        "out": str(args.outfile),
    })
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    config = _load_json(args.config)
    unknown = set(config) - {"client", "rubric", "rules"}
    if unknown:
        raise ClientError(f"unknown judge config fields: {sorted(unknown)}")
    if "client" not in config:
        raise ClientError("judge config needs a 'client' object")
    factory = client_factory_from_config(config["client"])
    rubric = config.get("rubric", judge_mod.JUDGE_RUBRIC)
    rules = (validator_mod.rules_from_dict(config["rules"])
             if "rules" in config else validator_mod.FormatRules())
    corpus = corpus_mod.load_corpus(args.infile)
    judgements = []
    for dialogue in corpus.dialogues:
        client = factory()
        for position, turn in enumerate(dialogue.turns):
            judgements.append(judge_mod.judge_turn(
                dialogue.turns[:position], turn, client, rubric, rules,
                dialogue_id=dialogue.id))
    _write_jsonl(args.outfile, (judge_mod.judgement_to_dict(j) for j in judgements))
    tcsr = judge_mod.compute_tcsr(judgements) if judgements else None
    _print_json({
        "n_dialogues": len(corpus),
        "n_turns": len(judgements),
        "tcsr": str(tcsr) if tcsr is not None else None,
        "tcsr_decimal": f"{float(tcsr):.3f}" if tcsr is not None else None,
        "out": str(args.outfile),
    })
    return 0


def cmd_inertia(args: argparse.Namespace) -> int:
    corpus = corpus_mod.load_corpus(args.infile)
    provider = None
    if args.vectorizer == "provider":
        if not args.provider_config:
            raise ClientError("--provider-config is required with "
                              "--vectorizer provider")
        provider = HttpEmbeddingProvider(spec_from_config(_load_json(args.provider_config)))
    thresholds = inertia_mod.InertiaThresholds(slope_threshold=args.slope_threshold,
                                               level_threshold=args.level_threshold,
                                               late_window=args.late_window)
    reports = []
    series_list = []
    skipped_short = 0
    for dialogue in corpus.dialogues:
        questions = [t.doctor_raw for t in dialogue.turns]
        if len(questions) < 2:
            skipped_short += 1
            continue
        series = inertia_mod.similarity_series(questions, provider=provider,
                                               dialogue_id=dialogue.id)
        series_list.append(series)
        reports.append(inertia_mod.detect_inertia(series, thresholds, questions))
    _write_jsonl(args.outfile, (inertia_mod.report_to_dict(r) for r in reports))
    aggregate_path = args.aggregate or str(Path(args.outfile).with_suffix(".turns.csv"))
    if series_list:
        aggregate = inertia_mod.aggregate_by_turn(series_list)
        report_mod.emit(aggregate, "csv", aggregate_path)
        if args.figures:
            from . import figures
            Path(args.figures).mkdir(parents=True, exist_ok=True)
            figures.similarity_by_turn_figure(
                aggregate, Path(args.figures) / "similarity_by_turn.png")
    _print_json({
        "n_dialogues": len(corpus),
        "analyzed": len(reports),
        "skipped_short": skipped_short,
        "flagged": sum(1 for r in reports if r.flagged),
        "out": str(args.outfile),
        "aggregate": aggregate_path if series_list else None,
    })
    return 0


def _read_label_column(path: str | Path) -> list[str]:
    values = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                values.append(line)
    return values


def cmd_agree(args: argparse.Namespace) -> int:
    labels_a = _read_label_column(args.a)
    labels_b = _read_label_column(args.b)
    stats = judge_mod.agreement_stats(labels_a, labels_b)
    _print_json({
        "n": stats.n,
        "kappa": stats.kappa,
        "spearman_rho": stats.spearman_rho,
    })
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    verdicts = [validator_mod.verdict_from_dict(obj)
                for obj in _read_jsonl(args.verdicts)]
    judgements = [judge_mod.judgement_from_dict(obj)
                  for obj in _read_jsonl(args.judgements)]
    label = report_mod.RunLabel(model=args.label_model,
                                dataset_type=args.label_type,
                                samples=args.label_samples)
    summary = report_mod.summarize_run(verdicts, judgements, label)
    report_mod.emit(summary, args.format, args.outfile)
    outputs = {"summary": str(args.outfile)}

    profile = None
    if args.train_hist:
        histogram = {int(k): int(v) for k, v in _load_json(args.train_hist).items()}
        profile = report_mod.turn_failure_profile(histogram, summary.tcsr_by_turn)
        ext = {"json": ".json", "csv": ".csv", "markdown": ".md"}[args.format]
        profile_path = args.profile_out or str(
            Path(args.outfile).with_suffix(f".profile{ext}"))
        report_mod.emit(profile, args.format, profile_path)
        outputs["profile"] = profile_path

    if args.figures:
        from . import figures
        figures_dir = Path(args.figures)
        figures_dir.mkdir(parents=True, exist_ok=True)
        figures.rates_by_turn_figure(summary, figures_dir / "rates_by_turn.png")
        outputs["rates_figure"] = str(figures_dir / "rates_by_turn.png")
        if profile is not None:
            figures.turn_failure_figure(profile, figures_dir / "turn_failure.png")
            outputs["profile_figure"] = str(figures_dir / "turn_failure.png")

    _print_json({
        "n_turns": summary.n_turns,
        "fcsr": str(summary.fcsr),
        "fcsr_decimal": f"{float(summary.fcsr):.3f}",
        "tcsr": str(summary.tcsr),
        "tcsr_decimal": f"{float(summary.tcsr):.3f}",
        "outputs": outputs,
    })
    return 0


# -- parser --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preconsult",
        description="Turn-count rebalancing, format validation, repetition-drift "
                    "detection, and dialogue simulation for pre-consultation corpora.")
    parser.add_argument("--json-errors", action="store_true",
                        help="print runtime errors to stderr as a JSON object")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="turn-count histogram of a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed lines instead of aborting")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("rebalance", help="uniform or skewed turn-count sampling")
    p.add_argument("--mode", choices=["uniform", "skewed"], required=True)
    p.add_argument("--t-min", dest="t_min", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-size", dest="target_size", type=int, default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_rebalance)

    p = sub.add_parser("validate", help="check format constraints per doctor turn")
    p.add_argument("--rules", default=None, help="rules JSON (defaults built in)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run doctor-patient dialogues over chat clients")
    p.add_argument("--config", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--audit", default=None,
                   help="write the full request/response audit log here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("judge", help="grade clinical utility per turn via a judge client")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("inertia", help="per-turn max similarity and repetition flags")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--vectorizer", choices=["tf", "provider"], default="tf")
    p.add_argument("--provider-config", dest="provider_config", default=None)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--aggregate", default=None,
                   help="per-turn aggregate CSV path (default: <out>.turns.csv)")
    p.add_argument("--slope-threshold", dest="slope_threshold", type=float, default=0.03)
    p.add_argument("--level-threshold", dest="level_threshold", type=float, default=0.6)
    p.add_argument("--late-window", dest="late_window", type=int, default=3)
    p.add_argument("--figures", default=None, help="render figures into this directory")
    p.set_defaults(func=cmd_inertia)

    p = sub.add_parser("agree", help="Cohen's kappa and Spearman's rho of two label files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("report", help="aggregate verdicts and judgements into a report")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--judgements", required=True)
    p.add_argument("--train-hist", dest="train_hist", default=None,
                   help="training histogram JSON for the turn-failure profile")
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--profile-out", dest="profile_out", default=None)
    p.add_argument("--figures", default=None, help="render figures into this directory")
    p.add_argument("--label-model", dest="label_model", default="")
    p.add_argument("--label-type", dest="label_type", default="")
    p.add_argument("--label-samples", dest="label_samples", default="")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime errors -> exit 1, usage is argparse's 2
        if args.json_errors:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
