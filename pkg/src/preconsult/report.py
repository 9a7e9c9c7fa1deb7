"""Aggregation of verdicts and judgements into reportable artifacts.

Three artifact kinds are emitted: a run summary (global and per-turn
format/task satisfaction rates), a turn-failure profile pairing training
turn frequency against evaluation failure rate, and the per-turn
similarity aggregate produced by the drift analysis. All rates are kept
as exact rationals internally and rounded to three decimals only at
emission. Emitted files are deterministic byte-for-byte for identical
inputs: no timestamps, provenance only through the caller-supplied label.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

from .inertia import TurnAggregate
from .judge import TurnJudgement, spearman_rho
from .validator import TurnVerdict


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class RunLabel:
    model: str = ""
    dataset_type: str = ""
    samples: str = ""


@dataclass
class RunSummary:
    label: RunLabel
    fcsr: Fraction
    tcsr: Fraction
    fcsr_by_turn: dict[int, Fraction]
    tcsr_by_turn: dict[int, Fraction]
    turn_counts: dict[int, int]
    n_dialogues: int
    n_turns: int


def _rate_by_turn(passes: Mapping[int, int], totals: Mapping[int, int]) -> dict[int, Fraction]:
    return {t: Fraction(passes.get(t, 0), totals[t]) for t in sorted(totals)}


def summarize_run(verdicts: Sequence[TurnVerdict],
                  judgements: Sequence[TurnJudgement],
                  label: RunLabel) -> RunSummary:
    """Global and per-turn rates over one evaluation run.

    Verdicts and judgements must cover exactly the same (dialogue, turn)
    pairs.
    """
    if not verdicts:
        raise ReportError("no verdicts to summarize")
    verdict_keys = {(v.dialogue_id, v.turn) for v in verdicts}
    judgement_keys = {(j.dialogue_id, j.turn) for j in judgements}
    if verdict_keys != judgement_keys:
        missing = sorted(verdict_keys ^ judgement_keys)[:5]
        raise ReportError(f"verdicts and judgements cover different turns "
                          f"(first differences: {missing})")
    if len(verdict_keys) != len(verdicts) or len(judgement_keys) != len(judgements):
        raise ReportError("duplicate (dialogue, turn) entries")

    totals: dict[int, int] = {}
    format_passes: dict[int, int] = {}
    task_passes: dict[int, int] = {}
    for verdict in verdicts:
        totals[verdict.turn] = totals.get(verdict.turn, 0) + 1
        if verdict.overall:
            format_passes[verdict.turn] = format_passes.get(verdict.turn, 0) + 1
    for judgement in judgements:
        if judgement.passed:
            task_passes[judgement.turn] = task_passes.get(judgement.turn, 0) + 1

    n_turns = len(verdicts)
    return RunSummary(
        label=label,
        fcsr=Fraction(sum(format_passes.values()), n_turns),
        tcsr=Fraction(sum(task_passes.values()), n_turns),
        fcsr_by_turn=_rate_by_turn(format_passes, totals),
        tcsr_by_turn=_rate_by_turn(task_passes, totals),
        turn_counts=dict(sorted(totals.items())),
        n_dialogues=len({v.dialogue_id for v in verdicts}),
        n_turns=n_turns,
    )


@dataclass
class TurnFailureProfile:
    """Per-turn training frequency paired with evaluation failure rate
    (1 - task satisfaction), plus their rank correlation."""

    turns: list[int]
    training_frequency: list[float]
    failure_rate: list[float]
    rho: float | None


def turn_failure_profile(training_histogram: Mapping[int, int],
                         per_turn_tcsr: Mapping[int, Fraction | float]) -> TurnFailureProfile:
    """Join the training turn-count histogram against per-turn task rates
    over their overlapping turn range."""
    turns = sorted(set(training_histogram) & set(per_turn_tcsr))
    if not turns:
        raise ReportError("no overlapping turns between histogram and rates")
    frequency = [float(training_histogram[t]) for t in turns]
    failure = [float(1 - Fraction(per_turn_tcsr[t])) for t in turns]
    rho = spearman_rho(frequency, failure) if len(turns) >= 2 else None
    return TurnFailureProfile(turns=turns, training_frequency=frequency,
                              failure_rate=failure, rho=rho)


# -- emission --


def _dec3(value: Fraction | float) -> str:
    return f"{float(value):.3f}"


def _summary_payload(summary: RunSummary) -> dict[str, Any]:
    by_turn = []
    for turn in sorted(summary.turn_counts):
        by_turn.append({
            "turn": turn,
            "n": summary.turn_counts[turn],
            "fcsr": str(summary.fcsr_by_turn[turn]),
            "fcsr_decimal": _dec3(summary.fcsr_by_turn[turn]),
            "tcsr": str(summary.tcsr_by_turn[turn]),
            "tcsr_decimal": _dec3(summary.tcsr_by_turn[turn]),
        })
    return {
        "kind": "run_summary",
        "label": {
            "model": summary.label.model,
            "type": summary.label.dataset_type,
            "samples": summary.label.samples,
        },
        "n_dialogues": summary.n_dialogues,
        "n_turns": summary.n_turns,
        "fcsr": str(summary.fcsr),
        "fcsr_decimal": _dec3(summary.fcsr),
        "tcsr": str(summary.tcsr),
        "tcsr_decimal": _dec3(summary.tcsr),
        "by_turn": by_turn,
    }


def _profile_payload(profile: TurnFailureProfile) -> dict[str, Any]:
    rows = [{"turn": t, "training_frequency": f, "failure_rate": r}
            for t, f, r in zip(profile.turns, profile.training_frequency,
                               profile.failure_rate)]
    return {"kind": "turn_failure_profile", "spearman_rho": profile.rho, "rows": rows}


def _aggregate_payload(rows: Sequence[TurnAggregate]) -> dict[str, Any]:
    return {"kind": "similarity_by_turn",
            "rows": [{"turn": r.turn, "mean_jaccard": r.mean_jaccard,
                      "mean_cosine": r.mean_cosine, "n": r.n} for r in rows]}


def _summary_markdown(summary: RunSummary) -> str:
    lines = [
        "| Model | Type | Samples | FCSR | TCSR |",
        "| --- | --- | --- | ---: | ---: |",
        f"| {summary.label.model} | {summary.label.dataset_type} "
        f"| {summary.label.samples} | {_dec3(summary.fcsr)} | {_dec3(summary.tcsr)} |",
        "",
        f"Dialogues: {summary.n_dialogues}; turns: {summary.n_turns}",
        "",
        "| Turn | n | FCSR | TCSR |",
        "| ---: | ---: | ---: | ---: |",
    ]
    for turn in sorted(summary.turn_counts):
        lines.append(f"| {turn} | {summary.turn_counts[turn]} "
                     f"| {_dec3(summary.fcsr_by_turn[turn])} "
                     f"| {_dec3(summary.tcsr_by_turn[turn])} |")
    return "\n".join(lines) + "\n"


def _profile_markdown(profile: TurnFailureProfile) -> str:
    rho = "undefined" if profile.rho is None else f"{profile.rho:.4f}"
    lines = [
        f"Spearman rho (frequency vs failure rate): {rho}",
        "",
        "| Turn | Training frequency | Failure rate (1-TCSR) |",
        "| ---: | ---: | ---: |",
    ]
    for t, f, r in zip(profile.turns, profile.training_frequency,
                       profile.failure_rate):
        lines.append(f"| {t} | {f:g} | {_dec3(r)} |")
    return "\n".join(lines) + "\n"


def _aggregate_markdown(rows: Sequence[TurnAggregate]) -> str:
    lines = [
        "| Turn | Mean Jaccard | Mean cosine | n |",
        "| ---: | ---: | ---: | ---: |",
    ]
    for row in rows:
        lines.append(f"| {row.turn} | {_dec3(row.mean_jaccard)} "
                     f"| {_dec3(row.mean_cosine)} | {row.n} |")
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit(artifact: RunSummary | TurnFailureProfile | Sequence[TurnAggregate],
         fmt: str, path: str | Path) -> None:
    """Write the artifact as json, csv, or markdown. Output bytes depend
    only on the artifact."""
    path = Path(path)
    if fmt not in ("json", "csv", "markdown"):
        raise ReportError(f"unknown format {fmt!r}")

    if isinstance(artifact, RunSummary):
        if fmt == "json":
            text = json.dumps(_summary_payload(artifact), ensure_ascii=False,
                              indent=2) + "\n"
            path.write_text(text, encoding="utf-8")
        elif fmt == "markdown":
            path.write_text(_summary_markdown(artifact), encoding="utf-8")
        else:
            rows: list[Sequence[Any]] = [
                [t, artifact.turn_counts[t],
                 str(artifact.fcsr_by_turn[t]), _dec3(artifact.fcsr_by_turn[t]),
                 str(artifact.tcsr_by_turn[t]), _dec3(artifact.tcsr_by_turn[t])]
                for t in sorted(artifact.turn_counts)]
            rows.append(["all", artifact.n_turns, str(artifact.fcsr),
                         _dec3(artifact.fcsr), str(artifact.tcsr),
                         _dec3(artifact.tcsr)])
            _write_csv(path, ["turn", "n", "fcsr_ratio", "fcsr", "tcsr_ratio", "tcsr"],
                       rows)
    elif isinstance(artifact, TurnFailureProfile):
        if fmt == "json":
            text = json.dumps(_profile_payload(artifact), ensure_ascii=False,
                              indent=2) + "\n"
            path.write_text(text, encoding="utf-8")
        elif fmt == "markdown":
            path.write_text(_profile_markdown(artifact), encoding="utf-8")
        else:
            _write_csv(path, ["turn", "training_frequency", "failure_rate"],
                       list(zip(artifact.turns, artifact.training_frequency,
                                artifact.failure_rate)))
    else:
        rows_list = list(artifact)
        if not all(isinstance(r, TurnAggregate) for r in rows_list):
            raise ReportError("unsupported artifact type")
        if fmt == "json":
            text = json.dumps(_aggregate_payload(rows_list), ensure_ascii=False,
                              indent=2) + "\n"
            path.write_text(text, encoding="utf-8")
        elif fmt == "markdown":
            path.write_text(_aggregate_markdown(rows_list), encoding="utf-8")
        else:
            _write_csv(path, ["turn", "mean_jaccard", "mean_cosine", "n"], rows_list)
