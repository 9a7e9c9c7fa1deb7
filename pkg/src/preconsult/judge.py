"""Task-constraint judging and the agreement statistics that validate it.

A judge client grades each doctor turn for clinical utility: does the
question elicit new diagnostically relevant information given everything
already said? The judge sees the entire prior transcript, because "new"
is undecidable without it. Judge output must follow a constrained
verdict format; anything else is an error carrying the raw text, never a
silent coercion.

The default rubric below is this toolkit's own wording of the criterion
and output contract; override it per deployment via the judge config.

Cohen's kappa and Spearman's rank correlation quantify how well two
graders (for example, the judge against a human rater) agree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

from .clients import ChatMessage, ModelClient
from .corpus import Turn
from .validator import FormatRules, ResponseParseError, parse_structured_response

JUDGE_RUBRIC = """\
You are a rigorous clinical reviewer grading one question from a medical \
pre-consultation dialogue.

Criterion (clinical utility): the question must effectively elicit \
additional clinical information relevant to diagnosis. A question fails \
when it asks for information already provided or clearly inferable from \
the conversation so far, or when it cannot advance the diagnostic goal.

Reply with exactly two lines:
verdict: pass|fail
rationale: <one sentence>
"""


class JudgeOutputError(Exception):
    """Judge output did not follow the verdict contract."""

    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(f"{message}; raw judge output: {raw!r}")


@dataclass
class TurnJudgement:
    turn: int
    passed: bool
    rationale: str
    raw: str
    dialogue_id: str = ""


_VERDICT_RE = re.compile(r"^\s*verdict\s*:\s*(pass|fail)\b", re.IGNORECASE)
_RATIONALE_RE = re.compile(r"^\s*rationale\s*:\s*(.*)$", re.IGNORECASE)


def parse_judge_verdict(raw: str) -> tuple[bool, str]:
    verdict: bool | None = None
    rationale = ""
    for line in raw.splitlines():
        match = _VERDICT_RE.match(line)
        if match and verdict is None:
            verdict = match.group(1).lower() == "pass"
            continue
        match = _RATIONALE_RE.match(line)
        if match and not rationale:
            rationale = match.group(1).strip()
    if verdict is None:
        raise JudgeOutputError("no 'verdict: pass|fail' line found", raw)
    return verdict, rationale


def _question_for_display(turn: Turn, rules: FormatRules) -> str:
    try:
        parsed = parse_structured_response(turn.doctor_raw, rules)
    except ResponseParseError:
        return turn.doctor_raw
    lines = [parsed.question] + [f"- {option}" for option in parsed.options]
    return "\n".join(lines)


def render_judge_prompt(prior_turns: Sequence[Turn], turn: Turn,
                        rubric: str = JUDGE_RUBRIC,
                        rules: FormatRules | None = None) -> list[ChatMessage]:
    """Rubric as the system message; the full prior conversation and the
    judged question as the user message."""
    rules = rules or FormatRules()
    history_lines: list[str] = []
    for prior in prior_turns:
        history_lines.append(f"[turn {prior.index}] doctor:")
        history_lines.append(_question_for_display(prior, rules))
        if prior.patient_answer is not None:
            history_lines.append(f"[turn {prior.index}] patient: {prior.patient_answer}")
    history = "\n".join(history_lines) if history_lines else "(no prior turns)"
    body = (f"Conversation so far:\n{history}\n\n"
            f"Question under review (turn {turn.index}):\n"
            f"{_question_for_display(turn, rules)}")
    return [ChatMessage("system", rubric), ChatMessage("user", body)]


def judge_turn(prior_turns: Sequence[Turn], turn: Turn, judge_client: ModelClient,
               rubric: str = JUDGE_RUBRIC, rules: FormatRules | None = None,
               dialogue_id: str = "") -> TurnJudgement:
    """Grade one doctor turn given everything that came before it.

    The transcript is never mutated; with a deterministic client, judging
    a turn twice yields identical judgements.
    """
    messages = render_judge_prompt(prior_turns, turn, rubric, rules)
    raw = judge_client.complete(messages)
    passed, rationale = parse_judge_verdict(raw)
    return TurnJudgement(turn=turn.index, passed=passed, rationale=rationale,
                         raw=raw, dialogue_id=dialogue_id)


def compute_tcsr(judgements: Sequence[TurnJudgement]) -> Fraction:
    """Turns passing the task constraint over total turns, exact rational."""
    if not judgements:
        raise ValueError("cannot compute a rate over zero turns")
    return Fraction(sum(1 for j in judgements if j.passed), len(judgements))


def judgement_to_dict(judgement: TurnJudgement) -> dict[str, Any]:
    return {
        "dialogue_id": judgement.dialogue_id,
        "turn": judgement.turn,
        "passed": judgement.passed,
        "rationale": judgement.rationale,
        "raw": judgement.raw,
    }


def judgement_from_dict(obj: dict[str, Any]) -> TurnJudgement:
    return TurnJudgement(turn=int(obj["turn"]), passed=bool(obj["passed"]),
                         rationale=str(obj.get("rationale", "")),
                         raw=str(obj.get("raw", "")),
                         dialogue_id=str(obj.get("dialogue_id", "")))


# -- agreement statistics --


@dataclass
class AgreementStats:
    kappa: float
    spearman_rho: float | None
    n: int


def cohen_kappa(labels_a: Sequence[Any], labels_b: Sequence[Any]) -> float:
    """(p_o - p_e) / (1 - p_e) with chance agreement from marginal products.

    Computed in exact rational arithmetic and converted to float once.
    Invariant under any relabeling of categories.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError("label lists must have equal length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("label lists must be non-empty")
    observed = Fraction(sum(1 for x, y in zip(labels_a, labels_b) if x == y), n)
    categories = set(labels_a) | set(labels_b)
    chance = Fraction(0)
    for category in categories:
        count_a = sum(1 for x in labels_a if x == category)
        count_b = sum(1 for y in labels_b if y == category)
        chance += Fraction(count_a, n) * Fraction(count_b, n)
    if chance == 1:
        # Both raters constant on the same category; agreement is total.
        return 1.0
    return float((observed - chance) / (1 - chance))


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1  # mean of 1-based ranks i+1..j+1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation of average-ranked values; ties get mean ranks.

    Returns None when either input is constant (the statistic is
    undefined there).
    """
    if len(x) != len(y):
        raise ValueError("inputs must have equal length")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    mean_rx = sum(rx) / len(rx)
    mean_ry = sum(ry) / len(ry)
    cov = sum((a - mean_rx) * (b - mean_ry) for a, b in zip(rx, ry))
    var_x = sum((a - mean_rx) ** 2 for a in rx)
    var_y = sum((b - mean_ry) ** 2 for b in ry)
    if var_x == 0.0 or var_y == 0.0:
        return None
    return cov / math.sqrt(var_x * var_y)


def agreement_stats(labels_a: Sequence[Any], labels_b: Sequence[Any]) -> AgreementStats:
    """Kappa over the labels, plus rho when both label lists are numeric."""
    kappa = cohen_kappa(labels_a, labels_b)
    rho: float | None = None
    try:
        xs = [float(v) for v in labels_a]
        ys = [float(v) for v in labels_b]
    except (TypeError, ValueError):
        xs = ys = []
    if xs and len(xs) >= 2:
        rho = spearman_rho(xs, ys)
    return AgreementStats(kappa=kappa, spearman_rho=rho, n=len(labels_a))
