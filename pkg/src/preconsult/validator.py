"""Strict parsing and format-constraint checking for doctor turns.

The parser accepts exactly one shape of response and nothing else: an
optional code-fence wrapper around a top-level mapping with a question key
bound to a single-line scalar and an options key bound to a block sequence
of single-line scalars. Scalars may be bare or quoted. Any other structure
(extra keys, nested values, flow sequences, continuation lines) is a
positioned parse failure. Permissive document parsers accept far too much
for this job, which is why the grammar is hand-coded.

Five per-turn constraints are evaluated: response_format (the grammar
above), response_language (designated-script letter fraction),
forbidden_words, number_options, and sentence_startend. A turn passes
overall only when all five pass; when parsing fails the four content
checks are not evaluable.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

PASS = "pass"
FAIL = "fail"
NOT_EVALUABLE = "not_evaluable"

CONSTRAINT_NAMES = (
    "response_format",
    "response_language",
    "forbidden_words",
    "number_options",
    "sentence_startend",
)

# Script name -> substrings matched against unicodedata character names.
# "latin-basic" is special-cased to ASCII letters only, which is what an
# "English only" rule means in practice: accented Latin letters count as
# out-of-language.
_SCRIPT_MARKERS: dict[str, tuple[str, ...]] = {
    "hangul": ("HANGUL",),
    "latin": ("LATIN",),
    "latin-basic": (),
    "cyrillic": ("CYRILLIC",),
    "greek": ("GREEK",),
    "arabic": ("ARABIC",),
    "han": ("CJK",),
    "kana": ("HIRAGANA", "KATAKANA"),
}

# One trailing terminal punctuation mark is ignored by the suffix check.
_TERMINAL_PUNCTUATION = ".!?…。！？"


@dataclass(frozen=True)
class FormatRules:
    """Configurable constants for the five format constraints.

    Defaults match a Korean-language service: Hangul script at a 0.5
    letter-fraction threshold, the forbidden catch-all option "기타",
    2 to 5 options, and questions ending in the polite "요?".
    """

    question_key: str = "question"
    options_key: str = "options"
    key_match_case_insensitive: bool = True
    designated_script: str = "hangul"
    script_threshold: float = 0.5
    forbidden_terms: tuple[str, ...] = ("기타",)
    min_options: int = 2
    max_options: int = 5
    required_question_suffix: str = "요?"

    def __post_init__(self) -> None:
        if not 1 <= self.min_options <= self.max_options:
            raise ValueError("need 1 <= min_options <= max_options")
        if not 0.0 <= self.script_threshold <= 1.0:
            raise ValueError("script_threshold must be in [0, 1]")
        if self.designated_script not in _SCRIPT_MARKERS:
            known = ", ".join(sorted(_SCRIPT_MARKERS))
            raise ValueError(f"unknown script {self.designated_script!r} (known: {known})")


def rules_to_dict(rules: FormatRules) -> dict[str, Any]:
    return {
        "question_key": rules.question_key,
        "options_key": rules.options_key,
        "key_match_case_insensitive": rules.key_match_case_insensitive,
        "designated_script": rules.designated_script,
        "script_threshold": rules.script_threshold,
        "forbidden_terms": list(rules.forbidden_terms),
        "min_options": rules.min_options,
        "max_options": rules.max_options,
        "required_question_suffix": rules.required_question_suffix,
    }


def rules_from_dict(obj: dict[str, Any]) -> FormatRules:
    known = set(rules_to_dict(FormatRules()))
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown rule fields: {sorted(unknown)}")
    kwargs = dict(obj)
    if "forbidden_terms" in kwargs:
        kwargs["forbidden_terms"] = tuple(kwargs["forbidden_terms"])
    return FormatRules(**kwargs)


@dataclass(frozen=True)
class ParsedResponse:
    question: str
    options: tuple[str, ...]


class ResponseParseError(Exception):
    """Parse failure with a kind tag and 1-based line/column position."""

    def __init__(self, kind: str, message: str, line: int, column: int = 1):
        self.kind = kind
        self.line = line
        self.column = column
        super().__init__(f"{kind} at line {line}, column {column}: {message}")


_KEY_RE = re.compile(r"^(?P<key>[^\s:][^:]*?)\s*:(?:\s(?P<rest>.*))?$")
# a sequence item needs whitespace after the dash; "-text" is not an item
_ITEM_RE = re.compile(r"^(?P<indent>\s*)-(?:[ \t]+(?P<rest>.*))?$")
_NESTED_BARE_RE = re.compile(r"^[^\"':]+\S\s*:\s+\S")


def _strip_fence(lines: list[tuple[int, str]]) -> list[tuple[int, str]]:
    content = [(n, t) for n, t in lines if t.strip()]
    if not content or not content[0][1].lstrip().startswith("```"):
        return lines
    open_no = content[0][0]
    closers = [n for n, t in content[1:] if t.strip() == "```"]
    if not closers:
        raise ResponseParseError("unterminated_fence", "code fence is never closed",
                                 open_no)
    close_no = closers[-1]
    trailing = [n for n, t in content if n > close_no]
    if trailing:
        raise ResponseParseError("trailing_content", "content after closing fence",
                                 trailing[0])
    return [(n, t) for n, t in lines if open_no < n < close_no]


def _parse_scalar(text: str, line: int, column: int) -> str:
    value = text.strip()
    if value and value[0] in "\"'":
        quote = value[0]
        end = value.find(quote, 1)
        if end == -1:
            raise ResponseParseError("unterminated_quote",
                                     "quoted scalar is never closed", line, column)
        if value[end + 1:].strip():
            raise ResponseParseError("trailing_content",
                                     "content after closing quote", line, column + end + 1)
        return value[1:end].strip()
    return value


def parse_structured_response(raw: str, rules: FormatRules) -> ParsedResponse:
    """Parse a doctor turn against the closed response grammar.

    Raises :class:`ResponseParseError` for anything outside the grammar;
    never returns a partially-filled response.
    """
    lines = _strip_fence(list(enumerate(raw.splitlines(), start=1)))

    def canon(key: str) -> str:
        return key.casefold() if rules.key_match_case_insensitive else key

    q_key = canon(rules.question_key)
    o_key = canon(rules.options_key)
    question: str | None = None
    options: list[str] | None = None
    option_lines: list[int] = []
    in_options = False
    last_line = 1

    for lineno, text in lines:
        last_line = lineno
        if not text.strip():
            continue
        item = _ITEM_RE.match(text)
        if item:
            if not in_options:
                raise ResponseParseError("unexpected_sequence",
                                         "sequence item outside the options block",
                                         lineno)
            rest = item.group("rest") or ""
            column = len(item.group("indent")) + 2
            if rest and rest[0] not in "\"'" and _NESTED_BARE_RE.match(rest):
                raise ResponseParseError("nested_structure",
                                         "sequence item holds a nested mapping",
                                         lineno, column)
            value = _parse_scalar(rest, lineno, column)
            if not value:
                raise ResponseParseError("empty_option", "option scalar is empty",
                                         lineno, column)
            assert options is not None
            options.append(value)
            option_lines.append(lineno)
            continue
        if text[0].isspace():
            raise ResponseParseError("invalid_line",
                                     "indented continuation lines are not allowed",
                                     lineno)
        match = _KEY_RE.match(text)
        if not match:
            raise ResponseParseError("no_mapping", "expected 'key: value'", lineno)
        key = canon(match.group("key"))
        rest = match.group("rest") or ""
        if key == q_key:
            if question is not None:
                raise ResponseParseError("duplicate_key",
                                         f"{rules.question_key!r} given twice", lineno)
            in_options = False
            value = _parse_scalar(rest, lineno, len(match.group("key")) + 2)
            if not value:
                raise ResponseParseError("empty_question", "question scalar is empty",
                                         lineno)
            question = value
        elif key == o_key:
            if options is not None:
                raise ResponseParseError("duplicate_key",
                                         f"{rules.options_key!r} given twice", lineno)
            if rest.strip():
                raise ResponseParseError("options_not_sequence",
                                         "options must be a block sequence",
                                         lineno, len(match.group("key")) + 2)
            options = []
            in_options = True
        else:
            raise ResponseParseError("unexpected_key",
                                     f"unexpected key {match.group('key')!r}", lineno)

    if question is None:
        raise ResponseParseError("missing_key",
                                 f"required key {rules.question_key!r} not found",
                                 last_line)
    if options is None:
        raise ResponseParseError("missing_key",
                                 f"required key {rules.options_key!r} not found",
                                 last_line)
    if not options:
        raise ResponseParseError("empty_options", "options sequence has no items",
                                 last_line)
    seen: set[str] = set()
    for value, value_line in zip(options, option_lines):
        if value in seen:
            raise ResponseParseError("duplicate_option",
                                     f"option {value!r} appears twice", value_line)
        seen.add(value)
    return ParsedResponse(question=question, options=tuple(options))


# -- content checks --


def _in_script(ch: str, script: str) -> bool:
    if script == "latin-basic":
        return ch.isascii() and ch.isalpha()
    markers = _SCRIPT_MARKERS[script]
    name = unicodedata.name(ch, "")
    return any(marker in name for marker in markers)


def script_letter_stats(text: str, script: str) -> tuple[int, int]:
    """(letters in the designated script, total letters). Digits,
    punctuation, and whitespace never enter the denominator."""
    matched = 0
    total = 0
    for ch in text:
        if ch.isalpha():
            total += 1
            if _in_script(ch, script):
                matched += 1
    return matched, total


def check_response_language(parsed: ParsedResponse, rules: FormatRules) -> bool:
    """Designated-script letter fraction over question + options meets the
    threshold. Text with zero letters fails."""
    text = parsed.question + "".join(parsed.options)
    matched, total = script_letter_stats(text, rules.designated_script)
    if total == 0:
        return False
    return Fraction(matched, total) >= Fraction(rules.script_threshold)


def find_forbidden_term(parsed: ParsedResponse, rules: FormatRules) -> str | None:
    """First forbidden term hit: exact option match (trimmed) or substring
    of the question or any option, both under case folding."""
    for term in rules.forbidden_terms:
        folded = term.strip().casefold()
        if not folded:
            continue
        for option in parsed.options:
            if option.strip().casefold() == folded:
                return term
        for text in (parsed.question, *parsed.options):
            if folded in text.casefold():
                return term
    return None


def check_forbidden_words(parsed: ParsedResponse, rules: FormatRules) -> bool:
    return find_forbidden_term(parsed, rules) is None


def check_number_options(parsed: ParsedResponse, rules: FormatRules) -> bool:
    return rules.min_options <= len(parsed.options) <= rules.max_options


def check_sentence_startend(parsed: ParsedResponse, rules: FormatRules) -> bool:
    """Question must end with the required suffix, ignoring at most one
    trailing terminal punctuation mark."""
    suffix = rules.required_question_suffix
    if not suffix:
        return True
    question = parsed.question.strip()
    if question.endswith(suffix):
        return True
    return bool(question) and question[-1] in _TERMINAL_PUNCTUATION \
        and question[:-1].rstrip().endswith(suffix)


# -- per-turn verdicts --


@dataclass
class ConstraintOutcome:
    """Per-constraint statuses plus failure details keyed by constraint."""

    response_format: str
    response_language: str
    forbidden_words: str
    number_options: str
    sentence_startend: str
    details: dict[str, str] = field(default_factory=dict)

    def statuses(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in CONSTRAINT_NAMES}


@dataclass
class TurnVerdict:
    turn: int
    outcome: ConstraintOutcome
    overall: bool
    dialogue_id: str = ""


def evaluate_turn(raw: str, rules: FormatRules, *, turn_index: int = 1,
                  dialogue_id: str = "") -> TurnVerdict:
    """Run the parser and the four content checks over one doctor turn.

    Never raises: every failure mode is encoded in the verdict. A parse
    failure makes the other four constraints not evaluable.
    """
    details: dict[str, str] = {}
    try:
        parsed = parse_structured_response(raw, rules)
    except ResponseParseError as exc:
        details["response_format"] = str(exc)
        outcome = ConstraintOutcome(FAIL, NOT_EVALUABLE, NOT_EVALUABLE,
                                    NOT_EVALUABLE, NOT_EVALUABLE, details)
        return TurnVerdict(turn=turn_index, outcome=outcome, overall=False,
                           dialogue_id=dialogue_id)

    text = parsed.question + "".join(parsed.options)
    matched, total = script_letter_stats(text, rules.designated_script)
    language_ok = check_response_language(parsed, rules)
    if not language_ok:
        if total == 0:
            details["response_language"] = "no letters"
        else:
            details["response_language"] = (
                f"{rules.designated_script} letter fraction {matched}/{total} "
                f"below threshold {rules.script_threshold}")

    term = find_forbidden_term(parsed, rules)
    if term is not None:
        details["forbidden_words"] = f"forbidden term present: {term!r}"

    count_ok = check_number_options(parsed, rules)
    if not count_ok:
        details["number_options"] = (
            f"{len(parsed.options)} options outside "
            f"[{rules.min_options}, {rules.max_options}]")

    suffix_ok = check_sentence_startend(parsed, rules)
    if not suffix_ok:
        details["sentence_startend"] = (
            f"question does not end with {rules.required_question_suffix!r}")

    outcome = ConstraintOutcome(
        response_format=PASS,
        response_language=PASS if language_ok else FAIL,
        forbidden_words=PASS if term is None else FAIL,
        number_options=PASS if count_ok else FAIL,
        sentence_startend=PASS if suffix_ok else FAIL,
        details=details,
    )
    overall = all(status == PASS for status in outcome.statuses().values())
    return TurnVerdict(turn=turn_index, outcome=outcome, overall=overall,
                       dialogue_id=dialogue_id)


def compute_fcsr(verdicts: Sequence[TurnVerdict]) -> Fraction:
    """Turns passing all five constraints over total turns, as an exact
    rational."""
    if not verdicts:
        raise ValueError("cannot compute a rate over zero turns")
    return Fraction(sum(1 for v in verdicts if v.overall), len(verdicts))


# -- serialization for verdict files --


def verdict_to_dict(verdict: TurnVerdict) -> dict[str, Any]:
    out: dict[str, Any] = {
        "dialogue_id": verdict.dialogue_id,
        "turn": verdict.turn,
        "constraints": verdict.outcome.statuses(),
        "overall": verdict.overall,
    }
    if verdict.outcome.details:
        out["details"] = dict(sorted(verdict.outcome.details.items()))
    return out


def verdict_from_dict(obj: dict[str, Any]) -> TurnVerdict:
    constraints = obj["constraints"]
    outcome = ConstraintOutcome(
        response_format=constraints["response_format"],
        response_language=constraints["response_language"],
        forbidden_words=constraints["forbidden_words"],
        number_options=constraints["number_options"],
        sentence_startend=constraints["sentence_startend"],
        details=dict(obj.get("details", {})),
    )
    return TurnVerdict(turn=int(obj["turn"]), outcome=outcome,
                       overall=bool(obj["overall"]),
                       dialogue_id=str(obj.get("dialogue_id", "")))
