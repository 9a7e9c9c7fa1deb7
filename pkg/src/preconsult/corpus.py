"""Dialogue data model and line-delimited JSON corpus I/O.

A corpus file holds one dialogue object per line, UTF-8, with keys written
in a fixed order so that serialization is canonical:

    {"id": ..., "language": ..., "turns": [{"index": ..., "doctor_raw": ...,
     "patient_answer": ...}, ...], "case_ref": ..., "metadata": {...}}

Optional keys (``patient_answer``, ``case_ref``, empty ``metadata``) are
omitted when absent. Patient cases live in a separate line-delimited file
keyed by id, carrying the asymmetric doctor/patient views of one clinical
profile.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

if TYPE_CHECKING:
    from .validator import ParsedResponse


class CorpusError(Exception):
    """Base error for corpus loading, validation, and serialization."""


class CorpusFormatError(CorpusError):
    """Schema violation, positioned by line number and field path."""

    def __init__(self, message: str, *, line: int | None = None, field_path: str = ""):
        self.line = line
        self.field_path = field_path
        prefix = f"line {line}: " if line is not None else ""
        at = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{at}{message}")


@dataclass
class Turn:
    """One doctor question, optionally paired with the patient's answer.

    ``patient_answer`` may be absent for a trailing unanswered turn.
    ``doctor_parsed`` is an in-memory annotation only and is never
    serialized.
    """

    index: int
    doctor_raw: str
    patient_answer: str | None = None
    doctor_parsed: "ParsedResponse | None" = field(default=None, compare=False)


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]
    language: str = "ko"
    case_ref: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class Corpus:
    dialogues: list[Dialogue]
    source: str = field(default="", compare=False)
    # Line numbers skipped during a lenient load; not serialized.
    skipped_lines: list[int] = field(default_factory=list, compare=False)

    def __len__(self) -> int:
        return len(self.dialogues)

    def by_id(self) -> dict[str, Dialogue]:
        return {d.id: d for d in self.dialogues}


def max_turn_count(dialogue: Dialogue) -> int:
    """Number of doctor turns in the dialogue (its turn-count bin key)."""
    if not dialogue.turns:
        raise CorpusError(f"dialogue {dialogue.id!r} has no turns")
    return len(dialogue.turns)


def turn_histogram(corpus: Corpus) -> dict[int, int]:
    """Map max turn-count -> number of dialogues; counts sum to |corpus|."""
    counts = Counter(max_turn_count(d) for d in corpus.dialogues)
    return dict(sorted(counts.items()))


# -- validation --


def _require(condition: bool, message: str, line: int | None, field_path: str) -> None:
    if not condition:
        raise CorpusFormatError(message, line=line, field_path=field_path)


def _string_field(obj: Mapping[str, Any], key: str, line: int | None, path: str,
                  required: bool = True, nonempty: bool = True) -> str | None:
    if key not in obj or obj[key] is None:
        _require(not required, "missing required field", line, f"{path}{key}")
        return None
    value = obj[key]
    _require(isinstance(value, str), "expected string", line, f"{path}{key}")
    if nonempty:
        _require(value != "", "must be non-empty", line, f"{path}{key}")
    return value


def dialogue_from_dict(obj: Any, *, line: int | None = None) -> Dialogue:
    """Validate a decoded JSON object against the dialogue schema."""
    _require(isinstance(obj, dict), "expected a JSON object", line, "")
    known = {"id", "language", "turns", "case_ref", "metadata"}
    for key in obj:
        _require(key in known, "unexpected field", line, str(key))

    dialogue_id = _string_field(obj, "id", line, "")
    language = _string_field(obj, "language", line, "", required=False) or "ko"
    case_ref = _string_field(obj, "case_ref", line, "", required=False)

    _require("turns" in obj, "missing required field", line, "turns")
    raw_turns = obj["turns"]
    _require(isinstance(raw_turns, list), "expected a list", line, "turns")
    _require(len(raw_turns) > 0, "must contain at least one turn", line, "turns")

    turns: list[Turn] = []
    for pos, raw in enumerate(raw_turns):
        path = f"turns[{pos}]."
        _require(isinstance(raw, dict), "expected a JSON object", line, path.rstrip("."))
        for key in raw:
            _require(key in {"index", "doctor_raw", "patient_answer"},
                     "unexpected field", line, f"{path}{key}")
        _require("index" in raw, "missing required field", line, f"{path}index")
        index = raw["index"]
        _require(isinstance(index, int) and not isinstance(index, bool),
                 "expected integer", line, f"{path}index")
        _require(index == pos + 1, f"turn indices must be contiguous 1..n (got {index})",
                 line, f"{path}index")
        doctor_raw = _string_field(raw, "doctor_raw", line, path)
        answer = _string_field(raw, "patient_answer", line, path,
                               required=False, nonempty=False)
        turns.append(Turn(index=index, doctor_raw=doctor_raw or "", patient_answer=answer))

    metadata: dict[str, str] = {}
    if "metadata" in obj and obj["metadata"] is not None:
        raw_meta = obj["metadata"]
        _require(isinstance(raw_meta, dict), "expected an object", line, "metadata")
        for key, value in raw_meta.items():
            _require(isinstance(key, str) and isinstance(value, str),
                     "metadata keys and values must be strings", line, f"metadata.{key}")
            metadata[key] = value

    return Dialogue(id=dialogue_id or "", turns=turns, language=language,
                    case_ref=case_ref, metadata=metadata)


def dialogue_to_dict(dialogue: Dialogue) -> dict[str, Any]:
    """Canonical dict form: fixed key order, optional keys omitted."""
    turns = []
    for turn in dialogue.turns:
        entry: dict[str, Any] = {"index": turn.index, "doctor_raw": turn.doctor_raw}
        if turn.patient_answer is not None:
            entry["patient_answer"] = turn.patient_answer
        turns.append(entry)
    out: dict[str, Any] = {"id": dialogue.id, "language": dialogue.language, "turns": turns}
    if dialogue.case_ref is not None:
        out["case_ref"] = dialogue.case_ref
    if dialogue.metadata:
        out["metadata"] = {k: dialogue.metadata[k] for k in sorted(dialogue.metadata)}
    return out


def dumps_dialogue(dialogue: Dialogue) -> str:
    return json.dumps(dialogue_to_dict(dialogue), ensure_ascii=False,
                      separators=(",", ":"))


# -- I/O --


def load_corpus(path: str | Path, strict: bool = True) -> Corpus:
    """Read a line-delimited corpus file.

    In strict mode any malformed line aborts with a positioned error; in
    lenient mode malformed lines (including duplicate ids) are skipped and
    recorded in ``Corpus.skipped_lines``. Dialogue order equals file line
    order.
    """
    path = Path(path)
    dialogues: list[Dialogue] = []
    seen: set[str] = set()
    skipped: list[int] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(f"invalid JSON ({exc.msg})", line=lineno)
                dialogue = dialogue_from_dict(obj, line=lineno)
                if dialogue.id in seen:
                    raise CorpusFormatError("duplicate dialogue id", line=lineno,
                                            field_path="id")
            except CorpusFormatError:
                if strict:
                    raise
                skipped.append(lineno)
                continue
            seen.add(dialogue.id)
            dialogues.append(dialogue)
    return Corpus(dialogues=dialogues, source=str(path), skipped_lines=skipped)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write canonical line-delimited JSON, one dialogue per line, UTF-8."""
    ids = [d.id for d in corpus.dialogues]
    if len(set(ids)) != len(ids):
        raise CorpusError("corpus contains duplicate dialogue ids")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for dialogue in corpus.dialogues:
            handle.write(dumps_dialogue(dialogue) + "\n")


# -- patient cases --

DOCTOR_VIEW_FIELDS = (
    "age",
    "gender",
    "chief_complaint",
    "symptom_duration",
    "symptom_location",
)

PATIENT_VIEW_FIELDS = (
    "disease",
    "department",
    "typicality",
    "age",
    "gender",
    "height",
    "weight",
    "symptom_location",
    "symptom_quality",
    "symptom_severity",
    "symptom_duration",
    "timing",
    "context",
    "modifying_factors",
    "associated_symptoms",
    "pain_area",
    "past_history",
    "social_history",
    "additional_info",
)


@dataclass
class PatientCase:
    """Asymmetric information pair for one simulated patient.

    ``doctor_view`` is the simplified summary shown to the doctor model;
    ``patient_view`` is the full clinical record available to the patient
    model. The doctor view must carry strictly fewer populated fields than
    the patient view.
    """

    id: str
    doctor_view: dict[str, str]
    patient_view: dict[str, str]

    def populated_doctor_fields(self) -> int:
        return sum(1 for v in self.doctor_view.values() if v)

    def populated_patient_fields(self) -> int:
        return sum(1 for v in self.patient_view.values() if v)


def _view_from_dict(obj: Any, allowed: Sequence[str], line: int | None,
                    path: str) -> dict[str, str]:
    _require(isinstance(obj, dict), "expected an object", line, path)
    view: dict[str, str] = {}
    for key, value in obj.items():
        _require(key in allowed, "unexpected field", line, f"{path}.{key}")
        _require(isinstance(value, str), "expected string", line, f"{path}.{key}")
        view[key] = value
    return view


def case_from_dict(obj: Any, *, line: int | None = None) -> PatientCase:
    _require(isinstance(obj, dict), "expected a JSON object", line, "")
    for key in obj:
        _require(key in {"id", "doctor_view", "patient_view"}, "unexpected field",
                 line, str(key))
    case_id = _string_field(obj, "id", line, "")
    _require("doctor_view" in obj, "missing required field", line, "doctor_view")
    _require("patient_view" in obj, "missing required field", line, "patient_view")
    doctor_view = _view_from_dict(obj["doctor_view"], DOCTOR_VIEW_FIELDS, line,
                                  "doctor_view")
    patient_view = _view_from_dict(obj["patient_view"], PATIENT_VIEW_FIELDS, line,
                                   "patient_view")
    case = PatientCase(id=case_id or "", doctor_view=doctor_view,
                       patient_view=patient_view)
    _require(case.populated_doctor_fields() < case.populated_patient_fields(),
             "doctor view must have strictly fewer populated fields than patient view",
             line, "doctor_view")
    return case


def case_to_dict(case: PatientCase) -> dict[str, Any]:
    doctor = {k: case.doctor_view[k] for k in DOCTOR_VIEW_FIELDS
              if case.doctor_view.get(k)}
    patient = {k: case.patient_view[k] for k in PATIENT_VIEW_FIELDS
               if case.patient_view.get(k)}
    return {"id": case.id, "doctor_view": doctor, "patient_view": patient}


def load_cases(path: str | Path) -> list[PatientCase]:
    """Read a line-delimited case file; ids must be unique."""
    path = Path(path)
    cases: list[PatientCase] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line=lineno)
            case = case_from_dict(obj, line=lineno)
            if case.id in seen:
                raise CorpusFormatError("duplicate case id", line=lineno, field_path="id")
            seen.add(case.id)
            cases.append(case)
    return cases


def save_cases(cases: Iterable[PatientCase], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for case in cases:
            handle.write(json.dumps(case_to_dict(case), ensure_ascii=False,
                                    separators=(",", ":")) + "\n")
