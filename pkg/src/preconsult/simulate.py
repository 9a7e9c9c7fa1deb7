"""Doctor-patient dialogue simulation over pluggable chat clients.

Each dialogue alternates a doctor client (which sees only the simplified
case summary) and a patient client (which sees the full clinical record),
up to a fixed turn budget. Doctor output is recorded verbatim and never
repaired; checking it is downstream work. The patient is shown the parsed
question and options when the doctor's output parses, otherwise the raw
text as-is (configurable).

Transcripts carry the resulting dialogue plus a per-attempt audit trail of
every client exchange. Failures after retries truncate the transcript with
an error marker instead of aborting the batch.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .clients import (
    ChatMessage,
    ClientError,
    HttpChatClient,
    ModelClient,
    ModelClientSpec,
    call_with_retries,
    client_factory_from_config,
    messages_to_wire,
    spec_from_config,
)
from .corpus import (
    DOCTOR_VIEW_FIELDS,
    PATIENT_VIEW_FIELDS,
    Dialogue,
    PatientCase,
    Turn,
)
from .validator import FormatRules, ResponseParseError, parse_structured_response

DOCTOR_SYSTEM_PROMPT = """\
You are a physician with professional medical knowledge. Your task is to \
generate the optimal follow-up question that helps with differential \
diagnosis based on the given patient information and previous consultation \
history.

### Instructions
1. You must use only Korean.
2. Generate only questions that effectively collect medically useful \
information required for diagnosis.
3. Provide 2 to 5 options.
4. Do not include "Other" as an option.
5. Output in YAML format.
6. The question must end with "요?" (appropriate polite phrase in Korean).

### Output format
Question:
Options:
...
"""

PATIENT_SYSTEM_PROMPT = """\
You are a patient with the following profile:
{patient_information}

You should faithfully answer the doctor's inquiries for an appropriate \
diagnosis. Choose one of the questions provided by the doctor and respond.

Output format:
Answer:
"""

_DOCTOR_VIEW_LABELS = {
    "age": "Age",
    "gender": "Gender",
    "chief_complaint": "Chief Complaint",
    "symptom_duration": "Symptom Duration",
    "symptom_location": "Symptom Location",
}

_PATIENT_VIEW_LABELS = {
    "disease": "Disease",
    "department": "Department",
    "typicality": "Typicality",
    "age": "Age",
    "gender": "Gender",
    "height": "Height",
    "weight": "Weight",
    "symptom_location": "Symptom Location",
    "symptom_quality": "Symptom Quality",
    "symptom_severity": "Symptom Severity",
    "symptom_duration": "Symptom Duration",
    "timing": "Timing",
    "context": "Context",
    "modifying_factors": "Modifying Factors",
    "associated_symptoms": "Associated Symptoms",
    "pain_area": "Pain Area",
    "past_history": "Past History",
    "social_history": "Social History",
    "additional_info": "Additional Info",
}


class SimulationError(Exception):
    pass


@dataclass
class SimulationConfig:
    max_turns: int = 12
    doctor: ModelClientSpec = field(default_factory=ModelClientSpec)
    patient: ModelClientSpec = field(default_factory=ModelClientSpec)
    doctor_prompt: str = DOCTOR_SYSTEM_PROMPT
    patient_prompt: str = PATIENT_SYSTEM_PROMPT
    rules: FormatRules = field(default_factory=FormatRules)
    forward_unparsed_raw: bool = True
    stop_marker: str | None = None
    language: str = "ko"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")


def format_doctor_view(doctor_view: dict[str, str]) -> str:
    lines = [f"{_DOCTOR_VIEW_LABELS[k]}: {doctor_view[k]}"
             for k in DOCTOR_VIEW_FIELDS if doctor_view.get(k)]
    return "\n".join(lines)


def format_patient_view(patient_view: dict[str, str]) -> str:
    lines = [f"{_PATIENT_VIEW_LABELS[k]}: {patient_view[k]}"
             for k in PATIENT_VIEW_FIELDS if patient_view.get(k)]
    return "\n".join(lines)


def render_doctor_prompt(doctor_view: dict[str, str], history: Sequence[Turn],
                         template: str = DOCTOR_SYSTEM_PROMPT) -> list[ChatMessage]:
    """System prompt, the simplified patient summary, then the alternating
    doctor/patient exchanges so far. Only the simplified summary ever enters
    doctor-side messages."""
    if not any(doctor_view.get(k) for k in DOCTOR_VIEW_FIELDS):
        raise SimulationError("doctor view has no populated fields")
    messages = [
        ChatMessage("system", template),
        ChatMessage("user", "Patient information:\n" + format_doctor_view(doctor_view)),
    ]
    for turn in history:
        messages.append(ChatMessage("assistant", turn.doctor_raw))
        if not turn.patient_answer:
            raise SimulationError(
                f"history turn {turn.index} has no patient answer")
        messages.append(ChatMessage("user", turn.patient_answer))
    return messages


def format_question_text(question: str, options: Sequence[str]) -> str:
    return "\n".join([question] + [f"- {option}" for option in options])


def render_patient_prompt(patient_view: dict[str, str], doctor_question: str,
                          template: str = PATIENT_SYSTEM_PROMPT) -> list[ChatMessage]:
    """System prompt embedding the full clinical profile, plus the doctor's
    question (with options) as the user message."""
    profile = format_patient_view(patient_view)
    if not profile:
        raise SimulationError("patient view has no populated fields")
    return [
        ChatMessage("system", template.format(patient_information=profile)),
        ChatMessage("user", doctor_question),
    ]


@dataclass(frozen=True)
class AuditRecord:
    """One client attempt: the exact request, and either a response or an
    error. Elapsed time is informational and excluded from comparisons."""

    dialogue_id: str
    turn: int
    role: str
    attempt: int
    request: tuple[ChatMessage, ...]
    response: str | None
    error: str | None
    elapsed_s: float = field(default=0.0, compare=False)


@dataclass
class Transcript:
    dialogue: Dialogue
    audit: list[AuditRecord] = field(default_factory=list)
    error: str | None = None

    def to_dialogue(self) -> Dialogue:
        metadata = dict(self.dialogue.metadata)
        if self.error is not None:
            metadata["error"] = self.error
        return replace(self.dialogue, metadata=metadata)

    @classmethod
    def from_dialogue(cls, dialogue: Dialogue) -> "Transcript":
        metadata = dict(dialogue.metadata)
        error = metadata.pop("error", None)
        return cls(dialogue=replace(dialogue, metadata=metadata), error=error)


def audit_record_to_dict(record: AuditRecord) -> dict[str, Any]:
    return {
        "dialogue_id": record.dialogue_id,
        "turn": record.turn,
        "role": record.role,
        "attempt": record.attempt,
        "request": messages_to_wire(record.request),
        "response": record.response,
        "error": record.error,
        "elapsed_s": record.elapsed_s,
    }


def _strip_answer_prefix(text: str) -> str:
    stripped = text.strip()
    if stripped.lower().startswith("answer:"):
        return stripped[len("answer:"):].strip()
    return stripped


def run_dialogue(config: SimulationConfig, case: PatientCase,
                 doctor_client: ModelClient | None = None,
                 patient_client: ModelClient | None = None) -> Transcript:
    """Simulate one dialogue for a case.

    When explicit clients are not given, HTTP clients are built from the
    config specs (failing fast on missing credentials). Client failures
    after retries truncate the transcript and set its error marker.
    """
    doctor = doctor_client if doctor_client is not None else HttpChatClient(config.doctor)
    patient = patient_client if patient_client is not None else HttpChatClient(config.patient)

    dialogue_id = f"sim-{case.id}"
    turns: list[Turn] = []
    audit: list[AuditRecord] = []
    error: str | None = None

    def attempt_logger(role: str, turn: int,
                       request: Sequence[ChatMessage]) -> Callable:
        def log(attempt: int, err: str | None, response: str | None,
                elapsed: float) -> None:
            audit.append(AuditRecord(dialogue_id=dialogue_id, turn=turn, role=role,
                                     attempt=attempt, request=tuple(request),
                                     response=response, error=err, elapsed_s=elapsed))
        return log

    for turn_index in range(1, config.max_turns + 1):
        doctor_messages = render_doctor_prompt(case.doctor_view, turns,
                                               config.doctor_prompt)
        try:
            raw = call_with_retries(doctor, doctor_messages,
                                    config.doctor.max_attempts,
                                    config.doctor.backoff_seconds,
                                    attempt_logger("doctor", turn_index,
                                                   doctor_messages))
        except ClientError as exc:
            error = f"doctor client failed at turn {turn_index}: {exc}"
            break

        if not raw.strip():
            # an empty turn cannot be stored (doctor text is required) nor
            # shown to the patient
            error = f"doctor returned empty output at turn {turn_index}"
            break
        if config.stop_marker and config.stop_marker in raw:
            break

        try:
            parsed = parse_structured_response(raw, config.rules)
            question_text = format_question_text(parsed.question, parsed.options)
        except ResponseParseError as exc:
            if not config.forward_unparsed_raw:
                turns.append(Turn(index=turn_index, doctor_raw=raw))
                error = f"unparseable doctor turn {turn_index}: {exc}"
                break
            question_text = raw

        patient_messages = render_patient_prompt(case.patient_view, question_text,
                                                 config.patient_prompt)
        try:
            answer_raw = call_with_retries(patient, patient_messages,
                                           config.patient.max_attempts,
                                           config.patient.backoff_seconds,
                                           attempt_logger("patient", turn_index,
                                                          patient_messages))
        except ClientError as exc:
            turns.append(Turn(index=turn_index, doctor_raw=raw))
            error = f"patient client failed at turn {turn_index}: {exc}"
            break

        answer = _strip_answer_prefix(answer_raw)
        if not answer:
            turns.append(Turn(index=turn_index, doctor_raw=raw))
            error = f"patient returned empty output at turn {turn_index}"
            break
        turns.append(Turn(index=turn_index, doctor_raw=raw, patient_answer=answer))

    dialogue = Dialogue(id=dialogue_id, turns=turns, language=config.language,
                        case_ref=case.id)
    return Transcript(dialogue=dialogue, audit=audit, error=error)


ClientFactory = Callable[[], ModelClient]


def run_batch(config: SimulationConfig, cases: Sequence[PatientCase],
              parallelism: int = 1,
              doctor_factory: ClientFactory | None = None,
              patient_factory: ClientFactory | None = None) -> list[Transcript]:
    """Simulate every case; output order matches case order regardless of
    completion order, and one failing case never affects the others.

    Factories are invoked once per case so scripted mocks stay independent
    under concurrency.
    """
    if not cases:
        raise SimulationError("no cases to simulate")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    # Build HTTP clients once up front so a bad spec or missing credential
    # fails at startup, not per case.
    if doctor_factory is None:
        shared_doctor = HttpChatClient(config.doctor)
        doctor_factory = lambda: shared_doctor  # noqa: E731
    if patient_factory is None:
        shared_patient = HttpChatClient(config.patient)
        patient_factory = lambda: shared_patient  # noqa: E731

    def one(case: PatientCase) -> Transcript:
        try:
            return run_dialogue(config, case, doctor_factory(), patient_factory())
        except Exception as exc:  # isolate per-case failures
            dialogue = Dialogue(id=f"sim-{case.id}", turns=[], case_ref=case.id,
                                language=config.language)
            return Transcript(dialogue=dialogue, error=f"simulation failed: {exc}")

    if parallelism == 1:
        return [one(case) for case in cases]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, cases))


def load_simulation_config(path: str | Path) -> tuple[
        SimulationConfig, ClientFactory | None, ClientFactory | None]:
    """Read a simulation config file; returns the config plus client
    factories for any role configured as a mock (HTTP roles return None so
    run_dialogue builds the real client from the spec)."""
    with Path(path).open("r", encoding="utf-8") as handle:
        obj = json.load(handle)
    known = {"max_turns", "doctor", "patient", "doctor_prompt", "patient_prompt",
             "rules", "forward_unparsed_raw", "stop_marker", "language", "seed"}
    unknown = set(obj) - known
    if unknown:
        raise SimulationError(f"unknown config fields: {sorted(unknown)}")

    from .validator import rules_from_dict

    kwargs: dict[str, Any] = {}
    for key in ("max_turns", "doctor_prompt", "patient_prompt",
                "forward_unparsed_raw", "stop_marker", "language", "seed"):
        if key in obj:
            kwargs[key] = obj[key]
    if "rules" in obj:
        kwargs["rules"] = rules_from_dict(obj["rules"])

    factories: dict[str, ClientFactory | None] = {"doctor": None, "patient": None}
    for role in ("doctor", "patient"):
        role_obj = obj.get(role, {})
        spec = spec_from_config(role_obj)
        # the run seed becomes the client-side sampling seed unless the
        # role spec pins its own
        if obj.get("seed") is not None and spec.seed is None:
            spec = replace(spec, seed=int(obj["seed"]))
        kwargs[role] = spec
        if role_obj.get("type", "http") == "mock":
            factories[role] = client_factory_from_config(role_obj)
    return SimulationConfig(**kwargs), factories["doctor"], factories["patient"]
