from __future__ import annotations

import pytest

from preconsult.corpus import Corpus, Dialogue, PatientCase, Turn

# Real-world turn-count distribution used as the standard fixture shape.
TABLE4 = {4: 1835, 5: 1890, 6: 1825, 7: 820, 8: 705, 9: 395, 10: 260, 11: 165, 12: 111}
TABLE4_TOTAL = sum(TABLE4.values())  # 8006


def doctor_response(question: str = "통증이 어디에서 느껴지나요?",
                    options: tuple[str, ...] = ("머리", "배", "가슴")) -> str:
    lines = [f'question: "{question}"', "options:"]
    lines.extend(f'  - "{option}"' for option in options)
    return "\n".join(lines)


def make_dialogue(dialogue_id: str, n_turns: int, language: str = "ko",
                  case_ref: str | None = None) -> Dialogue:
    turns = [Turn(index=i,
                  doctor_raw=doctor_response(f"{i}번째로 궁금한 점은 무엇인가요?"),
                  patient_answer=f"{i}번째 답변입니다.")
             for i in range(1, n_turns + 1)]
    return Dialogue(id=dialogue_id, turns=turns, language=language, case_ref=case_ref)


def make_table4_corpus() -> Corpus:
    dialogues = []
    for turn_count, count in TABLE4.items():
        for i in range(count):
            dialogues.append(make_dialogue(f"d{turn_count:02d}-{i:04d}", turn_count))
    return Corpus(dialogues=dialogues, source="table4-fixture")


@pytest.fixture(scope="session")
def table4_corpus() -> Corpus:
    return make_table4_corpus()


@pytest.fixture()
def tb_case() -> PatientCase:
    return PatientCase(
        id="case-tb-001",
        doctor_view={
            "age": "45",
            "gender": "Male",
            "chief_complaint": "Persistent cough and unintended weight loss",
            "symptom_duration": "Within 3 months",
            "symptom_location": "Right pectoral region and sternal area",
        },
        patient_view={
            "disease": "Pulmonary tuberculosis",
            "department": "Undetermined",
            "typicality": "Typical",
            "age": "45",
            "gender": "Male",
            "height": "172 cm",
            "weight": "68 kg",
            "symptom_location": "Central chest and occipital region",
            "symptom_quality": "Intermittent dry cough and chest tightness",
            "symptom_severity": "5/10",
            "symptom_duration": "2 months",
            "timing": "Severe coughing in the morning, intermittent during day",
            "context": "Worsened after outdoor work and fatigue",
            "modifying_factors": "Warm tea and rest help; worsens with activity",
            "associated_symptoms": "Weight loss, night sweats, low-grade fever, mild dyspnea",
            "pain_area": "Right chest (pectoral), Sternal region",
            "past_history": "No prior TB or chronic respiratory illness",
            "social_history": "Construction worker, past smoker, high-density living",
            "additional_info": "Dust exposure, smoking history, persistent fatigue",
        },
    )
