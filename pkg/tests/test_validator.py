from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preconsult.validator import (
    FAIL,
    NOT_EVALUABLE,
    PASS,
    FormatRules,
    ParsedResponse,
    ResponseParseError,
    check_forbidden_words,
    check_number_options,
    check_response_language,
    check_sentence_startend,
    compute_fcsr,
    evaluate_turn,
    parse_structured_response,
    rules_from_dict,
    rules_to_dict,
    script_letter_stats,
    verdict_from_dict,
    verdict_to_dict,
)

EN_RULES = FormatRules(designated_script="latin-basic", script_threshold=1.0,
                       forbidden_terms=("Other",), required_question_suffix="?")
KO_RULES = FormatRules()


# -- parser --


def test_parse_quoted_mapping():
    raw = ('question: "Where is the pain located?"\n'
           'options:\n  - "Entire head"\n  - "Forehead"\n'
           '  - "Back of the neck"\n  - "Temples"')
    parsed = parse_structured_response(raw, EN_RULES)
    assert parsed.question == "Where is the pain located?"
    assert parsed.options == ("Entire head", "Forehead", "Back of the neck", "Temples")


def test_parse_bare_scalars_and_key_case():
    raw = "Question: 어디가 아프신가요?\nOptions:\n- 머리\n- 배"
    parsed = parse_structured_response(raw, KO_RULES)
    assert parsed.question == "어디가 아프신가요?"
    assert parsed.options == ("머리", "배")


def test_parse_key_case_sensitivity_flag():
    rules = FormatRules(key_match_case_insensitive=False)
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response("Question: 네?\noptions:\n- 가", rules)
    assert err.value.kind == "unexpected_key"


def test_parse_code_fence_wrapper():
    raw = '```yaml\nquestion: "무엇이 궁금하세요?"\noptions:\n- "가"\n- "나"\n```'
    parsed = parse_structured_response(raw, KO_RULES)
    assert parsed.options == ("가", "나")


def test_parse_unterminated_fence():
    raw = '```\nquestion: "q?"\noptions:\n- "a"'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, KO_RULES)
    assert err.value.kind == "unterminated_fence"


def test_parse_plain_prose_fails_as_no_mapping():
    raw = ("Where is the pain? The options are 1. Entire head,\n"
           "2. Forehead, 3. Back of the neck, 4. Temples.")
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "no_mapping"
    assert err.value.line == 1


def test_parse_extra_top_level_key():
    raw = 'question: "q?"\noptions:\n- "a"\n- "b"\nseverity: 3'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "unexpected_key"
    assert err.value.line == 5


def test_parse_duplicate_key():
    raw = 'question: "q?"\nquestion: "r?"\noptions:\n- "a"'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "duplicate_key"


def test_parse_options_as_scalar():
    raw = 'question: "q?"\noptions: a, b, c'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "options_not_sequence"


def test_parse_nested_mapping_in_sequence():
    raw = 'question: "q?"\noptions:\n- severity: high'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "nested_structure"
    assert err.value.line == 3


def test_parse_sequence_before_options():
    raw = '- "a"\nquestion: "q?"'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "unexpected_sequence"


def test_parse_missing_keys():
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?"', EN_RULES)
    assert err.value.kind == "missing_key"
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('options:\n- "a"', EN_RULES)
    assert err.value.kind == "missing_key"


def test_parse_empty_options_block():
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?"\noptions:', EN_RULES)
    assert err.value.kind == "empty_options"


def test_parse_empty_and_duplicate_options():
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?"\noptions:\n- ""', EN_RULES)
    assert err.value.kind == "empty_option"
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?"\noptions:\n- "a"\n-  a ', EN_RULES)
    assert err.value.kind == "duplicate_option"


def test_parse_unterminated_quote_and_trailing_content():
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?\noptions:\n- "a"', EN_RULES)
    assert err.value.kind == "unterminated_quote"
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response('question: "q?" extra\noptions:\n- "a"', EN_RULES)
    assert err.value.kind == "trailing_content"


def test_parse_dash_without_space_is_not_an_item():
    raw = 'question: "q?"\noptions:\n-기타없음'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, KO_RULES)
    assert err.value.kind == "no_mapping"
    assert err.value.line == 3


def test_parse_duplicate_option_position():
    raw = 'question: "q?"\noptions:\n- "a"\n- "b"\n- "a"'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "duplicate_option"
    assert err.value.line == 5


def test_parse_indented_continuation_rejected():
    raw = 'question: "q?"\n  continued here\noptions:\n- "a"'
    with pytest.raises(ResponseParseError) as err:
        parse_structured_response(raw, EN_RULES)
    assert err.value.kind == "invalid_line"
    assert err.value.line == 2


def test_parse_options_first_is_accepted():
    raw = 'options:\n- "a"\n- "b"\nquestion: "q?"'
    parsed = parse_structured_response(raw, EN_RULES)
    assert parsed.question == "q?"
    assert parsed.options == ("a", "b")


@settings(max_examples=200, deadline=None)
@given(st.text(st.characters(blacklist_categories=("Cs",)), max_size=200))
def test_parser_totality(raw):
    # any input either parses or raises a positioned failure; never crashes
    try:
        parsed = parse_structured_response(raw, KO_RULES)
        assert parsed.question
        assert all(parsed.options)
    except ResponseParseError as exc:
        assert exc.kind
        assert exc.line >= 1


@settings(max_examples=150, deadline=None)
@given(st.text(st.characters(blacklist_categories=("Cs",)), max_size=120))
def test_evaluate_turn_totality(raw):
    verdict = evaluate_turn(raw, KO_RULES)
    assert isinstance(verdict.overall, bool)
    statuses = set(verdict.outcome.statuses().values())
    assert statuses <= {PASS, FAIL, NOT_EVALUABLE}


# -- content checks --


def _resp(question: str, options: tuple[str, ...]) -> ParsedResponse:
    return ParsedResponse(question=question, options=options)


def test_language_all_korean_passes():
    parsed = _resp("통증이 가장 심한 시간대가 언제인가요?", ("아침", "오후", "밤"))
    assert check_response_language(parsed, KO_RULES)


def test_language_french_fails_english_rule():
    parsed = _resp("Quand les symptômes ont-ils commencé ?", ("Aujourd'hui", "Hier"))
    assert not check_response_language(parsed, EN_RULES)
    assert check_response_language(
        _resp("When did the symptoms start?", ("Today", "Yesterday")), EN_RULES)


def test_language_threshold_boundary():
    # 2 of 4 letters Hangul -> exactly at a 0.5 threshold
    parsed = _resp("가나", ("ab",))
    assert script_letter_stats("가나ab", "hangul") == (2, 4)
    assert check_response_language(parsed, FormatRules(script_threshold=0.5))
    assert not check_response_language(parsed, FormatRules(script_threshold=0.6))
    # one fewer Hangul letter drops below the 0.5 threshold
    below = _resp("가", ("abc",))
    assert not check_response_language(below, FormatRules(script_threshold=0.5))


def test_language_no_letters_fails():
    parsed = _resp("1234?", ("5", "6"))
    assert not check_response_language(parsed, KO_RULES)


def test_language_digits_and_punctuation_excluded():
    matched, total = script_letter_stats("가나다 123 !?", "hangul")
    assert (matched, total) == (3, 3)


def test_forbidden_words():
    ok = _resp("What type of painkiller did you take?",
               ("Ibuprofen", "Acetaminophen", "Aspirin", "None"))
    assert check_forbidden_words(ok, EN_RULES)
    bad = _resp("What type of painkiller did you take?",
                ("Ibuprofen", "Acetaminophen", "Other", "None"))
    assert not check_forbidden_words(bad, EN_RULES)
    # substring occurrence in the question also fails
    sneaky = _resp("Any other symptoms?", ("Yes", "No"))
    assert not check_forbidden_words(sneaky, EN_RULES)
    # case-folded exact option match
    cased = _resp("Which?", ("a", " OTHER "))
    assert not check_forbidden_words(cased, EN_RULES)
    empty = FormatRules(forbidden_terms=())
    assert check_forbidden_words(bad, empty)


def test_number_options():
    assert check_number_options(_resp("q?", ("Throbbing", "Stabbing", "Squeezing")),
                                EN_RULES)
    eight = tuple(f"opt{i}" for i in range(8))
    assert not check_number_options(_resp("q?", eight), EN_RULES)
    assert not check_number_options(_resp("q?", ("only",)), EN_RULES)


def test_sentence_startend():
    assert check_sentence_startend(
        _resp("통증이 가장 심한 시간대가 언제인가요?", ("아침",)), KO_RULES)
    assert not check_sentence_startend(
        _resp("통증이 가장 심한 시간대?", ("아침",)), KO_RULES)
    # one trailing terminal punctuation mark is tolerated
    assert check_sentence_startend(_resp("언제 시작되었나요?!", ("a",)), KO_RULES)
    assert not check_sentence_startend(_resp("언제 시작되었나요?!!", ("a",)), KO_RULES)
    assert check_sentence_startend(_resp("whatever", ("a",)),
                                   FormatRules(required_question_suffix=""))


# -- evaluate_turn --


def test_evaluate_turn_parse_failure_blocks_other_checks():
    verdict = evaluate_turn("그냥 평문입니다", KO_RULES)
    statuses = verdict.outcome.statuses()
    assert statuses["response_format"] == FAIL
    assert [statuses[k] for k in ("response_language", "forbidden_words",
                                  "number_options", "sentence_startend")] \
        == [NOT_EVALUABLE] * 4
    assert not verdict.overall
    assert "response_format" in verdict.outcome.details


def test_evaluate_turn_all_pass():
    raw = ('question: "통증이 가장 심한 시간대가 언제인가요?"\n'
           'options:\n- "아침"\n- "오후"\n- "밤"')
    verdict = evaluate_turn(raw, KO_RULES, turn_index=3, dialogue_id="d1")
    assert verdict.overall
    assert verdict.turn == 3
    assert verdict.dialogue_id == "d1"
    assert set(verdict.outcome.statuses().values()) == {PASS}


def test_evaluate_turn_too_many_options():
    options = "\n".join(f'- "옵션{i}번이요"' for i in range(8))
    raw = f'question: "어디가 아프신가요?"\noptions:\n{options}'
    verdict = evaluate_turn(raw, KO_RULES)
    statuses = verdict.outcome.statuses()
    assert statuses["response_format"] == PASS
    assert statuses["number_options"] == FAIL
    assert statuses["sentence_startend"] == PASS
    assert not verdict.overall


def test_evaluate_turn_deterministic():
    raw = 'question: "q?"\noptions:\n- "a"\n- "b"'
    assert evaluate_turn(raw, EN_RULES) == evaluate_turn(raw, EN_RULES)


def test_verdict_dict_round_trip():
    verdict = evaluate_turn("평문", KO_RULES, turn_index=2, dialogue_id="dlg")
    assert verdict_from_dict(verdict_to_dict(verdict)) == verdict


# -- FCSR --


def _verdicts(flags):
    return [evaluate_turn(
        'question: "어디가 아프신가요?"\noptions:\n- "머리"\n- "배"' if ok else "평문",
        KO_RULES, turn_index=i + 1) for i, ok in enumerate(flags)]


def test_compute_fcsr():
    assert compute_fcsr(_verdicts([True] * 4)) == 1
    assert compute_fcsr(_verdicts([True, True, True, False])) == Fraction(3, 4)
    assert compute_fcsr(_verdicts([False] * 5)) == 0
    with pytest.raises(ValueError):
        compute_fcsr([])


def test_fcsr_flip_one_turn_changes_rate_by_exactly_one_nth():
    flags = [True, False, True, False, False, True]
    base = compute_fcsr(_verdicts(flags))
    for i, ok in enumerate(flags):
        if not ok:
            flipped = list(flags)
            flipped[i] = True
            assert compute_fcsr(_verdicts(flipped)) - base == Fraction(1, len(flags))


# -- rules serialization --


def test_rules_dict_round_trip():
    assert rules_from_dict(rules_to_dict(EN_RULES)) == EN_RULES
    with pytest.raises(ValueError):
        rules_from_dict({"bogus": 1})


def test_rules_invariants():
    with pytest.raises(ValueError):
        FormatRules(min_options=0)
    with pytest.raises(ValueError):
        FormatRules(min_options=6, max_options=5)
    with pytest.raises(ValueError):
        FormatRules(script_threshold=1.5)
    with pytest.raises(ValueError):
        FormatRules(designated_script="klingon")
