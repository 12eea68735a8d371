import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmas.answers import AnswerFormat, FormatKind, extract_answer, judge, last_boxed, normalize

MC = AnswerFormat.multi_choice(4)
NUM = AnswerFormat.number()
FREE = AnswerFormat.free()
FORMATS = {"multi_choice": MC, "number": NUM, "free": FREE}


def test_boxed_option_letter():
    assert extract_answer("…so the answer is \\boxed{B}.", MC) == "B"


def test_last_boxed_span_wins():
    assert extract_answer("\\boxed{12} wait \\boxed{15}", NUM) == "15"


def test_nested_braces_kept_whole():
    assert last_boxed("x \\boxed{\\frac{a}{b}} y") == "\\frac{a}{b}"


def test_no_boxed_returns_none():
    assert last_boxed("no marker here") is None


def test_unboxed_reply_falls_back_to_normalized_text():
    assert extract_answer("  the   capital is  Paris ", FREE) == "the capital is Paris"


def test_normalize_strips_dollars_and_whitespace():
    assert normalize(" $ $x + 1$ $ ") == "x + 1"


def test_corpus_cases(extraction_corpus):
    assert len(extraction_corpus) == 20
    for case in extraction_corpus:
        got = extract_answer(case["reply"], FORMATS[case["format"]])
        assert got == case["expected"], case


@pytest.mark.parametrize(
    "extracted, gold, fmt, expected",
    [
        ("B", "b", MC, True),
        ("C", "B", MC, False),
        ("0.50", "0.5", NUM, True),
        ("1234", "1,234", NUM, True),
        ("12", "13", NUM, False),
        ("seven", "7", NUM, False),
        ("1/2", "\\frac{1}{2}", FREE, False),
        ("Paris", " Paris ", FREE, True),
    ],
)
def test_judge(extracted, gold, fmt, expected):
    assert judge(extracted, gold, fmt) is expected


def test_format_roundtrip():
    assert AnswerFormat.from_dict(MC.to_dict()) == MC
    assert MC.labels == ("A", "B", "C", "D") and MC.kind is FormatKind.MULTI_CHOICE


@pytest.mark.parametrize("n", [0, 27])
def test_multi_choice_bounds(n):
    with pytest.raises(ValueError):
        AnswerFormat.multi_choice(n)


reply_text = st.one_of(
    st.text(max_size=40),
    st.builds(
        lambda pre, inner, post: f"{pre}\\boxed{{{inner}}}{post}",
        st.text(max_size=10),
        st.text(alphabet="ABCDabcd0123456789-., ${}()x", max_size=12),
        st.text(max_size=10),
    ),
)


@given(reply_text, st.sampled_from([MC, NUM, FREE]))
def test_extract_is_idempotent(reply, fmt):
    once = extract_answer(reply, fmt)
    assert extract_answer(once, fmt) == once
