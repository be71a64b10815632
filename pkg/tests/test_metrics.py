import math
import random

import editdistance
import pytest

from mplab.errors import InputDomainError
from mplab.metrics import (
    ErrorBreakdown,
    ReportRow,
    corpus_breakdown,
    corpus_wer,
    edit_distance_breakdown,
    fill_wrr,
    render_report,
    token_error_rate,
    wer,
    wrr,
)


@pytest.mark.parametrize(
    "ref, hyp, breakdown, expected_wer",
    [
        ("abc", "abc", (0, 0, 0), 0.0),
        ("abc", "ac", (0, 0, 1), 100.0 / 3),
        ("a", "bc", (1, 1, 0), 200.0),
    ],
)
def test_edit_distance_examples(ref, hyp, breakdown, expected_wer):
    result = edit_distance_breakdown(ref, hyp)
    assert (result.substitutions, result.insertions, result.deletions) == breakdown
    assert wer(ref, hyp) == pytest.approx(expected_wer)
    assert token_error_rate(ref, hyp) == pytest.approx(expected_wer)


def _random_seq(rng):
    return [rng.choice("abcd") for _ in range(rng.randint(0, 8))]


def test_total_errors_match_editdistance():
    rng = random.Random(0)
    for _ in range(300):
        ref, hyp = _random_seq(rng), _random_seq(rng)
        assert edit_distance_breakdown(ref, hyp).errors == editdistance.eval(ref, hyp)


def test_distance_is_a_metric():
    rng = random.Random(1)
    for _ in range(300):
        a, b, c = _random_seq(rng), _random_seq(rng), _random_seq(rng)
        ab = edit_distance_breakdown(a, b).errors
        assert ab == edit_distance_breakdown(b, a).errors
        assert edit_distance_breakdown(a, c).errors <= ab + edit_distance_breakdown(b, c).errors


def test_empty_reference():
    assert edit_distance_breakdown([], []).wer == 0.0
    assert edit_distance_breakdown([], ["a"]).wer == math.inf


def test_corpus_wer_pools_errors():
    refs = ["abc", "abcd"]
    hyps = ["abc", "xbc"]
    assert corpus_breakdown(refs, hyps) == ErrorBreakdown(1, 0, 1, 7)
    assert corpus_wer(refs, hyps) == pytest.approx(200.0 / 7)
    with pytest.raises(InputDomainError):
        corpus_wer(refs, hyps[:1])


def test_wrr_anchors():
    assert wrr(23.3, 23.3, 13.4) == 0.0
    assert wrr(13.4, 23.3, 13.4) == 100.0
    assert wrr(15.1, 23.3, 13.4) == pytest.approx(83.3, abs=1.0)
    assert wrr(30.0, 23.3, 13.4) < 0.0
    with pytest.raises(InputDomainError):
        wrr(10.0, 12.0, 12.0)


@pytest.mark.parametrize("c", [0.1, 2.0, 37.5])
def test_wrr_is_scale_invariant(c):
    assert wrr(15.1 * c, 23.3 * c, 13.4 * c) == pytest.approx(wrr(15.1, 23.3, 13.4), rel=1e-12)


def test_fill_wrr_and_report():
    rows = [
        ReportRow("seed", test_wer=23.3),
        ReportRow("topline", test_wer=13.4),
        ReportRow("mpl", init="seed", dev_wer=16.0, test_wer=15.1),
    ]
    fill_wrr(rows)
    assert rows[0].test_wrr == 0.0
    assert rows[1].test_wrr == 100.0
    assert rows[2].test_wrr_lm is None

    text = render_report(rows, title="pipeline")
    assert "pipeline" in text
    assert "Test WRR +LM" in text
    mpl_line = next(line for line in text.splitlines() if "mpl" in line)
    assert "16.0" in mpl_line and "82.8" in mpl_line


def test_fill_wrr_without_anchors_is_a_no_op():
    rows = [ReportRow("mpl", test_wer=15.1)]
    assert fill_wrr(rows)[0].test_wrr is None
