import io
import math

import msgspec
from rich.console import Console
from rich.table import Table

from mplab.errors import InputDomainError


class ErrorBreakdown(msgspec.Struct, frozen=True):
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    reference_length: int = 0

    @property
    def errors(self):
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self):
        """Error percentage; infinite when errors occur against an empty reference."""
        if self.reference_length == 0:
            return 0.0 if self.errors == 0 else math.inf
        return 100.0 * self.errors / self.reference_length

    def __add__(self, other):
        return ErrorBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.reference_length + other.reference_length,
        )


def edit_distance_breakdown(reference, hypothesis):
    """
    Unit-cost Levenshtein alignment of two sequences, split into substitutions,
    insertions and deletions. Among minimal alignments the backtrace takes the diagonal
    first, so a substitution wins over an insertion plus deletion pair.
    """
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        cost[i][0] = i
    for j in range(m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost[i][j] = min(
                cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
                cost[i - 1][j] + 1,
                cost[i][j - 1] + 1,
            )

    subs = ins = dels = 0
    i, j = n, m
    while i or j:
        if i and j and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and cost[i][j] == cost[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ErrorBreakdown(subs, ins, dels, n)


def wer(reference, hypothesis):
    return edit_distance_breakdown(reference, hypothesis).wer


def token_error_rate(reference, hypothesis):
    # tokens are the finest unit of the synthetic task, so this is the same computation as WER
    return edit_distance_breakdown(reference, hypothesis).wer


def corpus_breakdown(references, hypotheses):
    references, hypotheses = list(references), list(hypotheses)
    if len(references) != len(hypotheses):
        raise InputDomainError(f"{len(references)} references but {len(hypotheses)} hypotheses")
    total = ErrorBreakdown()
    for ref, hyp in zip(references, hypotheses, strict=True):
        total = total + edit_distance_breakdown(ref, hyp)
    return total


def corpus_wer(references, hypotheses):
    """Sum of errors over sum of reference lengths, as a percentage."""
    return corpus_breakdown(references, hypotheses).wer


def wrr(wer_model, wer_seed, wer_topline):
    """Share of the seed-to-topline WER gap a model recovers, in percent; negative when worse than the seed."""
    if wer_seed == wer_topline:
        raise InputDomainError("WRR is undefined when the seed and topline WERs are equal")
    return 100.0 * (wer_seed - wer_model) / (wer_seed - wer_topline)


class ReportRow(msgspec.Struct):
    method: str
    init: str = "-"
    dev_wer: float | None = None
    dev_wer_lm: float | None = None
    test_wer: float | None = None
    test_wer_lm: float | None = None
    test_wrr: float | None = None
    test_wrr_lm: float | None = None
    # training epochs behind the model, counting every phase after its initialisation
    epochs: int | None = None


REPORT_COLUMNS = (
    ("Method", "method"),
    ("Init", "init"),
    ("Epochs", "epochs"),
    ("Dev WER", "dev_wer"),
    ("Dev WER +LM", "dev_wer_lm"),
    ("Test WER", "test_wer"),
    ("Test WER +LM", "test_wer_lm"),
    ("Test WRR", "test_wrr"),
    ("Test WRR +LM", "test_wrr_lm"),
)


def _cell(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def fill_wrr(rows, seed_method="seed", topline_method="topline"):
    """Fill the WRR columns of every row from the seed and topline rows' test WERs."""
    by_method = {row.method: row for row in rows}
    seed, topline = by_method.get(seed_method), by_method.get(topline_method)
    if seed is None or topline is None:
        return rows
    for row in rows:
        for wer_field, wrr_field in (("test_wer", "test_wrr"), ("test_wer_lm", "test_wrr_lm")):
            model, lo, hi = getattr(row, wer_field), getattr(seed, wer_field), getattr(topline, wer_field)
            if None not in (model, lo, hi) and lo != hi:
                setattr(row, wrr_field, wrr(model, lo, hi))
    return rows


def build_table(rows, title="WER report"):
    table = Table(title=title)
    for header, _ in REPORT_COLUMNS:
        table.add_column(header, justify="left" if header in ("Method", "Init") else "right")
    for row in rows:
        table.add_row(*(_cell(getattr(row, field)) for _, field in REPORT_COLUMNS))
    return table


def table_text(table):
    """Plain-text rendering of a rich table."""
    console = Console(file=io.StringIO(), width=120, record=True, color_system=None)
    console.print(table)
    return console.export_text()


def render_report(rows, title="WER report"):
    return table_text(build_table(rows, title))
