import itertools
import math

import numpy as np
import pytest

from mplab.ctc import Vocabulary
from mplab.errors import FormatError, InputDomainError, MissingInputError
from mplab.lm import dumps_arpa, load_arpa, loads_arpa, perplexity, save_arpa, train_ngram, uniform_model

CORPUS = [(0, 1, 2), (1, 2), (0, 2, 1, 0), (2,), (1, 0, 1)]


def _events_sum(model, state):
    return sum(math.exp(model.score_extension(state, w)[0]) for w in range(model.end_id + 1))


def test_unigram_counting_oracle(vocab3):
    model = train_ngram([(0,), (0,)], vocab3, order=1, smoothing="add_k", k=0.0)
    # two token events and two end events
    assert math.exp(model.score_extension((), 0)[0]) == pytest.approx(0.5)
    assert math.exp(model.score_extension((), model.end_id)[0]) == pytest.approx(0.5)
    assert model.score_extension((), 1)[0] == -math.inf
    assert perplexity(model, [(0,), (0,)]) == pytest.approx(2.0)


def test_single_token_type_closed_form(vocab3):
    model = train_ngram([(0, 0, 0)], vocab3, order=1, smoothing="add_k", k=0.0)
    expected = math.exp(-(3 * math.log(3 / 4) + math.log(1 / 4)) / 4)
    assert perplexity(model, [(0, 0, 0)]) == pytest.approx(expected, rel=1e-12)


def test_uniform_model_perplexity_is_event_count(vocab3):
    assert perplexity(uniform_model(vocab3), CORPUS) == pytest.approx(4.0, rel=1e-12)


@pytest.mark.parametrize("smoothing", ["witten_bell", "add_k"])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_every_context_is_normalised(vocab3, smoothing, order):
    model = train_ngram(CORPUS, vocab3, order=order, smoothing=smoothing, k=0.5)
    states = [model.initial_state()]
    if order > 1:
        states += [s for s in itertools.product(range(3), repeat=order - 1)]
        states += [(model.bos_id, *s) for s in itertools.product(range(3), repeat=order - 2)]
    for state in states:
        assert _events_sum(model, state) == pytest.approx(1.0, abs=1e-6)


def test_order_one_ignores_state(vocab3):
    model = train_ngram(CORPUS, vocab3, order=1)
    assert model.score_extension((), 2) == model.score_extension((0, 1), 2)


def test_scoring_is_deterministic_and_advances_state(vocab3):
    model = train_ngram(CORPUS, vocab3, order=3)
    state = model.initial_state()
    assert state == (model.bos_id,)
    first = model.score_extension(state, 1)
    assert first == model.score_extension(state, 1)
    assert first[1] == (model.bos_id, 1)
    assert model.score_extension(first[1], 2)[1] == (1, 2)


def test_higher_order_does_not_raise_training_perplexity(vocab3):
    rng = np.random.default_rng(0)
    corpus = [tuple(int(t) for t in rng.integers(0, 3, size=rng.integers(1, 6))) for _ in range(40)]
    ppl = [perplexity(train_ngram(corpus, vocab3, order=n), corpus) for n in (1, 2, 3)]
    assert ppl[1] <= ppl[0] + 1e-9
    assert ppl[2] <= ppl[1] + 1e-9


def test_adding_a_sentence_never_lowers_its_probability(vocab3):
    sentence = (0, 1)
    for k in (0.5, 1.0):
        before = train_ngram(CORPUS, vocab3, order=1, smoothing="add_k", k=k).sentence_logprob(sentence)
        after = train_ngram([*CORPUS, sentence], vocab3, order=1, smoothing="add_k", k=k).sentence_logprob(sentence)
        assert after >= before
    corpus = [*CORPUS, sentence]
    before = train_ngram(corpus, vocab3, order=2, smoothing="add_k").sentence_logprob(sentence)
    after = train_ngram([*corpus, sentence], vocab3, order=2, smoothing="add_k").sentence_logprob(sentence)
    assert after >= before


def test_training_errors(vocab3):
    with pytest.raises(InputDomainError):
        train_ngram([], vocab3)
    with pytest.raises(InputDomainError):
        train_ngram(CORPUS, vocab3, order=0)
    with pytest.raises(InputDomainError):
        train_ngram(CORPUS, vocab3, smoothing="kneser_ney")
    with pytest.raises(InputDomainError):
        train_ngram([(5,)], vocab3)


def test_arpa_round_trip_is_exact(vocab3, tmp_path):
    model = train_ngram(CORPUS, vocab3, order=3)
    text = dumps_arpa(model)
    assert text.startswith("# mplab n-gram order=3 smoothing=witten_bell")
    assert "\\3-grams:" in text and "</s>" in text
    assert loads_arpa(text) == model

    path = tmp_path / "lm.arpa"
    save_arpa(str(path), model)
    reloaded = load_arpa(str(path))
    assert dumps_arpa(reloaded) == text
    assert reloaded.vocab == vocab3


def test_arpa_errors(tmp_path):
    with pytest.raises(FormatError):
        loads_arpa("\\data\\\nngram 1=1\n")
    with pytest.raises(MissingInputError):
        load_arpa(str(tmp_path / "absent.arpa"))


def test_vocab_hash_binds_model_to_vocabulary(vocab3):
    model = train_ngram(CORPUS, vocab3, order=2)
    assert model.vocab_hash == vocab3.fingerprint()
    assert model.vocab_hash != Vocabulary.of(["x", "y", "z"]).fingerprint()
