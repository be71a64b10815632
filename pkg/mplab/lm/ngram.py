"""
Backoff n-gram language model over a closed token vocabulary.

Symbols are token ids ``0..V-1``, the end-of-sentence event ``V`` and the
sentence-begin marker ``V+1`` (history only, never predicted). The model is stored the
way ARPA files store it: log10 probabilities for listed n-grams plus a log10 backoff
weight per history. An unlisted n-gram backs off to the next shorter history, paying
that history's weight (0 when the history is unlisted). Every event is listed at the
unigram level, so lookups always terminate.
"""

import math
from collections import defaultdict

from mplab.errors import InputDomainError

LN10 = math.log(10.0)
SMOOTHINGS = ("witten_bell", "add_k")


def _log10(p):
    return math.log10(p) if p > 0.0 else -math.inf


class NgramModel:
    def __init__(self, vocab, order, smoothing, probs, backoffs):
        if order < 1:
            raise InputDomainError(f"n-gram order must be at least 1, got {order}")
        self.vocab = vocab
        self.order = order
        self.smoothing = smoothing
        self.probs = probs
        self.backoffs = backoffs

    def __eq__(self, other):
        if not isinstance(other, NgramModel):
            return NotImplemented
        return (self.vocab, self.order, self.smoothing, self.probs, self.backoffs) == (
            other.vocab,
            other.order,
            other.smoothing,
            other.probs,
            other.backoffs,
        )

    __hash__ = None

    @property
    def end_id(self):
        return self.vocab.size

    @property
    def bos_id(self):
        return self.vocab.size + 1

    @property
    def num_events(self):
        return self.vocab.size + 1

    @property
    def vocab_hash(self):
        return self.vocab.fingerprint()

    def initial_state(self):
        return (self.bos_id,) if self.order > 1 else ()

    def log10_prob(self, history, token):
        h = tuple(history[-(self.order - 1) :]) if self.order > 1 else ()
        total = 0.0
        while True:
            logp = self.probs.get(h + (token,))
            if logp is not None:
                return total + logp
            if not h:
                raise InputDomainError(f"symbol {token} is not an event of this model")
            total += self.backoffs.get(h, 0.0)
            h = h[1:]

    def score_extension(self, state, token):
        """Natural-log probability of ``token`` (a token id or ``end_id``) after ``state``, and the next state."""
        if not 0 <= token <= self.end_id:
            raise InputDomainError(f"symbol {token} is neither a token nor end-of-sentence")
        logp = self.log10_prob(state, token) * LN10
        if self.order == 1:
            return logp, ()
        return logp, (tuple(state) + (token,))[-(self.order - 1) :]

    def sentence_logprob(self, sentence):
        state, total = self.initial_state(), 0.0
        for token in (*sentence, self.end_id):
            logp, state = self.score_extension(state, token)
            total += logp
        return total

    def perplexity(self, corpus):
        """exp of the mean negative log-probability per event, end-of-sentence events included."""
        total, events = 0.0, 0
        for sentence in corpus:
            self.vocab.check_labels(sentence)
            total += self.sentence_logprob(sentence)
            events += len(sentence) + 1
        if not events:
            raise InputDomainError("cannot compute perplexity of an empty corpus")
        return math.exp(-total / events)


def perplexity(model, corpus):
    return model.perplexity(corpus)


def count_ngrams(corpus, order, end_id, bos_id):
    """counts[n][history][event] for n = 1..order; histories are tuples of n-1 symbols."""
    counts = [None] + [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
    for sentence in corpus:
        symbols = (bos_id, *sentence, end_id)
        for i in range(1, len(symbols)):
            for n in range(1, order + 1):
                if i - (n - 1) < 0:
                    break
                counts[n][symbols[i - (n - 1) : i]][symbols[i]] += 1
    return counts


def _witten_bell(counts, order, num_events):
    probs, backoffs = {}, {}

    for n in range(1, order + 1):
        for history in sorted(counts[n]):
            events = counts[n][history]
            seen = sum(events.values())
            types = len(events)
            if n == 1:
                # interpolate with the uniform distribution; every event gets listed
                for w in range(num_events):
                    probs[(w,)] = (events.get(w, 0) + types / num_events) / (seen + types)
                continue
            weight = types / (seen + types)
            backoffs[history] = weight
            for w, c in sorted(events.items()):
                lower = _interpolated(probs, backoffs, history[1:], w)
                probs[history + (w,)] = (c + types * lower) / (seen + types)
    return probs, backoffs


def _interpolated(probs, backoffs, history, w):
    scale = 1.0
    while True:
        p = probs.get(history + (w,))
        if p is not None:
            return scale * p
        scale *= backoffs.get(history, 1.0)
        history = history[1:]


def _add_k(counts, order, num_events, k):
    probs, backoffs = {}, {}
    for n in range(1, order + 1):
        for history in sorted(counts[n]):
            events = counts[n][history]
            seen = sum(events.values())
            denom = seen + k * num_events
            for w in range(num_events):
                probs[history + (w,)] = (events.get(w, 0) + k) / denom
    return probs, backoffs


def train_ngram(corpus, vocab, order=3, smoothing="witten_bell", k=1.0):
    """
    Estimate an n-gram model from sentences of token ids. ``witten_bell`` interpolates
    each history with its shorter suffix; ``add_k`` adds ``k`` to every event count of
    each seen history, while unseen histories back off unchanged.
    """
    corpus = [tuple(int(t) for t in s) for s in corpus]
    if not corpus:
        raise InputDomainError("cannot train an n-gram model on an empty corpus")
    if order < 1:
        raise InputDomainError(f"n-gram order must be at least 1, got {order}")
    if smoothing not in SMOOTHINGS:
        raise InputDomainError(f"unknown smoothing {smoothing!r}")
    if smoothing == "add_k" and k < 0:
        raise InputDomainError(f"add_k needs k >= 0, got {k}")
    for sentence in corpus:
        vocab.check_labels(sentence)

    num_events = vocab.size + 1
    counts = count_ngrams(corpus, order, end_id=vocab.size, bos_id=vocab.size + 1)
    if smoothing == "witten_bell":
        probs, backoffs = _witten_bell(counts, order, num_events)
    else:
        probs, backoffs = _add_k(counts, order, num_events, k)
    return NgramModel(
        vocab,
        order,
        smoothing,
        {g: _log10(p) for g, p in probs.items()},
        {h: _log10(a) for h, a in backoffs.items()},
    )


def uniform_model(vocab):
    """Order-1 model giving every token and end-of-sentence the same probability."""
    logp = -math.log10(vocab.size + 1)
    return NgramModel(vocab, 1, "uniform", {(w,): logp for w in range(vocab.size + 1)}, {})
