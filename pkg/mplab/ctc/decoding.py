import math
from typing import NamedTuple

from mplab.ctc.loss import collapse
from mplab.errors import InputDomainError

NEG_INF = -math.inf


class Hypothesis(NamedTuple):
    tokens: tuple
    score: float
    ctc_score: float
    lm_score: float


def best_path_decode(post, vocab):
    """Per-frame argmax (lowest id wins ties) followed by the collapse mapping."""
    post.check_vocab(vocab)
    return collapse(post.argmax().tolist(), vocab)


def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


class _LMCache:
    """Accumulated LM log-probability and scorer state for every prefix seen so far."""

    def __init__(self, lm):
        self.lm = lm
        self.entries = {(): (0.0, lm.initial_state())}

    def prefix_score(self, prefix):
        if prefix not in self.entries:
            parent = prefix[:-1]
            parent_score = self.prefix_score(parent)
            logp, state = self.lm.score_extension(self.entries[parent][1], prefix[-1])
            self.entries[prefix] = (parent_score + logp, state)
        return self.entries[prefix][0]

    def end_score(self, prefix):
        self.prefix_score(prefix)
        _, state = self.entries[prefix]
        logp, _ = self.lm.score_extension(state, self.lm.end_id)
        return logp


def prefix_beam_search(post, vocab, cfg, lm=None):
    """
    Frame-synchronous CTC prefix beam search with optional log-linear LM fusion.

    Every prefix keeps two log-masses: paths ending in blank and paths ending in its
    last token. A prefix is ranked by
    ``log P_ctc + lm_weight * log P_lm + insertion_bonus * len``; per frame, prefixes
    more than ``prune_threshold`` below the frame best are dropped and at most
    ``beam_size`` survive. The LM end-of-sentence probability enters the final ranking.
    Returns up to ``nbest`` hypotheses, best first.
    """
    post.check_vocab(vocab)
    use_lm = lm is not None and cfg.lm_weight != 0.0
    if use_lm and getattr(lm, "vocab_hash", vocab.fingerprint()) != vocab.fingerprint():
        raise InputDomainError("language model was trained on a different vocabulary")
    cache = _LMCache(lm) if use_lm else None
    lp = post.log_probs
    blank = vocab.blank_id

    def fused(prefix, ctc):
        score = ctc + cfg.insertion_bonus * len(prefix)
        if use_lm:
            score += cfg.lm_weight * cache.prefix_score(prefix)
        return score

    # prefix -> [log P(prefix, ends in blank), log P(prefix, ends in token)]
    beam = {(): [0.0, NEG_INF]}
    for t in range(post.length):
        frame = lp[t].tolist()
        p_blank = frame[blank]
        nxt = {}
        for prefix, (pb, pnb) in beam.items():
            total = _logaddexp(pb, pnb)
            slot = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            slot[0] = _logaddexp(slot[0], total + p_blank)
            last = prefix[-1] if prefix else None
            if last is not None:
                slot[1] = _logaddexp(slot[1], pnb + frame[last])
            for c in range(vocab.size):
                # a repeated token only starts a new label after a blank
                mass = (pb if c == last else total) + frame[c]
                if mass == NEG_INF:
                    continue
                ext = nxt.setdefault(prefix + (c,), [NEG_INF, NEG_INF])
                ext[1] = _logaddexp(ext[1], mass)

        scored = []
        for prefix, (pb, pnb) in nxt.items():
            ctc = _logaddexp(pb, pnb)
            if ctc == NEG_INF:
                continue
            scored.append((fused(prefix, ctc), prefix))
        scored.sort(key=lambda x: (-x[0], len(x[1]), x[1]))
        floor = scored[0][0] - cfg.prune_threshold
        beam = {prefix: nxt[prefix] for score, prefix in scored[: cfg.beam_size] if score >= floor}

    hyps = []
    for prefix, (pb, pnb) in beam.items():
        ctc = _logaddexp(pb, pnb)
        lm_score = cache.prefix_score(prefix) + cache.end_score(prefix) if use_lm else 0.0
        score = ctc + cfg.insertion_bonus * len(prefix) + (cfg.lm_weight * lm_score if use_lm else 0.0)
        hyps.append(Hypothesis(prefix, score, ctc, lm_score))
    hyps.sort(key=lambda h: (-h.score, len(h.tokens), h.tokens))
    return hyps[: cfg.nbest]


def decode(post, vocab, method="greedy", cfg=None, lm=None):
    """Top-1 label sequence by best path (``greedy``) or prefix beam search (``beam``)."""
    if method == "greedy":
        return best_path_decode(post, vocab)
    if method != "beam":
        raise InputDomainError(f"unknown decoding method {method!r}")
    return prefix_beam_search(post, vocab, cfg, lm)[0].tokens
