import hashlib

import msgspec
import numpy as np

from mplab.errors import InputDomainError


class Vocabulary(msgspec.Struct, frozen=True):
    """
    Closed token inventory shared by the encoder, the decoders and the n-gram model.
    Token ids are ``0..len(tokens)-1``; the CTC blank always takes the next index.
    """

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("vocabulary needs at least one token")
        if any(not t for t in self.tokens):
            raise ValueError("token strings must be non-empty")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("token strings must be unique")

    @classmethod
    def of(cls, tokens):
        return cls(tuple(tokens))

    @property
    def size(self):
        return len(self.tokens)

    @property
    def blank_id(self):
        return len(self.tokens)

    @property
    def num_classes(self):
        return len(self.tokens) + 1

    def fingerprint(self):
        return hashlib.blake2b("\n".join(self.tokens).encode(), digest_size=8).hexdigest()

    def encode(self, words):
        index = {t: i for i, t in enumerate(self.tokens)}
        try:
            return tuple(index[w] for w in words)
        except KeyError as e:
            raise InputDomainError(f"token {e.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids):
        self.check_labels(ids)
        return [self.tokens[i] for i in ids]

    def check_labels(self, ids):
        for i in ids:
            if not 0 <= int(i) < self.size:
                raise InputDomainError(f"label id {i} outside vocabulary of size {self.size}")

    def check_alignment(self, ids):
        for i in ids:
            if not 0 <= int(i) <= self.blank_id:
                raise InputDomainError(f"alignment id {i} outside 0..{self.blank_id}")


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[0] == 0:
        return logits.copy()
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class FramePosteriors:
    """T x (|V|+1) matrix of per-frame log-probabilities; the last column is the blank."""

    __slots__ = ("log_probs",)

    def __init__(self, log_probs, validate=True):
        log_probs = np.asarray(log_probs, dtype=np.float64)
        if log_probs.ndim != 2 or log_probs.shape[1] < 2:
            raise InputDomainError(f"posteriors must be T x C with C >= 2, got shape {log_probs.shape}")
        if validate and log_probs.shape[0]:
            if np.any(log_probs > 1e-12):
                raise InputDomainError("log-probabilities must be <= 0")
            norms = np.logaddexp.reduce(log_probs, axis=1)
            if np.max(np.abs(norms)) > 1e-6:
                raise InputDomainError("each posterior row must log-sum-exp to 0")
        self.log_probs = log_probs

    @classmethod
    def from_logits(cls, logits):
        return cls(log_softmax(logits), validate=False)

    @property
    def length(self):
        return self.log_probs.shape[0]

    @property
    def num_classes(self):
        return self.log_probs.shape[1]

    @property
    def blank_id(self):
        return self.log_probs.shape[1] - 1

    def probs(self):
        return np.exp(self.log_probs)

    def argmax(self):
        # np.argmax returns the first maximum, i.e. ties go to the lowest id
        return np.argmax(self.log_probs, axis=1) if self.length else np.zeros(0, dtype=np.int64)

    def check_vocab(self, vocab):
        if self.num_classes != vocab.num_classes:
            raise InputDomainError(
                f"posteriors have {self.num_classes} classes but the vocabulary needs {vocab.num_classes}"
            )
