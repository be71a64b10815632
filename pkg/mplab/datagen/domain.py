"""
Synthetic speech-like domains. A domain is a first-order grammar over the vocabulary,
a prototype vector per token, a frame-duration range per token, a rotation applied to
all prototypes and a noise level. Sentences are walks through the grammar; features
repeat each token's rotated prototype for a sampled number of frames and add noise.
"""

import math

import msgspec
import numpy as np

from mplab.common import derive_rng
from mplab.errors import InputDomainError

# stream keys under the base seed
_BASE_KEY = 1000
_SHIFT_KEY = 1001


class DomainSpec(msgspec.Struct, frozen=True):
    """
    ``transitions`` has one row per state (begin, then every token) and one column per
    outcome (every token, then end-of-sentence).
    """

    name: str
    transitions: list[list[float]]
    prototypes: list[list[float]]
    durations: list[tuple[int, int]]
    noise_std: float
    rotation_angles: list[float]
    min_len: int
    max_len: int
    seed: int

    def __post_init__(self):
        table = np.asarray(self.transitions)
        V = len(self.prototypes)
        if V == 0 or not self.prototypes[0]:
            raise ValueError("a domain needs at least one token and one feature dimension")
        if table.shape != (V + 1, V + 1):
            raise ValueError(f"transition table must be {V + 1} x {V + 1}, got {table.shape}")
        if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("transition rows must be probability distributions")
        if len(self.durations) != V or any(lo < 1 or lo > hi for lo, hi in self.durations):
            raise ValueError("every token needs a duration range 1 <= min <= max")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.min_len > self.max_len:
            raise ValueError("min_len must not exceed max_len")
        if 2 * len(self.rotation_angles) > self.feature_dim:
            raise ValueError("at most one rotation angle per pair of feature axes")

    @property
    def vocab_size(self):
        return len(self.prototypes)

    @property
    def feature_dim(self):
        return len(self.prototypes[0])

    def transition_matrix(self):
        return np.asarray(self.transitions, dtype=np.float64)

    def rotated_prototypes(self):
        return np.asarray(self.prototypes) @ rotation_matrix(self.rotation_angles, self.feature_dim).T


def rotation_matrix(angles, dim=None):
    """Product of Givens rotations by ``angles[i]`` radians in the plane of axes (2i, 2i+1)."""
    dim = 2 * len(angles) if dim is None else dim
    R = np.eye(dim)
    for i, theta in enumerate(angles):
        c, s = math.cos(theta), math.sin(theta)
        a, b = 2 * i, 2 * i + 1
        R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
    return R


def _token_rows(rng, V, concentration, p_end):
    rows = []
    for i in range(V):
        weights = rng.dirichlet(np.full(V, concentration))
        # no adjacent repeats, so every sentence stays alignable after subsampling
        weights[i] = 0.0
        weights /= weights.sum()
        rows.append(np.append((1.0 - p_end) * weights, p_end))
    return rows


def random_grammar(rng, V, mean_len, concentration=0.3):
    p_end = 1.0 / max(mean_len, 1.0)
    begin = np.append(rng.dirichlet(np.full(V, concentration)), 0.0)
    return np.vstack([begin, *_token_rows(rng, V, concentration, p_end)])


def base_domain(cfg, seed):
    """The labeled domain of a setting, built from the datagen config and a seed."""
    rng = derive_rng(seed, _BASE_KEY)
    V, D = cfg.vocab_size, cfg.feature_dim
    transitions = random_grammar(rng, V, mean_len=(cfg.min_len + cfg.max_len) / 2)
    prototypes = cfg.prototype_scale * rng.standard_normal((V, D))
    durations = []
    for _ in range(V):
        lo = int(rng.integers(cfg.min_duration, cfg.max_duration + 1))
        hi = int(rng.integers(lo, cfg.max_duration + 1))
        durations.append((lo, hi))
    return DomainSpec(
        name="base",
        transitions=transitions.tolist(),
        prototypes=prototypes.tolist(),
        durations=durations,
        noise_std=cfg.base_noise_std,
        rotation_angles=[0.0] * (D // 2),
        min_len=cfg.min_len,
        max_len=cfg.max_len,
        seed=seed,
    )


def shifted_domain(base, cfg, seed):
    """
    Same vocabulary and prototypes as ``base``, seen through pairwise rotations of
    ``shift_angle_deg``, with louder noise and a grammar mixed with a fresh random one.
    """
    rng = derive_rng(seed, _SHIFT_KEY)
    fresh = random_grammar(rng, base.vocab_size, mean_len=(cfg.min_len + cfg.max_len) / 2)
    g = cfg.grammar_shift
    transitions = (1.0 - g) * base.transition_matrix() + g * fresh
    transitions /= transitions.sum(axis=1, keepdims=True)
    return msgspec.structs.replace(
        base,
        name="shifted",
        transitions=transitions.tolist(),
        noise_std=cfg.shifted_noise_std,
        rotation_angles=[math.radians(cfg.shift_angle_deg)] * (base.feature_dim // 2),
        seed=seed,
    )


def sample_sentence(spec, rng):
    """Walk the grammar from the begin state until end-of-sentence, within [min_len, max_len] tokens."""
    table = spec.transition_matrix()
    V = spec.vocab_size
    sentence, state = [], 0
    while True:
        row = table[state].copy()
        if len(sentence) >= spec.max_len:
            break
        if len(sentence) < spec.min_len:
            row[V] = 0.0
        total = row.sum()
        if total <= 0.0:
            raise InputDomainError(f"grammar state {state} cannot continue a sentence of length {len(sentence)}")
        nxt = int(rng.choice(V + 1, p=row / total))
        if nxt == V:
            break
        sentence.append(nxt)
        state = nxt + 1
    return tuple(sentence)


def render_features(sentence, spec, rng):
    """Each token emits d ~ U[min, max] frames of its rotated prototype plus N(0, noise_std) noise."""
    protos = spec.rotated_prototypes()
    D = spec.feature_dim
    chunks = []
    for token in sentence:
        lo, hi = spec.durations[token]
        d = int(rng.integers(lo, hi + 1))
        frames = np.tile(protos[token], (d, 1))
        if spec.noise_std > 0:
            frames = frames + rng.normal(0.0, spec.noise_std, size=(d, D))
        chunks.append(frames)
    return np.concatenate(chunks) if chunks else np.zeros((0, D))


def stationary_token_distribution(spec):
    """
    Long-run token frequencies of sentences sampled back to back (end-of-sentence
    restarts at the begin state), ignoring the length limits.
    """
    table = spec.transition_matrix()
    V = spec.vocab_size
    chain = np.zeros((V + 1, V + 1))
    chain[:, 1:] = table[:, :V]
    chain[:, 0] = table[:, V]
    A = np.vstack([chain.T - np.eye(V + 1), np.ones(V + 1)])
    b = np.zeros(V + 2)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    tokens = np.clip(pi[1:], 0.0, None)
    return tokens / tokens.sum()


def fit_diagonal_gaussian(feature_list):
    frames = np.concatenate([np.asarray(f) for f in feature_list])
    return frames.mean(axis=0), frames.var(axis=0)


def symmetric_kl(frames_a, frames_b, floor=1e-8):
    """KL(a||b) + KL(b||a) between diagonal Gaussians fitted to two lists of feature matrices."""
    mu_a, var_a = fit_diagonal_gaussian(frames_a)
    mu_b, var_b = fit_diagonal_gaussian(frames_b)
    var_a, var_b = np.maximum(var_a, floor), np.maximum(var_b, floor)

    def kl(mu_p, var_p, mu_q, var_q):
        return 0.5 * float(np.sum(np.log(var_q / var_p) + (var_p + (mu_p - mu_q) ** 2) / var_q - 1.0))

    return kl(mu_a, var_a, mu_b, var_b) + kl(mu_b, var_b, mu_a, var_a)
