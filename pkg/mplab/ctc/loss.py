"""
Exact CTC likelihood and its gradient, computed with the forward-backward recursion
over the blank-extended target in log space.
"""

import numpy as np

from mplab.errors import InputDomainError

NEG_INF = -np.inf


def collapse(alignment, vocab):
    """Merge consecutive repeats, then drop blanks."""
    vocab.check_alignment(alignment)
    out, prev = [], None
    for z in alignment:
        z = int(z)
        if z != prev and z != vocab.blank_id:
            out.append(z)
        prev = z
    return tuple(out)


def min_frames_required(target):
    """|Y| plus one separating blank for every adjacent repeat."""
    repeats = sum(1 for a, b in zip(target, target[1:], strict=False) if a == b)
    return len(target) + repeats


def _extend(target, blank):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    # a transition s-2 -> s is allowed into a label that differs from the label two states back
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return ext, skip


def _check_target(post, target):
    target = tuple(int(y) for y in target)
    for y in target:
        if not 0 <= y < post.blank_id:
            raise InputDomainError(f"target id {y} outside vocabulary of size {post.blank_id}")
    return target


def _forward(lp, ext, skip):
    T, S = lp.shape[0], len(ext)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + lp[t, ext]
    return alpha


def _backward(lp, ext, skip):
    # beta[t, s]: probability of the frames after t given state s at t (current emission excluded)
    T, S = lp.shape[0], len(ext)
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc
    return beta


def _final(alpha, S):
    last = alpha[-1]
    return float(np.logaddexp(last[S - 1], last[S - 2])) if S > 1 else float(last[0])


def ctc_log_likelihood(post, target):
    """log sum over alignments Z in B^-1(Y) of prod_t P(z_t | X); -inf when unreachable."""
    target = _check_target(post, target)
    T = post.length
    if T == 0:
        return 0.0 if not target else NEG_INF
    if T < min_frames_required(target):
        return NEG_INF
    ext, skip = _extend(target, post.blank_id)
    alpha = _forward(post.log_probs, ext, skip)
    return _final(alpha, len(ext))


def ctc_posterior_occupancy(post, target):
    """
    Per-frame class occupancy gamma[t, k] = P(z_t = k | X, Y) from forward-backward,
    together with the log-likelihood. Returns ``(None, -inf)`` for unreachable targets.
    """
    target = _check_target(post, target)
    T, C = post.length, post.num_classes
    if T == 0 or T < min_frames_required(target):
        return None, (0.0 if T == 0 and not target else NEG_INF)
    ext, skip = _extend(target, post.blank_id)
    lp = post.log_probs
    alpha = _forward(lp, ext, skip)
    loglik = _final(alpha, len(ext))
    beta = _backward(lp, ext, skip)
    occupancy = np.exp(alpha + beta - loglik)
    onehot = np.zeros((len(ext), C))
    onehot[np.arange(len(ext)), ext] = 1.0
    return occupancy @ onehot, loglik


def ctc_loss_and_grad(post, target):
    """
    Negative log-likelihood and its gradient with respect to the pre-softmax logits
    that produced ``post``. Returns ``None`` when the target cannot be aligned in T
    frames; callers drop such samples.
    """
    gamma, loglik = ctc_posterior_occupancy(post, target)
    if gamma is None:
        if post.length == 0 and loglik == 0.0:
            return 0.0, np.zeros((0, post.num_classes))
        return None
    return -loglik, post.probs() - gamma
