"""
Differentiable building blocks of the encoder. Every layer follows the same shape:
``y, backprop = layer(params, name, x, ...)`` where ``backprop(dy, grads)`` adds the
parameter gradients into ``grads`` and returns the gradient with respect to ``x``.
Activations are packed as (frames, channels); per-sequence layers receive the
sequence lengths to split on.
"""

import numpy as np


def inc_grad(grads, name, value):
    grads[name] += value


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def split_sequences(x, lengths):
    return np.split(x, np.cumsum(lengths)[:-1])


def per_sequence(layer, x, lengths):
    """Run ``layer(x_i) -> (y_i, backprop_i)`` on each sequence of a packed array."""
    outs, backprops = [], []
    for xi in split_sequences(x, lengths):
        yi, bp = layer(xi)
        outs.append(yi)
        backprops.append(bp)

    def backprop(dy, grads):
        return np.concatenate([bp(dyi, grads) for bp, dyi in zip(backprops, split_sequences(dy, lengths), strict=True)])

    return np.concatenate(outs), backprop


def linear(params, name, x):
    w, b = params[f"{name}.w"], params[f"{name}.b"]

    def backprop(dy, grads):
        inc_grad(grads, f"{name}.w", x.T @ dy)
        inc_grad(grads, f"{name}.b", dy.sum(axis=0))
        return dy @ w.T

    return x @ w + b, backprop


def swish(x):
    s = sigmoid(x)

    def backprop(dy, grads):
        return dy * (s + x * s * (1.0 - s))

    return x * s, backprop


def glu(x):
    a, b = np.split(x, 2, axis=1)
    s = sigmoid(b)

    def backprop(dy, grads):
        return np.concatenate([dy * s, dy * a * s * (1.0 - s)], axis=1)

    return a * s, backprop


def dropout(x, rate, rng):
    if rng is None or rate == 0.0:
        return x, lambda dy, grads: dy
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backprop(dy, grads):
        return dy * mask

    return x * mask, backprop


def _scale_shift(params, name, xhat):
    gain, bias = params[f"{name}.gain"], params[f"{name}.bias"]

    def backprop(dy, grads):
        inc_grad(grads, f"{name}.gain", (dy * xhat).sum(axis=0))
        inc_grad(grads, f"{name}.bias", dy.sum(axis=0))
        return dy * gain

    return xhat * gain + bias, backprop


def layer_norm(params, name, x, eps):
    """Per-frame normalization over channels."""
    mu = x.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + eps)
    xhat = (x - mu) * inv
    y, backprop_rescale = _scale_shift(params, name, xhat)

    def backprop(dy, grads):
        d_xhat = backprop_rescale(dy, grads)
        mean_d = d_xhat.mean(axis=1, keepdims=True)
        mean_dx = (d_xhat * xhat).mean(axis=1, keepdims=True)
        return inv * (d_xhat - mean_d - xhat * mean_dx)

    return y, backprop


def _group_moments(xg, eps):
    mu = xg.mean(axis=(0, 2), keepdims=True)
    inv = 1.0 / np.sqrt(xg.var(axis=(0, 2), keepdims=True) + eps)
    return mu, inv


def group_norm_frames(params, name, x, num_groups, eps):
    """Group normalization of one sequence laid out as (time, channels)."""
    T, C = x.shape
    if T == 0:
        return x.copy(), lambda dy, grads: dy.copy()
    xg = x.reshape(T, num_groups, C // num_groups)
    mu, inv = _group_moments(xg, eps)
    xhat_g = (xg - mu) * inv
    y, backprop_rescale = _scale_shift(params, name, xhat_g.reshape(T, C))

    def backprop(dy, grads):
        d_xhat = backprop_rescale(dy, grads).reshape(xg.shape)
        mean_d = d_xhat.mean(axis=(0, 2), keepdims=True)
        mean_dx = (d_xhat * xhat_g).mean(axis=(0, 2), keepdims=True)
        return (inv * (d_xhat - mean_d - xhat_g * mean_dx)).reshape(T, C)

    return y, backprop


def group_norm(x, num_groups, gain, bias, eps=1e-5):
    """
    Group normalization of a channels x time matrix: each group of ``C / num_groups``
    channels is standardised over its channels and all time steps, then every channel
    gets its own affine. ``num_groups == C`` is instance norm, ``num_groups == 1``
    normalizes over the whole matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    C = x.shape[0]
    if C % num_groups:
        raise ValueError(f"num_groups={num_groups} does not divide {C} channels")
    params = {"gn.gain": np.asarray(gain, dtype=np.float64), "gn.bias": np.asarray(bias, dtype=np.float64)}
    y, _ = group_norm_frames(params, "gn", x.T, num_groups, eps)
    return y.T


def batch_norm(params, name, x, training, momentum, eps):
    """
    Batch normalization over every frame of the packed batch. Returns the output, the
    backprop and the updated running statistics (None outside training or on an empty batch).
    """
    running_mean, running_var = params[f"{name}.running_mean"], params[f"{name}.running_var"]
    if training and x.shape[0]:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        updates = {
            f"{name}.running_mean": momentum * running_mean + (1.0 - momentum) * mu,
            f"{name}.running_var": momentum * running_var + (1.0 - momentum) * var,
        }
    else:
        mu, var, updates = running_mean, running_var, None
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    y, backprop_rescale = _scale_shift(params, name, xhat)
    batch_stats = updates is not None

    def backprop(dy, grads):
        d_xhat = backprop_rescale(dy, grads)
        if not batch_stats:
            return d_xhat * inv
        mean_d = d_xhat.mean(axis=0)
        mean_dx = (d_xhat * xhat).mean(axis=0)
        return inv * (d_xhat - mean_d - xhat * mean_dx)

    return y, backprop, updates


def depthwise_conv(params, name, x):
    """Per-channel 'same' convolution along time of one (time, channels) sequence."""
    w, b = params[f"{name}.w"], params[f"{name}.b"]
    K = w.shape[0]
    T, C = x.shape
    if T == 0:
        return x.copy(), lambda dy, grads: dy.copy()
    pad = K // 2
    xpad = np.concatenate([np.zeros((pad, C)), x, np.zeros((pad, C))])
    windows = np.lib.stride_tricks.sliding_window_view(xpad, K, axis=0)  # (T, C, K)
    y = np.einsum("tck,kc->tc", windows, w) + b

    def backprop(dy, grads):
        inc_grad(grads, f"{name}.w", np.einsum("tck,tc->kc", windows, dy))
        inc_grad(grads, f"{name}.b", dy.sum(axis=0))
        dxpad = np.zeros_like(xpad)
        for k in range(K):
            dxpad[k : k + T] += dy * w[k]
        return dxpad[pad : pad + T]

    return y, backprop


def relative_positions(T, window):
    pos = np.arange(T)
    return np.clip(pos[None, :] - pos[:, None], -window, window) + window


def _softmax(scores):
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention(params, name, q, k, v, num_heads, window):
    """
    Multi-head scaled dot-product attention for one sequence with a learned bias per
    head and clipped relative offset.
    """
    T, d = q.shape
    if T == 0:
        return q.copy(), lambda dy, grads: (dy.copy(), dy.copy(), dy.copy())
    dh = d // num_heads
    scale = 1.0 / np.sqrt(dh)
    qh, kh, vh = (a.reshape(T, num_heads, dh) for a in (q, k, v))
    rel = params[f"{name}.rel_bias"]
    idx = relative_positions(T, window)
    scores = np.einsum("thd,shd->hts", qh, kh) * scale + rel[:, idx]
    attn = _softmax(scores)
    ctx = np.einsum("hts,shd->thd", attn, vh).reshape(T, d)

    def backprop(dy, grads):
        dctx = dy.reshape(T, num_heads, dh)
        dattn = np.einsum("thd,shd->hts", dctx, vh)
        dvh = np.einsum("hts,thd->shd", attn, dctx)
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        drel = np.stack([np.bincount(idx.ravel(), weights=ds.ravel(), minlength=2 * window + 1) for ds in dscores])
        inc_grad(grads, f"{name}.rel_bias", drel)
        dqh = np.einsum("hts,shd->thd", dscores, kh) * scale
        dkh = np.einsum("hts,thd->shd", dscores, qh) * scale
        return dqh.reshape(T, d), dkh.reshape(T, d), dvh.reshape(T, d)

    return ctx, backprop


def stack_frames(x, factor):
    """Concatenate each run of ``factor`` frames (zero-padded at the end) into one frame."""
    T, D = x.shape
    T_out = -(-T // factor)
    padded = np.zeros((T_out * factor, D))
    padded[:T] = x
    return padded.reshape(T_out, factor * D)


def log_softmax_layer(x):
    shifted = x - x.max(axis=1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backprop(dy, grads):
        return dy - np.exp(y) * dy.sum(axis=1, keepdims=True)

    return y, backprop
