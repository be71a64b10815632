"""
Conformer-style CTC encoder in plain numpy.

The stack is frame stacking plus a linear front-end, ``num_blocks`` Conformer blocks
(half-step feed-forward, self-attention with a clipped relative-position bias,
convolution module, half-step feed-forward, layer norm) and a linear projection to
log-softmax posteriors over the vocabulary plus blank. The normalization inside the
convolution module is the configurable piece.

``forward`` returns a tape holding the backprop closures; ``backward`` replays it into a
gradient ParameterSet.
"""

import functools

import numpy as np

from mplab.ctc.vocab import FramePosteriors
from mplab.encoder import layers
from mplab.encoder.params import ParameterSet
from mplab.errors import ConfigError, InputDomainError, StaleTapeError


def parameter_layout(cfg):
    """Ordered (name, shape) pairs of every entry an encoder with ``cfg`` owns."""
    d = cfg.d_model
    layout = [("frontend.w", (cfg.subsample_factor * cfg.feature_dim, d)), ("frontend.b", (d,))]

    def norm(name, width):
        layout.extend([(f"{name}.gain", (width,)), (f"{name}.bias", (width,))])

    def lin(name, n_in, n_out):
        layout.extend([(f"{name}.w", (n_in, n_out)), (f"{name}.b", (n_out,))])

    for i in range(cfg.num_blocks):
        block = f"blocks.{i}"
        for ff in ("ff1", "ff2"):
            norm(f"{block}.{ff}.norm", d)
            lin(f"{block}.{ff}.lin1", d, cfg.d_ff)
            lin(f"{block}.{ff}.lin2", cfg.d_ff, d)
        norm(f"{block}.mhsa.norm", d)
        for proj in ("q", "k", "v", "out"):
            lin(f"{block}.mhsa.{proj}", d, d)
        layout.append((f"{block}.mhsa.rel_bias", (cfg.num_heads, 2 * cfg.rel_pos_window + 1)))
        norm(f"{block}.conv.norm_in", d)
        lin(f"{block}.conv.pw1", d, 2 * d)
        layout.extend([(f"{block}.conv.dw.w", (cfg.conv_kernel, d)), (f"{block}.conv.dw.b", (d,))])
        norm(f"{block}.conv.norm", d)
        if cfg.norm == "batch":
            layout.extend([(f"{block}.conv.norm.running_mean", (d,)), (f"{block}.conv.norm.running_var", (d,))])
        lin(f"{block}.conv.pw2", d, d)
        norm(f"{block}.norm_out", d)
    lin("output", d, cfg.vocab_size_with_blank)
    return layout


def init_params(cfg, rng):
    """Deterministic initial ParameterSet for ``cfg`` drawn from ``rng``."""
    entries = []
    for name, shape in parameter_layout(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "w":
            values = rng.standard_normal(shape) / np.sqrt(shape[0])
        elif leaf in ("gain", "running_var"):
            values = np.ones(shape)
        else:
            values = np.zeros(shape)
        entries.append((name, values))
    return ParameterSet(entries)


def check_params(cfg, params):
    layout = parameter_layout(cfg)
    if params.names != tuple(n for n, _ in layout) or params.shapes != tuple(s for _, s in layout):
        raise ConfigError("parameter set does not match the encoder configuration")


class Tape:
    """Record of one forward pass: the backprop chain plus what backward needs to check it."""

    __slots__ = ("backprop", "backprop_softmax", "lengths", "layout", "fingerprint", "training", "buffer_updates")

    def __init__(self, backprop, backprop_softmax, lengths, layout, fingerprint, training, buffer_updates):
        self.backprop = backprop
        self.backprop_softmax = backprop_softmax
        self.lengths = lengths
        self.layout = layout
        self.fingerprint = fingerprint
        self.training = training
        self.buffer_updates = buffer_updates


def chain(x, *steps):
    backprops = []
    for step in steps:
        x, bp = step(x)
        backprops.append(bp)

    def backprop(dy, grads):
        for bp in reversed(backprops):
            dy = bp(dy, grads)
        return dy

    return x, backprop


def residual(x, branch, scale=1.0):
    y, bp = branch(x)

    def backprop(dy, grads):
        return dy + bp(scale * dy, grads)

    return x + scale * y, backprop


class _Pass:
    """Per-call state of a forward pass: config, parameters, rng and collected BN updates."""

    def __init__(self, cfg, params, lengths, rng, training):
        self.cfg = cfg
        self.params = params
        self.lengths = lengths
        self.rng = rng if training else None
        self.training = training
        self.buffer_updates = {}

    def linear(self, name):
        return functools.partial(layers.linear, self.params, name)

    def layer_norm(self, name):
        return functools.partial(layers.layer_norm, self.params, name, eps=self.cfg.norm_eps)

    def dropout(self, x):
        return layers.dropout(x, self.cfg.dropout, self.rng)

    def feed_forward(self, name, x):
        return chain(
            x,
            self.layer_norm(f"{name}.norm"),
            self.linear(f"{name}.lin1"),
            layers.swish,
            self.dropout,
            self.linear(f"{name}.lin2"),
            self.dropout,
        )

    def self_attention(self, name, x):
        cfg = self.cfg
        h, bp_norm = layers.layer_norm(self.params, f"{name}.norm", x, cfg.norm_eps)
        (q, bp_q), (k, bp_k), (v, bp_v) = (layers.linear(self.params, f"{name}.{p}", h) for p in "qkv")
        contexts, backprops = [], []
        for qi, ki, vi in zip(*(layers.split_sequences(a, self.lengths) for a in (q, k, v)), strict=True):
            ctx, bp = layers.attention(self.params, name, qi, ki, vi, cfg.num_heads, cfg.rel_pos_window)
            contexts.append(ctx)
            backprops.append(bp)
        y, bp_out = chain(np.concatenate(contexts), self.linear(f"{name}.out"), self.dropout)

        def backprop(dy, grads):
            dctx = layers.split_sequences(bp_out(dy, grads), self.lengths)
            dq, dk, dv = zip(*(bp(d, grads) for bp, d in zip(backprops, dctx, strict=True)), strict=True)
            dh = bp_q(np.concatenate(dq), grads) + bp_k(np.concatenate(dk), grads) + bp_v(np.concatenate(dv), grads)
            return bp_norm(dh, grads)

        return y, backprop

    def conv_norm(self, name, x):
        cfg = self.cfg
        if cfg.norm == "batch":
            y, bp, updates = layers.batch_norm(self.params, name, x, self.training, cfg.bn_momentum, cfg.norm_eps)
            if updates:
                self.buffer_updates.update(updates)
            return y, bp
        groups = cfg.effective_groups
        return layers.per_sequence(
            lambda xi: layers.group_norm_frames(self.params, name, xi, groups, cfg.norm_eps), x, self.lengths
        )

    def conv_module(self, name, x):
        return chain(
            x,
            self.layer_norm(f"{name}.norm_in"),
            self.linear(f"{name}.pw1"),
            layers.glu,
            lambda h: layers.per_sequence(
                functools.partial(layers.depthwise_conv, self.params, f"{name}.dw"), h, self.lengths
            ),
            functools.partial(self.conv_norm, f"{name}.norm"),
            layers.swish,
            self.linear(f"{name}.pw2"),
            self.dropout,
        )

    def block(self, name, x):
        return chain(
            x,
            lambda h: residual(h, functools.partial(self.feed_forward, f"{name}.ff1"), 0.5),
            lambda h: residual(h, functools.partial(self.self_attention, f"{name}.mhsa")),
            lambda h: residual(h, functools.partial(self.conv_module, f"{name}.conv")),
            lambda h: residual(h, functools.partial(self.feed_forward, f"{name}.ff2"), 0.5),
            self.layer_norm(f"{name}.norm_out"),
        )


def forward_batch(cfg, params, batch, mode="eval", rng=None):
    """
    Encode a list of T_i x D feature matrices. Returns one FramePosteriors per input,
    each ``ceil(T_i / subsample_factor)`` frames long, and the tape. Batch normalization
    pools its statistics over every frame of the batch in train mode.
    """
    if mode not in ("train", "eval"):
        raise InputDomainError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training and rng is None and cfg.dropout > 0.0:
        raise InputDomainError("train mode needs an rng for dropout")
    check_params(cfg, params)
    stacked = []
    for features in batch:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
            raise ConfigError(f"features must be T x {cfg.feature_dim}, got shape {features.shape}")
        stacked.append(layers.stack_frames(features, cfg.subsample_factor))
    if not stacked:
        raise InputDomainError("cannot encode an empty batch")
    lengths = [x.shape[0] for x in stacked]

    run = _Pass(cfg, params, lengths, rng, training)
    steps = [run.linear("frontend")]
    steps += [functools.partial(run.block, f"blocks.{i}") for i in range(cfg.num_blocks)]
    steps.append(run.linear("output"))
    logits, backprop = chain(np.concatenate(stacked), *steps)
    log_probs, backprop_softmax = layers.log_softmax_layer(logits)

    tape = Tape(
        backprop=backprop,
        backprop_softmax=backprop_softmax,
        lengths=lengths,
        layout=parameter_layout(cfg),
        fingerprint=params.fingerprint() if training else None,
        training=training,
        buffer_updates=run.buffer_updates,
    )
    posts = [FramePosteriors(lp, validate=False) for lp in layers.split_sequences(log_probs, lengths)]
    return posts, tape


def forward(cfg, params, features, mode="eval", rng=None):
    posts, tape = forward_batch(cfg, params, [features], mode, rng)
    return posts[0], tape


def posteriors(cfg, params, feature_list):
    """Eval-mode posteriors for each sequence, encoded one at a time."""
    return [forward(cfg, params, f)[0] for f in feature_list]


def backward(tape, grad, wrt="logits", params=None):
    """
    Gradient of a scalar loss with respect to every parameter, given its gradient with
    respect to the pre-softmax logits (``wrt="logits"``) or the log-posteriors
    (``wrt="log_probs"``). ``grad`` is one array per encoded sequence or the packed stack.
    Passing the caller's current ``params`` checks the tape is not stale.
    """
    if not tape.training:
        raise InputDomainError("backward needs a tape from a train-mode forward")
    if params is not None and params.fingerprint() != tape.fingerprint:
        raise StaleTapeError("parameters changed since the forward pass that produced this tape")
    if isinstance(grad, list | tuple):
        grad = np.concatenate([np.asarray(g, dtype=np.float64) for g in grad])
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape[0] != sum(tape.lengths):
        raise InputDomainError(f"gradient covers {grad.shape[0]} frames, tape has {sum(tape.lengths)}")
    if wrt == "log_probs":
        grad = tape.backprop_softmax(grad, None)
    elif wrt != "logits":
        raise InputDomainError(f"wrt must be 'logits' or 'log_probs', got {wrt!r}")
    grads = {name: np.zeros(shape) for name, shape in tape.layout}
    tape.backprop(grad, grads)
    return ParameterSet((name, grads[name]) for name, _ in tape.layout)
