import hashlib

import numpy as np

from mplab.constants import BUFFER_SUFFIXES
from mplab.errors import IncompatibleParametersError, InputDomainError


def is_buffer(name):
    return name.rsplit(".", 1)[-1] in BUFFER_SUFFIXES


class ParameterSet:
    """
    Ordered, immutable mapping of entry name to a float64 array. Every operation that
    changes values returns a new set. Entries whose name ends in ``running_mean`` or
    ``running_var`` are buffers: they ride along in EMA and averaging but are never trained.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        items = entries.items() if isinstance(entries, dict) else entries
        self._entries = {}
        for name, values in items:
            if name in self._entries:
                raise IncompatibleParametersError(f"duplicate parameter name {name!r}")
            arr = np.array(values, dtype=np.float64)
            arr.flags.writeable = False
            self._entries[name] = arr

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __repr__(self):
        return f"ParameterSet({len(self)} entries, {self.size} values)"

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.compatible(other) and all(np.array_equal(self[n], other[n]) for n in self)

    __hash__ = None

    def items(self):
        return self._entries.items()

    @property
    def names(self):
        return tuple(self._entries)

    @property
    def shapes(self):
        return tuple(a.shape for a in self._entries.values())

    @property
    def size(self):
        return sum(a.size for a in self._entries.values())

    @property
    def trainable_names(self):
        return tuple(n for n in self._entries if not is_buffer(n))

    def compatible(self, other):
        return self.names == other.names and self.shapes == other.shapes

    def check_compatible(self, other):
        if not self.compatible(other):
            raise IncompatibleParametersError("parameter sets differ in names, order or shapes")

    def map(self, fn):
        return ParameterSet((n, fn(a)) for n, a in self.items())

    def zip_map(self, other, fn):
        self.check_compatible(other)
        return ParameterSet((n, fn(a, other[n])) for n, a in self.items())

    def scale(self, c):
        return self.map(lambda a: a * c)

    def norm(self, trainable_only=True):
        names = self.trainable_names if trainable_only else self.names
        return float(np.sqrt(sum(float(np.sum(self[n] ** 2)) for n in names)))

    def flatten(self):
        if not len(self):
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self._entries.values()])

    def unflatten(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise IncompatibleParametersError(f"expected a vector of {self.size} values, got shape {vector.shape}")
        out, offset = [], 0
        for name, arr in self.items():
            out.append((name, vector[offset : offset + arr.size].reshape(arr.shape)))
            offset += arr.size
        return ParameterSet(out)

    def replace(self, updates):
        """Copy with some entries swapped for new values of the same shape."""
        for name, values in updates.items():
            if name not in self._entries:
                raise IncompatibleParametersError(f"unknown parameter {name!r}")
            if np.shape(values) != self[name].shape:
                raise IncompatibleParametersError(f"shape mismatch for {name!r}")
        return ParameterSet((n, updates.get(n, a)) for n, a in self.items())

    def fingerprint(self):
        h = hashlib.blake2b(digest_size=16)
        for name, arr in self.items():
            h.update(name.encode())
            h.update(repr(arr.shape).encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def ema_update(offline, online, alpha):
    """phi <- alpha * phi + (1 - alpha) * xi, buffers included."""
    if not 0.0 <= alpha <= 1.0:
        raise InputDomainError(f"EMA coefficient must lie in [0, 1], got {alpha}")
    offline.check_compatible(online)
    if alpha == 1.0:
        return offline
    if alpha == 0.0:
        return online
    return offline.zip_map(online, lambda phi, xi: phi + (1.0 - alpha) * (xi - phi))


def momentum_from_weight(w, steps_per_epoch):
    """alpha such that alpha ** steps_per_epoch == w, the seed share retained after one epoch."""
    if steps_per_epoch < 1:
        raise InputDomainError(f"steps_per_epoch must be positive, got {steps_per_epoch}")
    if not 0.0 < w <= 1.0:
        raise InputDomainError(f"momentum weight must lie in (0, 1], got {w}")
    return float(w ** (1.0 / steps_per_epoch))


def average_checkpoints(checkpoints):
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise InputDomainError("cannot average an empty list of checkpoints")
    mean = {n: a.copy() for n, a in checkpoints[0].items()}
    for k, ckpt in enumerate(checkpoints[1:], start=2):
        checkpoints[0].check_compatible(ckpt)
        # running mean keeps identical inputs exact
        for n in mean:
            mean[n] += (ckpt[n] - mean[n]) / k
    return ParameterSet(mean)
