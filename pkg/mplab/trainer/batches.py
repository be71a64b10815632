import math
from typing import NamedTuple

from mplab.common import derive_rng

LABELED = "labeled"
UNLABELED = "unlabeled"

# stream key for epoch shuffles under the training seed
_SHUFFLE_KEY = 11


class Batch(NamedTuple):
    kind: str
    indices: tuple


def exposure_counts(n_labeled, n_unlabeled, sup_ratio_override=None):
    """Labeled and unlabeled items shown per epoch; the override fixes the labeled share."""
    if sup_ratio_override is None or n_labeled == 0 or n_unlabeled == 0:
        return n_labeled, n_unlabeled
    total = n_labeled + n_unlabeled
    shown = min(max(1, round(sup_ratio_override * total)), total - 1)
    return shown, total - shown


def steps_per_epoch(n_labeled, n_unlabeled, batch_size, sup_ratio_override=None):
    n_lab, n_unl = exposure_counts(n_labeled, n_unlabeled, sup_ratio_override)
    return math.ceil(n_lab / batch_size) + math.ceil(n_unl / batch_size)


def _stream(rng, n, count):
    # permutations of range(n) laid end to end, cut to ``count`` items
    out = []
    while len(out) < count:
        out.extend(int(i) for i in rng.permutation(n))
    return out[:count]


def compose_batches(n_labeled, n_unlabeled, batch_size, seed, epoch, sup_ratio_override=None):
    """
    Shuffle the union of labeled and unlabeled items with an rng keyed by (seed, epoch)
    and cut it into batches of one kind each. Items join the open batch of their kind
    in shuffled order; batches come out ordered by the shuffled position of their first
    item, so the interleaving of the two kinds follows the shuffle. Each stream ends
    with at most one short batch.
    """
    rng = derive_rng(seed, _SHUFFLE_KEY, epoch)
    n_lab, n_unl = exposure_counts(n_labeled, n_unlabeled, sup_ratio_override)
    if (n_lab, n_unl) == (n_labeled, n_unlabeled):
        items = [(LABELED, i) for i in range(n_labeled)] + [(UNLABELED, j) for j in range(n_unlabeled)]
    else:
        items = [(LABELED, i) for i in _stream(rng, n_labeled, n_lab)]
        items += [(UNLABELED, j) for j in _stream(rng, n_unlabeled, n_unl)]

    batches, open_batch = [], {}
    for pos in rng.permutation(len(items)):
        kind, index = items[pos]
        current = open_batch.get(kind)
        if current is None:
            current = open_batch[kind] = []
            batches.append((kind, current))
        current.append(index)
        if len(current) == batch_size:
            del open_batch[kind]
    return [Batch(kind, tuple(indices)) for kind, indices in batches]
