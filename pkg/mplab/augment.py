import numpy as np

from mplab.config.validations import AugmentPolicy  # noqa: F401


def _mask_along(x, axis, num_masks, max_width, value, rng):
    dim = x.shape[axis]
    for _ in range(num_masks):
        width = int(rng.integers(0, max_width + 1))
        width = min(width, dim)
        start = int(rng.integers(0, dim - width + 1))
        if axis == 0:
            x[start : start + width, :] = value
        else:
            x[:, start : start + width] = value
    return x


def apply(policy, features, rng):
    """
    SpecAugment-style masking without time warping: ``num_time_masks`` bands of at most
    ``max_time_mask_width`` frames and ``num_freq_masks`` bands of at most
    ``max_freq_mask_width`` bins are set to ``mask_value``. Bands are clamped to the
    sequence, so the output always has the input's shape.
    """
    features = np.asarray(features, dtype=np.float64)
    if not policy.enabled or features.size == 0:
        return features
    if policy.max_time_mask_width == 0 and policy.max_freq_mask_width == 0:
        return features
    out = features.copy()
    _mask_along(out, 0, policy.num_time_masks, policy.max_time_mask_width, policy.mask_value, rng)
    _mask_along(out, 1, policy.num_freq_masks, policy.max_freq_mask_width, policy.mask_value, rng)
    return out
