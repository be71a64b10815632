import itertools

import numpy as np
import pytest

from mplab.config import parse_config_text, replace
from mplab.constants import VERBOSITY_ENV
from mplab.ctc import FramePosteriors, Vocabulary, collapse
from mplab.datagen import make_setting, sizes_for

TINY_TOML = """
[datagen]
base_seed = 7
setting = 'in_domain_small'
feature_dim = 4
vocab_size = 3
min_len = 2
max_len = 4
min_duration = 2
max_duration = 3
large_unlabeled = 10

[datagen.sizes]
labeled = 6
unlabeled = 6
dev = 4
test = 4

[encoder]
num_blocks = 1
d_model = 8
num_heads = 2
d_ff = 16
conv_kernel = 3
norm = 'group'
num_groups = 2
feature_dim = 4
vocab_size_with_blank = 4
dropout = 0.0
rel_pos_window = 2

[augment]
enabled = false

[train]
epochs = 2
batch_size = 2
ssl_lr = 1e-3
ipl_iters = 2
ipl_epochs_per_iter = 1
mpl_epochs = 2
ssl_epochs = 2
checkpoint_avg_n = 2
ipl_avg_last_n = 1

[train.lr_schedule]
kind = 'constant'

[beam]
beam_size = 4

[lm]
order = 2
external_sentences = 20
"""


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv(VERBOSITY_ENV, "0")


@pytest.fixture
def tiny_cfg(tmp_path):
    cfg = parse_config_text(TINY_TOML)
    return replace(cfg, "paths", workdir=str(tmp_path / "work"))


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return str(path)


@pytest.fixture
def tiny_dataset(tiny_cfg):
    dg = tiny_cfg.datagen
    return make_setting(dg.setting, sizes_for(dg, dg.setting), dg.base_seed, dg)


@pytest.fixture
def vocab3():
    return Vocabulary.of(["a", "b", "c"])


def _random_posteriors(rng, T, num_classes, sharpness=1.0):
    return FramePosteriors.from_logits(sharpness * rng.standard_normal((T, num_classes)))


def _target_probs(post, vocab):
    probs = {}
    lp = post.log_probs
    for alignment in itertools.product(range(post.num_classes), repeat=post.length):
        target = collapse(alignment, vocab)
        probs[target] = probs.get(target, 0.0) + float(np.exp(sum(lp[t, z] for t, z in enumerate(alignment))))
    return probs


@pytest.fixture
def random_posteriors():
    return _random_posteriors


@pytest.fixture
def target_probs():
    """P(Y | X) for every target Y, by summing over all alignments."""
    return _target_probs
