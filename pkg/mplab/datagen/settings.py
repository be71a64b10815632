"""
Semi-supervised settings built from synthetic domains, and their on-disk layout.

A dataset directory holds ``manifest.json``, ``<split>.feats`` for every split,
``<split>.txt`` for the labeled splits and the unlabeled truth under
``eval/unlabeled.txt``, which only the evaluation side reads.
"""

import os

import msgspec

from mplab.common import derive_rng, read_matrices, read_transcripts, write_matrices, write_transcripts
from mplab.config.validations import Datagen, SplitSizes
from mplab.constants import SETTINGS, SPLITS
from mplab.ctc.vocab import Vocabulary
from mplab.datagen.domain import DomainSpec, base_domain, render_features, sample_sentence, shifted_domain
from mplab.errors import FormatError, InputDomainError, MissingInputError

MANIFEST = "manifest.json"
TRUTH_DIR = "eval"
# split keys 0-3 follow SPLITS
_EXTERNAL_TEXT_KEY = 4


class Manifest(msgspec.Struct):
    setting: str
    base_seed: int
    sizes: SplitSizes
    datagen: Datagen
    tokens: tuple[str, ...]
    domains: dict[str, DomainSpec]


class SplitDataset:
    """
    Labeled pairs, unlabeled features and labeled dev/test sets of one setting. The
    unlabeled transcripts are kept in ``_truth`` and only handed out by
    ``mplab.datagen.evaluation``.
    """

    __slots__ = ("vocab", "labeled", "unlabeled", "dev", "test", "manifest", "_truth")

    def __init__(self, vocab, labeled, unlabeled, dev, test, manifest, truth=None):
        self.vocab = vocab
        self.labeled = labeled
        self.unlabeled = unlabeled
        self.dev = dev
        self.test = test
        self.manifest = manifest
        self._truth = truth

    @property
    def domain_tags(self):
        return {"labeled": self.manifest.domains["labeled"].name, "unlabeled": self.manifest.domains["unlabeled"].name}

    def with_unlabeled(self, unlabeled):
        return SplitDataset(self.vocab, self.labeled, unlabeled, self.dev, self.test, self.manifest)


def make_vocabulary(size):
    return Vocabulary.of(f"t{i:02d}" for i in range(size))


def sizes_for(cfg, name):
    """The configured split sizes, with the large unlabeled pool for ``in_domain_large``."""
    if name == "in_domain_large":
        return msgspec.structs.replace(cfg.sizes, unlabeled=cfg.large_unlabeled)
    return cfg.sizes


def _draw(spec, n, seed, split_key):
    # one rng stream per (split, item), so items never depend on each other
    items = []
    for i in range(n):
        rng = derive_rng(seed, split_key, i)
        sentence = sample_sentence(spec, rng)
        items.append((render_features(sentence, spec, rng), sentence))
    return items


def make_setting(name, sizes, base_seed, cfg=None):
    """
    Generate a setting. The labeled split always comes from the base domain; the
    unlabeled, dev and test splits come from the base domain for the ``in_domain_*``
    settings and from the shifted domain for ``out_domain``.
    """
    if name not in SETTINGS:
        raise InputDomainError(f"unknown setting {name!r}; expected one of {', '.join(SETTINGS)}")
    cfg = Datagen() if cfg is None else cfg
    base = base_domain(cfg, base_seed)
    target = shifted_domain(base, cfg, base_seed) if name == "out_domain" else base
    manifest = Manifest(
        setting=name,
        base_seed=base_seed,
        sizes=sizes,
        datagen=cfg,
        tokens=make_vocabulary(cfg.vocab_size).tokens,
        domains={"labeled": base, "unlabeled": target},
    )
    return from_manifest(manifest)


def from_manifest(manifest):
    """Regenerate the dataset a manifest describes."""
    base, target = manifest.domains["labeled"], manifest.domains["unlabeled"]
    seed = manifest.base_seed
    labeled = _draw(base, manifest.sizes.labeled, seed, 0)
    unlabeled = _draw(target, manifest.sizes.unlabeled, seed, 1)
    dev = _draw(target, manifest.sizes.dev, seed, 2)
    test = _draw(target, manifest.sizes.test, seed, 3)
    return SplitDataset(
        vocab=Vocabulary.of(manifest.tokens),
        labeled=labeled,
        unlabeled=[features for features, _ in unlabeled],
        dev=dev,
        test=test,
        manifest=manifest,
        truth=[sentence for _, sentence in unlabeled],
    )


def external_text(manifest, n):
    """
    Sentences sampled from the unlabeled domain's grammar on a stream of their own, the
    stand-in for external LM training text. Never the unlabeled transcripts themselves.
    """
    spec = manifest.domains["unlabeled"]
    return [sample_sentence(spec, derive_rng(manifest.base_seed, _EXTERNAL_TEXT_KEY, i)) for i in range(n)]


def _split_paths(dirpath, split):
    return os.path.join(dirpath, f"{split}.feats"), os.path.join(dirpath, f"{split}.txt")


def save_dataset(dataset, dirpath):
    os.makedirs(os.path.join(dirpath, TRUTH_DIR), exist_ok=True)
    with open(os.path.join(dirpath, MANIFEST), "wb") as f:
        f.write(msgspec.json.format(msgspec.json.encode(dataset.manifest), indent=2))
    for split in SPLITS:
        feats_path, text_path = _split_paths(dirpath, split)
        if split == "unlabeled":
            write_matrices(feats_path, dataset.unlabeled)
            if dataset._truth is not None:
                truth_path = os.path.join(dirpath, TRUTH_DIR, "unlabeled.txt")
                write_transcripts(truth_path, _words(dataset.vocab, dataset._truth))
            continue
        pairs = getattr(dataset, split)
        write_matrices(feats_path, [features for features, _ in pairs])
        write_transcripts(text_path, _words(dataset.vocab, [labels for _, labels in pairs]))


def _words(vocab, sentences):
    return [vocab.decode(s) for s in sentences]


def load_manifest(dirpath):
    path = os.path.join(dirpath, MANIFEST)
    if not os.path.isfile(path):
        raise MissingInputError(path, "dataset manifest")
    with open(path, "rb") as f:
        try:
            return msgspec.json.decode(f.read(), type=Manifest)
        except msgspec.DecodeError as e:
            raise FormatError(f"{path}: {e}") from e


def load_labeled(dirpath, split, vocab):
    feats_path, text_path = _split_paths(dirpath, split)
    features = read_matrices(feats_path)
    labels = [vocab.encode(words) for words in read_transcripts(text_path)]
    if len(features) != len(labels):
        raise FormatError(f"{dirpath}: {split} has {len(features)} feature records but {len(labels)} transcripts")
    return list(zip(features, labels, strict=True))


def load_dataset(dirpath):
    """Rebuild a SplitDataset from disk, without the unlabeled truth."""
    manifest = load_manifest(dirpath)
    vocab = Vocabulary.of(manifest.tokens)
    return SplitDataset(
        vocab=vocab,
        labeled=load_labeled(dirpath, "labeled", vocab),
        unlabeled=read_matrices(_split_paths(dirpath, "unlabeled")[0]),
        dev=load_labeled(dirpath, "dev", vocab),
        test=load_labeled(dirpath, "test", vocab),
        manifest=manifest,
    )
