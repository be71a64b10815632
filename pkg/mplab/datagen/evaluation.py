"""
Evaluation-side access to the unlabeled truth. Training code never imports this module;
a test audits the trainer's imports to keep it that way.
"""

import os

from mplab.common import read_transcripts
from mplab.datagen.settings import TRUTH_DIR, load_dataset
from mplab.errors import InputDomainError


class EvaluationCapability:
    """Proof of evaluation context. Only evaluation entry points construct one."""

    __slots__ = ("purpose",)

    def __init__(self, purpose):
        self.purpose = purpose


def _check(capability):
    if not isinstance(capability, EvaluationCapability):
        raise InputDomainError("hidden truth requires an EvaluationCapability")


def unlabeled_truth(dataset, capability):
    _check(capability)
    if dataset._truth is None:
        raise InputDomainError("this dataset was loaded without its unlabeled truth")
    return list(dataset._truth)


def load_dataset_with_truth(dirpath, capability):
    _check(capability)
    dataset = load_dataset(dirpath)
    words = read_transcripts(os.path.join(dirpath, TRUTH_DIR, "unlabeled.txt"))
    dataset._truth = [dataset.vocab.encode(w) for w in words]
    return dataset


def truth_labeled_view(dataset, capability):
    """Unlabeled features paired with their truth, for the topline model."""
    return list(zip(dataset.unlabeled, unlabeled_truth(dataset, capability), strict=True))
