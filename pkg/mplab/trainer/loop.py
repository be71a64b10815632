import math
import os
import time

import msgspec
import numpy as np
from humanfriendly import format_timespan
from tqdm import tqdm

from mplab import augment
from mplab.common import debug, derive_rng, verbosity
from mplab.config.validations import Constant
from mplab.ctc import best_path_decode, ctc_loss_and_grad, min_frames_required
from mplab.encoder import average_checkpoints, backward, forward_batch, posteriors, save_checkpoint
from mplab.errors import MissingInputError
from mplab.metrics import corpus_breakdown
from mplab.trainer.batches import compose_batches
from mplab.trainer.optim import clip_gradients, make_optimizer

# rng stream keys under the training seed
PHASE_KEYS = {"seed": 1, "ipl": 2, "mpl": 3, "topline": 4}
INIT_KEY = 7
AUGMENT_KEY = 8


class EpochRecord(msgspec.Struct):
    phase: str
    epoch: int
    labeling_pass: int
    sup_loss: float
    unsup_loss: float
    val_ter: float
    val_wer: float
    churn: float
    skipped: int
    steps: int
    lr: float
    elapsed: float


class RunLog:
    """Per-epoch records, serialised as one JSON object per line in field order."""

    _encoder = msgspec.json.Encoder()
    _decoder = msgspec.json.Decoder(EpochRecord)

    def __init__(self, records=None):
        self.records = list(records or [])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epoch index must increase")
        self.records.append(record)

    @property
    def next_epoch(self):
        return self.records[-1].epoch + 1 if self.records else 1

    def dumps(self):
        return b"".join(self._encoder.encode(r) + b"\n" for r in self.records)

    def write(self, path):
        with open(path, "wb") as f:
            f.write(self.dumps())

    @classmethod
    def read(cls, path):
        if not os.path.isfile(path):
            raise MissingInputError(path, "run log")
        with open(path, "rb") as f:
            return cls(cls._decoder.decode(line) for line in f.read().splitlines() if line.strip())


def is_reachable(enc_cfg, features, labels):
    """Whether CTC can align ``labels`` to the encoder output of ``features``."""
    frames = math.ceil(len(features) / enc_cfg.subsample_factor)
    return frames >= min_frames_required(labels)


class Trainer:
    """Owns the online parameters and optimizer state of one training phase."""

    def __init__(self, cfg, params, phase, base_lr=None, schedule=None):
        self.cfg = cfg
        self.params = params
        self.phase = phase
        self.optimizer = make_optimizer(cfg.train.optimizer, schedule or Constant(), base_lr)
        self.updates = 0

    def step(self, pairs, sample_ids, epoch, step):
        """
        One optimizer update on augmented (features, labels) pairs. Augmentation draws are
        keyed by sample id, so a sample is masked the same way in an epoch wherever its
        batch lands. Samples whose labels cannot be aligned contribute nothing and are
        counted as skipped. Returns the summed loss, the number of samples trained on and
        the number skipped.
        """
        seed, phase_key = self.cfg.train.seed, PHASE_KEYS[self.phase]
        feats = [
            augment.apply(self.cfg.augment, f, derive_rng(seed, AUGMENT_KEY, phase_key, epoch, sample_id))
            for (f, _), sample_id in zip(pairs, sample_ids, strict=True)
        ]
        posts, tape = forward_batch(
            self.cfg.encoder, self.params, feats, "train", derive_rng(seed, phase_key, epoch, step, 0)
        )
        total, used, skipped, grads = 0.0, 0, 0, []
        for post, (_, labels) in zip(posts, pairs, strict=True):
            result = ctc_loss_and_grad(post, labels)
            if result is None:
                skipped += 1
                grads.append(np.zeros((post.length, post.num_classes)))
                continue
            loss, grad = result
            total += loss
            used += 1
            grads.append(grad / len(pairs))
        param_grads = clip_gradients(backward(tape, grads, params=self.params), self.cfg.train.grad_clip_norm)
        params = self.optimizer.step(self.params, param_grads)
        # a zero base rate freezes the whole model, running statistics included
        if tape.buffer_updates and self.optimizer.base_lr > 0:
            params = params.replace(tape.buffer_updates)
        self.params = params
        self.updates += 1
        return total, used, skipped


def transcribe(enc_cfg, params, feature_list, vocab):
    return [best_path_decode(post, vocab) for post in posteriors(enc_cfg, params, feature_list)]


def evaluate(enc_cfg, params, pairs, vocab):
    """Corpus error breakdown of best-path transcripts against the pairs' labels."""
    hyps = transcribe(enc_cfg, params, [f for f, _ in pairs], vocab)
    return corpus_breakdown([labels for _, labels in pairs], hyps)


class CheckpointHistory:
    """Parameters of every epoch with their validation error, for best-N and last-N averaging."""

    def __init__(self):
        self.entries = []

    def add(self, epoch, val_ter, params):
        self.entries.append((epoch, val_ter, params))

    def best_average(self, n):
        best = sorted(self.entries, key=lambda e: (e[1], e[0]))[:n]
        return average_checkpoints(params for _, _, params in sorted(best, key=lambda e: e[0]))

    def last_average(self, n):
        return average_checkpoints(params for _, _, params in self.entries[-n:])


def epoch_bar(epochs, desc):
    return tqdm(range(epochs), desc=desc, colour="cyan", disable=verbosity() < 1, leave=False)


def save_epoch_checkpoint(checkpoint_dir, phase, epoch, enc_cfg, params):
    if checkpoint_dir is not None:
        save_checkpoint(os.path.join(checkpoint_dir, phase, f"epoch-{epoch:04d}.ckpt"), enc_cfg, params)


def finish_epoch(trainer, log, history, dev, vocab, started, checkpoint_dir=None, **fields):
    """Validate the online model, record the epoch and keep its parameters."""
    cfg = trainer.cfg
    epoch = log.next_epoch
    val = evaluate(cfg.encoder, trainer.params, dev, vocab)
    record = EpochRecord(
        phase=trainer.phase,
        epoch=epoch,
        val_ter=val.wer,
        val_wer=val.wer,
        lr=trainer.optimizer.lr,
        elapsed=time.perf_counter() - started,
        **fields,
    )
    log.append(record)
    history.add(epoch, val.wer, trainer.params)
    save_epoch_checkpoint(checkpoint_dir, trainer.phase, epoch, cfg.encoder, trainer.params)
    debug(
        f"{trainer.phase} epoch {epoch}: sup {record.sup_loss:.3f} unsup {record.unsup_loss:.3f} "
        f"dev TER {record.val_ter:.1f}% churn {record.churn:.2f} ({format_timespan(record.elapsed)})"
    )
    return record


def fit_supervised(trainer, pairs, dev, vocab, epochs, log, history, labeling_pass=0, churn=0.0, checkpoint_dir=None):
    """
    Train on labeled pairs for ``epochs`` epochs, shuffling every epoch. ``churn`` is
    recorded on the first epoch only; later epochs see unchanged labels.
    """
    cfg = trainer.cfg
    for i in epoch_bar(epochs, trainer.phase):
        started = time.perf_counter()
        epoch = log.next_epoch
        sup, seen, skipped = 0.0, 0, 0
        batches = compose_batches(len(pairs), 0, cfg.train.batch_size, cfg.train.seed, epoch)
        for step, batch in enumerate(batches):
            loss, used, dropped = trainer.step([pairs[j] for j in batch.indices], batch.indices, epoch, step)
            sup += loss
            seen += used
            skipped += dropped
        finish_epoch(
            trainer,
            log,
            history,
            dev,
            vocab,
            started,
            checkpoint_dir,
            labeling_pass=labeling_pass,
            sup_loss=sup / max(seen, 1),
            unsup_loss=0.0,
            churn=churn if i == 0 else 0.0,
            skipped=skipped,
            steps=len(batches),
        )
    return trainer.params
