"""
Momentum pseudo-labeling. An online model trains on labeled batches and on unlabeled
batches labeled on the fly by an offline model; the offline model follows the online
one as an exponential moving average updated after every optimizer step.
"""

import time

from mplab.common import debug
from mplab.config.validations import Constant
from mplab.encoder import ema_update, momentum_from_weight
from mplab.errors import TrainingError
from mplab.trainer.batches import LABELED, UNLABELED, compose_batches, steps_per_epoch
from mplab.trainer.loop import CheckpointHistory, RunLog, Trainer, epoch_bar, finish_epoch, transcribe


def _churn(previous, current):
    # only samples labeled in both epochs count
    shared = previous.keys() & current.keys()
    if not shared:
        return 0.0
    return sum(previous[i] != current[i] for i in shared) / len(shared)


def run_mpl(init_params, dataset, cfg, offline_init=None, checkpoint_dir=None, epochs=None):
    """
    Train for ``epochs`` epochs (default ``mpl_epochs``) from ``init_params``. The
    offline model starts from ``offline_init`` (default: the same parameters) and moves
    with ``alpha = momentum_from_weight(w, K)`` where K is the number of batches per
    epoch, so a share ``w`` of its epoch-start weights survives each epoch.

    Returns (online, offline, RunLog). The online model is the average of the
    ``checkpoint_avg_n`` epochs with the lowest dev token error rate; the offline model
    is the final EMA state.
    """
    train = cfg.train
    n_labeled, n_unlabeled = len(dataset.labeled), len(dataset.unlabeled)
    K = steps_per_epoch(n_labeled, n_unlabeled, train.batch_size, train.sup_ratio_override)
    alpha = momentum_from_weight(train.w, K)
    debug(f"mpl: {K} steps per epoch, alpha {alpha!r}")

    trainer = Trainer(cfg, init_params, "mpl", base_lr=train.ssl_lr, schedule=Constant())
    offline = init_params if offline_init is None else offline_init
    offline.check_compatible(init_params)
    dev = dataset.dev or dataset.labeled
    log, history, previous = RunLog(), CheckpointHistory(), {}

    for _ in epoch_bar(train.mpl_epochs if epochs is None else epochs, "mpl"):
        started = time.perf_counter()
        epoch = log.next_epoch
        batches = compose_batches(n_labeled, n_unlabeled, train.batch_size, train.seed, epoch, train.sup_ratio_override)
        if len(batches) != K:
            raise TrainingError(f"epoch {epoch} has {len(batches)} batches but alpha was derived for {K}")

        sums = {LABELED: [0.0, 0], UNLABELED: [0.0, 0]}
        skipped, labels_seen = 0, {}
        for step, batch in enumerate(batches):
            if batch.kind == LABELED:
                pairs = [dataset.labeled[i] for i in batch.indices]
                sample_ids = batch.indices
            else:
                feats = [dataset.unlabeled[i] for i in batch.indices]
                hyps = transcribe(cfg.encoder, offline, feats, dataset.vocab)
                labels_seen.update(zip(batch.indices, hyps, strict=True))
                pairs = list(zip(feats, hyps, strict=True))
                # unlabeled ids follow the labeled ones, as in the IPL union
                sample_ids = [n_labeled + i for i in batch.indices]
            loss, used, dropped = trainer.step(pairs, sample_ids, epoch, step)
            sums[batch.kind][0] += loss
            sums[batch.kind][1] += used
            skipped += dropped
            offline = ema_update(offline, trainer.params, alpha)

        churn = _churn(previous, labels_seen) if previous else 0.0
        previous = labels_seen
        finish_epoch(
            trainer,
            log,
            history,
            dev,
            dataset.vocab,
            started,
            checkpoint_dir,
            labeling_pass=0,
            sup_loss=sums[LABELED][0] / max(sums[LABELED][1], 1),
            unsup_loss=sums[UNLABELED][0] / max(sums[UNLABELED][1], 1),
            churn=churn,
            skipped=skipped,
            steps=len(batches),
        )

    return history.best_average(train.checkpoint_avg_n), offline, log
