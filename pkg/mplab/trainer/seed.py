from mplab.common import derive_rng, echo
from mplab.encoder import init_params
from mplab.errors import ConfigError, InputDomainError
from mplab.trainer.loop import INIT_KEY, CheckpointHistory, RunLog, Trainer, fit_supervised, is_reachable


def check_reachable(enc_cfg, pairs):
    """Number of pairs CTC can align; raises ConfigError when there are none."""
    reachable = sum(is_reachable(enc_cfg, features, labels) for features, labels in pairs)
    if reachable == 0:
        raise ConfigError(
            "no labeled sample is reachable for CTC at this subsampling factor; "
            "lower encoder.subsample_factor or lengthen datagen durations"
        )
    return reachable


def train_seed(dataset, cfg, checkpoint_dir=None, phase="seed"):
    """
    Supervised training on ``dataset.labeled`` with augmentation and the configured
    learning-rate schedule. The returned model averages the ``checkpoint_avg_n`` epochs
    with the lowest dev token error rate. Returns (params, RunLog).
    """
    if not dataset.labeled:
        raise InputDomainError("seed training needs at least one labeled sample")
    reachable = check_reachable(cfg.encoder, dataset.labeled)
    if reachable < len(dataset.labeled):
        skipped = len(dataset.labeled) - reachable
        echo(f"{skipped} labeled samples are too short for CTC and will be skipped", fg="yellow")

    dev = dataset.dev or dataset.labeled
    trainer = Trainer(
        cfg,
        init_params(cfg.encoder, derive_rng(cfg.train.seed, INIT_KEY)),
        phase,
        schedule=cfg.train.lr_schedule,
    )
    log, history = RunLog(), CheckpointHistory()
    fit_supervised(
        trainer, dataset.labeled, dev, dataset.vocab, cfg.train.epochs, log, history, checkpoint_dir=checkpoint_dir
    )
    return history.best_average(cfg.train.checkpoint_avg_n), log
