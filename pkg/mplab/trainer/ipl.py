from mplab.common import echo, process_items
from mplab.config.validations import Constant
from mplab.ctc import prefix_beam_search
from mplab.encoder import posteriors
from mplab.errors import InputDomainError
from mplab.trainer.loop import CheckpointHistory, RunLog, Trainer, fit_supervised


def generate_pseudo_labels(enc_cfg, params, unlabeled, vocab, beam_cfg, lm=None, workers=1):
    """
    Pair every unlabeled feature matrix with the top-1 hypothesis of an LM-fused prefix
    beam search. Empty hypotheses are kept. Output follows input order.
    """

    def _label(features, _):
        post = posteriors(enc_cfg, params, [features])[0]
        return features, prefix_beam_search(post, vocab, beam_cfg, lm)[0].tokens

    return process_items(unlabeled, _label, "Pseudo-labeling", workers)


def label_churn(previous, current):
    """Fraction of samples whose label differs between two labelings of the same set."""
    if previous is None or not current:
        return 0.0
    changed = sum(old != new for (_, old), (_, new) in zip(previous, current, strict=True))
    return changed / len(current)


def pass_epochs(total, passes):
    """Split ``total`` epochs over at most ``passes`` labeling passes; earlier passes take the remainder."""
    if total < 1:
        raise InputDomainError(f"an IPL run needs at least one epoch, got {total}")
    passes = min(passes, total)
    base, extra = divmod(total, passes)
    return [base + (i < extra) for i in range(passes)]


def run_ipl(seed_params, dataset, cfg, lm=None, checkpoint_dir=None, epochs=None):
    """
    Iterative pseudo-labeling; a single iteration is plain PL. Each pass relabels the
    unlabeled set with the current model, trains on the union with a fresh optimizer at
    ``ssl_lr``, then continues from the average of the pass's last ``ipl_avg_last_n``
    checkpoints. Passes train ``ipl_epochs_per_iter`` epochs each, or share a total of
    ``epochs`` when it is given. Returns (params, RunLog).
    """
    train = cfg.train
    if epochs is None:
        schedule = [train.ipl_epochs_per_iter] * train.ipl_iters
    else:
        schedule = pass_epochs(epochs, train.ipl_iters)
    dev = dataset.dev or dataset.labeled
    params, log, previous = seed_params, RunLog(), None
    for labeling_pass, pass_length in enumerate(schedule, 1):
        pseudo = generate_pseudo_labels(
            cfg.encoder, params, dataset.unlabeled, dataset.vocab, cfg.beam, lm, train.workers
        )
        churn = label_churn(previous, pseudo)
        echo(f"Labeling pass {labeling_pass}/{len(schedule)}: {len(pseudo)} pseudo-labels, churn {churn:.2f}")
        trainer = Trainer(cfg, params, "ipl", base_lr=train.ssl_lr, schedule=Constant())
        history = CheckpointHistory()
        fit_supervised(
            trainer,
            dataset.labeled + pseudo,
            dev,
            dataset.vocab,
            pass_length,
            log,
            history,
            labeling_pass=labeling_pass,
            churn=churn,
            checkpoint_dir=checkpoint_dir,
        )
        params = history.last_average(train.ipl_avg_last_n)
        previous = pseudo
    return params, log
