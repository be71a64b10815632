"""
Evaluation-side experiments. This module may see the unlabeled truth through an
EvaluationCapability; the trainer package never does.
"""

import os
import statistics

import msgspec
from rich.table import Table

from mplab.common import echo, process_items, read_transcripts
from mplab.config import replace
from mplab.ctc import prefix_beam_search
from mplab.datagen import SplitDataset, external_text
from mplab.datagen.evaluation import truth_labeled_view, unlabeled_truth
from mplab.encoder import posteriors, save_checkpoint
from mplab.errors import TrainingError
from mplab.lm import perplexity, train_ngram
from mplab.metrics import ReportRow, corpus_breakdown, fill_wrr, render_report
from mplab.trainer import generate_pseudo_labels, run_ipl, run_mpl, train_seed


def lm_corpus(dataset, lm_cfg):
    """The configured corpus file, or the labeled transcripts plus sampled external text."""
    if lm_cfg.corpus is not None:
        return [dataset.vocab.encode(words) for words in read_transcripts(lm_cfg.corpus)]
    corpus = [labels for _, labels in dataset.labeled]
    return corpus + external_text(dataset.manifest, lm_cfg.external_sentences)


def train_lm(dataset, lm_cfg):
    return train_ngram(lm_corpus(dataset, lm_cfg), dataset.vocab, lm_cfg.order, lm_cfg.smoothing, lm_cfg.k)


def no_lm_beam(beam_cfg):
    return msgspec.structs.replace(beam_cfg, lm_weight=0.0, insertion_bonus=0.0)


def decode_features(cfg, params, feature_list, vocab, beam_cfg, lm=None):
    """Top-1 beam hypotheses for every feature matrix, in input order."""

    def _decode(features, _):
        post = posteriors(cfg.encoder, params, [features])[0]
        return prefix_beam_search(post, vocab, beam_cfg, lm)[0].tokens

    return process_items(feature_list, _decode, "Decoding", cfg.train.workers)


def split_wer(cfg, params, pairs, vocab, lm=None):
    """Corpus WER of ``pairs`` without and with the LM; the second is None without an LM."""
    feats, refs = [f for f, _ in pairs], [labels for _, labels in pairs]
    plain = corpus_breakdown(refs, decode_features(cfg, params, feats, vocab, no_lm_beam(cfg.beam))).wer
    if lm is None:
        return plain, None
    return plain, corpus_breakdown(refs, decode_features(cfg, params, feats, vocab, cfg.beam, lm)).wer


def report_row(method, cfg, params, dataset, lm=None, init="-", epochs=None):
    dev_wer, dev_wer_lm = split_wer(cfg, params, dataset.dev, dataset.vocab, lm)
    test_wer, test_wer_lm = split_wer(cfg, params, dataset.test, dataset.vocab, lm)
    return ReportRow(method, init, dev_wer, dev_wer_lm, test_wer, test_wer_lm, epochs=epochs)


def train_topline(dataset, cfg, capability, checkpoint_dir=None):
    """Supervised training on the labeled set plus the truth-labeled unlabeled set."""
    union = dataset.labeled + truth_labeled_view(dataset, capability)
    view = SplitDataset(dataset.vocab, union, [], dataset.dev, dataset.test, dataset.manifest)
    return train_seed(view, cfg, checkpoint_dir, phase="topline")


def pseudo_label_wer(cfg, params, dataset, capability, lm=None):
    """WER of the beam pseudo-labels of the unlabeled set against its hidden truth."""
    pseudo = generate_pseudo_labels(
        cfg.encoder, params, dataset.unlabeled, dataset.vocab, cfg.beam, lm, cfg.train.workers
    )
    return corpus_breakdown(unlabeled_truth(dataset, capability), [labels for _, labels in pseudo]).wer


class NormSweepRow(msgspec.Struct):
    norm: str
    seed: int
    dev_wer: float
    dev_ter: float


def norm_sweep(dataset, cfg, norms=("batch", "group", "instance", "layer"), seeds=(0, 1, 2)):
    """Seed models per normalization kind and training seed, scored on dev by best path."""
    rows = []
    for norm in norms:
        for seed in seeds:
            run_cfg = replace(replace(cfg, "encoder", norm=norm), "train", seed=seed)
            params, log = train_seed(dataset, run_cfg)
            dev_wer = split_wer(run_cfg, params, dataset.dev, dataset.vocab)[0]
            rows.append(NormSweepRow(norm, seed, dev_wer, min(r.val_ter for r in log)))
            echo(f"{norm} norm, seed {seed}: dev WER {dev_wer:.1f}%", fg="cyan")
    return rows


def median_wer_by_norm(rows):
    by_norm = {}
    for row in rows:
        by_norm.setdefault(row.norm, []).append(row.dev_wer)
    return {norm: statistics.median(wers) for norm, wers in by_norm.items()}


def norm_sweep_table(rows):
    table = Table(title="Seed dev WER by normalization")
    for header in ("Norm", "Seed", "Dev WER", "Best dev TER"):
        table.add_column(header, justify="left" if header == "Norm" else "right")
    for row in rows:
        table.add_row(row.norm, str(row.seed), f"{row.dev_wer:.1f}", f"{row.dev_ter:.1f}")
    for norm, median in median_wer_by_norm(rows).items():
        table.add_row(norm, "median", f"{median:.1f}", "-")
    return table


SSL_METHODS = ("pl", "ipl", "mpl", "ipl+mpl")


def split_budget(cfg):
    """IPL and MPL epochs of the IPL+MPL run; together they make ``ssl_epochs``."""
    half = cfg.train.ssl_epochs // 2
    return half, cfg.train.ssl_epochs - half


class LmSweepRow(msgspec.Struct):
    order: int
    dev_perplexity: float
    pseudo_label_wer: float
    pl_dev_wer: float
    mpl_dev_wer: float


def lm_sweep(dataset, cfg, seed_params, capability, orders=(1, 3)):
    """
    One PL pass per LM order from the same seed model, then MPL initialised from each
    PL model, the two splitting ``ssl_epochs`` as in the pipeline. Rows report the LM's
    dev perplexity, the pseudo-label WER and both models' dev WER.
    """
    pl_cfg = replace(cfg, "train", ipl_iters=1)
    pl_part, mpl_part = split_budget(cfg)
    dev_text = [labels for _, labels in dataset.dev]
    rows = []
    for order in orders:
        lm = train_lm(dataset, replace(cfg, "lm", order=order).lm)
        pl_wer = pseudo_label_wer(pl_cfg, seed_params, dataset, capability, lm)
        pl_params, _ = run_ipl(seed_params, dataset, pl_cfg, lm, epochs=pl_part)
        online, _, _ = run_mpl(pl_params, dataset, pl_cfg, epochs=mpl_part)
        rows.append(
            LmSweepRow(
                order=order,
                dev_perplexity=perplexity(lm, dev_text),
                pseudo_label_wer=pl_wer,
                pl_dev_wer=split_wer(pl_cfg, pl_params, dataset.dev, dataset.vocab)[0],
                mpl_dev_wer=split_wer(pl_cfg, online, dataset.dev, dataset.vocab)[0],
            )
        )
        echo(f"LM order {order}: pseudo-label WER {pl_wer:.1f}%", fg="cyan")
    return rows


def lm_sweep_table(rows):
    table = Table(title="Pseudo-labeling by LM order")
    for header in ("LM order", "Dev PPL", "PL label WER", "PL dev WER", "MPL dev WER"):
        table.add_column(header, justify="right")
    for row in rows:
        table.add_row(
            str(row.order),
            f"{row.dev_perplexity:.2f}",
            f"{row.pseudo_label_wer:.1f}",
            f"{row.pl_dev_wer:.1f}",
            f"{row.mpl_dev_wer:.1f}",
        )
    return table


def check_equal_budget(epochs, budget):
    """Raise TrainingError unless every semi-supervised method trained ``budget`` epochs."""
    uneven = {method: n for method, n in epochs.items() if method in SSL_METHODS and n != budget}
    if uneven:
        raise TrainingError(f"semi-supervised methods must train {budget} epochs each, got {uneven}")


def run_pipeline(dataset, cfg, capability, lm=None, model_dir=None):
    """
    Seed, topline, PL, IPL, MPL and IPL followed by MPL, each scored on dev and test with
    and without the LM. Every semi-supervised method starts from the seed model and trains
    ``ssl_epochs`` epochs in total; IPL+MPL spends the first half on IPL. Returns the
    report rows (WRR filled from the seed and topline rows) and the models by method name.
    """
    budget = cfg.train.ssl_epochs
    ipl_part, mpl_part = split_budget(cfg)
    lm = train_lm(dataset, cfg.lm) if lm is None else lm
    models, epochs = {}, {}
    models["seed"], log = train_seed(dataset, cfg)
    epochs["seed"] = len(log)
    models["topline"], log = train_topline(dataset, cfg, capability)
    epochs["topline"] = len(log)
    models["pl"], log = run_ipl(models["seed"], dataset, replace(cfg, "train", ipl_iters=1), lm, epochs=budget)
    epochs["pl"] = len(log)
    models["ipl"], log = run_ipl(models["seed"], dataset, cfg, lm, epochs=budget)
    epochs["ipl"] = len(log)
    models["mpl"], _, log = run_mpl(models["seed"], dataset, cfg, epochs=budget)
    epochs["mpl"] = len(log)
    ipl_init, ipl_log = run_ipl(models["seed"], dataset, cfg, lm, epochs=ipl_part)
    models["ipl+mpl"], _, log = run_mpl(ipl_init, dataset, cfg, epochs=mpl_part)
    epochs["ipl+mpl"] = len(ipl_log) + len(log)
    check_equal_budget(epochs, budget)

    rows = [
        report_row(method, cfg, params, dataset, lm, "seed" if method in SSL_METHODS else "-", epochs[method])
        for method, params in models.items()
    ]
    if model_dir is not None:
        os.makedirs(model_dir, exist_ok=True)
        for method, params in models.items():
            save_checkpoint(os.path.join(model_dir, f"{method}.ckpt"), cfg.encoder, params)
    return fill_wrr(rows), models


def pipeline_report(rows, dataset):
    return render_report(rows, title=f"WER report ({dataset.manifest.setting})")


def seeds_for(cfg, count):
    return tuple(cfg.train.seed + i for i in range(count))
