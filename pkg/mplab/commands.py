import os
import shutil

import click
from humanfriendly import format_size
from rich.console import Console

from mplab.common import (
    commandgroup,
    echo,
    read_matrices,
    read_transcripts,
    workdir_lock,
    write_matrices,
    write_transcripts,
)
from mplab.config import dump_config, find_config_path, get_default_config_path, get_user_cfg_path, setup_config
from mplab.constants import SETTINGS, SPLITS
from mplab.ctc import FramePosteriors, decode
from mplab.datagen import load_dataset, make_setting, save_dataset, sizes_for, symmetric_kl
from mplab.datagen.evaluation import EvaluationCapability, load_dataset_with_truth
from mplab.encoder import load_checkpoint, posteriors, save_checkpoint
from mplab.errors import ConfigError, FormatError, InputDomainError
from mplab.experiments import (
    lm_sweep,
    lm_sweep_table,
    no_lm_beam,
    norm_sweep,
    norm_sweep_table,
    pipeline_report,
    run_pipeline,
    seeds_for,
    train_lm,
    train_topline,
)
from mplab.lm import load_arpa, perplexity, save_arpa
from mplab.metrics import ReportRow, corpus_breakdown, render_report, table_text, wrr
from mplab.trainer import run_ipl, run_mpl, train_seed


def _data_dir(cfg, data_dir=None):
    return data_dir or cfg.paths.resolve("data", cfg.datagen.setting)


def _model_path(cfg, name):
    return cfg.paths.resolve("models", f"{name}.ckpt")


def _default_lm_path(cfg):
    return cfg.paths.resolve("lm", "lm.arpa")


def _write_log(cfg, name, log):
    path = cfg.paths.resolve("logs", f"{name}.jsonl")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    log.write(path)
    return path


def _write_report(cfg, name, text):
    path = cfg.paths.resolve("reports", f"{name}.txt")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def _load_model(cfg, path):
    enc_cfg, params = load_checkpoint(path)
    if enc_cfg != cfg.encoder:
        raise ConfigError(f"{path} was trained with a different encoder config than the run-config")
    return params


def _load_lm(lm_path, no_lm):
    return None if no_lm else load_arpa(lm_path)


@commandgroup.command("gen-data")
@click.argument("setting", type=click.Choice(SETTINGS), required=False)
@click.option("--output", "-o", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.pass_context
def gen_data(ctx, setting, output):
    """Generate a semi-supervised setting and write it to the workdir"""
    cfg = setup_config(ctx.obj)
    setting = setting or cfg.datagen.setting
    output = output or cfg.paths.resolve("data", setting)
    with workdir_lock(cfg.paths.workdir):
        dataset = make_setting(setting, sizes_for(cfg.datagen, setting), cfg.datagen.base_seed, cfg.datagen)
        save_dataset(dataset, output)
    shift = symmetric_kl([f for f, _ in dataset.labeled], [f for f, _ in dataset.dev])
    sizes = ", ".join(f"{split} {len(getattr(dataset, split))}" for split in SPLITS)
    echo(f"Wrote {setting} to {output} ({sizes})", fg="green")
    echo(f"Labeled/dev feature divergence: {shift:.3f}")


@commandgroup.command("train-seed")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--topline", is_flag=True, help="Also train on the truth-labeled unlabeled set.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="Checkpoint path.")
@click.pass_context
def train_seed_cmd(ctx, data_dir, topline, output):
    """Train the supervised seed model (or the topline with --topline)"""
    cfg = setup_config(ctx.obj)
    name = "topline" if topline else "seed"
    output = output or _model_path(cfg, name)
    with workdir_lock(cfg.paths.workdir):
        if topline:
            capability = EvaluationCapability("topline")
            dataset = load_dataset_with_truth(_data_dir(cfg, data_dir), capability)
            params, log = train_topline(dataset, cfg, capability, cfg.paths.checkpoints)
        else:
            dataset = load_dataset(_data_dir(cfg, data_dir))
            params, log = train_seed(dataset, cfg, cfg.paths.checkpoints)
        save_checkpoint(output, cfg.encoder, params)
        log_path = _write_log(cfg, name, log)
    echo(f"Saved {name} model to {output} (best dev TER {min(r.val_ter for r in log):.1f}%)", fg="green")
    echo(f"Run log: {log_path}")


@commandgroup.command()
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--init", "init_path", type=click.Path(dir_okay=False), default=None, help="Seed checkpoint.")
@click.option("--lm", "lm_path", type=click.Path(dir_okay=False), default=None, help="ARPA language model.")
@click.option("--no-lm", is_flag=True, help="Label with beam search alone.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="Checkpoint path.")
@click.pass_context
def ipl(ctx, data_dir, init_path, lm_path, no_lm, output):
    """Iterative pseudo-labeling; train.ipl_iters=1 is plain PL"""
    cfg = setup_config(ctx.obj)
    output = output or _model_path(cfg, "ipl")
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset(_data_dir(cfg, data_dir))
        seed_params = _load_model(cfg, init_path or _model_path(cfg, "seed"))
        lm = _load_lm(lm_path or _default_lm_path(cfg), no_lm)
        params, log = run_ipl(seed_params, dataset, cfg, lm, cfg.paths.checkpoints)
        save_checkpoint(output, cfg.encoder, params)
        log_path = _write_log(cfg, "ipl", log)
    echo(f"Saved IPL model to {output} after {cfg.train.ipl_iters} labeling passes", fg="green")
    echo(f"Run log: {log_path}")


@commandgroup.command()
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--init", "init_path", type=click.Path(dir_okay=False), default=None, help="Initial checkpoint.")
@click.option(
    "--offline-init", type=click.Path(dir_okay=False), default=None, help="Separate offline-model start point."
)
@click.option("--prefix", default="mpl", show_default=True, help="Name prefix of the written checkpoints.")
@click.pass_context
def mpl(ctx, data_dir, init_path, offline_init, prefix):
    """Momentum pseudo-labeling from a seed or IPL checkpoint"""
    cfg = setup_config(ctx.obj)
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset(_data_dir(cfg, data_dir))
        init = _load_model(cfg, init_path or _model_path(cfg, "seed"))
        offline_start = _load_model(cfg, offline_init) if offline_init else None
        online, offline, log = run_mpl(init, dataset, cfg, offline_start, cfg.paths.checkpoints)
        save_checkpoint(_model_path(cfg, f"{prefix}-online"), cfg.encoder, online)
        save_checkpoint(_model_path(cfg, f"{prefix}-offline"), cfg.encoder, offline)
        log_path = _write_log(cfg, prefix, log)
    echo(f"Saved online and offline models to {_model_path(cfg, f'{prefix}-online')} and its sibling", fg="green")
    echo(f"Run log: {log_path}")


def _read_posteriors(path):
    posts = []
    for i, matrix in enumerate(read_matrices(path)):
        try:
            posts.append(FramePosteriors(matrix))
        except InputDomainError as e:
            raise FormatError(f"{path}: record {i}: {e}") from e
    return posts


@commandgroup.command("decode")
@click.argument("checkpoint", type=click.Path(dir_okay=False), required=False)
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--split", type=click.Choice(["dev", "test", "unlabeled", "labeled"]), default="dev", show_default=True)
@click.option("--method", "-m", type=click.Choice(["greedy", "beam"]), default="greedy", show_default=True)
@click.option("--lm", "lm_path", type=click.Path(dir_okay=False), default=None, help="ARPA LM for beam search.")
@click.option(
    "--posteriors",
    "posteriors_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Decode a posteriors file instead of encoding a split with CHECKPOINT.",
)
@click.option(
    "--save-posteriors", type=click.Path(dir_okay=False), default=None, help="Also write the encoder posteriors."
)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="Hypothesis file.")
@click.pass_context
def decode_cmd(ctx, checkpoint, data_dir, split, method, lm_path, posteriors_path, save_posteriors, output):
    """
    Transcribe a split with a checkpoint, or a posteriors file, one hypothesis per line.
    Posteriors files hold one record per sequence: magic MPLM, T and C as little-endian
    uint32, then T x C row-major float64 log-probabilities with the blank last.
    """
    cfg = setup_config(ctx.obj)
    if (checkpoint is None) == (posteriors_path is None):
        raise InputDomainError("give either a checkpoint or --posteriors")
    if posteriors_path and save_posteriors:
        raise InputDomainError("--save-posteriors needs a checkpoint to encode with")
    if lm_path and method != "beam":
        raise InputDomainError("--lm only applies to --method beam")
    name = os.path.splitext(os.path.basename(checkpoint or posteriors_path))[0]
    output = output or cfg.paths.resolve("hyps", f"{name}.{split}.{method}.txt")
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset(_data_dir(cfg, data_dir))
        if posteriors_path:
            posts = _read_posteriors(posteriors_path)
        else:
            params = _load_model(cfg, checkpoint)
            items = getattr(dataset, split)
            feats = items if split == "unlabeled" else [f for f, _ in items]
            posts = posteriors(cfg.encoder, params, feats)
            if save_posteriors:
                os.makedirs(os.path.dirname(os.path.abspath(save_posteriors)), exist_ok=True)
                write_matrices(save_posteriors, [post.log_probs for post in posts])
                echo(f"Wrote {len(posts)} posterior matrices to {save_posteriors}")
        lm = load_arpa(lm_path) if lm_path else None
        beam = cfg.beam if lm is not None else no_lm_beam(cfg.beam)
        hyps = [decode(post, dataset.vocab, method, beam, lm) for post in posts]
        os.makedirs(os.path.dirname(os.path.abspath(output)), exist_ok=True)
        write_transcripts(output, [dataset.vocab.decode(h) for h in hyps])
    echo(f"Wrote {len(hyps)} hypotheses to {output} ({format_size(os.path.getsize(output))})", fg="green")


@commandgroup.command("eval")
@click.argument("hypotheses", type=click.Path(dir_okay=False))
@click.argument("references", type=click.Path(dir_okay=False))
@click.option("--seed-wer", type=float, default=None, help="Seed model WER, for WRR.")
@click.option("--topline-wer", type=float, default=None, help="Topline model WER, for WRR.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="Report file.")
@click.pass_context
def eval_cmd(ctx, hypotheses, references, seed_wer, topline_wer, output):
    """Score a hypothesis file against a reference file"""
    hyps, refs = read_transcripts(hypotheses), read_transcripts(references)
    if len(hyps) != len(refs):
        raise InputDomainError(f"{hypotheses} has {len(hyps)} lines but {references} has {len(refs)}")
    breakdown = corpus_breakdown(refs, hyps)
    row = ReportRow(os.path.basename(hypotheses), test_wer=breakdown.wer)
    if (seed_wer is None) != (topline_wer is None):
        raise InputDomainError("WRR needs both --seed-wer and --topline-wer")
    if seed_wer is not None:
        row.test_wrr = wrr(breakdown.wer, seed_wer, topline_wer)
    text = render_report([row])
    click.echo(text)
    echo(
        f"S {breakdown.substitutions}  I {breakdown.insertions}  D {breakdown.deletions}  "
        f"N {breakdown.reference_length}"
    )
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text)


@commandgroup.command("lm-train")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None, help="ARPA file.")
@click.pass_context
def lm_train(ctx, data_dir, output):
    """Train the n-gram LM on labeled transcripts and external text"""
    cfg = setup_config(ctx.obj)
    output = output or _default_lm_path(cfg)
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset(_data_dir(cfg, data_dir))
        lm = train_lm(dataset, cfg.lm)
        os.makedirs(os.path.dirname(os.path.abspath(output)), exist_ok=True)
        save_arpa(output, lm)
    ppl = perplexity(lm, [labels for _, labels in dataset.dev])
    echo(f"Saved order-{lm.order} {lm.smoothing} LM to {output}; dev perplexity {ppl:.2f}", fg="green")


@commandgroup.command("lm-ppl")
@click.argument("lm_path", type=click.Path(dir_okay=False))
@click.argument("text", type=click.Path(dir_okay=False))
def lm_ppl(lm_path, text):
    """Perplexity of an LM on a transcript file"""
    lm = load_arpa(lm_path)
    corpus = [lm.vocab.encode(words) for words in read_transcripts(text)]
    click.echo(f"{perplexity(lm, corpus):.4f}")


@commandgroup.group()
def experiment():
    """Desk-scale experiments over the synthetic settings"""


def _show(table):
    Console().print(table)
    return table_text(table)


@experiment.command("norm-sweep")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--norm", "norms", multiple=True, type=click.Choice(["batch", "group", "instance", "layer"]))
@click.option("--seeds", type=int, default=3, show_default=True, help="Training seeds per norm.")
@click.pass_context
def norm_sweep_cmd(ctx, data_dir, norms, seeds):
    """Seed-model dev WER for each normalization kind"""
    cfg = setup_config(ctx.obj)
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset(_data_dir(cfg, data_dir))
        rows = norm_sweep(dataset, cfg, norms or ("batch", "group", "instance", "layer"), seeds_for(cfg, seeds))
        path = _write_report(cfg, "norm-sweep", _show(norm_sweep_table(rows)))
    echo(f"Report: {path}", fg="green")


@experiment.command("lm-sweep")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--init", "init_path", type=click.Path(dir_okay=False), default=None, help="Seed checkpoint.")
@click.option("--order", "orders", multiple=True, type=click.IntRange(min=1), help="LM orders to compare.")
@click.pass_context
def lm_sweep_cmd(ctx, data_dir, init_path, orders):
    """PL then MPL with LMs of different orders"""
    cfg = setup_config(ctx.obj)
    capability = EvaluationCapability("lm-sweep")
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset_with_truth(_data_dir(cfg, data_dir), capability)
        seed_params = _load_model(cfg, init_path or _model_path(cfg, "seed"))
        rows = lm_sweep(dataset, cfg, seed_params, capability, orders or (1, 3))
        path = _write_report(cfg, "lm-sweep", _show(lm_sweep_table(rows)))
    echo(f"Report: {path}", fg="green")


@experiment.command()
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--lm", "lm_path", type=click.Path(dir_okay=False), default=None, help="ARPA LM; trained if absent.")
@click.pass_context
def pipeline(ctx, data_dir, lm_path):
    """Seed, topline, PL, IPL and MPL with a WER/WRR report"""
    cfg = setup_config(ctx.obj)
    capability = EvaluationCapability("pipeline")
    with workdir_lock(cfg.paths.workdir):
        dataset = load_dataset_with_truth(_data_dir(cfg, data_dir), capability)
        lm = load_arpa(lm_path) if lm_path else None
        rows, _ = run_pipeline(dataset, cfg, capability, lm, model_dir=cfg.paths.resolve("models", "pipeline"))
        text = pipeline_report(rows, dataset)
        path = _write_report(cfg, "pipeline", text)
    click.echo(text)
    echo(f"Report: {path}", fg="green")


def _backup_config(config_path):
    backup_index = 1
    while os.path.exists(f"{config_path}.bak.{backup_index}"):
        backup_index += 1
    shutil.move(config_path, f"{config_path}.bak.{backup_index}")
    click.secho(f"Existing config file renamed to config.toml.bak.{backup_index}", fg="yellow")


@commandgroup.command()
@click.option(
    "--reset",
    "-r",
    is_flag=True,
    help="Reset the user config file to the default template. Will create a backup of the current config file.",
)
@click.pass_context
def checkconf(ctx, reset):
    """Validate the run-config and print it with every default filled in.\n
    Use the -r flag to reset/create the user config file.
    """
    if reset:
        click.secho("Resetting user config.toml file", fg="cyan", bold=True)
        config_path = get_user_cfg_path()
        if os.path.exists(config_path):
            _backup_config(config_path)
        os.makedirs(os.path.dirname(config_path), exist_ok=True)
        shutil.copy(get_default_config_path(), config_path)
        click.secho(f"A new config.toml has been created at {config_path}.", fg="green")
        return

    click.secho(f"Config path: {find_config_path(ctx.obj.get('config_path')) or '<built-in defaults>'}", fg="cyan")
    cfg = setup_config(ctx.obj)
    click.echo(dump_config(cfg))
    click.secho("✔ Config is valid", fg="green", bold=True)
