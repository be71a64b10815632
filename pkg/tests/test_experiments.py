import pytest

from mplab.common import derive_rng, write_transcripts
from mplab.config import replace
from mplab.datagen import external_text
from mplab.datagen.evaluation import EvaluationCapability
from mplab.encoder import init_params
from mplab.errors import InputDomainError, TrainingError
from mplab.experiments import (
    SSL_METHODS,
    NormSweepRow,
    check_equal_budget,
    lm_corpus,
    lm_sweep,
    lm_sweep_table,
    median_wer_by_norm,
    no_lm_beam,
    norm_sweep,
    norm_sweep_table,
    pseudo_label_wer,
    run_pipeline,
    seeds_for,
    split_budget,
    split_wer,
    train_lm,
    train_topline,
)
from mplab.metrics import table_text
from mplab.trainer.loop import INIT_KEY


def test_lm_corpus_defaults_to_labeled_plus_external_text(tiny_cfg, tiny_dataset):
    corpus = lm_corpus(tiny_dataset, tiny_cfg.lm)
    labeled = [labels for _, labels in tiny_dataset.labeled]
    assert corpus == labeled + external_text(tiny_dataset.manifest, 20)
    lm = train_lm(tiny_dataset, tiny_cfg.lm)
    assert lm.order == 2 and lm.vocab == tiny_dataset.vocab


def test_lm_corpus_from_a_file(tiny_cfg, tiny_dataset, tmp_path):
    path = tmp_path / "corpus.txt"
    write_transcripts(str(path), [["t00", "t01"], ["t02"]])
    lm_cfg = replace(tiny_cfg, "lm", corpus=str(path)).lm
    assert lm_corpus(tiny_dataset, lm_cfg) == [(0, 1), (2,)]


def test_no_lm_beam(tiny_cfg):
    beam = no_lm_beam(tiny_cfg.beam)
    assert beam.lm_weight == 0.0 and beam.insertion_bonus == 0.0
    assert beam.beam_size == tiny_cfg.beam.beam_size


def test_split_wer_with_and_without_lm(tiny_cfg, tiny_dataset):
    params = init_params(tiny_cfg.encoder, derive_rng(0))
    plain, none = split_wer(tiny_cfg, params, tiny_dataset.dev, tiny_dataset.vocab)
    assert none is None and plain >= 0.0
    lm = train_lm(tiny_dataset, tiny_cfg.lm)
    again, with_lm = split_wer(tiny_cfg, params, tiny_dataset.dev, tiny_dataset.vocab, lm)
    assert again == plain
    assert with_lm >= 0.0


def test_topline_needs_the_capability(tiny_cfg, tiny_dataset):
    with pytest.raises(InputDomainError):
        train_topline(tiny_dataset, tiny_cfg, None)


def test_topline_trains_on_the_union(tiny_cfg, tiny_dataset):
    cfg = replace(tiny_cfg, "train", optimizer={"kind": "adam", "lr": 0.0})
    params, log = train_topline(tiny_dataset, cfg, EvaluationCapability("test"))
    assert params == init_params(cfg.encoder, derive_rng(cfg.train.seed, INIT_KEY))
    # 6 labeled + 6 truth-labeled in batches of 2
    assert all(r.phase == "topline" and r.steps == 6 for r in log)


def test_pseudo_label_wer(tiny_cfg, tiny_dataset):
    params = init_params(tiny_cfg.encoder, derive_rng(0))
    assert pseudo_label_wer(tiny_cfg, params, tiny_dataset, EvaluationCapability("test")) >= 0.0
    with pytest.raises(InputDomainError):
        pseudo_label_wer(tiny_cfg, params, tiny_dataset, None)


def test_median_by_norm():
    rows = [
        NormSweepRow("group", 0, 10.0, 9.0),
        NormSweepRow("group", 1, 30.0, 8.0),
        NormSweepRow("group", 2, 20.0, 7.0),
        NormSweepRow("batch", 0, 40.0, 7.0),
    ]
    assert median_wer_by_norm(rows) == {"group": 20.0, "batch": 40.0}
    text = table_text(norm_sweep_table(rows))
    assert "median" in text and "40.0" in text


def test_norm_sweep_rows(tiny_cfg, tiny_dataset):
    rows = norm_sweep(tiny_dataset, tiny_cfg, norms=("group", "layer"), seeds=seeds_for(tiny_cfg, 2))
    assert [(r.norm, r.seed) for r in rows] == [("group", 0), ("group", 1), ("layer", 0), ("layer", 1)]


def test_seeds_follow_the_training_seed(tiny_cfg):
    assert seeds_for(replace(tiny_cfg, "train", seed=5), 3) == (5, 6, 7)


def test_lm_sweep_rows(tiny_cfg, tiny_dataset):
    params = init_params(tiny_cfg.encoder, derive_rng(0))
    rows = lm_sweep(tiny_dataset, tiny_cfg, params, EvaluationCapability("test"), orders=(1, 2))
    assert [r.order for r in rows] == [1, 2]
    assert all(r.dev_perplexity >= 1.0 and r.pseudo_label_wer >= 0.0 for r in rows)
    assert "LM order" in table_text(lm_sweep_table(rows))


def test_split_budget_covers_the_total(tiny_cfg):
    assert split_budget(replace(tiny_cfg, "train", ssl_epochs=20)) == (10, 10)
    assert split_budget(replace(tiny_cfg, "train", ssl_epochs=5)) == (2, 3)


def test_uneven_budgets_are_rejected():
    check_equal_budget({"seed": 40, "topline": 40, "pl": 20, "ipl": 20, "mpl": 20, "ipl+mpl": 20}, 20)
    with pytest.raises(TrainingError):
        check_equal_budget({"pl": 20, "ipl": 20, "mpl": 20, "ipl+mpl": 40}, 20)


def test_pipeline_gives_every_method_the_same_budget(tiny_cfg, tiny_dataset, tmp_path):
    cfg = replace(tiny_cfg, "train", ssl_epochs=3, ipl_iters=2)
    rows, models = run_pipeline(tiny_dataset, cfg, EvaluationCapability("test"), model_dir=str(tmp_path))
    by_method = {row.method: row for row in rows}
    assert list(by_method) == ["seed", "topline", *SSL_METHODS]
    assert by_method["seed"].epochs == cfg.train.epochs
    for method in SSL_METHODS:
        assert by_method[method].epochs == 3
        assert by_method[method].init == "seed"
    assert by_method["seed"].test_wrr in (0.0, None)
    assert (tmp_path / "ipl+mpl.ckpt").is_file()
    assert set(models) == set(by_method)
