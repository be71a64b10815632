import math

import numpy as np
import pytest

import mplab.trainer.ipl
from mplab.common import derive_rng
from mplab.config import Constant, Warmup, replace
from mplab.datagen import SplitDataset
from mplab.encoder import init_params, momentum_from_weight
from mplab.errors import ConfigError, InputDomainError, MissingInputError
from mplab.trainer import (
    LABELED,
    UNLABELED,
    EpochRecord,
    RunLog,
    Trainer,
    check_reachable,
    compose_batches,
    generate_pseudo_labels,
    is_reachable,
    label_churn,
    learning_rate,
    pass_epochs,
    run_ipl,
    run_mpl,
    steps_per_epoch,
    train_seed,
)
from mplab.trainer.loop import INIT_KEY


def _frozen(cfg, **train):
    """Both the optimizer rate and the semi-supervised rate at zero."""
    return replace(cfg, "train", optimizer={"kind": "adam", "lr": 0.0}, ssl_lr=0.0, **train)


def _kinds(batches):
    return {kind: sorted(len(b.indices) for b in batches if b.kind == kind) for kind in (LABELED, UNLABELED)}


def test_compose_batches_covers_each_item_once():
    batches = compose_batches(5, 3, 2, seed=0, epoch=1)
    assert len(batches) == steps_per_epoch(5, 3, 2) == 5
    assert _kinds(batches) == {LABELED: [1, 2, 2], UNLABELED: [1, 2]}
    for kind, n in ((LABELED, 5), (UNLABELED, 3)):
        assert sorted(i for b in batches if b.kind == kind for i in b.indices) == list(range(n))


def test_mpl_momentum_counts_each_short_batch():
    K = steps_per_epoch(5, 3, 2)
    assert K == 5 != math.ceil((5 + 3) / 2)
    assert momentum_from_weight(0.5, K) == pytest.approx(0.870551, abs=1e-6)


def test_compose_batches_is_keyed_by_seed_and_epoch():
    assert compose_batches(20, 20, 3, 4, 2) == compose_batches(20, 20, 3, 4, 2)
    orders = {tuple(compose_batches(20, 20, 3, 4, epoch)) for epoch in range(1, 6)}
    assert len(orders) > 1


def test_compose_batches_labeled_only():
    batches = compose_batches(4, 0, 4, 0, 1)
    assert [(b.kind, sorted(b.indices)) for b in batches] == [(LABELED, [0, 1, 2, 3])]


def test_sup_ratio_override_resamples_the_streams():
    batches = compose_batches(5, 3, 2, seed=0, epoch=1, sup_ratio_override=0.25)
    assert len(batches) == steps_per_epoch(5, 3, 2, 0.25) == 4
    assert sum(len(b.indices) for b in batches if b.kind == LABELED) == 2
    assert sum(len(b.indices) for b in batches if b.kind == UNLABELED) == 6


def test_learning_rate_schedules():
    assert learning_rate(Constant(), 0.1, 7) == 0.1
    warm = Warmup(steps=4)
    assert learning_rate(warm, 1.0, 2) == pytest.approx(0.5)
    assert learning_rate(warm, 1.0, 4) == pytest.approx(1.0)
    assert learning_rate(warm, 1.0, 16) == pytest.approx(0.5)


def test_reachability(tiny_cfg):
    assert is_reachable(tiny_cfg.encoder, np.zeros((4, 4)), (0, 1))
    assert not is_reachable(tiny_cfg.encoder, np.zeros((4, 4)), (0, 0))
    with pytest.raises(ConfigError):
        check_reachable(tiny_cfg.encoder, [(np.zeros((2, 4)), (0, 1, 2))])


def test_run_log_round_trip(tmp_path):
    fields = dict(
        phase="seed",
        labeling_pass=0,
        sup_loss=1.5,
        unsup_loss=0.0,
        val_ter=20.0,
        val_wer=20.0,
        churn=0.0,
        skipped=0,
        steps=3,
        lr=1e-3,
        elapsed=0.25,
    )
    log = RunLog()
    log.append(EpochRecord(epoch=1, **fields))
    log.append(EpochRecord(epoch=2, **fields))
    with pytest.raises(ValueError):
        log.append(EpochRecord(epoch=2, **fields))
    path = tmp_path / "seed.jsonl"
    log.write(str(path))
    assert len(path.read_bytes().splitlines()) == 2
    assert RunLog.read(str(path)).records == log.records
    with pytest.raises(MissingInputError):
        RunLog.read(str(tmp_path / "absent.jsonl"))


def test_frozen_seed_training_returns_the_initialisation(tiny_cfg, tiny_dataset):
    cfg = _frozen(tiny_cfg)
    params, log = train_seed(tiny_dataset, cfg)
    assert params == init_params(cfg.encoder, derive_rng(cfg.train.seed, INIT_KEY))
    assert [r.epoch for r in log] == [1, 2]
    assert all(r.steps == 3 and r.phase == "seed" for r in log)


def test_seed_training_is_deterministic(tiny_cfg, tiny_dataset):
    a, log_a = train_seed(tiny_dataset, tiny_cfg)
    b, log_b = train_seed(tiny_dataset, tiny_cfg)
    assert a == b
    assert [r.sup_loss for r in log_a] == [r.sup_loss for r in log_b]


def test_seed_training_needs_labels(tiny_cfg, tiny_dataset):
    empty = SplitDataset(tiny_dataset.vocab, [], [], [], [], tiny_dataset.manifest)
    with pytest.raises(InputDomainError):
        train_seed(empty, tiny_cfg)


def test_seed_training_fits_a_single_sample(tiny_cfg, tiny_dataset):
    cfg = replace(tiny_cfg, "train", epochs=200, optimizer={"kind": "adam", "lr": 0.02}, checkpoint_avg_n=1)
    sample = tiny_dataset.labeled[0]
    single = SplitDataset(tiny_dataset.vocab, [sample], [], [sample], [], tiny_dataset.manifest)
    _, log = train_seed(single, cfg)
    assert len(log) == 200
    assert log[-1].sup_loss < 0.1


def test_frozen_batch_norm_keeps_its_running_statistics(tiny_cfg, tiny_dataset):
    cfg = _frozen(replace(tiny_cfg, "encoder", norm="batch"))
    params = init_params(cfg.encoder, derive_rng(0))
    trainer = Trainer(cfg, params, "seed")
    trainer.step(tiny_dataset.labeled[:2], (0, 1), 1, 0)
    assert trainer.params == params


def test_batch_norm_running_statistics_follow_training(tiny_cfg, tiny_dataset):
    cfg = replace(tiny_cfg, "encoder", norm="batch")
    params = init_params(cfg.encoder, derive_rng(0))
    trainer = Trainer(cfg, params, "seed")
    trainer.step(tiny_dataset.labeled[:2], (0, 1), 1, 0)
    name = "blocks.0.conv.norm.running_mean"
    assert not np.array_equal(trainer.params[name], params[name])


def test_frozen_batch_norm_mpl_keeps_both_models(tiny_cfg, tiny_dataset):
    cfg = _frozen(replace(tiny_cfg, "encoder", norm="batch"))
    params = init_params(cfg.encoder, derive_rng(1))
    online, offline, _ = run_mpl(params, tiny_dataset, cfg)
    assert online == params
    assert offline == params


@pytest.fixture
def augment_draws(monkeypatch):
    draws = {}

    def recording(policy, features, rng):
        draws.setdefault(id(features), []).append(int(rng.integers(1 << 30)))
        return features

    monkeypatch.setattr("mplab.augment.apply", recording)
    return draws


def test_augmentation_follows_the_sample_not_its_batch_slot(tiny_cfg, tiny_dataset, augment_draws):
    trainer = Trainer(_frozen(tiny_cfg), init_params(tiny_cfg.encoder, derive_rng(0)), "seed")
    pairs = tiny_dataset.labeled[:3]
    trainer.step(pairs, (0, 1, 2), 1, 0)
    trainer.step(pairs[::-1], (2, 1, 0), 1, 4)
    trainer.step(pairs, (0, 1, 2), 2, 0)
    for features, _ in pairs:
        same_epoch_a, same_epoch_b, next_epoch = augment_draws[id(features)]
        assert same_epoch_a == same_epoch_b
        assert next_epoch != same_epoch_a


def test_pseudo_labels_of_nothing(tiny_cfg, tiny_dataset):
    params = init_params(tiny_cfg.encoder, derive_rng(0))
    assert generate_pseudo_labels(tiny_cfg.encoder, params, [], tiny_dataset.vocab, tiny_cfg.beam) == []


def test_pseudo_labels_keep_input_order(tiny_cfg, tiny_dataset):
    params = init_params(tiny_cfg.encoder, derive_rng(0))
    pseudo = generate_pseudo_labels(
        tiny_cfg.encoder, params, tiny_dataset.unlabeled, tiny_dataset.vocab, tiny_cfg.beam, workers=3
    )
    assert len(pseudo) == len(tiny_dataset.unlabeled)
    for (features, _), original in zip(pseudo, tiny_dataset.unlabeled, strict=True):
        assert features is original


def test_label_churn():
    f = np.zeros((1, 1))
    assert label_churn(None, [(f, (0,))]) == 0.0
    assert label_churn([(f, (0,)), (f, (1,))], [(f, (0,)), (f, (2,))]) == 0.5


@pytest.fixture
def labeling_calls(monkeypatch):
    calls = []
    original = mplab.trainer.ipl.generate_pseudo_labels

    def counting(*args, **kwargs):
        result = original(*args, **kwargs)
        calls.append([labels for _, labels in result])
        return result

    monkeypatch.setattr(mplab.trainer.ipl, "generate_pseudo_labels", counting)
    return calls


def test_single_pass_ipl_labels_once(tiny_cfg, tiny_dataset, labeling_calls):
    cfg = replace(tiny_cfg, "train", ipl_iters=1, ipl_epochs_per_iter=2)
    params = init_params(cfg.encoder, derive_rng(0))
    _, log = run_ipl(params, tiny_dataset, cfg)
    assert len(labeling_calls) == 1
    assert [(r.epoch, r.labeling_pass) for r in log] == [(1, 1), (2, 1)]
    # 6 labeled + 6 pseudo-labeled in batches of 2
    assert all(r.steps == 6 for r in log)


def test_frozen_ipl_relabels_identically(tiny_cfg, tiny_dataset, labeling_calls):
    cfg = _frozen(tiny_cfg, ipl_iters=3)
    params = init_params(cfg.encoder, derive_rng(0))
    final, log = run_ipl(params, tiny_dataset, cfg)
    assert final == params
    assert len(labeling_calls) == 3
    assert labeling_calls[0] == labeling_calls[1] == labeling_calls[2]
    assert all(r.churn == 0.0 for r in log)
    assert [r.labeling_pass for r in log] == [1, 2, 3]


def test_frozen_mpl_offline_follows_the_closed_form(tiny_cfg, tiny_dataset):
    cfg = _frozen(tiny_cfg, mpl_epochs=1, w=0.5)
    online = init_params(cfg.encoder, derive_rng(1))
    offline0 = init_params(cfg.encoder, derive_rng(2))
    final_online, offline, log = run_mpl(online, tiny_dataset, cfg, offline_init=offline0)
    assert final_online == online
    K = steps_per_epoch(6, 6, 2)
    assert log[0].steps == K
    for name in online.names:
        expected = 0.5 * offline0[name] + 0.5 * online[name]
        np.testing.assert_allclose(offline[name], expected, atol=1e-9)


def test_mpl_with_unit_weight_freezes_the_offline_model(tiny_cfg, tiny_dataset):
    cfg = replace(tiny_cfg, "train", mpl_epochs=1, w=1.0)
    online = init_params(cfg.encoder, derive_rng(1))
    offline0 = init_params(cfg.encoder, derive_rng(2))
    final_online, offline, _ = run_mpl(online, tiny_dataset, cfg, offline_init=offline0)
    assert offline == offline0
    assert final_online != online


def test_frozen_mpl_keeps_both_models_and_labels(tiny_cfg, tiny_dataset):
    cfg = _frozen(tiny_cfg)
    params = init_params(cfg.encoder, derive_rng(1))
    online, offline, log = run_mpl(params, tiny_dataset, cfg)
    assert online == params
    assert offline == params
    assert [r.epoch for r in log] == [1, 2]
    assert all(r.churn == 0.0 and r.phase == "mpl" for r in log)


def test_mpl_with_sup_ratio_override(tiny_cfg, tiny_dataset):
    cfg = _frozen(tiny_cfg, mpl_epochs=1, sup_ratio_override=0.25)
    params = init_params(cfg.encoder, derive_rng(1))
    _, _, log = run_mpl(params, tiny_dataset, cfg)
    # 3 labeled and 9 unlabeled exposures in batches of 2
    assert log[0].steps == math.ceil(3 / 2) + math.ceil(9 / 2)


def test_pass_epochs_split_a_total():
    assert pass_epochs(10, 4) == [3, 3, 2, 2]
    assert pass_epochs(20, 4) == [5, 5, 5, 5]
    assert pass_epochs(2, 4) == [1, 1]
    with pytest.raises(InputDomainError):
        pass_epochs(0, 4)


def test_ipl_with_an_epoch_total(tiny_cfg, tiny_dataset, labeling_calls):
    cfg = _frozen(tiny_cfg, ipl_iters=2)
    params = init_params(cfg.encoder, derive_rng(0))
    _, log = run_ipl(params, tiny_dataset, cfg, epochs=3)
    assert len(labeling_calls) == 2
    assert [(r.epoch, r.labeling_pass) for r in log] == [(1, 1), (2, 1), (3, 2)]


def test_mpl_with_an_epoch_total(tiny_cfg, tiny_dataset):
    cfg = _frozen(tiny_cfg, mpl_epochs=5)
    params = init_params(cfg.encoder, derive_rng(1))
    _, _, log = run_mpl(params, tiny_dataset, cfg, epochs=3)
    assert [r.epoch for r in log] == [1, 2, 3]
