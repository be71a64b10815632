import math
import os
from typing import Annotated, Literal

import msgspec

PositiveInt = Annotated[int, msgspec.Meta(ge=1)]
NonNegInt = Annotated[int, msgspec.Meta(ge=0)]
NonNegFloat = Annotated[float, msgspec.Meta(ge=0.0)]
Probability = Annotated[float, msgspec.Meta(ge=0.0, le=1.0)]


class BaseStruct(msgspec.Struct, forbid_unknown_fields=False):
    pass


class SplitSizes(BaseStruct):
    labeled: PositiveInt = 100
    unlabeled: PositiveInt = 300
    dev: PositiveInt = 100
    test: PositiveInt = 100


class Datagen(BaseStruct):
    base_seed: NonNegInt = 1234
    setting: Literal["in_domain_small", "in_domain_large", "out_domain"] = "out_domain"
    feature_dim: PositiveInt = 8
    vocab_size: PositiveInt = 12
    min_len: PositiveInt = 3
    max_len: PositiveInt = 12
    min_duration: PositiveInt = 2
    max_duration: PositiveInt = 5
    base_noise_std: NonNegFloat = 0.3
    shifted_noise_std: NonNegFloat = 0.5
    shift_angle_deg: float = 15.0
    # share of the shifted grammar drawn from a fresh random table
    grammar_shift: Probability = 0.5
    prototype_scale: Annotated[float, msgspec.Meta(gt=0.0)] = 1.0
    # unlabeled size of in_domain_large; the other settings use sizes.unlabeled
    large_unlabeled: PositiveInt = 800
    sizes: SplitSizes = msgspec.field(default_factory=SplitSizes)

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("datagen.vocab_size must be at least 2 (the grammar never repeats a token)")
        if self.min_len > self.max_len:
            raise ValueError("datagen.min_len must not exceed datagen.max_len")
        if self.min_duration > self.max_duration:
            raise ValueError("datagen.min_duration must not exceed datagen.max_duration")


class EncoderConfig(BaseStruct):
    num_blocks: PositiveInt = 2
    d_model: PositiveInt = 32
    num_heads: PositiveInt = 4
    d_ff: PositiveInt = 128
    conv_kernel: PositiveInt = 7
    norm: Literal["batch", "group", "instance", "layer"] = "group"
    num_groups: PositiveInt = 8
    subsample_factor: PositiveInt = 2
    feature_dim: PositiveInt = 8
    vocab_size_with_blank: Annotated[int, msgspec.Meta(ge=2)] = 13
    dropout: Annotated[float, msgspec.Meta(ge=0.0, lt=1.0)] = 0.1
    rel_pos_window: NonNegInt = 8
    bn_momentum: Probability = 0.9
    norm_eps: Annotated[float, msgspec.Meta(gt=0.0)] = 1e-5

    def __post_init__(self):
        if self.d_model % self.num_heads:
            raise ValueError("encoder.num_heads must divide encoder.d_model")
        if self.conv_kernel % 2 == 0:
            raise ValueError("encoder.conv_kernel must be odd")
        if self.norm == "group" and self.d_model % self.num_groups:
            raise ValueError("encoder.num_groups must divide encoder.d_model")

    @property
    def effective_groups(self):
        """Group count realising the configured norm; None means batch normalization."""
        return {"batch": None, "group": self.num_groups, "instance": self.d_model, "layer": 1}[self.norm]


class AugmentPolicy(BaseStruct):
    enabled: bool = True
    num_time_masks: NonNegInt = 2
    max_time_mask_width: NonNegInt = 10
    num_freq_masks: NonNegInt = 2
    max_freq_mask_width: NonNegInt = 4
    mask_value: float = 0.0


class Adam(BaseStruct, tag="adam", tag_field="kind"):
    lr: NonNegFloat = 2e-3
    beta1: Annotated[float, msgspec.Meta(ge=0.0, lt=1.0)] = 0.9
    beta2: Annotated[float, msgspec.Meta(ge=0.0, lt=1.0)] = 0.98
    eps: Annotated[float, msgspec.Meta(gt=0.0)] = 1e-9


class Sgd(BaseStruct, tag="sgd", tag_field="kind"):
    lr: NonNegFloat = 0.05
    momentum: Probability = 0.9


class Constant(BaseStruct, tag="constant", tag_field="kind"):
    pass


class Warmup(BaseStruct, tag="warmup", tag_field="kind"):
    steps: PositiveInt = 200


class TrainConfig(BaseStruct):
    epochs: PositiveInt = 40
    batch_size: PositiveInt = 8
    optimizer: Adam | Sgd = msgspec.field(default_factory=Adam)
    # schedule of the supervised seed phase; IPL and MPL run at a constant rate
    lr_schedule: Constant | Warmup = msgspec.field(default_factory=Warmup)
    ssl_lr: NonNegFloat = 1e-3
    grad_clip_norm: NonNegFloat = 5.0
    seed: NonNegInt = 0
    w: Annotated[float, msgspec.Meta(gt=0.0, le=1.0)] = 0.5
    ipl_iters: PositiveInt = 4
    ipl_epochs_per_iter: PositiveInt = 5
    mpl_epochs: PositiveInt = 20
    # pipeline budget per semi-supervised method; IPL+MPL splits it in halves
    ssl_epochs: Annotated[int, msgspec.Meta(ge=2)] = 20
    checkpoint_avg_n: PositiveInt = 10
    ipl_avg_last_n: PositiveInt = 5
    sup_ratio_override: Annotated[float, msgspec.Meta(gt=0.0, lt=1.0)] | None = None
    workers: PositiveInt = 1


class BeamConfig(BaseStruct):
    beam_size: PositiveInt = 20
    prune_threshold: NonNegFloat = 14.0
    lm_weight: NonNegFloat = 1.0
    insertion_bonus: float = 2.0
    nbest: PositiveInt = 1

    def __post_init__(self):
        if self.nbest > self.beam_size:
            raise ValueError("beam.nbest must not exceed beam.beam_size")
        if math.isnan(self.prune_threshold):
            raise ValueError("beam.prune_threshold must be a number")


class LanguageModel(BaseStruct):
    order: PositiveInt = 3
    smoothing: Literal["witten_bell", "add_k"] = "witten_bell"
    k: NonNegFloat = 1.0
    # transcripts file; None trains on the labeled transcripts plus sampled external text
    corpus: str | None = None
    external_sentences: NonNegInt = 2000

    def __post_init__(self):
        if self.corpus is not None and not os.path.isfile(self.corpus):
            raise ValueError(f"lm.corpus is not a file: {self.corpus}")


class Paths(BaseStruct):
    workdir: str = "work"
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        parent = os.path.dirname(os.path.abspath(self.workdir))
        if not os.path.isdir(parent):
            raise ValueError(f"paths.workdir parent directory does not exist: {parent}")

    def resolve(self, *parts):
        return os.path.join(self.workdir, *parts)

    @property
    def checkpoints(self):
        if os.path.isabs(self.checkpoint_dir):
            return self.checkpoint_dir
        return os.path.join(self.workdir, self.checkpoint_dir)


class Cfg(BaseStruct):
    "This class defines the schema that msgspec uses to parse the run-config"

    datagen: Datagen = msgspec.field(default_factory=Datagen)
    encoder: EncoderConfig = msgspec.field(default_factory=EncoderConfig)
    augment: AugmentPolicy = msgspec.field(default_factory=AugmentPolicy)
    train: TrainConfig = msgspec.field(default_factory=TrainConfig)
    beam: BeamConfig = msgspec.field(default_factory=BeamConfig)
    lm: LanguageModel = msgspec.field(default_factory=LanguageModel)
    paths: Paths = msgspec.field(default_factory=Paths)

    def __post_init__(self):
        if self.encoder.feature_dim != self.datagen.feature_dim:
            raise ValueError("encoder.feature_dim must equal datagen.feature_dim")
        if self.encoder.vocab_size_with_blank != self.datagen.vocab_size + 1:
            raise ValueError("encoder.vocab_size_with_blank must equal datagen.vocab_size + 1")
