from mplab.trainer.batches import LABELED, UNLABELED, Batch, compose_batches, steps_per_epoch  # noqa: F401
from mplab.trainer.ipl import generate_pseudo_labels, label_churn, pass_epochs, run_ipl  # noqa: F401
from mplab.trainer.loop import (  # noqa: F401
    CheckpointHistory,
    EpochRecord,
    RunLog,
    Trainer,
    evaluate,
    is_reachable,
    transcribe,
)
from mplab.trainer.mpl import run_mpl  # noqa: F401
from mplab.trainer.optim import clip_gradients, learning_rate, make_optimizer  # noqa: F401
from mplab.trainer.seed import check_reachable, train_seed  # noqa: F401
