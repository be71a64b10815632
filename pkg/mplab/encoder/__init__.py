from mplab.config.validations import EncoderConfig  # noqa: F401
from mplab.encoder.checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from mplab.encoder.layers import group_norm  # noqa: F401
from mplab.encoder.model import (  # noqa: F401
    Tape,
    backward,
    forward,
    forward_batch,
    init_params,
    parameter_layout,
    posteriors,
)
from mplab.encoder.params import (  # noqa: F401
    ParameterSet,
    average_checkpoints,
    ema_update,
    is_buffer,
    momentum_from_weight,
)
