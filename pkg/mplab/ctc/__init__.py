from mplab.config.validations import BeamConfig  # noqa: F401
from mplab.ctc.decoding import Hypothesis, best_path_decode, decode, prefix_beam_search  # noqa: F401
from mplab.ctc.loss import (  # noqa: F401
    collapse,
    ctc_log_likelihood,
    ctc_loss_and_grad,
    ctc_posterior_occupancy,
    min_frames_required,
)
from mplab.ctc.vocab import FramePosteriors, Vocabulary, log_softmax  # noqa: F401
