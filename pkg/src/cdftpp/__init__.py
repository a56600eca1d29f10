"""Temporal point processes via monotone conditional-CDF networks."""

from .autodiff import (
    Dual,
    DualScalar,
    EvaluationError,
    ParamVector,
    Tape,
    forward_dual,
    grad,
    grad_of_tau_derivative,
)
from .cdf_model import CdfModel, CdfOutput, SaturationError
from .encoder import EncoderParams, encode_sequence, featurize, rnn_step
from .modelbase import ModelConfig, load_checkpoint, save_checkpoint
from .registry import MODEL_NAMES, get_model
from .synthetic import (
    EventSequence,
    HawkesParams,
    RenewalSpec,
    build_dataset,
    hawkes_exact_loglik,
    hawkes_intensity,
    sample_hawkes,
    sample_nonstationary_renewal,
    sample_stationary_renewal,
    time_rescaling_transform,
)

__version__ = "0.1.0"
