"""Synthetic EEG mental-workload pipeline with a convolutional-recurrent classifier."""

from .core import EpochSet, Label, RawSession, paradigm_timeline, standard_montage, validate_session
from .synthgen import SynthConfig, generate_cohort, generate_session

__version__ = "0.1.0"

__all__ = [
    "EpochSet", "Label", "RawSession", "SynthConfig", "generate_cohort", "generate_session",
    "paradigm_timeline", "standard_montage", "validate_session", "__version__",
]
