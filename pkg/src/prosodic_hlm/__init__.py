"""Double-articulation word and letter discovery with prosodic boundary cues.

Words are sequences of letters; letters emit Gaussian frames with Poisson
durations; word boundaries additionally shape a prosody stream.  Inference is
a blocked Gibbs sampler over segmentations, the word dictionary and all
parameters, under a weak-limit hierarchical Dirichlet process.
"""
from .model import (Hyperparameters, ModelState, NIWParams, ObservationSequence, Segmentation,
                    derive_boundary_flags, validate_state)
from .gibbs import TrainState, init, run, sweep
from .datagen import CorpusSpec, generate

__all__ = [
    "Hyperparameters", "ModelState", "NIWParams", "ObservationSequence", "Segmentation",
    "derive_boundary_flags", "validate_state", "TrainState", "init", "run", "sweep",
    "CorpusSpec", "generate",
]
__version__ = "0.1.0"
