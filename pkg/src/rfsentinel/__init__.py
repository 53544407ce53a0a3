"""Detection and fingerprinting of UAV remote-controller emissions.

The processing chain runs a Haar-wavelet preprocessor and a two-state Markov
detector, triages Wi-Fi and Bluetooth interference from bandwidth and FSK
modulation features, and identifies controllers from energy-transient
statistics with NCA feature selection and kNN, discriminant-analysis or
random-forest classifiers.
"""
from .catalogue import Catalogue
from .errors import (FileFormatError, InvalidArgumentError, NotFittedError, NumericError,
                     RfSentinelError)
from .evaluation import TrainedModels, run_multistage, train_models
from .signals import SampledSignal, SignalLabel

__all__ = ["Catalogue", "FileFormatError", "InvalidArgumentError", "NotFittedError",
           "NumericError", "RfSentinelError", "SampledSignal", "SignalLabel", "TrainedModels",
           "run_multistage", "train_models"]
__version__ = "0.1.0"
