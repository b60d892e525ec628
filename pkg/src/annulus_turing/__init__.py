"""Turing onset and transition analysis for the Schnackenberg system on an annulus."""

__version__ = "0.1.0"

from .linstab import ModelParams, classify_regime, critical_lambda, dispersion  # noqa: E402
from .transition import TransitionType, transition_number  # noqa: E402

__all__ = ["ModelParams", "classify_regime", "critical_lambda", "dispersion",
           "TransitionType", "transition_number", "__version__"]
