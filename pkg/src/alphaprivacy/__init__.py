"""Tunable information-theoretic privacy toolkit.

Exact Arimoto alpha-mutual-information measures on discrete distributions,
an exact privatization-channel optimizer for small alphabets, and an
adversarial releaser/adversary training framework with privacy-utility
sweep tooling.
"""

from .measures import (
    JointPmf,
    Pmf,
    PosteriorBatch,
    alpha_mutual_information,
    arimoto_conditional_entropy,
    batch_sequence_arimoto_entropy,
    conditional_alpha_mi_given_s,
    renyi_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "Pmf",
    "JointPmf",
    "PosteriorBatch",
    "renyi_entropy",
    "arimoto_conditional_entropy",
    "alpha_mutual_information",
    "conditional_alpha_mi_given_s",
    "batch_sequence_arimoto_entropy",
    "__version__",
]
