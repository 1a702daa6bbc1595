"""Learning sparse Lindblad generators from simulated short-time dynamics."""

__version__ = "0.1.0"

from .coefficients import CandidateStructure, learn_coefficients, select_probes  # noqa: E402
from .model import Lindbladian, random_lindbladian  # noqa: E402
from .oracle import ChannelOracle, make_oracle  # noqa: E402
from .pauli import PauliString  # noqa: E402
from .spam import SpamParams  # noqa: E402
from .structure import learn_structure  # noqa: E402

__all__ = [
    "CandidateStructure",
    "ChannelOracle",
    "Lindbladian",
    "PauliString",
    "SpamParams",
    "__version__",
    "learn_coefficients",
    "learn_structure",
    "make_oracle",
    "random_lindbladian",
    "select_probes",
]
