"""Depolarizing state-preparation and measurement noise.

Each qubit of the prepared state is depolarized with retention ``r_prep``
and each qubit is depolarized again with retention ``r_meas`` just before
readout. Both channels are diagonal in the Pauli basis: a Pauli of weight
``w`` is multiplied by ``r**w``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidConfig, ZeroRetention
from .pauli import PauliString


@dataclass(frozen=True)
class SpamParams:
    r_prep: float = 1.0
    r_meas: float = 1.0

    def __post_init__(self) -> None:
        for name in ("r_prep", "r_meas"):
            r = getattr(self, name)
            if r == 0:
                raise ZeroRetention(f"{name} is zero; the signal is erased")
            if not 0 < r <= 1:
                raise InvalidConfig(f"{name}={r} must lie in (0, 1]")

    @property
    def r(self) -> float:
        return self.r_prep * self.r_meas

    @property
    def is_trivial(self) -> bool:
        return self.r_prep == 1.0 and self.r_meas == 1.0

    def compose(self, other: SpamParams) -> SpamParams:
        """Two stacked depolarizing layers multiply their retentions."""
        return SpamParams(self.r_prep * other.r_prep, self.r_meas * other.r_meas)

    @classmethod
    def parse(cls, text: str) -> SpamParams:
        try:
            rp, rm = (float(v) for v in text.split(","))
        except ValueError as exc:
            raise InvalidConfig(f"expected 'rP,rM', got {text!r}") from exc
        return cls(rp, rm)


def damp_fidelity(value: float, q: PauliString, spam: SpamParams) -> float:
    """Pauli fidelity seen through preparation and measurement noise."""
    return value * spam.r ** q.weight


def probe_damping(q: PauliString, o: PauliString, spam: SpamParams) -> float:
    """Factor multiplying the Pauli-input signal of probe ``(Q, O)``.

    Preparation noise acts on the input Pauli ``Q`` and measurement noise on
    the observable ``O``.
    """
    return spam.r_prep ** q.weight * spam.r_meas ** o.weight


def spam_rescale(raw: float, q: PauliString, o: PauliString, spam: SpamParams) -> float:
    """Undo the damping of probe data for known retentions."""
    if spam.r_prep == 0 or spam.r_meas == 0:
        raise ZeroRetention("cannot rescale with zero retention")
    return raw / probe_damping(q, o, spam)


def wrap_oracle(oracle, spam: SpamParams):
    """Return a copy of ``oracle`` with an extra SPAM layer composed in."""
    return oracle.with_spam(spam)
