"""Exact n-qubit Pauli algebra on symplectic bit masks.

A Pauli string is stored as two integers, ``x`` and ``z``, whose bit ``q``
records the X and Z components on qubit ``q``. The Hermitian letter on a
qubit is ``I`` (00), ``X`` (x only), ``Z`` (z only) or ``Y`` (both), with
``Y = i X Z``. Phases of products are tracked as powers of ``i`` modulo 4, so
every operation here is integer arithmetic.

Text labels put qubit 0 leftmost: ``"XIZ"`` is X on qubit 0 and Z on qubit 2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidConfig, SizeMismatch

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PHASES = (1, 1j, -1, -1j)


@dataclass(frozen=True, slots=True)
class PauliString:
    """Hermitian Pauli string on ``n`` qubits (no phase)."""

    n: int
    x: int
    z: int

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(n, 0, 0)

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        if not label:
            raise InvalidConfig("empty Pauli label")
        x = z = 0
        for q, ch in enumerate(label):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise InvalidConfig(f"invalid Pauli letter {ch!r} in {label!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(len(label), x, z)

    @classmethod
    def single(cls, n: int, site: int, letter: str) -> PauliString:
        bx, bz = _LETTER_BITS[letter]
        return cls(n, bx << site, bz << site)

    @classmethod
    def from_sites(cls, n: int, letters: dict[int, str]) -> PauliString:
        x = z = 0
        for site, letter in letters.items():
            bx, bz = _LETTER_BITS[letter]
            x |= bx << site
            z |= bz << site
        return cls(n, x, z)

    @classmethod
    def from_index(cls, n: int, index: int) -> PauliString:
        """Inverse of :attr:`index`."""
        x = z = 0
        for q in range(n):
            code = (index >> (2 * q)) & 3
            x |= (code & 1) << q
            z |= (code >> 1) << q
        return cls(n, x, z)

    @property
    def index(self) -> int:
        """Position in the symplectic ordering.

        Qubit ``q`` contributes the two-bit code ``x_q + 2 z_q`` at bit
        offset ``2q`` (so I=0, X=1, Z=2, Y=3, qubit 0 least significant).
        """
        out = 0
        for q in range(self.n):
            out |= (((self.x >> q) & 1) | (((self.z >> q) & 1) << 1)) << (2 * q)
        return out

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in range(self.n))

    def letter(self, q: int) -> str:
        return _BITS_LETTER[((self.x >> q) & 1, (self.z >> q) & 1)]

    @property
    def support_mask(self) -> int:
        return self.x | self.z

    @property
    def support(self) -> frozenset[int]:
        m = self.support_mask
        return frozenset(q for q in range(self.n) if (m >> q) & 1)

    @property
    def weight(self) -> int:
        return self.support_mask.bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def restrict_letters(self) -> dict[int, str]:
        return {q: self.letter(q) for q in sorted(self.support)}

    def to_matrix(self) -> np.ndarray:
        """Dense ``2^n x 2^n`` matrix; qubit 0 is the leftmost tensor factor."""
        return reduce(np.kron, (_SINGLE[self.letter(q)] for q in range(self.n)), np.eye(1, dtype=complex))

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


@dataclass(frozen=True, slots=True)
class PhasedPauli:
    """``i**phase_pow`` times a Hermitian Pauli string."""

    pauli: PauliString
    phase_pow: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "phase_pow", self.phase_pow % 4)

    @property
    def phase(self) -> complex:
        return PHASES[self.phase_pow]

    def to_matrix(self) -> np.ndarray:
        return self.phase * self.pauli.to_matrix()


def _check_sizes(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise SizeMismatch(f"qubit counts differ: {a.n} vs {b.n}")


def _y_count(p: PauliString) -> int:
    return (p.x & p.z).bit_count()


def product(a: PauliString, b: PauliString) -> tuple[int, PauliString]:
    """Return ``(k, c)`` with ``a b = i**k c``."""
    _check_sizes(a, b)
    c = PauliString(a.n, a.x ^ b.x, a.z ^ b.z)
    k = _y_count(a) + _y_count(b) + 2 * (a.z & b.x).bit_count() - _y_count(c)
    return k % 4, c


def multiply(a: PhasedPauli, b: PhasedPauli) -> PhasedPauli:
    k, c = product(a.pauli, b.pauli)
    return PhasedPauli(c, a.phase_pow + b.phase_pow + k)


def inverse(a: PhasedPauli) -> PhasedPauli:
    # Hermitian Paulis square to the identity, so only the phase inverts.
    return PhasedPauli(a.pauli, -a.phase_pow)


def symplectic_product(a: PauliString, b: PauliString) -> int:
    _check_sizes(a, b)
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) & 1


def commutes(a: PauliString, b: PauliString) -> bool:
    return symplectic_product(a, b) == 0


def enumerate_patch_paulis(sites: Iterable[int], n: int) -> list[PauliString]:
    """All ``4^|T|`` Pauli strings supported inside ``sites``, sorted by label."""
    sites = sorted(set(sites))
    if any(s < 0 or s >= n for s in sites):
        raise InvalidConfig(f"patch {sites} is not inside [0, {n})")
    out = [
        PauliString.from_sites(n, dict(zip(sites, letters)))
        for letters in itertools.product("IXYZ", repeat=len(sites))
    ]
    out.sort(key=lambda p: p.label)
    return out


def paulis_with_support(sites: Sequence[int], n: int) -> Iterator[PauliString]:
    """Paulis whose support is exactly ``sites`` (letters X, Y, Z on each)."""
    for letters in itertools.product("XYZ", repeat=len(sites)):
        yield PauliString.from_sites(n, dict(zip(sites, letters)))


def all_paulis(n: int) -> list[PauliString]:
    """Every n-qubit Pauli in symplectic index order."""
    return [PauliString.from_index(n, i) for i in range(4**n)]


def sort_key(p: PauliString) -> str:
    return p.label
