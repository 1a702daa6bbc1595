"""Candidate structures on periodic square lattices for conditioning sweeps.

The Hamiltonian candidates are every single-qubit Pauli, every two-qubit
Pauli on pairs up to the third neighbour shell, and a few random three- and
four-local terms whose number grows linearly with the lattice size. The
dissipator candidates are the single- and two-qubit Paulis on the same
pairs, with off-diagonal Kossakowski entries admitted only between
single-qubit Paulis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .coefficients import CandidateStructure
from .errors import InvalidConfig
from .pauli import PauliString, paulis_with_support

DEFAULT_LATTICES: tuple[tuple[int, int], ...] = ((2, 2), (2, 3), (3, 3), (3, 4))
THREE_LOCAL_PER_SITE = 50 / 42
FOUR_LOCAL_PER_SITE = 10 / 42


@dataclass(frozen=True)
class Lattice:
    lx: int
    ly: int

    def __post_init__(self) -> None:
        if self.lx < 1 or self.ly < 1:
            raise InvalidConfig("lattice sides must be positive")

    @property
    def n(self) -> int:
        return self.lx * self.ly

    def site(self, x: int, y: int) -> int:
        return (x % self.lx) + self.lx * (y % self.ly)

    def pairs(self) -> list[tuple[int, int]]:
        """Distinct site pairs at offsets (1,0), (0,1), (1,1), (1,-1), (2,0), (0,2)."""
        offsets = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2)]
        out: set[tuple[int, int]] = set()
        for x, y in itertools.product(range(self.lx), range(self.ly)):
            a = self.site(x, y)
            for dx, dy in offsets:
                b = self.site(x + dx, y + dy)
                if a != b:
                    out.add((min(a, b), max(a, b)))
        return sorted(out)


def _random_local(n: int, k: int, rng: np.random.Generator) -> PauliString:
    sites = sorted(rng.choice(n, size=k, replace=False).tolist())
    letters = rng.choice(list("XYZ"), size=k)
    return PauliString.from_sites(n, dict(zip(sites, letters.tolist())))


def lattice_candidates(lattice: Lattice, seed: int) -> CandidateStructure:
    n = lattice.n
    singles = [p for q in range(n) for p in paulis_with_support((q,), n)]
    doubles = [p for pair in lattice.pairs() for p in paulis_with_support(pair, n)]
    rng = np.random.default_rng(np.random.SeedSequence([seed, lattice.lx, lattice.ly]))
    extra: list[PauliString] = []
    for k, rate in ((3, THREE_LOCAL_PER_SITE), (4, FOUR_LOCAL_PER_SITE)):
        if k > n:
            continue
        for _ in range(max(1, round(rate * n))):
            extra.append(_random_local(n, k, rng))
    s_h = sorted(set(singles + doubles + extra), key=lambda p: p.label)
    s_d = sorted(set(singles + doubles), key=lambda p: p.label)
    single_idx = [i for i, p in enumerate(s_d) if p.weight == 1]
    pairs = [(i, j) for i, j in itertools.combinations(sorted(single_idx, reverse=True), 2)]
    return CandidateStructure(s_h, s_d, pairs)


__all__ = ["DEFAULT_LATTICES", "Lattice", "lattice_candidates"]
