"""Hard instances for time-resolution lower bounds.

The null model applies every weight-``kappa`` Pauli with unit rate,
``L0(rho) = sum_P (P rho P - rho)``. Its Heisenberg action is diagonal: a
Pauli ``Q`` decays as ``exp(-2 N(Q) t)``, where ``N(Q)`` counts the members
anticommuting with ``Q``. The alternative drops a single member. Both models
mix every input to near the maximally mixed state once ``t`` passes a
threshold, so their outputs become indistinguishable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, IdentityInput, KappaOutOfRange
from .model import Lindbladian
from .pauli import PauliString, all_paulis, commutes, paulis_with_support

EXACT_MIXING_MAX_QUBITS = 6


@dataclass(frozen=True)
class BalancedPauliSet:
    """All weight-``kappa`` Paulis on ``n`` qubits, optionally minus one."""

    n: int
    kappa: int
    excluded: PauliString | None = None

    def __post_init__(self) -> None:
        if not 2 <= self.kappa <= self.n:
            raise KappaOutOfRange(f"kappa={self.kappa} must satisfy 2 <= kappa <= n={self.n}")
        if self.excluded is not None and self.excluded not in set(self._all()):
            raise KappaOutOfRange(f"{self.excluded.label} is not a weight-{self.kappa} Pauli")

    def _all(self) -> list[PauliString]:
        out = [
            p
            for sites in itertools.combinations(range(self.n), self.kappa)
            for p in paulis_with_support(sites, self.n)
        ]
        return sorted(out, key=lambda p: p.label)

    @property
    def members(self) -> list[PauliString]:
        return [p for p in self._all() if p != self.excluded]

    def __len__(self) -> int:
        full = 3**self.kappa * math.comb(self.n, self.kappa)
        return full - (self.excluded is not None)

    def alternative(self, excluded: PauliString | None = None) -> BalancedPauliSet:
        """Same set with one member removed (the first one by label by default)."""
        return BalancedPauliSet(self.n, self.kappa, excluded or self._all()[0])


def build_L(n: int, kappa: int, excluded: PauliString | None | bool = None) -> Lindbladian:
    """Unit-rate Pauli dissipator over a balanced set.

    ``excluded=True`` removes the first member by label; a Pauli removes
    that member; ``None`` or ``False`` gives the null model.
    """
    base = BalancedPauliSet(n, kappa)
    if excluded is True:
        base = base.alternative()
    elif isinstance(excluded, PauliString):
        base = base.alternative(excluded)
    members = base.members
    return Lindbladian(n, {}, members, np.eye(len(members), dtype=complex))


def n_anticommuting(q: PauliString, pset: BalancedPauliSet) -> int:
    """Number of set members anticommuting with ``q``, by enumeration."""
    if q.is_identity:
        raise IdentityInput("the identity commutes with every member")
    return sum(1 for p in pset.members if not commutes(p, q))


def n_anticommuting_closed_form(q: PauliString, n: int, kappa: int) -> int:
    """Support-sum count for the full set.

    On a support ``S`` overlapping ``supp(q)`` in ``r`` sites, a member
    anticommutes with ``q`` iff an odd number of the overlap letters differ
    from those of ``q``, giving ``3^(kappa-r) (3^r - (-1)^r) / 2`` members.
    """
    if q.is_identity:
        raise IdentityInput("the identity commutes with every member")
    if not 2 <= kappa <= n:
        raise KappaOutOfRange(f"kappa={kappa} must satisfy 2 <= kappa <= n={n}")
    supp = q.support
    total = 0
    for sites in itertools.combinations(range(n), kappa):
        r = len(supp.intersection(sites))
        total += 3 ** (kappa - r) * (3**r - (-1) ** r) // 2
    return total


def n_star(n: int, kappa: int) -> float:
    """Lower bound on the anticommuting count over non-identity Paulis."""
    if not 2 <= kappa <= n:
        raise KappaOutOfRange(f"kappa={kappa} must satisfy 2 <= kappa <= n={n}")
    return 4.0 / 9.0 * 3**kappa * math.comb(n - 1, kappa - 1)


def set_size(n: int, kappa: int) -> int:
    return 3**kappa * math.comb(n, kappa)


def t0_kappa(n: int, kappa: int) -> float:
    """Mixing time after which the trace distance to I/2^n is at most 2^-n."""
    m = set_size(n, kappa)
    return 9.0 * n * (3.0 * n * math.log(2.0) + 2.0) / (16.0 * kappa * m - 9.0 * n)


def pauli_decay(model: Lindbladian, q: PauliString, t: float) -> float:
    """Heisenberg decay factor of ``q`` under a unit-rate Pauli dissipator."""
    if q.is_identity:
        raise IdentityInput("the identity does not decay")
    count = sum(
        float(model.kossakowski[i, i].real) for i, p in enumerate(model.diss_support) if not commutes(p, q)
    )
    return math.exp(-2.0 * count * t)


def _decay_counts(model: Lindbladian) -> np.ndarray:
    """Anticommuting rate sum for every Pauli, in index order."""
    paulis = all_paulis(model.n)
    rates = np.real(np.diag(model.kossakowski))
    out = np.zeros(len(paulis))
    for rate, p in zip(rates, model.diss_support):
        anti = np.array([not commutes(p, q) for q in paulis])
        out += rate * anti
    return out


def pauli_coefficients(rho: np.ndarray, n: int) -> np.ndarray:
    """``tr(Q rho)`` for every Pauli ``Q`` in index order."""
    return np.array([np.trace(q.to_matrix() @ rho).real for q in all_paulis(n)])


def evolve_state(model: Lindbladian, rho: np.ndarray, t: float) -> np.ndarray:
    """Dense ``exp(t L)(rho)`` using the diagonal Pauli action."""
    n = model.n
    if n > EXACT_MIXING_MAX_QUBITS:
        raise CapExceeded(f"dense states are limited to n <= {EXACT_MIXING_MAX_QUBITS}")
    coeff = pauli_coefficients(rho, n) * np.exp(-2.0 * _decay_counts(model) * t)
    out = np.zeros((2**n, 2**n), dtype=complex)
    for c, q in zip(coeff, all_paulis(n)):
        if c != 0.0:
            out += c * q.to_matrix()
    return out / 2**n


@dataclass(frozen=True)
class MixingCertificate:
    t: float
    l2_distance: float
    l2_bound: float
    l1_bound: float

    @property
    def holds(self) -> bool:
        return self.l2_distance <= self.l2_bound * (1 + 1e-12)


def mixing_certificate(model: Lindbladian, rho: np.ndarray, t: float, kappa: int) -> MixingCertificate:
    """Exact Hilbert-Schmidt distance of ``exp(tL)(rho)`` from ``I/2^n``.

    The distance squared is ``2^-n sum_{Q != I} tr(Q rho)^2 exp(-4 N(Q) t)``.
    The bound replaces every count by its minimum; the trace-norm bound
    follows from ``||A||_1 <= 2^(n/2) ||A||_2``.
    """
    n = model.n
    if n > EXACT_MIXING_MAX_QUBITS:
        raise CapExceeded(f"exact mixing distances are limited to n <= {EXACT_MIXING_MAX_QUBITS}")
    coeff = pauli_coefficients(rho, n)
    decay = np.exp(-2.0 * _decay_counts(model) * t)
    l2 = math.sqrt(float(np.sum((coeff[1:] * decay[1:]) ** 2)) / 2**n)
    bound = math.exp(-2.0 * n_star(n, kappa) * t)
    return MixingCertificate(float(t), l2, bound, 2 ** (n / 2) * bound)


def random_product_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Tensor product of Haar-random single-qubit pure states."""
    rho = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        rho = np.kron(rho, np.outer(v, v.conj()))
    return rho


def trace_distance_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


__all__ = [
    "BalancedPauliSet",
    "MixingCertificate",
    "build_L",
    "evolve_state",
    "mixing_certificate",
    "n_anticommuting",
    "n_anticommuting_closed_form",
    "n_star",
    "pauli_coefficients",
    "pauli_decay",
    "random_product_state",
    "set_size",
    "t0_kappa",
    "trace_distance_l1",
]
