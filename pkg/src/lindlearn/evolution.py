"""Heisenberg-picture evolution in the Pauli basis.

The adjoint generator maps a Pauli observable to a short list of Pauli
terms, one or two per overlapping component. Stacking those columns gives a
sparse real-valued transfer matrix ``A`` with ``d/dt c = A c`` for the Pauli
coefficient vector ``c`` of an evolving observable. Its exponential action
is computed with a truncated Taylor series and time-step scaling.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import CapExceeded, InvalidConfig, NonConvergent
from .model import ZERO_TOL, Lindbladian
from .pauli import PHASES, PauliString, all_paulis, product

DEFAULT_EXHAUSTIVE_CAP = 7
MAX_TAYLOR_TERMS = 60
MAX_SCALING_STEPS = 200_000
DENSE_PROPAGATOR_MAX_DIM = 1024

SparseVec = dict[PauliString, complex]


def _add(acc: SparseVec, key: PauliString, val: complex) -> None:
    acc[key] = acc.get(key, 0.0) + val


class AdjointPTM:
    """Sparse action of the adjoint generator on Pauli observables."""

    def __init__(self, model: Lindbladian):
        self.model = model
        self.n = model.n
        self._ham = [(p, float(h)) for p, h in model.ham_terms.items() if abs(h) > ZERO_TOL]
        d = model.diss_support
        self._diss = [
            (d[k], d[m], complex(model.kossakowski[k, m]))
            for k in range(len(d))
            for m in range(len(d))
            if abs(model.kossakowski[k, m]) > ZERO_TOL
        ]
        self._cache: dict[PauliString, SparseVec] = {}
        self._full: sp.csr_matrix | None = None

    @property
    def n_components(self) -> int:
        return len(self._ham) + len(self._diss)

    def column(self, obs: PauliString) -> SparseVec:
        """Pauli expansion of the adjoint generator applied to ``obs``."""
        cached = self._cache.get(obs)
        if cached is not None:
            return cached
        out: SparseVec = {}
        mask = obs.support_mask
        for p, h in self._ham:
            if not (p.support_mask & mask):
                continue
            k, r = product(p, obs)
            # i h [P, O] = 2 i h P O when P and O anticommute, else zero.
            if k % 2 == 1:
                _add(out, r, 2j * h * PHASES[k])
        for pk, pm, a in self._diss:
            if not ((pk.support_mask | pm.support_mask) & mask):
                continue
            k1, r1 = product(pm, obs)
            k2, r2 = product(r1, pk)
            _add(out, r2, a * PHASES[(k1 + k2) % 4])
            k3, r3 = product(pm, pk)
            k4, r4 = product(r3, obs)
            k5, r5 = product(obs, r3)
            _add(out, r4, -0.5 * a * PHASES[(k3 + k4) % 4])
            _add(out, r5, -0.5 * a * PHASES[(k3 + k5) % 4])
        out = {key: val for key, val in out.items() if abs(val) > 1e-15}
        self._cache[obs] = out
        return out

    def reachable(self, seeds: Iterable[PauliString], limit: int | None = None) -> list[PauliString]:
        """Paulis reachable from ``seeds`` under repeated application."""
        seen: dict[PauliString, None] = {}
        queue = deque()
        for s in seeds:
            if s not in seen:
                seen[s] = None
                queue.append(s)
        while queue:
            cur = queue.popleft()
            for nxt in self.column(cur):
                if nxt not in seen:
                    seen[nxt] = None
                    queue.append(nxt)
                    if limit is not None and len(seen) > limit:
                        raise CapExceeded(f"reachable Pauli set exceeds {limit}")
        return list(seen)

    def matrix_on(self, basis: list[PauliString]) -> sp.csr_matrix:
        """Restriction of the transfer matrix to an invariant Pauli subspace."""
        pos = {p: i for i, p in enumerate(basis)}
        rows, cols, vals = [], [], []
        for j, p in enumerate(basis):
            for r, v in self.column(p).items():
                rows.append(pos[r])
                cols.append(j)
                vals.append(v)
        dim = len(basis)
        return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)

    def full_matrix(self) -> sp.csr_matrix:
        """Transfer matrix over all ``4^n`` Paulis in symplectic index order."""
        if self._full is None:
            self._full = self.matrix_on(all_paulis(self.n))
        return self._full


def build_adjoint_ptm(model: Lindbladian) -> AdjointPTM:
    return AdjointPTM(model)


def _one_norm(a: sp.spmatrix) -> float:
    if a.nnz == 0:
        return 0.0
    return float(abs(a).sum(axis=0).max())


def expm_action(a: sp.spmatrix, v: np.ndarray, t: float, tol: float = 1e-16) -> np.ndarray:
    """``exp(t A) v`` by scaled truncated Taylor series.

    The step count makes ``|t| ||A||_1 / s <= 1`` so the series terms decay
    factorially; each step is summed until the newest term is below ``tol``
    relative to the running sum.
    """
    if t < 0:
        raise InvalidConfig("evolution time must be nonnegative")
    out = np.array(v, dtype=complex, copy=True)
    norm = _one_norm(a) * t
    if norm == 0.0:
        return out
    steps = max(1, math.ceil(norm))
    if steps > MAX_SCALING_STEPS:
        raise NonConvergent(f"time step budget exceeded ({steps} > {MAX_SCALING_STEPS})")
    h = t / steps
    for _ in range(steps):
        term = out
        total = out.copy()
        for k in range(1, MAX_TAYLOR_TERMS + 1):
            term = (a @ term) * (h / k)
            total += term
            tmax = np.max(np.abs(term)) if term.size else 0.0
            if tmax <= tol * max(np.max(np.abs(total)), 1e-300):
                break
        else:
            raise NonConvergent("Taylor series did not reach tolerance")
        out = total
    return out


def evolve_observable(ptm: AdjointPTM, t: float, obs: PauliString) -> SparseVec:
    """Pauli coefficients of the Heisenberg-evolved observable at time ``t``."""
    if t < 0:
        raise InvalidConfig("evolution time must be nonnegative")
    basis = ptm.reachable([obs])
    if t == 0 or len(basis) == 1 and not ptm.column(obs):
        return {obs: 1.0 + 0j}
    a = ptm.matrix_on(basis)
    v = np.zeros(len(basis), dtype=complex)
    v[0] = 1.0
    w = expm_action(a, v, t)
    return {p: complex(c) for p, c in zip(basis, w) if abs(c) > 1e-300}


# ----------------------------------------------------- Walsh-Hadamard tools
def _fwht(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float, copy=True)
    size = out.size
    h = 1
    while h < size:
        out = out.reshape(-1, 2, h)
        out = np.stack((out[:, 0] + out[:, 1], out[:, 0] - out[:, 1]), axis=1)
        h *= 2
    return out.reshape(size)


def _swap_permutation(n: int) -> np.ndarray:
    """Index map exchanging the X and Z bit of every qubit."""
    idx = np.arange(4**n)
    even = 0
    for q in range(n):
        even |= 1 << (2 * q)
    return ((idx & even) << 1) | ((idx >> 1) & even)


def fidelities_to_chi(fid: np.ndarray, n: int) -> np.ndarray:
    """Pauli error rates from Pauli fidelities (symplectic character transform)."""
    return _fwht(np.asarray(fid, dtype=float)[_swap_permutation(n)]) / 4**n


def chi_to_fidelities(chi: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`fidelities_to_chi`."""
    out = np.empty(4**n)
    out[_swap_permutation(n)] = _fwht(np.asarray(chi, dtype=float))
    return out


def pauli_weights(n: int) -> np.ndarray:
    return np.array([p.weight for p in all_paulis(n)])


def pauli_fidelities(ptm: AdjointPTM, t: float, cap: int = DEFAULT_EXHAUSTIVE_CAP) -> np.ndarray:
    """All ``4^n`` Pauli fidelities at time ``t`` in symplectic index order."""
    if ptm.n > cap:
        raise CapExceeded(f"exhaustive Pauli enumeration limited to n <= {cap}")
    a = ptm.full_matrix()
    dim = a.shape[0]
    diag = np.empty(dim)
    chunk = max(1, min(dim, 2**22 // dim))
    for start in range(0, dim, chunk):
        stop = min(dim, start + chunk)
        block = np.zeros((dim, stop - start), dtype=complex)
        block[np.arange(start, stop), np.arange(stop - start)] = 1.0
        out = expm_action(a, block, t)
        diag[start:stop] = np.real(out[np.arange(start, stop), np.arange(stop - start)])
    diag[0] = 1.0
    return diag


@dataclass
class ChiDiagonal:
    """Pauli error rates at one time; sparse when produced by a noisy backend."""

    t: float
    entries: dict[PauliString, float]
    eps_s: float = 0.0

    def get(self, p: PauliString) -> float:
        return self.entries.get(p, 0.0)


def chi_diagonal_exact(ptm: AdjointPTM, t: float, cap: int = DEFAULT_EXHAUSTIVE_CAP) -> ChiDiagonal:
    chi = fidelities_to_chi(pauli_fidelities(ptm, t, cap), ptm.n)
    return ChiDiagonal(t, dict(zip(all_paulis(ptm.n), chi.tolist())))


# ------------------------------------------------------------- inputs
@dataclass(frozen=True)
class PauliInput:
    """The traceless operator ``Q / 2^n``, realised as half the difference of
    the two eigenstate preparations ``(I +- Q) / 2^n``."""

    pauli: PauliString


@dataclass(frozen=True)
class PauliEigenstate:
    """The state ``(I + sign * Q) / 2^n``."""

    pauli: PauliString
    sign: int = 1


def hoeffding_shots(eps: float, delta: float) -> int:
    """Shots for a +-1 sample mean to be within ``eps`` with prob ``1 - delta``."""
    return math.ceil(2.0 * math.log(2.0 / delta) / eps**2)


def stable_rng(seed: int, t: float, tag: str) -> np.random.Generator:
    """Per-query generator keyed by (seed, time, probe tag).

    Keying on the query rather than on call order keeps noisy runs
    reproducible under any scheduling of the queries.
    """
    t_bits = int(np.float64(t).view(np.uint64))
    tag_words = list(tag.encode("utf-8")) or [0]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, t_bits, *tag_words]))


__all__ = [
    "AdjointPTM",
    "ChiDiagonal",
    "PauliEigenstate",
    "PauliInput",
    "build_adjoint_ptm",
    "chi_diagonal_exact",
    "chi_to_fidelities",
    "evolve_observable",
    "expm_action",
    "fidelities_to_chi",
    "hoeffding_shots",
    "pauli_fidelities",
    "stable_rng",
]
