"""Black-box access to the simulated channel ``exp(t L)``.

Three backends answer the same queries:

* :class:`Exact` returns exact values.
* :class:`ExactPlusNoise` adds bounded uniform noise, the adversarial noise
  model under which the Chebyshev error bounds are stated.
* :class:`Sampled` draws finite-shot +-1 outcomes from the exact
  probabilities.

Noisy answers use a random stream keyed by (seed, time, query tag), so a
query always gets the same answer regardless of evaluation order.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, InvalidConfig, ShotBudgetOverflow
from .evolution import (
    DEFAULT_EXHAUSTIVE_CAP,
    DENSE_PROPAGATOR_MAX_DIM,
    AdjointPTM,
    ChiDiagonal,
    PauliEigenstate,
    PauliInput,
    evolve_observable,
    expm_action,
    fidelities_to_chi,
    hoeffding_shots,
    pauli_fidelities,
    pauli_weights,
    stable_rng,
)
from .model import Lindbladian
from .pauli import PauliString, all_paulis
from .spam import SpamParams

DEFAULT_MAX_SHOTS = 2**62


@dataclass(frozen=True)
class Exact:
    name = "exact"


@dataclass(frozen=True)
class ExactPlusNoise:
    """Uniform noise of amplitude ``eps`` (or the requested accuracy if None)."""

    eps: float | None = None
    seed: int = 0
    name = "noise"


@dataclass(frozen=True)
class Sampled:
    """Finite-shot estimates; ``shots=None`` uses the Hoeffding schedule."""

    shots: int | None = None
    seed: int = 0
    max_shots: int = DEFAULT_MAX_SHOTS
    name = "sampled"


Backend = Exact | ExactPlusNoise | Sampled


def parse_backend(text: str, seed: int = 0) -> Backend:
    """Parse ``exact``, ``noise[:EPS]`` or ``sampled[:SHOTS]``."""
    head, _, arg = text.partition(":")
    try:
        if head == "exact" and not arg:
            return Exact()
        if head == "noise":
            return ExactPlusNoise(float(arg) if arg else None, seed)
        if head == "sampled":
            return Sampled(int(float(arg)) if arg else None, seed)
    except ValueError as exc:
        raise InvalidConfig(f"bad backend argument {text!r}") from exc
    raise InvalidConfig(f"unknown backend {text!r}")


class ChannelOracle:
    """Query interface to ``E_M o exp(tL) o E_P`` for one model and backend."""

    def __init__(
        self,
        model: Lindbladian,
        backend: Backend | None = None,
        spam: SpamParams | None = None,
        cap: int = DEFAULT_EXHAUSTIVE_CAP,
        ptm: AdjointPTM | None = None,
    ):
        self.model = model
        self.backend = backend if backend is not None else Exact()
        self.spam = spam if spam is not None else SpamParams()
        self.cap = cap
        self.ptm = ptm if ptm is not None else AdjointPTM(model)
        self.n = model.n
        self._lock = threading.Lock()
        self._fid: dict[float, np.ndarray] = {}
        self._prop: dict[float, np.ndarray] = {}
        self._evolved: dict[tuple[PauliString, float], dict] = {}
        self.queries = 0
        self.shots = 0

    # ---------------------------------------------------------------- plumbing
    def with_spam(self, spam: SpamParams) -> ChannelOracle:
        return ChannelOracle(self.model, self.backend, self.spam.compose(spam), self.cap, self.ptm)

    def with_backend(self, backend: Backend) -> ChannelOracle:
        return ChannelOracle(self.model, backend, self.spam, self.cap, self.ptm)

    def _count(self, queries: int = 1, shots: int = 0) -> None:
        with self._lock:
            self.queries += queries
            self.shots += shots

    def reset_counters(self) -> None:
        with self._lock:
            self.queries = 0
            self.shots = 0

    @property
    def seed(self) -> int:
        return getattr(self.backend, "seed", 0)

    # ------------------------------------------------------------ exact values
    def _raw_fidelities(self, t: float) -> np.ndarray:
        t = float(t)
        fid = self._fid.get(t)
        if fid is None:
            fid = pauli_fidelities(self.ptm, t, self.cap)
            self._fid[t] = fid
        return fid

    def fidelities(self, t: float) -> np.ndarray:
        """Exact (SPAM-damped) Pauli fidelities in symplectic index order."""
        fid = self._raw_fidelities(t)
        if self.spam.is_trivial:
            return fid.copy()
        return fid * self.spam.r ** pauli_weights(self.n)

    def chi_exact(self, t: float) -> np.ndarray:
        return fidelities_to_chi(self.fidelities(t), self.n)

    def _propagator(self, t: float) -> np.ndarray:
        t = float(t)
        u = self._prop.get(t)
        if u is None:
            a = self.ptm.full_matrix()
            u = expm_action(a, np.eye(a.shape[0], dtype=complex), t)
            self._prop[t] = u
        return u

    def _evolved_coeff(self, q: PauliString, o: PauliString, t: float) -> complex:
        if 4**self.n <= DENSE_PROPAGATOR_MAX_DIM:
            return complex(self._propagator(t)[q.index, o.index])
        key = (o, float(t))
        vec = self._evolved.get(key)
        if vec is None:
            vec = evolve_observable(self.ptm, t, o)
            self._evolved[key] = vec
        return complex(vec.get(q, 0.0))

    def _identity_row(self, t: float) -> np.ndarray:
        """Identity coefficient of every evolved Pauli, measurement-damped."""
        if 4**self.n <= DENSE_PROPAGATOR_MAX_DIM:
            row = self._propagator(t)[0].real.copy()
        else:
            ident = PauliString.identity(self.n)
            row = np.array([self._evolved_coeff(ident, p, t).real for p in all_paulis(self.n)])
        return row * self.spam.r_meas ** pauli_weights(self.n)

    def pauli_input_value(self, q: PauliString, o: PauliString, t: float) -> float:
        """Exact signal of probe ``(Q/2^n, O)``: the Q coefficient of the
        evolved observable, damped by SPAM."""
        val = self._evolved_coeff(q, o, t).real
        return val * self.spam.r_prep ** q.weight * self.spam.r_meas ** o.weight

    def eigenstate_value(self, q: PauliString, sign: int, o: PauliString, t: float) -> float:
        """Exact expectation of ``O`` after evolving ``(I + sign Q)/2^n``."""
        ident = PauliString.identity(self.n)
        base = self._evolved_coeff(ident, o, t).real * self.spam.r_meas ** o.weight
        if q.is_identity:
            return base
        return base + sign * self.pauli_input_value(q, o, t)

    # ---------------------------------------------------------------- queries
    def query_chi_rates(self, t: float, eps_s: float, delta_s: float, tag: str = "chi") -> ChiDiagonal:
        """Pauli error rates at time ``t`` with entrywise accuracy ``eps_s``."""
        if self.n > self.cap:
            raise CapExceeded(f"Pauli error rates need n <= {self.cap}")
        paulis = all_paulis(self.n)
        b = self.backend
        if isinstance(b, Exact):
            self._count()
            chi = self.chi_exact(t)
            return ChiDiagonal(t, dict(zip(paulis, chi.tolist())), 0.0)
        if isinstance(b, ExactPlusNoise):
            self._count()
            amp = eps_s if b.eps is None else b.eps
            chi = self.chi_exact(t)
            rng = stable_rng(b.seed, t, tag)
            noisy = chi + rng.uniform(-amp, amp, size=chi.size)
            # Entries whose true rate is below the accuracy are reported as 0,
            # which keeps every reported entry within eps_s of the truth.
            noisy[chi < eps_s] = 0.0
            return ChiDiagonal(t, _sparsify(paulis, noisy, eps_s), eps_s)
        # Sampled: estimate every fidelity to eps_s/2, transform, then zero
        # estimates below eps_s/2 (their true value is then below eps_s).
        dim = 4**self.n
        fid = self.fidelities(t)
        if b.shots is None:
            shots = hoeffding_shots(eps_s / 2, delta_s / dim)
        else:
            shots = int(b.shots)
        if shots * dim > b.max_shots:
            raise ShotBudgetOverflow(f"{shots} shots per fidelity exceeds the budget")
        rng = stable_rng(b.seed, t, tag)
        base = self._identity_row(t)
        est = _pauli_input_estimate(rng, base + fid, base - fid, shots)
        est[0] = 1.0
        self._count(queries=shots * (dim - 1), shots=shots * (dim - 1))
        chi = fidelities_to_chi(est, self.n)
        chi[chi < eps_s / 2] = 0.0
        return ChiDiagonal(t, _sparsify(paulis, chi, eps_s), eps_s)

    def expectation(
        self,
        inp: PauliInput | PauliEigenstate,
        o: PauliString,
        t: float,
        eps_s: float | None = None,
        delta_s: float | None = None,
        tag: str = "",
    ) -> float:
        """Probe value at time ``t`` as returned by the backend."""
        if isinstance(inp, PauliInput) and inp.pauli.is_identity:
            # I / 2^n is itself the maximally mixed state: one experiment.
            inp = PauliEigenstate(inp.pauli, 1)
        if isinstance(inp, PauliInput):
            exact_plus = self.eigenstate_value(inp.pauli, 1, o, t)
            exact_minus = self.eigenstate_value(inp.pauli, -1, o, t)
            exact = 0.5 * (exact_plus - exact_minus)
        elif isinstance(inp, PauliEigenstate):
            exact = self.eigenstate_value(inp.pauli, inp.sign, o, t)
        else:
            raise InvalidConfig(f"unsupported input {inp!r}")
        b = self.backend
        if isinstance(b, Exact):
            self._count()
            return exact
        rng = stable_rng(b.seed, t, tag or f"{_input_tag(inp)}|{o.label}")
        if isinstance(b, ExactPlusNoise):
            self._count()
            amp = b.eps if b.eps is not None else (eps_s or 0.0)
            return exact + float(rng.uniform(-amp, amp))
        if b.shots is None:
            if eps_s is None or delta_s is None:
                raise InvalidConfig("sampled backend needs eps_s and delta_s")
            shots = hoeffding_shots(eps_s, delta_s)
        else:
            shots = int(b.shots)
        if shots > b.max_shots:
            raise ShotBudgetOverflow(f"{shots} shots exceeds the budget {b.max_shots}")
        self._count(queries=shots, shots=shots)
        if isinstance(inp, PauliInput):
            return float(_pauli_input_estimate(rng, np.array([exact_plus]), np.array([exact_minus]), shots)[0])
        return float(_mean_of_pm1(rng, np.array([exact]), shots)[0])


def _input_tag(inp: PauliInput | PauliEigenstate) -> str:
    if isinstance(inp, PauliInput):
        return f"in:{inp.pauli.label}"
    return f"eig:{'+' if inp.sign > 0 else '-'}{inp.pauli.label}"


def _mean_of_pm1(rng: np.random.Generator, mean: np.ndarray, shots: int) -> np.ndarray:
    """Sample means of ``shots`` +-1 outcomes with the given expectations."""
    p = np.clip((1.0 + np.asarray(mean)) / 2.0, 0.0, 1.0)
    ones = rng.binomial(shots, p)
    return (2.0 * ones - shots) / shots


def _pauli_input_estimate(rng: np.random.Generator, plus: np.ndarray, minus: np.ndarray, shots: int) -> np.ndarray:
    """Half the difference of two eigenstate experiments, each with half of
    ``shots``; the estimator is an average of ``shots`` terms in [-1, 1]."""
    half = max(1, shots // 2)
    return 0.5 * (_mean_of_pm1(rng, plus, half) - _mean_of_pm1(rng, minus, half))


def _sparsify(paulis: list[PauliString], values: np.ndarray, eps_s: float) -> dict[PauliString, float]:
    keep = np.flatnonzero(values != 0.0)
    limit = math.ceil(4.0 / eps_s) if eps_s > 0 else len(keep)
    if len(keep) > limit:
        order = np.argsort(-values[keep], kind="stable")[:limit]
        keep = np.sort(keep[order])
    return {paulis[i]: float(values[i]) for i in keep}


def make_oracle(model: Lindbladian, backend: str | Backend = "exact", seed: int = 0, spam: SpamParams | None = None) -> ChannelOracle:
    if isinstance(backend, str):
        backend = parse_backend(backend, seed)
    return ChannelOracle(model, backend, spam)


__all__ = [
    "ChannelOracle",
    "Exact",
    "ExactPlusNoise",
    "Sampled",
    "make_oracle",
    "parse_backend",
]
