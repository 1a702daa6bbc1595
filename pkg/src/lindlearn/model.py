"""Lindbladian generators in a Pauli basis.

The generator acts as

    L(rho) = -i sum_k h_k [P_k, rho]
             + sum_{k,m} a_km (P_k rho P_m - 1/2 {P_m P_k, rho}),

with real Hamiltonian coefficients ``h`` and a Hermitian positive
semidefinite Kossakowski matrix ``a`` over an ordered dissipator support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IdentityTermPresent, InvalidConfig, NonHermitianKossakowski, NotPSD
from .pauli import PauliString

HERMITIAN_TOL = 1e-12
PSD_TOL = -1e-10
ZERO_TOL = 1e-14
EXACT_SPECTRUM_MAX_QUBITS = 10


@dataclass(frozen=True)
class SparsityReport:
    M_H: int
    M_D: int
    M: int
    eta: float


@dataclass(frozen=True)
class LindbladComponent:
    """One Pauli term of the generator: ``("H", (P,))`` or ``("D", (P_k, P_m))``."""

    kind: str
    paulis: tuple[PauliString, ...]

    @property
    def support_mask(self) -> int:
        mask = 0
        for p in self.paulis:
            mask |= p.support_mask
        return mask

    @property
    def support(self) -> frozenset[int]:
        out: set[int] = set()
        for p in self.paulis:
            out |= p.support
        return frozenset(out)


@dataclass(frozen=True)
class DualGraph:
    vertices: tuple[LindbladComponent, ...]
    edges: tuple[tuple[int, int], ...]
    max_degree: int


@dataclass
class Lindbladian:
    n: int
    ham_terms: dict[PauliString, float] = field(default_factory=dict)
    diss_support: list[PauliString] = field(default_factory=list)
    kossakowski: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=complex))

    def __post_init__(self) -> None:
        self.kossakowski = np.asarray(self.kossakowski, dtype=complex).reshape(
            len(self.diss_support), len(self.diss_support)
        )

    @classmethod
    def from_labels(
        cls,
        hamiltonian: Mapping[str, float] | None = None,
        support: Sequence[str] = (),
        kossakowski: np.ndarray | Sequence[Sequence[complex]] | None = None,
        n: int | None = None,
    ) -> Lindbladian:
        hamiltonian = dict(hamiltonian or {})
        labels = list(hamiltonian) + list(support)
        if n is None:
            if not labels:
                raise InvalidConfig("cannot infer qubit count from an empty model")
            n = len(labels[0])
        ham = {PauliString.from_label(k): float(v) for k, v in hamiltonian.items()}
        diss = [PauliString.from_label(s) for s in support]
        if kossakowski is None:
            kossakowski = np.zeros((len(diss), len(diss)))
        return cls(n, ham, diss, np.asarray(kossakowski, dtype=complex))

    # ------------------------------------------------------------------ checks
    def validate(self) -> SparsityReport:
        """Check every invariant and return the sparsity summary."""
        for p in list(self.ham_terms) + list(self.diss_support):
            if p.n != self.n:
                raise InvalidConfig(f"Pauli {p.label} has {p.n} qubits, model has {self.n}")
            if p.is_identity:
                raise IdentityTermPresent("identity Pauli is not allowed in the generator")
        if len(set(self.diss_support)) != len(self.diss_support):
            raise InvalidConfig("duplicate Pauli in dissipator support")
        a = self.kossakowski
        if a.size:
            if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL:
                raise NonHermitianKossakowski("Kossakowski matrix is not Hermitian")
            evals = np.linalg.eigvalsh((a + a.conj().T) / 2)
            if evals[0] < PSD_TOL:
                raise NotPSD(f"Kossakowski matrix has eigenvalue {evals[0]:.3g}")
            diag = np.real(np.diag(a))
            for i in np.flatnonzero(np.abs(diag) <= ZERO_TOL):
                if np.max(np.abs(a[i])) > ZERO_TOL:
                    raise NotPSD("zero diagonal entry with a nonzero row")
        return self.sparsity()

    def sparsity(self) -> SparsityReport:
        m_h = len(self.ham_terms)
        m_d = len(self.diss_support)
        coeffs = [abs(v) for v in self.ham_terms.values()]
        coeffs += list(np.abs(self.kossakowski).ravel())
        nonzero = [c for c in coeffs if c > ZERO_TOL]
        eta = min(nonzero) if nonzero else 0.0
        return SparsityReport(m_h, m_d, m_h + m_d * m_d, float(eta))

    def max_coefficient(self) -> float:
        vals = [abs(v) for v in self.ham_terms.values()] + list(np.abs(self.kossakowski).ravel())
        return float(max(vals, default=0.0))

    def rescaled(self) -> tuple[Lindbladian, float]:
        """Return the model divided by its largest coefficient, and that factor."""
        s = self.max_coefficient()
        if s == 0:
            return self, 1.0
        ham = {p: v / s for p, v in self.ham_terms.items()}
        return Lindbladian(self.n, ham, list(self.diss_support), self.kossakowski / s), s

    # --------------------------------------------------------------- structure
    def structure(self) -> tuple[set[PauliString], set[PauliString]]:
        """True ``(S_H, S_D)``: Paulis with nonzero h and nonzero diagonal a."""
        s_h = {p for p, v in self.ham_terms.items() if abs(v) > ZERO_TOL}
        diag = np.real(np.diag(self.kossakowski))
        s_d = {p for p, v in zip(self.diss_support, diag) if abs(v) > ZERO_TOL}
        return s_h, s_d

    def components(self) -> list[LindbladComponent]:
        out = [LindbladComponent("H", (p,)) for p, v in self.ham_terms.items() if abs(v) > ZERO_TOL]
        d = self.diss_support
        for k in range(len(d)):
            for m in range(len(d)):
                if abs(self.kossakowski[k, m]) > ZERO_TOL:
                    out.append(LindbladComponent("D", (d[k], d[m])))
        return out

    def hamiltonian_matrix(self) -> np.ndarray:
        dim = 2**self.n
        h = np.zeros((dim, dim), dtype=complex)
        for p, v in self.ham_terms.items():
            h += v * p.to_matrix()
        return h

    def liouville_matrix(self) -> np.ndarray:
        """Dense column-stacked superoperator of L (test oracle, small n only)."""
        dim = 2**self.n
        eye = np.eye(dim)
        h = self.hamiltonian_matrix()

        def left(a: np.ndarray) -> np.ndarray:  # vec(A X) = (I kron A) vec(X)
            return np.kron(eye, a)

        def right(b: np.ndarray) -> np.ndarray:  # vec(X B) = (B^T kron I) vec(X)
            return np.kron(b.T, eye)

        sup = -1j * (left(h) - right(h))
        mats = [p.to_matrix() for p in self.diss_support]
        for k, pk in enumerate(mats):
            for m, pm in enumerate(mats):
                c = self.kossakowski[k, m]
                if abs(c) <= ZERO_TOL:
                    continue
                anti = pm @ pk
                sup += c * (left(pk) @ right(pm) - 0.5 * (left(anti) + right(anti)))
        return sup

    # ---------------------------------------------------------------- json io
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hamiltonian": [{"pauli": p.label, "coeff": float(v)} for p, v in self.ham_terms.items()],
            "dissipator": {
                "support": [p.label for p in self.diss_support],
                "kossakowski_re": np.real(self.kossakowski).tolist(),
                "kossakowski_im": np.imag(self.kossakowski).tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Lindbladian:
        try:
            n = int(data["n"])
            ham: dict[PauliString, float] = {}
            for term in data.get("hamiltonian", []):
                p = PauliString.from_label(term["pauli"])
                if p in ham:
                    raise InvalidConfig(f"duplicate Hamiltonian term {p.label}")
                ham[p] = float(term["coeff"])
            diss = data.get("dissipator", {}) or {}
            unknown = set(diss) - {"support", "kossakowski_re", "kossakowski_im"}
            if unknown:
                raise InvalidConfig(f"unknown dissipator fields {sorted(unknown)}")
            support = [PauliString.from_label(s) for s in diss.get("support", [])]
            k = len(support)
            if k and "kossakowski_re" not in diss:
                raise InvalidConfig("dissipator support given without kossakowski_re")
            re = np.asarray(diss.get("kossakowski_re", np.zeros((k, k))), dtype=float).reshape(k, k)
            im = np.asarray(diss.get("kossakowski_im", np.zeros((k, k))), dtype=float).reshape(k, k)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"malformed model description: {exc}") from exc
        model = cls(n, ham, support, re + 1j * im)
        model.validate()
        return model

    @classmethod
    def load(cls, path: str | Path) -> Lindbladian:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read model file {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# -------------------------------------------------------------- graph tools
def dual_graph(components: Sequence[LindbladComponent]) -> DualGraph:
    """Components are adjacent when their qubit supports intersect."""
    masks = [c.support_mask for c in components]
    edges = []
    degree = [0] * len(components)
    for i in range(len(components)):
        for j in range(i + 1, len(components)):
            if masks[i] & masks[j]:
                edges.append((i, j))
                degree[i] += 1
                degree[j] += 1
    return DualGraph(tuple(components), tuple(edges), max(degree, default=0))


def _max_degree_from_masks(masks: Sequence[int]) -> int:
    """Maximum overlap degree, counting by distinct support mask for speed."""
    counts: dict[int, int] = {}
    for m in masks:
        counts[m] = counts.get(m, 0) + 1
    distinct = list(counts)
    best = 0
    for a in distinct:
        deg = counts[a] - 1
        for b in distinct:
            if b != a and a & b:
                deg += counts[b]
        best = max(best, deg)
    return best


def candidate_components(
    s_h: Iterable[PauliString],
    s_d: Sequence[PauliString],
    pairs: Iterable[tuple[int, int]] | None = None,
) -> list[LindbladComponent]:
    """Components induced by candidate supports.

    ``pairs`` lists the allowed off-diagonal index pairs ``(i, j)`` with
    ``i > j``; ``None`` means every pair. Each allowed pair contributes both
    orderings.
    """
    out = [LindbladComponent("H", (p,)) for p in s_h]
    s_d = list(s_d)
    out += [LindbladComponent("D", (p, p)) for p in s_d]
    if pairs is None:
        pairs = ((i, j) for i in range(len(s_d)) for j in range(i))
    for i, j in pairs:
        out.append(LindbladComponent("D", (s_d[i], s_d[j])))
        out.append(LindbladComponent("D", (s_d[j], s_d[i])))
    return out


def candidate_dual_degree(
    s_h: Iterable[PauliString],
    s_d: Sequence[PauliString],
    pairs: Iterable[tuple[int, int]] | None = None,
) -> int:
    comps = candidate_components(s_h, s_d, pairs)
    return _max_degree_from_masks([c.support_mask for c in comps])


def model_dual_degree(model: Lindbladian) -> int:
    return _max_degree_from_masks([c.support_mask for c in model.components()])


def lambda_bound(model: Lindbladian) -> float:
    """Smoothness scale: spectral range of H plus twice the Kossakowski l1 mass."""
    if not model.ham_terms:
        spread = 0.0
    elif model.n <= EXACT_SPECTRUM_MAX_QUBITS:
        evals = np.linalg.eigvalsh(model.hamiltonian_matrix())
        spread = float(evals[-1] - evals[0])
    else:
        spread = 2.0 * sum(abs(v) for v in model.ham_terms.values())
    return spread + 2.0 * float(np.sum(np.abs(model.kossakowski)))


# ------------------------------------------------------------ random models
def random_psd(size: int, diag: np.ndarray, rng: np.random.Generator, mixing: float = 0.7) -> np.ndarray:
    """Random PSD matrix with the prescribed diagonal."""
    if size == 0:
        return np.zeros((0, 0), dtype=complex)
    g = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    corr = g @ g.conj().T
    d = np.sqrt(np.real(np.diag(corr)))
    corr = corr / np.outer(d, d)
    corr = (1 - mixing) * np.eye(size) + mixing * corr
    s = np.sqrt(diag)
    return np.outer(s, s) * corr


def random_pauli(n: int, rng: np.random.Generator, max_weight: int | None = None) -> PauliString:
    max_weight = n if max_weight is None else min(max_weight, n)
    w = int(rng.integers(1, max_weight + 1))
    sites = sorted(rng.choice(n, size=w, replace=False).tolist())
    letters = rng.choice(list("XYZ"), size=w).tolist()
    return PauliString.from_sites(n, dict(zip(sites, letters)))


def random_lindbladian(
    n: int,
    rng: np.random.Generator,
    eta: float = 0.2,
    n_ham: tuple[int, int] = (1, 3),
    n_diss: tuple[int, int] = (1, 3),
    max_weight: int | None = 2,
) -> Lindbladian:
    """Random valid generator whose structural coefficients lie in ``[eta, 1]``.

    Hamiltonian coefficients have random signs and magnitudes in ``[eta, 1]``;
    the Kossakowski diagonal lies in ``[eta, 1]`` and the off-diagonal block
    comes from a random correlation matrix, so every entry has modulus at most 1.
    """

    def draw_distinct(count: int) -> list[PauliString]:
        seen: list[PauliString] = []
        while len(seen) < count:
            p = random_pauli(n, rng, max_weight)
            if p not in seen:
                seen.append(p)
        return seen

    limit = 4**n - 1
    k_h = min(int(rng.integers(n_ham[0], n_ham[1] + 1)), limit)
    k_d = min(int(rng.integers(n_diss[0], n_diss[1] + 1)), limit)
    ham_paulis = draw_distinct(k_h)
    ham = {p: float(rng.choice([-1, 1]) * rng.uniform(eta, 1.0)) for p in ham_paulis}
    support = draw_distinct(k_d)
    diag = rng.uniform(eta, 1.0, size=k_d)
    kos = random_psd(k_d, diag, rng)
    model = Lindbladian(n, ham, support, kos)
    model.validate()
    return model
