"""Coefficient recovery from a square patchwise Pauli design matrix.

Every probe ``(input, O)`` has a time-derivative at zero that is linear in
the unknown coefficients. The real parameter vector is

    x = h  (+)  diag(a)  (+)  Re a_ij  (+)  Im a_ij      (i > j),

and a probe with Pauli input ``X = Q / 2^n`` contributes the row

    h_k   : tr(i [P_k, O] X)
    a_ii  : tr(P_i O P_i X) - tr(O X)
    a_ij  : 2 Re c_ij  and  -2 Im c_ij,
            c_ij = tr(P_j O P_i X) - 1/2 tr({P_j P_i, O} X).

Probes are added one at a time and kept only when they raise the rank, so
the selected rows form a square invertible matrix ``C``. Solving
``C x = d`` amplifies derivative errors by at most
``nu = ||C^{-1}||_inf``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg as sla

from .chebyshev import ChebyshevSchedule, estimate_deriv1, params_first_factorial, schedule_from
from .errors import InvalidConfig, LocalityCapExceeded, RankStalled, ShotBudgetOverflow, Singular
from .evolution import PauliEigenstate, PauliInput, stable_rng
from .model import candidate_dual_degree
from .oracle import ChannelOracle
from .pauli import PHASES, PauliString, paulis_with_support, product
from .spam import SpamParams, probe_damping, spam_rescale

PIVOT_TOL = 1e-9
SHADOW_LOCALITY_CAP = 4
EPS_D_FLOOR = 1e-9


# ------------------------------------------------------------- candidates
@dataclass
class CandidateStructure:
    """Candidate supports plus the admitted off-diagonal Kossakowski pairs.

    ``pairs`` holds index pairs ``(i, j)`` with ``i > j`` into ``s_d``;
    ``None`` admits every pair.
    """

    s_h: list[PauliString]
    s_d: list[PauliString]
    pairs: list[tuple[int, int]] | None = None

    def __post_init__(self) -> None:
        self.s_h = list(self.s_h)
        self.s_d = list(self.s_d)
        if self.pairs is None:
            self.pairs = [(i, j) for i in range(len(self.s_d)) for j in range(i)]
        else:
            self.pairs = sorted({(max(i, j), min(i, j)) for i, j in self.pairs if i != j})
        ns = {p.n for p in self.s_h + self.s_d}
        if len(ns) > 1:
            raise InvalidConfig("candidate Paulis have different qubit counts")
        if any(p.is_identity for p in self.s_h + self.s_d):
            raise InvalidConfig("identity is not a valid candidate term")

    @classmethod
    def from_sets(cls, s_h: Iterable[PauliString], s_d: Iterable[PauliString]) -> CandidateStructure:
        return cls(sorted(set(s_h), key=lambda p: p.label), sorted(set(s_d), key=lambda p: p.label))

    @property
    def n(self) -> int:
        for p in self.s_h + self.s_d:
            return p.n
        raise InvalidConfig("empty candidate structure")

    @property
    def dimension(self) -> int:
        return len(self.s_h) + len(self.s_d) + 2 * len(self.pairs)

    def dual_degree(self) -> int:
        return candidate_dual_degree(self.s_h, self.s_d, self.pairs)


@dataclass(frozen=True)
class ParameterIndex:
    """Positions of every real unknown in the parameter vector."""

    s_h: tuple[PauliString, ...]
    s_d: tuple[PauliString, ...]
    pairs: tuple[tuple[int, int], ...]

    @classmethod
    def from_candidates(cls, cand: CandidateStructure) -> ParameterIndex:
        return cls(tuple(cand.s_h), tuple(cand.s_d), tuple(cand.pairs))

    @property
    def n_h(self) -> int:
        return len(self.s_h)

    @property
    def n_d(self) -> int:
        return len(self.s_d)

    @property
    def dimension(self) -> int:
        return self.n_h + self.n_d + 2 * len(self.pairs)

    def diag_pos(self, i: int) -> int:
        return self.n_h + i

    def re_pos(self, k: int) -> int:
        return self.n_h + self.n_d + k

    def im_pos(self, k: int) -> int:
        return self.n_h + self.n_d + len(self.pairs) + k

    def labels(self) -> list[str]:
        out = [f"h[{p.label}]" for p in self.s_h]
        out += [f"a[{p.label},{p.label}]" for p in self.s_d]
        out += [f"Re a[{self.s_d[i].label},{self.s_d[j].label}]" for i, j in self.pairs]
        out += [f"Im a[{self.s_d[i].label},{self.s_d[j].label}]" for i, j in self.pairs]
        return out

    def unpack(self, x: np.ndarray) -> tuple[dict[PauliString, float], np.ndarray]:
        h = {p: float(x[k]) for k, p in enumerate(self.s_h)}
        a = np.zeros((self.n_d, self.n_d), dtype=complex)
        for i in range(self.n_d):
            a[i, i] = x[self.diag_pos(i)]
        for k, (i, j) in enumerate(self.pairs):
            a[i, j] = x[self.re_pos(k)] + 1j * x[self.im_pos(k)]
            a[j, i] = np.conj(a[i, j])
        return h, a

    def pack(self, h: dict[PauliString, float], a_support: Sequence[PauliString], a: np.ndarray) -> np.ndarray:
        """Parameter vector of a model expressed over these candidates."""
        x = np.zeros(self.dimension)
        for k, p in enumerate(self.s_h):
            x[k] = h.get(p, 0.0)
        where = {p: i for i, p in enumerate(a_support)}

        def entry(p: PauliString, q: PauliString) -> complex:
            if p in where and q in where:
                return complex(a[where[p], where[q]])
            return 0.0

        for i, p in enumerate(self.s_d):
            x[self.diag_pos(i)] = entry(p, p).real
        for k, (i, j) in enumerate(self.pairs):
            v = entry(self.s_d[i], self.s_d[j])
            x[self.re_pos(k)] = v.real
            x[self.im_pos(k)] = v.imag
        return x


# ------------------------------------------------------------------ probes
@dataclass(frozen=True)
class Probe:
    input: PauliInput | PauliEigenstate
    observable: PauliString
    patch: frozenset[int]

    @property
    def q(self) -> PauliString:
        return self.input.pauli

    def tag(self) -> str:
        inp = self.input
        if isinstance(inp, PauliInput):
            head = f"in:{inp.pauli.label}"
        else:
            head = f"eig:{'+' if inp.sign > 0 else '-'}{inp.pauli.label}"
        return f"{head}|{self.observable.label}"


def pauli_input_probe(q: PauliString, o: PauliString) -> Probe:
    return Probe(PauliInput(q), o, q.support | o.support)


def patch_family(
    s_h: Iterable[PauliString], s_d: Sequence[PauliString], pairs: Iterable[tuple[int, int]] | None = None
) -> list[frozenset[int]]:
    """Supports of candidate terms and of candidate dissipator pairs."""
    s_d = list(s_d)
    out: set[frozenset[int]] = {p.support for p in s_h}
    out |= {p.support for p in s_d}
    if pairs is None:
        pairs = ((i, j) for i in range(len(s_d)) for j in range(i))
    out |= {s_d[i].support | s_d[j].support for i, j in pairs}
    return sorted(out, key=lambda s: (len(s), sorted(s)))


class DesignBuilder:
    """Computes design rows by Pauli algebra with vectorised term lookup."""

    def __init__(self, index: ParameterIndex):
        self.index = index
        self.n = (index.s_h + index.s_d)[0].n if (index.s_h or index.s_d) else 0
        self._h_pos = {p: k for k, p in enumerate(index.s_h)}
        self._d_pos = {p: k for k, p in enumerate(index.s_d)}
        self._pair_pos = {pair: k for k, pair in enumerate(index.pairs)}
        self._dx = np.array([p.x for p in index.s_d], dtype=np.int64)
        self._dz = np.array([p.z for p in index.s_d], dtype=np.int64)
        keys = (self._dx << self.n) | self._dz if index.s_d else np.zeros(0, dtype=np.int64)
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def _lookup(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        keys = (x << self.n) | z
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, max(len(self._sorted_keys) - 1, 0))
        found = self._sorted_keys[pos] == keys if len(self._sorted_keys) else np.zeros(len(keys), bool)
        return np.where(found, self._order[pos] if len(self._order) else -1, -1)

    def pauli_row(self, q: PauliString, o: PauliString) -> dict[int, float]:
        """Sparse row for the Pauli input ``Q / 2^n`` and observable ``O``."""
        idx = self.index
        row: dict[int, float] = {}
        # Hamiltonian: i [P, O] is proportional to Q only for P ~ Q O.
        _, pc = product(q, o)
        k = self._h_pos.get(pc)
        if k is not None:
            kp, r = product(pc, o)
            if kp % 2 == 1 and r == q:
                row[k] = (2j * PHASES[kp]).real
        if not idx.s_d:
            return row
        # Dissipator: c_ij can be nonzero only for P_i ~ P_j O Q.
        partners = self._lookup(self._dx ^ (q.x ^ o.x), self._dz ^ (q.z ^ o.z))
        js = np.flatnonzero(partners >= np.arange(len(partners)))
        if js.size == 0:
            return row
        iis = partners[js]
        ix, iz, jx, jz = self._dx[iis], self._dz[iis], self._dx[js], self._dz[js]
        c = _trace_phase_arr((jx, jz), (o.x, o.z), (ix, iz), (q.x, q.z)) - 0.5 * (
            _trace_phase_arr((jx, jz), (ix, iz), (o.x, o.z), (q.x, q.z))
            + _trace_phase_arr((o.x, o.z), (jx, jz), (ix, iz), (q.x, q.z))
        )
        for i, j, cij in zip(iis.tolist(), js.tolist(), c.tolist()):
            if cij == 0:
                continue
            if i == j:
                pos = idx.diag_pos(i)
                row[pos] = row.get(pos, 0.0) + cij.real
                continue
            kk = self._pair_pos.get((i, j))
            if kk is None:
                continue
            row[idx.re_pos(kk)] = row.get(idx.re_pos(kk), 0.0) + 2.0 * cij.real
            row[idx.im_pos(kk)] = row.get(idx.im_pos(kk), 0.0) - 2.0 * cij.imag
        return {key: v for key, v in row.items() if v != 0.0}

    def sparse_row(self, probe: Probe, spam: SpamParams | None = None) -> dict[int, float]:
        inp, o = probe.input, probe.observable
        damp_m = 1.0 if spam is None else spam.r_meas ** o.weight
        damp_p = 1.0 if spam is None else spam.r_prep ** inp.pauli.weight
        if isinstance(inp, PauliInput) and not inp.pauli.is_identity:
            return self.pauli_row(inp.pauli, o)
        ident = PauliString.identity(o.n)
        row = {k: damp_m * v for k, v in self.pauli_row(ident, o).items()}
        if inp.pauli.is_identity:
            return row
        for k, v in self.pauli_row(inp.pauli, o).items():
            row[k] = row.get(k, 0.0) + inp.sign * damp_m * damp_p * v
        return {k: v for k, v in row.items() if v != 0.0}

    def row(self, probe: Probe, spam: SpamParams | None = None) -> np.ndarray:
        out = np.zeros(self.index.dimension)
        for k, v in self.sparse_row(probe, spam).items():
            out[k] = v
        return out


def _trace_phase(*paulis: PauliString) -> complex:
    """Normalised trace ``2^-n tr(P_1 P_2 ... P_k)``."""
    acc_k = 0
    acc = paulis[0]
    for p in paulis[1:]:
        k, acc = product(acc, p)
        acc_k += k
    return PHASES[acc_k % 4] if acc.is_identity else 0.0


_PHASE_ARRAY = np.array(PHASES)


def _y_count_arr(x, z) -> np.ndarray:
    return np.bitwise_count(np.bitwise_and(x, z)).astype(np.int64)


def _trace_phase_arr(*factors: tuple) -> np.ndarray:
    """Vectorised normalised trace of a Pauli product that multiplies to
    a multiple of the identity (the label of the product is not checked)."""
    ax, az = (np.asarray(v, dtype=np.int64) for v in factors[0])
    k = np.zeros(np.broadcast(ax, az).shape, dtype=np.int64)
    for bx, bz in factors[1:]:
        bx = np.asarray(bx, dtype=np.int64)
        bz = np.asarray(bz, dtype=np.int64)
        cx, cz = ax ^ bx, az ^ bz
        k = k + _y_count_arr(ax, az) + _y_count_arr(bx, bz) + 2 * np.bitwise_count(az & bx) - _y_count_arr(cx, cz)
        ax, az = cx, cz
    return _PHASE_ARRAY[k % 4]


def _dissipator_trace(p_i: PauliString, p_j: PauliString, o: PauliString, q: PauliString) -> complex:
    return _trace_phase(p_j, o, p_i, q) - 0.5 * (_trace_phase(p_j, p_i, o, q) + _trace_phase(o, p_j, p_i, q))


def design_row(probe: Probe, index: ParameterIndex) -> np.ndarray:
    return DesignBuilder(index).row(probe)


# ---------------------------------------------------------------- pre-pass
_FLIP = {"X": "Y", "Y": "Z", "Z": "X"}


def prepass_probe(p: PauliString) -> Probe:
    """Probe isolating ``h_P`` in the absence of dissipation.

    The observable flips the letter of the first support site of ``P``
    (X -> Y -> Z -> X), so it anticommutes with ``P``. The input is the
    eigenstate of ``Q = i O P``, with the phase of that product folded into
    the eigenstate sign. Its derivative at zero equals ``-2 h_P``.
    """
    site = min(p.support)
    letters = p.restrict_letters()
    letters[site] = _FLIP[letters[site]]
    o = PauliString.from_sites(p.n, letters)
    k, r = product(o, p)
    sign = int(round((1j * PHASES[k]).real))
    return Probe(PauliEigenstate(r, sign), o, p.support)


def hamiltonian_prepass(s_h: Iterable[PauliString]) -> list[Probe]:
    return [prepass_probe(p) for p in s_h]


# --------------------------------------------------------- rank tracking
class RankTracker:
    """Incremental Gaussian elimination with partial pivoting.

    Basis rows are kept fully reduced (unit pivot, zeros in the other pivot
    columns), so reducing a new row costs one matrix-vector product.
    """

    def __init__(self, dim: int, tol: float = PIVOT_TOL):
        self.dim = dim
        self.tol = tol
        self.basis = np.zeros((max(dim, 1), dim))
        self.pivots: list[int] = []
        self.scale = 0.0
        self._pivot_cols = np.zeros(max(dim, 1), dtype=np.int64)
        self._pivot_row = np.full(max(dim, 1), -1, dtype=np.int64)

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def add(self, row: np.ndarray) -> bool:
        row = np.asarray(row, dtype=float)
        self.scale = max(self.scale, float(np.max(np.abs(row), initial=0.0)))
        r = self.rank
        if r == self.dim or self.scale == 0.0:
            return False
        v = row.copy()
        # Only basis rows whose pivot column is touched by v contribute.
        hit = self._pivot_row[np.flatnonzero(v)]
        hit = hit[hit >= 0]
        if hit.size:
            v -= v[self._pivot_cols[hit]] @ self.basis[hit]
        p = int(np.argmax(np.abs(v)))
        if abs(v[p]) <= self.tol * self.scale:
            return False
        v /= v[p]
        touched = np.flatnonzero(self.basis[:r, p])
        if touched.size:
            self.basis[touched] -= np.outer(self.basis[touched, p], v)
        self.basis[r] = v
        self.pivots.append(p)
        self._pivot_cols[r] = p
        self._pivot_row[p] = r
        return True


def conditioning_factor(c: np.ndarray) -> float:
    """``||C^{-1}||`` in the infinity norm (largest absolute row sum)."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] == 0:
        raise Singular("conditioning factor needs a nonempty square matrix")
    with warnings.catch_warnings():
        # exact singularity is reported below as Singular
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(c, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.min() <= PIVOT_TOL * max(diag.max(), 1e-300):
        raise Singular("design matrix is numerically singular")
    inv = sla.lu_solve((lu, piv), np.eye(c.shape[0]))
    return float(np.max(np.sum(np.abs(inv), axis=1)))


# ----------------------------------------------------------- selection
@dataclass
class DesignSystem:
    probes: list[Probe]
    matrix: np.ndarray
    param_index: ParameterIndex
    nu: float
    rank_trace: list[tuple[int, int]] = field(default_factory=list)
    attempts: int = 0
    prepass_gains: int = 0


class _Bucket:
    def __init__(self, patch: tuple[int, ...], k_obs: int, k_in: int, n: int):
        self.patch = patch
        self.k_obs = k_obs
        self.k_in = k_in
        self.n = n
        self._obs = [
            o for sites in itertools.combinations(patch, k_obs) for o in paulis_with_support(sites, n)
        ]
        self._ins = [
            q for sites in itertools.combinations(patch, k_in) for q in paulis_with_support(sites, n)
        ]
        self.size = len(self._obs) * len(self._ins)
        self._perm: np.ndarray | None = None
        self._cursor = 0

    def next(self, rng: np.random.Generator) -> tuple[PauliString, PauliString] | None:
        if self._perm is None:
            self._perm = rng.permutation(self.size)
        if self._cursor >= self.size:
            return None
        k = int(self._perm[self._cursor])
        self._cursor += 1
        o, q = divmod(k, len(self._ins))
        return self._ins[q], self._obs[o]


def _bucket_levels(patches: Sequence[frozenset[int]], n: int) -> list[list[_Bucket]]:
    levels: dict[int, list[_Bucket]] = {}
    for patch in patches:
        sites = tuple(sorted(patch))
        for k_obs in range(1, len(sites) + 1):
            for k_in in range(0, len(sites) + 1):
                levels.setdefault(k_obs + k_in, []).append(_Bucket(sites, k_obs, k_in, n))
    return [levels[k] for k in sorted(levels)]


def _probe_stream(
    cand: CandidateStructure, rng: np.random.Generator, include_prepass: bool = True
) -> Iterator[Probe]:
    """Pre-pass probes, then a round robin over (patch, locality) buckets in
    order of increasing total locality. Duplicates are skipped."""
    seen: set[tuple[PauliString, PauliString]] = set()
    if include_prepass:
        for probe in hamiltonian_prepass(cand.s_h):
            yield probe
    patches = patch_family(cand.s_h, cand.s_d, cand.pairs)
    for level in _bucket_levels(patches, cand.n):
        active = list(level)
        while active:
            still = []
            for bucket in active:
                while True:
                    nxt = bucket.next(rng)
                    if nxt is None:
                        break
                    if nxt in seen:
                        continue
                    seen.add(nxt)
                    q, o = nxt
                    yield Probe(PauliInput(q), o, frozenset(bucket.patch))
                    still.append(bucket)
                    break
            active = still


def select_probes(
    cand: CandidateStructure, seed: int = 0, oversample: int = 0, spam: SpamParams | None = None
) -> DesignSystem:
    """Grow a probe set until the design matrix is square and invertible."""
    index = ParameterIndex.from_candidates(cand)
    dim = index.dimension
    if dim < 1:
        raise InvalidConfig("no unknown coefficients")
    builder = DesignBuilder(index)
    tracker = RankTracker(dim)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E1EC7]))
    probes: list[Probe] = []
    rows: list[np.ndarray] = []
    extra_probes: list[Probe] = []
    extra_rows: list[np.ndarray] = []
    trace: list[tuple[int, int]] = []
    attempts = 0
    n_pre = len(cand.s_h)
    gains = 0
    for probe in _probe_stream(cand, rng):
        attempts += 1
        row = builder.row(probe, spam)
        if tracker.rank < dim:
            if tracker.add(row):
                probes.append(probe)
                rows.append(row)
                if attempts <= n_pre:
                    gains += 1
            trace.append((attempts, tracker.rank))
        elif len(extra_probes) < oversample and np.any(row):
            extra_probes.append(probe)
            extra_rows.append(row)
        if tracker.rank == dim and len(extra_probes) >= oversample:
            break
    if tracker.rank < dim:
        raise RankStalled(f"probe pool exhausted at rank {tracker.rank} of {dim}")
    matrix = np.array(rows)
    nu = conditioning_factor(matrix)
    system = DesignSystem(probes, matrix, index, nu, trace, attempts, gains)
    if oversample:
        system.probes = probes + extra_probes
        system.matrix = np.vstack([matrix] + extra_rows) if extra_rows else matrix
    return system


def full_probe_rank(cand: CandidateStructure) -> int:
    """Rank of the complete patchwise Pauli-input probe pool."""
    index = ParameterIndex.from_candidates(cand)
    builder = DesignBuilder(index)
    tracker = RankTracker(index.dimension)
    rng = np.random.default_rng(0)
    for probe in _probe_stream(cand, rng, include_prepass=False):
        tracker.add(builder.row(probe))
        if tracker.rank == index.dimension:
            break
    return tracker.rank


# --------------------------------------------------- derivative estimates
def derivative_schedule(cand: CandidateStructure, eps_d: float) -> ChebyshevSchedule:
    """Gauss-Chebyshev schedule for probe derivatives to accuracy ``eps_d``.

    The smoothness scale is twice the candidate dual-graph degree; a
    degenerate (zero-degree) graph falls back to twice the parameter count.
    """
    degree = cand.dual_degree()
    lam = 2.0 * degree if degree > 0 else 2.0 * cand.dimension
    return schedule_from(params_first_factorial(1.0, lam, max(eps_d, EPS_D_FLOOR)))


def estimate_probe_derivative(
    oracle: ChannelOracle, probe: Probe, schedule: ChebyshevSchedule, delta_s: float = 0.05
) -> float:
    samples = [
        oracle.expectation(probe.input, probe.observable, float(t), schedule.eps_s, delta_s, tag=f"{probe.tag()}#{m}")
        for m, t in enumerate(schedule.nodes)
    ]
    return float(estimate_deriv1(schedule, np.array(samples)))


def _shadow_pairs(probe: Probe) -> list[tuple[float, PauliString]]:
    """Pauli-input components of a probe as ``(weight, Q)`` pairs."""
    inp = probe.input
    if isinstance(inp, PauliInput):
        return [(1.0, inp.pauli)]
    ident = PauliString.identity(inp.pauli.n)
    if inp.pauli.is_identity:
        return [(1.0, ident)]
    return [(1.0, ident), (float(inp.sign), inp.pauli)]


def shadow_group_count(n_probes: int, delta_s: float) -> int:
    return math.ceil(8.0 * math.log(2.0 * n_probes / delta_s))


def shadow_estimate_all(
    oracle: ChannelOracle,
    probes: Sequence[Probe],
    t: float,
    eps_s: float,
    delta_s: float,
    seed: int | None = None,
    max_samples: int = 2**62,
) -> dict[Probe, float]:
    """Estimate every probe signal from one pool of randomized experiments.

    Each experiment prepares a random product of single-qubit Pauli
    eigenstates and measures every qubit in a random Pauli basis. For a pair
    ``(Q, O)`` the single-shot estimator is ``3^(w(O)+w(Q))`` times the
    input sign product and the measured parity when the bases match on the
    supports, and zero otherwise. It takes the values ``0`` and ``+-3^w``
    with probabilities fixed by the exact signal, so group means are drawn
    directly from that three-point law. The result is the median of
    ``ceil(8 ln(2 #probes / delta_s))`` group means.
    """
    if not probes:
        return {}
    pairs_per_probe = [_shadow_pairs(p) for p in probes]
    weights = []
    for probe, parts in zip(probes, pairs_per_probe):
        w_o = probe.observable.weight
        w_q = probe.q.weight
        if max(w_o, w_q) > SHADOW_LOCALITY_CAP:
            raise LocalityCapExceeded(f"probe {probe.tag()} exceeds locality {SHADOW_LOCALITY_CAP}")
        weights.append(max(w_o + q.weight for _, q in parts))
    groups = shadow_group_count(len(probes), delta_s)
    var = 3.0 ** max(weights)
    group_size = math.ceil(4.0 * var / eps_s**2)
    if group_size * groups > max_samples:
        raise ShotBudgetOverflow(f"shadow estimation needs {group_size * groups} experiments")
    oracle._count(queries=group_size * groups, shots=group_size * groups)
    base_seed = oracle.seed if seed is None else seed
    rng = stable_rng(base_seed, t, "shadow")
    out: dict[Probe, float] = {}
    for probe, parts in zip(probes, pairs_per_probe):
        total = 0.0
        for coef, q in parts:
            if q.is_identity:
                mu = oracle.eigenstate_value(q, 1, probe.observable, t)
            else:
                mu = oracle.pauli_input_value(q, probe.observable, t)
            w = probe.observable.weight + q.weight
            scale = 3.0**w
            p_match = 3.0**-w
            mu = min(1.0, max(-1.0, mu))
            probs = [p_match * (1 + mu) / 2, p_match * (1 - mu) / 2]
            probs.append(max(0.0, 1.0 - probs[0] - probs[1]))
            counts = rng.multinomial(group_size, probs, size=groups)
            means = scale * (counts[:, 0] - counts[:, 1]) / group_size
            total += coef * float(np.median(means))
        out[probe] = total
    return out


# ------------------------------------------------------------- top level
@dataclass
class CoefficientEstimate:
    h_hat: dict[PauliString, float]
    a_hat: np.ndarray
    s_d: list[PauliString]
    residual: float
    deriv_accuracy: float
    nu: float
    probes_used: int
    queries_used: int
    design: DesignSystem
    derivatives: np.ndarray
    x_hat: np.ndarray


def learn_coefficients(
    oracle: ChannelOracle,
    cand: CandidateStructure,
    eps: float,
    delta: float = 0.05,
    mode: str = "probe",
    seed: int = 0,
    spam: SpamParams | None = None,
    oversample: int = 0,
) -> CoefficientEstimate:
    """Estimate all candidate coefficients to accuracy ``eps`` (infinity norm).

    ``spam`` gives known retentions: Pauli-input data are rescaled by
    :func:`spam_rescale` and eigenstate rows carry the damping of each part.
    """
    if eps <= 0:
        raise InvalidConfig("eps must be positive")
    if mode not in ("probe", "shadow"):
        raise InvalidConfig(f"unknown mode {mode!r}")
    system = select_probes(cand, seed=seed, oversample=oversample, spam=spam)
    eps_d = max(eps / system.nu, EPS_D_FLOOR)
    schedule = derivative_schedule(cand, eps_d)
    start = oracle.queries
    probes = system.probes
    delta_s = delta / ((schedule.r + 1) * max(len(probes), 1))
    if mode == "probe":
        derivs = np.array([estimate_probe_derivative(oracle, p, schedule, delta_s) for p in probes])
    else:
        table = np.zeros((schedule.r + 1, len(probes)))
        for m, t in enumerate(schedule.nodes):
            est = shadow_estimate_all(oracle, probes, float(t), schedule.eps_s, delta / (schedule.r + 1), seed=seed)
            table[m] = [est[p] for p in probes]
        derivs = np.atleast_1d(estimate_deriv1(schedule, table))
    if spam is not None:
        derivs = np.array(
            [
                spam_rescale(d, p.q, p.observable, spam) if isinstance(p.input, PauliInput) and not p.q.is_identity
                else d
                for d, p in zip(derivs, probes)
            ]
        )
    c = system.matrix
    if c.shape[0] == c.shape[1]:
        x = sla.lu_solve(sla.lu_factor(c), derivs)
    else:
        x = np.linalg.solve(c.T @ c, c.T @ derivs)
    residual = float(np.max(np.abs(c @ x - derivs)))
    h_hat, a_hat = system.param_index.unpack(x)
    return CoefficientEstimate(
        h_hat=h_hat,
        a_hat=a_hat,
        s_d=list(cand.s_d),
        residual=residual,
        deriv_accuracy=eps_d,
        nu=system.nu,
        probes_used=len(probes),
        queries_used=oracle.queries - start,
        design=system,
        derivatives=derivs,
        x_hat=x,
    )


__all__ = [
    "CandidateStructure",
    "CoefficientEstimate",
    "DesignBuilder",
    "DesignSystem",
    "ParameterIndex",
    "Probe",
    "RankTracker",
    "conditioning_factor",
    "derivative_schedule",
    "design_row",
    "estimate_probe_derivative",
    "full_probe_rank",
    "hamiltonian_prepass",
    "learn_coefficients",
    "patch_family",
    "pauli_input_probe",
    "prepass_probe",
    "probe_damping",
    "select_probes",
    "shadow_estimate_all",
]
