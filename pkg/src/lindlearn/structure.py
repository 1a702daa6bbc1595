"""Support recovery from short-time derivatives of Pauli error rates.

For a non-identity Pauli ``P`` the error rate ``chi_P(t)`` starts at zero
with slope equal to the diagonal Kossakowski entry ``a_PP``. When that slope
vanishes, the curvature is at least ``2 h_P^2``. Thresholding Chebyshev
estimates of both derivatives therefore recovers the dissipator support
exactly and a superset of the Hamiltonian support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chebyshev import (
    ChebyshevSchedule,
    estimate_deriv1,
    estimate_deriv2,
    params_first,
    params_second,
    schedule_from,
)
from .errors import InvalidConfig
from .evolution import AdjointPTM, ChiDiagonal, fidelities_to_chi
from .model import Lindbladian, lambda_bound
from .oracle import ChannelOracle
from .pauli import PauliString, all_paulis


@dataclass
class StructureResult:
    s_d_hat: set[PauliString] = field(default_factory=set)
    s_h_hat: set[PauliString] = field(default_factory=set)
    chi_deriv1: dict[PauliString, float] = field(default_factory=dict)
    chi_deriv2: dict[PauliString, float] = field(default_factory=dict)
    queries_used: int = 0
    schedule: ChebyshevSchedule | None = None
    node_rates: list[ChiDiagonal] = field(default_factory=list)


def _default_lambda(M: int, lam: float | None) -> float:
    if lam is not None:
        if lam <= 0:
            raise InvalidConfig("Lambda must be positive")
        return float(lam)
    if M < 1:
        raise InvalidConfig("sparsity M must be at least 1")
    return 2.0 * M


def _check(eta: float, delta: float) -> None:
    if not 0 < eta <= 1:
        raise InvalidConfig(f"eta={eta} must lie in (0, 1]")
    if not 0 < delta < 1:
        raise InvalidConfig(f"delta={delta} must lie in (0, 1)")


def _sample_nodes(
    oracle: ChannelOracle, schedule: ChebyshevSchedule, delta: float, tag: str
) -> tuple[list[ChiDiagonal], list[PauliString], np.ndarray]:
    """Query every node; return the candidate pool and its sample matrix."""
    delta_s = delta / (schedule.r + 1)
    rates = [
        oracle.query_chi_rates(float(t), schedule.eps_s, delta_s, tag=f"{tag}:{m}")
        for m, t in enumerate(schedule.nodes)
    ]
    pool: dict[PauliString, None] = {}
    for chi in rates:
        for p in chi.entries:
            if not p.is_identity:
                pool[p] = None
    order = sorted(pool, key=lambda p: p.index)
    samples = np.array([[chi.get(p) for p in order] for chi in rates]).reshape(len(rates), len(order))
    return rates, order, samples


def learn_dissipator(
    oracle: ChannelOracle, M: int, eta: float, delta: float = 0.05, lam: float | None = None
) -> StructureResult:
    """Dissipator support: Paulis whose error-rate slope exceeds ``eta/2``."""
    _check(eta, delta)
    schedule = schedule_from(params_first(1.0, _default_lambda(M, lam), eta / 2.0))
    start = oracle.queries
    rates, pool, samples = _sample_nodes(oracle, schedule, delta, "dissipator")
    d1 = estimate_deriv1(schedule, samples) if pool else np.zeros(0)
    deriv1 = dict(zip(pool, np.atleast_1d(d1).tolist()))
    s_d = {p for p, v in deriv1.items() if v > eta / 2.0}
    return StructureResult(
        s_d_hat=s_d,
        s_h_hat=set(),
        chi_deriv1=deriv1,
        queries_used=oracle.queries - start,
        schedule=schedule,
        node_rates=rates,
    )


def learn_hamiltonian(
    oracle: ChannelOracle, M: int, eta: float, delta: float = 0.05, lam: float | None = None
) -> StructureResult:
    """Hamiltonian superset: curvature above ``eta^2`` or slope above ``eta/2``."""
    _check(eta, delta)
    schedule = schedule_from(params_second(1.0, _default_lambda(M, lam), eta**2))
    start = oracle.queries
    rates, pool, samples = _sample_nodes(oracle, schedule, delta, "hamiltonian")
    if pool:
        d1 = np.atleast_1d(estimate_deriv1(schedule, samples))
        d2 = np.atleast_1d(estimate_deriv2(schedule, samples))
    else:
        d1 = d2 = np.zeros(0)
    deriv1 = dict(zip(pool, d1.tolist()))
    deriv2 = dict(zip(pool, d2.tolist()))
    s_h = {p for p in pool if deriv2[p] > eta**2 or deriv1[p] > eta / 2.0}
    return StructureResult(
        s_d_hat=set(),
        s_h_hat=s_h,
        chi_deriv1=deriv1,
        chi_deriv2=deriv2,
        queries_used=oracle.queries - start,
        schedule=schedule,
        node_rates=rates,
    )


def learn_structure(
    oracle: ChannelOracle, M: int, eta: float, delta: float = 0.05, lam: float | None = None
) -> tuple[StructureResult, StructureResult]:
    """Run both stages; the failure budget is split evenly between them."""
    dis = learn_dissipator(oracle, M, eta, delta / 2.0, lam)
    ham = learn_hamiltonian(oracle, M, eta, delta / 2.0, lam)
    return dis, ham


def combined_result(dis: StructureResult, ham: StructureResult) -> StructureResult:
    """Merge the two stages into one record with ``s_d_hat`` inside ``s_h_hat``."""
    return StructureResult(
        s_d_hat=set(dis.s_d_hat),
        s_h_hat=set(ham.s_h_hat) | set(dis.s_d_hat),
        chi_deriv1=dict(dis.chi_deriv1),
        chi_deriv2=dict(ham.chi_deriv2),
        queries_used=dis.queries_used + ham.queries_used,
        schedule=ham.schedule,
    )


@dataclass
class IdentityReport:
    ok: bool
    max_slope_error: float
    max_zero_slope: float
    min_curvature_margin: float
    slope: dict[PauliString, float]
    curvature: dict[PauliString, float]


def exact_chi_derivatives(model: Lindbladian, order: int = 2) -> list[np.ndarray]:
    """Exact derivatives of every Pauli error rate at ``t = 0``.

    The ``k``-th derivative of the fidelity of ``Q`` is the ``Q`` coefficient
    of the adjoint generator applied ``k`` times to ``Q``; error rates follow
    by the linear fidelity-to-rate transform.
    """
    a = AdjointPTM(model).full_matrix().toarray()
    out = []
    power = np.eye(a.shape[0], dtype=complex)
    for _ in range(order):
        power = a @ power
        out.append(fidelities_to_chi(np.real(np.diag(power)), model.n))
    return out


def chi_derivative_identities_check(
    model: Lindbladian, tol_slope: float = 1e-4, tol_zero: float = 1e-6, tol_curv: float = 1e-4
) -> IdentityReport:
    """Fit error-rate derivatives and compare them with the generator entries."""
    if model.n > 3:
        raise InvalidConfig("identity check is limited to n <= 3")
    oracle = ChannelOracle(model)
    lam = max(lambda_bound(model), 1e-3)
    schedule = schedule_from((1.0 / (2.0 * lam), 24, 0.0))
    paulis = all_paulis(model.n)
    samples = np.array([oracle.chi_exact(float(t)) for t in schedule.nodes])
    d1 = estimate_deriv1(schedule, samples)
    d2 = estimate_deriv2(schedule, samples)
    diag = {p: float(np.real(model.kossakowski[i, i])) for i, p in enumerate(model.diss_support)}
    slope_err = 0.0
    zero_slope = 0.0
    curv_margin = np.inf
    ok = True
    for i, p in enumerate(paulis):
        if p.is_identity:
            continue
        a_pp = diag.get(p, 0.0)
        if a_pp > 0:
            err = abs(d1[i] - a_pp)
            slope_err = max(slope_err, err)
            ok &= err <= tol_slope
        else:
            zero_slope = max(zero_slope, abs(d1[i]))
            h = model.ham_terms.get(p, 0.0)
            margin = d2[i] - 2 * h * h
            curv_margin = min(curv_margin, margin)
            ok &= abs(d1[i]) <= tol_zero and margin >= -tol_curv
    return IdentityReport(
        ok=bool(ok),
        max_slope_error=float(slope_err),
        max_zero_slope=float(zero_slope),
        min_curvature_margin=float(curv_margin),
        slope=dict(zip(paulis, d1.tolist())),
        curvature=dict(zip(paulis, d2.tolist())),
    )
