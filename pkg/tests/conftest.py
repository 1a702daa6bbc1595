"""Shared fixtures and brute-force dense references.

The helpers here build Pauli matrices, generators and channels directly from
2x2 matrices and Kronecker products, without going through the library's
symplectic code, so they serve as independent references in the tests.
"""

from __future__ import annotations

import functools
import os

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import HealthCheck, settings

from lindlearn.model import Lindbladian, random_lindbladian

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@functools.lru_cache(maxsize=4096)
def _dense_cached(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, SINGLE[ch])
    return out


def dense(label: str) -> np.ndarray:
    """Matrix of a Pauli label, qubit 0 leftmost in the Kronecker product."""
    return _dense_cached(label).copy()


def all_labels(n: int) -> list[str]:
    import itertools

    return ["".join(t) for t in itertools.product("IXYZ", repeat=n)]


def dense_adjoint(model: Lindbladian, obs: np.ndarray) -> np.ndarray:
    """Heisenberg generator applied to a dense observable."""
    out = np.zeros_like(obs, dtype=complex)
    for p, h in model.ham_terms.items():
        pm = dense(p.label)
        out += 1j * h * (pm @ obs - obs @ pm)
    mats = [dense(p.label) for p in model.diss_support]
    for k, pk in enumerate(mats):
        for m, pm in enumerate(mats):
            a = model.kossakowski[k, m]
            if a == 0:
                continue
            prod = pm @ pk
            out += a * (pm @ obs @ pk - 0.5 * (prod @ obs + obs @ prod))
    return out


def dense_generator(model: Lindbladian) -> np.ndarray:
    """Schrodinger-picture generator as a matrix on row-major vectorised states."""
    d = 2**model.n
    eye = np.eye(d)
    gen = np.zeros((d * d, d * d), dtype=complex)
    for p, h in model.ham_terms.items():
        hm = h * dense(p.label)
        gen += -1j * (np.kron(hm, eye) - np.kron(eye, hm.T))
    mats = [dense(p.label) for p in model.diss_support]
    for k, pk in enumerate(mats):
        for m, pm in enumerate(mats):
            a = model.kossakowski[k, m]
            if a == 0:
                continue
            prod = pm @ pk
            gen += a * (np.kron(pk, pm.T) - 0.5 * (np.kron(prod, eye) + np.kron(eye, prod.T)))
    return gen


def dense_channel(model: Lindbladian, t: float) -> np.ndarray:
    return sla.expm(t * dense_generator(model))


def apply_channel(channel: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (channel @ rho.reshape(-1)).reshape(d, d)


def dense_fidelity(model: Lindbladian, label: str, t: float) -> float:
    """``2^-n tr(Q E_t(Q))`` from the dense channel."""
    q = dense(label)
    out = apply_channel(dense_channel(model, t), q)
    return float(np.trace(q @ out).real / q.shape[0])


def dense_heisenberg_coeff(model: Lindbladian, q_label: str, o_label: str, t: float) -> float:
    """``2^-n tr(Q E_t^dagger(O))`` computed as ``2^-n tr(O E_t(Q))``."""
    q = dense(q_label)
    o = dense(o_label)
    out = apply_channel(dense_channel(model, t), q)
    return float(np.trace(o @ out).real / q.shape[0])


def model_from(n: int, ham: dict[str, float], support: list[str], koss) -> Lindbladian:
    return Lindbladian.from_labels(ham, support, np.asarray(koss, dtype=complex), n)


@pytest.fixture
def dephasing() -> Lindbladian:
    return model_from(1, {}, ["Z"], [[0.5]])


@pytest.fixture
def rabi() -> Lindbladian:
    return model_from(1, {"X": 0.25}, [], np.zeros((0, 0)))


@pytest.fixture
def mixed_two_qubit() -> Lindbladian:
    return model_from(2, {"YI": 0.7}, ["XI", "ZZ"], [[0.6, 0.0], [0.0, 0.5]])


def seeded_models(count: int, n_max: int = 3, base_seed: int = 0, eta: float = 0.2):
    """Deterministic random models with sizes cycling through 1..n_max."""
    out = []
    for k in range(count):
        rng = np.random.default_rng(base_seed + k)
        n = 1 + k % n_max
        out.append(random_lindbladian(n, rng, eta=eta))
    return out


# ------------------------------------------------------- criterion summary
_CRITERIA: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "details": []})
        entry["passed"] &= bool(rep.passed)
        entry["details"] += [v for k, v in rep.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["passed"] else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"{status} criterion {number}: {entry['title']}" + (f" ({detail})" if detail else ""))
