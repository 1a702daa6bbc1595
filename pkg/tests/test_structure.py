import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindlearn.errors import InvalidConfig
from lindlearn.model import random_lindbladian
from lindlearn.oracle import ChannelOracle, ExactPlusNoise
from lindlearn.pauli import PauliString
from lindlearn.structure import (
    chi_derivative_identities_check,
    combined_result,
    exact_chi_derivatives,
    learn_dissipator,
    learn_hamiltonian,
    learn_structure,
)

from .conftest import model_from, seeded_models


def P(label):
    return PauliString.from_label(label)


def labels(paulis):
    return {p.label for p in paulis}


def run(model, eta=0.2, backend=None, delta=0.05):
    oracle = ChannelOracle(model, backend)
    dis, ham = learn_structure(oracle, model.sparsity().M, eta, delta)
    return combined_result(dis, ham)


def test_dephasing_support(dephasing):
    res = learn_dissipator(ChannelOracle(dephasing), 1, 0.4)
    assert labels(res.s_d_hat) == {"Z"}
    assert res.chi_deriv1[P("Z")] == pytest.approx(0.5, abs=0.2)


def test_pure_hamiltonian_has_empty_dissipator(rabi):
    res = run(rabi, eta=0.25)
    assert res.s_d_hat == set()
    assert "X" in labels(res.s_h_hat)


def test_two_qubit_example(mixed_two_qubit):
    res = run(mixed_two_qubit)
    assert labels(res.s_d_hat) == {"XI", "ZZ"}
    assert {"YI", "XI", "ZZ"} <= labels(res.s_h_hat)


def test_pure_dissipator_enters_hamiltonian_superset(dephasing):
    ham = learn_hamiltonian(ChannelOracle(dephasing), 1, 0.4)
    assert "Z" in labels(ham.s_h_hat)


@pytest.mark.parametrize("model", seeded_models(8, base_seed=500), ids=lambda m: f"n{m.n}")
def test_recovers_support_on_random_models(model):
    res = run(model)
    assert res.s_d_hat == set(model.diss_support)
    assert set(model.ham_terms) <= res.s_h_hat
    assert res.s_d_hat <= res.s_h_hat


@pytest.mark.parametrize("model", seeded_models(4, base_seed=600), ids=lambda m: f"n{m.n}")
def test_bounded_noise_backend_recovers_support(model):
    res = run(model, backend=ExactPlusNoise(None, seed=3))
    assert res.s_d_hat == set(model.diss_support)
    assert set(model.ham_terms) <= res.s_h_hat


def test_superset_size_bound(mixed_two_qubit):
    oracle = ChannelOracle(mixed_two_qubit, ExactPlusNoise(None, seed=1))
    ham = learn_hamiltonian(oracle, mixed_two_qubit.sparsity().M, 0.2)
    s = ham.schedule
    assert len(ham.s_h_hat) <= (s.r + 1) * math.ceil(4 / s.eps_s)
    assert ham.queries_used == s.r + 1


def test_thresholds_are_monotone_in_eta(mixed_two_qubit):
    # a larger threshold can only drop Paulis from the estimated dissipator
    # when the derivatives are held fixed
    res = learn_dissipator(ChannelOracle(mixed_two_qubit), mixed_two_qubit.sparsity().M, 0.2)
    cuts = [0.1, 0.3, 0.55, 0.9]
    sets = [{p for p, v in res.chi_deriv1.items() if v > c} for c in cuts]
    assert all(b <= a for a, b in zip(sets, sets[1:]))


@pytest.mark.parametrize("eta, delta", [(0.0, 0.1), (1.5, 0.1), (0.2, 0.0), (0.2, 1.0)])
def test_rejects_bad_parameters(dephasing, eta, delta):
    with pytest.raises(InvalidConfig):
        learn_dissipator(ChannelOracle(dephasing), 1, eta, delta)


def test_exact_derivatives_closed_forms(dephasing, rabi):
    d1, d2 = exact_chi_derivatives(dephasing)
    # chi_Z(t) = (1 - e^{-t}) / 2 for dephasing rate 0.5 on one qubit
    assert d1[2] == pytest.approx(0.5) and d2[2] == pytest.approx(-0.5)
    d1, d2 = exact_chi_derivatives(rabi)
    # chi_X(t) = sin^2(t / 4)
    assert d1[1] == pytest.approx(0.0, abs=1e-12) and d2[1] == pytest.approx(0.125)


@pytest.mark.parametrize("model", seeded_models(6, base_seed=700), ids=lambda m: f"n{m.n}")
def test_identity_check_passes(model):
    rep = chi_derivative_identities_check(model)
    assert rep.ok, rep
    assert rep.max_slope_error <= 1e-4
    assert rep.max_zero_slope <= 1e-6
    assert rep.min_curvature_margin >= -1e-4


def test_identity_check_size_limit():
    with pytest.raises(InvalidConfig):
        chi_derivative_identities_check(model_from(4, {"XIII": 0.3}, [], np.zeros((0, 0))))


@settings(max_examples=10)
@given(st.integers(0, 2**31 - 1))
def test_slopes_are_nonnegative_error_rates(seed):
    model = random_lindbladian(2, np.random.default_rng(seed), eta=0.2)
    d1, _ = exact_chi_derivatives(model)
    assert d1[1:].min() >= -1e-12
    assert d1.sum() == pytest.approx(0.0, abs=1e-12)
