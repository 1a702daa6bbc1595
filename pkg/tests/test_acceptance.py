"""Acceptance checks, one group of tests per criterion.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured figures.
"""

import hashlib
import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla

import lindlearn.cli as cli
from lindlearn.chebyshev import (
    MAX_DEGREE,
    estimate_deriv1,
    estimate_deriv2,
    make_schedule,
    params_first,
    params_first_factorial,
    params_second,
    schedule_from,
)
from lindlearn.coefficients import (
    CandidateStructure,
    estimate_probe_derivative,
    full_probe_rank,
    learn_coefficients,
    pauli_input_probe,
    select_probes,
)
from lindlearn.evolution import AdjointPTM, evolve_observable, fidelities_to_chi
from lindlearn.lattice import DEFAULT_LATTICES
from lindlearn.lowerbound import (
    BalancedPauliSet,
    build_L,
    evolve_state,
    mixing_certificate,
    n_anticommuting_closed_form,
    n_star,
    pauli_coefficients,
    random_product_state,
    t0_kappa,
    trace_distance_l1,
)
from lindlearn.model import lambda_bound, model_dual_degree
from lindlearn.oracle import ChannelOracle, ExactPlusNoise, Sampled
from lindlearn.pauli import PauliString, all_paulis
from lindlearn.spam import SpamParams, probe_damping
from lindlearn.structure import chi_derivative_identities_check, combined_result, learn_structure

from .conftest import all_labels, dense, seeded_models

BASELINE = Path(__file__).parent / "baselines" / "condition_sweep.json"
MODEL_FILE = Path(__file__).resolve().parents[1] / "models" / "dephasing.json"

MODELS = seeded_models(50, base_seed=10_000)


def true_candidates(model):
    return CandidateStructure.from_sets(set(model.ham_terms) | set(model.diss_support), model.diss_support)


def coefficient_error(model, est, cand):
    return cli.coefficient_error(model, est, cand)


# -------------------------------------------------------------- criterion 1
@pytest.mark.criterion(1, "error-rate derivative identities on 50 models")
def test_chi_derivative_identities(record_property):
    start = time.perf_counter()
    reports = [chi_derivative_identities_check(m, tol_slope=1e-4, tol_zero=1e-6, tol_curv=1e-4) for m in MODELS]
    elapsed = time.perf_counter() - start
    slope = max(r.max_slope_error for r in reports)
    zero = max(r.max_zero_slope for r in reports)
    margin = min(r.min_curvature_margin for r in reports)
    record_property("detail", f"{sum(r.ok for r in reports)}/50 ok, slope err {slope:.1e}, "
                              f"zero slope {zero:.1e}, curvature margin {margin:.1e}, {elapsed:.1f}s")
    assert all(r.ok for r in reports)
    assert slope <= 1e-4 and zero <= 1e-6 and margin >= -1e-4
    assert elapsed < 60


# -------------------------------------------------------------- criterion 2
@pytest.mark.criterion(2, "structure learning soundness, exact and bounded-noise backends")
def test_structure_soundness(record_property):
    start = time.perf_counter()
    good = {"exact": 0, "noise": 0}
    for k, model in enumerate(MODELS):
        assert min(abs(v) for v in model.ham_terms.values()) >= 0.2
        assert np.real(np.diag(model.kossakowski)).min() >= 0.2
        for name, backend in (("exact", None), ("noise", ExactPlusNoise(None, seed=k))):
            dis, ham = learn_structure(ChannelOracle(model, backend), model.sparsity().M, 0.2)
            res = combined_result(dis, ham)
            good[name] += res.s_d_hat == set(model.diss_support) and set(model.ham_terms) <= res.s_h_hat
    elapsed = time.perf_counter() - start
    record_property("detail", f"exact {good['exact']}/50, noise {good['noise']}/50, {elapsed:.1f}s")
    assert good == {"exact": 50, "noise": 50}
    assert elapsed < 300


# -------------------------------------------------------------- criterion 3
def _exp_case(rng):
    lam_max = rng.uniform(0.5, 4.0)
    lam = rng.uniform(-lam_max, lam_max)
    # |f^(k)| <= lam_max^k e^{lam_max tau} <= e^{1/2} lam_max^k on the window
    return (lambda t: math.exp(lam * t)), lam, lam * lam, math.exp(0.5), lam_max


def _sin_case(rng):
    omega = rng.uniform(0.1, 2.0)
    # sin^2(w t) = (1 - cos 2 w t) / 2 has |f^(k)| <= (2 w)^k / 2
    return (lambda t: math.sin(omega * t) ** 2), 0.0, 2 * omega**2, 0.5, 2 * omega


def _trial(kind, rng):
    """One guarantee trial with worst-case node noise; returns (error, eps)."""
    eps = float(rng.uniform(0.01, 0.2))
    if kind == "rational":
        lam = rng.uniform(0.5, 4.0)
        slope = rng.uniform(0.05, 1.0 / 3.0) * lam
        # f = 1/(1 - 2 s t); on [0, 1/(2 lam)] its k-th derivative is at
        # most B lam^k k! with B = 1/(1 - s/lam) whenever s <= lam/3
        bound = 1.0 / (1.0 - slope / lam)
        s = schedule_from(params_first_factorial(bound, lam, eps))
        clean = np.array([1.0 / (1.0 - 2 * slope * t) for t in s.nodes])
        noisy = clean + s.eps_s * np.sign(s.weights1)
        return abs(estimate_deriv1(s, noisy) - 2 * slope), eps
    order = 1 if kind.endswith("1") else 2
    f, d1, d2, bound, lam = (_exp_case if kind.startswith("exp") else _sin_case)(rng)
    params = params_first if order == 1 else params_second
    s = schedule_from(params(bound, lam, eps))
    weights = s.weights1 if order == 1 else s.weights2
    noisy = np.array([f(t) for t in s.nodes]) + s.eps_s * np.sign(weights) * rng.choice([-1, 1])
    est = estimate_deriv1(s, noisy) if order == 1 else estimate_deriv2(s, noisy)
    return abs(est - (d1 if order == 1 else d2)), eps


@pytest.mark.criterion(3, "derivative estimator guarantees and node spacing")
def test_chebyshev_guarantees(record_property):
    rng = np.random.default_rng(3)
    kinds = ["exp1", "exp2", "sin1", "sin2", "rational"]
    results = [_trial(kinds[k % len(kinds)], rng) for k in range(100)]
    met = sum(err <= eps for err, eps in results)
    worst = max(err / eps for err, eps in results)
    spacing = all(make_schedule(1.0, r).min_spacing >= 2.0 / (r + 1) ** 2 for r in range(2, MAX_DEGREE + 1))
    record_property("detail", f"{met}/100 trials within target, worst error/target {worst:.2e}, "
                              f"spacing ok for r<=64: {spacing}")
    assert met == 100
    assert spacing


# -------------------------------------------------------------- criterion 4
@pytest.mark.criterion(4, "coefficient round trip")
def test_coefficients_exact_and_bounded_noise(record_property):
    start = time.perf_counter()
    exact_err, noise_err = [], []
    for k, model in enumerate(MODELS):
        cand = true_candidates(model)
        # The exact backend still needs a finite schedule; 0.05 keeps the
        # degree under the cap and the interpolation error far below 1e-6.
        est = learn_coefficients(ChannelOracle(model), cand, 0.05)
        exact_err.append(coefficient_error(model, est, cand))
        noisy = ChannelOracle(model, ExactPlusNoise(None, seed=k))
        est = learn_coefficients(noisy, cand, 0.05, seed=k)
        noise_err.append(coefficient_error(model, est, cand))
    elapsed = time.perf_counter() - start
    record_property("detail", f"exact max err {max(exact_err):.1e}, noise max err {max(noise_err):.1e} "
                              f"(target 0.05), {elapsed:.1f}s")
    assert max(exact_err) <= 1e-6
    assert max(noise_err) <= 0.05
    assert elapsed < 900


@pytest.mark.criterion(4, "coefficient round trip")
def test_coefficients_sampled(record_property):
    start = time.perf_counter()
    models = seeded_models(100, base_seed=30_000)
    errs = []
    for k, model in enumerate(models):
        cand = true_candidates(model)
        est = learn_coefficients(ChannelOracle(model, Sampled(seed=k)), cand, 0.1, seed=k)
        errs.append(coefficient_error(model, est, cand))
    good = sum(e <= 0.1 for e in errs)
    elapsed = time.perf_counter() - start
    record_property("detail", f"sampled {good}/100 within 0.1, {elapsed:.1f}s")
    assert good >= 90
    assert elapsed < 900


# -------------------------------------------------------------- criterion 5
def _random_structure(k):
    rng = np.random.default_rng(20_000 + k)
    n = 1 + k % 3
    pool = all_paulis(n)[1:]
    s_h = [pool[i] for i in rng.choice(len(pool), size=int(rng.integers(1, min(6, len(pool)) + 1)), replace=False)]
    s_d = [pool[i] for i in rng.choice(len(pool), size=int(rng.integers(1, min(4, len(pool)) + 1)), replace=False)]
    return CandidateStructure.from_sets(s_h, s_d)


@pytest.mark.criterion(5, "injectivity of the patchwise probe pool")
def test_injectivity(record_property):
    full, square = 0, 0
    for k in range(25):
        cand = _random_structure(k)
        dim = len(cand.s_h) + len(cand.s_d) ** 2
        assert cand.dimension == dim
        full += full_probe_rank(cand) == dim
        system = select_probes(cand, seed=k)
        square += system.matrix.shape == (dim, dim) and np.linalg.matrix_rank(system.matrix) == dim
    record_property("detail", f"full pool rank {full}/25, square full-rank selection {square}/25")
    assert full == 25 and square == 25


# -------------------------------------------------------------- criterion 6
def _trace_digest(trace):
    return hashlib.sha256(json.dumps(trace).encode()).hexdigest()


@pytest.mark.slow
@pytest.mark.criterion(6, "conditioning sweep on periodic lattices, pinned baseline")
def test_condition_sweep(record_property):
    threads = max(1, min(os.cpu_count() or 1, 8))
    results = cli.condition_sweep(DEFAULT_LATTICES, 16, threads)
    runs = [
        {
            "lx": r["lx"], "ly": r["ly"], "seed": r["seed"], "dimension": r["dimension"],
            "attempts": r["attempts"], "nu": r["nu"], "trace_sha256": _trace_digest(r["trace"]),
        }
        for r in results
    ]
    assert len(runs) == 64
    assert all(math.isfinite(r["nu"]) and r["nu"] > 0 for r in runs)
    assert all(r["trace"][-1][1] == r["dimension"] for r in results)
    created = not BASELINE.exists()
    if created:
        BASELINE.parent.mkdir(parents=True, exist_ok=True)
        BASELINE.write_text(json.dumps({"seeds": 16, "runs": runs}, indent=1, sort_keys=True) + "\n")
    pinned = json.loads(BASELINE.read_text())["runs"]
    assert len(pinned) == len(runs)
    for new, old in zip(runs, pinned):
        assert {k: new[k] for k in new if k != "nu"} == {k: old[k] for k in old if k != "nu"}
        assert new["nu"] == pytest.approx(old["nu"], rel=1e-9)
    by_n = {}
    for r in runs:
        by_n.setdefault(r["lx"] * r["ly"], []).append(r["nu"])
    summary = ", ".join(f"n={n}: nu {min(v):.3g}..{max(v):.3g}" for n, v in sorted(by_n.items()))
    record_property("detail", f"64/64 full rank, {summary}, baseline {'created' if created else 'matched'}")


# -------------------------------------------------------------- criterion 7
def _generator_powers(model, order):
    a = AdjointPTM(model).full_matrix().toarray().real
    out, power = [], np.eye(a.shape[0])
    for _ in range(order):
        power = a @ power
        out.append(power)
    return a, out


@pytest.mark.criterion(7, "derivative and Liouville-norm bounds")
def test_derivative_bounds(record_property):
    chi_ratio = obs_ratio = literal_ratio = norm_ratio = 0.0
    for k, model in enumerate(MODELS):
        assert model.max_coefficient() <= 1.0
        lam = lambda_bound(model)
        a, powers = _generator_powers(model, 4)
        # error-rate derivatives d^k chi/dt^k = WHT(diag(A^k e^{tA})), over the window
        for t in np.linspace(0.0, 1.0 / (2 * lam), 5):
            prop = sla.expm(t * a)
            for order in (1, 2, 3):
                chi = fidelities_to_chi(np.diag(powers[order - 1] @ prop), model.n)
                chi_ratio = max(chi_ratio, float(np.abs(chi).max()) / lam**order)
        # observable derivatives at t = 0 on random product states:
        # d^k <O>/dt^k = tr(rho L^dagger^k (O)), a column of A^k
        degree = model_dual_degree(model)
        rng = np.random.default_rng(k)
        for _ in range(3):
            coeff = pauli_coefficients(random_product_state(model.n, rng), model.n)
            for order in (1, 2, 3, 4):
                vals = np.abs(coeff @ powers[order - 1])[1:]
                scale = math.factorial(order)
                obs_ratio = max(obs_ratio, vals.max() / ((2 * (degree + 1)) ** order * scale))
                if degree:
                    literal_ratio = max(literal_ratio, vals.max() / ((2 * degree) ** order * scale))
        if model.n <= 3:
            norm = np.linalg.norm(model.liouville_matrix(), 2)
            assert lam <= 2 * model.sparsity().M + 1e-12
            norm_ratio = max(norm_ratio, norm / lam)
    record_property(
        "detail",
        f"max |chi^(k)|/Lambda^k {chi_ratio:.3f}, max |<O>^(k)|/((2(d+1))^k k!) {obs_ratio:.3f} "
        f"[literal (2d)^k k! ratio {literal_ratio:.3f}], max ||L||/Lambda {norm_ratio:.3f}",
    )
    assert chi_ratio <= 1.0
    assert obs_ratio <= 1.0
    assert norm_ratio <= 1.0 + 1e-9


# -------------------------------------------------------------- criterion 8
def _dense_count(q_label, n, kappa):
    q = dense(q_label)
    count = 0
    for letters in itertools.product("IXYZ", repeat=n):
        if sum(ch != "I" for ch in letters) == kappa:
            p = dense("".join(letters))
            count += np.allclose(p @ q, -q @ p)
    return count


@pytest.mark.criterion(8, "lower-bound lab")
def test_lowerbound_lab(record_property):
    checked = 0
    for n, kappa in [(2, 2), (3, 2), (4, 2), (4, 3)]:
        for label in all_labels(n)[1:]:
            q = PauliString.from_label(label)
            assert _dense_count(label, n, kappa) == n_anticommuting_closed_form(q, n, kappa)
            checked += 1
    n, kappa = 4, 2
    t0 = t0_kappa(n, kappa)
    assert t0 == pytest.approx(0.2195, abs=5e-5)
    null = build_L(n, kappa)
    rng = np.random.default_rng(8)
    worst_l1 = 0.0
    for _ in range(20):
        rho = random_product_state(n, rng)
        cert = mixing_certificate(null, rho, t0, kappa)
        assert cert.holds
        l1 = trace_distance_l1(evolve_state(null, rho, t0), np.eye(2**n) / 2**n)
        worst_l1 = max(worst_l1, l1)
    assert worst_l1 <= 2.0**-n
    ptm = AdjointPTM(null)
    decay_err = 0.0
    for q in all_paulis(n)[1:]:
        vec = evolve_observable(ptm, 0.3, q)
        expected = math.exp(-2 * n_anticommuting_closed_form(q, n, kappa) * 0.3)
        decay_err = max(decay_err, abs(vec[q] - expected))
    assert decay_err <= 1e-10
    assert len(BalancedPauliSet(n, kappa).alternative()) == 53
    record_property("detail", f"{checked} counts match, t0={t0:.6f}, N*={n_star(n, kappa):g}, "
                              f"max l1 at t0 {worst_l1:.2e} <= {2.0**-n}, decay err {decay_err:.1e}")


# -------------------------------------------------------------- criterion 9
@pytest.mark.criterion(9, "SPAM damping and rescaling")
def test_spam(record_property):
    rng = np.random.default_rng(9)
    deriv_err = learn_err = 0.0
    schedule = make_schedule(0.05, 16)
    for model in MODELS[:20]:
        spam = SpamParams(*rng.uniform(0.85, 1.0, size=2))
        clean, noisy = ChannelOracle(model), ChannelOracle(model, spam=spam)
        labels = all_labels(model.n)[1:]
        for _ in range(5):
            q, o = (PauliString.from_label(labels[i]) for i in rng.integers(len(labels), size=2))
            probe = pauli_input_probe(q, o)
            d_clean = estimate_probe_derivative(clean, probe, schedule)
            d_noisy = estimate_probe_derivative(noisy, probe, schedule)
            deriv_err = max(deriv_err, abs(d_noisy - probe_damping(q, o, spam) * d_clean))
        cand = true_candidates(model)
        est = learn_coefficients(noisy, cand, 0.05, spam=spam)
        learn_err = max(learn_err, coefficient_error(model, est, cand))
    record_property("detail", f"derivative mismatch {deriv_err:.1e}, rescaled learning err {learn_err:.1e}")
    assert deriv_err <= 1e-9
    assert learn_err <= 1e-6


# ------------------------------------------------------------- criterion 10
DETERMINISM_COMMANDS = [
    ["simulate", "--model", str(MODEL_FILE), "--figures"],
    ["learn-structure", "--model", str(MODEL_FILE), "--backend", "noise", "--figures"],
    ["learn-coefficients", "--random-n", "2", "--backend", "sampled", "--eps", "0.1", "--figures"],
    ["end-to-end", "--random-n", "2", "--backend", "noise", "--figures"],
    ["condition-sweep", "--lattices", "2x2", "--seeds", "2", "--figures"],
    ["chi-spectroscopy", "--model", str(MODEL_FILE), "--backend", "sampled:4000", "--figures"],
    ["lowerbound", "--n", "4", "--figures"],
]


def _snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.criterion(10, "byte-identical CLI reruns")
@pytest.mark.parametrize("argv", DETERMINISM_COMMANDS, ids=lambda a: a[0])
def test_cli_determinism(argv, tmp_path, record_property):
    snaps = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli.main(argv + ["--seed", "7", "--out", str(out)]) == 0
        snaps.append(_snapshot(out))
    assert snaps[0] and snaps[0] == snaps[1]
    record_property("detail", f"{argv[0]}: {len(snaps[0])} files identical")
