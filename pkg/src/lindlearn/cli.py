"""Command-line front end.

Each subcommand writes its results under ``--out`` as CSV/JSON files that
depend only on the configuration and the seed. Exit codes: 0 success,
2 invalid configuration, 3 numeric failure, 4 cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .coefficients import CandidateStructure, learn_coefficients, select_probes
from .errors import CapError, InvalidConfig, NumericFailure
from .lattice import DEFAULT_LATTICES, Lattice, lattice_candidates
from .lowerbound import (
    BalancedPauliSet,
    build_L,
    mixing_certificate,
    n_anticommuting,
    n_star,
    pauli_decay,
    random_product_state,
    set_size,
    t0_kappa,
)
from .model import Lindbladian, random_lindbladian
from .oracle import ChannelOracle, parse_backend
from .pauli import PauliString, all_paulis
from .reporting import plot_distribution, plot_series, run_meta, write_csv, write_json
from .spam import SpamParams
from .structure import StructureResult, combined_result, learn_structure

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_CAP = 4

# Flags that change where or how fast results are produced, not what they are.
_NON_SEMANTIC = {"out", "threads", "figures", "func"}


# ------------------------------------------------------------------ helpers
class Run:
    """Shared state of one CLI invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.seed = int(args.seed)
        self.spam = SpamParams.parse(args.spam) if args.spam else None
        self.backend = parse_backend(args.backend, self.seed)
        self.written: list[Path] = []
        self._config = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_SEMANTIC}

    def attach_model(self, model: Lindbladian) -> None:
        self._config["model_content"] = model.to_dict()

    @property
    def meta(self) -> dict[str, Any]:
        return run_meta(self.args.command, self._config, self.seed)

    def json(self, name: str, payload: dict) -> None:
        self.written.append(write_json(self.out / name, payload, self.meta))

    def csv(self, name: str, columns: Sequence[str], rows) -> None:
        self.written.append(write_csv(self.out / name, columns, rows, self.meta))

    def figure(self, name: str, draw: Callable[[Path], Path]) -> None:
        if self.args.figures:
            self.written.append(draw(self.out / "figures" / name))

    def oracle(self, model: Lindbladian) -> ChannelOracle:
        return ChannelOracle(model, self.backend, self.spam)


def _load_model(run: Run) -> Lindbladian:
    args = run.args
    if args.model and args.random_n:
        raise InvalidConfig("use either --model or --random-n, not both")
    if args.model:
        path = Path(args.model)
        if not path.is_file():
            raise InvalidConfig(f"model file {path} not found")
        model = Lindbladian.load(path)
    elif args.random_n:
        rng = np.random.default_rng(np.random.SeedSequence([run.seed, 0x40DE1]))
        model = random_lindbladian(int(args.random_n), rng, eta=float(args.random_eta))
    else:
        raise InvalidConfig("a model is required: pass --model PATH or --random-n N")
    run.attach_model(model)
    return model


def _labels(paulis) -> list[str]:
    return sorted(p.label for p in paulis)


def _structure_payload(dis: StructureResult, ham: StructureResult) -> dict:
    both = combined_result(dis, ham)
    return {
        "s_d_hat": _labels(both.s_d_hat),
        "s_h_hat": _labels(both.s_h_hat),
        "deriv1": {p.label: v for p, v in sorted(dis.chi_deriv1.items(), key=lambda kv: kv[0].label)},
        "deriv2": {p.label: v for p, v in sorted(ham.chi_deriv2.items(), key=lambda kv: kv[0].label)},
        "queries_used": {"dissipator": dis.queries_used, "hamiltonian": ham.queries_used},
        "schedules": {
            "dissipator": {"tau_max": dis.schedule.tau_max, "r": dis.schedule.r, "eps_s": dis.schedule.eps_s},
            "hamiltonian": {"tau_max": ham.schedule.tau_max, "r": ham.schedule.r, "eps_s": ham.schedule.eps_s},
        },
    }


def _candidates_from_file(path: Path, n: int) -> CandidateStructure:
    try:
        data = json.loads(Path(path).read_text())
        s_h = [PauliString.from_label(s) for s in data["s_h_hat"]]
        s_d = [PauliString.from_label(s) for s in data["s_d_hat"]]
    except (OSError, KeyError, ValueError) as exc:
        raise InvalidConfig(f"cannot read candidates from {path}: {exc}") from exc
    if any(p.n != n for p in s_h + s_d):
        raise InvalidConfig("candidate Paulis do not match the model size")
    return CandidateStructure.from_sets(s_h, s_d)


def _true_candidates(model: Lindbladian) -> CandidateStructure:
    return CandidateStructure.from_sets(model.ham_terms.keys(), model.diss_support)


def _coefficient_payload(est, cand: CandidateStructure) -> dict:
    labels = [p.label for p in cand.s_d]
    return {
        "h_hat": {p.label: v for p, v in sorted(est.h_hat.items(), key=lambda kv: kv[0].label)},
        "dissipator_support": labels,
        "a_hat_re": np.real(est.a_hat).tolist(),
        "a_hat_im": np.imag(est.a_hat).tolist(),
        "nu": est.nu,
        "residual": est.residual,
        "deriv_accuracy": est.deriv_accuracy,
        "probes_used": est.probes_used,
        "queries_used": est.queries_used,
    }


def coefficient_error(model: Lindbladian, est, cand: CandidateStructure) -> float:
    """Largest deviation from the true model over all coefficients.

    True terms missing from the candidates count with their full magnitude.
    """
    err = 0.0
    for p, v in model.ham_terms.items():
        err = max(err, abs(est.h_hat.get(p, 0.0) - v))
    for p, v in est.h_hat.items():
        if p not in model.ham_terms:
            err = max(err, abs(v))
    where_true = {p: i for i, p in enumerate(model.diss_support)}
    where_hat = {p: i for i, p in enumerate(cand.s_d)}
    support = set(where_true) | set(where_hat)
    for p in support:
        for q in support:
            t = model.kossakowski[where_true[p], where_true[q]] if p in where_true and q in where_true else 0.0
            h = est.a_hat[where_hat[p], where_hat[q]] if p in where_hat and q in where_hat else 0.0
            err = max(err, abs(h - t))
    return float(err)


def prune(est, cand: CandidateStructure, threshold: float) -> tuple[list[str], list[str]]:
    """Terms surviving a magnitude threshold on the learned coefficients."""
    h_keep = [p.label for p, v in est.h_hat.items() if abs(v) >= threshold]
    d_keep = [p.label for i, p in enumerate(cand.s_d) if est.a_hat[i, i].real >= threshold]
    return sorted(h_keep), sorted(d_keep)


# ---------------------------------------------------------------- commands
def cmd_simulate(run: Run) -> dict:
    model = _load_model(run)
    oracle = run.oracle(model)
    times = _float_list(run.args.times)
    paulis = all_paulis(model.n)
    chi_rows, fid_rows = [], []
    for t in times:
        fid = oracle.fidelities(t)
        fid_rows += [(t, p.label, float(f)) for p, f in zip(paulis, fid)]
        chi = oracle.query_chi_rates(t, run.args.eps_s, run.args.delta, tag=f"simulate:{t!r}")
        chi_rows += [(t, p.label, chi.get(p), chi.eps_s) for p in paulis]
    run.json("model.json", model.to_dict())
    run.csv("chi_series.csv", ["t", "pauli", "rate", "eps_s"], chi_rows)
    run.csv("fidelity_series.csv", ["t", "pauli", "fidelity"], fid_rows)
    run.figure("chi_series.png", lambda path: plot_series(path, _series(chi_rows, skip_identity=True), "t", "rate"))
    return {"n": model.n, "times": len(times)}


def _series(rows, skip_identity: bool = False) -> dict[str, tuple[list, list]]:
    out: dict[str, tuple[list, list]] = {}
    for t, label, value, *_ in rows:
        if skip_identity and set(label) == {"I"}:
            continue
        xs, ys = out.setdefault(label, ([], []))
        xs.append(t)
        ys.append(value)
    return {k: v for k, v in out.items() if any(y != 0 for y in v[1])}


def _run_structure(run: Run, model: Lindbladian, oracle: ChannelOracle):
    args = run.args
    sparsity = model.sparsity()
    m = int(args.M) if args.M else sparsity.M
    return learn_structure(oracle, m, float(args.eta), float(args.delta), args.lam)


def cmd_learn_structure(run: Run) -> dict:
    model = _load_model(run)
    oracle = run.oracle(model)
    dis, ham = _run_structure(run, model, oracle)
    payload = _structure_payload(dis, ham)
    run.json("structure_result.json", payload)
    return {"s_d_hat": len(payload["s_d_hat"]), "s_h_hat": len(payload["s_h_hat"])}


def cmd_learn_coefficients(run: Run) -> dict:
    args = run.args
    model = _load_model(run)
    if args.candidates:
        cand = _candidates_from_file(Path(args.candidates), model.n)
    else:
        cand = _true_candidates(model)
    oracle = run.oracle(model)
    est = learn_coefficients(
        oracle, cand, float(args.eps), float(args.delta), mode=args.mode, seed=run.seed,
        spam=run.spam, oversample=int(args.oversample),
    )
    payload = _coefficient_payload(est, cand)
    payload["max_error"] = coefficient_error(model, est, cand)
    run.json("coefficients.json", payload)
    trace = est.design.rank_trace
    run.csv("rank_growth.csv", ["attempt", "rank"], trace)
    run.csv("nu_sweep.csv", ["n", "seed", "nu"], [(model.n, run.seed, est.nu)])
    run.figure(
        "rank_growth.png",
        lambda path: plot_series(path, {"rank": ([a for a, _ in trace], [r for _, r in trace])},
                                 "probe attempts", "rank", markers=False),
    )
    return {"nu": est.nu, "max_error": payload["max_error"]}


def cmd_end_to_end(run: Run) -> dict:
    args = run.args
    model = _load_model(run)
    oracle = run.oracle(model)
    start = time.perf_counter()
    dis, ham = _run_structure(run, model, oracle)
    both = combined_result(dis, ham)
    cand = CandidateStructure.from_sets(both.s_h_hat, both.s_d_hat)
    before = oracle.queries
    est = learn_coefficients(oracle, cand, float(args.eps), float(args.delta), mode=args.mode,
                             seed=run.seed, spam=run.spam)
    h_keep, d_keep = prune(est, cand, float(args.eta) / 2.0)
    payload = {
        "structure": _structure_payload(dis, ham),
        "coefficients": _coefficient_payload(est, cand),
        "pruned": {"s_h": h_keep, "s_d": d_keep},
        "true": {"s_h": _labels(model.ham_terms), "s_d": _labels(model.diss_support)},
        "max_error": coefficient_error(model, est, cand),
        "queries": {
            "structure": dis.queries_used + ham.queries_used,
            "coefficients": oracle.queries - before,
        },
    }
    run.json("end_to_end.json", payload)
    # Wall time is reported on stdout only, so result files stay reproducible.
    return {"max_error": payload["max_error"], "wall_time_s": round(time.perf_counter() - start, 3)}


def _sweep_one(job: tuple[int, int, int]) -> dict:
    lx, ly, seed = job
    cand = lattice_candidates(Lattice(lx, ly), seed)
    system = select_probes(cand, seed=seed)
    increases = [(a, r) for k, (a, r) in enumerate(system.rank_trace)
                 if k == 0 or r != system.rank_trace[k - 1][1]]
    return {
        "lx": lx, "ly": ly, "n": lx * ly, "seed": seed, "dimension": cand.dimension,
        "attempts": system.attempts, "nu": system.nu, "trace": increases,
    }


def parse_lattices(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        try:
            lx, ly = (int(v) for v in item.lower().split("x"))
        except ValueError as exc:
            raise InvalidConfig(f"bad lattice {item!r}; expected e.g. 2x3") from exc
        out.append((lx, ly))
    return out


def condition_sweep(lattices: Sequence[tuple[int, int]], seeds: int, threads: int = 1) -> list[dict]:
    jobs = [(lx, ly, s) for lx, ly in lattices for s in range(seeds)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]
    return sorted(results, key=lambda r: (r["n"], r["lx"], r["seed"]))


def cmd_condition_sweep(run: Run) -> dict:
    args = run.args
    results = condition_sweep(parse_lattices(args.lattices), int(args.seeds), int(args.threads))
    run.csv(
        "nu_sweep.csv",
        ["lx", "ly", "n", "seed", "dimension", "attempts", "nu"],
        [(r["lx"], r["ly"], r["n"], r["seed"], r["dimension"], r["attempts"], r["nu"]) for r in results],
    )
    run.csv(
        "rank_traces.csv",
        ["n", "seed", "attempt", "rank"],
        [(r["n"], r["seed"], a, k) for r in results for a, k in r["trace"]],
    )
    groups: dict[int, list[float]] = {}
    for r in results:
        groups.setdefault(r["n"], []).append(r["nu"])
    run.figure("nu_sweep.png", lambda path: plot_distribution(path, groups, "qubits", "nu"))
    return {n: [min(v), max(v)] for n, v in sorted(groups.items())}


def cmd_chi_spectroscopy(run: Run) -> dict:
    model = _load_model(run)
    oracle = run.oracle(model)
    dis, ham = _run_structure(run, model, oracle)
    rows = []
    for stage in (dis, ham):
        kind = "dissipator" if stage is dis else "hamiltonian"
        for chi in stage.node_rates:
            for p in sorted(chi.entries, key=lambda p: p.index):
                rows.append((kind, chi.t, p.label, chi.entries[p], chi.eps_s))
    run.csv("chi_series.csv", ["stage", "t", "pauli", "rate", "eps_s"], rows)
    both = combined_result(dis, ham)
    pool = sorted(set(dis.chi_deriv1) | set(ham.chi_deriv1), key=lambda p: p.index)
    run.csv(
        "chi_derivatives.csv",
        ["pauli", "deriv1", "deriv2", "in_s_d_hat", "in_s_h_hat"],
        [(p.label, dis.chi_deriv1.get(p, 0.0), ham.chi_deriv2.get(p, 0.0), p in both.s_d_hat, p in both.s_h_hat)
         for p in pool],
    )
    ham_rows = [(t, label, value) for kind, t, label, value, _ in rows if kind == "hamiltonian"]
    run.figure("chi_series.png", lambda path: plot_series(path, _series(ham_rows, skip_identity=True), "t", "rate"))
    return {"nodes": len(dis.node_rates) + len(ham.node_rates)}


def cmd_lowerbound(run: Run) -> dict:
    args = run.args
    n, kappa = int(args.n), int(args.kappa)
    pset = BalancedPauliSet(n, kappa)
    null = build_L(n, kappa)
    t0 = t0_kappa(n, kappa)
    counts = {q.label: n_anticommuting(q, pset) for q in all_paulis(n)[1:]}
    times = np.linspace(0.0, 2.0 * t0, int(args.time_points)).tolist()
    rng = np.random.default_rng(np.random.SeedSequence([run.seed, n, kappa]))
    states = [random_product_state(n, rng) for _ in range(int(args.states))]
    mixing = []
    for t in times:
        certs = [mixing_certificate(null, rho, t, kappa) for rho in states]
        mixing.append({
            "t": t,
            "l2_max": max(c.l2_distance for c in certs),
            "l2_bound": certs[0].l2_bound,
            "l1_bound": certs[0].l1_bound,
            "holds": all(c.holds for c in certs),
        })
    payload = {
        "n": n,
        "kappa": kappa,
        "M_kappa": set_size(n, kappa),
        "N_star": n_star(n, kappa),
        "t0": t0,
        "min_count": min(counts.values()),
        "count_histogram": {str(k): sum(1 for v in counts.values() if v == k) for k in sorted(set(counts.values()))},
        "mixing": mixing,
    }
    run.json("lowerbound_report.json", payload)
    reps = {}
    for q in all_paulis(n)[1:]:
        reps.setdefault(counts[q.label], q)
    decay_rows = [(k, reps[k].label, t, pauli_decay(null, reps[k], t)) for k in sorted(reps) for t in times]
    run.csv("decay_curves.csv", ["n_anticommuting", "pauli", "t", "decay"], decay_rows)
    run.figure(
        "decay_curves.png",
        lambda path: plot_series(
            path,
            {f"N={k}": (times, [pauli_decay(null, reps[k], t) for t in times]) for k in sorted(reps)},
            "t", "decay", logy=True, markers=False,
        ),
    )
    return {"t0": t0, "min_count": payload["min_count"]}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidConfig(f"bad number list {text!r}") from exc


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--backend", default="exact", help="exact | noise[:EPS] | sampled[:SHOTS]")
    common.add_argument("--spam", default=None, help="known SPAM retentions 'rP,rM'")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")

    model_args = argparse.ArgumentParser(add_help=False)
    model_args.add_argument("--model", default=None, help="model JSON file")
    model_args.add_argument("--random-n", type=int, default=None, help="draw a random model on N qubits")
    model_args.add_argument("--random-eta", type=float, default=0.2)

    structure_args = argparse.ArgumentParser(add_help=False)
    structure_args.add_argument("--eta", type=float, default=0.2)
    structure_args.add_argument("--delta", type=float, default=0.05)
    structure_args.add_argument("--M", type=int, default=None, help="sparsity bound (default: the model's)")
    structure_args.add_argument("--lam", type=float, default=None, help="derivative growth rate (default 2M)")

    parser = argparse.ArgumentParser(prog="lindlearn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lindlearn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, model_args], help="Pauli error rates and fidelities over time")
    p.add_argument("--times", default="0,0.05,0.1,0.2")
    p.add_argument("--eps-s", type=float, default=1e-3)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn-structure", parents=[common, model_args, structure_args], help="recover supports")
    p.set_defaults(func=cmd_learn_structure)

    p = sub.add_parser("learn-coefficients", parents=[common, model_args], help="recover coefficients")
    p.add_argument("--candidates", default=None, help="structure_result.json (default: true supports)")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--mode", choices=["probe", "shadow"], default="probe")
    p.add_argument("--oversample", type=int, default=0)
    p.set_defaults(func=cmd_learn_coefficients)

    p = sub.add_parser("end-to-end", parents=[common, model_args, structure_args], help="structure then coefficients")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--mode", choices=["probe", "shadow"], default="probe")
    p.set_defaults(func=cmd_end_to_end)

    p = sub.add_parser("condition-sweep", parents=[common], help="design conditioning on periodic lattices")
    p.add_argument("--lattices", default=",".join(f"{a}x{b}" for a, b in DEFAULT_LATTICES))
    p.add_argument("--seeds", type=int, default=16)
    p.set_defaults(func=cmd_condition_sweep)

    p = sub.add_parser("chi-spectroscopy", parents=[common, model_args, structure_args],
                       help="error-rate traces at the structure-learning nodes")
    p.set_defaults(func=cmd_chi_spectroscopy)

    p = sub.add_parser("lowerbound", parents=[common], help="balanced Pauli dissipator instances")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--time-points", type=int, default=21)
    p.add_argument("--states", type=int, default=4)
    p.set_defaults(func=cmd_lowerbound)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = Run(args)
        summary = args.func(run)
    except InvalidConfig as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CapError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    print(json.dumps({"command": args.command, "summary": summary,
                      "files": [str(p) for p in run.written]}, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
