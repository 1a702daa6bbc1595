"""Deterministic CSV/JSON writers and optional matplotlib figures.

Every file starts with the tool version, a hash of the run configuration
and the seed. CSV files carry them as ``# key=value`` comment lines; JSON
files carry them under a ``meta`` key. Floats are written with ``repr`` so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__


def _plain(obj: Any) -> Any:
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def config_hash(config: Mapping[str, Any]) -> str:
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_meta(command: str, config: Mapping[str, Any], seed: int) -> dict[str, Any]:
    return {
        "tool": "lindlearn",
        "version": __version__,
        "command": command,
        "config_hash": config_hash(config),
        "seed": int(seed),
    }


def write_json(path: Path, payload: Mapping[str, Any], meta: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(_plain(payload))
    body["meta"] = dict(meta)
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    return path


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], meta: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Inverse of :func:`write_csv`: header metadata and data rows."""
    meta: dict[str, str] = {}
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            lines.append(line)
    return meta, list(csv.DictReader(lines))


# ----------------------------------------------------------------- figures
def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False})
    return plt


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    fig.clf()
    return path


def plot_series(path: Path, series: Mapping[str, tuple[Sequence[float], Sequence[float]]], xlabel: str,
                ylabel: str, logy: bool = False, markers: bool = True) -> Path:
    """One line per named series."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for name in sorted(series):
        x, y = series[name]
        ax.plot(x, y, marker="o" if markers else None, ms=3, lw=1, label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if 0 < len(series) <= 12:
        ax.legend(fontsize=7, frameon=False)
    out = _save(fig, path)
    plt.close(fig)
    return out


def plot_distribution(path: Path, groups: Mapping[int, Sequence[float]], xlabel: str, ylabel: str) -> Path:
    """Box plot of one value distribution per integer key."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    keys = sorted(groups)
    ax.boxplot([list(groups[k]) for k in keys], positions=range(len(keys)))
    ax.set_xticks(range(len(keys)), [str(k) for k in keys])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    out = _save(fig, path)
    plt.close(fig)
    return out


__all__ = [
    "config_hash",
    "plot_distribution",
    "plot_series",
    "read_csv",
    "run_meta",
    "write_csv",
    "write_json",
]
