"""Artifact writers.

``summary.json`` holds only quantities that are pure functions of the
configuration and seed, serialized with sorted keys, so two runs with the
same inputs produce byte-identical files.  Provenance that may change
between runs (git revision, library versions) goes to ``run_manifest.json``.
"""
import json
import platform
import re
import subprocess
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .errors import DataError


def plain(obj):
    """Recursively convert numpy scalars/arrays to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps(obj):
    return json.dumps(plain(obj), sort_keys=True, indent=2) + "\n"


def git_revision(path=None):
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=path or Path(__file__).parent,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def _safe(name):
    return re.sub(r"[^A-Za-z0-9_.+-]", "_", name)


def _write(path, text):
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _csv(columns):
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    lines = [",".join(names)]
    for row in zip(*data):
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def manifest(report, config=None):
    return {
        "experiment": report.experiment,
        "config": config.resolved() if config is not None else report.config,
        "seed": report.config["seed"],
        "seeds": report.seeds,
        "git_revision": git_revision(),
        "package_version": __version__,
        "numba": _accel.USE_NUMBA,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def emit_outputs(report, out_dir, config=None):
    """Write ``cdf_<series>.csv``, ``decisions.csv``, ``summary.json`` and
    ``run_manifest.json`` into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    written = []
    for name, (x, F) in sorted(report.cdfs.items()):
        p = out / f"cdf_{_safe(name)}.csv"
        _write(p, _csv({report.cdf_variable: x, "cum_prob": F}))
        written.append(p)
    if report.decisions:
        p = out / "decisions.csv"
        _write(p, _csv(report.decisions))
        written.append(p)
    p = out / "summary.json"
    _write(p, dumps(report.summary()))
    written.append(p)
    p = out / "run_manifest.json"
    _write(p, dumps(manifest(report, config)))
    written.append(p)
    return written


def read_summary(out_dir):
    return json.loads((Path(out_dir) / "summary.json").read_text())


def format_text(report):
    """Short human-readable digest printed by the CLI."""
    m, lines = report.metrics, [f"experiment: {report.experiment}  seed: {report.config['seed']}"]
    if report.experiment == "mean-est":
        f = m["fit_nn_vs_mmse"]
        lines += [f"NN vs MMSE: slope {f['slope']:.4f} intercept {f['intercept']:.4f}",
                  f"RMSE(NN, MMSE) {m['rmse_nn_mmse']:.4f}   RMSE(NN, ERM) {m['rmse_nn_erm']:.4f}",
                  f"shrinkage toward prior mean: {m['shrinkage']['toward_prior_mean']}"]
    elif report.experiment == "newsvendor":
        for prior, res in m["profit"].items():
            lines.append(f"test prior {prior}:")
            for name, r in res.items():
                lines.append(f"  {name:9s} profit {r['mean']:8.4f} (se {r['se']:.4f})  "
                             f"P(profit<=0) {r['cdf_at_zero']:.4f}")
        for nn, row in m["agreement"].items():
            lines.append(f"agreement {nn}: " + "  ".join(f"{k} {v:.3f}" for k, v in row.items()))
    elif report.experiment == "grad-proj":
        for name, r in m.items():
            lines.append(f"{name}: start {r['start']} -> prediction "
                         f"({r['final_prediction'][0]:.6f}, {r['final_prediction'][1]:.6f}), "
                         f"min |w| {r['min_norm']:.6f}")
    else:
        freqs = m["frequencies"]
        lines.append(f"{'strategy':18s}{'observation':20s}" + "".join(f"{f:>18d}" for f in freqs))
        for s, o in m["rows"]:
            cells = m["table"][s][o]
            lines.append(f"{s:18s}{o:20s}" + "".join(f"{cells[str(f)]['formatted']:>18s}" for f in freqs))
    return "\n".join(lines)
