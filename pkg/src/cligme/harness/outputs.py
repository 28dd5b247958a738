"""CSV, PGM and config-file I/O for the experiment harness."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig, SweepRow, TrialsSummary


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _open_csv(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e


def write_trace_csv(summary: TrialsSummary, path) -> Path:
    """One row per iteration ``k = 0..K``: SE of every trial, then the mean."""
    path = Path(path)
    traces = np.vstack([t.se_trace for t in summary.trials])
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["iteration"] + [f"se_trial_{i}" for i in range(len(traces))] + ["mean_se"])
        for k in range(traces.shape[1]):
            w.writerow([k] + [fmt(v) for v in traces[:, k]] + [fmt(summary.mean_trace[k])])
    return path


def write_sweep_csv(rows: list[SweepRow], path) -> Path:
    path = Path(path)
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["model", "case", "mu", "mse", "stderr"])
        for r in rows:
            w.writerow([r.model, r.case, fmt(r.mu), fmt(r.mse), fmt(r.stderr)])
    return path


def write_pgm(x, N: int, path) -> Path:
    """Binary 16-bit PGM of a column-major image; ``[0, 1]`` maps to
    ``[0, 65535]`` with values clipped for display only."""
    path = Path(path)
    img = np.asarray(x, dtype=float).reshape(N, N, order="F")
    q = np.rint(np.clip(img, 0.0, 1.0) * 65535).astype(">u2")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{N} {N}\n65535\n".encode("ascii"))
            fh.write(q.tobytes(order="C"))
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e
    return path


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm`; returns the image in
    ``[0, 1]`` as a 2-D array (row-major as displayed)."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(float) / maxval


def write_outputs(summary: TrialsSummary, directory, x_true=None) -> list[Path]:
    """Trace CSV plus original / observed / recovered images of trial 0."""
    from .experiment import make_phantom

    d = Path(directory)
    cfg = summary.config
    x_true = make_phantom(cfg.N) if x_true is None else x_true
    first = summary.trials[0]
    tag = f"{cfg.model}_{cfg.case}"
    return [
        write_trace_csv(summary, d / "trace.csv"),
        write_pgm(x_true, cfg.N, d / "original.pgm"),
        write_pgm(first.y, cfg.N, d / "observed.pgm"),
        write_pgm(first.x, cfg.N, d / f"recovered_{tag}.pgm"),
    ]


_FIELDS = {f.name: f for f in ExperimentConfig.__dataclass_fields__.values()}


def coerce_field(name: str, value):
    """Convert a raw (string or JSON) value to the type of a config field."""
    if name not in _FIELDS:
        raise KeyError(f"unknown config key {name!r}; known keys: {', '.join(sorted(_FIELDS))}")
    if name in ("theta", "omega"):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(float(v) for v in value)
    if name == "mu":
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "default")):
            return None
        return float(value)
    if name in ("N", "trials", "iterations", "rng_seed", "jobs"):
        return int(value)
    if name in ("snr_db", "kappa"):
        return float(value)
    if name == "blur" and isinstance(value, str) and value.strip().startswith("["):
        return json.loads(value)
    return value.strip() if isinstance(value, str) else value


def load_config_file(path) -> dict:
    """Read ``key = value`` lines (``#`` comments) or a JSON object."""
    text = Path(path).read_text(encoding="utf-8")
    if os.fspath(path).endswith(".json") or text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    return {k: coerce_field(k, v) for k, v in raw.items()}
