"""Readers and writers for every on-disk artifact.

Tabular files are CSV with a JSON sidecar next to them (same stem, ``.json``
suffix). Floats are written with 17 significant digits, so a write/read
round trip is exact, and all writers are deterministic.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .dpt import CountTensor
from .errors import InvalidArgumentError
from .events import EventRecord
from .hmm import MISSING, SequenceDataset
from .inference import ChainTrace

OUTPUT_DIR_ENV = "OMD_OUTPUT_DIR"
METRIC_HEADER = ("experiment_id", "seed", "prior_config", "split_mode", "metric", "value")
EVENT_HEADER = ("date", "source", "target", "cameo_root")


def output_dir() -> Path:
    """Default directory for outputs: ``$OMD_OUTPUT_DIR`` or the working directory."""
    return Path(os.environ.get(OUTPUT_DIR_ENV) or ".")


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_sidecar(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    with open(side) as fh:
        return json.load(fh)


def _to_jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    return x


# ---------------------------------------------------------------- matrices

def write_matrix(path, m, family=None, alpha=None, **extra):
    """One CSV line per matrix row; sidecar ``{"K", "A", "family", "alpha"}``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in m:
            writer.writerow([fmt(v) for v in row])
    meta = {"K": m.shape[0], "A": m.shape[1], "family": family,
            "alpha": None if alpha is None else [float(a) for a in np.atleast_1d(alpha)]}
    meta.update(_to_jsonable(extra))
    _write_json(sidecar_path(path), meta)


def read_matrix(path):
    """Return ``(matrix, sidecar dict)``; the sidecar may be absent."""
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            try:
                rows.append([float(v) for v in line])
            except ValueError as err:
                raise InvalidArgumentError(f"{path}: non-numeric matrix entry") from err
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidArgumentError(f"{path}: matrix rows are empty or ragged")
    m = np.array(rows)
    meta = read_sidecar(path)
    if meta and (meta.get("K"), meta.get("A")) != m.shape:
        raise InvalidArgumentError(f"{path}: shape {m.shape} disagrees with sidecar")
    return m, meta


# ---------------------------------------------------------------- sequences

def write_sequences(path, data: SequenceDataset, **extra):
    """One sequence per line, 1-based actions, MISSING as an empty field."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for seq in data.obs:
            writer.writerow(["" if v == MISSING else str(int(v) + 1) for v in seq])
    meta = {"N": data.N, "T": data.T, "A": data.n_actions}
    meta.update(_to_jsonable(extra))
    _write_json(sidecar_path(path), meta)


def read_sequences(path) -> SequenceDataset:
    meta = read_sidecar(path)
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            try:
                rows.append([MISSING if v.strip() == "" else int(v) - 1 for v in line])
            except ValueError as err:
                raise InvalidArgumentError(f"{path}: non-integer action") from err
    if rows and len({len(r) for r in rows}) != 1:
        raise InvalidArgumentError(f"{path}: sequences differ in length")
    obs = np.array(rows, dtype=np.int64).reshape(len(rows), -1)
    A = meta.get("A")
    if A is None:
        A = int(obs.max()) + 1 if obs.size and obs.max() >= 0 else 1
    if meta and (meta.get("N"), meta.get("T")) != obs.shape:
        raise InvalidArgumentError(f"{path}: shape {obs.shape} disagrees with sidecar")
    return SequenceDataset(obs, int(A))


# ---------------------------------------------------------------- count tensors

def write_tensor(path, tensor: CountTensor, **extra):
    """COO CSV with header ``i,j,a,t,count``; dims, labels and mask go to the sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "a", "t", "count"])
        for (i, j, a, t), c in zip(tensor.coords, tensor.counts):
            writer.writerow([int(i), int(j), int(a), int(t), int(c)])
    meta = {"dims": list(tensor.dims), "labels": _to_jsonable(tensor.labels)}
    if tensor.mask is not None:
        meta["mask"] = tensor.mask.tolist()
    meta.update(_to_jsonable(extra))
    _write_json(sidecar_path(path), meta)


def read_tensor(path) -> CountTensor:
    meta = read_sidecar(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j", "a", "t", "count"]:
            raise InvalidArgumentError(f"{path}: expected header i,j,a,t,count")
        try:
            rows = [[int(v) for v in line] for line in reader if line]
        except ValueError as err:
            raise InvalidArgumentError(f"{path}: non-integer entry") from err
    arr = np.array(rows, dtype=np.int64).reshape(-1, 5)
    if "dims" in meta:
        dims = tuple(meta["dims"])
    elif arr.size:
        V = int(arr[:, :2].max()) + 1
        dims = (V, V, int(arr[:, 2].max()) + 1, int(arr[:, 3].max()) + 1)
    else:
        raise InvalidArgumentError(f"{path}: empty tensor without a sidecar giving dims")
    return CountTensor(dims, arr[:, :4], arr[:, 4], mask=meta.get("mask"), labels=meta.get("labels") or {})


# ---------------------------------------------------------------- traces

def write_trace(path, trace: ChainTrace, **meta):
    """JSON lines: a metadata object first, then one object of named blocks per draw."""
    head = {
        "seed": trace.seed,
        "n_samples": len(trace.samples),
        "burn_in": trace.burn_in,
        "acceptance_rate": trace.acceptance_rate,
        "algorithm": trace.algorithm,
        "thin": trace.thin,
    }
    head.update(_to_jsonable(meta))
    with open(path, "w") as fh:
        fh.write(json.dumps({"metadata": head}, sort_keys=True) + "\n")
        for sample, lj in zip(trace.samples, trace.log_joint_trace):
            record = {name: _to_jsonable(np.asarray(v)) for name, v in sample.items()}
            record["log_joint"] = lj
            fh.write(json.dumps(record) + "\n")


def read_trace(path):
    """Return ``(ChainTrace, metadata dict)``."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise InvalidArgumentError(f"{path}: empty trace file")
    try:
        first = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as err:
        raise InvalidArgumentError(f"{path}: malformed JSON line") from err
    if "metadata" not in first:
        raise InvalidArgumentError(f"{path}: first line must hold the metadata")
    meta = first["metadata"]
    samples, log_joint = [], []
    for rec in records:
        log_joint.append(float(rec.pop("log_joint", np.nan)))
        samples.append({k: np.asarray(v, dtype=float) for k, v in rec.items() if v is not None})
    trace = ChainTrace(samples=samples, burn_in=int(meta.get("burn_in", 0)), seed=int(meta.get("seed", 0)),
                       acceptance_rate=float(meta.get("acceptance_rate", np.nan)), log_joint_trace=log_joint,
                       algorithm=meta.get("algorithm", "adaptive-rwm"), thin=int(meta.get("thin", 1)),
                       meta=meta)
    return trace, meta


# ---------------------------------------------------------------- metric reports

def write_metric_rows(path, rows, append=False):
    """CSV with header ``experiment_id,seed,prior_config,split_mode,metric,value``."""
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(METRIC_HEADER)
        for exp, seed, config, mode, metric, value in rows:
            writer.writerow([exp, seed, config, mode, metric, fmt(value)])


def read_metric_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_HEADER:
            raise InvalidArgumentError(f"{path}: not a metric report")
        return [(r["experiment_id"], int(r["seed"]) if r["seed"].lstrip("-").isdigit() else r["seed"],
                 r["prior_config"], r["split_mode"], r["metric"], float(r["value"])) for r in reader]


# ---------------------------------------------------------------- sweep configs

def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, blank lines are ignored."""
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, sep, value = line.partition(":")
            if not sep or not key.strip():
                raise InvalidArgumentError(f"{path}:{n}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_config(path, config: dict):
    with open(path, "w") as fh:
        for key, value in config.items():
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")


# ---------------------------------------------------------------- events

def read_events(path):
    """Tab-separated events with header ``date, source, target, cameo_root``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != EVENT_HEADER:
            raise InvalidArgumentError(f"{path}: expected header {'<TAB>'.join(EVENT_HEADER)}")
        for line in reader:
            if not line or not "".join(line).strip():
                continue
            line = (line + [""] * 4)[:4]
            yield EventRecord(*(v.strip() for v in line))


def write_events(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(EVENT_HEADER)
        for r in records:
            date = r.date.isoformat() if hasattr(r.date, "isoformat") else str(r.date)
            writer.writerow([date, r.source, r.target, r.action])
