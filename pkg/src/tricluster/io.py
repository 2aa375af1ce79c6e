"""CSV readers and writers. Series and time indices are 1-based on disk;
floats are written with 12 significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import ClusterTimeline, Partition, SeriesPanel
from .errors import ContractError
from .exp_model import ExpModelParams
from .hmm import ClusterHmm


def fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = path.open("w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _rows(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ContractError(f"{path}: empty file")
    return rows[0], rows[1:]


def write_panel(path, panel: SeriesPanel) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["time"] + [f"s{i + 1}" for i in range(panel.n_series)])
        for k, row in enumerate(panel.values, 1):
            w.writerow([k] + [fmt(x) for x in row])


def read_panel(path) -> SeriesPanel:
    header, rows = _rows(path)
    if header[0] != "time":
        raise ContractError(f"{path}: first column must be 'time'")
    try:
        times = [int(r[0]) for r in rows]
        values = np.array([[float(x) for x in r[1:]] for r in rows])
    except ValueError as exc:
        raise ContractError(f"{path}: {exc}") from exc
    if times != list(range(1, len(rows) + 1)):
        raise ContractError(f"{path}: time column must run 1..{len(rows)}")
    return SeriesPanel(values)


def write_timeline(path, tl: ClusterTimeline) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["time", "partition"])
        for k, p in tl.steps:
            w.writerow([k, p.to_string()])


def read_timeline(path) -> ClusterTimeline:
    header, rows = _rows(path)
    if header[:2] != ["time", "partition"]:
        raise ContractError(f"{path}: expected header time,partition")
    try:
        return ClusterTimeline(tuple((int(r[0]), Partition.parse(r[1])) for r in rows))
    except (ValueError, IndexError) as exc:
        raise ContractError(f"{path}: {exc}") from exc


def write_similarity(path, s: np.ndarray) -> None:
    fh, w = _writer(path)
    with fh:
        n = s.shape[0]
        w.writerow(["series"] + [f"s{i + 1}" for i in range(n)])
        for i, row in enumerate(s):
            w.writerow([f"s{i + 1}"] + [fmt(x) for x in row])


PARAM_HEADER = ["i", "j", "rate1", "rate0", "prior1", "prior_floor"]


def write_params(path, params: ExpModelParams) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(PARAM_HEADER)
        iu, ju = np.triu_indices(params.n, 1)
        for i, j in zip(iu, ju):
            w.writerow([i + 1, j + 1, fmt(params.rate1[i, j]), fmt(params.rate0[i, j]),
                        fmt(params.prior1[i, j]), fmt(params.prior_floor)])


def read_params(path) -> ExpModelParams:
    header, rows = _rows(path)
    if header[:5] != PARAM_HEADER[:5]:
        raise ContractError(f"{path}: expected header {','.join(PARAM_HEADER)}")
    if not rows:
        raise ContractError(f"{path}: no parameter rows")
    n = max(int(r[1]) for r in rows)
    mats = [np.ones((n, n)), np.ones((n, n)), np.zeros((n, n))]
    floor = 1e-12
    seen = set()
    for r in rows:
        i, j = int(r[0]) - 1, int(r[1]) - 1
        seen.add((min(i, j), max(i, j)))
        for m, x in zip(mats, r[2:5]):
            m[i, j] = m[j, i] = float(x)
        if len(r) > 5:
            floor = float(r[5])
    if len(seen) != n * (n - 1) // 2:
        raise ContractError(f"{path}: expected {n * (n - 1) // 2} pair rows, found {len(seen)}")
    return ExpModelParams(n, *mats, prior_floor=floor)


def write_hmm(directory, hmm: ClusterHmm) -> None:
    d = Path(directory)
    names = [p.to_string() for p in hmm.states]
    fh, w = _writer(d / "hmm_states.csv")
    with fh:
        w.writerow(["state", "partition"])
        for i, name in enumerate(names):
            w.writerow([i, name])
    fh, w = _writer(d / "hmm_transition.csv")
    with fh:
        w.writerow(["from"] + names)
        for name, row in zip(names, np.exp(hmm.log_transition)):
            w.writerow([name] + [fmt(x) for x in row])
    fh, w = _writer(d / "hmm_initial.csv")
    with fh:
        w.writerow(["partition", "probability"])
        for name, x in zip(names, np.exp(hmm.log_initial)):
            w.writerow([name, fmt(x)])
    write_params(d / "params.csv", hmm.emission)


def read_hmm(directory) -> ClusterHmm:
    d = Path(directory)
    header, rows = _rows(d / "hmm_transition.csv")
    states = tuple(Partition.parse(x) for x in header[1:])
    trans = np.array([[float(x) for x in r[1:]] for r in rows])
    _, irows = _rows(d / "hmm_initial.csv")
    init = np.array([float(r[1]) for r in irows])
    trans = trans / trans.sum(axis=1, keepdims=True)
    init = init / init.sum()
    with np.errstate(divide="ignore"):
        return ClusterHmm(states, np.log(trans), np.log(init), read_params(d / "params.csv"))


def write_weights(path, weights) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["series", "weight"])
        for i, x in enumerate(weights, 1):
            w.writerow([f"s{i}", fmt(x)])


def write_keyvalue(path, values: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k}={v}\n" for k, v in values.items()))


def read_keyvalue(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out
