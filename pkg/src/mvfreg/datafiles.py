"""On-disk dataset formats shared by the command-line tools.

A dataset directory holds four files:

* ``curves.csv``     -- long form: sample_id, curve_id, t_index, value
* ``grid.csv``       -- t_index, t
* ``responses.csv``  -- one row per sample, one column per response (y0..)
* ``truth.json``     -- generator sidecar: support indices, signal scale,
                        noise level, intercept; absent for real data

Every file starts with ``#``-comment header lines recording the artifact
version, the seed and the resolved configuration, so outputs are
self-describing and byte-stable for equal seeds.
"""

from __future__ import annotations

import io
import json
import os

import numpy as np

from . import __version__
from .dataset import CurveDataset
from .exceptions import DataFormatError

CURVES_FILE = "curves.csv"
GRID_FILE = "grid.csv"
RESPONSES_FILE = "responses.csv"
TRUTH_FILE = "truth.json"


def _header_lines(meta: dict) -> str:
    pairs = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
    return f"# mvfreg {__version__}\n# {pairs}\n"


def write_dataset(ds: CurveDataset, outdir, meta: dict | None = None) -> list:
    """Write the dataset files into ``outdir``; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    meta = dict(meta or {})
    meta.update(ds.meta)
    header = _header_lines(meta)
    n, p, T = ds.X.shape

    paths = []

    path = os.path.join(outdir, GRID_FILE)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("t_index,t\n")
        for i, t in enumerate(ds.grid):
            fh.write(f"{i},{float(t)!r}\n")
    paths.append(path)

    path = os.path.join(outdir, CURVES_FILE)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("sample_id,curve_id,t_index,value\n")
        for l in range(n):
            for j in range(p):
                row = ds.X[l, j]
                for i in range(T):
                    fh.write(f"{l},{j},{i},{float(row[i])!r}\n")
    paths.append(path)

    path = os.path.join(outdir, RESPONSES_FILE)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(",".join(f"y{r}" for r in range(ds.m)) + "\n")
        for l in range(n):
            fh.write(",".join(repr(float(v)) for v in ds.Y[l]) + "\n")
    paths.append(path)

    if ds.truth is not None:
        path = os.path.join(outdir, TRUTH_FILE)
        doc = {
            "format": "mvfreg-truth",
            "version": 1,
            "support": list(ds.support or ()),
            "meta": _jsonable(meta),
            "truth": ds.truth.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
        paths.append(path)
    return paths


def read_dataset(indir) -> CurveDataset:
    """Read a dataset directory written by :func:`write_dataset`."""
    grid = _read_grid(os.path.join(indir, GRID_FILE))
    X = _read_curves(os.path.join(indir, CURVES_FILE), grid.size)
    Y = _read_responses(os.path.join(indir, RESPONSES_FILE), X.shape[0])
    truth = None
    support = None
    meta = {}
    tpath = os.path.join(indir, TRUTH_FILE)
    if os.path.exists(tpath):
        with open(tpath) as fh:
            doc = json.load(fh)
        truth = np.asarray(doc["truth"], dtype=float)
        support = tuple(doc.get("support", ()))
        meta = doc.get("meta", {})
    return CurveDataset(grid=grid, X=X, Y=Y, truth=truth, support=support, meta=meta)


def _data_rows(path):
    if not os.path.exists(path):
        raise DataFormatError(f"missing file: {path}")
    with open(path) as fh:
        text = fh.read()
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def _read_grid(path) -> np.ndarray:
    rows = _data_rows(path)
    if rows[0].split(",")[0] != "t_index":
        raise DataFormatError(f"{path}: expected header t_index,t")
    try:
        vals = np.loadtxt(io.StringIO("\n".join(rows[1:])), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    order = np.argsort(vals[:, 0])
    return vals[order, 1]


def _read_curves(path, T: int) -> np.ndarray:
    rows = _data_rows(path)
    if rows[0] != "sample_id,curve_id,t_index,value":
        raise DataFormatError(f"{path}: unexpected header {rows[0]!r}")
    try:
        vals = np.loadtxt(io.StringIO("\n".join(rows[1:])), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    samples = vals[:, 0].astype(int)
    curves = vals[:, 1].astype(int)
    times = vals[:, 2].astype(int)
    n, p = samples.max() + 1, curves.max() + 1
    if vals.shape[0] != n * p * T:
        raise DataFormatError(
            f"{path}: {vals.shape[0]} rows, expected {n}*{p}*{T} (row {vals.shape[0] + 2})"
        )
    X = np.full((n, p, T), np.nan)
    X[samples, curves, times] = vals[:, 3]
    if np.isnan(X).any():
        raise DataFormatError(f"{path}: missing (sample, curve, t) combinations")
    return X


def _read_responses(path, n: int) -> np.ndarray:
    rows = _data_rows(path)
    if not rows[0].startswith("y0"):
        raise DataFormatError(f"{path}: expected header y0,y1,...")
    try:
        Y = np.loadtxt(io.StringIO("\n".join(rows[1:])), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if Y.shape[0] != n:
        raise DataFormatError(f"{path}: {Y.shape[0]} rows but {n} samples in curves")
    return Y


def _jsonable(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        out[k] = v
    return out


def write_table(path, rows: list, columns: list, meta: dict) -> None:
    """Write a CSV with a metadata comment header; floats use repr."""
    with open(path, "w") as fh:
        fh.write(_header_lines(_jsonable(meta)))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(
                ",".join(repr(v) if isinstance(v, float) else str(v) for v in row)
                + "\n"
            )
