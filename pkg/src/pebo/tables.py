"""Comma-separated tables and worker-count plumbing."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.12g"


def write_csv(path, header, columns, fmt=FLOAT_FMT):
    """Write equal-length columns under a fixed header line.

    :param header: sequence of column names
    :param columns: sequence of 1-D arrays (or one 2-D array, column-major)
    :returns: the path written
    """
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if data.shape[1] != len(header):
        raise ValueError("header and column count differ")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt)
    return path


def read_csv(path):
    """``(header, data)`` of a table written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def worker_count(default=None):
    """Worker cap from ``PEBO_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("PEBO_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(n, 1)
    return default if default is not None else max(os.cpu_count() or 1, 1)


def parallel_map(fun, items, workers=None):
    """Ordered map over ``items``; threads when more than one worker is allowed."""
    items = list(items)
    workers = worker_count() if workers is None else max(int(workers), 1)
    if workers == 1 or len(items) <= 1:
        return [fun(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fun, items))
