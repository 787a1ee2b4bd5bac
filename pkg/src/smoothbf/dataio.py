"""CSV datasets, key=value run configs and result files."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError


def fmt(x):
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    names: tuple
    response: str
    intervals: tuple
    interval_policy: str

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def load_csv(path, intervals=None, response=None):
    """Read a dataset whose header names every column.

    The response is the column named ``response`` (default: the last
    column) and all other columns are covariates. ``intervals`` gives one
    ``(lo, hi)`` per covariate; when omitted each interval is the column's
    ``[min, max]``.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or any(not h for h in header):
        raise DataError(f"{path}: header needs at least two named columns")
    body = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        vals = []
        for c, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                raise DataError(f"{path}: row {r}, column '{header[c]}' is empty")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column '{header[c]}': not a number: {cell!r}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {r}, column '{header[c]}' is not finite")
            vals.append(v)
        body.append(vals)
    data = np.array(body, dtype=float).reshape(-1, len(header))
    resp = response or header[-1]
    if resp not in header:
        raise DataError(f"{path}: no response column named {resp!r}")
    ri = header.index(resp)
    cov = [i for i in range(len(header)) if i != ri]
    X, y = data[:, cov], data[:, ri]
    names = tuple(header[i] for i in cov)
    d = len(cov)
    if X.shape[0] <= d + 1:
        raise DataError(f"{path}: need more than d + 1 = {d + 1} rows, got {X.shape[0]}")
    if intervals is None:
        ivs = tuple((float(X[:, j].min()), float(X[:, j].max())) for j in range(d))
        policy = "inferred"
    else:
        ivs = tuple(tuple(map(float, iv)) for iv in intervals)
        if len(ivs) == 1 and d > 1:
            ivs = ivs * d
        if len(ivs) != d:
            raise ConfigError(f"need {d} intervals, got {len(ivs)}")
        policy = "declared"
        for j, (lo, hi) in enumerate(ivs):
            if not lo < hi:
                raise ConfigError(f"interval for {names[j]} needs lo < hi")
            out = np.flatnonzero((X[:, j] < lo) | (X[:, j] > hi))
            if out.size:
                raise DataError(
                    f"{path}: row {out[0] + 2}, column '{names[j]}' = {X[out[0], j]} "
                    f"outside [{lo}, {hi}]"
                )
    for j, (lo, hi) in enumerate(ivs):
        if not lo < hi:
            raise DataError(f"{path}: covariate '{names[j]}' is constant")
    return Dataset(X, y, names, resp, ivs, policy)


def write_csv(path, header, columns):
    """Write equal-length numeric columns with a header row (LF endings)."""
    cols = [np.asarray(c) for c in columns]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv_columns(path):
    """Header and float columns of a numeric CSV written by :func:`write_csv`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def write_keyvalue(path, items):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for k, v in items:
            fh.write(f"{k} = {v}\n")


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Keys are normalised to underscores. Repeated keys accumulate into a
    list.
    """
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in out:
            prev = out[key]
            out[key] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            out[key] = value
    return out
