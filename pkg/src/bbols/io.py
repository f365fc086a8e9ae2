"""Plain-text matrix/vector files, flat key-value config files and CSV output."""
import configparser
import csv
import math

import numpy as np


class ConfigError(ValueError):
    pass


def write_array(path, A, d=1):
    """Write a matrix (or a vector as an ``m x 1`` matrix) with header ``m n d``."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {d}\n")
        np.savetxt(fh, A, fmt="%.17g")


def read_array(path):
    """Read a file written by :func:`write_array`.

    Returns:
        ``(array, d)``; ``m x 1`` files come back as 1-D vectors.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ConfigError(f"{path}: first line must be 'm n d'")
        m, n, d = (int(v) for v in header)
        data = np.array(fh.read().split(), dtype=float)
    if data.size != m * n:
        raise ConfigError(f"{path}: expected {m * n} entries, found {data.size}")
    A = data.reshape(m, n)
    return (A[:, 0] if n == 1 else A), d


def parse_grid(text, cast=float):
    """Parse ``"1,2,5"`` or MATLAB-style ``"0.9:0.01:0.99"`` / ``"1:8"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            start, step, stop = parts[0], 1.0, parts[1]
        elif len(parts) == 3:
            start, step, stop = parts
        else:
            raise ConfigError(f"bad range {text!r}")
        if step <= 0:
            raise ConfigError(f"range step must be positive in {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
        # snap off float drift from start + i * step
        values = [round(v, 12) for v in values]
    else:
        values = [float(p) for p in text.split(",") if p.strip()]
    if cast is int:
        if any(v != int(v) for v in values):
            raise ConfigError(f"expected integers in {text!r}")
        return [int(v) for v in values]
    return [cast(v) for v in values]


def read_flat_config(path_or_text, is_text=False):
    """Read ``key = value`` lines (``#`` comments) into a dict of strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = path_or_text
    if not is_text:
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return dict(parser["experiment"])


def format_float(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{v:.9g}"
    return str(v)


def write_csv(fh, columns, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
