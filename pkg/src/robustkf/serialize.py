"""Atomic file output and number formatting shared by the CLI paths.

Every writer goes through a temp file in the destination directory plus
os.replace, so a failing run never leaves a partial file behind.  Floats
are written with repr (shortest round-trip form) to keep reports
byte-stable across runs; non-finite values become the strings
"inf"/"-inf"/"nan", which the readers reverse.
"""

import io
import json
import math
import os
import tempfile

import numpy as np

from .errors import ValidationError


def fmt(value):
    """One CSV cell."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


def sanitize(obj):
    """Make an object json.dumps-safe without losing inf/nan."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return obj


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json(path, obj):
    atomic_write_text(path, json.dumps(sanitize(obj), indent=2, sort_keys=True) + "\n")


def csv_text(rows):
    buf = io.StringIO()
    for row in rows:
        buf.write(",".join(fmt(v) for v in row))
        buf.write("\n")
    return buf.getvalue()


def write_csv(path, rows):
    atomic_write_text(path, csv_text(rows))


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}", field=str(path))


def parse_float(text):
    """Reverse of fmt for numeric cells (accepts inf/-inf/nan)."""
    return float(text)
