"""Small serialization helpers: versioned keyed-text files and CSV bundles.

Keyed-text files look like::

    # format: params_v1
    gamma = 0.378
    phi_b = 0.042

Floats are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import LoadError

FORMAT_PREFIX = "# format:"


def _fmt_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt_value(v) for v in value)
    return str(value)


def write_keyed(path: str | Path, fmt: str, values: Mapping[str, object]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{FORMAT_PREFIX} {fmt}"]
    for key, value in values.items():
        lines.append(f"{key} = {_fmt_value(value)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_keyed(path: str | Path, fmt: str) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(FORMAT_PREFIX):
        raise LoadError(f"{path}: missing '{FORMAT_PREFIX}' header")
    found = lines[0][len(FORMAT_PREFIX):].strip()
    if found != fmt:
        raise LoadError(f"{path}: expected format {fmt!r}, found {found!r}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise LoadError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_float_list(text: str) -> np.ndarray:
    if not text:
        return np.empty(0)
    return np.array([float(v) for v in text.split(",")])


def write_frame(path: str | Path, frame: pd.DataFrame) -> Path:
    """Write a tidy CSV with round-trip float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_bundle_header(directory: str | Path, fmt: str, meta: Mapping[str, object]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return write_keyed(directory / "bundle.txt", fmt, meta)


def read_bundle_header(directory: str | Path, fmt: str) -> dict[str, str]:
    return read_keyed(Path(directory) / "bundle.txt", fmt)


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
