"""Text format for curve families.

A family file is line-oriented:

    heismod-curves 1
    lattice sigma=0.0 tau=0.25
    curve 0
    0.0  0.5 0.03125 0.1
    0.5  1.0 0.03125 0.13125
    curve 1
    ...

Samples are `param x y t` in cover coordinates; `#` starts a comment.
Writing then reading a family reproduces its samples exactly (floats are
serialized with repr round-trip precision).
"""

from __future__ import annotations

import io
from typing import TextIO

import numpy as np

from .heis import LegendrianPolyline
from .lattice import LatticeSpec

__all__ = ["read_curve_family", "write_curve_family", "CurveFileError"]

_MAGIC = "heismod-curves"
_VERSION = "1"


class CurveFileError(ValueError):
    """Malformed curve-family file; the message carries the line number."""


def write_curve_family(
    stream: TextIO, lattice: LatticeSpec, curves: list[LegendrianPolyline]
) -> None:
    stream.write(f"{_MAGIC} {_VERSION}\n")
    stream.write(f"lattice sigma={lattice.sigma!r} tau={lattice.tau!r}\n")
    for idx, curve in enumerate(curves):
        stream.write(f"curve {idx}\n")
        for par, (x, y, t) in zip(curve.params, curve.points):
            stream.write(f"{float(par)!r} {float(x)!r} {float(y)!r} {float(t)!r}\n")


def read_curve_family(stream: TextIO) -> tuple[LatticeSpec, list[LegendrianPolyline]]:
    lines = stream.read().splitlines()
    if not lines or not lines[0].startswith(_MAGIC):
        raise CurveFileError(f"line 1: expected header '{_MAGIC} {_VERSION}'")
    header = lines[0].split()
    if len(header) != 2 or header[1] != _VERSION:
        raise CurveFileError(f"line 1: unsupported version in {lines[0]!r}")

    lattice: LatticeSpec | None = None
    curves: list[LegendrianPolyline] = []
    params: list[float] = []
    points: list[tuple[float, float, float]] = []

    def flush(lineno: int):
        nonlocal params, points
        if params:
            if len(params) < 2:
                raise CurveFileError(f"line {lineno}: curve has fewer than 2 samples")
            curves.append(LegendrianPolyline(params, points))
            params, points = [], []

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "lattice":
            kv = dict(tok.split("=", 1) for tok in tokens[1:] if "=" in tok)
            try:
                lattice = LatticeSpec(sigma=float(kv["sigma"]), tau=float(kv["tau"]))
            except (KeyError, ValueError) as exc:
                raise CurveFileError(f"line {lineno}: bad lattice record: {exc}") from exc
        elif tokens[0] == "curve":
            flush(lineno)
        else:
            if len(tokens) != 4:
                raise CurveFileError(
                    f"line {lineno}: expected 'param x y t', got {raw!r}"
                )
            try:
                par, x, y, t = (float(tok) for tok in tokens)
            except ValueError as exc:
                raise CurveFileError(f"line {lineno}: bad float: {exc}") from exc
            params.append(par)
            points.append((x, y, t))
    flush(len(lines) + 1)
    if lattice is None:
        raise CurveFileError("missing 'lattice sigma=... tau=...' record")
    return lattice, curves


def dumps_curve_family(lattice: LatticeSpec, curves: list[LegendrianPolyline]) -> str:
    buf = io.StringIO()
    write_curve_family(buf, lattice, curves)
    return buf.getvalue()
