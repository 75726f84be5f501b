"""Raw-float image/sinogram files, angle lists, and 16-bit PGM previews.

Pixel data lives in ``<name>.raw`` as little-endian 32-bit floats in row-major
order; a plain-text sidecar ``<name>.hdr`` records the fields needed to
interpret it (kind, rows, cols, pitch_cm, angles_file). Compute stays 64-bit
in memory; only the files are 32-bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

RAW_KINDS = ("image", "sinogram", "gains", "psf")


def _sidecar(path):
    return Path(path).with_suffix(".hdr")


def write_raw(path, array, kind, pitch_cm, angles_file=None):
    """Write a 2-D array as raw LE float32 plus its text sidecar.

    ``angles_file`` names the companion angle list for sinograms; images
    record a ``-`` placeholder.
    """
    if kind not in RAW_KINDS:
        raise ValueError(f"unknown raw kind {kind!r}")
    array = np.asarray(array, dtype=float)
    if array.ndim != 2:
        raise ValueError("raw files hold 2-D arrays")
    path = Path(path)
    array.astype("<f4").tofile(path)
    rows, cols = array.shape
    lines = [f"kind {kind}",
             f"rows {rows}",
             f"cols {cols}",
             f"pitch_cm {pitch_cm:.9g}",
             f"angles_file {angles_file if angles_file else '-'}"]
    _sidecar(path).write_text("\n".join(lines) + "\n")


def read_raw(path):
    """Read a raw-float file via its sidecar; returns (float64 array, header)."""
    path = Path(path)
    header = {}
    for line in _sidecar(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, value = line.split(None, 1)
        header[key] = value
    missing = {"kind", "rows", "cols", "pitch_cm", "angles_file"} - set(header)
    if missing:
        raise ValueError(f"sidecar missing fields: {sorted(missing)}")
    if header["kind"] not in RAW_KINDS:
        raise ValueError(f"unknown raw kind {header['kind']!r}")
    rows = int(header["rows"])
    cols = int(header["cols"])
    header["rows"] = rows
    header["cols"] = cols
    header["pitch_cm"] = float(header["pitch_cm"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} floats, found {data.size}")
    return data.astype(float).reshape(rows, cols), header


def write_angles(path, angles):
    """One projection angle (radians) per line."""
    lines = [f"{float(a):.17g}" for a in np.asarray(angles, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_angles(path):
    values = [float(line) for line in Path(path).read_text().split()]
    return np.array(values, dtype=float)


def write_pgm16(path, array, window=None):
    """16-bit binary PGM preview with the scaling window in a header comment.

    The window defaults to the data range; values are clipped to it. A flat
    window maps everything to zero.
    """
    array = np.asarray(array, dtype=float)
    if array.ndim != 2:
        raise ValueError("PGM export needs a 2-D array")
    lo, hi = window if window is not None else (float(array.min()), float(array.max()))
    if hi < lo:
        raise ValueError("window must satisfy min <= max")
    span = hi - lo
    if span > 0.0:
        scaled = np.clip((array - lo) / span, 0.0, 1.0) * 65535.0
    else:
        scaled = np.zeros_like(array)
    pixels = np.rint(scaled).astype(">u2")
    rows, cols = array.shape
    header = (f"P5\n# window {lo:.9g} {hi:.9g}\n{cols} {rows}\n65535\n"
              .encode("ascii"))
    Path(path).write_bytes(header + pixels.tobytes())


def read_pgm16(path):
    """Read a binary 16-bit PGM written by :func:`write_pgm16`.

    Returns (uint16 array, (window_lo, window_hi) or None).
    """
    blob = Path(path).read_bytes()
    tokens = []
    window = None
    pos = 0
    while len(tokens) < 4:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        if line.startswith("#"):
            parts = line.split()
            if len(parts) == 4 and parts[1] == "window":
                window = (float(parts[2]), float(parts[3]))
            continue
        tokens.extend(line.split())
    if tokens[0] != "P5" or tokens[3] != "65535":
        raise ValueError("not a 16-bit binary PGM")
    cols, rows = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(blob[pos:pos + 2 * rows * cols], dtype=">u2")
    if pixels.size != rows * cols:
        raise ValueError("truncated PGM pixel data")
    return pixels.reshape(rows, cols).astype(np.uint16), window
