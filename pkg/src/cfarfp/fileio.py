"""On-disk formats: covariance matrix files and provenance-stamped CSV."""
from __future__ import annotations

import csv
import io
import os

import numpy as np

from .errors import FileFormatError

HERMITIAN_TOL = 1e-10


def _parse_entry(text: str, where: str) -> complex:
    try:
        re_part, im_part = text.strip().split(":")
        return complex(float(re_part), float(im_part))
    except ValueError:
        raise FileFormatError(f"{where}: bad entry {text.strip()!r}, expected 're:im'") from None


def read_matrix(path) -> np.ndarray:
    """Read a complex matrix file.

    The first line holds ``N``; then ``N`` lines of ``N`` comma-separated
    ``re:im`` pairs. The matrix must be Hermitian to within 1e-10 (relative
    to its largest entry).
    """
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from None
    if not lines:
        raise FileFormatError(f"{path}: empty file")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise FileFormatError(f"{path}: first line must be the dimension") from None
    if n < 1 or len(lines) != n + 1:
        raise FileFormatError(f"{path}: expected {n} matrix rows, found {len(lines) - 1}")
    m = np.empty((n, n), dtype=complex)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != n:
            raise FileFormatError(f"{path}:{i + 2}: expected {n} entries, found {len(cells)}")
        m[i] = [_parse_entry(c, f"{path}:{i + 2}") for c in cells]
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
        raise FileFormatError(f"{path}: matrix is not Hermitian")
    return 0.5 * (m + m.conj().T)


def write_matrix(path, m) -> None:
    m = np.asarray(m, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]}\n")
        for row in m:
            fh.write(",".join(f"{z.real:.17g}:{z.imag:.17g}" for z in row) + "\n")


def fmt(value) -> str:
    """17-significant-digit, round-trip safe rendering of CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, columns, rows, header_comment: str = "") -> None:
    """Write rows under an optional ``# ...`` provenance line."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from None


def read_csv(path):
    """Return ``(comment, header, rows)`` for a file written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        text = fh.read()
    comment = ""
    if text.startswith("#"):
        first, _, text = text.partition("\n")
        comment = first[1:].strip()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    return comment, header, list(reader)
