"""Cyclic 0/1 coding matrices for multiplexed spectral measurement.

An order-n coding matrix has rows that are successive cyclic left shifts
of a single binary pattern with (n+1)/2 ones, and any two distinct rows
share exactly (n+1)/4 open positions.  Two constructions are provided:

- quadratic residues modulo a prime n with n % 4 == 3
- maximal-length shift-register (LFSR) sequences for n = 2**k - 1

Matrices of this family have the closed-form inverse
``inv = (2 / (n + 1)) * (2 * S.T - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedOrder

QUADRATIC_RESIDUE = "quadratic-residue"
M_SEQUENCE = "m-sequence"

# Maximal-length LFSR taps per register length, one primitive polynomial
# each.  Full period is asserted at build time.
_LFSR_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
}


@dataclass(frozen=True)
class SMatrix:
    """A validated binary coding matrix and how it was built."""

    order: int
    entries: np.ndarray  # (n, n) int64 with values in {0, 1}
    construction: str
    meta: dict = field(default_factory=dict)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def qr_applicable(order: int) -> bool:
    return order >= 3 and order % 4 == 3 and is_prime(order)


def mseq_applicable(order: int) -> bool:
    if order < 3 or (order & (order + 1)) != 0:
        return False
    k = (order + 1).bit_length() - 1
    return k in _LFSR_TAPS


def supported_order(order: int) -> bool:
    return qr_applicable(order) or mseq_applicable(order)


def _qr_first_row(n: int) -> np.ndarray:
    # Ones at 0 and at the nonzero quadratic residues mod n.
    row = np.zeros(n, dtype=np.int64)
    row[0] = 1
    for i in range(1, (n - 1) // 2 + 1):
        row[(i * i) % n] = 1
    return row


def _mseq_first_row(n: int) -> tuple[np.ndarray, tuple[int, ...]]:
    k = (n + 1).bit_length() - 1
    taps = _LFSR_TAPS[k]
    state = [1] + [0] * (k - 1)
    initial = list(state)
    out = np.zeros(n, dtype=np.int64)
    for t in range(n):
        out[t] = state[-1]
        fb = 0
        for tap in taps:
            fb ^= state[tap - 1]
        state = [fb] + state[:-1]
    if state != initial:
        raise AssertionError(f"LFSR taps {taps} are not maximal for k={k}")
    return out, taps


def validate_smatrix(entries: np.ndarray) -> None:
    """Raise ValueError unless ``entries`` is a valid coding matrix.

    Checks, in exact integer arithmetic: binary values, square shape,
    row/column weight (n+1)/2, pairwise row overlap (n+1)/4, the bipolar
    identity (2S - J)(2S - J)^T = (n+1)I - J, and the cyclic row
    structure.
    """
    e = np.asarray(entries)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ValueError(f"matrix must be square, got shape {e.shape}")
    n = e.shape[0]
    if n < 3 or (n + 1) % 4 != 0:
        raise ValueError(f"order {n} cannot satisfy the overlap invariant")
    if not np.isin(e, (0, 1)).all():
        raise ValueError("entries must be 0 or 1")
    e = e.astype(np.int64)
    w = (n + 1) // 2
    if not (e.sum(axis=1) == w).all():
        raise ValueError(f"every row must have weight {w}")
    if not (e.sum(axis=0) == w).all():
        raise ValueError(f"every column must have weight {w}")
    gram = e @ e.T
    lam = (n + 1) // 4
    expected = np.full((n, n), lam, dtype=np.int64)
    np.fill_diagonal(expected, w)
    if not (gram == expected).all():
        raise ValueError(f"pairwise row overlap must equal {lam}")
    b = 2 * e - 1
    ident = (n + 1) * np.eye(n, dtype=np.int64) - np.ones((n, n), dtype=np.int64)
    if not (b @ b.T == ident).all():
        raise ValueError("bipolar identity (2S-J)(2S-J)^T = (n+1)I - J failed")
    for i in range(1, n):
        if not (e[i] == np.roll(e[0], -i)).all():
            raise ValueError(f"row {i} is not row 0 cyclically left-shifted by {i}")


def build_smatrix(order: int, construction: str | None = None) -> SMatrix:
    """Build a validated coding matrix of the given order.

    When both constructions apply (order prime, equal to 2**k - 1 and
    3 mod 4), quadratic residue is the default.  Raises UnsupportedOrder
    when neither applies.
    """
    if construction is None:
        if qr_applicable(order):
            construction = QUADRATIC_RESIDUE
        elif mseq_applicable(order):
            construction = M_SEQUENCE
        else:
            raise UnsupportedOrder(str(order))

    if construction == QUADRATIC_RESIDUE:
        if not qr_applicable(order):
            raise UnsupportedOrder(f"{order} (quadratic residue needs a prime = 3 mod 4)")
        first = _qr_first_row(order)
        meta = {"construction": construction}
    elif construction == M_SEQUENCE:
        if not mseq_applicable(order):
            raise UnsupportedOrder(f"{order} (m-sequence needs 2**k - 1)")
        first, taps = _mseq_first_row(order)
        meta = {"construction": construction, "lfsr_taps": taps}
    else:
        raise ValueError(f"unknown construction {construction!r}")

    rows = np.stack([np.roll(first, -i) for i in range(order)])
    validate_smatrix(rows)
    return SMatrix(order=order, entries=rows, construction=construction, meta=meta)


def smatrix_inverse(s: SMatrix | np.ndarray) -> np.ndarray:
    """Closed-form inverse; all entries are +-2/(n+1)."""
    e = s.entries if isinstance(s, SMatrix) else np.asarray(s)
    n = e.shape[0]
    return (2.0 / (n + 1)) * (2.0 * e.T.astype(np.float64) - 1.0)


def write_smatrix_csv(s: SMatrix, path: str | Path) -> None:
    """One row per line, comma-separated 0/1, no header."""
    lines = [",".join(str(int(v)) for v in row) for row in s.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_smatrix_csv(path: str | Path) -> SMatrix:
    text = Path(path).read_text()
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([int(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: ragged rows, widths {sorted(widths)}")
    entries = np.array(rows, dtype=np.int64)
    try:
        validate_smatrix(entries)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return SMatrix(order=entries.shape[0], entries=entries, construction="csv-import")
