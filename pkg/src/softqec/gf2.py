"""Dense GF(2) linear algebra helpers (uint8 matrices, values 0/1)."""

from __future__ import annotations

import numpy as np

__all__ = ["row_reduce", "rank", "nullspace", "solve", "quotient_basis"]


def _as_bits(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.uint8) & 1)


def row_reduce(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form and pivot column list."""
    m = _as_bits(a).copy()
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hits = np.nonzero(m[r:, c])[0]
        if hits.size == 0:
            continue
        pr = r + hits[0]
        if pr != r:
            m[[r, pr]] = m[[pr, r]]
        others = np.nonzero(m[:, c])[0]
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def rank(a: np.ndarray) -> int:
    return len(row_reduce(a)[1])


def nullspace(a: np.ndarray) -> np.ndarray:
    """Rows form a basis of {x : a @ x = 0 (mod 2)}."""
    m, pivots = row_reduce(a)
    cols = m.shape[1]
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, fc in enumerate(free):
        basis[i, fc] = 1
        for r, pc in enumerate(pivots):
            basis[i, pc] = m[r, fc]
    return basis


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """One solution of a @ x = b (mod 2), or None if inconsistent."""
    a = _as_bits(a)
    b = _as_bits(b).reshape(-1, 1)
    aug, pivots = row_reduce(np.hstack([a, b]))
    cols = a.shape[1]
    if cols in pivots:
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for r, pc in enumerate(pivots):
        x[pc] = aug[r, cols]
    return x


def quotient_basis(span_rows: np.ndarray, mod_rows: np.ndarray) -> np.ndarray:
    """Rows of ``span_rows`` forming a basis of span/rowspace(mod_rows)."""
    span_rows = _as_bits(span_rows)
    mod_rows = _as_bits(mod_rows)
    picked: list[np.ndarray] = []
    base = mod_rows
    r0 = rank(base)
    for row in span_rows:
        cand = np.vstack([base, row[None, :]])
        r1 = rank(cand)
        if r1 > r0:
            picked.append(row)
            base = cand
            r0 = r1
    return np.array(picked, dtype=np.uint8) if picked else np.zeros((0, span_rows.shape[1]), dtype=np.uint8)
