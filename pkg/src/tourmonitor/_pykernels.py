"""Pure-Python implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends agree
bit for bit on the same inputs.
"""
from __future__ import annotations

import math

import numpy as np


def _edge_scan(x, y, vx, vy, starts):
    inside = False
    for r in range(len(starts) - 1):
        for i in range(starts[r], starts[r + 1] - 1):
            ax = vx[i]
            ay = vy[i]
            bx = vx[i + 1]
            by = vy[i + 1]
            cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
            if cross == 0.0 and min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by):
                return True
            if ay <= y < by:
                if cross > 0.0:
                    inside = not inside
            elif by <= y < ay:
                if cross < 0.0:
                    inside = not inside
    return inside


def point_in_rings(x, y, vx, vy, starts):
    """Even-odd containment of one point; boundary points count as inside."""
    return _edge_scan(float(x), float(y), list(vx), list(vy), list(starts))


def points_in_rings(xs, ys, vx, vy, starts):
    vx = list(map(float, vx))
    vy = list(map(float, vy))
    starts = list(map(int, starts))
    out = np.zeros(len(xs), dtype=np.uint8)
    for k, (x, y) in enumerate(zip(map(float, xs), map(float, ys))):
        out[k] = _edge_scan(x, y, vx, vy, starts)
    return out


def phi_against(matrix, target):
    """Phi coefficient of column ``target`` against every column; NaN for zero variance."""
    m = np.asarray(matrix, dtype=np.uint8)
    n_docs, n_words = m.shape
    rows = m.tolist()
    col = [0] * n_words
    both = [0] * n_words
    for row in rows:
        hit = row[target]
        for j in range(n_words):
            if row[j]:
                col[j] += 1
                if hit:
                    both[j] += 1
    out = np.empty(n_words, dtype=np.float64)
    nt = col[target]
    for j in range(n_words):
        nj = col[j]
        den = float(nt * (n_docs - nt)) * float(nj * (n_docs - nj))
        if den == 0.0:
            out[j] = math.nan
        else:
            out[j] = (n_docs * both[j] - nt * nj) / math.sqrt(den)
    return out
