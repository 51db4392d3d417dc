"""Quadrature rules on the reference simplex {t >= 0, sum t <= 1}.

Rules return barycentric nodes of shape (q, n + 1) and positive weights that sum
to the reference volume 1/n!.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi


def _symmetric(n: int, order: int):
    if order <= 1 or n == 0:
        bary = np.full((1, n + 1), 1.0 / (n + 1))
        return bary, np.array([1.0 / factorial(n)])
    if n == 1:
        g = 0.5 / np.sqrt(3.0)
        t = np.array([0.5 - g, 0.5 + g])
        return np.column_stack([1 - t, t]), np.array([0.5, 0.5])
    if n == 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        bary = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return bary, np.full(3, 1.0 / 6.0)
    if n == 3:
        a, b = 0.5854101966249685, 0.1381966011250105
        bary = np.full((4, 4), b)
        np.fill_diagonal(bary, a)
        return bary, np.full(4, 1.0 / 24.0)
    return None


def _conical(n: int, order: int):
    # collapsed-coordinate (Stroud) product of Gauss-Jacobi rules
    m = max(1, (order + 2) // 2)
    pts, wts = [], []
    for i in range(n):
        alpha = n - 1 - i
        x, w = roots_jacobi(m, alpha, 0.0)
        pts.append((1.0 + x) / 2.0)
        wts.append(w / 2.0 ** (alpha + 1))
    grids = np.meshgrid(*pts, indexing="ij")
    wgrid = np.meshgrid(*wts, indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    t = np.empty_like(u)
    rest = np.ones(len(u))
    for i in range(n):
        t[:, i] = rest * u[:, i]
        rest = rest * (1.0 - u[:, i])
    bary = np.column_stack([1.0 - t.sum(axis=1), t])
    return bary, w


@lru_cache(maxsize=None)
def simplex_rule(n: int, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference n-simplex exact for polynomials of degree ``order``.

    Orders 1 and 2 use the classical symmetric rules (centroid; n + 1 interior
    points).  Higher orders fall back to a conical product rule.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    rule = _symmetric(n, order) if order <= 2 else None
    if rule is None:
        rule = _conical(n, order)
    bary, w = rule
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w
