"""Pointwise multilinear algebra on antisymmetric tensors.

A k-form at a point is stored as a full antisymmetric array with ``k`` trailing
axes of length ``n``.  Its *components* are the entries at strictly increasing
index tuples, so that ``omega = sum_I omega[I] dx^I`` over increasing ``I``.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations, permutations

import numpy as np


@lru_cache(maxsize=None)
def index_sets(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Increasing k-subsets of ``range(n)`` in lexicographic order."""
    return tuple(combinations(range(n), k))


def permutation_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
            elif seq[i] == seq[j]:
                return 0
    return sign


@lru_cache(maxsize=None)
def _expansion_table(n: int, k: int):
    # (full flat index, component index, sign) for every index tuple with distinct entries
    sets = index_sets(n, k)
    lookup = {s: i for i, s in enumerate(sets)}
    flat, comp, sign = [], [], []
    for s in sets:
        for perm in permutations(range(k)):
            idx = tuple(s[p] for p in perm)
            flat.append(int(np.ravel_multi_index(idx, (n,) * k)) if k else 0)
            comp.append(lookup[s])
            sign.append(permutation_sign(perm))
    return np.array(flat, dtype=int), np.array(comp, dtype=int), np.array(sign, dtype=float)


def to_components(t: np.ndarray, n: int, k: int) -> np.ndarray:
    """Full antisymmetric tensor (..., n^k) -> components (..., C(n, k))."""
    lead = t.shape[: t.ndim - k]
    flat = t.reshape(lead + (n**k,))
    idx = [int(np.ravel_multi_index(s, (n,) * k)) if k else 0 for s in index_sets(n, k)]
    return flat[..., idx]


def from_components(c: np.ndarray, n: int, k: int) -> np.ndarray:
    """Components (..., C(n, k)) -> full antisymmetric tensor (..., n, ..., n)."""
    lead = c.shape[:-1]
    out = np.zeros(lead + (n**k,), dtype=c.dtype)
    flat, comp, sign = _expansion_table(n, k)
    out[..., flat] = c[..., comp] * sign
    return out.reshape(lead + (n,) * k)


@lru_cache(maxsize=None)
def _wedge_table(n: int, k: int, l: int):
    # for each output set I: list of (component of first, component of second, sign)
    left = {s: i for i, s in enumerate(index_sets(n, k))}
    right = {s: i for i, s in enumerate(index_sets(n, l))}
    rows = []
    for I in index_sets(n, k + l):
        terms = []
        for J in combinations(I, k):
            K = tuple(i for i in I if i not in J)
            terms.append((left[J], right[K], permutation_sign(J + K)))
        rows.append(terms)
    return rows


def _wedge_ordered(a: np.ndarray, b: np.ndarray, n: int, k: int, l: int) -> np.ndarray:
    table = _wedge_table(n, k, l)
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(lead + (len(table),))
    for i, terms in enumerate(table):
        acc = np.zeros(lead)
        for ja, jb, s in terms:
            acc = acc + s * (a[..., ja] * b[..., jb])
        out[..., i] = acc
    return out


def wedge_components(a: np.ndarray, b: np.ndarray, n: int, k: int, l: int) -> np.ndarray:
    """Exterior product on components.

    Evaluated symmetrically as ``(a^b + (-1)^{kl} (b^a)) / 2`` so that graded
    commutativity holds bit for bit, not just up to rounding.
    """
    if k + l > n:
        raise ValueError(f"degree overflow: {k} + {l} > {n}")
    s = -1.0 if (k * l) % 2 else 1.0
    return 0.5 * (_wedge_ordered(a, b, n, k, l) + s * _wedge_ordered(b, a, n, l, k))


def compound(M: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix: all k x k minors of ``M`` (..., n, n) on increasing index sets."""
    n = M.shape[-1]
    sets = index_sets(n, k)
    lead = M.shape[:-2]
    out = np.empty(lead + (len(sets), len(sets)))
    if k == 0:
        out[...] = 1.0
        return out
    for a, I in enumerate(sets):
        sub = M[..., I, :]
        for b, J in enumerate(sets):
            out[..., a, b] = np.linalg.det(sub[..., :, J]) if k > 1 else sub[..., 0, J[0]]
    return out


def wedge_covectors(vectors: np.ndarray) -> np.ndarray:
    """Components of ``v_1 ^ ... ^ v_k`` for covectors stacked as (..., k, n)."""
    k, n = vectors.shape[-2:]
    sets = index_sets(n, k)
    lead = vectors.shape[:-2]
    out = np.empty(lead + (len(sets),))
    for i, I in enumerate(sets):
        out[..., i] = np.linalg.det(vectors[..., :, I]) if k > 1 else vectors[..., 0, I[0]]
    return out


def exterior_derivative_components(grad: np.ndarray, n: int, k: int) -> np.ndarray:
    """d of a k-form given the spatial gradient of its components.

    ``grad`` has shape (..., C(n, k), n) with ``grad[..., I, j] = d/dx^j omega_I``.
    Returns components of the (k+1)-form ``sum_j dx^j ^ d_j omega``.
    """
    out = np.zeros(grad.shape[:-2] + (len(index_sets(n, k + 1)),))
    src = {s: i for i, s in enumerate(index_sets(n, k))}
    for a, I in enumerate(index_sets(n, k + 1)):
        for pos, j in enumerate(I):
            J = I[:pos] + I[pos + 1:]
            out[..., a] += (-1) ** pos * grad[..., src[J], j]
    return out
