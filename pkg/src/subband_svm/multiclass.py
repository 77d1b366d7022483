"""Pairwise error-correcting output codes.

Column ``n`` of the coding matrix corresponds to the class pair ``(i, j)``
with ``i < j`` in lexicographic order; class ``i`` is the positive (+1) side.
Decoding picks the class with minimal total loss over its nonzero entries.
Zero entries contribute ``chi(0)`` to every class equally under the pairwise
scheme (each row has ``N - M + 1`` zeros), so they are left out of the sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = ["CodingMatrix", "build_pairwise", "decode", "decode_many", "LOSSES"]


def _hinge(z):
    return np.maximum(1.0 - z, 0.0)


def _hamming(z):
    return (1.0 - np.where(z >= 0.0, 1.0, -1.0)) / 2.0


def _exp(z):
    return np.exp(-z)


def _linear(z):
    return -z


LOSSES = {"hinge": _hinge, "hamming": _hamming, "exp": _exp, "linear": _linear}


@dataclass(frozen=True)
class CodingMatrix:
    """``M x N`` matrix with entries in {0, +1, -1} and the class pair of each column."""

    W: np.ndarray
    pairs: tuple

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def N(self) -> int:
        return self.W.shape[1]

    def column(self, i: int, j: int) -> int:
        """Index of the column separating classes ``i`` and ``j``."""
        if i == j:
            raise ValueError("a pairwise column needs two distinct classes")
        lo, hi = min(i, j), max(i, j)
        M = self.M
        return lo * (2 * M - lo - 1) // 2 + (hi - lo - 1)


def build_pairwise(M: int) -> CodingMatrix:
    """One-vs-one coding matrix with ``M (M - 1) / 2`` columns."""
    if M < 2:
        raise ValueError(f"need at least two classes, got M={M}")
    pairs = tuple(combinations(range(M), 2))
    W = np.zeros((M, len(pairs)), dtype=np.int8)
    for n, (i, j) in enumerate(pairs):
        W[i, n] = 1
        W[j, n] = -1
    return CodingMatrix(W=W, pairs=pairs)


def _losses(scores, W, loss):
    try:
        chi = LOSSES[loss]
    except KeyError:
        raise ValueError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}") from None
    scores = np.asarray(scores, dtype=float)
    if np.any(np.isnan(scores)):
        raise ValueError("NaN in score vector")
    if scores.shape[-1] != W.N:
        raise ValueError(f"expected {W.N} scores, got {scores.shape[-1]}")
    Wf = W.W.astype(float)
    # (..., M, N) margins; zero entries masked out
    z = scores[..., None, :] * Wf
    return np.sum(np.where(Wf != 0, chi(z), 0.0), axis=-1)


def decode(scores, W: CodingMatrix, loss: str = "hinge") -> int:
    """Class minimising the summed loss; ties go to the lowest class index."""
    return int(np.argmin(_losses(scores, W, loss)))


def decode_many(scores, W: CodingMatrix, loss: str = "hinge") -> np.ndarray:
    """Vectorised ``decode`` over rows of an ``(n, N)`` score array."""
    scores = np.atleast_2d(scores)
    out = np.empty(len(scores), dtype=int)
    for start in range(0, len(scores), 256):
        chunk = scores[start : start + 256]
        out[start : start + len(chunk)] = np.argmin(_losses(chunk, W, loss), axis=-1)
    return out
