"""SVM kernels for cepstral and subband waveform features.

Pairwise functions (``kp``, ``kp_norm``, ``ke``, ``komega``) follow the
definitions directly and are used for checks; the ``gram_*`` functions are
the vectorised forms used in training and scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "kp",
    "kp_norm",
    "ke",
    "komega",
    "gram_linear",
    "gram_kp",
    "gram_kp_norm",
    "gram_ke",
    "gram_komega",
    "normalize_rows",
]

KINDS = ("linear", "poly", "poly_norm", "even", "omega")


@dataclass(frozen=True)
class KernelParams:
    """Kernel family and polynomial degree.

    ``omega`` expects samples given as a pair ``(X, Omega)`` of row-aligned
    arrays (subband waveforms and dynamic features); the other kinds take a
    plain 2-D array of samples.
    """

    kind: str = "poly"
    theta: int = 6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if int(self.theta) != self.theta or self.theta < 1:
            raise ValueError(f"polynomial degree must be an integer >= 1, got {self.theta!r}")

    def gram(self, A, B=None) -> np.ndarray:
        if self.kind == "linear":
            return gram_linear(A, B)
        if self.kind == "poly":
            return gram_kp(A, B, self.theta)
        if self.kind == "poly_norm":
            return gram_kp_norm(A, B, self.theta)
        if self.kind == "even":
            return gram_ke(A, B, self.theta)
        XA, OA = A
        XB, OB = (A if B is None else B)
        return gram_komega(XA, OA, XB, OB, self.theta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": int(self.theta)}


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def _cosine(x, y):
    xx = float(np.dot(x, x))
    yy = float(np.dot(y, y))
    if xx == 0.0 or yy == 0.0:
        raise ValueError("normalized kernel is undefined for a zero vector")
    # sqrt(fl(d * d)) == d, so cos(x, x) is exactly 1
    c = float(np.dot(x, y)) / np.sqrt(xx * yy)
    return min(1.0, max(-1.0, c))


def kp(x, y, theta: int = 6) -> float:
    """Polynomial kernel ``(1 + <x, y>)^theta``."""
    x, y = _pair(x, y)
    return float((1.0 + np.dot(x, y)) ** theta)


def kp_norm(x, y, theta: int = 6) -> float:
    """Polynomial kernel on unit-normalised inputs; scale invariant."""
    x, y = _pair(x, y)
    return (1.0 + _cosine(x, y)) ** theta


def ke(x, y, theta: int = 6) -> float:
    """Even kernel ``kp_norm(x, y) + kp_norm(x, -y)``; invariant to sign flips."""
    x, y = _pair(x, y)
    c = _cosine(x, y)
    # both terms computed from the same inner product keep ke(x, -y) == ke(x, y) exactly
    return (1.0 + c) ** theta + (1.0 - c) ** theta


def komega(xs, ys, omega_x, omega_y, theta: int = 6) -> float:
    """Subband kernel: even kernel on waveforms times polynomial kernel on dynamics."""
    return ke(xs, ys, theta) * kp(omega_x, omega_y, theta)


def normalize_rows(X, allow_zero: bool = False) -> np.ndarray:
    """Scale each row to unit norm.

    Zero rows raise unless ``allow_zero``, in which case they stay zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0.0
    if np.any(zero) and not allow_zero:
        raise ValueError(f"normalized kernel is undefined for zero rows {np.flatnonzero(zero)[:10]}")
    norms = np.where(zero, 1.0, norms)
    return X / norms[:, None]


def _gram_inputs(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A, B


def gram_linear(A, B=None) -> np.ndarray:
    A, B = _gram_inputs(A, B)
    return A @ B.T


def gram_kp(A, B=None, theta: int = 6) -> np.ndarray:
    A, B = _gram_inputs(A, B)
    return (1.0 + A @ B.T) ** theta


def _cosines(A, B, allow_zero=False):
    same = B is A
    U = normalize_rows(A, allow_zero)
    V = U if same else normalize_rows(B, allow_zero)
    C = np.clip(U @ V.T, -1.0, 1.0)
    if same:
        C = 0.5 * (C + C.T)
        np.fill_diagonal(C, np.where(np.any(U != 0.0, axis=1), 1.0, 0.0))
    return C, U, V


def gram_kp_norm(A, B=None, theta: int = 6) -> np.ndarray:
    A, B = _gram_inputs(A, B)
    C, _, _ = _cosines(A, B)
    return (1.0 + C) ** theta


def _even_from_cosines(C, theta, zero_mask=None):
    G = (1.0 + C) ** theta + (1.0 - C) ** theta
    if zero_mask is not None:
        G[zero_mask] = 0.0
    return G


def gram_ke(A, B=None, theta: int = 6, allow_zero: bool = False) -> np.ndarray:
    """Gram matrix of the even kernel.

    With ``allow_zero`` a zero-norm row (digital silence in a subband) gives
    kernel value 0 against everything instead of raising.
    """
    A, B = _gram_inputs(A, B)
    C, U, V = _cosines(A, B, allow_zero)
    mask = None
    if allow_zero:
        za = ~np.any(U != 0.0, axis=1)
        zb = ~np.any(V != 0.0, axis=1)
        if za.any() or zb.any():
            mask = za[:, None] | zb[None, :]
    return _even_from_cosines(C, theta, mask)


def gram_komega(XA, OA, XB=None, OB=None, theta: int = 6, allow_zero: bool = False) -> np.ndarray:
    """Gram matrix of the subband kernel ``ke(x, x') * kp(Omega, Omega')``."""
    if XB is None:
        XB, OB = XA, OA
    return gram_ke(XA, XB, theta, allow_zero) * gram_kp(OA, OB, theta)
