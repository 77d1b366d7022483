"""Soft-margin kernel SVMs trained in the dual with an SMO solver.

The solver works on the dual problem

    min_a  0.5 a^T Q a - sum(a)   s.t.  0 <= a_i <= C,  y^T a = 0,

with ``Q_ij = y_i y_j K(x_i, x_j)``, updating the maximal violating pair of
multipliers at each step and stopping once the KKT gap drops below ``tol``.
The Gram matrix is precomputed when it fits ``memory_budget`` bytes; larger
problems fall back to an LRU cache of kernel rows.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import KernelParams

__all__ = [
    "BinarySvmModel",
    "LinearSvmModel",
    "SmoResult",
    "smo",
    "train_dual",
    "train_from_gram",
    "train_linear",
    "score",
    "predict_sign",
    "dual_objective",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
DEFAULT_MEMORY_BUDGET = 256 * 2**20


def predict_sign(scores):
    """Class label from scores; a score of exactly zero maps to +1."""
    return np.where(np.asarray(scores) >= 0.0, 1, -1)


@dataclass
class SmoResult:
    alpha: np.ndarray
    b: float
    iterations: int
    gap: float
    converged: bool


def dual_objective(alpha, y, K) -> float:
    """Dual objective ``sum(a) - 0.5 a^T Q a`` (to be maximised)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


class _RowCache:
    """LRU cache of kernel rows for problems whose Gram matrix is too large."""

    def __init__(self, row_fn, n, budget_bytes):
        self.row_fn = row_fn
        self.capacity = max(2, int(budget_bytes // (8 * n)))
        self.rows = OrderedDict()

    def __call__(self, i):
        row = self.rows.get(i)
        if row is not None:
            self.rows.move_to_end(i)
            return row
        row = self.row_fn(i)
        self.rows[i] = row
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return row


def smo(K, y, C: float = 1.0, tol: float = DEFAULT_TOL, max_iter: int | None = None,
        diag=None) -> SmoResult:
    """Solve the SVM dual.

    ``K`` is either the full Gram matrix or a callable returning row ``i``;
    in the latter case ``diag`` (the Gram diagonal) is required.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if callable(K):
        row = K
        if diag is None:
            raise ValueError("diag is required when K is a row function")
        diag = np.asarray(diag, dtype=float)
    else:
        K = np.asarray(K, dtype=float)
        row = K.__getitem__
        diag = np.diag(K)
    if max_iter is None:
        max_iter = max(100_000, 200 * n)

    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        yg = -y * G
        at_lower = alpha <= 0.0
        at_upper = alpha >= C
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        yg_up = np.where(up, yg, -np.inf)
        yg_low = np.where(low, yg, np.inf)
        i = int(np.argmax(yg_up))
        j = int(np.argmin(yg_low))
        gap = yg_up[i] - yg_low[j]
        if gap < tol:
            break
        Ki = row(i)
        Kj = row(j)
        curvature = diag[i] + diag[j] - 2.0 * Ki[j]
        if curvature <= 0.0:
            curvature = 1e-12
        t = gap / curvature
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t, room_i, room_j)
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        # snap to the box so bound membership is exact
        for k in (i, j):
            if alpha[k] < 1e-14 * C:
                alpha[k] = 0.0
            elif alpha[k] > C * (1.0 - 1e-14):
                alpha[k] = C
        G += t * y * (Ki - Kj)
    else:
        log.warning("SMO stopped after %d iterations with KKT gap %.3g", max_iter, gap)

    yg = -y * G
    free = (alpha > 0.0) & (alpha < C)
    if np.any(free):
        b = float(np.mean(yg[free]))
    else:
        at_lower = alpha <= 0.0
        at_upper = alpha >= C
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        hi = np.max(yg[up]) if up.any() else np.min(yg[low])
        lo = np.min(yg[low]) if low.any() else hi
        b = float(0.5 * (hi + lo))
    return SmoResult(alpha=alpha, b=b, iterations=it, gap=float(gap), converged=bool(gap < tol))


def _check_labels(labels):
    y = np.asarray(labels)
    if y.ndim != 1 or len(y) == 0:
        raise ValueError("labels must be a non-empty 1-D sequence")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise ValueError("both classes must be present to train a binary SVM")
    return y.astype(float)


def _n_samples(samples):
    return len(samples[0]) if isinstance(samples, tuple) else len(samples)


def _take(samples, idx):
    if isinstance(samples, tuple):
        return tuple(np.asarray(a)[idx] for a in samples)
    return np.asarray(samples)[idx]


@dataclass
class BinarySvmModel:
    """Trained binary SVM: ``h(x) = sum_i alpha_i y_i K(x, x_i) + b``.

    ``support`` holds the support samples themselves (an array, or an
    ``(X, Omega)`` pair for the subband kernel); ``support_index`` gives their
    positions in the training set / feature store.
    """

    support: object = field(repr=False)
    support_index: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    b: float
    kernel: KernelParams
    C: float = 1.0
    info: dict = field(default_factory=dict, repr=False)

    @property
    def n_support(self) -> int:
        return len(self.alphas)

    @property
    def coef(self) -> np.ndarray:
        return self.alphas * self.labels

    def decision_function(self, X) -> np.ndarray:
        if self.n_support == 0:
            return np.full(_n_samples(X) if isinstance(X, tuple) else len(np.atleast_2d(X)), self.b)
        Kx = self.kernel.gram(X, self.support)
        return Kx @ self.coef + self.b

    def check(self, atol: float = 1e-8):
        """Assert the dual feasibility invariants."""
        if np.any(self.alphas < 0) or np.any(self.alphas > self.C):
            raise AssertionError("alpha outside [0, C]")
        if np.any(self.alphas == 0):
            raise AssertionError("support set contains a zero multiplier")
        if abs(float(np.sum(self.coef))) > atol * max(1.0, self.C * self.n_support):
            raise AssertionError("sum(alpha * y) != 0")


def score(model: BinarySvmModel, x) -> float:
    """Score of a single sample."""
    if isinstance(x, tuple):
        X = tuple(np.atleast_2d(a) for a in x)
    else:
        X = np.atleast_2d(np.asarray(x, dtype=float))
    return float(model.decision_function(X)[0])


def train_from_gram(K, labels, C: float = 1.0, tol: float = DEFAULT_TOL) -> SmoResult:
    """Train on a precomputed Gram matrix (used by the ensemble code)."""
    y = _check_labels(labels)
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel matrix contains non-finite values")
    return smo(K, y, C, tol)


def train_dual(samples, labels, kernel: KernelParams | None = None, C: float = 1.0,
               tol: float = DEFAULT_TOL, memory_budget: int = DEFAULT_MEMORY_BUDGET,
               index=None) -> BinarySvmModel:
    """Train a soft-margin SVM in the dual.

    Parameters
    ----------
    samples : array of shape (n, d), or an ``(X, Omega)`` pair for the subband kernel
    labels : sequence of +1 / -1
    kernel : kernel family; defaults to the degree-6 polynomial kernel
    C : box constraint
    tol : KKT stopping tolerance
    memory_budget : bytes allowed for a precomputed Gram matrix
    index : positions of ``samples`` in an external feature store, recorded on
        the model for the support set (defaults to ``0..n-1``)
    """
    kernel = kernel or KernelParams()
    y = _check_labels(labels)
    n = len(y)
    if _n_samples(samples) != n:
        raise ValueError("samples and labels differ in length")
    index = np.arange(n) if index is None else np.asarray(index)

    if 8 * n * n <= memory_budget:
        K = kernel.gram(samples)
        if not np.all(np.isfinite(K)):
            raise ValueError("kernel matrix contains non-finite values")
        res = smo(K, y, C, tol)
    else:
        def row_fn(i):
            r = kernel.gram(_take(samples, [i]), samples)[0]
            if not np.all(np.isfinite(r)):
                raise ValueError("kernel row contains non-finite values")
            return r

        diag = np.array([kernel.gram(_take(samples, [i]))[0, 0] for i in range(n)])
        res = smo(_RowCache(row_fn, n, memory_budget), y, C, tol, diag=diag)

    sv = np.flatnonzero(res.alpha > 0.0)
    return BinarySvmModel(
        support=_take(samples, sv),
        support_index=index[sv],
        alphas=res.alpha[sv],
        labels=y[sv],
        b=res.b,
        kernel=kernel,
        C=C,
        info={"iterations": res.iterations, "gap": res.gap, "converged": res.converged},
    )


@dataclass
class LinearSvmModel:
    """Linear SVM ``h(f) = <w, f> + v`` with ``w`` materialised from the dual.

    The dual representation (``betas``, ``labels``, ``support``) is kept so
    the expansion ``w = sum_j beta_j y_j f_j`` can be checked.
    """

    w: np.ndarray
    v: float
    betas: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    support: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)

    def decision_function(self, F) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        return F @ self.w + self.v

    def dual_decision_function(self, F) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        return (F @ self.support.T) @ (self.betas * self.labels) + self.v


def train_linear(score_vectors, labels, C: float = 1.0, tol: float = DEFAULT_TOL) -> LinearSvmModel:
    """Linear SVM on low-dimensional score vectors (meta-level classifier)."""
    F = np.atleast_2d(np.asarray(score_vectors, dtype=float))
    model = train_dual(F, labels, KernelParams("linear"), C=C, tol=tol)
    w = model.support.T @ model.coef if model.n_support else np.zeros(F.shape[1])
    return LinearSvmModel(w=w, v=model.b, betas=model.alphas, labels=model.labels,
                          support=model.support)


# serialization ----------------------------------------------------------------

FORMAT_VERSION = 1


def save_model(model: BinarySvmModel, path) -> Path:
    """Write ``<path>.npz`` (binary payload) and ``<path>.json`` (text manifest).

    The npz archive holds float64/int64 arrays ``alphas``, ``labels``,
    ``support_index``, ``b``, ``C`` and the support samples as ``support_0``
    (and ``support_1`` for the ``(X, Omega)`` kernel).  The manifest records
    the kernel, counts and format version.
    """
    path = Path(path)
    support = model.support if isinstance(model.support, tuple) else (model.support,)
    arrays = {
        "alphas": np.asarray(model.alphas, dtype=np.float64),
        "labels": np.asarray(model.labels, dtype=np.float64),
        "support_index": np.asarray(model.support_index, dtype=np.int64),
        "b": np.float64(model.b),
        "C": np.float64(model.C),
    }
    for k, a in enumerate(support):
        arrays[f"support_{k}"] = np.asarray(a, dtype=np.float64)
    npz = path.with_suffix(".npz")
    np.savez(npz, **arrays)
    manifest = {
        "format": "subband_svm.binary_svm",
        "version": FORMAT_VERSION,
        "kernel": model.kernel.to_dict(),
        "n_support": model.n_support,
        "support_parts": len(support),
        "payload": npz.name,
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")
    return npz


def load_model(path) -> BinarySvmModel:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {manifest.get('version')}")
    with np.load(path.with_suffix(".npz")) as z:
        parts = tuple(z[f"support_{k}"] for k in range(manifest["support_parts"]))
        return BinarySvmModel(
            support=parts if len(parts) > 1 else parts[0],
            support_index=z["support_index"],
            alphas=z["alphas"],
            labels=z["labels"],
            b=float(z["b"]),
            kernel=KernelParams(**manifest["kernel"]),
            C=float(z["C"]),
        )
