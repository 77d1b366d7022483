"""Slow, independent reference implementations used by the tests.

None of these share code with the package; they evaluate definitions
directly (double loops, exhaustive enumeration, a generic QP solver).
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# filter bank ---------------------------------------------------------------------


def cmfb_tap(S: int, s: int, k: int) -> float:
    """g_s[k] for s = 1..S, k = 1..2S, straight from the closed form."""
    proto = math.sqrt(2.0) * math.sin(math.pi * (k - 0.5) / (2 * S))
    return proto * math.cos((2 * s - 1) * (2 * k - S - 1) * math.pi / (4 * S)) / math.sqrt(S)


def cmfb_tap_mp(S: int, s: int, k: int, dps: int = 50):
    import mpmath as mp

    with mp.workdps(dps):
        proto = mp.sqrt(2) * mp.sin(mp.pi * (k - mp.mpf("0.5")) / (2 * S))
        return proto * mp.cos((2 * s - 1) * (2 * k - S - 1) * mp.pi / (4 * S)) / mp.sqrt(S)


def cmfb_analysis_bruteforce(x, S: int) -> np.ndarray:
    """c[s-1, m-1] = sum_i x[i] g_s[mS - i], m = 1..ceil(L/S)+1, x indexed from 0."""
    L = len(x)
    n_coef = -(-L // S) + 1
    out = np.zeros((S, n_coef))
    for s in range(1, S + 1):
        for m in range(1, n_coef + 1):
            acc = 0.0
            for i in range(L):
                k = m * S - i
                if 1 <= k <= 2 * S:
                    acc += x[i] * cmfb_tap(S, s, k)
            out[s - 1, m - 1] = acc
    return out


# signal -----------------------------------------------------------------------------


def coloration_direct(taps, n_bins: int = 8192) -> float:
    """20 log10(geometric / arithmetic mean) of |H| by direct summation of the DFT."""
    taps = np.asarray(taps, dtype=float)
    mags = []
    for b in range(n_bins):
        re = im = 0.0
        for n, h in enumerate(taps):
            ang = -2.0 * math.pi * b * n / n_bins
            re += h * math.cos(ang)
            im += h * math.sin(ang)
        mags.append(math.hypot(re, im))
    log_geo = sum(math.log10(m) for m in mags) / n_bins
    return 20.0 * (log_geo - math.log10(sum(mags) / n_bins))


# ensembles ------------------------------------------------------------------------------


def majority_error_enumerated(p: float, S: int) -> float:
    """Probability that at least ceil(S/2) of S independent channels err."""
    need = -(-S // 2)
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=S):
        wrong = sum(pattern)
        if wrong >= need:
            total += p**wrong * (1 - p) ** (S - wrong)
    return total


def decode_bruteforce(scores, W, loss):
    chi = {
        "hinge": lambda z: max(1.0 - z, 0.0),
        "hamming": lambda z: (1.0 - (1.0 if z >= 0 else -1.0)) / 2.0,
        "exp": lambda z: math.exp(-z),
        "linear": lambda z: -z,
    }[loss]
    best, best_m = None, None
    for m in range(W.shape[0]):
        total = 0.0
        for n in range(W.shape[1]):
            if W[m, n] != 0:
                total += chi(W[m, n] * scores[n])
        if best is None or total < best:
            best, best_m = total, m
    return best_m


# features ---------------------------------------------------------------------------


def regression_delta_loop(seq, width: int = 2):
    """d_t = sum_k k (c[t+k] - c[t-k]) / (2 sum k^2), indices clamped to the ends."""
    seq = [float(v) for v in seq]
    n = len(seq)
    denom = 2.0 * sum(k * k for k in range(1, width + 1))
    out = []
    for t in range(n):
        acc = 0.0
        for k in range(1, width + 1):
            acc += k * (seq[min(t + k, n - 1)] - seq[max(t - k, 0)])
        out.append(acc / denom)
    return out


# quadratic program ------------------------------------------------------------------


def _project(z, y, C):
    """Euclidean projection onto {0 <= a <= C, y^T a = 0} via breakpoint search."""
    bps = np.sort(np.concatenate([z * y, (z - C) * y]))
    gs = np.sum(y * np.clip(z[None, :] - bps[:, None] * y, 0, C), axis=1)
    if gs[0] <= 0:
        mu = bps[0]
    elif gs[-1] >= 0:
        mu = bps[-1]
    else:
        k = np.flatnonzero(gs > 0)[-1]
        a, b, ga, gb = bps[k], bps[k + 1], gs[k], gs[k + 1]
        mu = a + (b - a) * ga / (ga - gb)
    return np.clip(z - mu * y, 0, C)


def _kkt_polish(Q, y, C, a, eps=1e-7):
    free = (a > eps) & (a < C - eps)
    F, B = np.flatnonzero(free), np.flatnonzero(~free)
    aB = np.where(a[B] >= C - eps, C, 0.0)
    nF = len(F)
    A = np.zeros((nF + 1, nF + 1))
    r = np.zeros(nF + 1)
    A[:nF, :nF] = Q[np.ix_(F, F)]
    A[:nF, nF] = y[F]
    A[nF, :nF] = y[F]
    r[:nF] = 1 - Q[np.ix_(F, B)] @ aB
    r[nF] = -y[B] @ aB
    sol = np.linalg.lstsq(A, r, rcond=None)[0]
    out = np.zeros_like(a)
    out[B] = aB
    out[F] = sol[:nF]
    return out


def _kkt_violation(Q, y, C, a):
    yg = -y * (Q @ a - 1)
    up = np.where(y > 0, a < C, a > 0)
    low = np.where(y > 0, a > 0, a < C)
    return np.max(yg[up]) - np.min(yg[low])


def qp_dual_oracle(K, y, C, iters=200_000):
    """Accelerated projected gradient on the SVM dual, with an active-set polish.

    Returns ``(alpha, b)``; ``b`` is the mean of ``y_i - f_i`` over free
    multipliers, or the midpoint of the feasible interval when none is free.
    """
    y = np.asarray(y, dtype=float)
    Q = np.outer(y, y) * K
    L = np.linalg.eigvalsh(Q)[-1]
    a = np.zeros(len(y))
    z = a.copy()
    t = 1.0
    last = -np.inf

    def obj(v):
        return np.sum(v) - 0.5 * v @ Q @ v

    for it in range(iters):
        an = _project(z - (Q @ z - 1) / L, y, C)
        tn = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if (an - a) @ (Q @ an - 1) > 0:
            tn, z = 1.0, an
        else:
            z = an + (t - 1) / tn * (an - a)
        a, t = an, tn
        if it % 10 == 9:
            p = _kkt_polish(Q, y, C, a)
            if np.all(p >= -1e-12) and np.all(p <= C + 1e-12) and abs(y @ p) < 1e-10:
                p = np.clip(p, 0, C)
                if _kkt_violation(Q, y, C, p) < 1e-9:
                    a = p
                    break
        if it % 2000 == 1999:
            cur = obj(a)
            if cur - last < 1e-14 * max(1.0, abs(cur)):
                break
            last = cur

    yg = -y * (Q @ a - 1)
    tol = 1e-9 * C
    free = (a > tol) & (a < C - tol)
    if free.any():
        b = float(np.mean(yg[free]))
    else:
        up = np.where(y > 0, a < C - tol, a > tol)
        low = np.where(y > 0, a > tol, a < C - tol)
        b = float(0.5 * (np.max(yg[up]) + np.min(yg[low])))
    return a, b


def dual_value(a, y, K):
    ay = a * y
    return float(np.sum(a) - 0.5 * ay @ K @ ay)
