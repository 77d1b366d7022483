"""Convex combination of cepstral and subband classifier scores.

``fused = (1 - lam) * f_mfcc + lam * f_subband`` per binary problem, so
``lam = 0`` is the MFCC classifier alone and ``lam = 1`` the subband one.
The empirical schedule ``lam(s2) = eta + zeta / (1 + s2_0 / s2)`` moves
weight to the subband scores as the noise variance ``s2`` grows.

Before fusion each front-end's scores can be divided, per binary problem, by
their median absolute value on development data so the two scales match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import estimate_noise_variance, normalize_unit_energy

__all__ = [
    "FusionParams",
    "lambda_emp",
    "fuse_scores",
    "median_abs_scale",
    "normalize_scores",
    "utterance_lambda",
]


@dataclass(frozen=True)
class FusionParams:
    """``mode="fixed"`` uses ``lam``; ``mode="empirical"`` uses :func:`lambda_emp`
    with ``sigma_source`` ``"estimated"`` (from the test audio) or ``"known"``."""

    mode: str = "empirical"
    lam: float = 0.5
    eta: float = 0.2
    zeta: float = 0.5
    sigma0_sq: float = 0.03
    sigma_source: str = "estimated"
    normalize: bool = True

    def __post_init__(self):
        if self.mode not in ("fixed", "empirical"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.mode == "fixed" and not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"fixed lambda must lie in [0, 1], got {self.lam}")
        if self.sigma_source not in ("estimated", "known"):
            raise ValueError(f"unknown noise-variance source {self.sigma_source!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lambda_emp(sigma_sq, eta: float = 0.2, zeta: float = 0.5, sigma0_sq: float = 0.03):
    """``eta + zeta / (1 + sigma0_sq / sigma_sq)``; 0 maps to ``eta``, infinity to ``eta + zeta``."""
    s = np.asarray(sigma_sq, dtype=float)
    if np.any(np.isnan(s)) or np.any(s < 0):
        raise ValueError("noise variance must be nonnegative")
    with np.errstate(divide="ignore"):
        ratio = np.where(s > 0, sigma0_sq / np.where(s > 0, s, 1.0), np.inf)
    lam = eta + zeta / (1.0 + ratio)
    return float(lam) if lam.ndim == 0 else lam


def fuse_scores(f_mfcc, f_subband, lam):
    """``(1 - lam) f_mfcc + lam f_subband``; ``lam`` is a scalar or one value per row."""
    a = np.asarray(f_mfcc, dtype=float)
    b = np.asarray(f_subband, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"score arrays differ in shape: {a.shape} vs {b.shape}")
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1 and a.ndim == 2:
        lam = lam[:, None]
    return (1.0 - lam) * a + lam * b


def median_abs_scale(dev_scores) -> np.ndarray:
    """Per-problem median ``|score|`` over development instances (``(n, N)`` -> ``(N,)``); zeros become 1."""
    med = np.median(np.abs(np.atleast_2d(dev_scores)), axis=0)
    return np.where(med > 0, med, 1.0)


def normalize_scores(scores, scale) -> np.ndarray:
    return np.asarray(scores, dtype=float) / np.asarray(scale, dtype=float)


def utterance_lambda(noisy_samples, params: FusionParams = FusionParams(), known_sigma_sq: float | None = None) -> float:
    """Combination weight for one (already corrupted) sentence."""
    if params.mode == "fixed":
        return params.lam
    if params.sigma_source == "known":
        if known_sigma_sq is None:
            raise ValueError("known noise variance required")
        s2 = known_sigma_sq
    else:
        s2 = estimate_noise_variance(normalize_unit_energy(noisy_samples))
    return lambda_emp(s2, params.eta, params.zeta, params.sigma0_sq)
