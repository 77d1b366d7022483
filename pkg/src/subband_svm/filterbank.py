"""Maximally decimated cosine-modulated filter bank (CMFB).

The bank has ``S`` channels, each an FIR filter with ``2S`` taps obtained by
cosine modulation of a sine low-pass prototype.  The analysis operator is an
orthogonal lapped transform, so the subband coefficients preserve energy and
the synthesis operator (its transpose) reconstructs the input exactly.

Boundary convention: the input is treated as zero outside its support.  It is
zero-padded with ``S`` samples on the left and up to the next multiple of
``S`` plus ``S`` samples on the right; every block that overlaps the original
support is kept, giving ``ceil(L / S) + 1`` coefficients per channel.
Subband coefficient ``i`` (0-based) is centred on input sample ``i * S``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CmfbBank",
    "SubbandSet",
    "design_cmfb",
    "analyze",
    "synthesize",
    "orthogonality_residual",
    "n_coefficients",
]


@dataclass(frozen=True)
class CmfbBank:
    """Analysis filters ``g_s[k]`` stored as an ``(S, 2S)`` array.

    Row ``s - 1`` holds ``g_s[1], ..., g_s[2S]``.
    """

    S: int
    filters: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.filters.shape != (self.S, 2 * self.S):
            raise ValueError(
                f"expected filters of shape {(self.S, 2 * self.S)}, got {self.filters.shape}"
            )

    def taps_text(self) -> str:
        """One line per channel, whitespace-separated taps (debug dump)."""
        return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in self.filters)


@dataclass(frozen=True)
class SubbandSet:
    """Decimated subband components of one waveform.

    ``components[s]`` is the coefficient sequence of channel ``s + 1``.
    ``length`` is the number of samples of the analysed waveform, needed to
    trim the reconstruction.
    """

    components: np.ndarray
    length: int
    S: int
    origin: str | None = None

    @property
    def energy(self) -> float:
        return float(np.sum(self.components**2))


def design_cmfb(S: int = 16) -> CmfbBank:
    """Design the ``S``-channel orthogonal CMFB.

    ``g_s[k] = g[k] cos((2s - 1)(2k - S - 1) pi / 4S) / sqrt(S)`` with the
    prototype ``g[k] = sqrt(2) sin(pi (k - 0.5) / 2S)``, for ``s = 1..S`` and
    ``k = 1..2S``.
    """
    if not isinstance(S, (int, np.integer)) or S <= 0:
        raise ValueError(f"channel count must be a positive integer, got {S!r}")
    S = int(S)
    k = np.arange(1, 2 * S + 1)
    s = np.arange(1, S + 1)[:, None]
    prototype = np.sqrt(2.0) * np.sin(np.pi * (2 * k - 1) / (4 * S))
    # reduce the integer phase modulo a full period before scaling by pi,
    # so taps that vanish analytically come out at rounding level
    phase = ((2 * s - 1) * (2 * k - S - 1)) % (8 * S)
    modulation = np.cos(phase * np.pi / (4 * S))
    filters = prototype * modulation / np.sqrt(S)
    return CmfbBank(S=S, filters=filters)


def n_coefficients(length: int, S: int) -> int:
    """Number of coefficients per channel for an input of ``length`` samples."""
    return -(-int(length) // S) + 1


def _padded(x: np.ndarray, S: int) -> tuple[np.ndarray, int]:
    n_blocks = n_coefficients(len(x), S)
    padded = np.zeros((n_blocks + 1) * S)
    padded[S : S + len(x)] = x
    return padded, n_blocks


def analyze(x, bank: CmfbBank, origin: str | None = None) -> SubbandSet:
    """Split ``x`` into its ``S`` decimated subband components.

    Computes ``x^s[n] = sum_k x[k] g_s[nS - k]`` for every block index ``n``
    whose filter support overlaps the input.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("analyze expects a non-empty 1-D signal")
    S = bank.S
    padded, n_blocks = _padded(x, S)
    chunks = padded.reshape(-1, S)
    # block n spans chunks n and n + 1; time-reversed taps turn the
    # convolution into an inner product with the block
    blocks = np.concatenate([chunks[:-1], chunks[1:]], axis=1)
    reversed_taps = bank.filters[:, ::-1]
    components = reversed_taps @ blocks.T
    return SubbandSet(components=components, length=len(x), S=S, origin=origin)


def synthesize(sb: SubbandSet, bank: CmfbBank) -> np.ndarray:
    """Reconstruct the waveform from its subband components (transpose of analyze)."""
    if sb.S != bank.S or sb.components.shape[0] != bank.S:
        raise ValueError(f"subband set has S={sb.S}, bank has S={bank.S}")
    S = bank.S
    n_blocks = sb.components.shape[1]
    if n_blocks != n_coefficients(sb.length, S):
        raise ValueError("subband set length does not match its coefficient count")
    blocks = sb.components.T @ bank.filters[:, ::-1]
    out = np.zeros((n_blocks + 1) * S)
    out2 = out.reshape(-1, S)
    out2[:-1] += blocks[:, :S]
    out2[1:] += blocks[:, S:]
    return out[S : S + sb.length]


def orthogonality_residual(bank: CmfbBank) -> float:
    """Max deviation of ``sum_k g_s[k] g_s'[k - mS]`` from ``delta(s, s') delta(m, 0)``.

    Checked directly for shifts ``m`` in ``{-1, 0, 1}`` (longer shifts do not
    overlap a ``2S``-tap filter).
    """
    S = bank.S
    g = bank.filters
    worst = np.max(np.abs(g @ g.T - np.eye(S)))
    # m = 1: g_s[k] g_s'[k - S] overlaps on k = S+1..2S
    shifted = g[:, S:] @ g[:, :S].T
    worst = max(worst, np.max(np.abs(shifted)))
    return float(worst)
