"""Sentence-level corruption: normalisation, additive noise at a set SNR, reverberation.

Conventions
-----------
* Sentences are normalised to unit energy per sample before noise is added,
  so the noise mean square equals ``10 ** (-snr_db / 10)``.
* ``snr_db=None`` (or ``+inf``) is the quiet condition: no noise is added.
* Reverberation is full linear convolution truncated to the input length
  (head-aligned), so phone alignments stay valid.
* Room impulse responses are scaled to peak ``|tap| = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
import zlib
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .corpus import SAMPLE_RATE, read_wav

__all__ = [
    "NoiseSpec",
    "Rir",
    "normalize_unit_energy",
    "gen_noise",
    "load_noise",
    "babble_noise",
    "mix_at_snr",
    "convolve_rir",
    "spectral_coloration",
    "estimate_noise_variance",
    "synthetic_rir",
    "load_rir",
    "shipped_rir",
    "is_quiet",
    "Corruption",
    "corrupt",
]

NOISE_KINDS = ("white", "pink", "file")


def is_quiet(snr_db) -> bool:
    return snr_db is None or (isinstance(snr_db, str) and snr_db == "quiet") or snr_db == np.inf


@dataclass(frozen=True)
class NoiseSpec:
    """Noise source: synthetic ``white`` / ``pink``, or a recording (``file``).

    Recordings shorter than the sentence are tiled from a random offset when
    ``tile`` is set; otherwise a random excerpt is taken.
    """

    kind: str = "white"
    seed: int = 0
    path: str | None = None
    tile: bool = True

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind == "file" and not self.path:
            raise ValueError("file noise needs a path")

    def with_seed(self, seed: int) -> "NoiseSpec":
        return NoiseSpec(self.kind, seed, self.path, self.tile)


def normalize_unit_energy(x) -> np.ndarray:
    """Scale to unit mean square: ``x / sqrt(mean(x**2))``."""
    x = np.asarray(x, dtype=float)
    power = np.mean(x**2) if len(x) else 0.0
    if not power > 0:
        raise ValueError("cannot normalise a silent (all-zero) signal")
    return x / np.sqrt(power)


def gen_noise(kind: str, n: int, seed: int) -> np.ndarray:
    """White (i.i.d. standard normal) or pink (1/f PSD, unit mean square) noise.

    Pink noise is white noise shaped in the frequency domain by ``1/sqrt(f)``
    (the DC bin takes the gain of the first nonzero bin), transformed back and
    rescaled to unit mean square.
    """
    if n <= 0:
        raise ValueError("noise length must be positive")
    rng = np.random.default_rng(seed)
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "pink":
        w = rng.standard_normal(n)
        spec = np.fft.rfft(w)
        k = np.arange(len(spec), dtype=float)
        k[0] = 1.0
        spec /= np.sqrt(k)
        y = np.fft.irfft(spec, n)
        power = np.mean(y**2)
        return y / np.sqrt(power) if power > 0 else w
    raise ValueError(f"unknown noise kind {kind!r}")


def load_noise(path) -> np.ndarray:
    """Noise recording from a 16 kHz WAV or a single-column text file."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path)
    return np.loadtxt(path, ndmin=1)


def babble_noise(utterances, n: int, n_talkers: int = 6, seed: int = 0) -> np.ndarray:
    """Speech-babble stand-in: sum of ``n_talkers`` randomly offset, tiled utterances."""
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    for k in rng.choice(len(utterances), size=n_talkers, replace=len(utterances) < n_talkers):
        x = normalize_unit_energy(utterances[k].samples)
        reps = int(np.ceil((n + len(x)) / len(x)))
        tiled = np.tile(x, reps)
        off = int(rng.integers(0, len(x)))
        out += tiled[off : off + n]
    return normalize_unit_energy(out)


def _noise_for(spec: NoiseSpec, n: int) -> np.ndarray:
    if spec.kind in ("white", "pink"):
        return gen_noise(spec.kind, n, spec.seed)
    rec = load_noise(spec.path)
    rng = np.random.default_rng(spec.seed)
    if len(rec) < n:
        if not spec.tile:
            raise ValueError(f"noise recording has {len(rec)} samples, sentence needs {n} (tiling disabled)")
        rec = np.tile(rec, int(np.ceil(n / len(rec))) + 1)
        off = int(rng.integers(0, len(rec) - n + 1))
    else:
        off = int(rng.integers(0, len(rec) - n + 1))
    return np.asarray(rec[off : off + n], dtype=float)


def mix_at_snr(clean, noise, snr_db, return_noise: bool = False):
    """Add noise to a whole sentence at the requested sentence-level SNR.

    ``noise`` is a :class:`NoiseSpec` or an explicit noise array (at least as
    long as ``clean``).  The noise is scaled so that
    ``10 log10(mean(clean**2) / mean(noise**2)) == snr_db``; for unit-energy
    sentences its mean square is ``10 ** (-snr_db / 10)``.
    """
    clean = np.asarray(clean, dtype=float)
    n = len(clean)
    if is_quiet(snr_db):
        out = clean.copy()
        return (out, np.zeros(n)) if return_noise else out
    if isinstance(noise, NoiseSpec):
        raw = _noise_for(noise, n)
    else:
        raw = np.asarray(noise, dtype=float)
        if len(raw) < n:
            raise ValueError(f"noise has {len(raw)} samples, sentence needs {n}")
        raw = raw[:n]
    noise_power = np.mean(raw**2)
    if not noise_power > 0:
        raise ValueError("noise signal is silent")
    target = np.mean(clean**2) * 10.0 ** (-float(snr_db) / 10.0)
    scaled = raw * np.sqrt(target / noise_power)
    out = clean + scaled
    return (out, scaled) if return_noise else out


@dataclass(frozen=True, eq=False)
class Rir:
    """Room impulse response, normalised to peak ``|tap| = 1``."""

    taps: np.ndarray
    name: str = "rir"

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        if taps.ndim != 1 or len(taps) == 0:
            raise ValueError("an impulse response needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("impulse response taps must be finite")
        peak = np.max(np.abs(taps))
        if peak == 0:
            raise ValueError("impulse response is identically zero")
        object.__setattr__(self, "taps", taps / peak)


def convolve_rir(x, r: Rir) -> np.ndarray:
    """Linear convolution with ``r``, truncated to ``len(x)`` (no delay compensation)."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return x.copy()
    taps = r.taps if isinstance(r, Rir) else Rir(r).taps
    if len(taps) == 1:
        return x * taps[0]
    return fftconvolve(x, taps)[: len(x)]


def spectral_coloration(r, n_fft: int = 8192) -> float:
    """``20 log10(geometric mean / arithmetic mean)`` of ``|FFT|`` on ``n_fft`` bins.

    0 dB for a flat response, negative otherwise.  Filters longer than
    ``n_fft`` use the next power of two above their length.
    """
    taps = r.taps if isinstance(r, Rir) else np.asarray(r, dtype=float)
    if len(taps) == 0 or not np.any(taps):
        raise ValueError("spectral coloration is undefined for a zero filter")
    n = n_fft if len(taps) <= n_fft else 1 << (len(taps) - 1).bit_length()
    mag = np.abs(np.fft.fft(taps, n))
    if np.any(mag == 0):
        return -np.inf
    value = 20.0 * (np.mean(np.log10(mag)) - np.log10(np.mean(mag)))
    return min(0.0, float(value))


def estimate_noise_variance(noisy, method: str = "percentile", known: float | None = None,
                            frame_ms: float = 25.0, percentile: float = 10.0) -> float:
    """Estimate the per-sample noise power of a noisy sentence.

    The default tracks the noise floor as the ``percentile``-th percentile of
    per-frame mean squares over non-overlapping ``frame_ms`` frames.  With
    ``method="known"`` the supplied ``known`` variance is returned unchanged.
    """
    if method == "known" or known is not None:
        if known is None or known < 0:
            raise ValueError("known noise variance must be a nonnegative number")
        return float(known)
    if method != "percentile":
        raise ValueError(f"unknown estimation method {method!r}")
    x = np.asarray(noisy, dtype=float)
    n = int(round(frame_ms * SAMPLE_RATE / 1000.0))
    if len(x) < n:
        raise ValueError(f"signal of {len(x)} samples is shorter than one {frame_ms} ms frame ({n} samples)")
    frames = x[: (len(x) // n) * n].reshape(-1, n)
    energies = np.mean(frames**2, axis=1)
    return float(max(0.0, np.percentile(energies, percentile)))


# room impulse responses ---------------------------------------------------------


def synthetic_rir(t60: float = 0.2, seed: int = 0, direct_to_reverb_db: float = 6.0,
                  n_early: int = 6, name: str = "synthetic") -> Rir:
    """Exponentially decaying noise tail plus a direct path and early reflections.

    The tail amplitude decays by 60 dB over ``t60`` seconds; its energy sits
    ``direct_to_reverb_db`` below the direct path.
    """
    rng = np.random.default_rng(seed)
    fs = SAMPLE_RATE
    n = int(t60 * fs)
    t = np.arange(n) / fs
    tail = rng.standard_normal(n) * 10.0 ** (-3.0 * t / t60)
    onset = int(0.002 * fs)
    tail[:onset] = 0.0
    for _ in range(n_early):
        k = int(rng.integers(onset, int(0.02 * fs)))
        tail[k] += rng.uniform(-0.6, 0.6)
    tail *= np.sqrt(10.0 ** (-direct_to_reverb_db / 10.0) / np.sum(tail**2))
    taps = tail
    taps[0] = 1.0
    return Rir(taps, name)


def load_rir(path, name: str | None = None) -> Rir:
    """Impulse response from a mono WAV file or single-column text floats."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        taps = read_wav(path)
    else:
        taps = np.loadtxt(path, ndmin=1)
    return Rir(taps, name or path.stem)


SHIPPED_RIRS = ("room_R", "room_R_prime")


def shipped_rir(name: str = "room_R") -> Rir:
    """One of the two bundled synthetic room responses (``room_R``, ``room_R_prime``)."""
    if name not in SHIPPED_RIRS:
        raise ValueError(f"unknown bundled RIR {name!r}; expected one of {SHIPPED_RIRS}")
    text = resources.files("subband_svm.data").joinpath(f"{name}.txt").read_text()
    return Rir(np.array([float(v) for v in text.split()]), name)


# sentence corruption ----------------------------------------------------------


@dataclass(frozen=True)
class Corruption:
    """Full corruption recipe for one condition: unit-energy normalisation,
    additive noise at ``snr_db`` (``None`` = quiet), then convolution with the
    bundled or user RIR named ``rir`` (``None`` = anechoic).

    The noise realisation of a sentence depends on ``noise.seed`` and the
    sentence id only, so the same noise waveform is reused across SNRs.
    """

    noise: NoiseSpec = NoiseSpec()
    snr_db: float | None = None
    rir: str | None = None
    rir_path: str | None = None

    @property
    def quiet(self) -> bool:
        return is_quiet(self.snr_db)

    def to_dict(self) -> dict:
        return {
            "noise": {"kind": self.noise.kind, "seed": self.noise.seed, "path": self.noise.path},
            "snr_db": "quiet" if self.quiet else float(self.snr_db),
            "rir": self.rir,
            "rir_path": self.rir_path,
        }

    def impulse_response(self) -> Rir | None:
        if self.rir_path:
            return load_rir(self.rir_path, self.rir)
        if self.rir:
            return shipped_rir(self.rir)
        return None


def corrupt(samples, c: Corruption, key: str = "") -> np.ndarray:
    """Apply a :class:`Corruption` to one sentence; ``key`` (the sentence id) picks the noise realisation."""
    x = normalize_unit_energy(samples)
    if not c.quiet:
        seed = (int(c.noise.seed) * 1_000_003 + zlib.crc32(key.encode("utf-8"))) % (2**32)
        x = mix_at_snr(x, c.noise.with_seed(seed), c.snr_db)
    r = c.impulse_response()
    return convolve_rir(x, r) if r is not None else x
