"""Feature extraction: subband dynamics, MFCCs, CMVN, GMM training and VTS.

Subband dynamics
    Each subband component is cut into ``T`` frames of 25 ms at a 15 ms hop
    (25 ms frames overlapping by 10 ms, spanning 160 ms for ``T = 10``);
    frame log-energies and their first and second regression differences form
    a ``3T`` vector.  The vectors are standardised with statistics of the
    same quantities over all frames of the sentence.

MFCC
    Pre-emphasis 0.97, 25 ms Hamming frames every 10 ms, 512-point FFT,
    26 triangular mel filters over 0-8 kHz, log floor 1e-10, orthonormal
    DCT-II keeping 13 coefficients (c0 included), deltas and delta-deltas by
    +/-2 frame regression with edge replication.

VTS
    First-order vector Taylor series in the log-mel domain with a clean-speech
    GMM: component means shift by ``log(1 + exp(mu_n - mu_x))`` and the
    compensated frame is the noisy frame minus the posterior-weighted shift.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.fft import dct
from scipy.special import expit, logsumexp

from .corpus import SAMPLE_RATE, Utterance, window_at
from .filterbank import CmfbBank, analyze

__all__ = [
    "LOG_FLOOR",
    "DynamicSubbandFeature",
    "dynamics_framing",
    "regression_deltas",
    "subband_dynamics",
    "sentence_dynamics_stats",
    "standardize_dynamics",
    "SubbandFeatureConfig",
    "subband_features",
    "MfccConfig",
    "mel_filterbank",
    "frame_signal",
    "log_mel",
    "cepstra",
    "mfcc_sequence",
    "concat_center",
    "cmvn",
    "GmmModel",
    "gmm_train",
    "vts_compensate",
    "edge_noise_estimate",
    "write_feature_dump",
    "read_feature_dump",
]

LOG_FLOOR = 1e-10


def regression_deltas(seq, width: int = 2) -> np.ndarray:
    """``d_t = sum_k k (c_{t+k} - c_{t-k}) / (2 sum_k k^2)`` along axis 0, edges replicated."""
    seq = np.asarray(seq, dtype=float)
    n = len(seq)
    padded = np.concatenate([np.repeat(seq[:1], width, axis=0), seq, np.repeat(seq[-1:], width, axis=0)])
    num = np.zeros_like(seq)
    for k in range(1, width + 1):
        num += k * (padded[width + k : width + k + n] - padded[width - k : width - k + n])
    return num / (2.0 * sum(k * k for k in range(1, width + 1)))


# subband dynamics ---------------------------------------------------------------


@dataclass(frozen=True)
class DynamicSubbandFeature:
    omega: np.ndarray
    delta: np.ndarray
    delta2: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.delta, self.delta2])


def dynamics_framing(S: int, T: int = 10, frame_ms: float = 25.0, hop_ms: float = 15.0):
    """Frame starts and length in subband samples (subband rate ``16 kHz / S``)."""
    per_ms = SAMPLE_RATE / 1000.0 / S
    length = max(1, int(np.floor(frame_ms * per_ms + 0.5)))
    starts = np.floor(np.arange(T) * hop_ms * per_ms + 0.5).astype(int)
    return starts, length


def _frame_log_energies(xs, starts, length):
    idx = starts[:, None] + np.arange(length)[None, :]
    energies = np.sum(np.asarray(xs)[..., idx] ** 2, axis=-1)
    return np.log(np.maximum(energies, LOG_FLOOR))


def subband_dynamics(xs, T: int = 10, S: int = 16, frame_ms: float = 25.0,
                     hop_ms: float = 15.0) -> DynamicSubbandFeature:
    """Log-energy trajectory of one subband component and its deltas.

    ``xs`` holds subband-domain samples at rate ``16 kHz / S``.
    """
    xs = np.asarray(xs, dtype=float)
    starts, length = dynamics_framing(S, T, frame_ms, hop_ms)
    need = int(starts[-1] + length)
    if len(xs) < need:
        raise ValueError(f"segment of {len(xs)} subband samples is too short; {T} frames need {need}")
    omega = _frame_log_energies(xs, starts, length)
    delta = regression_deltas(omega)
    return DynamicSubbandFeature(omega, delta, regression_deltas(delta))


def _dynamics_matrix(components, T, S, frame_ms, hop_ms):
    """(S, 3T) dynamics of all subbands of one segment."""
    starts, length = dynamics_framing(S, T, frame_ms, hop_ms)
    need = int(starts[-1] + length)
    if components.shape[1] < need:
        raise ValueError(f"segment of {components.shape[1]} subband samples is too short; {T} frames need {need}")
    omega = _frame_log_energies(components, starts, length)
    delta = regression_deltas(omega.T).T
    delta2 = regression_deltas(delta.T).T
    return np.concatenate([omega, delta, delta2], axis=1)


def sentence_dynamics_stats(sentence_components, S: int, frame_ms: float = 25.0,
                            hop_ms: float = 15.0):
    """Per-subband mean and std of (log-energy, delta, delta2) over all sentence frames.

    Returns two ``(S, 3)`` arrays; zero standard deviations are replaced by 1.
    """
    comps = np.asarray(sentence_components, dtype=float)
    per_ms = SAMPLE_RATE / 1000.0 / S
    length = max(1, int(np.floor(frame_ms * per_ms + 0.5)))
    hop = hop_ms * per_ms
    n_frames = int(np.floor((comps.shape[1] - length) / hop)) + 1
    if n_frames < 2:
        raise ValueError("sentence too short for dynamics statistics")
    starts = np.floor(np.arange(n_frames) * hop + 0.5).astype(int)
    starts = starts[starts + length <= comps.shape[1]]
    omega = _frame_log_energies(comps, starts, length).T  # (frames, S)
    delta = regression_deltas(omega)
    delta2 = regression_deltas(delta)
    stack = np.stack([omega, delta, delta2], axis=-1)  # (frames, S, 3)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def standardize_dynamics(omega_matrix, mean, std, T: int = 10) -> np.ndarray:
    """Standardise (S, 3T) dynamics with (S, 3) sentence statistics."""
    m = np.repeat(mean, T, axis=1)
    s = np.repeat(std, T, axis=1)
    return (np.asarray(omega_matrix) - m) / s


@dataclass(frozen=True)
class SubbandFeatureConfig:
    """Segmenting and framing for the subband front-end.

    ``window_ms`` is the waveform window fed to the even kernel;
    ``dynamics_window_ms`` the (longer) window framed for the dynamics.
    ``unit_scale`` divides the standardised dynamics by ``sqrt(3T)`` so they
    have roughly unit norm, the regime the polynomial kernel is meant for.
    ``noise_subbands`` replaces the listed subband components with white
    noise (used to probe how the meta-level handles a useless subband).
    """

    S: int = 16
    T: int = 10
    window_ms: float = 100.0
    dynamics_window_ms: float = 160.0
    frame_ms: float = 25.0
    hop_ms: float = 15.0
    standardize: bool = True
    unit_scale: bool = True
    noise_subbands: tuple = ()


def subband_features(u: Utterance, bank: CmfbBank, cfg: SubbandFeatureConfig = SubbandFeatureConfig(),
                     samples=None, noise_seed: int = 0):
    """Subband waveforms and dynamics of every phone in an utterance.

    Returns ``X`` of shape ``(n_phones, S, d)`` and ``Omega`` of shape
    ``(n_phones, S, 3T)``.  ``samples`` overrides the utterance audio (e.g. a
    corrupted copy with the same alignment).
    """
    x = u.samples if samples is None else np.asarray(samples, dtype=float)
    S = bank.S
    n_win = int(round(cfg.window_ms * SAMPLE_RATE / 1000.0))
    n_dyn = int(round(cfg.dynamics_window_ms * SAMPLE_RATE / 1000.0))
    rng = np.random.default_rng(noise_seed) if cfg.noise_subbands else None

    def decompose(signal):
        comps = analyze(signal, bank).components
        if rng is not None:
            comps = comps.copy()
            for s in cfg.noise_subbands:
                comps[s] = rng.standard_normal(comps.shape[1]) * np.sqrt(np.mean(signal**2))
        return comps

    if cfg.standardize:
        mean, std = sentence_dynamics_stats(decompose(x), S, cfg.frame_ms, cfg.hop_ms)
    X, O = [], []
    for p in u.phones:
        X.append(decompose(window_at(x, p.center, n_win)))
        dyn = _dynamics_matrix(decompose(window_at(x, p.center, n_dyn)), cfg.T, S, cfg.frame_ms, cfg.hop_ms)
        if cfg.standardize:
            dyn = standardize_dynamics(dyn, mean, std, cfg.T)
        if cfg.unit_scale:
            dyn = dyn / np.sqrt(dyn.shape[1])
        O.append(dyn)
    if not X:
        d = analyze(np.zeros(n_win), bank).components.shape[1]
        return np.zeros((0, S, d)), np.zeros((0, S, 3 * cfg.T))
    return np.array(X), np.array(O)


# MFCC -------------------------------------------------------------------------------


@dataclass(frozen=True)
class MfccConfig:
    pre_emphasis: float = 0.97
    frame_len: int = 400
    hop: int = 160
    n_fft: int = 512
    n_mels: int = 26
    fmin: float = 0.0
    fmax: float = 8000.0
    n_ceps: int = 13
    delta_width: int = 2
    context: int = 10
    unit_scale: bool = True


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Triangular mel filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    mels = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    edges = _mel_to_hz(mels)
    freqs = np.arange(cfg.n_fft // 2 + 1) * SAMPLE_RATE / cfg.n_fft
    fb = np.zeros((cfg.n_mels, len(freqs)))
    for m in range(cfg.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


def frame_signal(x, frame_len: int = 400, hop: int = 160) -> np.ndarray:
    """``floor((L - frame_len) / hop) + 1`` frames, no padding."""
    x = np.asarray(x, dtype=float)
    if len(x) < frame_len:
        raise ValueError(f"signal of {len(x)} samples is shorter than one frame ({frame_len})")
    n = (len(x) - frame_len) // hop + 1
    idx = np.arange(n)[:, None] * hop + np.arange(frame_len)[None, :]
    return x[idx]


_FB_CACHE: dict = {}


def log_mel(x, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Log mel filter-bank energies, shape ``(n_frames, n_mels)``."""
    x = np.asarray(x, dtype=float)
    emph = np.concatenate([x[:1], x[1:] - cfg.pre_emphasis * x[:-1]])
    frames = frame_signal(emph, cfg.frame_len, cfg.hop) * np.hamming(cfg.frame_len)
    power = np.abs(np.fft.rfft(frames, cfg.n_fft)) ** 2
    fb = _FB_CACHE.get(cfg)
    if fb is None:
        fb = _FB_CACHE[cfg] = mel_filterbank(cfg)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def cepstra(logmel, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Static + delta + delta-delta cepstra, shape ``(n_frames, 3 * n_ceps)``."""
    c = dct(np.asarray(logmel), type=2, norm="ortho", axis=1)[:, : cfg.n_ceps]
    d = regression_deltas(c, cfg.delta_width)
    dd = regression_deltas(d, cfg.delta_width)
    return np.concatenate([c, d, dd], axis=1)


def mfcc_sequence(u, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Per-frame 39-dim MFCC vectors of an utterance (or raw sample array)."""
    x = u.samples if isinstance(u, Utterance) else u
    if len(x) < cfg.frame_len + (cfg.context - 1) * cfg.hop:
        raise ValueError(f"utterance too short for {cfg.context} frames")
    return cepstra(log_mel(x, cfg), cfg)


def concat_center(seq, center_sample: int, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Concatenate the ``context`` frames whose centres are nearest ``center_sample``.

    With ``cfg.unit_scale`` the result is divided by the square root of its
    dimension, so CMVN-standardised input gives vectors of roughly unit norm.
    """
    seq = np.asarray(seq)
    n = len(seq)
    T = cfg.context
    if n < T:
        raise ValueError(f"need at least {T} frames, have {n}")
    # frame t is centred on t * hop + frame_len / 2
    first = int(np.floor((center_sample - cfg.frame_len / 2) / cfg.hop - (T - 1) / 2 + 0.5))
    first = min(max(first, 0), n - T)
    out = seq[first : first + T].reshape(-1)
    return out / np.sqrt(out.size) if cfg.unit_scale else out


def cmvn(features) -> np.ndarray:
    """Per-dimension zero mean / unit variance across a sentence; constant dims become 0."""
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or len(f) < 2:
        raise ValueError("CMVN needs at least two frames")
    mean = f.mean(axis=0)
    centered = f - mean
    std = np.sqrt(np.mean(centered**2, axis=0))
    scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, np.inf)
    return centered / scale


# GMM and VTS ------------------------------------------------------------------------


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_history: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_loglik(self, X, means=None, variances=None) -> np.ndarray:
        """``log w_k + log N(x; mu_k, diag var_k)``, shape ``(n, K)`` (or ``(n, K)`` per-frame means)."""
        X = np.asarray(X, dtype=float)
        mu = self.means if means is None else means
        var = self.variances if variances is None else variances
        inv = 1.0 / var
        quad = (X**2) @ inv.T - 2.0 * X @ (mu * inv).T + np.sum(mu**2 * inv, axis=1)
        logdet = np.sum(np.log(var), axis=1)
        return np.log(self.weights) - 0.5 * (quad + logdet + X.shape[1] * np.log(2 * np.pi))

    def loglik(self, X) -> float:
        """Mean per-vector log-likelihood."""
        return float(np.mean(logsumexp(self.component_loglik(X), axis=1)))


def gmm_train(X, K: int = 64, seed: int = 0, max_iter: int = 100, tol: float = 1e-5,
              var_floor: float = 1e-4) -> GmmModel:
    """EM for a diagonal GMM with k-means initialisation.

    Stops when the relative improvement of the mean log-likelihood drops below
    ``tol`` or after ``max_iter`` iterations.  ``loglik_history`` records the
    log-likelihood of the initial model and after every M-step.
    """
    X = np.asarray(X, dtype=float)
    n, D = X.shape
    if n < K:
        raise ValueError(f"{n} vectors cannot support {K} components")
    if n < 10 * K:
        raise ValueError(f"need at least {10 * K} vectors for {K} components, got {n}")
    if K == 1:
        means = X.mean(axis=0, keepdims=True)
        variances = np.maximum(X.var(axis=0, keepdims=True), var_floor)
        model = GmmModel(np.ones(1), means, variances)
        model.loglik_history = [model.loglik(X)]
        return model

    centroids, labels = kmeans2(X, K, seed=seed, minit="++", missing="warn")
    weights = np.bincount(labels, minlength=K).astype(float)
    variances = np.empty((K, D))
    global_var = np.maximum(X.var(axis=0), var_floor)
    for k in range(K):
        members = X[labels == k]
        variances[k] = members.var(axis=0) if len(members) > 1 else global_var
    empty = weights == 0
    weights[empty] = 1.0
    weights /= weights.sum()
    model = GmmModel(weights, centroids.astype(float), np.maximum(variances, var_floor))

    history = [model.loglik(X)]
    for _ in range(max_iter):
        log_resp = model.component_loglik(X)
        log_resp -= logsumexp(log_resp, axis=1, keepdims=True)
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)
        alive = nk > 1e-10 * n
        means = model.means.copy()
        variances = model.variances.copy()
        means[alive] = (resp[:, alive].T @ X) / nk[alive, None]
        second = (resp[:, alive].T @ X**2) / nk[alive, None]
        variances[alive] = np.maximum(second - means[alive] ** 2, var_floor)
        weights = np.where(alive, nk, 0.0)
        weights = np.maximum(weights / weights.sum(), 1e-300)
        model = GmmModel(weights, means, variances)
        history.append(model.loglik(X))
        if abs(history[-1] - history[-2]) < tol * abs(history[-2]):
            break
    model.loglik_history = history
    return model


def edge_noise_estimate(logmel, n_edge: int = 10):
    """Noise log-mel mean and variance from the first and last ``n_edge`` frames.

    The mean is the log of the average linear mel power of those frames.
    """
    logmel = np.asarray(logmel, dtype=float)
    k = min(n_edge, len(logmel))
    edge = np.concatenate([logmel[:k], logmel[len(logmel) - k :]])
    mean = logsumexp(edge, axis=0) - np.log(len(edge))
    var = edge.var(axis=0) if len(edge) > 1 else np.zeros(logmel.shape[1])
    return mean, var


def vts_compensate(noisy_logmel, gmm: GmmModel, noise_mean=None, noise_var=None,
                   n_edge: int = 10, iterations: int = 1) -> np.ndarray:
    """First-order VTS estimate of clean log-mel frames.

    ``noise_mean`` / ``noise_var`` default to :func:`edge_noise_estimate`;
    a scalar or ``-inf`` noise mean is broadcast over dimensions.  Each
    iteration replaces the frames by ``y - sum_k gamma_k(y) g_k`` with
    ``g_k = log(1 + exp(mu_n - mu_x,k))``; posteriors use the compensated
    component means and the first-order variances
    ``J^2 var_x + (1 - J)^2 var_n`` with ``J = 1 / (1 + exp(mu_n - mu_x))``.
    """
    Y = np.atleast_2d(np.asarray(noisy_logmel, dtype=float))
    if Y.shape[1] != gmm.dim:
        raise ValueError(f"features have dimension {Y.shape[1]}, GMM has {gmm.dim}")
    if noise_mean is None:
        est_mean, est_var = edge_noise_estimate(Y, n_edge)
        noise_mean = est_mean
        if noise_var is None:
            noise_var = est_var
    mu_n = np.broadcast_to(np.asarray(noise_mean, dtype=float), (gmm.dim,))
    var_n = np.zeros(gmm.dim) if noise_var is None else np.broadcast_to(np.asarray(noise_var, float), (gmm.dim,))

    diff = mu_n[None, :] - gmm.means  # (K, D)
    g = np.logaddexp(0.0, diff)
    J = expit(-diff)
    mu_y = gmm.means + g
    var_y = np.maximum(J**2 * gmm.variances + (1.0 - J) ** 2 * var_n, 1e-4)
    out = Y
    for _ in range(max(1, iterations)):
        log_post = gmm.component_loglik(Y, mu_y, var_y)
        log_post -= logsumexp(log_post, axis=1, keepdims=True)
        out = Y - np.exp(log_post) @ g
    return out


# feature dump -----------------------------------------------------------------------

_HEADER = struct.Struct("<H")
_META = struct.Struct("<iI")


def write_feature_dump(path, ids, class_ids, features) -> Path:
    """Binary feature records plus a text index.

    Record layout (little endian): ``uint16`` id length, UTF-8 id bytes,
    ``int32`` class id (-1 if unknown), ``uint32`` dimension, ``float32``
    payload.  The index ``<path>.idx`` has one ``offset id class_id dim``
    line per record.
    """
    path = Path(path)
    lines = []
    with open(path, "wb") as fh:
        for rid, cid, vec in zip(ids, class_ids, features):
            vec = np.asarray(vec, dtype="<f4").ravel()
            raw = str(rid).encode("utf-8")
            offset = fh.tell()
            fh.write(_HEADER.pack(len(raw)))
            fh.write(raw)
            fh.write(_META.pack(-1 if cid is None else int(cid), len(vec)))
            fh.write(vec.tobytes())
            lines.append(f"{offset} {rid} {-1 if cid is None else int(cid)} {len(vec)}")
    Path(str(path) + ".idx").write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def read_feature_dump(path):
    """Inverse of :func:`write_feature_dump`; returns ``(ids, class_ids, list of float32 arrays)``."""
    data = Path(path).read_bytes()
    ids, cids, feats = [], [], []
    pos = 0
    while pos < len(data):
        (n,) = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        ids.append(data[pos : pos + n].decode("utf-8"))
        pos += n
        cid, dim = _META.unpack_from(data, pos)
        pos += _META.size
        feats.append(np.frombuffer(data, dtype="<f4", count=dim, offset=pos).copy())
        pos += 4 * dim
        cids.append(cid)
    return ids, cids, feats
