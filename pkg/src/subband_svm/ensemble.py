"""Per-subband base classifiers and their aggregation.

Every binary problem ``n`` (a class pair) gets ``S`` base SVMs, one per
subband, each using the subband kernel on ``(x^s, Omega^s)``.  Their scores
``f(x) = [f^1, ..., f^S]`` are combined either by majority voting
``h = sum_s sign(f^s)`` or by a meta-level linear SVM ``h = <w, f> + v``
trained on a held-out development subset (stacked generalisation).

Training features live in a :class:`SubbandFeatureSet`; base models keep
``support_index`` into it, and scoring goes through one test-by-train Gram
matrix per subband shared by all binary problems.
"""

from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .corpus import Utterance
from .features import SubbandFeatureConfig, subband_features
from .filterbank import CmfbBank, design_cmfb
from .kernels import KernelParams, gram_komega
from .multiclass import CodingMatrix, build_pairwise, decode_many
from .signal import Corruption, NoiseSpec, corrupt, normalize_unit_energy
from .svm import DEFAULT_TOL, BinarySvmModel, LinearSvmModel, smo, train_linear

__all__ = [
    "SubbandFeatureSet",
    "extract_subband_set",
    "SubbandEnsemble",
    "train_base",
    "base_score_matrix",
    "base_scores",
    "majority_vote",
    "ensemble_error_analytic",
    "ScenarioSpec",
    "SCENARIO_KINDS",
    "train_stacked",
    "stacked_score",
    "ensemble_decisions",
    "classify",
    "weight_report",
    "write_weight_report",
    "save_ensemble",
    "load_ensemble",
]

log = logging.getLogger(__name__)


# feature store --------------------------------------------------------------------


@dataclass
class SubbandFeatureSet:
    """Row-aligned subband waveforms ``X (n, S, d)``, dynamics ``O (n, S, 3T)`` and class ids."""

    X: np.ndarray
    O: np.ndarray
    y: np.ndarray
    keys: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def S(self) -> int:
        return self.X.shape[1]

    def subband(self, s: int):
        return self.X[:, s], self.O[:, s]

    def take(self, idx) -> "SubbandFeatureSet":
        idx = np.asarray(idx, dtype=int)
        return SubbandFeatureSet(self.X[idx], self.O[idx], self.y[idx], [self.keys[i] for i in idx] if self.keys else [])

    @staticmethod
    def concat(sets) -> "SubbandFeatureSet":
        sets = list(sets)
        return SubbandFeatureSet(
            np.concatenate([s.X for s in sets]),
            np.concatenate([s.O for s in sets]),
            np.concatenate([s.y for s in sets]),
            [k for s in sets for k in s.keys],
        )


def _utterance_seed(base: int, uid: str) -> int:
    return (int(base) * 7919 + zlib.crc32(uid.encode("utf-8"))) % (2**32)


def extract_subband_set(utterances, bank: CmfbBank | None = None,
                        cfg: SubbandFeatureConfig = SubbandFeatureConfig(),
                        corruption: Corruption | None = None, seed: int = 0) -> SubbandFeatureSet:
    """Features of every labelled phone; sentences are unit-energy normalised
    (and corrupted when ``corruption`` is given) before segmentation."""
    bank = bank or design_cmfb(cfg.S)
    if bank.S != cfg.S:
        raise ValueError(f"filter bank has {bank.S} channels, config asks for {cfg.S}")
    Xs, Os, ys, keys = [], [], [], []
    for u in utterances:
        x = corrupt(u.samples, corruption, u.id) if corruption is not None else normalize_unit_energy(u.samples)
        keep = [k for k, p in enumerate(u.phones) if p.class_id is not None]
        if not keep:
            continue
        sub = Utterance(u.id, u.samples, [u.phones[k] for k in keep], u.sample_rate)
        X, O = subband_features(sub, bank, cfg, samples=x, noise_seed=_utterance_seed(seed, u.id))
        Xs.append(X)
        Os.append(O)
        ys.extend(sub.phones[k].class_id for k in range(len(keep)))
        keys.extend(f"{u.id}:{k}" for k in keep)
    if not Xs:
        raise ValueError("no labelled phones in the given utterances")
    return SubbandFeatureSet(np.concatenate(Xs), np.concatenate(Os), np.array(ys, dtype=int), keys)


# base level -----------------------------------------------------------------------


@dataclass
class SubbandEnsemble:
    """Base models ``base[n][s]`` plus an optional meta-level per problem.

    ``meta[n]`` is a :class:`LinearSvmModel` or ``None`` when problem ``n``
    falls back to majority voting.  ``meta_scale`` (``N x S``) divides the
    base scores before the meta level when score standardisation is enabled
    (all ones otherwise).
    """

    coding: CodingMatrix
    kernel: KernelParams
    C: float
    train: SubbandFeatureSet
    base: list
    meta: list | None = None
    meta_scale: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def S(self) -> int:
        return self.train.S

    @property
    def N(self) -> int:
        return self.coding.N

    @property
    def stacked(self) -> bool:
        return self.meta is not None

    def weights(self) -> np.ndarray:
        """``(N, S)`` meta weights in raw-score units (NaN rows for fallback problems)."""
        if self.meta is None:
            raise ValueError("ensemble has no meta level")
        W = np.full((self.N, self.S), np.nan)
        for n, m in enumerate(self.meta):
            if m is not None:
                W[n] = m.w / self.meta_scale[n]
        return W


def _subband_gram(A: SubbandFeatureSet, s: int, B: SubbandFeatureSet | None, theta: int) -> np.ndarray:
    XA, OA = A.subband(s)
    if B is None:
        return gram_komega(XA, OA, theta=theta, allow_zero=True)
    XB, OB = B.subband(s)
    return gram_komega(XA, OA, XB, OB, theta=theta, allow_zero=True)


def train_base(train: SubbandFeatureSet, M: int | None = None, theta: int = 6, C: float = 1.0,
               tol: float = DEFAULT_TOL) -> SubbandEnsemble:
    """Train the ``N x S`` base SVMs on (clean) training features."""
    M = int(train.y.max()) + 1 if M is None else M
    counts = np.bincount(train.y, minlength=M)
    missing = [c for c in range(M) if counts[c] == 0]
    if missing:
        raise ValueError(f"classes absent from training data: {missing}")
    coding = build_pairwise(M)
    kernel = KernelParams("omega", theta)
    members = [np.flatnonzero(train.y == c) for c in range(M)]
    base = [[None] * train.S for _ in range(coding.N)]
    for s in range(train.S):
        K = _subband_gram(train, s, None, theta)
        for n, (i, j) in enumerate(coding.pairs):
            idx = np.concatenate([members[i], members[j]])
            y = np.where(train.y[idx] == i, 1.0, -1.0)
            res = smo(K[np.ix_(idx, idx)], y, C, tol)
            sv = np.flatnonzero(res.alpha > 0.0)
            base[n][s] = BinarySvmModel(
                support=(train.X[idx[sv], s], train.O[idx[sv], s]),
                support_index=idx[sv],
                alphas=res.alpha[sv],
                labels=y[sv],
                b=res.b,
                kernel=kernel,
                C=C,
                info={"iterations": res.iterations, "gap": res.gap, "converged": res.converged},
            )
    return SubbandEnsemble(coding, kernel, C, train, base)


def base_score_matrix(ens: SubbandEnsemble, feats: SubbandFeatureSet) -> np.ndarray:
    """Base scores of every instance for every problem, shape ``(n, N, S)``."""
    if feats.S != ens.S:
        raise ValueError(f"features have {feats.S} subbands, ensemble has {ens.S}")
    out = np.empty((len(feats), ens.N, ens.S))
    for s in range(ens.S):
        G = _subband_gram(feats, s, ens.train, ens.kernel.theta)
        for n in range(ens.N):
            m = ens.base[n][s]
            if m is None:
                raise ValueError(f"base model ({n}, {s}) is not trained")
            out[:, n, s] = G[:, m.support_index] @ m.coef + m.b
    return out


def base_scores(ens: SubbandEnsemble, x, n: int) -> np.ndarray:
    """S-vector of base scores for one segment given as ``(X (S, d), Omega (S, 3T))``."""
    X, O = x
    return np.array([
        float(ens.base[n][s].decision_function((np.atleast_2d(X[s]), np.atleast_2d(O[s])))[0])
        for s in range(ens.S)
    ])


def majority_vote(f) -> np.ndarray:
    """``sum_s sign(f^s)`` over the last axis, with ``sign(0) = +1``."""
    f = np.asarray(f, dtype=float)
    return np.sum(np.where(f >= 0.0, 1, -1), axis=-1)


def ensemble_error_analytic(p: float, S: int):
    """Majority-vote error of ``S`` independent channels with error ``p``.

    Returns ``(p_e, bound)`` with
    ``p_e = sum_{s >= ceil(S/2)} C(S, s) p^s (1 - p)^(S - s)`` and
    ``bound = 0.5 (4 p (1 - p))^(S / 2)``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"error probability must lie in [0, 1], got {p}")
    if S < 1:
        raise ValueError("need at least one channel")
    k = -(-S // 2)
    p_e = float(binom.sf(k - 1, S, p))
    bound = 0.5 * (4.0 * p * (1.0 - p)) ** (S / 2.0)
    return p_e, float(bound)


# meta level -----------------------------------------------------------------------

SCENARIO_KINDS = (
    "clean",
    "multistyle_anechoic",
    "multistyle_reverb_matched",
    "multistyle_reverb_mismatched",
    "matched",
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Corruption applied to the development data for meta-level training.

    Multi-style kinds use the clean copies plus white noise at 0 dB (1:1);
    the reverberant kinds convolve both copies with ``rir`` (matched) or
    ``proxy_rir`` (mismatched).  ``matched`` uses the ``test`` corruption.
    """

    kind: str = "multistyle_anechoic"
    rir: str = "room_R"
    proxy_rir: str = "room_R_prime"
    style_snr_db: float = 0.0
    test: Corruption | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario {self.kind!r}; expected one of {SCENARIO_KINDS}")
        if self.kind == "matched" and self.test is None:
            raise ValueError("the matched scenario needs the test corruption")

    def conditions(self, seed: int = 0) -> list:
        white = NoiseSpec("white", seed)
        if self.kind == "clean":
            return [Corruption()]
        if self.kind == "matched":
            return [self.test]
        room = {"multistyle_anechoic": None,
                "multistyle_reverb_matched": self.rir,
                "multistyle_reverb_mismatched": self.proxy_rir}[self.kind]
        return [Corruption(white, None, room), Corruption(white, self.style_snr_db, room)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rir": self.rir, "proxy_rir": self.proxy_rir,
                "style_snr_db": self.style_snr_db,
                "test": None if self.test is None else self.test.to_dict()}


def train_stacked(ens: SubbandEnsemble, dev_utterances=None, scenario: ScenarioSpec = ScenarioSpec(),
                  seed: int = 0, bank: CmfbBank | None = None,
                  cfg: SubbandFeatureConfig | None = None, dev_features=None,
                  standardize: bool = False, C: float = 1.0, tol: float = DEFAULT_TOL) -> SubbandEnsemble:
    """Fit one meta-level linear SVM per binary problem on development data.

    ``dev_features`` (a list of :class:`SubbandFeatureSet`, one per scenario
    condition) may be passed instead of utterances.  Problems lacking dev
    instances of either class keep majority voting; they are listed in
    ``ens.info["fallback_problems"]``.  Returns a new ensemble sharing the
    base models.
    """
    if dev_features is None:
        if dev_utterances is None:
            raise ValueError("need development utterances or precomputed features")
        cfg = cfg or SubbandFeatureConfig(S=ens.S)
        bank = bank or design_cmfb(ens.S)
        dev_features = [extract_subband_set(dev_utterances, bank, cfg, c, seed)
                        for c in scenario.conditions(seed)]
    dev = SubbandFeatureSet.concat(dev_features)
    F = base_score_matrix(ens, dev)

    meta, fallback = [], []
    scale = np.ones((ens.N, ens.S))
    for n, (i, j) in enumerate(ens.coding.pairs):
        idx = np.flatnonzero((dev.y == i) | (dev.y == j))
        y = np.where(dev.y[idx] == i, 1.0, -1.0)
        if not (np.any(y > 0) and np.any(y < 0)):
            meta.append(None)
            fallback.append(n)
            continue
        Fn = F[idx, n, :]
        if standardize:
            sd = Fn.std(axis=0)
            scale[n] = np.where(sd > 0, sd, 1.0)
        meta.append(train_linear(Fn / scale[n], y, C=C, tol=tol))
    if fallback:
        log.warning("%d binary problems fall back to majority voting", len(fallback))
    info = dict(ens.info)
    info.update({"scenario": scenario.to_dict(), "meta_seed": seed, "n_dev": len(dev),
                 "fallback_problems": fallback, "standardize_scores": standardize})
    return SubbandEnsemble(ens.coding, ens.kernel, ens.C, ens.train, ens.base, meta, scale, info)


def stacked_score(ens: SubbandEnsemble, f, n: int) -> np.ndarray:
    """``<w_n, f> + v_n`` for base-score vectors ``f`` (last axis ``S``)."""
    m = ens.meta[n] if ens.meta is not None else None
    if m is None:
        raise ValueError(f"problem {n} has no meta-level model")
    f = np.asarray(f, dtype=float)
    return (f / ens.meta_scale[n]) @ m.w + m.v


def ensemble_decisions(ens: SubbandEnsemble, F, mode: str = "stacked") -> np.ndarray:
    """Meta-level scores ``(n, N)`` from base scores ``(n, N, S)``.

    ``mode="majority"`` votes everywhere; ``"stacked"`` uses the meta level
    where one exists and majority voting for fallback problems.
    """
    F = np.asarray(F, dtype=float)
    H = majority_vote(F).astype(float)
    if mode == "majority":
        return H
    if mode != "stacked":
        raise ValueError(f"unknown aggregation {mode!r}")
    if ens.meta is None:
        raise ValueError("ensemble has no meta level; train_stacked first")
    for n, m in enumerate(ens.meta):
        if m is not None:
            H[:, n] = stacked_score(ens, F[:, n, :], n)
    return H


def classify(ens: SubbandEnsemble, feats: SubbandFeatureSet, mode: str = "stacked",
             loss: str = "hinge") -> np.ndarray:
    return decode_many(ensemble_decisions(ens, base_score_matrix(ens, feats), mode), ens.coding, loss)


# reporting and storage ----------------------------------------------------------


def weight_report(ens: SubbandEnsemble) -> np.ndarray:
    """``(S, 2)`` mean and population standard deviation of the meta weights
    across binary problems (fallback problems excluded)."""
    W = ens.weights()
    W = W[~np.isnan(W).any(axis=1)]
    if len(W) == 0:
        return np.full((ens.S, 2), np.nan)
    return np.column_stack([W.mean(axis=0), W.std(axis=0)])


def write_weight_report(ens_or_report, path) -> Path:
    rep = ens_or_report if isinstance(ens_or_report, np.ndarray) else weight_report(ens_or_report)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subband", "mean", "std"])
        for s, (m, sd) in enumerate(rep):
            w.writerow([s, repr(float(m)), repr(float(sd))])
    return path


ENSEMBLE_FORMAT = 1


def save_ensemble(ens: SubbandEnsemble, directory) -> Path:
    """Store an ensemble as ``ensemble.json`` plus ``train.npz``, ``base.npz`` and ``meta.npz``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.savez(d / "train.npz", X=ens.train.X, O=ens.train.O, y=ens.train.y)
    offsets, index, alphas, labels, b = [0], [], [], [], []
    for row in ens.base:
        for m in row:
            index.append(m.support_index)
            alphas.append(m.alphas)
            labels.append(m.labels)
            b.append(m.b)
            offsets.append(offsets[-1] + m.n_support)
    np.savez(d / "base.npz", offsets=np.array(offsets), support_index=np.concatenate(index).astype(np.int64),
             alphas=np.concatenate(alphas), labels=np.concatenate(labels), b=np.array(b))
    manifest = {"format": "subband_svm.ensemble", "version": ENSEMBLE_FORMAT, "M": ens.coding.M,
                "S": ens.S, "kernel": ens.kernel.to_dict(), "C": ens.C, "stacked": ens.stacked,
                "keys": ens.train.keys, "info": ens.info}
    if ens.stacked:
        has = np.array([m is not None for m in ens.meta])
        W = np.array([m.w if m is not None else np.zeros(ens.S) for m in ens.meta])
        v = np.array([m.v if m is not None else 0.0 for m in ens.meta])
        np.savez(d / "meta.npz", has=has, w=W, v=v, scale=ens.meta_scale)
    (d / "ensemble.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return d


def load_ensemble(directory) -> SubbandEnsemble:
    d = Path(directory)
    manifest = json.loads((d / "ensemble.json").read_text())
    if manifest.get("version") != ENSEMBLE_FORMAT:
        raise ValueError(f"unsupported ensemble format version {manifest.get('version')}")
    with np.load(d / "train.npz") as z:
        train = SubbandFeatureSet(z["X"], z["O"], z["y"], manifest.get("keys", []))
    coding = build_pairwise(manifest["M"])
    kernel = KernelParams(**manifest["kernel"])
    S = manifest["S"]
    C = manifest["C"]
    base = [[None] * S for _ in range(coding.N)]
    with np.load(d / "base.npz") as z:
        off = z["offsets"]
        for k in range(coding.N * S):
            n, s = divmod(k, S)
            sl = slice(off[k], off[k + 1])
            idx = z["support_index"][sl]
            base[n][s] = BinarySvmModel((train.X[idx, s], train.O[idx, s]), idx, z["alphas"][sl],
                                        z["labels"][sl], float(z["b"][k]), kernel, C)
    meta = scale = None
    if manifest["stacked"]:
        with np.load(d / "meta.npz") as z:
            meta = [LinearSvmModel(z["w"][n], float(z["v"][n])) if z["has"][n] else None for n in range(coding.N)]
            scale = z["scale"]
    return SubbandEnsemble(coding, kernel, C, train, base, meta, scale, manifest.get("info", {}))
