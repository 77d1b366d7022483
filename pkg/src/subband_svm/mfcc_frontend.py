"""Cepstral baseline: MFCC features, degree-6 polynomial SVMs and pairwise ECOC.

Per-phone pipeline: log-mel -> VTS (scenarios with compensation) -> DCT and
deltas -> CMVN over the sentence -> the 10 frames nearest the phone centre
concatenated into a 390-dimensional vector.

Training scenarios
    ``anechoic_vts``           clean anechoic training, VTS on test data
    ``reverb_matched_vts``     training audio (and the VTS GMM) convolved with R
    ``reverb_mismatched_vts``  training audio convolved with the proxy R'
    ``matched``                training audio corrupted exactly like the test
                               data, no VTS
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import GmmModel, MfccConfig, cepstra, cmvn, concat_center, gmm_train, log_mel, vts_compensate
from .kernels import KernelParams, gram_kp
from .multiclass import CodingMatrix, build_pairwise, decode_many
from .signal import Corruption, corrupt, normalize_unit_energy
from .svm import DEFAULT_TOL, BinarySvmModel, smo

__all__ = [
    "MFCC_SCENARIOS",
    "MfccScenario",
    "MfccClassifier",
    "mfcc_instances",
    "mfcc_feature_set",
    "train_mfcc_classifier",
    "mfcc_scores",
    "classify_mfcc",
]

MFCC_SCENARIOS = ("anechoic_vts", "reverb_matched_vts", "reverb_mismatched_vts", "matched")


@dataclass(frozen=True)
class MfccScenario:
    kind: str = "anechoic_vts"
    rir: str = "room_R"
    proxy_rir: str = "room_R_prime"
    matched: Corruption | None = None

    def __post_init__(self):
        if self.kind not in MFCC_SCENARIOS:
            raise ValueError(f"unknown MFCC scenario {self.kind!r}; expected one of {MFCC_SCENARIOS}")
        if self.kind == "matched" and self.matched is None:
            raise ValueError("the matched scenario needs the shared train/test corruption")

    @property
    def uses_vts(self) -> bool:
        return self.kind != "matched"

    def training_corruption(self) -> Corruption:
        if self.kind == "matched":
            return self.matched
        room = {"anechoic_vts": None, "reverb_matched_vts": self.rir,
                "reverb_mismatched_vts": self.proxy_rir}[self.kind]
        return Corruption(rir=room)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rir": self.rir, "proxy_rir": self.proxy_rir,
                "matched": None if self.matched is None else self.matched.to_dict()}


def mfcc_instances(samples, phones, cfg: MfccConfig = MfccConfig(), gmm: GmmModel | None = None) -> np.ndarray:
    """``(len(phones), 39 * context)`` feature vectors of one (already corrupted) sentence."""
    lm = log_mel(samples, cfg)
    if gmm is not None:
        lm = vts_compensate(lm, gmm)
    seq = cmvn(cepstra(lm, cfg))
    if not phones:
        return np.zeros((0, seq.shape[1] * cfg.context))
    return np.array([concat_center(seq, p.center, cfg) for p in phones])


def _labelled(u):
    return [p for p in u.phones if p.class_id is not None]


def mfcc_feature_set(utterances, corruption: Corruption | None = None, cfg: MfccConfig = MfccConfig(),
                     gmm: GmmModel | None = None):
    """Stack per-phone MFCC vectors and class ids over utterances."""
    feats, ys = [], []
    for u in utterances:
        phones = _labelled(u)
        if not phones:
            continue
        x = corrupt(u.samples, corruption, u.id) if corruption is not None else normalize_unit_energy(u.samples)
        feats.append(mfcc_instances(x, phones, cfg, gmm))
        ys.extend(p.class_id for p in phones)
    if not feats:
        raise ValueError("no labelled phones in the given utterances")
    return np.concatenate(feats), np.array(ys, dtype=int)


@dataclass
class MfccClassifier:
    coding: CodingMatrix
    models: list
    train_X: np.ndarray = field(repr=False)
    scenario: MfccScenario
    gmm: GmmModel | None = None
    cfg: MfccConfig = MfccConfig()
    theta: int = 6

    @property
    def N(self) -> int:
        return self.coding.N


def train_mfcc_classifier(train_utterances, scenario: MfccScenario = MfccScenario(), M: int | None = None,
                          cfg: MfccConfig = MfccConfig(), theta: int = 6, C: float = 1.0,
                          gmm_components: int = 64, seed: int = 0, tol: float = DEFAULT_TOL) -> MfccClassifier:
    """Train all pairwise polynomial-kernel SVMs (and the VTS GMM) for a scenario.

    Training features are computed without VTS; the GMM models the log-mel
    frames of the scenario's training audio.
    """
    corruption = scenario.training_corruption()
    X, y = mfcc_feature_set(train_utterances, corruption, cfg)
    M = int(y.max()) + 1 if M is None else M
    counts = np.bincount(y, minlength=M)
    missing = [c for c in range(M) if counts[c] == 0]
    if missing:
        raise ValueError(f"classes absent from training data: {missing}")

    gmm = None
    if scenario.uses_vts:
        frames = np.concatenate([log_mel(corrupt(u.samples, corruption, u.id), cfg) for u in train_utterances])
        gmm = gmm_train(frames, gmm_components, seed=seed)

    coding = build_pairwise(M)
    kernel = KernelParams("poly", theta)
    K = gram_kp(X, theta=theta)
    members = [np.flatnonzero(y == c) for c in range(M)]
    models = []
    for i, j in coding.pairs:
        idx = np.concatenate([members[i], members[j]])
        yy = np.where(y[idx] == i, 1.0, -1.0)
        res = smo(K[np.ix_(idx, idx)], yy, C, tol)
        sv = np.flatnonzero(res.alpha > 0.0)
        models.append(BinarySvmModel(X[idx[sv]], idx[sv], res.alpha[sv], yy[sv], res.b, kernel, C,
                                     {"iterations": res.iterations, "gap": res.gap, "converged": res.converged}))
    return MfccClassifier(coding, models, X, scenario, gmm, cfg, theta)


def mfcc_scores(clf: MfccClassifier, utterances, corruption: Corruption | None = None):
    """``(scores (n, N), class ids (n,))`` for every labelled phone of already-recorded
    utterances corrupted by ``corruption``."""
    X, y = mfcc_feature_set(utterances, corruption, clf.cfg, clf.gmm)
    G = gram_kp(X, clf.train_X, clf.theta)
    scores = np.column_stack([G[:, m.support_index] @ m.coef + m.b for m in clf.models])
    return scores, y


def classify_mfcc(clf: MfccClassifier, utterances, corruption: Corruption | None = None,
                  loss: str = "hinge") -> np.ndarray:
    scores, _ = mfcc_scores(clf, utterances, corruption)
    return decode_many(scores, clf.coding, loss)
