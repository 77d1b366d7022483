"""Experiment orchestration: configuration, SNR sweeps, grouped error, caching, reports.

A sweep evaluates front-ends (``mfcc``, ``subband`` = stacked subband
ensemble, ``majority`` = majority-voting ensemble, ``fused``) under training
regimes, noise kinds and SNRs.  A regime fixes how each front-end is trained
and whether the test audio is reverberated:

==================  =====================  ============================  ========
regime              MFCC scenario          meta-level scenario           test RIR
==================  =====================  ============================  ========
anechoic            anechoic_vts           multistyle_anechoic           none
quiet_meta          anechoic_vts           clean                         none
reverb_anechoic     anechoic_vts           multistyle_anechoic           R
reverb_matched      reverb_matched_vts     multistyle_reverb_matched     R
reverb_mismatched   reverb_mismatched_vts  multistyle_reverb_mismatched  R
matched             matched                matched                       none
==================  =====================  ============================  ========

Output directory layout::

    results.csv                 front_end,scenario,noise,snr_db,error_pct,n_test,seed
    manifest.json               resolved config, code version, cache events, warnings
    weights/<regime>[...].csv   subband,mean,std
    confusion/<...>.csv         M x M counts, rows = truth
    plot/<noise>_<regime>.dat   snr_db then one error column per front-end

``snr_db`` is written as ``quiet`` for the noise-free grid point.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import pickle
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (ClassMap, SyntheticSpec, load_class_map, load_corpus, make_synthetic_corpus,
                     sample_dev_subset, synthetic_class_map, write_wav)
from .ensemble import (ScenarioSpec, SubbandFeatureSet, base_score_matrix, ensemble_decisions,
                       extract_subband_set, train_base, train_stacked, write_weight_report)
from .features import MfccConfig, SubbandFeatureConfig
from .filterbank import design_cmfb
from .fusion import FusionParams, fuse_scores, median_abs_scale, normalize_scores, utterance_lambda
from .mfcc_frontend import MfccScenario, mfcc_feature_set, mfcc_scores, train_mfcc_classifier
from .multiclass import decode_many
from .signal import Corruption, NoiseSpec, babble_noise, corrupt, is_quiet

__all__ = [
    "REGIMES",
    "FRONT_ENDS",
    "ExperimentConfig",
    "ConfigError",
    "compute_error",
    "confusion_matrix",
    "ResultTable",
    "ModelCache",
    "Experiment",
    "run_sweep",
    "emit_plot_data",
    "read_results",
    "code_version",
]

log = logging.getLogger(__name__)

FRONT_ENDS = ("mfcc", "subband", "majority", "fused")
REGIMES = {
    "anechoic": ("anechoic_vts", "multistyle_anechoic", False),
    "quiet_meta": ("anechoic_vts", "clean", False),
    "reverb_anechoic": ("anechoic_vts", "multistyle_anechoic", True),
    "reverb_matched": ("reverb_matched_vts", "multistyle_reverb_matched", True),
    "reverb_mismatched": ("reverb_mismatched_vts", "multistyle_reverb_mismatched", True),
    "matched": ("matched", "matched", False),
}
DEFAULT_SNR_GRID = ["quiet", 18, 12, 6, 0, -6]
RESULTS_HEADER = ["front_end", "scenario", "noise", "snr_db", "error_pct", "n_test", "seed"]
CACHE_VERSION = 1


class ConfigError(ValueError):
    pass


# configuration --------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Fully-resolved experiment description, stored as JSON.

    ``corpus`` is either ``{"synthetic": {<SyntheticSpec fields>}, "seed": int,
    "n_train": int, "n_dev": int, "n_test": int}`` or ``{"audio_dir": path,
    "alignment_dir": path, "class_map": path, "split": {"train": [ids],
    "dev": [ids], "test": [ids]}}``.  Noise kinds are ``white``, ``pink``,
    ``babble`` (built from training sentences) or ``file:<path>``.  SNR grid
    entries are numbers or ``"quiet"``; an empty grid means quiet only.
    """

    corpus: dict = field(default_factory=lambda: {"synthetic": {}, "seed": 0, "n_train": 60,
                                                  "n_dev": 120, "n_test": 40})
    front_ends: list = field(default_factory=lambda: ["mfcc", "subband", "fused"])
    regimes: list = field(default_factory=lambda: ["anechoic"])
    noise_kinds: list = field(default_factory=lambda: ["white"])
    snr_grid: list = field(default_factory=lambda: list(DEFAULT_SNR_GRID))
    S: int = 16
    theta: int = 6
    C: float = 1.0
    T: int = 10
    dev_fraction: float = 0.125
    gmm_components: int = 64
    fusion: dict = field(default_factory=lambda: {"mode": "empirical"})
    seeds: dict = field(default_factory=lambda: {"noise": 99, "meta": 1, "gmm": 0, "dev": 0})
    rir: str = "room_R"
    proxy_rir: str = "room_R_prime"
    output_dir: str = "runs/out"
    cache_dir: str | None = "runs/cache"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    def validate(self) -> None:
        c = self.corpus
        if not isinstance(c, dict):
            raise ConfigError("corpus must be a mapping")
        if "synthetic" in c:
            for k in ("n_train", "n_dev", "n_test"):
                if not isinstance(c.get(k), int) or c[k] < 1:
                    raise ConfigError(f"corpus.{k} must be a positive integer")
            try:
                SyntheticSpec(**c["synthetic"])
            except TypeError as e:
                raise ConfigError(f"corpus.synthetic: {e}") from None
        elif "audio_dir" in c:
            split = c.get("split")
            if not isinstance(split, dict) or not all(k in split for k in ("train", "dev", "test")):
                raise ConfigError("file corpora need split.train, split.dev and split.test id lists")
        else:
            raise ConfigError("corpus needs either 'synthetic' or 'audio_dir'")
        bad = [f for f in self.front_ends if f not in FRONT_ENDS]
        if bad or not self.front_ends:
            raise ConfigError(f"front_ends must be a non-empty subset of {FRONT_ENDS}; bad: {bad}")
        bad = [r for r in self.regimes if r not in REGIMES]
        if bad or not self.regimes:
            raise ConfigError(f"regimes must be a non-empty subset of {sorted(REGIMES)}; bad: {bad}")
        for k in self.noise_kinds:
            if k not in ("white", "pink", "babble") and not str(k).startswith("file:"):
                raise ConfigError(f"unknown noise kind {k!r}")
        if not self.noise_kinds:
            raise ConfigError("noise_kinds must not be empty")
        for v in self.snr_grid:
            if not (v == "quiet" or (isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v))):
                raise ConfigError(f"SNR grid entries must be numbers or 'quiet', got {v!r}")
        for name in ("S", "theta", "T", "gmm_components"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.C > 0:
            raise ConfigError("C must be positive")
        if not 0 < self.dev_fraction <= 1:
            raise ConfigError("dev_fraction must lie in (0, 1]")
        try:
            FusionParams(**self.fusion)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"fusion: {e}") from None

    def grid(self) -> list:
        """SNR grid with ``None`` for quiet, order preserved, duplicates removed."""
        out = []
        for v in self.snr_grid or ["quiet"]:
            v = None if v == "quiet" else float(v)
            if v not in out:
                out.append(v)
        return out


# metrics and tables -----------------------------------------------------------------


def compute_error(predictions, truths, class_map: ClassMap | None = None) -> float:
    """Error in percent; confusions within a confusion group count as correct."""
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if len(p) != len(t):
        raise ValueError(f"{len(p)} predictions for {len(t)} truths")
    if len(t) == 0:
        raise ValueError("cannot score an empty test set")
    correct = p == t
    if class_map is not None and class_map.groups:
        correct = np.array([c or class_map.same_group(int(a), int(b)) for c, a, b in zip(correct, p, t)])
    return 100.0 * (len(t) - np.count_nonzero(correct)) / len(t)


def confusion_matrix(predictions, truths, M: int) -> np.ndarray:
    cm = np.zeros((M, M), dtype=int)
    np.add.at(cm, (np.asarray(truths), np.asarray(predictions)), 1)
    return cm


def _snr_text(snr) -> str:
    return "quiet" if is_quiet(snr) else f"{float(snr):g}"


def _snr_value(text):
    return None if text == "quiet" else float(text)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, front_end, scenario, noise, snr_db, error, n_test, seed):
        if not 0.0 <= error <= 100.0:
            raise ValueError(f"error {error} outside [0, 100]")
        if n_test <= 0:
            raise ValueError("n_test must be positive")
        self.rows.append({"front_end": front_end, "scenario": scenario, "noise": noise,
                          "snr_db": None if is_quiet(snr_db) else float(snr_db),
                          "error_pct": float(error), "n_test": int(n_test), "seed": int(seed)})

    def sorted_rows(self) -> list:
        def key(r):
            snr = np.inf if r["snr_db"] is None else r["snr_db"]
            return (r["scenario"], r["noise"], r["front_end"], -snr)
        return sorted(self.rows, key=key)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            for r in self.sorted_rows():
                w.writerow([r["front_end"], r["scenario"], r["noise"], _snr_text(r["snr_db"]),
                            f"{r['error_pct']:.4f}", r["n_test"], r["seed"]])
        return path

    def lookup(self, front_end, scenario, noise, snr_db) -> float:
        for r in self.rows:
            same_snr = (r["snr_db"] is None and is_quiet(snr_db)) or (
                r["snr_db"] is not None and not is_quiet(snr_db) and r["snr_db"] == float(snr_db))
            if r["front_end"] == front_end and r["scenario"] == scenario and r["noise"] == noise and same_snr:
                return r["error_pct"]
        raise KeyError((front_end, scenario, noise, snr_db))


def read_results(path) -> ResultTable:
    table = ResultTable()
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            table.add(r["front_end"], r["scenario"], r["noise"], _snr_value(r["snr_db"]),
                      float(r["error_pct"]), int(r["n_test"]), int(r["seed"]))
    return table


def emit_plot_data(table: ResultTable, out_dir) -> list:
    """One whitespace-delimited file per (noise, scenario): ``snr_db`` then one
    error column per front-end, rows from quiet down to the lowest SNR."""
    if not table.rows:
        raise ValueError("empty result table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    groups = sorted({(r["noise"], r["scenario"]) for r in table.rows})
    for noise, scenario in groups:
        rows = [r for r in table.rows if r["noise"] == noise and r["scenario"] == scenario]
        fronts = [f for f in FRONT_ENDS if any(r["front_end"] == f for r in rows)]
        snrs = sorted({np.inf if r["snr_db"] is None else r["snr_db"] for r in rows}, reverse=True)
        lines = [" ".join(["snr_db"] + fronts)]
        for snr in snrs:
            cells = [_snr_text(None if snr == np.inf else snr)]
            for f in fronts:
                match = [r["error_pct"] for r in rows if r["front_end"] == f
                         and (np.inf if r["snr_db"] is None else r["snr_db"]) == snr]
                cells.append(f"{match[0]:.4f}" if match else "nan")
            lines.append(" ".join(cells))
        path = out_dir / f"{noise.replace(':', '_').replace('/', '_')}_{scenario}.dat"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


# caching ------------------------------------------------------------------------------


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


class ModelCache:
    """Pickle store keyed by a content hash of what produced each entry."""

    def __init__(self, directory=None):
        self.dir = Path(directory) if directory else None
        self.events = []
        self.warnings = []
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def get(self, kind: str, key: dict, build):
        digest = _digest({"kind": kind, "key": key})
        if self.dir is None:
            return build()
        path = self.dir / f"{kind}-{digest[:24]}.pkl"
        if path.exists():
            try:
                with open(path, "rb") as fh:
                    entry = pickle.load(fh)
                if entry.get("version") == CACHE_VERSION and entry.get("digest") == digest:
                    self.events.append({"kind": kind, "digest": digest, "hit": True})
                    return entry["value"]
                self.warnings.append(f"cache entry {path.name} has version {entry.get('version')}; recomputed")
            except Exception as e:  # unreadable entry: rebuild it
                self.warnings.append(f"cache entry {path.name} unreadable ({e}); recomputed")
        value = build()
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump({"version": CACHE_VERSION, "digest": digest, "key": key, "value": value}, fh)
        tmp.replace(path)
        self.events.append({"kind": kind, "digest": digest, "hit": False})
        return value


def code_version() -> dict:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.rglob("*")):
        if p.is_file() and p.suffix in (".py", ".txt", ".map"):
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return {"package": "subband_svm", "version": __version__, "source_sha256": h.hexdigest()}


def _fingerprint(utterances) -> str:
    h = hashlib.sha256()
    for u in utterances:
        h.update(u.id.encode())
        h.update(np.ascontiguousarray(u.samples, dtype=np.float64).tobytes())
        h.update(json.dumps([(p.start, p.end, p.class_id) for p in u.phones]).encode())
    return h.hexdigest()


# experiment -------------------------------------------------------------------------


class Experiment:
    """Corpus, models and cached intermediate results of one configuration."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        self.cache = ModelCache(config.cache_dir)
        self.notes = {"fallback_problems": {}, "matched_checks": [], "timing": {}}
        self._load_corpus()
        self.bank = design_cmfb(config.S)
        self.sub_cfg = SubbandFeatureConfig(S=config.S, T=config.T)
        self.mfcc_cfg = MfccConfig()
        self.fusion = FusionParams(**config.fusion)
        self._test_scores = {}
        self._babble_path = None

    # corpus -----------------------------------------------------------------

    def _load_corpus(self):
        c = self.config.corpus
        if "synthetic" in c:
            spec = SyntheticSpec(**c["synthetic"])
            spec = SyntheticSpec(**{**asdict(spec), "n_utterances": c["n_train"] + c["n_dev"] + c["n_test"]})
            utts = make_synthetic_corpus(spec, seed=c.get("seed", 0))
            a, b = c["n_train"], c["n_train"] + c["n_dev"]
            self.train, self.dev, self.test = utts[:a], utts[a:b], utts[b:]
            self.class_map = synthetic_class_map(spec)
        else:
            audio = Path(c["audio_dir"])
            if not audio.is_dir():
                raise FileNotFoundError(f"corpus directory {audio} does not exist")
            cmap = load_class_map(c["class_map"]) if c.get("class_map") else None
            if cmap is None:
                from .corpus import timit_class_map
                cmap = timit_class_map()
            result = load_corpus(audio, c.get("alignment_dir"), cmap)
            result.raise_on_error()
            by_id = {u.id: u for u in result.utterances}
            split = c["split"]
            missing = [i for k in ("train", "dev", "test") for i in split[k] if i not in by_id]
            if missing:
                raise FileNotFoundError(f"utterances listed in the split are missing: {missing[:5]}")
            self.train = [by_id[i] for i in split["train"]]
            self.dev = [by_id[i] for i in split["dev"]]
            self.test = [by_id[i] for i in split["test"]]
            self.class_map = cmap
        self.M = self.class_map.M
        self.train_id = _fingerprint(self.train)
        self.dev_id = _fingerprint(self.dev)

    def _dev_subset(self, n_instances: int) -> np.ndarray:
        seed = self.config.seeds.get("dev", 0)
        return np.array(sample_dev_subset(list(range(n_instances)), self.config.dev_fraction, seed), dtype=int)

    # corruption -------------------------------------------------------------

    def noise_spec(self, kind: str, seed: int) -> NoiseSpec:
        if kind in ("white", "pink"):
            return NoiseSpec(kind, seed)
        if kind == "babble":
            if self._babble_path is None:
                base = Path(self.config.cache_dir or self.config.output_dir)
                base.mkdir(parents=True, exist_ok=True)
                path = base / f"babble-{self.train_id[:16]}.wav"
                if not path.exists():
                    b = babble_noise(self.train, 60 * 16000, seed=seed)
                    write_wav(path, 0.25 * b / np.max(np.abs(b)))
                self._babble_path = str(path)
            return NoiseSpec("file", seed, self._babble_path)
        return NoiseSpec("file", seed, kind.split(":", 1)[1])

    def test_corruption(self, regime: str, noise: str, snr) -> Corruption:
        reverb = REGIMES[regime][2]
        return Corruption(self.noise_spec(noise, self.config.seeds.get("noise", 99)), snr,
                          self.config.rir if reverb else None)

    def _feature_key(self):
        return {"sub_cfg": asdict(self.sub_cfg), "mfcc_cfg": asdict(self.mfcc_cfg)}

    # models -----------------------------------------------------------------

    def base_ensemble(self):
        cfg = self.config
        key = {"train": self.train_id, "theta": cfg.theta, "C": cfg.C, "M": self.M, **self._feature_key()}

        def build():
            t0 = time.time()
            feats = extract_subband_set(self.train, self.bank, self.sub_cfg)
            ens = train_base(feats, self.M, cfg.theta, cfg.C)
            self.notes["timing"]["train_base_s"] = round(time.time() - t0, 3)
            return ens

        if not hasattr(self, "_base"):
            self._base = self.cache.get("base", key, build)
        return self._base

    def meta_scenario(self, regime: str, test_c: Corruption) -> ScenarioSpec:
        kind = REGIMES[regime][1]
        return ScenarioSpec(kind, rir=self.config.rir, proxy_rir=self.config.proxy_rir,
                            test=test_c if kind == "matched" else None)

    def stacked(self, regime: str, test_c: Corruption):
        cfg = self.config
        scenario = self.meta_scenario(regime, test_c)
        seed = cfg.seeds.get("meta", 1)
        ens = self.base_ensemble()
        key = {"train": self.train_id, "dev": self.dev_id, "scenario": scenario.to_dict(), "seed": seed,
               "dev_fraction": cfg.dev_fraction, "dev_seed": cfg.seeds.get("dev", 0), "theta": cfg.theta,
               "C": cfg.C, "M": self.M, **self._feature_key()}

        def build():
            sets = [extract_subband_set(self.dev, self.bank, self.sub_cfg, c, seed)
                    for c in scenario.conditions(seed)]
            idx = self._dev_subset(len(sets[0]))
            st = train_stacked(ens, scenario=scenario, seed=seed, dev_features=[s.take(idx) for s in sets])
            clean_dev = extract_subband_set(self.dev, self.bank, self.sub_cfg).take(idx)
            F = base_score_matrix(st, clean_dev)
            st.info["fusion_scale"] = median_abs_scale(ensemble_decisions(st, F, "stacked")).tolist()
            st.info["fusion_scale_majority"] = median_abs_scale(ensemble_decisions(st, F, "majority")).tolist()
            return st

        st = self.cache.get("meta", key, build)
        if st.info.get("fallback_problems"):
            self.notes["fallback_problems"][regime] = st.info["fallback_problems"]
        return st

    def mfcc(self, regime: str, test_c: Corruption):
        cfg = self.config
        kind = REGIMES[regime][0]
        scenario = MfccScenario(kind, rir=cfg.rir, proxy_rir=cfg.proxy_rir,
                                matched=test_c if kind == "matched" else None)
        if kind == "matched":
            self.notes["matched_checks"].append({
                "regime": regime, "train": scenario.training_corruption().to_dict(),
                "test": test_c.to_dict(), "equal": scenario.training_corruption() == test_c})
        key = {"train": self.train_id, "dev": self.dev_id, "scenario": scenario.to_dict(), "theta": cfg.theta,
               "C": cfg.C, "M": self.M, "gmm": cfg.gmm_components, "gmm_seed": cfg.seeds.get("gmm", 0),
               "dev_fraction": cfg.dev_fraction, "dev_seed": cfg.seeds.get("dev", 0), **self._feature_key()}

        def build():
            clf = train_mfcc_classifier(self.train, scenario, self.M, self.mfcc_cfg, cfg.theta, cfg.C,
                                        cfg.gmm_components, cfg.seeds.get("gmm", 0))
            X, _ = mfcc_feature_set(self.dev, None, self.mfcc_cfg, clf.gmm)
            idx = self._dev_subset(len(X))
            s, _ = mfcc_scores(clf, self.dev, None)
            clf.fusion_scale = median_abs_scale(s[idx])
            return clf

        return self.cache.get("mfcc", key, build)

    # evaluation -------------------------------------------------------------

    def subband_test_scores(self, test_c: Corruption):
        key = json.dumps(test_c.to_dict(), sort_keys=True)
        if key not in self._test_scores:
            feats = extract_subband_set(self.test, self.bank, self.sub_cfg, test_c)
            self._test_scores[key] = (base_score_matrix(self.base_ensemble(), feats), feats.y)
        return self._test_scores[key]

    def utterance_lambdas(self, test_c: Corruption) -> np.ndarray:
        lams = []
        for u in self.test:
            n = sum(p.class_id is not None for p in u.phones)
            if n == 0:
                continue
            known = None
            if self.fusion.sigma_source == "known":
                known = 0.0 if test_c.quiet else 10.0 ** (-float(test_c.snr_db) / 10.0)
            lam = utterance_lambda(corrupt(u.samples, test_c, u.id), self.fusion, known)
            lams.extend([lam] * n)
        return np.array(lams)

    def evaluate(self, regime: str, noise: str, snr, front_ends=None) -> dict:
        """Predictions and truths of each front-end at one grid point."""
        front_ends = front_ends or self.config.front_ends
        test_c = self.test_corruption(regime, noise, snr)
        out = {}
        need_sub = any(f in front_ends for f in ("subband", "majority", "fused"))
        need_mfcc = any(f in front_ends for f in ("mfcc", "fused"))
        if need_sub:
            F, y = self.subband_test_scores(test_c)
        if "majority" in front_ends:
            H = ensemble_decisions(self.base_ensemble(), F, "majority")
            out["majority"] = (decode_many(H, self.base_ensemble().coding), y)
        if "subband" in front_ends or "fused" in front_ends:
            st = self.stacked(regime, test_c)
            H_sub = ensemble_decisions(st, F, "stacked")
            if "subband" in front_ends:
                out["subband"] = (decode_many(H_sub, st.coding), y)
        if need_mfcc:
            clf = self.mfcc(regime, test_c)
            S_m, y_m = mfcc_scores(clf, self.test, test_c)
            if "mfcc" in front_ends:
                out["mfcc"] = (decode_many(S_m, clf.coding), y_m)
        if "fused" in front_ends:
            if not np.array_equal(y, y_m):
                raise RuntimeError("front-ends disagree on the test instances")
            b = H_sub
            if self.fusion.normalize:
                # bring subband scores onto the MFCC per-problem scale; dividing both
                # by their own scale would reweight the hinge decode even at lam = 0
                b = normalize_scores(H_sub, st.info["fusion_scale"]) * clf.fusion_scale
            fused = fuse_scores(S_m, b, self.utterance_lambdas(test_c))
            out["fused"] = (decode_many(fused, clf.coding), y)
        return out


def _write_confusion(path: Path, cm: np.ndarray, names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truth\\pred"] + list(names))
        for name, row in zip(names, cm):
            w.writerow([name] + [int(v) for v in row])


def run_sweep(config: ExperimentConfig, experiment: Experiment | None = None) -> ResultTable:
    """Evaluate every (front-end, regime, noise, SNR) and write the run artifacts."""
    t0 = time.time()
    exp = experiment or Experiment(config)
    out = Path(config.output_dir)
    (out / "confusion").mkdir(parents=True, exist_ok=True)
    (out / "weights").mkdir(parents=True, exist_ok=True)
    table = ResultTable()
    seed = int(config.corpus.get("seed", 0))
    for regime in config.regimes:
        for noise in config.noise_kinds:
            for snr in config.grid():
                results = exp.evaluate(regime, noise, snr)
                for fe in FRONT_ENDS:
                    if fe not in results:
                        continue
                    pred, truth = results[fe]
                    table.add(fe, regime, noise, snr, compute_error(pred, truth, exp.class_map), len(truth), seed)
                    tag = f"{fe}_{regime}_{noise}_{_snr_text(snr)}".replace(":", "_").replace("/", "_")
                    _write_confusion(out / "confusion" / f"{tag}.csv",
                                     confusion_matrix(pred, truth, exp.M), exp.class_map.names)
                if "subband" in results or "fused" in results:
                    test_c = exp.test_corruption(regime, noise, snr)
                    st = exp.stacked(regime, test_c)
                    name = regime if REGIMES[regime][1] != "matched" else f"{regime}_{noise}_{_snr_text(snr)}"
                    write_weight_report(st, out / "weights" / f"{name.replace(':', '_').replace('/', '_')}.csv")
    table.to_csv(out / "results.csv")
    emit_plot_data(table, out / "plot")
    exp.notes["timing"]["sweep_s"] = round(time.time() - t0, 3)
    manifest = {
        "schema": "subband_svm.run_manifest/1",
        "config": config.to_dict(),
        "code": code_version(),
        "corpus": {"train": exp.train_id, "dev": exp.dev_id, "n_train_utts": len(exp.train),
                   "n_dev_utts": len(exp.dev), "n_test_utts": len(exp.test), "M": exp.M},
        "cache": {"events": exp.cache.events, "warnings": exp.cache.warnings},
        "fallback_problems": exp.notes["fallback_problems"],
        "matched_checks": exp.notes["matched_checks"],
        "timing": exp.notes["timing"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return table
