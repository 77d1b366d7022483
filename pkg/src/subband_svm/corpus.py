"""Utterances with phone alignments, label folding, segmenting and a synthetic corpus.

On disk a corpus is a directory of mono 16-bit 16 kHz WAV files, each with an
alignment file of the same stem and suffix ``.phn`` holding one
``start end label`` line per phone (sample units, ``end`` exclusive).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "SAMPLE_RATE",
    "PhoneSegment",
    "Utterance",
    "ClassMap",
    "SplitSpec",
    "CorpusError",
    "CorpusLoadResult",
    "load_class_map",
    "timit_class_map",
    "load_corpus",
    "read_wav",
    "write_wav",
    "read_alignment",
    "write_corpus",
    "extract_segment",
    "sample_dev_subset",
    "SyntheticSpec",
    "make_synthetic_corpus",
    "synthetic_class_map",
]

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
DROP = "-"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class PhoneSegment:
    start: int
    end: int
    label: str
    class_id: int | None = None

    def __post_init__(self):
        if not self.start < self.end:
            raise CorpusError(f"phone {self.label!r}: start {self.start} >= end {self.end}")

    @property
    def center(self) -> int:
        return (self.start + self.end) // 2


@dataclass(frozen=True, eq=False)
class Utterance:
    id: str
    samples: np.ndarray = field(repr=False)
    phones: tuple = ()
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise CorpusError(f"{self.id}: sample rate {self.sample_rate}, expected {SAMPLE_RATE}")
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "phones", tuple(self.phones))
        validate_phones(self.phones, len(samples), self.id)

    def with_samples(self, samples) -> "Utterance":
        return replace(self, samples=np.asarray(samples, dtype=float))


def validate_phones(phones, n_samples, uid="<utterance>"):
    """Raise if phones overlap, are unsorted or leave ``[0, n_samples)``."""
    for p in phones:
        if p.start < 0 or p.end > n_samples:
            raise CorpusError(f"{uid}: phone {p.label!r} [{p.start}, {p.end}) outside [0, {n_samples})")
    for a, b in zip(phones, phones[1:]):
        if b.start < a.end:
            raise CorpusError(
                f"{uid}: overlapping or unsorted phones {a.label!r} [{a.start}, {a.end}) "
                f"and {b.label!r} [{b.start}, {b.end})"
            )


@dataclass(frozen=True)
class ClassMap:
    """Raw-label folding table, class names and confusion groups.

    ``fold`` maps raw labels to class indices (``None`` drops the segment);
    class names fold to themselves.  ``groups`` maps a class index to its
    confusion-group id.
    """

    names: tuple
    fold: dict
    groups: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.names)

    @property
    def n_groups(self) -> int:
        return len(set(self.groups.values()))

    def class_id(self, label):
        """Folded class index of ``label`` (raw label, class name or index).

        Returns ``None`` for dropped labels; raises for unknown ones.
        """
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.M:
                raise CorpusError(f"class index {label} out of range")
            return int(label)
        try:
            return self.fold[label]
        except KeyError:
            raise CorpusError(f"label {label!r} is not in the class map") from None

    def same_group(self, a: int, b: int) -> bool:
        if a == b:
            return True
        ga, gb = self.groups.get(a), self.groups.get(b)
        return ga is not None and ga == gb

    def to_text(self) -> str:
        lines = ["[fold]"]
        for raw, cid in self.fold.items():
            if raw in self.names and cid is not None and self.names[cid] == raw:
                continue
            lines.append(f"{raw} {DROP if cid is None else self.names[cid]}")
        for name in self.names:
            lines.append(f"{name} {name}")
        lines.append("[groups]")
        members = {}
        for cid, g in self.groups.items():
            members.setdefault(g, []).append(self.names[cid])
        for g in sorted(members):
            lines.append(" ".join(members[g]))
        return "\n".join(lines) + "\n"


def parse_class_map(text: str) -> ClassMap:
    section = None
    pairs = []
    group_lines = []
    for raw_line in text.splitlines():
        # "#" starts a comment only at line start or after whitespace (TIMIT has "h#")
        line = re.sub(r"(^|\s)#.*$", "", raw_line).strip()
        if not line:
            continue
        if line in ("[fold]", "[groups]"):
            section = line
            continue
        if section == "[fold]":
            parts = line.split()
            if len(parts) != 2:
                raise CorpusError(f"bad fold line: {raw_line!r}")
            pairs.append(parts)
        elif section == "[groups]":
            group_lines.append(line.split())
        else:
            raise CorpusError(f"line outside a section: {raw_line!r}")
    names = tuple(sorted({target for _, target in pairs if target != DROP}))
    index = {n: i for i, n in enumerate(names)}
    fold = {raw: (None if target == DROP else index[target]) for raw, target in pairs}
    fold.update(index)
    groups = {}
    for g, members in enumerate(group_lines):
        for m in members:
            if m not in index:
                raise CorpusError(f"group member {m!r} is not a class")
            if index[m] in groups:
                raise CorpusError(f"class {m!r} appears in two groups")
            groups[index[m]] = g
    return ClassMap(names=names, fold=fold, groups=groups)


def load_class_map(path) -> ClassMap:
    return parse_class_map(Path(path).read_text())


def timit_class_map() -> ClassMap:
    """The shipped 61 -> 48 folding with 7 confusion groups."""
    text = resources.files("subband_svm.data").joinpath("timit_61_48.map").read_text()
    return parse_class_map(text)


@dataclass(frozen=True)
class SplitSpec:
    train: tuple
    dev: tuple
    test: tuple
    dev_subset_fraction: float = 1 / 8
    seed: int = 0

    def __post_init__(self):
        a, b, c = set(self.train), set(self.dev), set(self.test)
        if a & b or a & c or b & c:
            raise CorpusError("train, dev and test splits must be disjoint")

    def dev_subset(self):
        return sample_dev_subset(list(self.dev), self.dev_subset_fraction, self.seed)


# audio and alignment files ----------------------------------------------------


def read_wav(path) -> np.ndarray:
    rate, data = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise CorpusError(f"{path}: sample rate {rate}, expected {SAMPLE_RATE}")
    if data.ndim != 1:
        raise CorpusError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise CorpusError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    return data.astype(float) / 32768.0


def write_wav(path, samples) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, SAMPLE_RATE, pcm)


def read_alignment(path) -> list:
    out = []
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CorpusError(f"{path}:{k}: expected 'start end label', got {line!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise CorpusError(f"{path}:{k}: non-integer sample index in {line!r}") from None
        out.append((start, end, parts[2]))
    return out


@dataclass
class CorpusLoadResult:
    utterances: list
    errors: list

    def raise_on_error(self):
        if self.errors:
            raise CorpusError("; ".join(self.errors))
        return self.utterances


def _fold_segments(triples, class_map, uid):
    phones = []
    for start, end, label in triples:
        cid = class_map.class_id(label)
        if cid is None:
            continue
        phones.append(PhoneSegment(start, end, label, cid))
    return phones


def load_corpus(audio_dir, alignment_dir=None, class_map: ClassMap | None = None) -> CorpusLoadResult:
    """Load every ``*.wav`` under ``audio_dir`` with its ``.phn`` alignment.

    Dropped labels (``/q/`` in the TIMIT map) are removed.  Per-file problems
    are collected in ``errors``; files with errors are not loaded.
    """
    audio_dir = Path(audio_dir)
    alignment_dir = Path(alignment_dir) if alignment_dir is not None else audio_dir
    class_map = class_map or timit_class_map()
    utterances, errors = [], []
    for wav in sorted(audio_dir.rglob("*.wav")):
        rel = wav.relative_to(audio_dir).with_suffix("")
        uid = rel.as_posix()
        phn = alignment_dir / rel.with_suffix(".phn")
        try:
            if not phn.exists():
                raise CorpusError(f"{uid}: missing alignment {phn}")
            samples = read_wav(wav)
            phones = _fold_segments(read_alignment(phn), class_map, uid)
            utterances.append(Utterance(uid, samples, phones))
        except (CorpusError, ValueError, OSError) as exc:
            msg = str(exc) if uid in str(exc) else f"{uid}: {exc}"
            errors.append(msg)
            log.warning("skipping %s", msg)
    return CorpusLoadResult(utterances, errors)


def write_corpus(utterances, out_dir, class_map: ClassMap | None = None) -> Path:
    """Write WAV + ``.phn`` files (and ``classes.map`` when given a class map)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for u in utterances:
        stem = out_dir / u.id
        stem.parent.mkdir(parents=True, exist_ok=True)
        write_wav(stem.with_suffix(".wav"), u.samples)
        lines = [f"{p.start} {p.end} {p.label}" for p in u.phones]
        stem.with_suffix(".phn").write_text("\n".join(lines) + ("\n" if lines else ""))
    if class_map is not None:
        (out_dir / "classes.map").write_text(class_map.to_text())
    return out_dir


# segments ---------------------------------------------------------------------


def extract_segment(u: Utterance, p: PhoneSegment, window_ms: float = 100.0) -> np.ndarray:
    """Rectangular window of ``round(window_ms * 16)`` samples centred on the phone.

    The centre is ``floor((start + end) / 2)``; samples outside the utterance
    are zero.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    n = int(round(window_ms * SAMPLE_RATE / 1000.0))
    return window_at(u.samples, p.center, n)


def window_at(x: np.ndarray, center: int, n: int) -> np.ndarray:
    start = center - n // 2
    out = np.zeros(n)
    lo, hi = max(start, 0), min(start + n, len(x))
    if hi > lo:
        out[lo - start : hi - start] = x[lo:hi]
    return out


def sample_dev_subset(items, fraction: float, seed: int) -> list:
    """Uniform sample without replacement of ``round(fraction * N)`` items, in input order."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    items = list(items)
    k = int(np.floor(fraction * len(items) + 0.5))
    if k == 0:
        return []
    idx = np.random.default_rng(seed).choice(len(items), size=k, replace=False)
    return [items[i] for i in np.sort(idx)]


# synthetic corpus -------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic phone corpus.

    Each class is a resonator bank (damped sinusoids at class-specific formant
    frequencies) excited by a pulse train at the pitch period (voiced
    classes) or by white noise (unvoiced classes), under a class-specific
    attack/decay envelope.  Formant amplitudes fall off with frequency like
    the spectral tilt of speech.  Class templates depend only on
    ``template_seed``, so corpora drawn with different ``seed`` share classes.

    ``jitter`` scales every per-instance perturbation (pitch, formant
    frequencies, gain, resonator phases, duration); 0 makes all instances of a
    class identical.  ``margin`` is the minimum spacing between the formant
    patterns of two classes, in octaves summed over formants; larger values
    make classes easier to separate.
    """

    n_classes: int = 8
    n_utterances: int = 40
    phones_per_utterance: tuple = (5, 15)
    jitter: float = 1.0
    margin: float = 0.6
    n_unvoiced: int = 2
    template_seed: int = 0
    phone_ms: tuple = (140.0, 220.0)
    gap_ms: tuple = (20.0, 60.0)
    edge_silence_ms: float = 150.0
    noise_floor_db: float = -60.0
    pitch_hz: tuple = (100.0, 200.0)
    formant_jitter: float = 0.04
    prefix: str = "syn"


_FORMANT_RANGES = ((250.0, 900.0), (850.0, 2400.0), (2000.0, 3600.0), (3400.0, 5200.0))


@dataclass(frozen=True)
class _ClassTemplate:
    formants: np.ndarray
    bandwidths: np.ndarray
    amplitudes: np.ndarray
    voiced: bool
    attack: float
    glide: float


def _class_templates(spec: SyntheticSpec) -> list:
    rng = np.random.default_rng(spec.template_seed)
    templates = []
    patterns = []
    attempts = 0
    while len(templates) < spec.n_classes:
        attempts += 1
        if attempts > 100_000:
            raise ValueError("cannot place class templates with the requested margin")
        f = np.array([np.exp(rng.uniform(np.log(lo), np.log(hi))) for lo, hi in _FORMANT_RANGES])
        logf = np.log2(f)
        if any(np.sum(np.abs(logf - q)) < spec.margin for q in patterns):
            continue
        patterns.append(logf)
        k = len(templates)
        voiced = k >= spec.n_unvoiced
        bw = 60.0 + 0.06 * f
        amps = (500.0 / f) ** (1.0 if voiced else 0.0) * rng.uniform(0.6, 1.0, size=len(f))
        templates.append(
            _ClassTemplate(
                formants=f,
                bandwidths=bw,
                amplitudes=amps,
                voiced=voiced,
                attack=float(rng.uniform(0.1, 0.5)),
                glide=float(rng.uniform(-0.25, 0.25)),
            )
        )
    return templates


def _resonators(formants, bandwidths, amplitudes, phases, n_taps):
    ht = np.arange(n_taps) / SAMPLE_RATE
    h = np.zeros(n_taps)
    for fk, bk, ak, ph in zip(formants, bandwidths, amplitudes, phases):
        h += ak * np.exp(-np.pi * bk * ht) * np.sin(2 * np.pi * fk * ht + ph)
    return h


def _render_phone(t: _ClassTemplate, n: int, rng, jitter: float, spec: SyntheticSpec) -> np.ndarray:
    fs = SAMPLE_RATE
    n_taps = int(0.03 * fs)
    f = t.formants * np.exp(jitter * spec.formant_jitter * rng.standard_normal(len(t.formants)))
    phases = jitter * rng.uniform(-np.pi, np.pi, size=len(f))
    if t.voiced:
        lo, hi = spec.pitch_hz
        f0 = 0.5 * (lo + hi) + jitter * rng.uniform(-0.5, 0.5) * (hi - lo)
        period = fs / f0
        excitation = np.zeros(n)
        excitation[np.round(np.arange(jitter * rng.uniform(0, period), n - 0.5, period)).astype(int)] = 1.0
    else:
        excitation = 0.3 * rng.standard_normal(n)
    # formants glide from their onset values to f * 2**glide over the phone
    onset = np.convolve(excitation, _resonators(f, t.bandwidths, t.amplitudes, phases, n_taps))[:n]
    offset = np.convolve(
        excitation, _resonators(f * 2.0**t.glide, t.bandwidths, t.amplitudes, phases, n_taps)
    )[:n]
    mix = np.linspace(0.0, 1.0, n)
    y = (1.0 - mix) * onset + mix * offset
    attack = max(1, int(t.attack * n))
    env = np.ones(n)
    env[:attack] = np.arange(1, attack + 1) / attack
    decay = max(1, n // 4)
    env[n - decay :] *= np.linspace(1.0, 0.0, decay)
    y *= env
    rms = np.sqrt(np.mean(y**2))
    gain = np.exp(jitter * 0.3 * rng.standard_normal())
    return gain * y / rms if rms > 0 else y


def synthetic_class_map(spec: SyntheticSpec | None = None) -> ClassMap:
    spec = spec or SyntheticSpec()
    names = tuple(f"c{k}" for k in range(spec.n_classes))
    return ClassMap(names=names, fold={n: i for i, n in enumerate(names)}, groups={})


def make_synthetic_corpus(spec: SyntheticSpec | None = None, seed: int = 0, out_dir=None) -> list:
    """Generate utterances of concatenated synthetic phones with silence gaps.

    Class labels are ``c0 .. c{K-1}``.  Phone classes are drawn in shuffled
    blocks of all ``K`` classes, so class counts stay balanced.  When
    ``out_dir`` is given the corpus is also written there as WAV + ``.phn``
    files plus ``classes.map``.
    """
    spec = spec or SyntheticSpec()
    if spec.n_classes < 2:
        raise ValueError("the synthetic corpus needs at least two classes")
    templates = _class_templates(spec)
    rng = np.random.default_rng(seed)
    fs = SAMPLE_RATE
    ms = fs / 1000.0
    jitter = spec.jitter
    queue = []
    utterances = []
    for u in range(spec.n_utterances):
        lo, hi = spec.phones_per_utterance
        n_phones = int(rng.integers(lo, hi + 1))
        pieces = [np.zeros(int(spec.edge_silence_ms * ms))]
        pos = len(pieces[0])
        phones = []
        for k in range(n_phones):
            if not queue:
                queue = list(rng.permutation(spec.n_classes))
            cid = int(queue.pop())
            dur_lo, dur_hi = spec.phone_ms
            dur = 0.5 * (dur_lo + dur_hi) + jitter * rng.uniform(-0.5, 0.5) * (dur_hi - dur_lo)
            n = int(dur * ms)
            seg = _render_phone(templates[cid], n, rng, jitter, spec)
            phones.append(PhoneSegment(pos, pos + n, f"c{cid}", cid))
            pieces.append(seg)
            pos += n
            gap = int(rng.uniform(*spec.gap_ms) * ms) if k < n_phones - 1 else int(spec.edge_silence_ms * ms)
            pieces.append(np.zeros(gap))
            pos += gap
        x = np.concatenate(pieces)
        speech_power = np.mean(np.concatenate([x[p.start : p.end] for p in phones]) ** 2)
        floor = np.sqrt(speech_power * 10 ** (spec.noise_floor_db / 10.0))
        x = x + floor * rng.standard_normal(len(x))
        # headroom for 16-bit storage; quantised so the files hold exactly these samples
        x *= 0.25 / np.max(np.abs(x))
        x = np.round(x * 32768.0) / 32768.0
        utterances.append(Utterance(f"{spec.prefix}{seed}_{u:04d}", x, phones))
    if out_dir is not None:
        write_corpus(utterances, out_dir, synthetic_class_map(spec))
    return utterances
