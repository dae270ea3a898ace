"""Corpus ingestion: waveforms, phone segmentations, class folding and
small-class augmentation."""

from __future__ import annotations

import json
import logging
import wave
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REMOVED = None
DEFAULT_MAP_NAME = "timit_61_48_39.map"
DEFAULT_SHIFTS = (-100, -75, -50, -25, 25, 50, 75, 100)
DEFAULT_THRESHOLD = 1500


class LabelParseError(ValueError):
    pass


class LabelValidationError(ValueError):
    pass


class UnknownLabelError(KeyError):
    pass


@dataclass(frozen=True)
class PhonemeInterval:
    label: str
    start: int
    end: int

    def __post_init__(self):
        if not self.label:
            raise LabelValidationError("empty phone label")
        if not 0 <= self.start < self.end:
            raise LabelValidationError(
                f"invalid interval [{self.start}, {self.end}) for {self.label!r}")

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ClassMap:
    """Two-stage phone folding: raw label -> 48 groups -> 39 groups.

    ``fold48`` maps a raw label to its training group, or to ``REMOVED``.
    """
    fold48: Mapping[str, str | None]
    fold39: Mapping[str, str]

    def __post_init__(self):
        missing = {g for g in self.fold48.values() if g is not None} - set(self.fold39)
        if missing:
            raise LabelValidationError(f"fold39 undefined for groups {sorted(missing)}")

    @property
    def groups48(self) -> list[str]:
        return sorted({g for g in self.fold48.values() if g is not None})

    @property
    def groups39(self) -> list[str]:
        return sorted(set(self.fold39.values()))

    @classmethod
    def from_file(cls, path: str | Path) -> "ClassMap":
        return cls.from_lines(Path(path).read_text().splitlines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "ClassMap":
        fold48: dict[str, str | None] = {}
        fold39: dict[str, str] = {}
        for lineno, line in enumerate(lines, 1):
            # only whole-line comments: "h#" is a label
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split()
            if len(cols) > 3:
                raise LabelParseError(f"line {lineno}: expected at most 3 columns, got {len(cols)}")
            raw = cols[0]
            if raw in fold48:
                raise LabelParseError(f"line {lineno}: duplicate entry for {raw!r}")
            fold48[raw] = cols[1] if len(cols) > 1 else REMOVED
            if len(cols) == 3:
                prev = fold39.setdefault(cols[1], cols[2])
                if prev != cols[2]:
                    raise LabelParseError(
                        f"line {lineno}: group {cols[1]!r} folds to both {prev!r} and {cols[2]!r}")
        for g in fold48.values():
            if g is not None:
                fold39.setdefault(g, g)
        return cls(fold48, fold39)


def default_class_map() -> ClassMap:
    text = resources.files("linphone.data").joinpath(DEFAULT_MAP_NAME).read_text()
    return ClassMap.from_lines(text.splitlines())


def map_label(raw: str, cmap: ClassMap, level: int = 48) -> str | None:
    """Fold a phone label to its 48- or 39-group. Returns ``REMOVED`` for
    dropped labels. Group names are accepted as input too, so folding is
    idempotent."""
    if level not in (48, 39):
        raise ValueError(f"level must be 48 or 39, got {level}")
    if raw in cmap.fold48:
        g = cmap.fold48[raw]
    elif raw in cmap.fold39:
        g = raw
    elif level == 39 and raw in cmap.fold39.values():
        return raw
    else:
        raise UnknownLabelError(f"unknown phone label {raw!r}")
    if g is None or level == 48:
        return g
    return cmap.fold39[g]


def load_phn_labels(path: str | Path) -> list[PhonemeInterval]:
    """Read a sample-indexed ``start end label`` segmentation file."""
    out: list[PhonemeInterval] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 3:
                raise LabelParseError(f"{path}:{lineno}: expected 'start end label', got {line.rstrip()!r}")
            try:
                start, end = int(cols[0]), int(cols[1])
            except ValueError:
                raise LabelParseError(f"{path}:{lineno}: non-integer sample index") from None
            try:
                iv = PhonemeInterval(cols[2], start, end)
            except LabelValidationError as e:
                raise LabelValidationError(f"{path}:{lineno}: {e}") from None
            if out and iv.start < out[-1].end:
                raise LabelValidationError(
                    f"{path}:{lineno}: interval [{start}, {end}) overlaps or precedes "
                    f"[{out[-1].start}, {out[-1].end})")
            out.append(iv)
    return out


def write_phn_labels(path: str | Path, intervals: Sequence[PhonemeInterval]) -> None:
    with open(path, "w") as fh:
        for iv in intervals:
            fh.write(f"{iv.start} {iv.end} {iv.label}\n")


# -- waveforms ---------------------------------------------------------------

def _read_sphere(path: Path) -> tuple[np.ndarray, int]:
    raw = path.read_bytes()
    hdr_len = int(raw[8:16].decode("ascii").strip())
    fields = {}
    for line in raw[16:hdr_len].decode("ascii", "replace").splitlines():
        parts = line.split(None, 2)
        if len(parts) == 3:
            fields[parts[0]] = parts[2]
    rate = int(fields.get("sample_rate", 16000))
    if int(fields.get("channel_count", 1)) != 1 or int(fields.get("sample_n_bytes", 2)) != 2:
        raise ValueError(f"{path}: only 16-bit mono SPHERE files are supported")
    order = fields.get("sample_byte_format", "01")
    dtype = "<i2" if order == "01" else ">i2"
    return np.frombuffer(raw[hdr_len:], dtype=dtype).astype(np.float64), rate


def read_waveform(path: str | Path, rate: int | None = None) -> tuple[np.ndarray, int]:
    """Load 16-bit mono PCM as float64 samples.

    RIFF/WAVE and NIST SPHERE headers are detected. Headerless files need
    either ``rate`` or a sidecar ``<path>.rate`` file holding the rate.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:4] == b"RIFF":
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2:
                raise ValueError(f"{path}: only 16-bit mono PCM is supported")
            data = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
            return data.astype(np.float64), w.getframerate()
    if magic == b"NIST_1A\n":
        return _read_sphere(path)
    sidecar = path.with_name(path.name + ".rate")
    if rate is None:
        if not sidecar.exists():
            raise ValueError(f"{path}: headerless PCM needs a sample rate (no {sidecar.name})")
        rate = int(sidecar.read_text().split()[0])
    return np.fromfile(path, dtype="<i2").astype(np.float64), rate


def write_wav(path: str | Path, samples: np.ndarray, rate: int = 16000) -> None:
    pcm = np.clip(np.round(samples), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class PhonemeInstance:
    sentence_id: str
    interval: PhonemeInterval
    group48: str
    shift: int = 0

    @property
    def center(self) -> int:
        return (self.interval.start + self.interval.end) // 2 + self.shift


@dataclass(frozen=True)
class LabeledSentence:
    sentence_id: str
    intervals: tuple[PhonemeInterval, ...]
    n_samples: int
    wav_path: str | None = None


@dataclass
class CorpusManifest:
    split: str
    instances: list[PhonemeInstance]
    priors: dict[str, float]
    sentence_lengths: dict[str, int] = field(default_factory=dict)
    wav_paths: dict[str, str] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in ("train", "test", "dev"):
            raise ValueError(f"unknown split {self.split!r}")

    def counts(self, originals_only: bool = False) -> Counter:
        return Counter(i.group48 for i in self.instances if not (originals_only and i.shift))

    def to_json(self) -> str:
        doc = {
            "split": self.split,
            "meta": self.meta,
            "priors": self.priors,
            "sentence_lengths": self.sentence_lengths,
            "wav_paths": self.wav_paths,
            "instances": [[i.sentence_id, i.interval.label, i.interval.start,
                           i.interval.end, i.group48, i.shift] for i in self.instances],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        doc = json.loads(text)
        inst = [PhonemeInstance(s, PhonemeInterval(lab, a, b), g, k)
                for s, lab, a, b, g, k in doc["instances"]]
        return cls(doc["split"], inst, doc["priors"], doc.get("sentence_lengths", {}),
                   doc.get("wav_paths", {}), doc.get("meta", {}))


def compute_priors(groups: Iterable[str]) -> dict[str, float]:
    counts = Counter(groups)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {g: n / total for g, n in sorted(counts.items())}


def extract_instances(sentences: Sequence[LabeledSentence], cmap: ClassMap,
                      split: str = "train") -> CorpusManifest:
    instances = []
    for sent in sentences:
        kept = 0
        for iv in sent.intervals:
            g = map_label(iv.label, cmap, 48)
            if g is REMOVED:
                continue
            instances.append(PhonemeInstance(sent.sentence_id, iv, g))
            kept += 1
        if not kept:
            logger.warning("sentence %s has no retained phones", sent.sentence_id)
    return CorpusManifest(
        split, instances, compute_priors(i.group48 for i in instances),
        {s.sentence_id: s.n_samples for s in sentences},
        {s.sentence_id: s.wav_path for s in sentences if s.wav_path})


def augment_small_classes(manifest: CorpusManifest, threshold: int = DEFAULT_THRESHOLD,
                          shifts: Sequence[int] = DEFAULT_SHIFTS,
                          window: int = 1120) -> CorpusManifest:
    """Add shifted copies of every original instance in groups with fewer
    than ``threshold`` originals. Priors are carried over unchanged.

    A copy whose ``window``-sample analysis window would lie entirely
    outside its sentence is skipped.
    """
    if manifest.split != "train":
        raise ValueError("augmentation applies to the training split only")
    if 0 in shifts:
        raise ValueError("shift list must exclude 0 (originals are kept as-is)")
    if not shifts:
        return manifest
    counts = manifest.counts(originals_only=True)
    small = {g for g, n in counts.items() if n < threshold}
    half = window // 2
    extra, skipped = [], 0
    for inst in manifest.instances:
        if inst.shift or inst.group48 not in small:
            continue
        n = manifest.sentence_lengths.get(inst.sentence_id)
        for k in shifts:
            new = replace(inst, shift=k)
            if n is not None and (new.center + half <= 0 or new.center - half >= n):
                skipped += 1
                continue
            extra.append(new)
    if skipped:
        logger.warning("skipped %d shifted instances outside their sentences", skipped)
    return CorpusManifest(manifest.split, manifest.instances + extra, dict(manifest.priors),
                          dict(manifest.sentence_lengths), dict(manifest.wav_paths), dict(manifest.meta))


def scan_corpus(root: str | Path, wav_suffixes=(".wav", ".WAV"),
                phn_suffixes=(".phn", ".PHN"), skip_sa: bool = False) -> list[LabeledSentence]:
    """Pair every label file under ``root`` with its waveform.

    Sentence ids are the label path relative to ``root`` without suffix.
    """
    root = Path(root)
    out = []
    for phn in sorted(p for p in root.rglob("*") if p.suffix in phn_suffixes):
        if skip_sa and phn.stem.upper().startswith("SA"):
            continue
        wav = next((phn.with_suffix(s) for s in wav_suffixes if phn.with_suffix(s).exists()), None)
        if wav is None:
            raise FileNotFoundError(f"no waveform next to {phn}")
        x, _ = read_waveform(wav)
        sid = phn.relative_to(root).with_suffix("").as_posix()
        out.append(LabeledSentence(sid, tuple(load_phn_labels(phn)), len(x), str(wav)))
    return out


# -- duration statistics -----------------------------------------------------

BROAD_CLASSES = {
    "Vowels": ["aa", "ae", "ah", "ao", "aw", "ax", "ay", "eh", "er", "ey", "ih", "ix",
               "iy", "ow", "oy", "uh", "uw", "el", "l", "r", "w", "y"],
    "Nasals": ["m", "n", "en", "ng"],
    "Strong Fricatives": ["s", "sh", "z", "zh", "ch", "jh"],
    "Weak Fricatives": ["f", "th", "v", "dh", "hh"],
    "Stops": ["b", "d", "g", "p", "t", "k", "dx"],
    "Silence": ["sil", "cl", "vcl", "epi"],
}


def duration_stats(manifest: CorpusManifest, rate: int = 16000,
                   groups: Mapping[str, Sequence[str]] = BROAD_CLASSES) -> dict[str, dict[str, float]]:
    """Min / mean / std / max durations in milliseconds per broad class,
    plus an ``All`` row, over original (unshifted) instances."""
    by_group: dict[str, list[float]] = {}
    lookup = {g: name for name, members in groups.items() for g in members}
    every = []
    for inst in manifest.instances:
        if inst.shift:
            continue
        ms = 1000.0 * inst.interval.duration / rate
        every.append(ms)
        name = lookup.get(inst.group48)
        if name is not None:
            by_group.setdefault(name, []).append(ms)
    by_group["All"] = every
    stats = {}
    for name, vals in by_group.items():
        if not vals:
            continue
        v = np.asarray(vals)
        stats[name] = {"min": float(v.min()), "mean": float(v.mean()),
                       "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0, "max": float(v.max())}
    return stats
