"""Glue between corpus, features and model banks: per-condition feature
computation and bank training."""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classifier import CEPSTRAL_FRAMES, SECTORS, WAVE_FRAMES, assemble_many, instance_anchor
from .corpus import CorpusManifest, read_waveform
from .density import ModelBank, em_train
from .frontend import (EXTERNAL, MFCC, MFCC_DELTAS, QUIET, SENTENCE, TRAINSET, WAVE_DCT,
                       FeatureMatrix, NoiseSource, StandardizationStats, cmvn, compute_stats,
                       mix_noise, normalize_energy, read_external_features, sentence_features,
                       sentence_seed)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StreamConfig:
    """How one feature stream is computed and modelled."""
    basis: str = WAVE_DCT
    frames: tuple[int, ...] = WAVE_FRAMES
    sectors: tuple[str, ...] = SECTORS
    components: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)
    standardize: str | None = None  # None, TRAINSET or SENTENCE
    external_root: str | None = None

    @property
    def zero_mean(self) -> bool:
        return self.basis == WAVE_DCT

    @classmethod
    def waveform(cls, **kw) -> "StreamConfig":
        return cls(WAVE_DCT, **kw)

    @classmethod
    def cepstral(cls, deltas: bool = True, **kw) -> "StreamConfig":
        kw.setdefault("frames", CEPSTRAL_FRAMES)
        kw.setdefault("standardize", TRAINSET)
        return cls(MFCC_DELTAS if deltas else MFCC, **kw)


def load_waveforms(manifest: CorpusManifest) -> dict[str, np.ndarray]:
    """Read and energy-normalise every sentence waveform named by the manifest."""
    return {sid: normalize_energy(read_waveform(path)[0]) for sid, path in manifest.wav_paths.items()}


def noisy_waveforms(waves: Mapping[str, np.ndarray], snr, noise: NoiseSource | None,
                    seed: int) -> dict[str, np.ndarray]:
    if snr == QUIET:
        return {sid: normalize_energy(x) for sid, x in waves.items()}
    noise = noise or NoiseSource()
    return {sid: mix_noise(normalize_energy(x), noise, snr, sentence_seed(seed, sid))
            for sid, x in waves.items()}


def condition_features(waves: Mapping[str, np.ndarray], stream: StreamConfig, snr,
                       noise: NoiseSource | None = None, seed: int = 0) -> dict[str, FeatureMatrix]:
    """Raw (unstandardised) features of every sentence at one noise condition."""
    if stream.basis == EXTERNAL:
        if stream.external_root is None:
            raise ValueError("external features need external_root")
        cond = "Q" if snr == QUIET else str(snr)
        root = Path(stream.external_root) / cond
        return {sid: read_external_features(root / f"{sid}.feat") for sid in waves}
    return {sid: sentence_features(x, stream.basis)
            for sid, x in noisy_waveforms(waves, snr, noise, seed).items()}


def standardize(features: Mapping[str, FeatureMatrix], stream: StreamConfig,
                stats: StandardizationStats | None = None) -> dict[str, FeatureMatrix]:
    if stream.standardize is None:
        return dict(features)
    if stream.standardize == SENTENCE:
        return {sid: cmvn(fm, source=SENTENCE) for sid, fm in features.items()}
    if stats is None:
        raise ValueError("training-set standardisation needs statistics")
    return {sid: cmvn(fm, stats) for sid, fm in features.items()}


def trainset_stats(features: Mapping[str, FeatureMatrix]) -> StandardizationStats:
    return compute_stats([features[k] for k in sorted(features)], TRAINSET)


def task_seed(seed: int, key: tuple) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(repr(key).encode())])
    return int(ss.generate_state(1)[0])


def class_vectors(features: Mapping[str, FeatureMatrix], manifest: CorpusManifest,
                  sector: str, f: int) -> dict[str, np.ndarray]:
    """Training vectors per class for one (sector, f)."""
    by_key: dict[tuple[str, str], list] = {}
    for inst in manifest.instances:
        by_key.setdefault((inst.group48, inst.sentence_id), []).append(instance_anchor(inst, sector))
    out: dict[str, list[np.ndarray]] = {}
    for (cls, sid), anchors in sorted(by_key.items()):
        out.setdefault(cls, []).append(assemble_many(features[sid], anchors, f))
    return {cls: np.vstack(v) for cls, v in out.items()}


def _fit(args):
    X, c, zero_mean, seed, basis = args
    c_eff = c
    while len(X) < 5 * c_eff and c_eff > 1:
        c_eff //= 2
    return em_train(X, c_eff, zero_mean, seed, basis=basis), c_eff != c


def train_bank(features: Mapping[str, FeatureMatrix], manifest: CorpusManifest,
               stream: StreamConfig, seed: int = 0, workers: int = 1,
               meta: Mapping | None = None) -> ModelBank:
    """Fit one GMM per (class, sector, f, c).

    Each fit has its own seed derived from ``seed`` and its key, so the
    result does not depend on ``workers``.
    """
    keys, jobs = [], []
    for s in stream.sectors:
        for f in stream.frames:
            for cls, X in class_vectors(features, manifest, s, f).items():
                for c in stream.components:
                    key = (cls, s, f, c)
                    keys.append(key)
                    jobs.append((X, c, stream.zero_mean, task_seed(seed, key), stream.basis))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(_fit, jobs))
    else:
        fitted = [_fit(j) for j in jobs]
    reduced = [k for k, (_, r) in zip(keys, fitted) if r]
    if reduced:
        logger.warning("%d of %d models trained with fewer components than requested "
                       "(under 5 vectors per component), e.g. %s", len(reduced), len(keys), reduced[0])
    meta = dict(meta or {})
    meta.setdefault("seed", seed)
    return ModelBank(stream.basis, tuple(stream.components),
                     {k: m for k, (m, _) in zip(keys, fitted)}, meta=meta)


@dataclass
class Corpus:
    """Energy-normalised training and test waveforms with their manifests."""
    train: CorpusManifest
    test: CorpusManifest
    train_waves: dict[str, np.ndarray] = field(default_factory=dict)
    test_waves: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def load(cls, train: CorpusManifest, test: CorpusManifest) -> "Corpus":
        return cls(train, test, load_waveforms(train), load_waveforms(test))


def restrict(manifest: CorpusManifest, classes: Sequence[str]) -> CorpusManifest:
    keep = set(classes)
    return CorpusManifest(manifest.split, [i for i in manifest.instances if i.group48 in keep],
                          {k: v for k, v in manifest.priors.items() if k in keep},
                          dict(manifest.sentence_lengths), dict(manifest.wav_paths))

