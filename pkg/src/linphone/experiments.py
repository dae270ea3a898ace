"""Ready-made synthetic experiments: a harmonic-plus-noise corpus run through
the waveform stream (exact adaptation) and the MFCC stream (CMVN)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import ScoreTable
from .corpus import default_class_map, extract_instances
from .density import ModelBank
from .eval import ADAPT, CMVN, EvaluationReport, snr_sweep
from .frontend import DEFAULT_SNR_GRID, QUIET, normalize_energy
from .pipeline import Corpus, StreamConfig, condition_features, standardize, train_bank, trainset_stats
from .synth import synthetic_sentences

SMALL_FRAMES = (5, 7)
SMALL_COMPONENTS = (1, 2, 4)


def synthetic_corpus(n_train: int = 150, n_test: int = 60, seed: int = 0) -> Corpus:
    """Train and test splits drawn from independent generator seeds."""
    cmap = default_class_map()
    tr_s, tr_w = synthetic_sentences(n_train, seed=2 * seed + 1, prefix="tr")
    te_s, te_w = synthetic_sentences(n_test, seed=2 * seed + 2, prefix="te")
    return Corpus(extract_instances(tr_s, cmap, "train"), extract_instances(te_s, cmap, "test"),
                  {k: normalize_energy(v) for k, v in tr_w.items()},
                  {k: normalize_energy(v) for k, v in te_w.items()})


def default_streams(frames=SMALL_FRAMES, components=SMALL_COMPONENTS):
    return {"wave": (StreamConfig.waveform(frames=frames, components=components), ADAPT),
            "mfcc": (StreamConfig.cepstral(frames=frames, components=components), CMVN)}


def train_quiet(corpus: Corpus, stream: StreamConfig, seed: int = 0) -> ModelBank:
    feats = condition_features(corpus.train_waves, stream, QUIET, seed=seed)
    stats = trainset_stats(feats) if stream.standardize else None
    return train_bank(standardize(feats, stream, stats), corpus.train, stream, seed)


@dataclass
class StreamRun:
    name: str
    policy: str
    reports: list[EvaluationReport]
    tables: dict = field(default_factory=dict)
    train_seconds: float = 0.0
    sweep_seconds: float = 0.0

    def error(self, cond) -> float:
        return next(r.error_rate for r in self.reports if r.condition == cond)


def run_streams(corpus: Corpus, conditions: Sequence = DEFAULT_SNR_GRID, seed: int = 0,
                streams: dict | None = None, eval_corpora: Sequence[Corpus] = ()) -> dict:
    """Train each stream on quiet data and sweep it over ``conditions``.

    Extra corpora in ``eval_corpora`` (same training split, other test
    split) are scored with the same banks; their tables are stored under
    ``tables[(i, cond)]``.
    """
    cmap = default_class_map()
    out = {}
    for name, (stream, policy) in (streams or default_streams()).items():
        t0 = time.perf_counter()
        bank = train_quiet(corpus, stream, seed)
        t1 = time.perf_counter()
        tables: dict = {}
        reports = snr_sweep(bank, corpus, stream, cmap, conditions, policy, seed=seed, scores_out=tables)
        for i, other in enumerate(eval_corpora):
            extra: dict = {}
            snr_sweep(bank, other, stream, cmap, conditions, policy, seed=seed, scores_out=extra)
            tables.update({(i, c): t for c, t in extra.items()})
        out[name] = StreamRun(name, policy, reports, tables, t1 - t0, time.perf_counter() - t1)
    return out


def truth_indices(table: ScoreTable, corpus: Corpus) -> np.ndarray:
    index = {k: i for i, k in enumerate(table.classes)}
    return np.array([index[i.group48] for i in corpus.test.instances])
