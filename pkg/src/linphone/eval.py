"""Scoring with 39-group folding, confusion matrices, SNR sweeps and reports."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .adaptation import AdaptationCache, adapt_bank
from .classifier import (CombinationSchedule, ScoreTable, alpha_schedule, combine_logliks,
                         predict, schedule_argument, score_instances)
from .corpus import ClassMap, CorpusManifest, map_label
from .density import ConfigurationError, ModelBank
from .frontend import DEFAULT_SNR_GRID, QUIET, WAVE_DCT, NoiseSource, snr_to_sigma2
from .pipeline import Corpus, StreamConfig, condition_features, standardize, train_bank, trainset_stats

ADAPT = "ADAPT"
CMVN = "CMVN"
MATCHED = "MATCHED"
NONE = "NONE"
POLICIES = (ADAPT, CMVN, MATCHED, NONE)


class ValidationError(ValueError):
    pass


def condition_name(cond) -> str:
    return "Q" if cond == QUIET else f"{int(cond)}dB" if float(cond).is_integer() else f"{cond}dB"


@dataclass
class EvaluationReport:
    condition: object
    rule: str
    error_rate: float
    counts: dict[str, int]
    confusion: np.ndarray
    labels: list[str]
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"condition": self.condition, "rule": self.rule, "error_rate": self.error_rate,
                "counts": self.counts, "labels": self.labels,
                "confusion": self.confusion.tolist(), "runtime": self.runtime, "meta": self.meta}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvaluationReport":
        return cls(doc["condition"], doc["rule"], doc["error_rate"], doc["counts"],
                   np.asarray(doc["confusion"], dtype=np.int64), doc["labels"], doc["runtime"],
                   doc.get("meta", {}))

    def to_text(self) -> str:
        lines = [f"condition\t{condition_name(self.condition)}", f"rule\t{self.rule}",
                 f"error_rate\t{self.error_rate:.6f}", f"instances\t{int(self.confusion.sum())}",
                 f"runtime_s\t{self.runtime:.3f}"]
        lines += [f"{k}\t{v}" for k, v in sorted(self.meta.items())]
        lines.append("")
        lines.append("class\tcount\tcorrect\terror")
        for i, lab in enumerate(self.labels):
            n = int(self.confusion[i].sum())
            if n:
                lines.append(f"{lab}\t{n}\t{int(self.confusion[i, i])}\t{1 - self.confusion[i, i] / n:.4f}")
        return "\n".join(lines) + "\n"


def confusion_matrix(predictions: Sequence[str], truths: Sequence[str],
                     labels: Sequence[str]) -> np.ndarray:
    """Rows are true labels, columns predicted labels."""
    index = {lab: i for i, lab in enumerate(labels)}
    m = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for p, t in zip(predictions, truths):
        m[index[t], index[p]] += 1
    return m


def score(predictions: Sequence[str], truths: Sequence[str], cmap: ClassMap,
          condition=QUIET, rule: str = "T", runtime: float = 0.0) -> EvaluationReport:
    """Fold 48-group predictions and truths to 39 groups and compare."""
    if len(predictions) != len(truths):
        raise ValidationError(f"{len(predictions)} predictions for {len(truths)} truths")
    p39 = [map_label(p, cmap, 39) for p in predictions]
    t39 = [map_label(t, cmap, 39) for t in truths]
    labels = cmap.groups39
    conf = confusion_matrix(p39, t39, labels)
    total = conf.sum()
    err = 0.0 if total == 0 else float(1.0 - np.trace(conf) / total)
    counts = {lab: int(conf[i].sum()) for i, lab in enumerate(labels)}
    return EvaluationReport(condition, rule, err, counts, conf, labels, runtime)


def priors_vector(manifest: CorpusManifest, classes: Sequence[str]) -> np.ndarray:
    p = np.array([manifest.priors.get(k, 0.0) for k in classes])
    if np.any(p <= 0):
        missing = [k for k, v in zip(classes, p) if v <= 0]
        raise ConfigurationError(f"no prior for classes {missing}")
    return p / p.sum()


def evaluate_table(table: ScoreTable, truths: Sequence[str], priors: np.ndarray, cmap: ClassMap,
                   rule: str = "T", condition=QUIET, runtime: float = 0.0, **rule_kw) -> EvaluationReport:
    pred = predict(table.rule(rule, **rule_kw), priors)
    return score([table.classes[i] for i in pred], truths, cmap, condition, rule, runtime)


def snr_sweep(bank: ModelBank, corpus: Corpus, stream: StreamConfig, cmap: ClassMap,
              conditions: Sequence = DEFAULT_SNR_GRID, policy: str = ADAPT,
              noise: NoiseSource | None = None, seed: int = 0, rules: Sequence[str] = ("T",),
              matched_train: Corpus | None = None, scores_out: dict | None = None,
              train_priors: CorpusManifest | None = None,
              cache: AdaptationCache | None = None,
              features_fn: Callable = condition_features) -> list[EvaluationReport]:
    """Evaluate one stream at every condition under an adaptation policy.

    ADAPT adapts the quiet bank to each noise level; CMVN standardises
    with statistics of the noisy training set (or per sentence); MATCHED
    retrains on noisy training data from ``matched_train``; NONE scores
    noisy data with the quiet bank. ``features_fn`` has the signature of
    ``condition_features`` and may serve cached features.
    """
    if policy not in POLICIES:
        raise ConfigurationError(f"unknown policy {policy!r}")
    if policy == MATCHED and (matched_train is None or not matched_train.train_waves):
        raise ConfigurationError("MATCHED policy needs per-condition training data")
    if policy == ADAPT and stream.basis != WAVE_DCT:
        raise ConfigurationError("exact adaptation is only defined for the waveform basis")
    if policy == CMVN and stream.standardize is None:
        raise ConfigurationError("CMVN policy needs a stream with standardisation")
    noise = noise or NoiseSource()
    priors_src = train_priors or corpus.train
    truths = [i.group48 for i in corpus.test.instances]
    classes = bank.classes
    priors = priors_vector(priors_src, classes)
    quiet_stats = None
    if stream.standardize is not None and policy in (NONE, ADAPT):
        quiet_stats = trainset_stats(features_fn(corpus.train_waves, stream, QUIET, noise, seed))
    shape = noise.spec(160) if stream.basis == WAVE_DCT else None
    reports = []
    for cond in conditions:
        t0 = time.perf_counter()
        test_feats = features_fn(corpus.test_waves, stream, cond, noise, seed + 1)
        use_bank = bank
        if policy == ADAPT:
            use_bank = adapt_bank(bank, shape.with_sigma2(snr_to_sigma2(cond)), cache)
            test_feats = standardize(test_feats, stream, quiet_stats)
        elif policy == NONE:
            test_feats = standardize(test_feats, stream, quiet_stats)
        else:
            src = matched_train if policy == MATCHED else corpus
            train_feats = features_fn(src.train_waves, stream, cond, noise, seed)
            stats = trainset_stats(train_feats) if stream.standardize is not None else None
            test_feats = standardize(test_feats, stream, stats)
            if policy == MATCHED:
                use_bank = train_bank(standardize(train_feats, stream, stats), src.train, stream, seed,
                                      meta={"condition": cond})
        table = score_instances(use_bank, test_feats, corpus.test.instances,
                                stream.sectors, stream.frames)
        if scores_out is not None:
            scores_out[cond] = table
        runtime = time.perf_counter() - t0
        for rule in rules:
            rep = evaluate_table(table, truths, priors, cmap, rule, cond, runtime)
            rep.meta.update({"policy": policy, "basis": stream.basis, "seed": seed})
            reports.append(rep)
    return reports


def combined_reports(cep: Mapping, wave: Mapping, schedule: CombinationSchedule | None,
                     truths: Sequence[str], priors: np.ndarray, cmap: ClassMap,
                     rule: str = "T", alpha: float | None = None, mode: str = "raw",
                     d_cep: int | None = None, d_wave: int | None = None) -> list[EvaluationReport]:
    """Reports for the two-stream combination at every shared condition.

    ``cep`` and ``wave`` map conditions to ScoreTables over the same
    classes and instances. A fixed ``alpha`` overrides the schedule.
    """
    out = []
    for cond in [c for c in cep if c in wave]:
        a_tab, b_tab = cep[cond], wave[cond]
        if a_tab.classes != b_tab.classes:
            raise ConfigurationError("streams disagree on the class set")
        a = alpha if alpha is not None else alpha_schedule(schedule, schedule_argument(cond, schedule.units))
        comb = combine_logliks(a_tab.rule(rule), b_tab.rule(rule), a, mode, d_cep, d_wave)
        pred = predict(comb, priors)
        rep = score([a_tab.classes[i] for i in pred], truths, cmap, cond, f"{rule}+comb")
        rep.meta["alpha"] = a
        out.append(rep)
    return out


# -- report files ----------------------------------------------------------------

def write_report(report: EvaluationReport, out_dir: str | Path, experiment: str,
                 extra_meta: Mapping | None = None) -> Path:
    """``{experiment}/{condition}/{rule}.report`` plus a JSON twin."""
    d = Path(out_dir) / experiment / condition_name(report.condition)
    d.mkdir(parents=True, exist_ok=True)
    if extra_meta:
        report.meta.update(extra_meta)
    path = d / f"{report.rule}.report"
    path.write_text(report.to_text())
    path.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=1))
    return path


def summary_table(results: Mapping[str, Sequence[EvaluationReport]]) -> str:
    """Error (%) against condition, one column per method."""
    methods = list(results)
    conds = []
    for reps in results.values():
        for r in reps:
            if r.condition not in conds:
                conds.append(r.condition)
    conds.sort(key=lambda c: -math.inf if c == QUIET else -float(c))
    lines = ["condition\t" + "\t".join(methods)]
    for c in conds:
        row = [condition_name(c)]
        for m in methods:
            hit = [r for r in results[m] if r.condition == c]
            row.append(f"{100 * hit[0].error_rate:.2f}" if hit else "-")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
