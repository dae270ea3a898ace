"""Command-line interface.

    linphone <command> --config exp.cfg [--seed N] [--snr Q,12,0] ...

Commands: ingest, features, train, adapt, classify, sweep, fit-alpha, report.
Configuration is a flat ``key = value`` file; ``include other.cfg`` pulls in
another file (relative to the including one) and later lines win. Command
line flags override the file. ``LINPHONE_CACHE`` sets the feature cache
directory and nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptation import adapt_bank
from .classifier import (RULES, SECTORS, CombinationSchedule, ScoreTable, fit_alpha,
                         read_score_dump, write_score_dump)
from .corpus import (CorpusManifest, augment_small_classes, default_class_map,
                     extract_instances, scan_corpus)
from .density import COMPONENT_SET, ConfigurationError, ModelBank
from .eval import (ADAPT, CMVN, MATCHED, NONE, EvaluationReport, combined_reports,
                   condition_name, snr_sweep, summary_table, write_report)
from .frontend import (EXTERNAL, MFCC, MFCC_DELTAS, QUIET, SENTENCE, TRAINSET, WAVE_DCT,
                       FeatureMatrix, NoiseSource, snr_to_sigma2)
from .pipeline import (Corpus, StreamConfig, condition_features, standardize, train_bank,
                       trainset_stats)

logger = logging.getLogger("linphone")

ENV_CACHE = "LINPHONE_CACHE"

BASES = {"wave": WAVE_DCT, "mfcc": MFCC, "mfcc_deltas": MFCC_DELTAS, "external": EXTERNAL}
POLICY_NAMES = {"adapt": ADAPT, "cmvn": CMVN, "matched": MATCHED, "none": NONE}
STANDARDIZE = {"none": None, "trainset": TRAINSET, "sentence": SENTENCE}

DEFAULTS = {
    "corpus": "",
    "train_dir": "",
    "test_dir": "",
    "noise": "",
    "out": "linphone_out",
    "basis": "wave",
    "frames": "",
    "sectors": "all",
    "components": "1,2,4,8,16,32,64",
    "policy": "adapt",
    "snr": "Q,30,24,18,12,6,0,-6,-12,-18",
    "seed": "",
    "standardize": "",
    "external_root": "",
    "matched_train": "",
    "augment": "yes",
    "threshold": "1500",
    "workers": "1",
    "rules": "T",
    "experiment": "",
    "sigma0": "",
    "beta": "",
    "units": "db",
    "combine_mode": "raw",
    "cep_scores": "",
    "wave_scores": "",
    "d_cep": "",
    "d_wave": "",
    "alpha_tolerance": "0.02",
}


class ConfigError(Exception):
    """Invalid configuration; ``problems`` lists (field, message) pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


def read_config(path: str | Path, _stack: tuple = ()) -> dict[str, str]:
    path = Path(path)
    if path.resolve() in _stack:
        raise ConfigError([("include", f"include cycle through {path}")])
    if not path.is_file():
        raise ConfigError([("config", f"no such file {path}")])
    out: dict[str, str] = {}
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("include ") and "=" not in line:
            inc = Path(line[len("include "):].strip())
            out.update(read_config(inc if inc.is_absolute() else path.parent / inc,
                                   _stack + (path.resolve(),)))
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError([(f"{path}:{n}", f"expected 'key = value', got {raw!r}")])
        if key not in DEFAULTS:
            raise ConfigError([(key, f"unknown key ({path}:{n})")])
        out[key] = value.strip()
    return out


def config_hash(values: dict[str, str]) -> str:
    text = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.replace(" ", ",").split(",") if t.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    seed: int
    basis: str
    stream: StreamConfig
    policy: str
    conditions: tuple
    out: Path
    train_dir: Path | None
    test_dir: Path | None
    noise: Path | None
    matched_train: Path | None
    augment: bool
    threshold: int
    workers: int
    rules: tuple[str, ...]
    experiment: str
    schedule: CombinationSchedule | None
    units: str
    combine_mode: str
    cep_scores: Path
    wave_scores: Path
    d_cep: int | None
    d_wave: int | None
    alpha_tolerance: float

    @property
    def hash(self) -> str:
        return config_hash(self.values)

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.hash, "seed": self.seed}

    @property
    def stream_name(self) -> str:
        return self.values["basis"]


def validate(values: dict[str, str]) -> ExperimentConfig:
    """Check every field and collect all problems before failing."""
    v = dict(DEFAULTS)
    v.update(values)
    problems = []

    def fail(k, msg):
        problems.append((k, msg))

    def as_int(k, lo=None):
        try:
            x = int(v[k])
        except ValueError:
            fail(k, f"expected an integer, got {v[k]!r}")
            return None
        if lo is not None and x < lo:
            fail(k, f"must be >= {lo}")
            return None
        return x

    def as_float(k, positive=False):
        if v[k] == "":
            return None
        try:
            x = float(v[k])
        except ValueError:
            fail(k, f"expected a number, got {v[k]!r}")
            return None
        if positive and x <= 0:
            fail(k, "must be positive")
            return None
        return x

    def as_path(k, must_exist=True):
        if not v[k]:
            return None
        p = Path(v[k])
        if must_exist and not p.exists():
            fail(k, f"path does not exist: {p}")
        return p

    seed = None
    if v["seed"] == "":
        fail("seed", "required (no implicit randomness)")
    else:
        seed = as_int("seed", 0)

    basis_name = v["basis"].lower()
    basis = BASES.get(basis_name)
    if basis is None:
        fail("basis", f"one of {sorted(BASES)}, got {v['basis']!r}")
    v["basis"] = basis_name

    frames = ()
    try:
        frames = tuple(int(t) for t in _split(v["frames"]))
    except ValueError:
        fail("frames", f"expected odd integers, got {v['frames']!r}")
    if any(f < 1 or f % 2 == 0 for f in frames):
        fail("frames", f"frame counts must be odd and positive, got {v['frames']!r}")

    sec = v["sectors"].strip()
    if sec.lower() == "all":
        sectors = SECTORS
    elif sec.lower() in ("c", "center", "centre"):
        sectors = ("C",)
    else:
        sectors = tuple(s.upper() for s in _split(sec))
        bad = [s for s in sectors if s not in SECTORS]
        if bad or not sectors:
            fail("sectors", f"'all', 'center' or letters from {''.join(SECTORS)}, got {sec!r}")

    comps = ()
    try:
        comps = tuple(int(t) for t in _split(v["components"]))
    except ValueError:
        fail("components", f"expected integers, got {v['components']!r}")
    if not comps or not set(comps) <= set(COMPONENT_SET):
        fail("components", f"values must come from {COMPONENT_SET}")

    policy = POLICY_NAMES.get(v["policy"].lower())
    if policy is None:
        fail("policy", f"one of {sorted(POLICY_NAMES)}, got {v['policy']!r}")

    conds = []
    for t in _split(v["snr"]):
        if t.upper() == QUIET:
            conds.append(QUIET)
            continue
        try:
            x = float(t)
            conds.append(int(x) if x.is_integer() else x)
        except ValueError:
            fail("snr", f"expected 'Q' or a number in dB, got {t!r}")
    if not conds:
        fail("snr", "no conditions given")

    std_name = v["standardize"].lower()
    if std_name == "":
        std = None if basis == WAVE_DCT else TRAINSET
    elif std_name in STANDARDIZE:
        std = STANDARDIZE[std_name]
    else:
        std = None
        fail("standardize", f"one of {sorted(STANDARDIZE)}, got {v['standardize']!r}")

    if policy == ADAPT and basis not in (None, WAVE_DCT):
        fail("policy", "adapt is exact only for the waveform basis; use cmvn or matched")
    if policy == CMVN and basis == WAVE_DCT:
        fail("policy", "cmvn applies to cepstral streams")
    if policy == CMVN and std_name == "none":
        fail("standardize", "policy cmvn needs trainset or sentence standardisation")

    ext = as_path("external_root")
    if basis == EXTERNAL and ext is None:
        fail("external_root", "required for basis external")

    corpus = as_path("corpus")
    train_dir = as_path("train_dir") or (corpus / "train" if corpus else None)
    test_dir = as_path("test_dir") or (corpus / "test" if corpus else None)
    noise = as_path("noise")
    matched = as_path("matched_train")

    aug = v["augment"].lower()
    if aug not in ("yes", "no", "true", "false", "1", "0"):
        fail("augment", f"yes or no, got {v['augment']!r}")
    threshold = as_int("threshold", 0)
    workers = as_int("workers", 1)

    rules = tuple(r.upper() for r in _split(v["rules"]))
    if not rules or any(r not in RULES for r in rules):
        fail("rules", f"letters from {RULES}, got {v['rules']!r}")

    units = v["units"].lower()
    if units not in ("db", "linear"):
        fail("units", f"db or linear, got {v['units']!r}")
    sigma0, beta = as_float("sigma0"), as_float("beta", positive=True)
    if (sigma0 is None) != (beta is None) and not problems:
        fail("beta" if beta is None else "sigma0", "sigma0 and beta must be given together")
    mode = v["combine_mode"].lower()
    if mode not in ("raw", "dim"):
        fail("combine_mode", f"raw or dim, got {v['combine_mode']!r}")
    d_cep = as_int("d_cep", 1) if v["d_cep"] else None
    d_wave = as_int("d_wave", 1) if v["d_wave"] else None
    tol = as_float("alpha_tolerance", positive=True)

    if problems:
        raise ConfigError(problems)

    if not frames:
        frames = StreamConfig.waveform().frames if basis == WAVE_DCT else StreamConfig.cepstral().frames
    stream = StreamConfig(basis, frames, sectors, comps, std, str(ext) if ext else None)
    out = Path(v["out"])
    schedule = CombinationSchedule(sigma0, beta, units) if sigma0 is not None else None
    return ExperimentConfig(
        values=v, seed=seed, basis=basis, stream=stream, policy=policy, conditions=tuple(conds),
        out=out, train_dir=train_dir, test_dir=test_dir, noise=noise, matched_train=matched,
        augment=aug in ("yes", "true", "1"), threshold=threshold, workers=workers, rules=rules,
        experiment=v["experiment"] or f"{basis_name}_{v['policy'].lower()}",
        schedule=schedule, units=units, combine_mode=mode,
        cep_scores=Path(v["cep_scores"]) if v["cep_scores"] else out / "scores" / "mfcc_deltas",
        wave_scores=Path(v["wave_scores"]) if v["wave_scores"] else out / "scores" / "wave",
        d_cep=d_cep, d_wave=d_wave, alpha_tolerance=tol)


# -- artifacts -------------------------------------------------------------------

def _manifest_path(cfg, split):
    return cfg.out / "manifest" / f"{split}.json"


def _bank_path(cfg, cond=QUIET):
    tail = "" if cond == QUIET else f".{condition_name(cond)}"
    return cfg.out / "banks" / f"{cfg.stream_name}{tail}.bank.json"


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ConfigError([("out", f"missing {path}; {hint}")])
    return path


def _load_manifests(cfg) -> tuple[CorpusManifest, CorpusManifest]:
    hint = "run 'linphone ingest' first"
    return tuple(CorpusManifest.from_json(_need(_manifest_path(cfg, s), hint).read_text())
                 for s in ("train", "test"))


def _noise(cfg) -> NoiseSource:
    return NoiseSource.from_file(cfg.noise) if cfg.noise else NoiseSource()


def _build_manifests(cfg, train_dir, test_dir):
    cmap = default_class_map()
    train = extract_instances(scan_corpus(train_dir), cmap, "train")
    if cfg.augment:
        train = augment_small_classes(train, cfg.threshold)
    test = None
    if test_dir is not None:
        test = extract_instances(scan_corpus(test_dir), cmap, "test")
    return train, test


def cache_dir(cfg) -> Path:
    return Path(os.environ.get(ENV_CACHE) or cfg.out / "cache")


class FeatureCache:
    """Raw per-condition features on disk, keyed by everything they depend on."""

    def __init__(self, root: Path, noise_path):
        self.root = Path(root)
        self.noise_path = str(noise_path or "")
        self.written: list[Path] = []

    def _key(self, waves, stream, cond, seed) -> str:
        ident = json.dumps([stream.basis, seed, self.noise_path, condition_name(cond), sorted(waves)])
        return hashlib.sha256(ident.encode()).hexdigest()[:20]

    def __call__(self, waves, stream, cond, noise=None, seed=0) -> dict[str, FeatureMatrix]:
        if stream.basis == EXTERNAL:
            return condition_features(waves, stream, cond, noise, seed)
        path = self.root / f"{self._key(waves, stream, cond, seed)}.npz"
        if path.exists():
            with np.load(path, allow_pickle=False) as z:
                ids = [str(s) for s in z["ids"]]
                hop, width = float(z["hop"]), float(z["width"])
                return {sid: FeatureMatrix(z[f"f{i}"], stream.basis, hop, width)
                        for i, sid in enumerate(ids)}
        feats = condition_features(waves, stream, cond, noise, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        ids = sorted(feats)
        first = feats[ids[0]]
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, ids=np.array(ids), hop=first.hop, width=first.width,
                 **{f"f{i}": feats[sid].frames for i, sid in enumerate(ids)})
        tmp.replace(path)
        self.written.append(path)
        return feats


# -- commands --------------------------------------------------------------------

def cmd_ingest(cfg) -> int:
    problems = []
    for k, p in (("train_dir", cfg.train_dir), ("test_dir", cfg.test_dir)):
        if p is None:
            problems.append((k, "required (or set corpus with train/ and test/ inside)"))
        elif not p.is_dir():
            problems.append((k, f"not a directory: {p}"))
    if problems:
        raise ConfigError(problems)
    train, test = _build_manifests(cfg, cfg.train_dir, cfg.test_dir)
    for m in (train, test):
        m.meta.update(cfg.stamp)
        p = _manifest_path(cfg, m.split)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(m.to_json())
        print(f"{m.split}: {len(m.instances)} instances, {len(m.counts())} groups -> {p}")
    return 0


def _corpus(cfg) -> Corpus:
    return Corpus.load(*_load_manifests(cfg))


def cmd_features(cfg) -> int:
    corpus = _corpus(cfg)
    cache = FeatureCache(cache_dir(cfg), cfg.noise)
    noise = _noise(cfg)
    for cond in cfg.conditions:
        cache(corpus.train_waves, cfg.stream, cond, noise, cfg.seed)
        cache(corpus.test_waves, cfg.stream, cond, noise, cfg.seed + 1)
    _write_json(cfg.out / "features" / f"{cfg.stream_name}.json",
                {**cfg.stamp, "cache": str(cache.root),
                 "conditions": [condition_name(c) for c in cfg.conditions],
                 "written": [p.name for p in cache.written]})
    print(f"features for {len(cfg.conditions)} conditions in {cache.root} ({len(cache.written)} new)")
    return 0


def cmd_train(cfg) -> int:
    corpus = _corpus(cfg)
    cache = FeatureCache(cache_dir(cfg), cfg.noise)
    feats = cache(corpus.train_waves, cfg.stream, QUIET, _noise(cfg), cfg.seed)
    stats = trainset_stats(feats) if cfg.stream.standardize == TRAINSET else None
    bank = train_bank(standardize(feats, cfg.stream, stats), corpus.train, cfg.stream, cfg.seed,
                      cfg.workers, meta={**cfg.stamp, "condition": "Q"})
    path = _bank_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(bank.to_json())
    print(f"{len(bank.models)} models for {len(bank.classes)} classes -> {path}")
    return 0


def _load_bank(cfg) -> ModelBank:
    return ModelBank.from_json(_need(_bank_path(cfg), "run 'linphone train' first").read_text())


def cmd_adapt(cfg) -> int:
    if cfg.basis != WAVE_DCT:
        raise ConfigError([("basis", "adaptation is defined for the waveform basis only")])
    bank = _load_bank(cfg)
    shape = _noise(cfg).spec(160)
    for cond in cfg.conditions:
        if cond == QUIET:
            continue
        adapted = adapt_bank(bank, shape.with_sigma2(snr_to_sigma2(cond)))
        adapted.meta.update({**cfg.stamp, "condition": condition_name(cond)})
        path = _bank_path(cfg, cond)
        path.write_text(adapted.to_json())
        print(f"{condition_name(cond)} -> {path}")
    return 0


def _evaluate(cfg, write_reports: bool) -> int:
    if cfg.policy == MATCHED and cfg.matched_train is None:
        raise ConfigError([("matched_train", "policy matched needs per-condition training data: "
                                             "set matched_train to a training corpus directory")])
    corpus = _corpus(cfg)
    bank = _load_bank(cfg)
    cmap = default_class_map()
    matched = None
    if cfg.policy == MATCHED:
        mtrain, _ = _build_manifests(cfg, cfg.matched_train, None)
        matched = Corpus.load(mtrain, corpus.test)
    tables: dict = {}
    reports = snr_sweep(bank, corpus, cfg.stream, cmap, cfg.conditions, cfg.policy, _noise(cfg),
                        cfg.seed, cfg.rules, matched, tables,
                        features_fn=FeatureCache(cache_dir(cfg), cfg.noise))
    truths = [i.group48 for i in corpus.test.instances]
    priors = [corpus.train.priors[k] for k in bank.classes]
    score_dir = cfg.out / "scores" / cfg.stream_name
    score_dir.mkdir(parents=True, exist_ok=True)
    (_, _, f0, _), m0 = next(iter(bank.models.items()))
    per_frame = m0.d // f0
    for cond, table in tables.items():
        for rule in cfg.rules:
            meta = {**cfg.stamp, "condition": condition_name(cond), "rule": rule,
                    "policy": cfg.policy, "basis": cfg.basis,
                    "dim": per_frame * table.frames[len(table.frames) // 2],
                    "priors": " ".join(repr(float(p)) for p in priors)}
            write_score_dump(score_dir / f"{condition_name(cond)}.{rule}.scores", table.classes,
                             table.rule(rule), truths, table.instance_ids, meta)
    for r in reports:
        print(f"{condition_name(r.condition):>6} {r.rule}  error {100 * r.error_rate:6.2f}%")
        if write_reports:
            write_report(r, cfg.out / "reports", cfg.experiment, cfg.stamp)
    if write_reports:
        summary = summary_table({f"{cfg.experiment}:{rule}": [r for r in reports if r.rule == rule]
                                 for rule in cfg.rules})
        (cfg.out / "reports" / cfg.experiment / "summary.tsv").write_text(summary)
    return 0


def cmd_classify(cfg) -> int:
    return _evaluate(cfg, write_reports=False)


def cmd_sweep(cfg) -> int:
    return _evaluate(cfg, write_reports=True)


def _load_dumps(root: Path, rule: str) -> dict:
    out = {}
    for p in sorted(Path(root).glob(f"*.{rule}.scores")):
        name = p.name[: -len(f".{rule}.scores")]
        cond = QUIET if name == "Q" else float(name[:-2]) if name.endswith("dB") else None
        if cond is None:
            continue
        out[int(cond) if cond != QUIET and float(cond).is_integer() else cond] = read_score_dump(p)
    return out


def _paired_dumps(cfg):
    rule = cfg.rules[0]
    cep = _load_dumps(_need(cfg.cep_scores, "run 'classify' or 'sweep' on the cepstral stream"), rule)
    wave = _load_dumps(_need(cfg.wave_scores, "run 'classify' or 'sweep' on the waveform stream"), rule)
    conds = [c for c in cep if c in wave]
    if not conds:
        raise ConfigError([("cep_scores", f"no conditions shared with {cfg.wave_scores} for rule {rule}")])
    ref = cep[conds[0]]
    classes, truths, ids = ref[0], ref[2], ref[3]
    for c in conds:
        for dump in (cep[c], wave[c]):
            if dump[0] != classes or dump[3] != ids:
                raise ConfigError([("cep_scores", f"score files disagree on classes or instances at "
                                                  f"{condition_name(c)}")])
    priors = np.array([float(x) for x in ref[4]["priors"].split()])
    dims = (cfg.d_cep or int(ref[4].get("dim", 0)) or None,
            cfg.d_wave or int(wave[conds[0]][4].get("dim", 0)) or None)
    return rule, conds, cep, wave, classes, truths, priors, dims


def cmd_fit_alpha(cfg) -> int:
    rule, conds, cep, wave, classes, truths, priors, (d_cep, d_wave) = _paired_dumps(cfg)
    index = {k: i for i, k in enumerate(classes)}
    truth_idx = np.array([index[t] for t in truths])
    fit = fit_alpha({c: cep[c][1] for c in conds}, {c: wave[c][1] for c in conds}, truth_idx, priors,
                    units=cfg.units, tolerance=cfg.alpha_tolerance, mode=cfg.combine_mode,
                    d_cep=d_cep, d_wave=d_wave)
    ok = fit.band_ok(cfg.alpha_tolerance)
    doc = {**cfg.stamp, "sigma0": fit.schedule.sigma0, "beta": fit.schedule.beta,
           "units": fit.schedule.units, "rule": rule, "mode": cfg.combine_mode,
           "conditions": [condition_name(c) for c in fit.conditions],
           "bands": [list(b) for b in fit.bands], "band_ok": ok,
           "best_error": [float(e.min()) for e in fit.errors]}
    _write_json(cfg.out / "schedule.json", doc)
    print(f"sigma0 = {fit.schedule.sigma0:.4g}  beta = {fit.schedule.beta:.4g}  ({fit.schedule.units})")
    for c, (lo, hi), good in zip(fit.conditions, fit.bands, ok):
        print(f"{condition_name(c):>6} band [{lo:.2f}, {hi:.2f}] {'ok' if good else 'OUTSIDE'}")
    return 0


def cmd_report(cfg) -> int:
    root = cfg.out / "reports"
    results: dict[str, list] = {}
    for p in sorted(root.glob("*/*/*.json")):
        if p.parent.parent.name == "combined":
            continue
        rep = EvaluationReport.from_dict(json.loads(p.read_text()))
        results.setdefault(f"{p.parent.parent.name}:{rep.rule}", []).append(rep)
    schedule = cfg.schedule
    sched_file = cfg.out / "schedule.json"
    if schedule is None and sched_file.exists():
        doc = json.loads(sched_file.read_text())
        schedule = CombinationSchedule(doc["sigma0"], doc["beta"], doc["units"])
    if schedule is not None and cfg.cep_scores.exists() and cfg.wave_scores.exists():
        rule, conds, cep, wave, classes, truths, priors, (d_cep, d_wave) = _paired_dumps(cfg)
        def as_table(dump):
            return ScoreTable(dump[0], ["C"], [1], dump[1][:, :, None, None], dump[3])

        reps = combined_reports({c: as_table(cep[c]) for c in conds},
                                {c: as_table(wave[c]) for c in conds}, schedule, truths, priors,
                                default_class_map(), "T", mode=cfg.combine_mode,
                                d_cep=d_cep, d_wave=d_wave)
        for r in reps:
            r.rule = f"{rule}+comb"
            write_report(r, root, "combined", cfg.stamp)
        results[f"combined:{rule}"] = reps
    if not results:
        raise ConfigError([("out", f"no reports under {root}; run 'linphone sweep' first")])
    root.mkdir(parents=True, exist_ok=True)
    table = summary_table(results)
    (root / "summary.tsv").write_text(f"# config_hash = {cfg.hash}\n# seed = {cfg.seed}\n" + table)
    print(table, end="")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "fit-alpha": cmd_fit_alpha,
    "report": cmd_report,
}

FLAG_KEYS = ("seed", "snr", "policy", "basis", "frames", "sectors", "components", "out")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linphone", description="Phoneme classification in linear feature domains.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value configuration file")
    for k in FLAG_KEYS:
        p.add_argument(f"--{k}", dest=k)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args) -> ExperimentConfig:
    values = read_config(args.config) if args.config else {}
    for item in args.set:
        k, sep, val = item.partition("=")
        if not sep or k.strip() not in DEFAULTS:
            raise ConfigError([(k.strip() or item, "expected KEY=VALUE with a known key")])
        values[k.strip()] = val.strip()
    for k in FLAG_KEYS:
        val = getattr(args, k)
        if val is not None:
            values[k] = val
    return validate(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print("configuration error:", file=sys.stderr)
        for k, msg in e.problems:
            print(f"  {k}: {msg}", file=sys.stderr)
        return 2
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
