"""Segment assembly, likelihood sums over frame counts and sectors,
prediction rules and two-stream combination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from .corpus import PhonemeInstance, PhonemeInterval
from .density import ConfigurationError, ModelBank
from .frontend import QUIET, WAVE_DCT, FeatureMatrix

SECTORS = ("A", "B", "C", "D", "E")
CENTER = "C"
WAVE_FRAMES = (5, 7, 9, 11, 13)
CEPSTRAL_FRAMES = (7, 9, 11, 13, 15)
RULES = ("M", "R", "S", "T")

DB = "db"
LINEAR = "linear"


@dataclass(frozen=True)
class SegmentAssembly:
    sector: str
    f: int
    vector: np.ndarray


@dataclass(frozen=True)
class FrameCountSet:
    F: tuple[int, ...]

    def __post_init__(self):
        if not self.F:
            raise ValueError("frame-count set must be non-empty")
        if any(f < 1 or f % 2 == 0 for f in self.F):
            raise ValueError(f"frame counts must be odd and positive: {self.F}")

    def __iter__(self):
        return iter(self.F)

    def __len__(self):
        return len(self.F)


@dataclass(frozen=True)
class CombinationSchedule:
    """Sigmoid weight on the waveform stream as a function of noise level.

    With ``units="db"`` the argument is the noise level relative to the
    speech in dB, i.e. minus the SNR; with ``units="linear"`` it is the
    linear noise variance.
    """
    sigma0: float
    beta: float
    units: str = DB

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.units not in (DB, LINEAR):
            raise ValueError(f"units must be {DB!r} or {LINEAR!r}")


@dataclass(frozen=True)
class Prediction:
    cls: int
    scores: np.ndarray


# -- assembly ------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def anchor_points(interval: PhonemeInterval, shift: int = 0) -> dict[str, int]:
    """Start, 1/6, 1/2, 5/6 and end points of the interval, in samples."""
    s, dur = interval.start, interval.end - interval.start
    pts = {"A": s, "B": s + _round_half_up(dur / 6), "C": s + _round_half_up(dur / 2),
           "D": s + _round_half_up(5 * dur / 6), "E": interval.end}
    return {k: v + shift for k, v in pts.items()}


def instance_anchor(inst: PhonemeInstance, sector: str) -> int:
    return anchor_points(inst.interval, inst.shift)[sector]


def _first_frame(fm: FeatureMatrix, anchors: np.ndarray, f: int) -> np.ndarray:
    # start index of the f frames whose centres are nearest each anchor; ties go earlier
    hop, half = fm.hop * fm.rate, 0.5 * fm.width * fm.rate
    p = (np.asarray(anchors, dtype=np.float64) - half) / hop - (f - 1) / 2
    return np.ceil(p - 0.5).astype(int)


def assemble_many(fm: FeatureMatrix, anchors, f: int, pad: str | None = None) -> np.ndarray:
    """Concatenated ``f``-frame vectors around each anchor, shape (n, f*dim).

    Frames outside the sentence are zeros for the waveform basis and
    edge copies otherwise.
    """
    if f < 1:
        raise ValueError("f must be >= 1")
    pad = pad or ("zero" if fm.basis == WAVE_DCT else "edge")
    idx = _first_frame(fm, anchors, f)[:, None] + np.arange(f)[None, :]
    T = len(fm)
    out = fm.frames[np.clip(idx, 0, T - 1)]
    if pad == "zero":
        out = out * ((idx >= 0) & (idx < T))[..., None]
    elif pad != "edge":
        raise ValueError(f"unknown pad mode {pad!r}")
    return out.reshape(len(idx), f * fm.dim)


def assemble(fm: FeatureMatrix, anchor: int, f: int, sector: str = CENTER) -> SegmentAssembly:
    return SegmentAssembly(sector, f, assemble_many(fm, [anchor], f)[0])


# -- likelihood sums -------------------------------------------------------------

def f_average_loglik(bank: ModelBank, cls: str, assemblies: Mapping[int, np.ndarray],
                     sector: str = CENTER):
    """Sum over frame counts of the model-average log-likelihoods."""
    missing = [f for f in assemblies if f not in bank.frame_counts]
    if missing:
        raise ConfigurationError(f"no models for frame counts {missing}")
    return sum(bank.average_loglik(cls, sector, f, x) for f, x in sorted(assemblies.items()))


def sector_sum_loglik(bank: ModelBank, cls: str, vectors: Mapping[str, np.ndarray], f: int):
    """Sum over the five sectors of the model-average log-likelihoods."""
    missing = [s for s in SECTORS if s not in vectors]
    if missing:
        raise ConfigurationError(f"missing sectors {missing}")
    return sum(bank.average_loglik(cls, s, f, vectors[s]) for s in SECTORS)


def combined_T(bank: ModelBank, cls: str, assemblies: Mapping[str, Mapping[int, np.ndarray]]):
    """Sum over configured sectors of the frame-count sums."""
    if not assemblies:
        raise ConfigurationError("no sectors given")
    return sum(f_average_loglik(bank, cls, assemblies[s], s) for s in sorted(assemblies))


@dataclass
class ScoreTable:
    """Model-average log-likelihoods per instance, class, sector and frame count."""
    classes: list[str]
    sectors: list[str]
    frames: list[int]
    values: np.ndarray  # (n, K, S, F)
    instance_ids: list[str] = field(default_factory=list)

    def rule(self, tag: str, f: int | None = None, sector: str = CENTER) -> np.ndarray:
        """Per-class decision values (n, K) before priors."""
        if tag == "T":
            return self.values.sum(axis=(2, 3))
        if tag == "R":
            return self.values[:, :, self.sectors.index(sector), :].sum(axis=2)
        fi = self.frames.index(f if f is not None else self.frames[len(self.frames) // 2])
        if tag == "S":
            return self.values[:, :, :, fi].sum(axis=2)
        if tag == "M":
            return self.values[:, :, self.sectors.index(sector), fi]
        raise ValueError(f"unknown rule {tag!r}")


def score_instances(bank: ModelBank, features: Mapping[str, FeatureMatrix],
                    instances: Sequence[PhonemeInstance], sectors: Sequence[str] | None = None,
                    frames: Sequence[int] | None = None) -> ScoreTable:
    sectors = list(sectors or bank.sectors)
    frames = list(frames or bank.frame_counts)
    classes = bank.classes
    out = np.empty((len(instances), len(classes), len(sectors), len(frames)))
    by_sent: dict[str, list[int]] = {}
    for i, inst in enumerate(instances):
        by_sent.setdefault(inst.sentence_id, []).append(i)
    for si, s in enumerate(sectors):
        for fi, f in enumerate(frames):
            X = None
            for sid, idx in by_sent.items():
                block = assemble_many(features[sid], [instance_anchor(instances[i], s) for i in idx], f)
                if X is None:
                    X = np.empty((len(instances), block.shape[1]))
                X[idx] = block
            if X is None:
                continue
            for ki, k in enumerate(classes):
                out[:, ki, si, fi] = bank.average_loglik(k, s, f, X)
    ids = [f"{inst.sentence_id}:{inst.interval.start}:{inst.shift}" for inst in instances]
    return ScoreTable(classes, sectors, frames, out, ids)


# -- prediction and combination -------------------------------------------------

def predict(scores, priors) -> Prediction | np.ndarray:
    """argmax_k of score_k + log prior_k; ties go to the lowest index.

    A 1-d score vector gives a ``Prediction``; an (n, K) table gives the
    predicted indices.
    """
    s = np.asarray(scores, dtype=np.float64)
    p = np.asarray(priors, dtype=np.float64)
    if s.shape[-1] == 0:
        raise ConfigurationError("empty class set")
    if p.shape != (s.shape[-1],):
        raise ConfigurationError("one prior per class required")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("priors must be positive and sum to 1")
    total = s + np.log(p)
    idx = np.argmax(total, axis=-1)
    if s.ndim == 1:
        return Prediction(int(idx), total)
    return idx


def schedule_argument(snr, units: str = DB) -> float:
    if units == DB:
        return -math.inf if snr == QUIET else -float(snr)
    return 0.0 if snr == QUIET else 10.0 ** (-float(snr) / 10.0)


def alpha_schedule(schedule: CombinationSchedule, sigma2: float) -> float:
    return float(expit(schedule.beta * (sigma2 - schedule.sigma0)))


def combine_logliks(t_cep, t_wave, alpha: float, mode: str = "raw",
                    d_cep: int | None = None, d_wave: int | None = None,
                    classes_cep: Sequence[str] | None = None,
                    classes_wave: Sequence[str] | None = None) -> np.ndarray:
    """Convex combination of two streams' per-class log-likelihoods.

    ``mode="raw"`` combines absolute values; ``mode="dim"`` first divides
    each stream by its feature dimension.
    """
    if classes_cep is not None and classes_wave is not None and list(classes_cep) != list(classes_wave):
        raise ConfigurationError("streams disagree on the class set")
    a, b = np.asarray(t_cep, float), np.asarray(t_wave, float)
    if a.shape != b.shape:
        raise ConfigurationError(f"score shapes differ: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if mode == "dim":
        if not d_cep or not d_wave:
            raise ConfigurationError("dimension-normalised mode needs d_cep and d_wave")
        a, b = a / d_cep, b / d_wave
    elif mode != "raw":
        raise ValueError(f"unknown mode {mode!r}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return (1.0 - alpha) * a + alpha * b


@dataclass
class AlphaFit:
    schedule: CombinationSchedule
    grid: np.ndarray
    conditions: list
    errors: np.ndarray  # (conditions, grid)
    bands: list[tuple[float, float]]

    def band_ok(self, tolerance: float = 0.02) -> list[bool]:
        """Whether the fitted alpha at each condition stays within
        ``tolerance`` of that condition's best error."""
        ok = []
        for ci, cond in enumerate(self.conditions):
            a = alpha_schedule(self.schedule, schedule_argument(cond, self.schedule.units))
            err = np.interp(a, self.grid, self.errors[ci])
            ok.append(bool(err <= self.errors[ci].min() + tolerance + 1e-12))
        return ok


def _error(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(pred != truth))


def _band(grid: np.ndarray, err: np.ndarray, tolerance: float) -> tuple[float, float]:
    # contiguous run of acceptable alphas around the best one
    ok = err <= err.min() + tolerance
    i = j = int(np.argmin(err))
    while i > 0 and ok[i - 1]:
        i -= 1
    while j < len(grid) - 1 and ok[j + 1]:
        j += 1
    return float(grid[i]), float(grid[j])


def fit_alpha(cep: Mapping, wave: Mapping, truth, priors, *, units: str = DB,
              grid=None, tolerance: float = 0.02, mode: str = "raw",
              d_cep: int | None = None, d_wave: int | None = None,
              error_fn: Callable[[np.ndarray, np.ndarray], float] = _error) -> AlphaFit:
    """Grid-search alpha per condition, keep the band within ``tolerance``
    of the best error, and least-squares fit the sigmoid through the band
    midpoints.

    If the midpoint fit leaves some condition outside its band, it is
    refitted with a penalty on the distance to each band.

    ``cep`` and ``wave`` map conditions (SNR in dB or ``QUIET``) to (n, K)
    score tables for the same instances; ``truth`` holds class indices.
    """
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, float)
    conds = [c for c in cep if c in wave]
    if not conds:
        raise ConfigurationError("no common conditions between the two streams")
    truth = np.asarray(truth)
    errors = np.empty((len(conds), len(grid)))
    for ci, c in enumerate(conds):
        for ai, a in enumerate(grid):
            comb = combine_logliks(cep[c], wave[c], float(a), mode, d_cep, d_wave)
            errors[ci, ai] = error_fn(predict(comb, priors), truth)
    bands = [_band(grid, e, tolerance) for e in errors]
    args = np.array([schedule_argument(c, units) for c in conds])
    finite = np.isfinite(args)
    if finite.sum() < 2:
        raise ConfigurationError("need at least two finite-noise conditions to fit the schedule")
    x = args[finite]
    lo = np.array([b[0] for b in bands])[finite]
    hi = np.array([b[1] for b in bands])[finite]
    mid = (lo + hi) / 2
    span = max(x.max() - x.min(), 1e-12)

    def curve(p):
        return expit(p[1] * (x - p[0]))

    def resid_mid(p):
        return curve(p) - mid

    def resid_band(p):
        a = curve(p)
        return np.concatenate([0.05 * (a - mid), 10.0 * (np.maximum(lo - a, 0) + np.maximum(a - hi, 0))])

    def inside(p):
        a = curve(p)
        return bool(np.all((a >= lo - 1e-12) & (a <= hi + 1e-12)))

    starts = [[s0, b0 / span] for s0 in np.linspace(x.min(), x.max(), 7) for b0 in (1.0, 3.0, 10.0, 30.0)]
    bounds = ([-np.inf, 1e-9], [np.inf, np.inf])
    best = min((least_squares(resid_mid, p0, bounds=bounds) for p0 in starts), key=lambda r: r.cost)
    params = best.x
    if not inside(params):
        fits = [least_squares(resid_band, p0, bounds=bounds) for p0 in [list(params)] + starts]
        feasible = [r for r in fits if inside(r.x)]
        params = min(feasible or fits, key=lambda r: r.cost).x
    sched = CombinationSchedule(float(params[0]), float(params[1]), units)
    return AlphaFit(sched, grid, conds, errors, bands)


# -- score dumps -----------------------------------------------------------------

def write_score_dump(path: str | Path, classes: Sequence[str], scores, truths: Sequence[str],
                     ids: Sequence[str], meta: Mapping | None = None) -> None:
    """One line per instance: id, true class, then scores in class order."""
    scores = np.asarray(scores, dtype=np.float64)
    with open(path, "w") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {v}\n")
        fh.write("# classes = " + " ".join(classes) + "\n")
        for iid, t, row in zip(ids, truths, scores):
            fh.write(f"{iid} {t} " + " ".join(repr(float(v)) for v in row) + "\n")


def read_score_dump(path: str | Path) -> tuple[list[str], np.ndarray, list[str], list[str], dict]:
    meta, classes, ids, truths, rows = {}, None, [], [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            if k.strip() == "classes":
                classes = v.split()
            else:
                meta[k.strip()] = v.strip()
            continue
        if not line.strip():
            continue
        cols = line.split()
        ids.append(cols[0])
        truths.append(cols[1])
        rows.append([float(v) for v in cols[2:]])
    if classes is None:
        raise ValueError(f"{path}: missing class header")
    return classes, np.array(rows).reshape(len(rows), len(classes)), truths, ids, meta
