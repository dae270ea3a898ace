"""Signal conditioning and feature extraction.

Waveform features are block-DCT coefficients of 10 ms non-overlapping
frames; the cepstral baseline is 13 MFCCs with optional deltas.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.fft import dct, idct

RATE = 16000
WAVE_DCT = "WAVE_DCT"
MFCC = "MFCC"
MFCC_DELTAS = "MFCC_DELTAS"
EXTERNAL = "EXTERNAL"
BASES = (WAVE_DCT, MFCC, MFCC_DELTAS, EXTERNAL)

# distinguished "no noise" condition; deliberately not a number
QUIET = "Q"
DEFAULT_SNR_GRID = (QUIET, 30, 24, 18, 12, 6, 0, -6, -12, -18)

TRAINSET = "TRAINSET"
SENTENCE = "SENTENCE"


class DegenerateSignalError(ValueError):
    pass


class EstimationError(ValueError):
    pass


@dataclass
class SentenceWaveform:
    samples: np.ndarray
    rate: int = RATE
    normalized: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.normalized and abs(np.mean(self.samples ** 2) - 1.0) > 1e-9:
            raise ValueError("normalized waveform must have unit energy per sample")


@dataclass
class FeatureMatrix:
    frames: np.ndarray
    basis: str
    hop: float
    width: float
    rate: int = RATE

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.hop <= 0:
            raise ValueError("hop must be positive")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]

    def frame_centers(self) -> np.ndarray:
        """Frame centres in samples."""
        i = np.arange(len(self))
        return i * self.hop * self.rate + 0.5 * self.width * self.rate


@dataclass
class NoiseSpec:
    """Noise level and diagonal noise covariance in the model basis.

    ``N`` is rescaled so that it sums to its length.
    """
    sigma2: float
    N: np.ndarray
    basis: str = WAVE_DCT
    noise_id: str = "white"

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=np.float64)
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")
        if np.any(self.N <= 0):
            raise ValueError("noise covariance entries must be positive")
        if abs(self.N.sum() - len(self.N)) > 1e-6:
            raise ValueError("noise covariance must have trace equal to its dimension")

    @property
    def trace_d(self) -> int:
        return len(self.N)

    def for_dim(self, d: int) -> "NoiseSpec":
        """Tile the per-block diagonal to a model of ``d`` coefficients."""
        if d == len(self.N):
            return self
        if d % len(self.N):
            raise ValueError(f"dimension {d} is not a multiple of block {len(self.N)}")
        return NoiseSpec(self.sigma2, np.tile(self.N, d // len(self.N)), self.basis, self.noise_id)

    def with_sigma2(self, sigma2: float) -> "NoiseSpec":
        return NoiseSpec(sigma2, self.N, self.basis, self.noise_id)


def white_noise_spec(d: int, sigma2: float = 0.0, basis: str = WAVE_DCT) -> NoiseSpec:
    return NoiseSpec(sigma2, np.ones(d), basis, "white")


def snr_to_sigma2(snr_db) -> float:
    if snr_db == QUIET:
        return 0.0
    return 10.0 ** (-float(snr_db) / 10.0)


def sentence_seed(master: int, sentence_id: str) -> np.random.SeedSequence:
    """Per-sentence seed, independent of processing order."""
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(sentence_id.encode())])


# -- signal conditioning -----------------------------------------------------

def normalize_energy(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DegenerateSignalError("empty signal")
    power = np.mean(x * x)
    if power == 0.0:
        raise DegenerateSignalError("all-zero signal cannot be normalised")
    return x / np.sqrt(power)


def frame_signal(x, width: int, hop: int, pad: str = "zero") -> np.ndarray:
    """Split ``x`` into frames ``[i*hop, i*hop + width)``; the tail is zero-padded."""
    if width <= 0 or hop <= 0:
        raise ValueError("width and hop must be positive")
    if pad != "zero":
        raise ValueError(f"unsupported pad policy {pad!r}")
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    n_frames = 1 if n <= width else int(np.ceil((n - width) / hop)) + 1
    total = (n_frames - 1) * hop + width
    xp = np.zeros(max(total, n))
    xp[:n] = x
    idx = np.arange(width)[None, :] + hop * np.arange(n_frames)[:, None]
    return xp[idx]


def block_dct(segment, block: int = 160) -> np.ndarray:
    """Orthonormal DCT-II applied independently to consecutive blocks."""
    seg = np.asarray(segment, dtype=np.float64)
    if seg.shape[-1] % block:
        raise ValueError(f"length {seg.shape[-1]} not divisible by block {block}")
    shaped = seg.reshape(seg.shape[:-1] + (-1, block))
    return dct(shaped, type=2, norm="ortho", axis=-1).reshape(seg.shape)


def inverse_block_dct(coeffs, block: int = 160) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-1] % block:
        raise ValueError(f"length {c.shape[-1]} not divisible by block {block}")
    shaped = c.reshape(c.shape[:-1] + (-1, block))
    return idct(shaped, type=2, norm="ortho", axis=-1).reshape(c.shape)


# -- noise -------------------------------------------------------------------

class NoiseSource:
    """White Gaussian noise, or a sample file cut at a seeded random offset."""

    def __init__(self, samples=None, noise_id: str | None = None):
        if samples is not None:
            samples = np.asarray(samples, dtype=np.float64)
            if samples.size == 0 or not np.any(samples):
                raise DegenerateSignalError("noise samples have zero power")
        self.samples = samples
        self.noise_id = noise_id or ("white" if samples is None else "file")

    @property
    def is_white(self) -> bool:
        return self.samples is None

    @classmethod
    def from_file(cls, path: str | Path) -> "NoiseSource":
        from .corpus import read_waveform
        x, _ = read_waveform(path)
        return cls(x, noise_id=Path(path).stem)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.samples is None:
            return rng.standard_normal(n)
        if len(self.samples) < n:
            raise ValueError(f"noise file has {len(self.samples)} samples, need {n}")
        off = int(rng.integers(0, len(self.samples) - n + 1))
        return self.samples[off:off + n].copy()

    def spec(self, d: int = 160, sigma2: float = 0.0) -> NoiseSpec:
        if self.is_white:
            return white_noise_spec(d, sigma2)
        return estimate_noise_cov(self.samples, d, sigma2=sigma2, noise_id=self.noise_id)


NoiseLike = Union[NoiseSource, np.ndarray, None]


def _as_source(noise: NoiseLike) -> NoiseSource:
    if isinstance(noise, NoiseSource):
        return noise
    return NoiseSource(noise)


def scaled_noise(x, noise: NoiseLike, snr_db, seed) -> np.ndarray:
    """Noise draw scaled to per-sample power ``10**(-snr_db/10)`` relative to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if snr_db == QUIET:
        return np.zeros_like(x)
    rng = np.random.default_rng(seed)
    n = _as_source(noise).draw(len(x), rng)
    p = np.mean(n * n)
    if p == 0.0:
        raise DegenerateSignalError("noise segment has zero power")
    target = snr_to_sigma2(snr_db) * np.mean(x * x)
    return n * np.sqrt(target / p)


def mix_noise(x, noise: NoiseLike, snr_db, seed) -> np.ndarray:
    """Add noise at sentence-level SNR and renormalise to unit energy per sample."""
    x = np.asarray(x, dtype=np.float64)
    if snr_db == QUIET:
        return x.copy()
    return normalize_energy(x + scaled_noise(x, noise, snr_db, seed))


def estimate_noise_cov(noise, block: int = 160, sigma2: float = 0.0,
                       noise_id: str = "estimated", hop: int | None = None) -> NoiseSpec:
    """Diagonal of the block-DCT-domain noise covariance (second moment
    about zero, as the noise enters additively), trace-normalised.

    Blocks overlap (default hop ``block // 4``); for stationary noise this
    has the same expectation as disjoint blocks with lower variance.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) < 100 * block:
        raise EstimationError(f"need at least {100 * block} noise samples, got {len(noise)}")
    hop = block // 4 if hop is None else hop
    v = np.zeros(block)
    n_total = 0
    # chunked to bound memory on long noise files
    starts = np.arange(0, len(noise) - block + 1, hop)
    for chunk in np.array_split(starts, max(1, len(starts) // 20000)):
        c = dct(noise[chunk[:, None] + np.arange(block)[None, :]], type=2, norm="ortho", axis=1)
        v += np.sum(c * c, axis=0)
        n_total += len(chunk)
    v /= n_total
    if not np.all(v > 0):
        raise DegenerateSignalError("noise has zero power in some coefficient")
    return NoiseSpec(sigma2, v * (block / v.sum()), WAVE_DCT, noise_id)


# -- MFCC ----------------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int = 26, nfft: int = 512, rate: int = RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    fmax = rate / 2 if fmax is None else fmax
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * rate / nfft
    fb = np.zeros((n_filters, len(freqs)))
    for j in range(n_filters):
        lo, mid, hi = edges[j:j + 3]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[j] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FB_CACHE: dict = {}


def compute_mfcc(frame, rate: int = RATE, n_ceps: int = 13, n_filters: int = 26,
                 nfft: int = 512, floor: float = 1e-10) -> np.ndarray:
    """MFCCs c0..c12 of one frame, or of each row of a frame matrix.

    Hamming window, magnitude spectrum, 26 mel filters over 0-8 kHz,
    floored log, orthonormal DCT.
    """
    fr = np.asarray(frame, dtype=np.float64)
    single = fr.ndim == 1
    fr = np.atleast_2d(fr)
    key = (n_filters, nfft, rate)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(n_filters, nfft, rate)
    fb = _FB_CACHE[key]
    win = np.hamming(fr.shape[1])
    mag = np.abs(np.fft.rfft(fr * win, n=max(nfft, fr.shape[1])))[:, :fb.shape[1]]
    logfb = np.log(np.maximum(mag @ fb.T, floor))
    c = dct(logfb, type=2, norm="ortho", axis=1)[:, :n_ceps]
    return c[0] if single else c


def append_deltas(seq, window: int = 2) -> np.ndarray:
    """Append regression deltas and delta-deltas (edges replicated)."""
    c = np.asarray(seq, dtype=np.float64)
    d = _deltas(c, window)
    return np.hstack([c, d, _deltas(d, window)])


def _deltas(c: np.ndarray, window: int) -> np.ndarray:
    T = len(c)
    padded = np.concatenate([np.repeat(c[:1], window, 0), c, np.repeat(c[-1:], window, 0)])
    num = np.zeros_like(c)
    for n in range(1, window + 1):
        num += n * (padded[window + n:window + n + T] - padded[window - n:window - n + T])
    return num / (2 * sum(n * n for n in range(1, window + 1)))


# -- sentence-level feature streams -----------------------------------------

def waveform_features(x, rate: int = RATE, frame_ms: float = 10.0) -> FeatureMatrix:
    """Non-overlapping frames, each transformed by the orthonormal DCT."""
    width = int(round(rate * frame_ms / 1000))
    frames = frame_signal(x, width, width)
    return FeatureMatrix(block_dct(frames, width), WAVE_DCT, width / rate, width / rate, rate)


def mfcc_features(x, deltas: bool = True, rate: int = RATE) -> FeatureMatrix:
    """25 ms frames every 10 ms; 13 MFCCs, or 39 with deltas appended."""
    width, hop = int(0.025 * rate), int(0.010 * rate)
    c = compute_mfcc(frame_signal(x, width, hop), rate)
    if deltas:
        c = append_deltas(c)
    return FeatureMatrix(c, MFCC_DELTAS if deltas else MFCC, hop / rate, width / rate, rate)


def sentence_features(x, basis: str, rate: int = RATE) -> FeatureMatrix:
    if basis == WAVE_DCT:
        return waveform_features(x, rate)
    if basis == MFCC:
        return mfcc_features(x, deltas=False, rate=rate)
    if basis == MFCC_DELTAS:
        return mfcc_features(x, deltas=True, rate=rate)
    raise ValueError(f"cannot compute features for basis {basis!r}")


def read_external_features(path: str | Path, rate: int = RATE) -> FeatureMatrix:
    """Read a ``dim hop_seconds width_seconds`` header then one frame per line."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty feature file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError(f"{path}: header must be 'dim hop_seconds width_seconds'")
    dim, hop, width = int(head[0]), float(head[1]), float(head[2])
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    for i, r in enumerate(rows, 2):
        if len(r) != dim:
            raise ValueError(f"{path}:{i}: expected {dim} values, got {len(r)}")
    frames = np.array(rows, dtype=np.float64).reshape(-1, dim)
    return FeatureMatrix(frames, EXTERNAL, hop, width, rate)


def write_external_features(path: str | Path, fm: FeatureMatrix) -> None:
    with open(path, "w") as fh:
        fh.write(f"{fm.dim} {fm.hop!r} {fm.width!r}\n")
        for row in fm.frames:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# -- standardisation -----------------------------------------------------------

@dataclass
class StandardizationStats:
    mean: np.ndarray
    var: np.ndarray
    source: str = TRAINSET
    floored: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.source not in (TRAINSET, SENTENCE):
            raise ValueError(f"unknown stats source {self.source!r}")
        if self.floored is None:
            self.floored = np.zeros(len(self.var), dtype=bool)


def compute_stats(features: Sequence[FeatureMatrix] | FeatureMatrix, source: str = TRAINSET,
                  floor: float = 1e-10) -> StandardizationStats:
    """Per-feature mean and variance over all frames of one or more matrices."""
    if isinstance(features, FeatureMatrix):
        features = [features]
    allf = np.vstack([f.frames for f in features])
    mean = allf.mean(axis=0)
    var = allf.var(axis=0)
    floored = var < floor
    return StandardizationStats(mean, np.maximum(var, floor), source, floored)


def cmvn(features: FeatureMatrix, stats: StandardizationStats | None = None,
         source: str | None = None) -> FeatureMatrix:
    """Per-feature standardisation. With ``SENTENCE`` source (or no stats)
    the statistics come from ``features`` itself."""
    if stats is None or (source or stats.source) == SENTENCE:
        stats = compute_stats(features, SENTENCE)
    if len(stats.mean) != features.dim:
        raise ValueError(f"stats dimension {len(stats.mean)} != feature dimension {features.dim}")
    z = (features.frames - stats.mean) / np.sqrt(stats.var)
    return FeatureMatrix(z, features.basis, features.hop, features.width, features.rate)
