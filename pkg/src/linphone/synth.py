"""Synthetic data: random zero-mean GMM classes and a small labelled corpus
of harmonic-plus-noise "phones" for exercising the full pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import LabeledSentence, PhonemeInterval, write_phn_labels, write_wav
from .density import DiagGmm
from .frontend import RATE, normalize_energy


def random_zero_mean_gmm(d: int, c: int, rng: np.random.Generator,
                         spread: float = 1.0, basis: str = "WAVE_DCT") -> DiagGmm:
    """Zero-mean diagonal GMM whose average variance per coordinate is 1."""
    w = rng.dirichlet(np.full(c, 4.0))
    var = np.exp(spread * rng.standard_normal((c, d)))
    var *= d / np.sum(w @ var)
    return DiagGmm(w, np.zeros((c, d)), var, basis, True)


def sample_gmm(model: DiagGmm, n: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(model.n_components, size=n, p=model.weights)
    z = rng.standard_normal((n, model.d))
    return model.means[comp] + z * np.sqrt(model.variances[comp])


def add_white_noise(X: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """(x + n) / sqrt(1 + sigma2) with n ~ N(0, sigma2 I)."""
    return (X + np.sqrt(sigma2) * rng.standard_normal(X.shape)) / np.sqrt(1.0 + sigma2)


# -- harmonic-plus-noise phones ----------------------------------------------------

@dataclass(frozen=True)
class PhoneGenerator:
    label: str
    formants: tuple[float, ...]  # Hz; empty for pure noise
    bandwidths: tuple[float, ...]
    voiced: bool
    noise_band: tuple[float, float] | None  # Hz band of the noise part
    noise_level: float
    gain: float
    duration_ms: tuple[float, float]


DEFAULT_PHONES = (
    PhoneGenerator("aa", (750, 1200, 2600), (90, 110, 160), True, None, 0.05, 1.0, (70, 160)),
    PhoneGenerator("iy", (300, 2300, 3000), (60, 100, 150), True, None, 0.05, 0.9, (60, 140)),
    PhoneGenerator("uw", (320, 900, 2300), (60, 90, 150), True, None, 0.05, 0.8, (60, 140)),
    PhoneGenerator("eh", (550, 1800, 2500), (80, 100, 150), True, None, 0.05, 0.9, (60, 140)),
    PhoneGenerator("ae", (660, 1700, 2400), (80, 100, 150), True, None, 0.05, 1.0, (70, 160)),
    PhoneGenerator("ih", (400, 1950, 2550), (70, 100, 150), True, None, 0.05, 0.8, (50, 120)),
    PhoneGenerator("uh", (450, 1050, 2250), (70, 100, 150), True, None, 0.05, 0.8, (50, 120)),
    PhoneGenerator("m", (250, 1100, 2200), (60, 200, 300), True, None, 0.02, 0.45, (40, 100)),
    PhoneGenerator("n", (250, 1600, 2600), (60, 200, 300), True, None, 0.02, 0.45, (40, 100)),
    PhoneGenerator("s", (), (), False, (4000, 7800), 1.0, 0.35, (70, 160)),
    PhoneGenerator("sh", (), (), False, (2000, 5000), 1.0, 0.4, (70, 160)),
    PhoneGenerator("f", (), (), False, (1000, 7800), 1.0, 0.15, (50, 130)),
    PhoneGenerator("th", (), (), False, (1400, 7800), 1.0, 0.12, (50, 130)),
    PhoneGenerator("z", (), (), True, (4000, 7800), 1.0, 0.3, (50, 120)),
)
FORMANT_JITTER = 0.15
SILENCE = PhoneGenerator("h#", (), (), False, (0, 8000), 1.0, 0.005, (100, 200))


def _envelope(freqs: np.ndarray, gen: PhoneGenerator) -> np.ndarray:
    env = np.zeros_like(freqs, dtype=np.float64)
    for f0, bw in zip(gen.formants, gen.bandwidths):
        env += 1.0 / (1.0 + ((freqs - f0) / (bw / 2)) ** 2)
    return env


def _band_noise(n: int, band: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / RATE)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    p = np.mean(x * x)
    return x / np.sqrt(p) if p > 0 else x


def render_phone(gen: PhoneGenerator, n: int, rng: np.random.Generator) -> np.ndarray:
    """One realisation: random pitch, phases, formant jitter and gain."""
    t = np.arange(n) / RATE
    x = np.zeros(n)
    if gen.voiced and gen.formants:
        f0 = rng.uniform(90.0, 220.0)
        glide = 1.0 + rng.uniform(-0.1, 0.1) * t / max(t[-1], 1e-9)
        scale = rng.uniform(1 - FORMANT_JITTER, 1 + FORMANT_JITTER, len(gen.formants))
        jitter = PhoneGenerator(gen.label, tuple(np.multiply(gen.formants, scale)),
                                gen.bandwidths, True, None, 0.0, 1.0, gen.duration_ms)
        k = np.arange(1, int(7800 // f0) + 1)
        amps = _envelope(k * f0, jitter)
        phases = rng.uniform(0, 2 * np.pi, len(k))
        phase_t = 2 * np.pi * f0 * np.cumsum(glide) / RATE
        x = (amps[:, None] * np.cos(k[:, None] * phase_t[None, :] + phases[:, None])).sum(0)
        x /= np.sqrt(np.mean(x * x)) + 1e-12
    elif gen.voiced:
        f0 = rng.uniform(90.0, 220.0)
        x = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi)) * np.sqrt(2)
    if gen.noise_band is not None:
        x = x + gen.noise_level * _band_noise(n, gen.noise_band, rng)
    elif gen.noise_level:
        x = x + gen.noise_level * rng.standard_normal(n)
    # smooth onset and offset
    ramp = min(n // 4, 80)
    if ramp:
        w = np.ones(n)
        w[:ramp] = np.linspace(0, 1, ramp)
        w[-ramp:] = np.linspace(1, 0, ramp)
        x *= w
    return gen.gain * np.exp(0.25 * rng.standard_normal()) * x


def synthetic_sentences(n_sentences: int, seed: int = 0, phones=DEFAULT_PHONES,
                        phones_per_sentence: tuple[int, int] = (8, 14), prefix: str = "syn"
                        ) -> tuple[list[LabeledSentence], dict[str, np.ndarray]]:
    """Labelled sentences of random phone sequences bracketed by silence.

    Waveforms are scaled to 16-bit-like amplitudes (not normalised).
    """
    rng = np.random.default_rng(seed)
    sentences, waves = [], {}
    for s in range(n_sentences):
        picks = rng.integers(len(phones), size=rng.integers(*phones_per_sentence))
        seq = [SILENCE] + [phones[i] for i in picks] + [SILENCE]
        chunks, ivs, pos = [], [], 0
        for gen in seq:
            n = int(RATE * rng.uniform(*gen.duration_ms) / 1000)
            chunks.append(render_phone(gen, n, rng))
            ivs.append(PhonemeInterval(gen.label, pos, pos + n))
            pos += n
        sid = f"{prefix}{s:04d}"
        x = np.concatenate(chunks)
        waves[sid] = 3000.0 * normalize_energy(x)
        sentences.append(LabeledSentence(sid, tuple(ivs), len(x)))
    return sentences, waves


def write_corpus(root: str | Path, sentences, waves) -> list[LabeledSentence]:
    """Write ``<id>.wav`` and ``<id>.phn`` pairs under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    out = []
    for s in sentences:
        wav = root / f"{s.sentence_id}.wav"
        write_wav(wav, waves[s.sentence_id])
        write_phn_labels(root / f"{s.sentence_id}.phn", s.intervals)
        out.append(LabeledSentence(s.sentence_id, s.intervals, s.n_samples, str(wav)))
    return out
