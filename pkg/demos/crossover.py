"""Waveform versus MFCC classification error across SNR on the synthetic corpus.

The adapted waveform stream starts behind the cepstral stream in quiet and
overtakes it as the noise level rises. Pass seeds on the command line to
repeat the run on other corpus draws, e.g. ``python demos/crossover.py 0 1 2``.
"""
import sys

from linphone.experiments import run_streams, synthetic_corpus
from linphone.frontend import DEFAULT_SNR_GRID

seeds = [int(s) for s in sys.argv[1:]] or [0]

for seed in seeds:
    runs = run_streams(synthetic_corpus(150, 60, seed=seed), DEFAULT_SNR_GRID, seed=seed)
    wave, mfcc = runs["wave"], runs["mfcc"]
    print(f"seed {seed}: trained in {wave.train_seconds:.1f}s (wave), {mfcc.train_seconds:.1f}s (mfcc)")
    print(f"{'cond':>6} {'wave':>7} {'mfcc':>7}")
    for cond in DEFAULT_SNR_GRID:
        label = cond if cond == "Q" else f"{cond}dB"
        mark = "  <" if wave.error(cond) < mfcc.error(cond) else ""
        print(f"{label:>6} {100 * wave.error(cond):6.1f}% {100 * mfcc.error(cond):6.1f}%{mark}")
    print()
