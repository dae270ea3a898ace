"""Fit the SNR-dependent mixing weight between the two streams.

Scores from both streams on a held-out split are combined over a grid of
weights at each condition; a sigmoid in the noise level is then fitted so
that it lands in every condition's band of near-best weights.
"""
import numpy as np

from linphone.classifier import alpha_schedule, combine_logliks, fit_alpha, predict, schedule_argument
from linphone.eval import priors_vector
from linphone.experiments import run_streams, synthetic_corpus, truth_indices
from linphone.frontend import DEFAULT_SNR_GRID, QUIET
from linphone.pipeline import Corpus

corpus = synthetic_corpus(150, 60, seed=0)
held_out = synthetic_corpus(1, 60, seed=50)
dev = Corpus(corpus.train, held_out.test, corpus.train_waves, held_out.test_waves)
runs = run_streams(corpus, DEFAULT_SNR_GRID, seed=0, eval_corpora=[dev])
wave, mfcc = runs["wave"], runs["mfcc"]

classes = wave.tables[(0, QUIET)].classes
priors = priors_vector(corpus.train, classes)
fit = fit_alpha({c: mfcc.tables[(0, c)].rule("T") for c in DEFAULT_SNR_GRID},
                {c: wave.tables[(0, c)].rule("T") for c in DEFAULT_SNR_GRID},
                truth_indices(wave.tables[(0, QUIET)], dev), priors, units="db")
print(f"sigma0 = {fit.schedule.sigma0:.2f} dB, beta = {fit.schedule.beta:.3f}")

# apply the schedule to the main test split
truth = truth_indices(wave.tables[QUIET], corpus)
print(f"{'cond':>6} {'alpha':>6} {'band':>13} {'wave':>6} {'mfcc':>6} {'comb':>6}")
for cond, band, ok in zip(fit.conditions, fit.bands, fit.band_ok()):
    a = alpha_schedule(fit.schedule, schedule_argument(cond, "db"))
    comb = combine_logliks(mfcc.tables[cond].rule("T"), wave.tables[cond].rule("T"), a)
    err = np.mean(predict(comb, priors) != truth)
    label = cond if cond == QUIET else f"{cond}dB"
    print(f"{label:>6} {a:6.3f} [{band[0]:.2f}, {band[1]:.2f}]{'' if ok else '!'} "
          f"{100 * wave.error(cond):5.1f}% {100 * mfcc.error(cond):5.1f}% {100 * err:5.1f}%")
