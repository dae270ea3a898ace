"""Adapting a quiet-trained model to white noise versus retraining on noisy data.

Six zero-mean Gaussian mixtures stand in for phone classes. Each class model
is trained once on clean vectors; at every SNR the quiet models are adapted
in closed form and compared with models retrained on noisy vectors.
"""
import time

import numpy as np

from linphone.adaptation import adapt_model
from linphone.density import em_train, log_likelihood
from linphone.frontend import snr_to_sigma2, white_noise_spec
from linphone.synth import add_white_noise, random_zero_mean_gmm, sample_gmm

D, C, K, N = 64, 4, 6, 2000

rng = np.random.default_rng(0)
gens = [random_zero_mean_gmm(D, C, rng) for _ in range(K)]
train = [sample_gmm(g, N, rng) for g in gens]
test = [sample_gmm(g, N, rng) for g in gens]
truth = np.repeat(np.arange(K), N)


def error(models, X):
    L = np.column_stack([log_likelihood(m, X) for m in models])
    return np.mean(np.argmax(L, axis=1) != truth)


quiet = [em_train(X, C, zero_mean=True, seed=k) for k, X in enumerate(train)]
print(f"quiet error: {100 * error(quiet, np.vstack(test)):.2f}%")
print(f"{'SNR':>6} {'adapted':>9} {'matched':>9} {'unadapted':>10}")

for snr in (18, 12, 6, 0, -6):
    s2 = snr_to_sigma2(snr)
    noise_rng = np.random.default_rng(1000 + snr)
    noisy = np.vstack([add_white_noise(X, s2, noise_rng) for X in test])
    t0 = time.perf_counter()
    adapted = [adapt_model(m, white_noise_spec(D, s2)) for m in quiet]
    t_adapt = time.perf_counter() - t0
    t0 = time.perf_counter()
    matched = [em_train(add_white_noise(X, s2, noise_rng), C, zero_mean=True, seed=k)
               for k, X in enumerate(train)]
    t_match = time.perf_counter() - t0
    print(f"{snr:>4}dB {100 * error(adapted, noisy):8.2f}% {100 * error(matched, noisy):8.2f}% "
          f"{100 * error(quiet, noisy):9.2f}%   (adapt {1e3 * t_adapt:.1f} ms, retrain {t_match:.2f} s)")
