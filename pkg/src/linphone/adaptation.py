"""Exact model-side adaptation of linear-domain densities to additive noise.

For a signal model x ~ GMM(w, mu, D) and independent noise n ~ N(0, s*N),
the renormalised noisy vector (x + n) / sqrt(1 + s) is again a GMM with
means mu / sqrt(1 + s) and variances (D + s*N) / (1 + s).
"""

from __future__ import annotations

import threading

import numpy as np

from .density import ConfigurationError, DiagGmm, ModelBank
from .frontend import NoiseSpec


def adapt_model(model: DiagGmm, noise: NoiseSpec) -> DiagGmm:
    if model.basis != noise.basis:
        raise ConfigurationError(f"model basis {model.basis} != noise basis {noise.basis}")
    if noise.sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    spec = noise.for_dim(model.d) if len(noise.N) != model.d else noise
    if noise.sigma2 == 0.0:
        return model
    s = noise.sigma2
    var = (model.variances + s * spec.N[None, :]) / (1.0 + s)
    means = model.means if model.zero_mean else model.means / np.sqrt(1.0 + s)
    return DiagGmm(model.weights, means, var, model.basis, model.zero_mean)


class AdaptationCache:
    """Adapted models keyed by (model identity, sigma2, noise id).

    Entries are computed outside the lock and published atomically; a
    racing duplicate computation is harmless since adaptation is pure.
    """

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.misses = 0

    def get(self, model: DiagGmm, noise: NoiseSpec) -> DiagGmm:
        key = (id(model), float(noise.sigma2), noise.noise_id, len(noise.N))
        hit = self._store.get(key)
        if hit is not None and hit[0] is model:
            return hit[1]
        adapted = adapt_model(model, noise)
        with self._lock:
            self.misses += 1
            self._store[key] = (model, adapted)
        return adapted

    def clear(self):
        with self._lock:
            self._store.clear()


_default_cache = AdaptationCache()


def adapt_bank(bank: ModelBank, noise: NoiseSpec, cache: AdaptationCache | None = None) -> ModelBank:
    """Adapt every model of a bank; the noise spec is embedded in the result."""
    if bank.noise is not None and bank.noise.sigma2 > 0:
        raise ConfigurationError("bank is already adapted; adapt the quiet bank instead")
    cache = _default_cache if cache is None else cache
    models = {k: cache.get(m, noise) for k, m in bank.models.items()}
    return ModelBank(bank.basis, bank.components, models, dict(bank.weights), noise, dict(bank.meta))
