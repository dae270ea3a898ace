"""Gaussian mixture densities: EM training, evaluation, PPCA covariances and
model averaging over the number of components."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .frontend import NoiseSpec

logger = logging.getLogger(__name__)

LOG2PI = np.log(2.0 * np.pi)
COMPONENT_SET = (1, 2, 4, 8, 16, 32, 64, 128)
SCHEMA_VERSION = 1
FULL_COV_MAX_DIM = 64

# instrumentation: number of EM fits run in this process
TRAINING_CALLS = {"em_train": 0}


class TrainingError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class DiagGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    basis: str = "WAVE_DCT"
    zero_mean: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        if mu.shape != var.shape or var.shape[0] != len(w):
            raise ValueError(f"inconsistent shapes: weights {w.shape}, means {mu.shape}, "
                             f"variances {var.shape}")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        if self.zero_mean and np.any(mu != 0):
            raise ValueError("zero-mean model has non-zero means")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {"basis": self.basis, "zero_mean": self.zero_mean,
                "weights": self.weights.tolist(),
                "means": None if self.zero_mean else self.means.tolist(),
                "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DiagGmm":
        var = np.asarray(doc["variances"], dtype=np.float64)
        mu = np.zeros_like(var) if doc["means"] is None else doc["means"]
        return cls(doc["weights"], mu, var, doc["basis"], doc["zero_mean"])


def _component_logpdf(model: DiagGmm, X: np.ndarray) -> np.ndarray:
    """log w_i + log N(x | mu_i, D_i) for every row of X, shape (n, c)."""
    inv = 1.0 / model.variances
    const = -0.5 * (model.d * LOG2PI + np.log(model.variances).sum(axis=1))
    if model.zero_mean:
        maha = (X * X) @ inv.T
    else:
        maha = np.empty((X.shape[0], model.n_components))
        for i in range(model.n_components):
            diff = X - model.means[i]
            maha[:, i] = (diff * diff) @ inv[i]
    return np.log(model.weights) + const - 0.5 * maha


def log_likelihood(model: DiagGmm, x) -> np.ndarray | float:
    """Log-density of one d-vector (returns float) or each row of an (n, d) array."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.d:
        raise ValueError(f"dimension mismatch: model d={model.d}, input d={X.shape[1]}")
    lp = _component_logpdf(model, X)
    ll = lp[:, 0] if model.n_components == 1 else logsumexp(lp, axis=1)
    return float(ll[0]) if single else ll


@dataclass
class EmTrace:
    loglik: list[float] = field(default_factory=list)  # mean per-datum
    reseed_at: list[int] = field(default_factory=list)
    converged: bool = False


def _variance_floor(X: np.ndarray, zero_mean: bool, ratio: float) -> tuple[np.ndarray, np.ndarray]:
    gvar = np.mean(X * X, axis=0) if zero_mean else X.var(axis=0)
    floor = ratio * gvar
    fallback = ratio * gvar.mean() if gvar.mean() > 0 else 1e-10
    floor = np.where(floor > 0, floor, fallback)
    return gvar, floor


def _kmeanspp(X: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, c):
        total = d2.sum()
        idx = rng.integers(len(X)) if total <= 0 else rng.choice(len(X), p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _initial_model(X, c, zero_mean, gvar, floor, rng, basis, subsample):
    n, d = X.shape
    if zero_mean:
        factors = 10.0 ** np.linspace(-1.0, 1.0, c) if c > 1 else np.ones(1)
        jitter = np.exp(0.1 * rng.standard_normal((c, d)))
        var = np.maximum(gvar[None, :] * factors[:, None] * jitter, floor)
        return DiagGmm(np.full(c, 1.0 / c), np.zeros((c, d)), var, basis, True)
    sub = X if n <= subsample else X[rng.choice(n, subsample, replace=False)]
    centers = _kmeanspp(sub, c, rng)
    dist = (centers * centers).sum(1)[None, :] - 2.0 * sub @ centers.T
    lab = dist.argmin(1)
    w = np.empty(c)
    var = np.empty((c, d))
    for i in range(c):
        members = sub[lab == i]
        w[i] = max(len(members), 1)
        var[i] = members.var(axis=0) if len(members) > 1 else gvar
    return DiagGmm(w / w.sum(), centers, np.maximum(var, floor), basis, False)


def em_train(data, c: int, zero_mean: bool = False, seed: int = 0, *,
             basis: str = "WAVE_DCT", max_iter: int = 200, tol: float = 1e-6,
             floor_ratio: float = 1e-4, max_reseeds: int | None = None,
             init_subsample: int = 2000, return_trace: bool = False):
    """Maximum-likelihood diagonal GMM by EM.

    Stops when the relative improvement of the mean log-likelihood drops
    below ``tol`` or after ``max_iter`` iterations. Components whose
    responsibility mass falls below one datum are re-seeded from a random
    datum; more than ``max_reseeds`` re-seeds raise ``TrainingError``.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if d < 1 or n < 5 * c:
        raise ValueError(f"need at least {5 * c} points for {c} components, got {n}")
    TRAINING_CALLS["em_train"] += 1
    gvar, floor = _variance_floor(X, zero_mean, floor_ratio)
    trace = EmTrace()

    if c == 1:
        if zero_mean:
            model = DiagGmm(np.ones(1), np.zeros((1, d)), np.maximum(np.mean(X * X, axis=0), floor)[None],
                            basis, True)
        else:
            model = DiagGmm(np.ones(1), X.mean(axis=0)[None], np.maximum(X.var(axis=0), floor)[None],
                            basis, False)
        trace.loglik.append(float(np.mean(log_likelihood(model, X))))
        trace.converged = True
        return (model, trace) if return_trace else model

    rng = np.random.default_rng(seed)
    max_reseeds = 10 * c if max_reseeds is None else max_reseeds
    model = _initial_model(X, c, zero_mean, gvar, floor, rng, basis, init_subsample)
    X2 = X * X if zero_mean else None
    prev = -np.inf
    for it in range(max_iter):
        lp = _component_logpdf(model, X)
        lse = logsumexp(lp, axis=1)
        ll = float(lse.mean())
        trace.loglik.append(ll)
        if np.isfinite(prev) and ll - prev <= tol * abs(prev) and it - 1 not in trace.reseed_at:
            trace.converged = True
            break
        prev = ll
        resp = np.exp(lp - lse[:, None])
        nk = resp.sum(axis=0)
        w = nk / n
        mu = np.zeros((c, d))
        var = np.empty((c, d))
        safe = np.maximum(nk, 1e-300)
        if zero_mean:
            var[:] = (resp.T @ X2) / safe[:, None]
        else:
            mu = (resp.T @ X) / safe[:, None]
            for i in range(c):
                diff = X - mu[i]
                var[i] = (resp[:, i] @ (diff * diff)) / safe[i]
        var = np.maximum(var, floor)
        collapsed = np.flatnonzero(nk < 1.0)
        if collapsed.size:
            if len(trace.reseed_at) + collapsed.size > max_reseeds:
                raise TrainingError(f"persistent component collapse after {len(trace.reseed_at)} re-seeds")
            for i in collapsed:
                logger.info("EM iteration %d: component %d collapsed (mass %.3g), re-seeding", it, i, nk[i])
                if not zero_mean:
                    mu[i] = X[rng.integers(n)]
                var[i] = gvar if zero_mean else np.maximum(gvar, floor)
                var[i] = np.maximum(var[i] * np.exp(0.1 * rng.standard_normal(d)), floor)
                w[i] = 1.0 / c
                trace.reseed_at.append(it)
            w = w / w.sum()
        model = DiagGmm(w / w.sum(), mu, var, basis, zero_mean)
    return (model, trace) if return_trace else model


# -- model averaging -----------------------------------------------------------

def model_average_loglik(models: Sequence[DiagGmm], weights, x) -> np.ndarray | float:
    """log sum_c u_c exp(L_c(x)), computed stably."""
    if len(models) == 0:
        raise ConfigurationError("model average over an empty component set")
    u = np.full(len(models), 1.0 / len(models)) if weights is None else np.asarray(weights, float)
    if len(u) != len(models):
        raise ConfigurationError("one weight per model required")
    if abs(u.sum() - 1.0) > 1e-10:
        raise ConfigurationError("model weights must sum to 1")
    if len(models) == 1:
        return log_likelihood(models[0], x)
    L = np.array([log_likelihood(m, x) for m in models])
    return average_logliks(L, u)


def average_logliks(L, u=None):
    """Model average from precomputed log-likelihoods stacked on axis 0."""
    L = np.asarray(L, dtype=np.float64)
    if L.shape[0] == 1:
        return L[0]
    u = np.full(L.shape[0], 1.0 / L.shape[0]) if u is None else np.asarray(u, float)
    shape = (-1,) + (1,) * (L.ndim - 1)
    return logsumexp(L + np.log(u).reshape(shape), axis=0)


def posterior_weights(models: Sequence[DiagGmm], dev) -> np.ndarray:
    """Model weights proportional to the summed likelihood of a development set."""
    dev = np.atleast_2d(np.asarray(dev, dtype=np.float64))
    if dev.shape[0] == 0:
        raise ValueError("empty development set")
    if not models:
        raise ConfigurationError("no models")
    a = np.array([logsumexp(log_likelihood(m, dev)) for m in models])
    if not np.any(np.isfinite(a)):
        raise FloatingPointError("all model evidences underflow")
    return np.exp(a - logsumexp(a))


# -- PPCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PpcaCovariance:
    q: int
    W: np.ndarray
    r2: float
    eigenvalues: np.ndarray

    def matrix(self) -> np.ndarray:
        return self.r2 * np.eye(self.W.shape[0]) + self.W @ self.W.T


def ppca_covariance(sigma_hat, q: int) -> PpcaCovariance:
    """Rank-q factor plus isotropic residual from an empirical covariance.

    The residual is the mean of the discarded eigenvalues. Retained directions
    carry lambda_i - r2 in the factor so the total variance is unchanged.
    """
    S = np.asarray(sigma_hat, dtype=np.float64)
    d = S.shape[0]
    if S.shape != (d, d):
        raise ValueError("covariance must be square")
    if not np.allclose(S, S.T, rtol=0, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise ValueError("covariance must be symmetric")
    if not 1 <= q < d:
        raise ValueError(f"rank q must satisfy 1 <= q < {d}")
    lam, V = np.linalg.eigh(S)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    r2 = float(lam[q:].mean())
    W = V[:, :q] * np.sqrt(np.maximum(lam[:q] - r2, 0.0))
    return PpcaCovariance(q, W, r2, lam)


# -- full covariance (small d only) --------------------------------------------

@dataclass(frozen=True)
class FullGmm:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    zero_mean: bool = False

    @property
    def d(self) -> int:
        return self.means.shape[1]


def full_log_likelihood(model: FullGmm, x) -> np.ndarray | float:
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lp = np.empty((X.shape[0], len(model.weights)))
    for i, (w, mu, S) in enumerate(zip(model.weights, model.means, model.covs)):
        L = np.linalg.cholesky(S)
        z = np.linalg.solve(L, (X - mu).T)
        lp[:, i] = (np.log(w) - 0.5 * model.d * LOG2PI - np.log(np.diag(L)).sum()
                    - 0.5 * np.sum(z * z, axis=0))
    ll = logsumexp(lp, axis=1)
    return float(ll[0]) if np.ndim(x) == 1 else ll


def em_train_full(data, c: int, zero_mean: bool = False, seed: int = 0, *,
                  ppca_rank: int | None = None, max_iter: int = 200, tol: float = 1e-6,
                  ridge: float = 1e-6) -> FullGmm:
    """Full-covariance EM for d <= 64. With ``ppca_rank`` every M-step
    covariance is replaced by its PPCA reconstruction of that rank."""
    X = np.asarray(data, dtype=np.float64)
    n, d = X.shape
    if d > FULL_COV_MAX_DIM:
        raise ConfigurationError(f"full covariance supported only for d <= {FULL_COV_MAX_DIM}")
    if n < 5 * c:
        raise ValueError(f"need at least {5 * c} points for {c} components")
    TRAINING_CALLS["em_train"] += 1
    diag = em_train(X, c, zero_mean, seed, basis="FULL", max_iter=20)
    TRAINING_CALLS["em_train"] -= 1
    eps = ridge * np.trace(np.cov(X.T)) / d + 1e-12

    def regularise(S):
        S = 0.5 * (S + S.T)
        if ppca_rank is not None:
            S = ppca_covariance(S, ppca_rank).matrix()
        return S + eps * np.eye(d)

    model = FullGmm(diag.weights, diag.means, np.array([np.diag(v) for v in diag.variances]), zero_mean)
    prev = -np.inf
    for _ in range(max_iter):
        lp = np.log(model.weights) + np.column_stack(
            [full_log_likelihood(FullGmm(np.ones(1), m[None], S[None]), X)
             for m, S in zip(model.means, model.covs)])
        lse = logsumexp(lp, axis=1)
        ll = lse.mean()
        if np.isfinite(prev) and ll - prev <= tol * abs(prev):
            break
        prev = ll
        resp = np.exp(lp - lse[:, None])
        nk = np.maximum(resp.sum(0), 1e-300)
        mu = np.zeros((c, d)) if zero_mean else (resp.T @ X) / nk[:, None]
        covs = np.array([regularise(((X - mu[i]).T * resp[:, i]) @ (X - mu[i]) / nk[i])
                         for i in range(c)])
        model = FullGmm(nk / nk.sum(), mu, covs, zero_mean)
    return model


def adapt_full(model: FullGmm, noise: NoiseSpec) -> FullGmm:
    s = noise.sigma2
    covs = (model.covs + s * np.diag(noise.N)[None]) / (1.0 + s)
    return FullGmm(model.weights, model.means / np.sqrt(1.0 + s), covs, model.zero_mean)


# -- model bank ----------------------------------------------------------------

BankKey = tuple  # (class, sector, f, c)


@dataclass
class ModelBank:
    """Per-class, per-sector, per-frame-count, per-component-count models."""
    basis: str
    components: tuple[int, ...]
    models: dict[BankKey, DiagGmm]
    weights: dict[tuple, np.ndarray] = field(default_factory=dict)
    noise: NoiseSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.components = tuple(int(c) for c in self.components)
        if not set(self.components) <= set(COMPONENT_SET):
            raise ConfigurationError(f"component counts must come from {COMPONENT_SET}")
        if not self.components:
            raise ConfigurationError("empty component set")

    @property
    def classes(self) -> list[str]:
        return sorted({k[0] for k in self.models})

    @property
    def sectors(self) -> list[str]:
        return sorted({k[1] for k in self.models})

    @property
    def frame_counts(self) -> list[int]:
        return sorted({k[2] for k in self.models})

    def family(self, cls: str, sector: str, f: int) -> list[DiagGmm]:
        try:
            return [self.models[(cls, sector, f, c)] for c in self.components]
        except KeyError as e:
            raise ConfigurationError(f"bank has no model for {e.args[0]}") from None

    def model_weights(self, cls: str, sector: str, f: int) -> np.ndarray:
        u = self.weights.get((cls, sector, f))
        if u is None:
            return np.full(len(self.components), 1.0 / len(self.components))
        return np.asarray(u)

    def average_loglik(self, cls: str, sector: str, f: int, X) -> np.ndarray:
        fam = self.family(cls, sector, f)
        L = np.array([log_likelihood(m, X) for m in fam])
        return average_logliks(L, self.model_weights(cls, sector, f))

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "ModelBank",
            "basis": self.basis,
            "components": list(self.components),
            "meta": self.meta,
            "noise": None if self.noise is None else {
                "sigma2": self.noise.sigma2, "N": self.noise.N.tolist(),
                "basis": self.noise.basis, "noise_id": self.noise.noise_id},
            "weights": [[list(k), v.tolist()] for k, v in sorted(self.weights.items())],
            "models": [[list(k), m.to_dict()] for k, m in sorted(self.models.items())],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ModelBank":
        doc = json.loads(text)
        if doc.get("kind") != "ModelBank" or doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("not a ModelBank document of a supported schema version")
        noise = doc["noise"]
        if noise is not None:
            noise = NoiseSpec(noise["sigma2"], noise["N"], noise["basis"], noise["noise_id"])
        return cls(doc["basis"], tuple(doc["components"]),
                   {tuple(k): DiagGmm.from_dict(m) for k, m in doc["models"]},
                   {tuple(k): np.asarray(v) for k, v in doc["weights"]},
                   noise, doc["meta"])
