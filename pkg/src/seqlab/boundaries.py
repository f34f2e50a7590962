"""Acceptance and heuristic rejection boundaries on the sufficient statistic.

Conventions
-----------
Acceptance: for Beta-Bernoulli, ``a_n`` is the smallest integer ``S`` with
``P(mu < s | n, S) < alpha``, so an experiment is a discovery iff ``S >= a_n``.
For the Normal model ``a_n`` is the real root of ``P(mu < s | n, S) = alpha``
and discovery means ``S > a_n``. Unreachable boundaries are ``None`` in the
public API and ``+inf`` in the arrays handed to the kernels.

Rejection: a rejection threshold ``r_n`` is the largest statistic value that
is rejected, so the reject region is ``S <= r_n``. ``None`` (``-inf`` in
arrays) means nothing is rejected at that ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from seqlab.errors import ConfigError, DomainError
from seqlab.models import (
    BetaBernoulli,
    DiscoveryCriterion,
    ModelSpec,
    NormalKnownVariance,
    model_from_dict,
)

__all__ = [
    "BoundarySeries",
    "acceptance_boundary",
    "acceptance_boundary_normal_closed",
    "acceptance_boundary_numeric",
    "acceptance_series",
    "heuristic_boundary",
    "heuristic_series",
    "fixed_horizon_accept_prob",
    "array_to_list",
    "list_to_array",
]


def _bb_acceptance(model: BetaBernoulli, crit: DiscoveryCriterion, n: np.ndarray) -> np.ndarray:
    # vectorised binary search for the smallest S in [0, n] with tail < alpha
    n = np.asarray(n, dtype=np.int64)
    lo = np.zeros_like(n)
    hi = n + 1
    s = float(np.clip(crit.s, 0.0, 1.0))
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi) // 2
        tail = special.betainc(model.a + mid, model.b + (n - mid), s)
        ok = tail < crit.alpha
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid + 1, lo)
    out = lo.astype(float)
    out[lo > n] = np.inf
    return out


def _normal_acceptance(model: NormalKnownVariance, crit: DiscoveryCriterion, n) -> np.ndarray:
    g = np.asarray(n, dtype=float) + model.gamma
    z = special.ndtri(crit.alpha)
    return g * crit.s - model.gamma * model.mu0 - z * model.sigma * np.sqrt(g)


def acceptance_boundary_normal_closed(model: ModelSpec, crit: DiscoveryCriterion, n) -> float:
    """Closed-form ``(n + gamma) s - gamma mu0 - z_alpha sigma sqrt(n + gamma)``."""
    if not isinstance(model, NormalKnownVariance):
        raise DomainError("closed-form acceptance boundary only exists for the Normal model")
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    return float(_normal_acceptance(model, crit, n))


def acceptance_boundary_numeric(model: NormalKnownVariance, crit: DiscoveryCriterion, n: int, xtol=1e-12) -> float:
    """Root of ``posterior_tail(n, S) = alpha`` by bisection (independent of the closed form)."""
    if not isinstance(model, NormalKnownVariance):
        raise DomainError("numeric root only implemented for the Normal model")
    g = n + model.gamma
    center = g * crit.s - model.gamma * model.mu0
    half = 10.0 * model.sigma * math.sqrt(g)
    if n == 0:
        # S is pinned to 0 at n = 0; solve in the formal extension over S anyway
        def f(S):
            z = (crit.s - (S + model.gamma * model.mu0) / g) / model.posterior_sd(0)
            return special.ndtr(z) - crit.alpha
    else:
        def f(S):
            return model.tail(n, S, crit.s) - crit.alpha
    return optimize.bisect(f, center - half, center + half, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def acceptance_boundary(model: ModelSpec, crit: DiscoveryCriterion, n: int):
    """Acceptance threshold ``a_n``; ``None`` when no statistic value certifies a discovery."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if isinstance(model, BetaBernoulli):
        v = _bb_acceptance(model, crit, np.array([n]))[0]
        return None if math.isinf(v) else int(v)
    return float(_normal_acceptance(model, crit, n))


def acceptance_series(model: ModelSpec, crit: DiscoveryCriterion, horizon: int) -> np.ndarray:
    """Array ``a`` of length ``horizon + 1``; ``a[0] = inf`` (no decision before data)."""
    n = np.arange(1, horizon + 1)
    out = np.empty(horizon + 1)
    out[0] = np.inf
    if isinstance(model, BetaBernoulli):
        out[1:] = _bb_acceptance(model, crit, n)
    else:
        out[1:] = _normal_acceptance(model, crit, n)
    return out


def array_to_list(arr, discrete: bool):
    out = []
    for v in np.asarray(arr, dtype=float):
        if math.isinf(v) or math.isnan(v):
            out.append(None)
        else:
            out.append(int(v) if discrete else float(v))
    return out


def list_to_array(values, fill: float) -> np.ndarray:
    return np.array([fill if v is None else float(v) for v in values], dtype=float)


@dataclass(frozen=True, eq=False)
class BoundarySeries:
    model: ModelSpec
    criterion: DiscoveryCriterion
    horizon: int
    a: np.ndarray = field(repr=False)

    @classmethod
    def compute(cls, model: ModelSpec, criterion: DiscoveryCriterion, horizon: int) -> "BoundarySeries":
        criterion.validate(model)
        if horizon < 1:
            raise DomainError("horizon must be >= 1")
        a = acceptance_series(model, criterion, horizon)
        a.setflags(write=False)
        return cls(model, criterion, horizon, a)

    def __getitem__(self, n: int):
        if not 1 <= n <= self.horizon:
            raise DomainError(f"n={n} outside 1..{self.horizon}")
        v = self.a[n]
        if math.isinf(v):
            return None
        return int(v) if self.model.discrete else float(v)

    @property
    def values(self):
        return array_to_list(self.a[1:], self.model.discrete)

    def is_discovery(self, n: int, S) -> bool:
        v = self.a[n]
        return bool(S >= v) if self.model.discrete else bool(S > v)

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "s": self.criterion.s,
            "alpha": self.criterion.alpha,
            "horizon": self.horizon,
            "a": self.values,
        }

    @classmethod
    def from_dict(cls, d) -> "BoundarySeries":
        model = model_from_dict(d["model"])
        crit = DiscoveryCriterion(float(d["s"]), float(d["alpha"]))
        a = np.concatenate(([np.inf], list_to_array(d["a"], np.inf)))
        a.setflags(write=False)
        return cls(model, crit, len(d["a"]), a)


def _heuristic_from_acceptance(model, crit, a_ext: np.ndarray, n: np.ndarray, lookahead: int, beta: float):
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if lookahead < 0:
        raise DomainError("lookahead must be non-negative")
    n = np.asarray(n, dtype=np.int64)
    far = n + lookahead
    a_far = a_ext[far]
    if np.any(np.isinf(a_far)):
        bad = int(far[np.isinf(a_far)][0])
        raise ConfigError(
            f"acceptance boundary at n={bad} is unreachable; increase the lookahead so that "
            "discoveries are attainable at n + lookahead"
        )
    mu_hat = model.map(far, a_far)
    if isinstance(model, BetaBernoulli):
        q = stats.binom.ppf(beta, n, mu_hat)
        q = np.where(stats.binom.cdf(q, n, mu_hat) <= beta, q, q - 1)
        r = np.where(q < 0, -np.inf, q)
        # a rejection threshold at or above acceptance would be contradictory
        return np.minimum(r, a_ext[n] - 1)
    r = n * mu_hat + model.sigma * np.sqrt(n) * special.ndtri(beta)
    return np.minimum(r, a_ext[n])


def heuristic_boundary(model: ModelSpec, crit: DiscoveryCriterion, n: int, lookahead: int = 2000, beta: float = 0.2):
    """Implausibility threshold ``r`` at ``n``: reject when ``S_n <= r``.

    ``mu_hat`` is the MAP effect at the acceptance boundary ``lookahead`` steps
    ahead. For Beta-Bernoulli ``r`` is the largest ``q`` with
    ``P(Bin(n, mu_hat) <= q) <= beta`` (``None`` if no such ``q``); for the
    Normal model it is the ``beta``-quantile of ``N(n mu_hat, n sigma^2)``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    a_ext = acceptance_series(model, crit, n + lookahead)
    r = float(_heuristic_from_acceptance(model, crit, a_ext, np.array([n]), lookahead, beta)[0])
    if math.isinf(r):
        return None
    return int(r) if model.discrete else r


def heuristic_series(model: ModelSpec, crit: DiscoveryCriterion, horizon: int, lookahead: int = 2000, beta: float = 0.2) -> np.ndarray:
    """Heuristic thresholds for ``n = 1..horizon`` as an array of length ``horizon + 1`` (``r[0] = -inf``)."""
    a_ext = acceptance_series(model, crit, horizon + lookahead)
    out = np.empty(horizon + 1)
    out[0] = -np.inf
    out[1:] = _heuristic_from_acceptance(model, crit, a_ext, np.arange(1, horizon + 1), lookahead, beta)
    return out


def fixed_horizon_accept_prob(model: ModelSpec, crit: DiscoveryCriterion, N: int) -> float:
    """Prior probability that a fresh experiment is a discovery after exactly ``N`` observations.

    Beta-Bernoulli: ``1 - sum_{k < a_N} C(N, k) B(a + k, N - k + b) / B(a, b)``,
    summed over the complementary range ``k >= a_N`` in log space.
    Normal: ``S_N ~ N(N mu0, sigma0^2 N^2 + sigma^2 N)`` exceeds ``a_N``.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    aN = acceptance_boundary(model, crit, N)
    if aN is None:
        return 0.0
    if isinstance(model, BetaBernoulli):
        k = np.arange(aN, N + 1, dtype=float)
        logt = (
            special.gammaln(N + 1) - special.gammaln(k + 1) - special.gammaln(N - k + 1)
            + special.betaln(model.a + k, N - k + model.b) - special.betaln(model.a, model.b)
        )
        return float(min(1.0, np.exp(special.logsumexp(logt))))
    sd = math.sqrt(model.sigma0**2 * N**2 + model.sigma**2 * N)
    return float(special.ndtr(-(aN - N * model.mu0) / sd))
