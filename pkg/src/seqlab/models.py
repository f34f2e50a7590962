"""Conjugate models: posterior tails, MAP estimates, predictive transitions.

Two models are supported, both with the identity sufficient statistic
``S_n = X_1 + ... + X_n``:

* :class:`BetaBernoulli` -- ``mu ~ Beta(a, b)``, ``X | mu ~ Bernoulli(mu)``.
* :class:`NormalKnownVariance` -- ``mu ~ N(mu0, sigma0^2)``,
  ``X | mu ~ N(mu, sigma^2)``.

All functions accept scalars or numpy arrays for ``n`` and ``S`` and broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special, stats

from seqlab.errors import DomainError

__all__ = [
    "BetaBernoulli",
    "NormalKnownVariance",
    "ModelSpec",
    "ExperimentState",
    "DiscoveryCriterion",
    "model_from_dict",
    "posterior_tail",
    "posterior_upper_tail",
    "posterior_map",
    "transition_distribution",
    "prior_predictive_first",
    "sample_effect",
    "sample_observation",
]


@dataclass(frozen=True)
class BetaBernoulli:
    a: float
    b: float

    discrete = True

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError(f"Beta prior shapes must be positive and finite, got a={self.a}, b={self.b}")

    def check_state(self, n, S):
        n = np.asarray(n)
        S = np.asarray(S)
        if np.any(n < 0) or np.any(S < 0) or np.any(S > n):
            raise DomainError(f"invalid Beta-Bernoulli state n={n}, S={S}: need 0 <= S <= n")
        if np.any(S != np.floor(S)) or np.any(n != np.floor(n)):
            raise DomainError("Beta-Bernoulli states take integer values")

    def tail(self, n, S, s):
        """P(mu < s | n, S) as the regularized incomplete beta I_s(a+S, b+n-S)."""
        self.check_state(n, S)
        n = np.asarray(n, dtype=float)
        S = np.asarray(S, dtype=float)
        s = float(np.clip(s, 0.0, 1.0))
        return special.betainc(self.a + S, self.b + n - S, s)[()]

    def upper_tail(self, n, S, s):
        self.check_state(n, S)
        n = np.asarray(n, dtype=float)
        S = np.asarray(S, dtype=float)
        s = float(np.clip(s, 0.0, 1.0))
        return special.betaincc(self.a + S, self.b + n - S, s)[()]

    def prior_tail(self, s):
        return float(special.betainc(self.a, self.b, float(np.clip(s, 0.0, 1.0))))

    def map(self, n, S):
        self.check_state(n, S)
        A = self.a + np.asarray(S, dtype=float)
        B = self.b + np.asarray(n, dtype=float) - np.asarray(S, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            interior = (A - 1.0) / (A + B - 2.0)
        # boundary shapes: density is monotone (or U-shaped), mode sits on an endpoint
        out = np.where(
            (A > 1) & (B > 1),
            interior,
            np.where(A > B, 1.0, np.where(B > A, 0.0, 0.5)),
        )
        return out[()]

    def mean(self, n, S):
        self.check_state(n, S)
        return ((self.a + np.asarray(S, dtype=float)) / (self.a + self.b + np.asarray(n, dtype=float)))[()]

    def success_prob(self, n, S):
        """Posterior predictive P(X_{n+1} = 1 | n, S)."""
        return self.mean(n, S)

    def sample_effect(self, rng, size=None):
        return rng.beta(self.a, self.b, size=size)

    def sample_observation(self, mu, rng, size=None):
        if not 0.0 <= mu <= 1.0:
            raise DomainError(f"Bernoulli mean must lie in [0, 1], got {mu}")
        u = rng.random(size=size)
        return (u < mu).astype(np.int64) if size is not None else int(u < mu)

    def in_support(self, mu) -> bool:
        mu = np.asarray(mu)
        return bool(np.all((mu >= 0.0) & (mu <= 1.0)))

    def to_dict(self):
        return {"model": "beta_bernoulli", "a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class NormalKnownVariance:
    mu0: float = 0.0
    sigma0: float = 1.0
    sigma: float = 1.0

    discrete = False

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma > 0):
            raise DomainError(f"standard deviations must be positive, got sigma0={self.sigma0}, sigma={self.sigma}")
        if not all(math.isfinite(v) for v in (self.mu0, self.sigma0, self.sigma)):
            raise DomainError("Normal model parameters must be finite")

    @property
    def gamma(self) -> float:
        """Prior strength in observation units, sigma^2 / sigma0^2."""
        return (self.sigma / self.sigma0) ** 2

    @property
    def tau(self) -> float:
        return 1.0 / self.sigma

    @property
    def tau0(self) -> float:
        return 1.0 / self.sigma0

    def check_state(self, n, S):
        n = np.asarray(n)
        S = np.asarray(S)
        if np.any(n < 0) or np.any(n != np.floor(n)):
            raise DomainError(f"observation count must be a non-negative integer, got {n}")
        if np.any(~np.isfinite(S)):
            raise DomainError("sufficient statistic must be finite")
        if np.any((n == 0) & (S != 0)):
            raise DomainError("a state with n = 0 must have S = 0")

    def posterior_mean(self, n, S):
        """The martingale Y_n = (S_n + gamma mu0) / (n + gamma)."""
        n = np.asarray(n, dtype=float)
        return ((np.asarray(S, dtype=float) + self.gamma * self.mu0) / (n + self.gamma))[()]

    def posterior_sd(self, n):
        return (self.sigma / np.sqrt(np.asarray(n, dtype=float) + self.gamma))[()]

    def tail(self, n, S, s):
        self.check_state(n, S)
        z = (s - self.posterior_mean(n, S)) / self.posterior_sd(n)
        return special.ndtr(z)[()]

    def upper_tail(self, n, S, s):
        self.check_state(n, S)
        z = (self.posterior_mean(n, S) - s) / self.posterior_sd(n)
        return special.ndtr(z)[()]

    def prior_tail(self, s):
        return float(special.ndtr((s - self.mu0) / self.sigma0))

    def map(self, n, S):
        self.check_state(n, S)
        return self.posterior_mean(n, S)

    def mean(self, n, S):
        return self.map(n, S)

    def step_variance(self, n):
        """Var(Y_{n+1} | Y_n) = sigma^2 / ((n + gamma)(n + gamma + 1))."""
        g = np.asarray(n, dtype=float) + self.gamma
        return (self.sigma**2 / (g * (g + 1.0)))[()]

    def sample_effect(self, rng, size=None):
        return rng.normal(self.mu0, self.sigma0, size=size)

    def sample_observation(self, mu, rng, size=None):
        if not math.isfinite(mu):
            raise DomainError(f"effect must be finite, got {mu}")
        return rng.normal(mu, self.sigma, size=size)

    def in_support(self, mu) -> bool:
        return bool(np.all(np.isfinite(np.asarray(mu, dtype=float))))

    def to_dict(self):
        return {"model": "normal", "mu0": float(self.mu0), "sigma0": float(self.sigma0), "sigma": float(self.sigma)}


ModelSpec = Union[BetaBernoulli, NormalKnownVariance]


def model_from_dict(d: dict) -> ModelSpec:
    kind = d.get("model")
    if kind == "beta_bernoulli":
        return BetaBernoulli(float(d["a"]), float(d["b"]))
    if kind == "normal":
        return NormalKnownVariance(float(d.get("mu0", 0.0)), float(d["sigma0"]), float(d["sigma"]))
    raise DomainError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class ExperimentState:
    n: int = 0
    S: float = 0

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"negative observation count {self.n}")
        if self.n == 0 and self.S != 0:
            raise DomainError("a state with n = 0 must have S = 0")

    def martingale(self, model: NormalKnownVariance) -> float:
        return float(model.posterior_mean(self.n, self.S))


@dataclass(frozen=True)
class DiscoveryCriterion:
    """Declare a discovery once P(mu < s | data) < alpha."""

    s: float
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not math.isfinite(self.s):
            raise DomainError("threshold s must be finite")

    def validate(self, model: ModelSpec) -> "DiscoveryCriterion":
        p0 = model.prior_tail(self.s)
        if not self.alpha < p0 < 1.0:
            raise DomainError(
                f"prior P(mu < s) = {p0:.6g} must lie in (alpha, 1) = ({self.alpha}, 1); "
                "otherwise every or no experiment is a discovery before any data arrives"
            )
        return self

    def to_dict(self):
        return {"s": float(self.s), "alpha": float(self.alpha)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["s"]), float(d["alpha"]))


def posterior_tail(model: ModelSpec, state: ExperimentState, s: float) -> float:
    return float(model.tail(state.n, state.S, s))


def posterior_upper_tail(model: ModelSpec, state: ExperimentState, s: float) -> float:
    return float(model.upper_tail(state.n, state.S, s))


def posterior_map(model: ModelSpec, state: ExperimentState) -> float:
    return float(model.map(state.n, state.S))


def transition_distribution(model: ModelSpec, state: ExperimentState):
    """Predictive law of the next step.

    Beta-Bernoulli: frozen Bernoulli law of the increment S_{n+1} - S_n.
    Normal: frozen Normal law of the next posterior mean Y_{n+1} given Y_n.
    """
    model.check_state(state.n, state.S)
    if isinstance(model, BetaBernoulli):
        return stats.bernoulli(float(model.success_prob(state.n, state.S)))
    y = float(model.posterior_mean(state.n, state.S))
    return stats.norm(y, math.sqrt(model.step_variance(state.n)))


def prior_predictive_first(model: ModelSpec):
    """Law of S_1 = X_1 under the prior."""
    if isinstance(model, BetaBernoulli):
        return stats.bernoulli(model.a / (model.a + model.b))
    return stats.norm(model.mu0, math.hypot(model.sigma0, model.sigma))


def sample_effect(model: ModelSpec, rng: np.random.Generator) -> float:
    return float(model.sample_effect(rng))


def sample_observation(model: ModelSpec, mu: float, rng: np.random.Generator):
    return model.sample_observation(mu, rng)
