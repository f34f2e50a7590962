"""Decision rules for the five benchmarked procedures.

Every policy reduces to three pieces that the simulation kernel consumes
directly: an acceptance array ``acc``, a rejection array ``rej`` (reject when
``S <= rej[n]``) and a horizon at which an undecided experiment is dropped.
``decide`` evaluates exactly the same arrays, so Python-level decisions and
kernel runs cannot disagree.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import special

from seqlab.boundaries import acceptance_series, heuristic_series
from seqlab.dp import PolicyTable
from seqlab.errors import ConfigError, DomainError
from seqlab.models import BetaBernoulli, DiscoveryCriterion, ExperimentState, ModelSpec

__all__ = [
    "Action",
    "Optimal",
    "Heuristic",
    "FixedN",
    "FixedNEarlyStop",
    "BayesSequential",
    "PolicySpec",
    "Policy",
    "make_policy",
    "decide",
    "spec_from_dict",
    "run_path",
]


class Action(enum.Enum):
    DISCOVER = "discover"
    CONTINUE = "continue"
    REJECT = "reject"


@dataclass(frozen=True)
class Optimal:
    table: Optional[PolicyTable] = field(default=None, compare=False)
    table_path: Optional[str] = None

    name = "optimal"

    def to_dict(self):
        d = {"variant": "optimal"}
        if self.table_path is not None:
            d["table_path"] = self.table_path
        elif self.table is not None:
            d["table"] = self.table.to_dict()
        return d


@dataclass(frozen=True)
class Heuristic:
    lookahead: int = 2000
    beta: float = 0.2
    k: int = 5000

    name = "heuristic"

    def to_dict(self):
        return {"variant": "heuristic", "lookahead": self.lookahead, "beta": self.beta, "k": self.k}


@dataclass(frozen=True)
class FixedN:
    N: int = 1000

    name = "fixed"

    def to_dict(self):
        return {"variant": "fixed", "N": self.N}


@dataclass(frozen=True)
class FixedNEarlyStop:
    N: int = 1000

    name = "fixed_early"

    def to_dict(self):
        return {"variant": "fixed_early", "N": self.N}


@dataclass(frozen=True)
class BayesSequential:
    """Reject once ``P(mu > s | data) < beta_reject`` or after ``cap`` samples.

    ``beta_reject=None`` resolves to ``prior_fraction * P0(mu > s)``.
    """

    beta_reject: Optional[float] = None
    cap: int = 4000
    prior_fraction: float = 0.9

    name = "bayes_sequential"

    def to_dict(self):
        return {
            "variant": "bayes_sequential",
            "beta_reject": self.beta_reject,
            "cap": self.cap,
            "prior_fraction": self.prior_fraction,
        }


PolicySpec = Union[Optimal, Heuristic, FixedN, FixedNEarlyStop, BayesSequential]


def spec_from_dict(d: dict) -> PolicySpec:
    v = d.get("variant")
    if v == "optimal":
        if "table" in d:
            return Optimal(table=PolicyTable.from_dict(d["table"]))
        if "table_path" in d:
            return Optimal(table=PolicyTable.load(d["table_path"]), table_path=d["table_path"])
        return Optimal()
    if v == "heuristic":
        return Heuristic(int(d.get("lookahead", 2000)), float(d.get("beta", 0.2)), int(d.get("k", 5000)))
    if v == "fixed":
        return FixedN(int(d.get("N", 1000)))
    if v == "fixed_early":
        return FixedNEarlyStop(int(d.get("N", 1000)))
    if v == "bayes_sequential":
        br = d.get("beta_reject")
        return BayesSequential(None if br is None else float(br), int(d.get("cap", 4000)), float(d.get("prior_fraction", 0.9)))
    raise ConfigError(f"unknown policy variant {v!r}")


@dataclass(frozen=True, eq=False)
class Policy:
    name: str
    model: ModelSpec
    criterion: DiscoveryCriterion
    horizon: int
    acc: np.ndarray = field(repr=False)
    rej: np.ndarray = field(repr=False)
    spec: PolicySpec = field(repr=False, default=None)

    @property
    def discrete(self) -> bool:
        return self.model.discrete

    def decide(self, state: ExperimentState) -> Action:
        n, S = state.n, state.S
        if n < 0 or n > self.horizon:
            raise DomainError(f"state n={n} beyond the policy horizon {self.horizon}")
        if n == 0:
            return Action.CONTINUE
        a = self.acc[n]
        if (S >= a) if self.discrete else (S > a):
            return Action.DISCOVER
        if S <= self.rej[n] or n == self.horizon:
            return Action.REJECT
        return Action.CONTINUE

    def thresholds(self):
        """``(acc, rej)`` arrays indexed by ``n = 0..horizon``."""
        return self.acc, self.rej


def _bb_upper_reject(model: BetaBernoulli, crit: DiscoveryCriterion, n: np.ndarray, beta: float) -> np.ndarray:
    # largest S in [0, n] with P(mu > s | n, S) < beta; the upper tail increases in S
    lo = np.full(n.shape, -1, dtype=np.int64)
    hi = n.astype(np.int64)
    s = float(np.clip(crit.s, 0.0, 1.0))
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi + 1) // 2
        up = special.betaincc(model.a + mid, model.b + (n - mid), s)
        ok = up < beta
        lo = np.where(active & ok, mid, lo)
        hi = np.where(active & ~ok, mid - 1, hi)
    out = lo.astype(float)
    out[lo < 0] = -np.inf
    return out


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def make_policy(
    spec: PolicySpec,
    model: ModelSpec,
    criterion: DiscoveryCriterion,
    table: Optional[PolicyTable] = None,
) -> Policy:
    """Build the decision arrays for ``spec`` under ``model`` and ``criterion``."""
    criterion.validate(model)
    if isinstance(spec, Optimal):
        table = spec.table or table
        if table is None:
            raise ConfigError("the optimal policy needs a solved PolicyTable")
        if table.model != model or table.criterion != criterion:
            raise ConfigError("PolicyTable was solved for a different model or criterion")
        return Policy("optimal", model, criterion, table.k, _frozen(table.a), _frozen(table.r), spec)

    if isinstance(spec, Heuristic):
        if spec.k < 1:
            raise ConfigError("heuristic truncation k must be >= 1")
        acc = acceptance_series(model, criterion, spec.k)
        rej = heuristic_series(model, criterion, spec.k, spec.lookahead, spec.beta)
        return Policy("heuristic", model, criterion, spec.k, _frozen(acc), _frozen(rej), spec)

    if isinstance(spec, (FixedN, FixedNEarlyStop)):
        if spec.N < 1:
            raise ConfigError(f"sample size N must be >= 1, got {spec.N}")
        acc = acceptance_series(model, criterion, spec.N)
        if isinstance(spec, FixedN):
            acc[:-1] = np.inf
        rej = np.full(spec.N + 1, -np.inf)
        return Policy(spec.name, model, criterion, spec.N, _frozen(acc), _frozen(rej), spec)

    if isinstance(spec, BayesSequential):
        p_up = 1.0 - model.prior_tail(criterion.s)
        beta = spec.beta_reject if spec.beta_reject is not None else spec.prior_fraction * p_up
        if not 0.0 < beta < p_up:
            raise ConfigError(
                f"beta_reject={beta:.6g} must lie in (0, P0(mu > s) = {p_up:.6g}); a larger value "
                "rejects every alternative before it receives a single observation"
            )
        if spec.cap < 1:
            raise ConfigError("cap must be >= 1")
        acc = acceptance_series(model, criterion, spec.cap)
        n = np.arange(1, spec.cap + 1)
        rej = np.empty(spec.cap + 1)
        rej[0] = -np.inf
        if isinstance(model, BetaBernoulli):
            rej[1:] = _bb_upper_reject(model, criterion, n, beta)
        else:
            g = n + model.gamma
            rej[1:] = g * criterion.s - model.gamma * model.mu0 + special.ndtri(beta) * model.sigma * np.sqrt(g)
        # Discover is checked first, so a reject value at or above acc is never reached
        spec = BayesSequential(beta, spec.cap, spec.prior_fraction)
        return Policy("bayes_sequential", model, criterion, spec.cap, _frozen(acc), _frozen(rej), spec)

    raise ConfigError(f"unsupported policy spec {spec!r}")


def decide(policy: Policy, state: ExperimentState) -> Action:
    return policy.decide(state)


def run_path(policy: Policy, outcomes) -> tuple[int, Action]:
    """Feed a fixed outcome sequence through ``policy``; return the stopping step and action."""
    S = 0
    for n, x in enumerate(outcomes, start=1):
        S += x
        act = policy.decide(ExperimentState(n, S))
        if act is not Action.CONTINUE:
            return n, act
    raise DomainError("outcome sequence ended before the policy stopped")
