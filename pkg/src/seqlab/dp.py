"""Truncated single-experiment dynamic program and the bisection on the rejection cost.

For a rejection cost ``kappa`` the value of a state ``(n, S)`` is

    W(n, S) = 0                                    if (n, S) is a discovery
    W(k, S) = kappa + c                            otherwise, at the horizon
    W(n, S) = min(1 + E[W(n+1, S') | S], kappa + c) otherwise

and ``f(kappa) = 1 + E[W(1, S_1)]``. The fixed point ``kappa* = f(kappa*)`` is
the optimal expected number of observations per discovery of the k-truncated
problem (plus restart costs when ``c > 0``); ``f(kappa) < kappa`` above it and
``f(kappa) > kappa`` below it, which is what the bisection relies on.

Beta-Bernoulli runs exactly on the integer lattice. The Normal model runs on a
uniform grid over the posterior-mean martingale ``Y_n``, with the Gaussian
transition integrated per cell and tails clamped into the edge cells.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import ndimage, special

from seqlab import _core
from seqlab.boundaries import acceptance_series, array_to_list, list_to_array
from seqlab.errors import DomainError, GridError, NonConvergenceError
from seqlab.models import (
    BetaBernoulli,
    DiscoveryCriterion,
    ExperimentState,
    ModelSpec,
    NormalKnownVariance,
    model_from_dict,
)

__all__ = [
    "NormalGrid",
    "TruncatedProblem",
    "InductionResult",
    "PolicyTable",
    "backward_induction",
    "solve_optimal",
    "value_at",
]

LEAKAGE_TOL = 1e-6
KERNEL_WIDTH_SD = 8.0


@dataclass(frozen=True)
class NormalGrid:
    lo: float
    hi: float
    points: int = 4001

    def __post_init__(self):
        if self.points < 3 or self.points % 2 == 0:
            raise DomainError(f"grid needs an odd number of points >= 3, got {self.points}")
        if not self.hi > self.lo:
            raise DomainError("grid upper bound must exceed the lower bound")

    @classmethod
    def default(cls, model: NormalKnownVariance, crit: DiscoveryCriterion, points: int = 4001) -> "NormalGrid":
        return cls(crit.s - 8.0 * model.sigma0, crit.s + 8.0 * model.sigma0, points)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "points": self.points}


@dataclass(frozen=True)
class TruncatedProblem:
    model: ModelSpec
    criterion: DiscoveryCriterion
    k: int
    c: float = 0.0
    grid: Optional[NormalGrid] = None

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"truncation k must be >= 1, got {self.k}")
        if self.c < 0:
            raise DomainError(f"fixed cost must be non-negative, got {self.c}")
        self.criterion.validate(self.model)
        if isinstance(self.model, NormalKnownVariance) and self.grid is None:
            object.__setattr__(self, "grid", NormalGrid.default(self.model, self.criterion))
        if isinstance(self.model, BetaBernoulli) and self.grid is not None:
            raise DomainError("Beta-Bernoulli problems run on the exact lattice; no grid")

    @cached_property
    def acceptance(self) -> np.ndarray:
        return acceptance_series(self.model, self.criterion, self.k)

    @cached_property
    def _normal_setup(self):
        m = self.model
        y = self.grid.y
        h = self.grid.h
        n = np.arange(self.k + 1, dtype=float)
        z = special.ndtri(self.criterion.alpha)
        acc_y = self.criterion.s - z * m.sigma / np.sqrt(n + m.gamma)
        kernels = [_cell_kernel(math.sqrt(m.step_variance(j)), h) for j in range(self.k)]
        first = _cell_masses(y, h, m.mu0, math.sqrt(m.step_variance(0)))
        return y, h, acc_y, kernels, first


def _cell_kernel(sd: float, h: float) -> np.ndarray:
    """Cell masses of N(0, sd^2) for integer cell offsets, tails folded into the ends."""
    half = max(1, int(math.ceil(KERNEL_WIDTH_SD * sd / h)))
    d = np.arange(-half, half + 1, dtype=float)
    upper = special.ndtr((d + 0.5) * h / sd)
    lower = special.ndtr((d - 0.5) * h / sd)
    w = upper - lower
    tail = special.ndtr(-(half + 0.5) * h / sd)
    w[0] += tail
    w[-1] += tail
    return w


def _cell_masses(y: np.ndarray, h: float, mean: float, sd: float) -> np.ndarray:
    edges = np.concatenate(([-np.inf], y[:-1] + 0.5 * h, [np.inf]))
    cdf = special.ndtr((edges - mean) / sd)
    return np.diff(cdf)


@dataclass
class InductionResult:
    """Output of one backward-induction sweep at a fixed rejection cost.

    ``r[n]`` is the largest rejected statistic at step ``n`` (``-inf`` when
    nothing is rejected); ``n_rejected[n]`` counts rejected lattice/grid
    states, which equals ``r[n] + 1`` on the lattice when the reject region
    is downward closed.
    """

    kappa: float
    f: float
    r: np.ndarray
    n_rejected: np.ndarray
    values: Optional[np.ndarray] = None
    reject_mask: Optional[list] = None
    leakage: float = 0.0


def _check_kappa(kappa):
    if not kappa > 0 or not math.isfinite(kappa):
        raise DomainError(f"rejection cost must be positive and finite, got {kappa}")


def _bb_induction(problem: TruncatedProblem, kappa: float, keep_values: bool) -> InductionResult:
    m = problem.model
    R = kappa + problem.c
    w1, r, nrej, table = _core.bb_induction(m.a, m.b, problem.k, problem.acceptance, R, keep_values)
    p0 = m.a / (m.a + m.b)
    f = 1.0 + p0 * w1[1] + (1.0 - p0) * w1[0]
    return InductionResult(kappa, float(f), r, nrej, values=table)


def _normal_induction(problem: TruncatedProblem, kappa: float, keep_values: bool) -> InductionResult:
    m = problem.model
    k = problem.k
    R = kappa + problem.c
    y, h, acc_y, kernels, first = problem._normal_setup
    lo_edge = y[0] - 0.5 * h
    hi_edge = y[-1] + 0.5 * h

    r = np.full(k + 1, -np.inf)
    nrej = np.zeros(k + 1, dtype=np.int64)
    rows = [None] * (k + 1) if keep_values else None
    masks = [None] * (k + 1) if keep_values else None
    leak = 0.0

    disc = y > acc_y[k]
    W = np.where(disc, 0.0, R)
    rej = ~disc
    idx = np.flatnonzero(rej)
    if idx.size:
        r[k] = y[idx[-1]] * (k + m.gamma) - m.gamma * m.mu0
    nrej[k] = idx.size
    if keep_values:
        rows[k] = W
        masks[k] = rej

    for n in range(k - 1, 0, -1):
        ew = ndimage.correlate1d(W, kernels[n], mode="nearest")
        cont = 1.0 + ew
        disc = y > acc_y[n]
        rej = ~disc & ~(cont <= R)
        W_n = np.where(disc, 0.0, np.where(rej, R, cont))
        live = np.flatnonzero(~disc & ~rej)
        if live.size:
            sd = math.sqrt(m.step_variance(n))
            leak = max(
                leak,
                float(special.ndtr((lo_edge - y[live[0]]) / sd) + special.ndtr((y[live[-1]] - hi_edge) / sd)),
            )
        idx = np.flatnonzero(rej)
        if idx.size:
            r[n] = y[idx[-1]] * (n + m.gamma) - m.gamma * m.mu0
        nrej[n] = idx.size
        if keep_values:
            rows[n] = W_n
            masks[n] = rej
        W = W_n

    f = 1.0 + float(first @ W)
    sd0 = math.sqrt(m.step_variance(0))
    leak = max(leak, float(special.ndtr((lo_edge - m.mu0) / sd0) + special.ndtr((m.mu0 - hi_edge) / sd0)))
    if leak > LEAKAGE_TOL:
        raise GridError(
            f"transition mass leaking past the grid edges is {leak:.3g} > {LEAKAGE_TOL:g}; "
            "widen the grid"
        )
    values = np.vstack([np.full_like(y, np.nan)] + rows[1:]) if keep_values else None
    return InductionResult(kappa, f, r, nrej, values=values, reject_mask=masks, leakage=leak)


def backward_induction(problem: TruncatedProblem, kappa: float, keep_values: bool = False) -> InductionResult:
    """Solve the single-experiment problem with rejection cost ``kappa``."""
    _check_kappa(kappa)
    if isinstance(problem.model, BetaBernoulli):
        return _bb_induction(problem, kappa, keep_values)
    return _normal_induction(problem, kappa, keep_values)


@dataclass
class PolicyTable:
    model: ModelSpec
    criterion: DiscoveryCriterion
    k: int
    c: float
    kappa_star: float
    a: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    tol: float = 1e-6
    iterations: list = field(default_factory=list, repr=False)
    grid: Optional[NormalGrid] = None

    @property
    def problem(self) -> TruncatedProblem:
        return TruncatedProblem(self.model, self.criterion, self.k, self.c, self.grid)

    def threshold(self, n: int):
        if not 1 <= n <= self.k:
            raise DomainError(f"n={n} outside 1..{self.k}")
        v = self.r[n]
        if math.isinf(v):
            return None
        return int(v) if self.model.discrete else float(v)

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "criterion": self.criterion.to_dict(),
            "k": self.k,
            "c": self.c,
            "kappa_star": self.kappa_star,
            "tol": self.tol,
            "a": array_to_list(self.a[1:], self.model.discrete),
            "r": array_to_list(self.r[1:], self.model.discrete),
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "iterations": [[float(x), float(y)] for x, y in self.iterations],
        }

    @classmethod
    def from_dict(cls, d) -> "PolicyTable":
        model = model_from_dict(d["model"])
        crit = DiscoveryCriterion.from_dict(d["criterion"])
        a = np.concatenate(([np.inf], list_to_array(d["a"], np.inf)))
        r = np.concatenate(([-np.inf], list_to_array(d["r"], -np.inf)))
        grid = NormalGrid(**d["grid"]) if d.get("grid") else None
        return cls(
            model, crit, int(d["k"]), float(d["c"]), float(d["kappa_star"]), a, r,
            tol=float(d.get("tol", 1e-6)),
            iterations=[tuple(p) for p in d.get("iterations", [])],
            grid=grid,
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "PolicyTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def solve_optimal(
    problem: TruncatedProblem,
    tol: float = 1e-6,
    max_iter: int = 200,
    kappa_lo: float = 1.0,
    kappa_hi: Optional[float] = None,
) -> PolicyTable:
    """Bisection on ``kappa`` for the fixed point of ``f``.

    The bracket starts at ``[kappa_lo, kappa_hi]`` (``kappa_hi`` defaults to 2)
    and is doubled until ``f(hi) < hi``. Bisection stops once the bracket is
    narrower than ``tol * lo``; since ``f`` has slope in [0, 1] this also
    guarantees ``|f(kappa*) - kappa*| <= tol * kappa*``.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    trace = []

    def f(kappa):
        val = backward_induction(problem, kappa).f
        trace.append((kappa, val))
        return val

    lo = float(kappa_lo)
    if not f(lo) > lo:
        raise NonConvergenceError(f"f({lo}) <= {lo}: the lower bracket end is not below the fixed point")
    hi = float(kappa_hi) if kappa_hi is not None else 2.0 * lo
    while not f(hi) < hi:
        lo = hi
        hi *= 2.0
        if hi > 2.0**40:
            raise NonConvergenceError(
                "rejection-cost bracket exceeded 2^40 without f(kappa) < kappa; "
                "discoveries are practically unreachable under this criterion"
            )
    for _ in range(max_iter):
        if hi - lo <= tol * lo:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > mid:
            lo = mid
        else:
            hi = mid
    else:
        raise NonConvergenceError(f"bisection did not converge within {max_iter} iterations")

    kappa = 0.5 * (lo + hi)
    res = backward_induction(problem, kappa)
    trace.append((kappa, res.f))
    if abs(res.f - kappa) > tol * kappa:
        raise NonConvergenceError(f"fixed-point residual {abs(res.f - kappa):.3g} exceeds tolerance")
    r = res.r.copy()
    a = problem.acceptance.copy()
    return PolicyTable(
        problem.model, problem.criterion, problem.k, problem.c, kappa, a, r,
        tol=tol, iterations=trace, grid=problem.grid,
    )


def _bb_row(problem: TruncatedProblem, kappa: float, n_target: int) -> np.ndarray:
    m = problem.model
    k = problem.k
    R = kappa + problem.c
    acc = problem.acceptance
    S = np.arange(k + 1, dtype=float)
    W = np.where(S >= acc[k], 0.0, R)
    for n in range(k - 1, n_target - 1, -1):
        Sn = S[: n + 1]
        p = (m.a + Sn) / (m.a + m.b + n)
        cont = 1.0 + p * W[1 : n + 2] + (1.0 - p) * W[: n + 1]
        W = np.where(Sn >= acc[n], 0.0, np.minimum(cont, R))
    return W


def value_at(table: PolicyTable, state: ExperimentState) -> float:
    """Expected remaining cost ``W(n, S | kappa*)`` under the table's optimal policy."""
    if not 1 <= state.n <= table.k:
        raise DomainError(f"state n={state.n} outside the horizon 1..{table.k}")
    problem = table.problem
    table.model.check_state(state.n, state.S)
    if isinstance(table.model, BetaBernoulli):
        row = _bb_row(problem, table.kappa_star, state.n)
        return float(row[int(state.S)])
    if table.model.posterior_mean(state.n, state.S) > problem._normal_setup[2][state.n]:
        return 0.0
    y = problem.grid.y
    row = _normal_row(problem, table.kappa_star, state.n)
    return float(np.interp(table.model.posterior_mean(state.n, state.S), y, row))


def _normal_row(problem: TruncatedProblem, kappa: float, n_target: int) -> np.ndarray:
    R = kappa + problem.c
    y, h, acc_y, kernels, first = problem._normal_setup
    W = np.where(y > acc_y[problem.k], 0.0, R)
    for n in range(problem.k - 1, n_target - 1, -1):
        cont = 1.0 + ndimage.correlate1d(W, kernels[n], mode="nearest")
        W = np.where(y > acc_y[n], 0.0, np.minimum(cont, R))
    return W
