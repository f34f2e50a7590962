"""Empirical rate data: CSV ingestion, method-of-moments Beta fit, synthetic populations.

The CSV layout is ``id,trials,successes`` (UTF-8, comma separated, header row),
e.g. one row per baseball player with At Bats and Hits.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from seqlab.errors import ConfigError, DomainError
from seqlab.models import BetaBernoulli

__all__ = [
    "RateRecord",
    "ingest_csv",
    "fit_beta_mom",
    "fit_prior",
    "synthetic_population",
    "write_csv",
]

HEADER = ("id", "trials", "successes")


@dataclass(frozen=True)
class RateRecord:
    id: str
    trials: int
    successes: int

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"record {self.id!r}: trials must be >= 1")
        if not 0 <= self.successes <= self.trials:
            raise DomainError(f"record {self.id!r}: need 0 <= successes <= trials, got {self.successes}/{self.trials}")

    @property
    def rate(self) -> float:
        return self.successes / self.trials


class CSVFormatError(ConfigError):
    pass


def ingest_csv(stream: TextIO, min_trials: int = 200) -> list[RateRecord]:
    """Parse records, keeping those with ``trials >= min_trials`` in file order."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CSVFormatError("empty CSV input") from None
    if tuple(h.strip().lower() for h in header) != HEADER:
        raise CSVFormatError(f"line 1: expected header {','.join(HEADER)}, got {','.join(header)}")
    out = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise CSVFormatError(f"line {line}: expected 3 fields, got {len(row)}")
        try:
            trials = int(row[1])
            successes = int(row[2])
        except ValueError:
            raise CSVFormatError(f"line {line}: trials and successes must be integers") from None
        try:
            rec = RateRecord(row[0], trials, successes)
        except DomainError as exc:
            raise DomainError(f"line {line}: {exc}") from None
        if rec.trials >= min_trials:
            out.append(rec)
    return out


def fit_beta_mom(rates: Sequence[float]) -> tuple[float, float]:
    """Beta shapes matching the sample mean and unbiased sample variance.

    With mean ``m`` and variance ``v``, ``nu = m(1 - m)/v - 1`` and the shapes
    are ``(m nu, (1 - m) nu)``.
    """
    x = np.asarray(rates, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two rates to fit a beta prior")
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("rates must lie strictly inside (0, 1)")
    m = float(x.mean())
    v = float(x.var(ddof=1))
    if v <= 0:
        raise DomainError("rates have zero sample variance")
    nu = m * (1 - m) / v - 1
    if nu <= 0:
        raise DomainError(f"infeasible moments: variance {v:.6g} >= m(1-m) = {m * (1 - m):.6g}, no beta matches")
    return m * nu, (1 - m) * nu


def fit_prior(records: Iterable[RateRecord]) -> tuple[BetaBernoulli, dict]:
    """Fit a :class:`BetaBernoulli` prior to record rates; returns the model and fit metadata."""
    rates = np.array([r.rate for r in records])
    a, b = fit_beta_mom(rates)
    meta = {
        "method": "method_of_moments",
        "variance": "unbiased (n-1)",
        "n_records": int(rates.size),
        "mean": float(rates.mean()),
        "var": float(rates.var(ddof=1)),
    }
    return BetaBernoulli(a, b), meta


def synthetic_population(
    a: float,
    b: float,
    size: int,
    rng: np.random.Generator,
    min_trials: int = 200,
    mean_trials: float = 2300.0,
) -> list[RateRecord]:
    """Stand-in for real rate data: Beta rates observed through Binomial trial counts.

    Trial counts are ``min_trials`` plus a geometric excess with the requested mean.
    """
    if size < 1:
        raise DomainError("size must be >= 1")
    if mean_trials <= min_trials:
        raise DomainError("mean_trials must exceed min_trials")
    rates = rng.beta(a, b, size=size)
    excess = rng.geometric(1.0 / (mean_trials - min_trials + 1), size=size) - 1
    trials = min_trials + excess
    hits = rng.binomial(trials, rates)
    return [RateRecord(f"p{i:05d}", int(t), int(h)) for i, (t, h) in enumerate(zip(trials, hits))]


def write_csv(records: Iterable[RateRecord], stream: TextIO | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([r.id, r.trials, r.successes])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
