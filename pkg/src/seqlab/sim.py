"""Monte Carlo harness: run a policy over a stream of experiments and aggregate metrics.

Experiments are visited strictly in order and never revisited. Each
replication ``i`` under master seed ``seed`` draws from its own streams::

    ss = numpy.random.SeedSequence(seed, spawn_key=(i,))
    truth_ss, obs_ss = ss.spawn(2)

``truth_ss`` drives the effect draws (prior samples, or the shuffle of an
empirical list) and ``obs_ss`` seeds the PCG64 generator whose ``next_double``
outputs become observations. Policies compared under one seed therefore see
identical truth sequences. Per-replication aggregates are merged in
replication order, so results do not depend on thread scheduling.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from seqlab import _core
from seqlab.errors import ConfigError, DomainError, ExhaustionError
from seqlab.models import BetaBernoulli, ModelSpec
from seqlab.policies import Policy

__all__ = [
    "PriorSampled",
    "EmpiricalList",
    "Outcome",
    "DiscoveryRecord",
    "MetricsReport",
    "SimulationConfig",
    "replication_streams",
    "run_until_discovery",
    "simulate",
    "compare_policies",
    "reports_to_csv",
    "CSV_COLUMNS",
]

PRIOR_BLOCK = 256
CSV_COLUMNS = [
    "policy", "s", "alpha", "mean_time", "fdp", "power",
    "n_disc", "m_tau", "mean_samples_rej", "mean_samples_disc",
]


@dataclass(frozen=True)
class PriorSampled:
    model: ModelSpec


@dataclass(frozen=True, eq=False)
class EmpiricalList:
    effects: np.ndarray
    shuffle: bool = True

    def __post_init__(self):
        arr = np.ascontiguousarray(self.effects, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ConfigError("empirical truth list must be a non-empty 1-d sequence")
        arr.setflags(write=False)
        object.__setattr__(self, "effects", arr)

    def __eq__(self, other):
        return (
            isinstance(other, EmpiricalList)
            and self.shuffle == other.shuffle
            and np.array_equal(self.effects, other.effects)
        )

    __hash__ = None


TruthSource = Union[PriorSampled, EmpiricalList]


class Outcome(enum.IntEnum):
    REJECTED = 0
    DISCOVERED = 1
    EXHAUSTED = 2


@dataclass(frozen=True)
class DiscoveryRecord:
    experiment_index: int
    true_effect: float
    samples_used: int
    outcome: Outcome
    map_estimate: Optional[float]
    cumulative_time: int


def replication_streams(seed: int, replication: int):
    """``(truth_generator, observation_bit_generator)`` for one replication."""
    ss = np.random.SeedSequence(seed, spawn_key=(replication,))
    truth_ss, obs_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(truth_ss)), np.random.PCG64(obs_ss)


def _check_truth(policy: Policy, truth: TruthSource):
    if isinstance(truth, PriorSampled):
        if truth.model != policy.model:
            # misspecified priors are allowed but must be the same model family
            if type(truth.model) is not type(policy.model):
                raise ConfigError("truth model family differs from the policy model")
    elif isinstance(truth, EmpiricalList):
        if not policy.model.in_support(truth.effects):
            raise ConfigError("empirical effects fall outside the model support")
    else:
        raise ConfigError(f"unknown truth source {truth!r}")
    if not np.isfinite(policy.acc[1:]).any():
        raise ConfigError(f"policy {policy.name!r} can never declare a discovery within its horizon")


def _run_stream(policy: Policy, truth: TruthSource, truth_gen, obs_bitgen, max_discoveries, max_experiments):
    """Return effects, samples, outcomes and final statistics for every experiment run."""
    sigma = getattr(policy.model, "sigma", 0.0)
    source = _core.make_source(obs_bitgen)
    args = (policy.acc, policy.rej, policy.horizon, policy.discrete, sigma, source)

    if isinstance(truth, EmpiricalList):
        effects = truth.effects
        if truth.shuffle:
            effects = truth_gen.permutation(effects)
        effects = np.ascontiguousarray(effects)
        cnt, samples, outcome, final = _core.run_experiments(effects, *args, max_discoveries)
        return effects[:cnt], samples[:cnt], outcome[:cnt], final[:cnt]

    parts = []
    found = 0
    total = 0
    while found < max_discoveries:
        block = np.ascontiguousarray(truth.model.sample_effect(truth_gen, size=PRIOR_BLOCK), dtype=float)
        cnt, samples, outcome, final = _core.run_experiments(block, *args, max_discoveries - found)
        parts.append((block[:cnt], samples[:cnt], outcome[:cnt], final[:cnt]))
        found += int(np.count_nonzero(outcome[:cnt] == Outcome.DISCOVERED))
        total += cnt
        if total >= max_experiments and found < max_discoveries:
            raise ExhaustionError(f"no discovery within {max_experiments} prior-sampled experiments")
    return tuple(np.concatenate(col) for col in zip(*parts))


def _records(model, effects, samples, outcome, final) -> list:
    out = []
    t = 0
    for i in range(effects.size):
        t += int(samples[i])
        o = Outcome(int(outcome[i]))
        mp = float(model.map(int(samples[i]), final[i])) if o is Outcome.DISCOVERED else None
        out.append(DiscoveryRecord(i, float(effects[i]), int(samples[i]), o, mp, t))
    return out


def run_until_discovery(
    policy: Policy,
    truth: TruthSource,
    rng: np.random.Generator,
    max_experiments: int = 10_000_000,
) -> list:
    """Records of every experiment up to and including the first discovery.

    ``rng`` is split into a truth stream and an observation stream with
    ``rng.spawn(2)``, so equal seeds reproduce equal records.
    """
    _check_truth(policy, truth)
    truth_gen, obs_gen = rng.spawn(2)
    effects, samples, outcome, final = _run_stream(
        policy, truth, truth_gen, obs_gen.bit_generator, 1, max_experiments
    )
    records = _records(policy.model, effects, samples, outcome, final)
    if not records or records[-1].outcome is not Outcome.DISCOVERED:
        raise ExhaustionError("truth list exhausted before any discovery", records)
    return records


@dataclass
class MetricsReport:
    policy: str
    s: float
    alpha: float
    replications: int
    mean_time_to_discovery: float
    mean_time_se: float
    fdp: float
    fdp_se: float
    power: float
    power_se: float
    n_discoveries: int
    n_false_discoveries: int
    n_experiments_started: int
    n_alternatives: int
    total_observations: int
    mean_samples_rejected: float
    mean_samples_discovered: float
    total_cost_with_c: float
    c: float
    buckets: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        for key, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[key] = None
        return d

    def csv_row(self):
        return [
            self.policy, repr(float(self.s)), repr(float(self.alpha)),
            repr(float(self.mean_time_to_discovery)), repr(float(self.fdp)), repr(float(self.power)),
            str(self.n_discoveries), str(self.n_experiments_started),
            repr(float(self.mean_samples_rejected)), repr(float(self.mean_samples_discovered)),
        ]


def _default_edges(model: ModelSpec) -> np.ndarray:
    if isinstance(model, BetaBernoulli):
        return np.linspace(0.0, 1.0, 201)
    return np.linspace(model.mu0 - 4 * model.sigma0, model.mu0 + 4 * model.sigma0, 81)


def _aggregate(policy: Policy, edges, effects, samples, outcome, final) -> dict:
    s = policy.criterion.s
    disc = outcome == Outcome.DISCOVERED
    alt = effects > s
    nb = edges.size - 1
    b = np.clip(np.searchsorted(edges, effects, side="right") - 1, 0, nb - 1)
    maps = np.zeros(effects.size)
    if disc.any():
        maps[disc] = policy.model.map(samples[disc], final[disc])
    return {
        "obs": int(samples.sum()),
        "exp": int(effects.size),
        "disc": int(disc.sum()),
        "false": int((disc & (effects < s)).sum()),
        "alt": int(alt.sum()),
        "alt_disc": int((alt & disc).sum()),
        "rej": int((~disc).sum()),
        "samples_rej": int(samples[~disc].sum()),
        "samples_disc": int(samples[disc].sum()),
        "b_exp": np.bincount(b, minlength=nb),
        "b_disc": np.bincount(b[disc], minlength=nb),
        "b_samples_disc": np.bincount(b[disc], weights=samples[disc], minlength=nb),
        "b_samples_rej": np.bincount(b[~disc], weights=samples[~disc], minlength=nb),
        "b_map": np.bincount(b[disc], weights=maps[disc], minlength=nb),
    }


def _ratio(num, den):
    return num / den if den else float("nan")


def _report(policy: Policy, parts: Sequence[dict], edges, c: float) -> MetricsReport:
    R = len(parts)
    tot = {key: sum(p[key] for p in parts) for key in ("obs", "exp", "disc", "false", "alt", "alt_disc", "rej", "samples_rej", "samples_disc")}
    mean_time = _ratio(tot["obs"], tot["disc"])
    if R > 1 and tot["disc"]:
        o = np.array([p["obs"] for p in parts], dtype=float)
        d = np.array([p["disc"] for p in parts], dtype=float)
        resid = o - mean_time * d
        se_time = math.sqrt(np.sum(resid**2) / (R * (R - 1))) / d.mean()
    else:
        se_time = float("nan")
    fdp = _ratio(tot["false"], tot["disc"]) if tot["disc"] else 0.0
    power = _ratio(tot["alt_disc"], tot["alt"])
    fdp_se = math.sqrt(fdp * (1 - fdp) / tot["disc"]) if tot["disc"] else float("nan")
    power_se = math.sqrt(power * (1 - power) / tot["alt"]) if tot["alt"] else float("nan")

    bsum = {key: sum(p[key] for p in parts) for key in ("b_exp", "b_disc", "b_samples_disc", "b_samples_rej", "b_map")}
    buckets = []
    for i in range(edges.size - 1):
        ne = int(bsum["b_exp"][i])
        if ne == 0:
            continue
        nd = int(bsum["b_disc"][i])
        buckets.append({
            "lo": float(edges[i]),
            "hi": float(edges[i + 1]),
            "n_experiments": ne,
            "n_discovered": nd,
            "discovery_rate": nd / ne,
            "mean_samples_discovered": float(bsum["b_samples_disc"][i] / nd) if nd else None,
            "mean_samples_rejected": float(bsum["b_samples_rej"][i] / (ne - nd)) if ne > nd else None,
            "mean_map_discovered": float(bsum["b_map"][i] / nd) if nd else None,
        })
    return MetricsReport(
        policy=policy.name,
        s=policy.criterion.s,
        alpha=policy.criterion.alpha,
        replications=R,
        mean_time_to_discovery=mean_time,
        mean_time_se=se_time,
        fdp=fdp,
        fdp_se=fdp_se,
        power=power,
        power_se=power_se,
        n_discoveries=tot["disc"],
        n_false_discoveries=tot["false"],
        n_experiments_started=tot["exp"],
        n_alternatives=tot["alt"],
        total_observations=tot["obs"],
        mean_samples_rejected=_ratio(tot["samples_rej"], tot["rej"]),
        mean_samples_discovered=_ratio(tot["samples_disc"], tot["disc"]),
        total_cost_with_c=tot["obs"] + c * tot["exp"],
        c=c,
        buckets=buckets,
    )


@dataclass
class SimulationConfig:
    """One simulation run.

    With a prior-sampled truth each replication runs until
    ``discoveries_per_replication`` discoveries; with an empirical list each
    replication passes once through the whole list.
    """

    policy: Policy
    truth: TruthSource
    replications: int = 1000
    seed: int = 0
    discoveries_per_replication: int = 1
    threads: int = 1
    c: float = 0.0
    bucket_edges: Optional[np.ndarray] = None
    max_experiments: int = 10_000_000

    @property
    def criterion(self):
        return self.policy.criterion


def _one_replication(cfg: SimulationConfig, edges, rep: int) -> dict:
    truth_gen, obs_bitgen = replication_streams(cfg.seed, rep)
    if isinstance(cfg.truth, EmpiricalList):
        target = cfg.truth.effects.size + 1
    else:
        target = cfg.discoveries_per_replication
    cols = _run_stream(cfg.policy, cfg.truth, truth_gen, obs_bitgen, target, cfg.max_experiments)
    return _aggregate(cfg.policy, edges, *cols)


def simulate(cfg: SimulationConfig) -> MetricsReport:
    if cfg.replications < 1:
        raise ConfigError("replications must be >= 1")
    if cfg.discoveries_per_replication < 1:
        raise ConfigError("discoveries_per_replication must be >= 1")
    _check_truth(cfg.policy, cfg.truth)
    edges = np.asarray(cfg.bucket_edges if cfg.bucket_edges is not None else _default_edges(cfg.policy.model), dtype=float)
    reps = range(cfg.replications)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(lambda r: _one_replication(cfg, edges, r), reps))
    else:
        parts = [_one_replication(cfg, edges, r) for r in reps]
    return _report(cfg.policy, parts, edges, cfg.c)


def compare_policies(configs: Sequence[SimulationConfig], seed: Optional[int] = None) -> dict:
    """Run several policies on identical truth streams; returns ``{policy name: report}``."""
    if not configs:
        raise ConfigError("nothing to compare")
    first = configs[0]
    names = set()
    for cfg in configs:
        if cfg.policy.model != first.policy.model or cfg.policy.criterion != first.policy.criterion:
            raise ConfigError("compared policies must share the model and criterion")
        if cfg.truth != first.truth:
            raise ConfigError("compared policies must share the truth source")
        if cfg.policy.name in names:
            raise ConfigError(f"duplicate policy name {cfg.policy.name!r} in comparison")
        names.add(cfg.policy.name)
        _check_truth(cfg.policy, cfg.truth)
    out = {}
    for cfg in configs:
        if seed is not None:
            cfg = SimulationConfig(**{**cfg.__dict__, "seed": seed})
        out[cfg.policy.name] = simulate(cfg)
    return out


def reports_to_csv(reports: Sequence[MetricsReport], stream=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        w.writerow(rep.csv_row())
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def reports_to_json(reports: Sequence[MetricsReport], metadata: Optional[dict] = None) -> str:
    return json.dumps({"metadata": metadata or {}, "reports": [r.to_dict() for r in reports]}, indent=1, sort_keys=True)
