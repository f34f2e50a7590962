import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from seqlab import BetaBernoulli, ConfigError, DomainError, RateRecord, fit_beta_mom, fit_prior, ingest_csv, synthetic_population
from seqlab.prior import write_csv


def _csv(*rows):
    return io.StringIO("id,trials,successes\n" + "\n".join(rows) + "\n")


def test_ingest_filters_and_parses():
    recs = ingest_csv(_csv("x,100,30", "y,300,90", "z,200,50"))
    assert [r.id for r in recs] == ["y", "z"]
    assert recs[0] == RateRecord("y", 300, 90) and recs[0].rate == pytest.approx(0.30)
    assert len(ingest_csv(_csv("x,100,30"), min_trials=1)) == 1


@pytest.mark.parametrize("rows,line", [(("a,300,90", "b,300"), 3), (("a,300,x",), 2), (("a,3.5,1",), 2)])
def test_malformed_rows_report_line(rows, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        ingest_csv(_csv(*rows))


def test_successes_above_trials():
    with pytest.raises(DomainError, match="line 2"):
        ingest_csv(_csv("a,300,301"))


def test_bad_header_and_empty():
    with pytest.raises(ConfigError):
        ingest_csv(io.StringIO("player,ab,h\nx,1,1\n"))
    with pytest.raises(ConfigError):
        ingest_csv(io.StringIO(""))


def test_fit_uniform_moments():
    d = math.sqrt(1 / 6)
    a, b = fit_beta_mom([0.5 + d / 2, 0.5 - d / 2])
    assert a == pytest.approx(1.0, abs=1e-12) and b == pytest.approx(1.0, abs=1e-12)


def test_fit_worked_example():
    a, b = fit_beta_mom([0.2, 0.3, 0.4])
    assert (a, b) == (pytest.approx(6.0), pytest.approx(14.0))
    assert stats.beta.mean(6, 14) == pytest.approx(0.3)
    assert stats.beta.var(6, 14) == pytest.approx(0.21 / 21)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=3, max_size=40, unique=True))
def test_fit_matches_moments_exactly(rates):
    x = np.array(rates)
    m, v = x.mean(), x.var(ddof=1)
    if v >= m * (1 - m) or v < 1e-8:
        return
    a, b = fit_beta_mom(x)
    assert abs(stats.beta.mean(a, b) - m) < 1e-12
    assert abs(stats.beta.var(a, b) - v) < 1e-12


def test_fit_infeasible_and_degenerate():
    with pytest.raises(DomainError, match="infeasible"):
        fit_beta_mom([0.01, 0.99, 0.02, 0.98])
    with pytest.raises(DomainError):
        fit_beta_mom([0.3, 0.3])
    with pytest.raises(DomainError):
        fit_beta_mom([0.3])
    with pytest.raises(DomainError):
        fit_beta_mom([0.0, 0.5])


def test_fit_recovers_parameters():
    rng = np.random.default_rng(12)
    a, b = fit_beta_mom(rng.beta(45, 130, 100_000))
    assert a == pytest.approx(45, rel=0.05) and b == pytest.approx(130, rel=0.05)


def test_synthetic_pipeline_round_trip():
    recs = synthetic_population(45, 130, 2000, np.random.default_rng(1))
    assert all(r.trials >= 200 for r in recs)
    text = write_csv(recs)
    back = ingest_csv(io.StringIO(text))
    assert back == recs
    m1, meta = fit_prior(back)
    m2, _ = fit_prior(ingest_csv(io.StringIO(text)))
    assert m1 == m2 and isinstance(m1, BetaBernoulli)
    assert meta["variance"].startswith("unbiased") and meta["n_records"] == 2000
