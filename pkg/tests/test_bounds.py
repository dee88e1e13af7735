import math

import pytest
from hypothesis import given, strategies as st

from decoyqkd.bounds import BoundPolicy, confidence_of, rate_std, tail_probability, widen, widen_rates
from decoyqkd.model import ClassTally, DegenerateClassError, ObservedRates, SessionTally, ValidationError

# Frozen from 40-digit mpmath evaluation of q - 10 sqrt(q(1-q)/n).
Q_NU_LOWER_N_3P1E7 = 0.002253220256563137
# Same with n = round(71 s * 7.143e6 Hz * 0.062/1.008) = 31193935 decoy pulses.
Q_NU_LOWER_N_SESSION = 0.002253490435188179
N_DECOY_SESSION = 31193935

RATES = ObservedRates(q_mu=0.0127, q_nu=0.00234, y0=1.34e-4, e_mu=0.02, e_nu=0.04)


def _tally(n_sig, n_dec, n_vac):
    return SessionTally(
        signal=ClassTally(n_sig, 0, 0),
        decoy=ClassTally(n_dec, 0, 0),
        vacuum=ClassTally(n_vac, 0, 0),
        session_duration_s=71.0,
    )


def test_widen_example_literal_count():
    b = widen(RATES, 4.7e8, 3.1e7, 8.1e6, BoundPolicy(10.0))
    assert b.q_nu_lower == pytest.approx(Q_NU_LOWER_N_3P1E7, rel=1e-12)


def test_widen_rates_session_count():
    assert round(71 * 7.143e6 * 0.062 / 1.008) == N_DECOY_SESSION
    b = widen_rates(RATES, _tally(467909018, N_DECOY_SESSION, 8050000))
    assert b.q_nu_lower == pytest.approx(Q_NU_LOWER_N_SESSION, rel=1e-12)
    sd = math.sqrt(1.34e-4 * (1 - 1.34e-4) / 8050000)
    assert b.y0_upper == pytest.approx(1.34e-4 + 10 * sd, rel=1e-12)
    assert b.y0_lower == pytest.approx(1.34e-4 - 10 * sd, rel=1e-12)


def test_zero_rate_clamp():
    rates = ObservedRates(q_mu=0.01, q_nu=0.002, y0=0.0, e_mu=0.02, e_nu=0.04)
    b = widen(rates, 1e6, 1e6, 1e6, BoundPolicy(10.0))
    assert b.y0_lower == 0.0 and b.y0_upper == 0.0


def test_k_zero_is_identity():
    b = widen(RATES, 1e6, 1e5, 1e4, BoundPolicy(0.0))
    assert (b.q_nu_lower, b.y0_upper, b.y0_lower) == (RATES.q_nu, RATES.y0, RATES.y0)


def test_poisson_estimator():
    assert rate_std(0.01, 100.0, "poisson") == pytest.approx(0.01)
    assert rate_std(0.01, 100.0, "binomial") == pytest.approx(math.sqrt(0.01 * 0.99 / 100))


def test_degenerate_class():
    with pytest.raises(DegenerateClassError):
        widen(RATES, 1e6, 0, 1e4)
    with pytest.raises(DegenerateClassError):
        widen(RATES, 1e6, 1e4, 0)


@pytest.mark.parametrize("k,est", [(-1.0, "binomial"), (math.nan, "binomial"), (10.0, "gaussian")])
def test_policy_validation(k, est):
    with pytest.raises(ValidationError):
        BoundPolicy(k, est)


def test_confidence_examples():
    assert confidence_of(BoundPolicy(0.0)) == 0.0
    assert confidence_of(BoundPolicy(1.0)) == pytest.approx(0.6826894921370859, rel=1e-12)
    assert tail_probability(BoundPolicy(10.0)) == pytest.approx(1.5239706048321052e-23, rel=1e-12)
    assert 1.5e-23 / 1.5 <= tail_probability(BoundPolicy(10.0)) <= 1.5e-23 * 1.5


rate = st.floats(min_value=0.0, max_value=1.0)
count = st.floats(min_value=1.0, max_value=1e10)
ks = st.floats(min_value=0.0, max_value=50.0)
estimator = st.sampled_from(["binomial", "poisson"])


def _rates(q_nu, y0):
    return ObservedRates(q_mu=0.5, q_nu=q_nu, y0=y0, e_mu=0.0, e_nu=0.0)


@given(rate, rate, count, count, ks, ks, estimator)
def test_widening_monotone_in_k(q_nu, y0, n_dec, n_vac, k1, k2, est):
    lo, hi = sorted((k1, k2))
    a = widen(_rates(q_nu, y0), n_dec, n_dec, n_vac, BoundPolicy(lo, est))
    b = widen(_rates(q_nu, y0), n_dec, n_dec, n_vac, BoundPolicy(hi, est))
    assert b.q_nu_lower <= a.q_nu_lower
    assert b.y0_upper >= a.y0_upper
    assert b.y0_lower <= a.y0_lower


@given(rate, rate, count, count, ks, estimator)
def test_widening_clamped(q_nu, y0, n_dec, n_vac, k, est):
    b = widen(_rates(q_nu, y0), n_dec, n_dec, n_vac, BoundPolicy(k, est))
    for v in (b.q_nu_lower, b.y0_upper, b.y0_lower):
        assert 0.0 <= v <= 1.0
    assert b.q_nu_lower <= q_nu
    assert b.y0_lower <= y0 <= b.y0_upper


@given(
    st.floats(min_value=1e-6, max_value=0.5),
    st.floats(min_value=1e6, max_value=1e10),
    st.floats(min_value=0.5, max_value=10.0),
    estimator,
)
def test_widening_shrinks_as_inverse_sqrt_n(q_nu, n, k, est):
    # Stay where the lower bound is not clamped so the width is exactly k sigma.
    a = widen(_rates(q_nu, 0.0), n, n, n, BoundPolicy(k, est))
    b = widen(_rates(q_nu, 0.0), 2 * n, 2 * n, 2 * n, BoundPolicy(k, est))
    if a.q_nu_lower > 0:
        ratio = (q_nu - a.q_nu_lower) / (q_nu - b.q_nu_lower)
        assert ratio == pytest.approx(math.sqrt(2.0), rel=1e-9)
