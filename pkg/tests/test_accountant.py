"""Privacy accounting: sensitivity, bit distance, budget inversion."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitflipdp import accountant, binfloat, perturb


# ---------------------------------------------------------------------------
# budgets and sensitivity


def test_budget_validation():
    with pytest.raises(ValueError):
        accountant.PrivacyBudget(1.0, 1.0, 10)   # order must exceed 1
    with pytest.raises(ValueError):
        accountant.PrivacyBudget(2.0, -1.0, 10)
    with pytest.raises(ValueError):
        accountant.PrivacyBudget(2.0, 1.0, 0)
    budget = accountant.PrivacyBudget(2.0, 1.0, 10)
    assert budget.per_round_epsilon == pytest.approx(0.1)


def test_classical_sensitivity_reference_point():
    # one extra record can swing the averaged update by at most 2*eta*G/|D|
    assert accountant.classical_sensitivity(0.1, 1.0, 2000) == 1e-4


def test_classical_sensitivity_scaling():
    base = accountant.classical_sensitivity(0.1, 2.5, 1000)
    assert accountant.classical_sensitivity(0.2, 2.5, 1000) == pytest.approx(2 * base)
    assert accountant.classical_sensitivity(0.1, 5.0, 1000) == pytest.approx(2 * base)
    assert accountant.classical_sensitivity(0.1, 2.5, 2000) == pytest.approx(base / 2)


# ---------------------------------------------------------------------------
# weighted bit distance


def test_bit_distance_single_msb():
    u = np.zeros(23, dtype=np.uint8)
    v = u.copy()
    v[22] = 1  # most significant fraction bit carries weight 1/2
    assert accountant.bit_distance(u, v) == 0.5


def test_bit_distance_all_bits():
    u = np.zeros(46, dtype=np.uint8)
    v = np.ones(46, dtype=np.uint8)
    per_param = sum(2.0 ** (k - 23) for k in range(23))
    assert accountant.bit_distance(u, v) == pytest.approx(2 * per_param)


def test_fraction_distance_matches_bit_distance():
    rng = np.random.default_rng(31)
    f_u = rng.integers(0, 2**23, size=64).astype(np.uint32)
    f_v = rng.integers(0, 2**23, size=64).astype(np.uint32)
    exp = 130
    u = binfloat.encode(binfloat.FixedPointVector(fractions=f_u, shared_exponent=exp))
    v = binfloat.encode(binfloat.FixedPointVector(fractions=f_v, shared_exponent=exp))
    assert accountant.fraction_distance(f_u, f_v) == pytest.approx(
        accountant.bit_distance(u, v), rel=1e-12)


@given(st.integers(min_value=0, max_value=2**23 - 1),
       st.integers(min_value=0, max_value=22))
@settings(max_examples=200)
def test_single_flip_distance_is_its_weight(fraction, k):
    f_u = np.uint32([fraction])
    f_v = np.uint32([fraction ^ (1 << k)])
    assert accountant.fraction_distance(f_u, f_v) == pytest.approx(2.0 ** (k - 23))


# ---------------------------------------------------------------------------
# kappa estimation


def _checkpoints(rng, count=6, dim=64, scale=0.05):
    return (rng.normal(0.0, scale, (count, dim))).astype(np.float32)


def test_estimate_kappa_bar_deterministic():
    rng = np.random.default_rng(41)
    samples = _checkpoints(rng)
    h = perturb.RngHandle(3, stage=perturb.STAGE_KAPPA_DRAW)
    a = accountant.estimate_kappa_bar(samples, 1e-4, 100, 0.5, h)
    b = accountant.estimate_kappa_bar(samples, 1e-4, 100, 0.5, h)
    assert a.kappa_bar == b.kappa_bar
    assert a.samples_used == 6 * 100
    assert a.model_dim == 64
    c = accountant.estimate_kappa_bar(samples, 1e-4, 100, 0.5,
                                      perturb.RngHandle(4, stage=perturb.STAGE_KAPPA_DRAW))
    assert c.kappa_bar != a.kappa_bar


def test_estimate_kappa_bar_positive_and_bounded():
    rng = np.random.default_rng(43)
    samples = _checkpoints(rng)
    est = accountant.estimate_kappa_bar(samples, 1e-4, 200, 0.5,
                                        perturb.RngHandle(5))
    max_kappa = 64 * sum(2.0 ** (k - 23) for k in range(23))
    assert 0.0 < est.kappa_bar < max_kappa


def test_kappa_estimate_json_roundtrip():
    est = accountant.KappaEstimate(kappa_bar=0.0123, samples_used=600, model_dim=64)
    text = est.to_json()
    assert json.loads(text)["kappa_bar"] == 0.0123
    assert accountant.KappaEstimate.from_json(text) == est


def test_estimate_kappa_rejects_models_outside_range():
    # checkpoints beyond the representable window can never be encoded
    samples = np.full((2, 8), 10.0, dtype=np.float32)
    with pytest.raises(ValueError):
        accountant.estimate_kappa_bar(samples, 1e-4, 50, 0.5, perturb.RngHandle(1))


# ---------------------------------------------------------------------------
# budget inversion


def test_required_ber_spot_value():
    budget = accountant.PrivacyBudget(2.0, 10.0, 50)
    assert accountant.required_ber(budget, 0.02) == pytest.approx(1.0 / 11.0,
                                                                  abs=1e-15)


@given(st.floats(min_value=1.1, max_value=8.0),
       st.floats(min_value=0.05, max_value=20.0),
       st.integers(min_value=1, max_value=200),
       st.floats(min_value=1e-4, max_value=0.05))
@settings(max_examples=300)
def test_required_ber_satisfies_divergence_identity(lam, eps, rounds, kappa_bar):
    budget = accountant.PrivacyBudget(lam, eps, rounds)
    ratio = (lam - 1) * eps / (rounds * kappa_bar)
    if ratio <= 1.0:
        with pytest.raises(ValueError):
            accountant.required_ber(budget, kappa_bar)
        return
    p = accountant.required_ber(budget, kappa_bar)
    assert 0.0 < p < 0.5
    recovered = kappa_bar / (lam - 1) * ((1 - p) / p) ** (lam - 1)
    assert recovered == pytest.approx(eps / rounds, rel=1e-9)
    # the exact per-round divergence bound sits strictly inside the budget
    exact = kappa_bar / (lam - 1) * (((1 - p) / p) ** (lam - 1) - 1)
    assert exact < eps / rounds


def test_required_ber_monotone_in_budget():
    kappa_bar = 0.01
    ps = [accountant.required_ber(accountant.PrivacyBudget(2.0, eps, 10), kappa_bar)
          for eps in (0.5, 1.0, 2.0, 5.0, 20.0)]
    assert all(a > b for a, b in zip(ps, ps[1:]))  # looser budget, fewer flips


# ---------------------------------------------------------------------------
# Gaussian baseline calibration


def test_renyi_to_dp_delta_frozen_value():
    assert accountant.renyi_to_dp_delta(2.0, 1.0, 0.5) == pytest.approx(
        math.exp(0.5) * 0.25, rel=1e-14)


def test_renyi_to_dp_delta_monotone_in_slack():
    # spending more of the budget as eps' leaves a smaller failure mass
    deltas = [accountant.renyi_to_dp_delta(2.0, 1.0, e) for e in
              (0.25, 0.5, 0.75, 1.0)]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))


def test_gaussian_sigma_frozen_values():
    assert accountant.gaussian_sigma(1e-4, 10, 1e-5, 0.5) == pytest.approx(
        0.009689610525210779, rel=1e-13)
    assert accountant.gaussian_sigma(1e-4, 10, 0.25, 2.0) == pytest.approx(
        0.0008970612889970508, rel=1e-13)


def test_gaussian_sigma_rejects_large_delta():
    with pytest.raises(ValueError):
        accountant.gaussian_sigma(1e-4, 10, 1.3, 0.5)
