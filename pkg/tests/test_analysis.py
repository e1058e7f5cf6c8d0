"""Closed-form flip moments, noise-power bounds, convergence bound."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitflipdp import analysis, binfloat, perturb


# ---------------------------------------------------------------------------
# single-value flip moments


def test_flipped_mean_frozen_value():
    # a = 2.5 has exponent field 128; p = 0.1
    assert analysis.flipped_mean(2.5, 0.1) == pytest.approx(
        2.5999999761581423, rel=1e-15)


def test_flipped_mean_respects_sign():
    pos = analysis.flipped_mean(2.5, 0.1)
    neg = analysis.flipped_mean(-2.5, 0.1)
    assert neg == pytest.approx(-pos, rel=1e-15)


def test_flipped_variance_frozen_value():
    assert analysis.flipped_variance(2.5, 0.1) == pytest.approx(
        0.1199999999999983, rel=1e-14)


def test_flipped_variance_depends_only_on_binade():
    # constant across each same-exponent range, quadrupling per binade
    v_a = analysis.flipped_variance(2.1, 0.2)
    v_b = analysis.flipped_variance(3.9, 0.2)
    v_c = analysis.flipped_variance(4.1, 0.2)
    assert v_a == v_b
    assert v_c == pytest.approx(4 * v_a, rel=1e-14)


def test_flipped_mean_linear_within_binade():
    # three points in [4, 8): equal spacing must give equal increments
    a, b, c = (analysis.flipped_mean(x, 0.3) for x in (4.5, 5.5, 6.5))
    assert (b - a) == pytest.approx(c - b, rel=1e-12)


def test_unflipped_moments_are_exact():
    assert analysis.flipped_mean(1.75, 0.0) == 1.75
    assert analysis.flipped_variance(1.75, 0.0) == 0.0


def test_flip_value_samples_deterministic():
    h = perturb.RngHandle(3, stage=perturb.STAGE_ARTIFICIAL_FLIP)
    a = analysis.flip_value_samples(2.5, 0.1, 100, h)
    b = analysis.flip_value_samples(2.5, 0.1, 100, h)
    assert np.array_equal(a, b)
    assert a.shape == (100,)


def test_flip_value_samples_hit_the_closed_form():
    h = perturb.RngHandle(7)
    n = 200_000
    samples = analysis.flip_value_samples(1.75, 0.3, n, h)
    mean = analysis.flipped_mean(1.75, 0.3)
    var = analysis.flipped_variance(1.75, 0.3)
    assert abs(float(samples.mean()) - mean) <= 4 * math.sqrt(var / n)


# ---------------------------------------------------------------------------
# vector bias moments


def test_bias_moments_zero_rate_is_quantization_error():
    model = np.float32([0.3, -0.2, 0.01])
    stats = analysis.bias_moments(model, 0.0, 0.5)
    assert stats.variance == 0.0
    assert np.abs(stats.mean).max() <= 0.5 * binfloat.grid_step(0.5)


def test_bias_moments_match_simulated_flips():
    model = np.float32([0.25, -0.125])
    p = 0.2
    stats = analysis.bias_moments(model, p, 0.5)
    reps = 40_000
    errs = np.empty((reps, model.size))
    fx = binfloat.fp_to_fx(model, 0.5)
    for r in range(reps):
        h = perturb.RngHandle(100 + r, stage=perturb.STAGE_ARTIFICIAL_FLIP)
        flipped = perturb.flip_fractions(fx.fractions, p, h)
        out = binfloat.recover_from_fractions(flipped, fx.shared_exponent)
        errs[r] = out.astype(np.float64) - model.astype(np.float64)
    se = np.sqrt(stats.variance / reps)
    assert np.all(np.abs(errs.mean(axis=0) - stats.mean) <= 4 * se)
    assert errs.var(axis=0).mean() == pytest.approx(stats.variance, rel=0.05)


# ---------------------------------------------------------------------------
# aggregate noise-power bounds


def test_x_bf_bound_frozen_value():
    got = analysis.x_bf_bound(weights=[1.0], flip_probs=[0.1], model_dim=1,
                              nu2=1.0, nu_inf=0.5)
    assert got == pytest.approx(0.1299999999999983, rel=1e-14)


def test_x_bf_bound_scaling():
    base = analysis.x_bf_bound([1.0], [0.1], 64, 1.0, 0.5)
    wider = analysis.x_bf_bound([1.0], [0.1], 128, 1.0, 0.5)
    assert wider > base  # more coordinates, more variance
    hotter = analysis.x_bf_bound([1.0], [0.2], 64, 1.0, 0.5)
    assert hotter > base


def test_x_bf_bound_requires_matching_lengths():
    with pytest.raises(ValueError):
        analysis.x_bf_bound([0.5, 0.5], [0.1], 64, 1.0, 0.5)


def test_x_gauss_bound_frozen_value():
    got = analysis.x_gauss_bound(weights=[1.0], model_dim=1, learning_rate=0.1,
                                 clip=1.0, rounds=10, dataset_sizes=[2000],
                                 delta=1e-5, epsilon_prime=0.5)
    assert got == pytest.approx(9.38885521302755e-05, rel=1e-13)


# ---------------------------------------------------------------------------
# convergence bound


def _params(**overrides):
    defaults = dict(mu=0.5, alpha=1.2, gamma_het=0.01, eta=0.1,
                    local_epochs=5, rounds=10, clip=2.0, p_max=0.01,
                    initial_gap=0.3)
    defaults.update(overrides)
    return analysis.ConvergenceParams(**defaults)


def test_params_validation():
    with pytest.raises(ValueError):
        _params(mu=2.0, alpha=1.0)   # smoothness below strong convexity
    with pytest.raises(ValueError):
        _params(eta=3.0)             # eta * mu >= 1 cannot contract
    with pytest.raises(ValueError):
        _params(p_max=0.6)


def test_iterations_and_divergence_flag():
    assert _params(rounds=7, local_epochs=4).iterations == 28
    # r = (1 + sqrt(p)) * (1 - eta*mu)^E
    assert not _params(p_max=0.01).divergent        # r = 1.1 * 0.95^5 < 1
    assert _params(p_max=0.25).divergent            # r = 1.5 * 0.95^5 > 1


def test_noiseless_closed_form_matches_zero_flip_limit():
    params = _params(p_max=0.0)
    bound = analysis.convergence_bound(params, 0.0)
    closed = analysis.noiseless_bound(params)
    assert bound == pytest.approx(closed, rel=1e-12)


def test_noiseless_bound_decays_to_drift_floor():
    drift = 6 * 1.2 * 0.01 + 8 * (5 - 1) ** 2 * 2.0**2
    floor = 0.1**2 * drift * (1 - 0.0) / (0.1 * 0.5)  # eta^2 B / (eta mu)
    long_run = analysis.noiseless_bound(_params(p_max=0.0, rounds=4000))
    assert long_run == pytest.approx(floor, rel=1e-6)


def test_convergence_bound_monotone_in_noise():
    params = _params()
    assert analysis.convergence_bound(params, 0.02) > \
        analysis.convergence_bound(params, 0.01)


def test_convergence_bound_unit_ratio_branch():
    # choose p_max so the per-round factor r is exactly 1: the geometric sum
    # degenerates to the round count and must stay finite
    eta, mu, epochs = 0.1, 0.5, 5
    p_unit = (1.0 / (1 - eta * mu) ** epochs - 1.0) ** 2
    params = _params(p_max=p_unit)
    bound = analysis.convergence_bound(params, 0.01)
    assert math.isfinite(bound) and bound > 0


def test_zero_flip_probability_forbids_flip_noise():
    params = _params(p_max=0.0)
    with pytest.raises(ValueError):
        analysis.convergence_bound(params, 0.01)


# ---------------------------------------------------------------------------
# per-bit privacy oracle


def test_atom_distributions_are_probabilities():
    q_u, q_u_prime = analysis.atom_distributions(20, 0.7, 0.1)
    for dist in (q_u, q_u_prime):
        assert np.all(np.asarray(dist.probs) > 0)
        assert np.sum(dist.probs) == pytest.approx(1.0, abs=1e-12)


def test_oracle_worked_example():
    # j = 22, q = 1, p = 0.1, lam = 2: the divergence sum reduces to 41/9
    got = analysis.renyi_divergence_oracle(22, 1.0, 0.1, 2.0)
    assert got == pytest.approx(math.log(41.0 / 9.0), rel=1e-12)


def test_per_bit_bound_frozen_value():
    # q * 2^(j-23) / (lam-1) * (((1-p)/p)^(lam-1) - 1) at j=22, q=.5, p=.1
    assert analysis.per_bit_bound(22, 0.5, 0.1, 2.0) == pytest.approx(2.0,
                                                                      rel=1e-14)


@given(st.integers(min_value=0, max_value=22),
       st.floats(min_value=0.05, max_value=1.0),
       st.floats(min_value=0.02, max_value=0.45),
       st.sampled_from([1.5, 2.0, 3.0, 5.0]))
@settings(max_examples=300)
def test_oracle_never_exceeds_bound(j, q, p, lam):
    oracle = analysis.renyi_divergence_oracle(j, q, p, lam)
    bound = analysis.per_bit_bound(j, q, p, lam)
    assert oracle <= bound + 1e-12
    lhs, rhs = analysis.moment_inequality_sides(q, p, lam)
    assert lhs <= rhs + 1e-12


def test_oracle_vanishes_at_half():
    # p = 1/2 makes flipped and unflipped outputs indistinguishable
    assert analysis.renyi_divergence_oracle(10, 0.8, 0.4999999, 2.0) < 1e-5
