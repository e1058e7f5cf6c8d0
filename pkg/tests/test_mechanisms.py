"""scikit-learn estimator layer over the flip and Gaussian mechanisms."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bitflipdp import binfloat, perturb
from bitflipdp.mechanisms import BitFlipMechanism, GaussianMechanism


def _checkpoints(seed=0, rows=6, dim=64, scale=0.05):
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, scale, (rows, dim)).astype(np.float32)


# ---------------------------------------------------------------------------
# estimator contract


def test_get_params_round_trip():
    mech = BitFlipMechanism(lam=3.0, epsilon=2.0, rounds=5, channel_ber=0.01)
    params = mech.get_params()
    assert params["lam"] == 3.0 and params["channel_ber"] == 0.01
    rebuilt = BitFlipMechanism(**params)
    assert rebuilt.get_params() == params


def test_clone_preserves_params_and_drops_state():
    mech = BitFlipMechanism(epsilon=2.0, seed=9).fit(_checkpoints())
    fresh = clone(mech)
    assert fresh.get_params() == mech.get_params()
    with pytest.raises(NotFittedError):
        fresh.transform(_checkpoints())


def test_transform_before_fit_raises():
    with pytest.raises(NotFittedError):
        BitFlipMechanism().transform(_checkpoints())
    with pytest.raises(NotFittedError):
        GaussianMechanism().transform(_checkpoints())


def test_fit_rejects_non_finite_rows():
    bad = _checkpoints()
    bad[2, 3] = np.nan
    with pytest.raises(ValueError):
        BitFlipMechanism().fit(bad)


def test_transform_checks_feature_count():
    mech = BitFlipMechanism().fit(_checkpoints(dim=64))
    with pytest.raises(ValueError):
        mech.transform(_checkpoints(dim=32))


# ---------------------------------------------------------------------------
# flip mechanism calibration


def test_fit_learns_calibration_attributes():
    mech = BitFlipMechanism(lam=2.0, epsilon=5.0, rounds=10, sensitivity=1e-4,
                            seed=3).fit(_checkpoints())
    assert mech.n_features_in_ == 64
    assert mech.kappa_bar_ > 0
    assert 0.0 < mech.flip_prob_ < 0.5
    assert binfloat.fixed_point_range(mech.nu_inf_) >= \
        float(np.abs(_checkpoints()).max())


def test_channel_credit_reduces_artificial_rate():
    X = _checkpoints()
    kwargs = dict(lam=2.0, epsilon=5.0, rounds=10, sensitivity=1e-4, seed=3)
    quiet = BitFlipMechanism(channel_ber=0.0, **kwargs).fit(X)
    noisy = BitFlipMechanism(channel_ber=quiet.flip_prob_ / 2, **kwargs).fit(X)
    assert noisy.kappa_bar_ == quiet.kappa_bar_      # same calibration draw
    assert noisy.flip_prob_ == quiet.flip_prob_      # same end-to-end target
    assert noisy.artificial_ber_ < quiet.artificial_ber_
    assert noisy.end_to_end_ber_ == pytest.approx(noisy.flip_prob_, rel=1e-12)


def test_credit_channel_false_budgets_everything_artificially():
    X = _checkpoints()
    mech = BitFlipMechanism(channel_ber=0.005, credit_channel=False,
                            epsilon=5.0, seed=3).fit(X)
    assert mech.artificial_ber_ == mech.flip_prob_
    # the composed rate then overshoots the end-to-end target
    assert mech.end_to_end_ber_ > mech.flip_prob_


def test_explicit_nu_inf_is_honored():
    mech = BitFlipMechanism(nu_inf=0.5, epsilon=5.0).fit(_checkpoints())
    assert mech.nu_inf_ == 0.5


def test_transform_deterministic_and_idempotent_per_instance():
    X = _checkpoints(seed=1)
    mech = BitFlipMechanism(epsilon=5.0, seed=7).fit(X)
    a = mech.transform(X)
    b = mech.transform(X)
    assert np.array_equal(a, b)
    other = BitFlipMechanism(epsilon=5.0, seed=7).fit(X)
    assert np.array_equal(a, other.transform(X))
    assert not np.array_equal(a, BitFlipMechanism(epsilon=5.0, seed=8)
                              .fit(X).transform(X))


def test_transform_rows_use_distinct_substreams():
    X = np.tile(_checkpoints(seed=2, rows=1), (3, 1))
    out = BitFlipMechanism(epsilon=5.0, seed=4).fit(X).transform(X)
    assert not np.array_equal(out[0], out[1])
    assert not np.array_equal(out[1], out[2])


def test_transform_output_within_representable_range():
    X = _checkpoints(seed=5)
    mech = BitFlipMechanism(epsilon=1.0, rounds=2, seed=2).fit(X)
    out = mech.transform(X)
    assert out.shape == X.shape
    assert np.all(np.abs(out) <= binfloat.fixed_point_range(mech.nu_inf_))


def test_zero_flip_limit_recovers_quantized_input():
    X = _checkpoints(seed=6)
    mech = BitFlipMechanism(nu_inf=0.5, epsilon=5.0, seed=1).fit(X)
    # force no flips at all: transport becomes quantize/dequantize
    mech.artificial_ber_ = 0.0
    mech.channel_ber = 0.0
    out = mech.transform(X)
    assert float(np.abs(out - X).max()) <= binfloat.grid_step(0.5)


# ---------------------------------------------------------------------------
# Gaussian baseline


def test_gaussian_fit_calibrates_sigma():
    mech = GaussianMechanism(lam=2.0, epsilon=1.0, rounds=10,
                             sensitivity=1e-4).fit(_checkpoints())
    assert mech.sigma_ > 0
    assert 0.0 < mech.delta_ < 1.0
    assert mech.n_features_in_ == 64


def test_gaussian_transform_is_additive_noise():
    X = _checkpoints(seed=8)
    mech = GaussianMechanism(epsilon=1.0, seed=11).fit(X)
    out = mech.transform(X)
    assert np.array_equal(out, mech.transform(X))
    noise = (out - X).ravel().astype(np.float64)
    # empirical scale within 10% of the calibrated sigma
    assert np.std(noise) == pytest.approx(mech.sigma_, rel=0.1)


def test_gaussian_epsilon_prime_defaults_to_epsilon():
    X = _checkpoints()
    a = GaussianMechanism(epsilon=2.0).fit(X)
    b = GaussianMechanism(epsilon=2.0, epsilon_prime=2.0).fit(X)
    assert a.sigma_ == b.sigma_ and a.delta_ == b.delta_
