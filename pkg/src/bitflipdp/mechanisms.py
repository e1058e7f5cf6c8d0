"""Privacy mechanisms with a scikit-learn estimator interface.

``fit`` calibrates a mechanism from pre-training model checkpoints (rows of
``X``): it records the value-range bound, estimates the bit-level
sensitivity, and solves the privacy budget for the mechanism's noise knob.
``transform`` then perturbs model uploads row by row.  Row ``i`` always uses
random substream ``i`` of the configured seed, so transforming the same
array twice gives identical output and rows can be processed in any order.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import accountant, perturb
from .binfloat import decompose, fixed_point_range
from .validation import check_probability

__all__ = ["BitFlipMechanism", "GaussianMechanism"]


def _checkpoint_array(X) -> np.ndarray:
    X = check_array(X, dtype=np.float32, ensure_2d=True,
                    ensure_all_finite=True, ensure_min_features=1)
    return X


def _promote_nu_inf(X: np.ndarray) -> float:
    """Smallest binary32 upper bound on |X| elements (normalized)."""
    peak = float(np.max(np.abs(X)))
    if peak == 0.0:
        raise ValueError("cannot infer nu_inf from an all-zero checkpoint set")
    nu = np.float32(peak)
    while float(nu) < peak:
        nu = np.nextafter(nu, np.float32(np.inf))
    return float(nu)


class BitFlipMechanism(TransformerMixin, BaseEstimator):
    """Differentially private model transport via fraction-bit flipping.

    Uploads are converted to a shared-exponent fixed-point form and each of
    the 23 fraction bits per element is flipped independently.  ``fit``
    estimates the mean bit-level sensitivity ``kappa_bar_`` from checkpoint
    rows and solves the (lam, epsilon)-Rényi budget, split over ``rounds``,
    for the end-to-end flip probability ``flip_prob_``.  When
    ``credit_channel`` is true the known channel BER counts toward that
    target and only the remainder ``artificial_ber_`` is added at the
    transmitter; otherwise the full target is added artificially and the
    channel flips on top (the channel-agnostic baseline).

    Parameters
    ----------
    lam, epsilon, rounds : Rényi privacy budget (order, total epsilon,
        number of uploads it is split across).
    sensitivity : L2 length of the model perturbations used to probe
        bit-level sensitivity (classical sensitivity of one local update).
    channel_ber : bit-error rate of the transport channel.
    credit_channel : count the channel BER toward the privacy target.
    nu_inf : value-range bound; inferred from the checkpoints when None.
    kappa_draws : Monte-Carlo draws per checkpoint for the sensitivity
        estimate.
    seed : base seed of the deterministic random streams.
    """

    def __init__(self, lam: float = 2.0, epsilon: float = 1.0, rounds: int = 10,
                 sensitivity: float = 1e-4, channel_ber: float = 0.0,
                 credit_channel: bool = True, nu_inf=None,
                 kappa_draws: int = 1000, seed: int = 0):
        self.lam = lam
        self.epsilon = epsilon
        self.rounds = rounds
        self.sensitivity = sensitivity
        self.channel_ber = channel_ber
        self.credit_channel = credit_channel
        self.nu_inf = nu_inf
        self.kappa_draws = kappa_draws
        self.seed = seed

    def fit(self, X, y=None):
        """Calibrate from checkpoint rows: nu_inf_, kappa_bar_, flip rates."""
        X = _checkpoint_array(X)
        check_probability(self.channel_ber, "channel_ber")
        self.nu_inf_ = float(self.nu_inf) if self.nu_inf is not None \
            else _promote_nu_inf(X)
        decompose(self.nu_inf_)  # must be a normalized binary32 value
        budget = accountant.PrivacyBudget(self.lam, self.epsilon, self.rounds)
        handle = perturb.RngHandle(self.seed, stage=perturb.STAGE_KAPPA_DRAW)
        estimate = accountant.estimate_kappa_bar(
            X, self.sensitivity, self.kappa_draws, self.nu_inf_, handle)
        self.kappa_bar_ = estimate.kappa_bar
        self.flip_prob_ = accountant.required_ber(budget, self.kappa_bar_)
        if self.credit_channel:
            self.artificial_ber_ = perturb.artificial_ber(
                self.flip_prob_, self.channel_ber)
        else:
            self.artificial_ber_ = self.flip_prob_
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        """Perturb each row through encode -> flip -> channel -> decode.

        Rows are clipped into the representable range first (transport
        requires it); row ``i`` uses random substream ``i``.
        """
        check_is_fitted(self, "flip_prob_")
        X = _checkpoint_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        limit = fixed_point_range(self.nu_inf_)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            clipped = np.clip(row, -limit, limit)
            handle = perturb.RngHandle(self.seed, client=i)
            out[i] = perturb.perturb_model(
                clipped, self.artificial_ber_, self.channel_ber,
                self.nu_inf_, handle)
        return out

    @property
    def end_to_end_ber_(self) -> float:
        """Composed flip rate actually experienced by each bit."""
        check_is_fitted(self, "flip_prob_")
        return perturb.compose_ber(self.artificial_ber_, self.channel_ber)


class GaussianMechanism(TransformerMixin, BaseEstimator):
    """Classical Gaussian baseline calibrated from the same Rényi budget.

    The (lam, epsilon) budget is converted to an (epsilon_prime, delta_)
    guarantee and the per-round noise scale ``sigma_`` follows the standard
    Gaussian-mechanism calibration for ``sensitivity``, with the budget
    split over ``rounds``.  ``transform`` adds isotropic noise per row
    (row ``i`` uses substream ``i``).

    ``epsilon_prime`` defaults to ``epsilon``.
    """

    def __init__(self, lam: float = 2.0, epsilon: float = 1.0, rounds: int = 10,
                 sensitivity: float = 1e-4, epsilon_prime=None, seed: int = 0):
        self.lam = lam
        self.epsilon = epsilon
        self.rounds = rounds
        self.sensitivity = sensitivity
        self.epsilon_prime = epsilon_prime
        self.seed = seed

    def fit(self, X, y=None):
        X = _checkpoint_array(X)
        eps_prime = self.epsilon if self.epsilon_prime is None else self.epsilon_prime
        self.delta_ = accountant.renyi_to_dp_delta(self.lam, self.epsilon, eps_prime)
        self.sigma_ = accountant.gaussian_sigma(
            self.sensitivity, self.rounds, self.delta_, eps_prime)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "sigma_")
        X = _checkpoint_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = np.empty_like(X)
        for i, row in enumerate(X):
            handle = perturb.RngHandle(
                self.seed, client=i, stage=perturb.STAGE_GAUSSIAN_NOISE)
            noise = handle.generator().standard_normal(row.size) * self.sigma_
            out[i] = row + noise.astype(np.float32)
        return out
