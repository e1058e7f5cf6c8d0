"""Closed-form noise statistics, privacy oracle, and convergence bounds.

Everything here mirrors a quantity the simulator can also measure: the mean
and variance of a bit-flipped value, the aggregate noise power of the
bit-flip and Gaussian mechanisms, a brute-force three-atom Rényi divergence
for a single fraction bit, and the convergence bound of federated averaging
under bounded perturbation noise.  Tests drive the Monte-Carlo measurements
against these formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .binfloat import FRACTION_BITS, decompose, fp_to_fx
from .perturb import RngHandle
from .validation import check_model, check_positive, check_probability, check_weights

__all__ = [
    "FlipStats",
    "AtomDistribution",
    "ConvergenceParams",
    "flipped_mean",
    "flipped_variance",
    "flip_value_samples",
    "bias_moments",
    "x_bf_bound",
    "x_gauss_bound",
    "convergence_bound",
    "noiseless_bound",
    "renyi_divergence_oracle",
    "atom_distributions",
    "per_bit_bound",
    "moment_inequality_sides",
]

_VAR_COEFF = (1.0 - 4.0**-FRACTION_BITS) / 3.0
_GEOM_SUM = 1.0 - 2.0**-FRACTION_BITS  # sum of 2^-i for i = 1..23


@dataclass(frozen=True)
class FlipStats:
    """Mean and per-element variance of a bit-flipped quantity.

    ``mean`` is a scalar for a single value, or a vector for the per-element
    aggregate error; ``variance`` is always the per-element value.
    """

    mean: Union[float, np.ndarray]
    variance: float


@dataclass(frozen=True)
class AtomDistribution:
    """Three-atom distribution over {flipped, unflipped-neighbor, other}."""

    labels: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (len(self.labels),):
            raise ValueError("labels and probs must have matching length")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("probs must be a probability vector")
        object.__setattr__(self, "probs", probs)


def flipped_mean(a, p: float) -> float:
    """Expected value after flipping each fraction bit of ``a`` at rate ``p``.

    ``(1 - 2p) a + (-1)^s 2^(E-127) (2p + p (1 - 2^-23))`` where ``s``/``E``
    are the sign and exponent fields of ``a``: each fraction bit moves to
    its flipped complement with probability ``p``, and the implicit-one and
    exponent contribute the constant term.
    """
    p = check_probability(p, "p", high=1.0, inclusive_high=True)
    parts = decompose(a)
    scale = (-1.0) ** parts.sign * 2.0 ** (parts.exponent - 127)
    return (1.0 - 2.0 * p) * float(np.float32(a)) + scale * (2.0 * p + p * _GEOM_SUM)


def flipped_variance(a, p: float) -> float:
    """Variance after flipping each fraction bit of ``a`` at rate ``p``.

    ``(1 - 4^-23) / 3 * p (1 - p) * 2^(2E - 254)``: independent bits
    contribute ``p(1-p)`` times their squared place value, and the geometric
    series of squared weights sums to ``(1 - 4^-23)/3``.  Depends on ``a``
    only through its exponent field — constant within each binade.
    """
    p = check_probability(p, "p", high=1.0, inclusive_high=True)
    parts = decompose(a)
    return _VAR_COEFF * p * (1.0 - p) * 2.0 ** (2 * parts.exponent - 254)


def flip_value_samples(a, p: float, n: int, rng) -> np.ndarray:
    """Monte-Carlo oracle: decoded values of ``a`` after fraction-bit flips.

    Flips the 23 fraction bits of the binary32 ``a`` directly (sign and
    exponent untouched) and reassembles the value, ``n`` independent times.
    """
    p = check_probability(p, "p", high=1.0, inclusive_high=True)
    n = check_positive(n, "n", integer=True)
    parts = decompose(a)
    gen = rng.generator() if isinstance(rng, RngHandle) else rng
    mask = np.zeros(n, dtype=np.uint32)
    for j in range(FRACTION_BITS):
        mask |= (gen.random(n) < p).astype(np.uint32) << np.uint32(j)
    flipped = np.uint32(parts.fraction) ^ mask
    scale = (-1.0) ** parts.sign * 2.0 ** (parts.exponent - 127)
    return scale * (1.0 + flipped.astype(np.float64) * 2.0**-FRACTION_BITS)


def bias_moments(model, p: float, nu_inf) -> FlipStats:
    """Exact moments of the per-element error ``z = decode(flip(encode(w))) - w``.

    The decoded value is affine in the fraction field, so with per-bit flip
    rate ``p`` the expectation is available in closed form from the encoded
    fractions: ``E[z] = -2 p w_q - p 2^(e-148) + (w_q - w)`` where ``w_q``
    is ``w`` rounded to the fixed-point grid — approximately ``-2 p w``.
    The per-element variance ``(1 - 4^-23)/3 * p (1 - p) * 2^(2e - 250)``
    is independent of the value.
    """
    arr = check_model(model)
    p = check_probability(p, "p", high=1.0, inclusive_high=True)
    fx = fp_to_fx(arr, nu_inf)
    e = fx.shared_exponent - 2
    fr = fx.fractions.astype(np.float64)
    # E[f~] = (1 - 2p) f + p (2^23 - 1); decode is (f - 2^22) * 2^(e-148).
    mean_fraction = (1.0 - 2.0 * p) * fr + p * float((1 << FRACTION_BITS) - 1)
    step = 2.0 ** (e - 148)
    mean = (mean_fraction - float(1 << 22)) * step - arr.astype(np.float64)
    variance = _VAR_COEFF * p * (1.0 - p) * 2.0 ** (2 * e - 250)
    return FlipStats(mean=mean, variance=variance)


def x_bf_bound(weights, flip_probs, model_dim: int, nu2: float, nu_inf) -> float:
    """Upper bound on the expected squared aggregate bit-flip error.

    ``sum_n q_n^2 p_n (1 - p_n) (1 - 4^-23) M / 3 * 2^(2e - 250)
    + sum_n q_n p_n^2 nu2^2`` — a variance term from independent per-bit
    flips plus a bias term from the flip-induced shrinkage, valid while
    upload norms stay within the recorded bound ``nu2``.
    """
    q = check_weights(weights)
    p = np.asarray(flip_probs, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("flip_probs must match weights in shape")
    for v in p:
        check_probability(float(v), "flip_probs", inclusive_high=True)
    model_dim = check_positive(model_dim, "model_dim", integer=True)
    nu2 = check_positive(nu2, "nu2")
    e = decompose(nu_inf).exponent
    variance_term = np.sum(q**2 * p * (1.0 - p)) * _VAR_COEFF * model_dim \
        * 2.0 ** (2 * e - 250)
    bias_term = np.sum(q * p**2) * nu2**2
    return float(variance_term + bias_term)


def x_gauss_bound(weights, model_dim: int, learning_rate: float, clip: float,
                  rounds: int, dataset_sizes, delta: float,
                  epsilon_prime: float) -> float:
    """Expected squared aggregate noise of the Gaussian baseline.

    ``sum_n q_n^2 M (2 eta G rounds)^2 * 2 ln(1.25/delta) /
    (|D_n|^2 epsilon'^2)`` — each client adds isotropic noise calibrated to
    its classical sensitivity with the budget split over ``rounds``.
    """
    q = check_weights(weights)
    sizes = np.asarray(dataset_sizes, dtype=np.float64)
    if sizes.shape != q.shape:
        raise ValueError("dataset_sizes must match weights in shape")
    model_dim = check_positive(model_dim, "model_dim", integer=True)
    learning_rate = check_positive(learning_rate, "learning_rate")
    clip = check_positive(clip, "clip")
    rounds = check_positive(rounds, "rounds", integer=True)
    check_positive(delta, "delta")
    check_positive(epsilon_prime, "epsilon_prime")
    sigma_sq = (2.0 * learning_rate * clip * rounds) ** 2 \
        * 2.0 * math.log(1.25 / delta) / (sizes**2 * epsilon_prime**2)
    return float(np.sum(q**2 * model_dim * sigma_sq))


@dataclass(frozen=True)
class ConvergenceParams:
    """Inputs to the convergence bound of perturbed federated averaging.

    ``mu``/``alpha`` are the strong-convexity and smoothness constants of
    the local objectives, ``gamma_het`` the heterogeneity gap
    ``F* - sum_n q_n F_n*``, ``clip`` the gradient clipping bound,
    ``p_max`` the largest per-bit flip probability used in any upload, and
    ``initial_gap`` the squared distance of the initial global model from
    the optimum.
    """

    mu: float
    alpha: float
    gamma_het: float
    eta: float
    local_epochs: int
    rounds: int
    clip: float
    p_max: float
    initial_gap: float

    def __post_init__(self):
        check_positive(self.mu, "mu")
        check_positive(self.alpha, "alpha")
        if self.gamma_het < 0:
            raise ValueError(f"gamma_het must be non-negative, got {self.gamma_het}")
        check_positive(self.eta, "eta")
        check_positive(self.local_epochs, "local_epochs", integer=True)
        check_positive(self.rounds, "rounds", integer=True)
        check_positive(self.clip, "clip")
        check_probability(self.p_max, "p_max")
        if self.initial_gap < 0:
            raise ValueError(f"initial_gap must be non-negative, got {self.initial_gap}")
        if self.mu > self.alpha:
            raise ValueError(f"mu={self.mu} cannot exceed alpha={self.alpha}")
        if self.eta * self.mu >= 1.0:
            raise ValueError(f"eta*mu must be < 1, got {self.eta * self.mu}")

    @property
    def iterations(self) -> int:
        """Total local iterations T = rounds * local_epochs."""
        return self.rounds * self.local_epochs

    @property
    def divergent(self) -> bool:
        """True when the per-round contraction factor exceeds 1.

        ``(1 + sqrt(p_max)) (1 - eta mu)^E > 1`` means perturbation growth
        outpaces the contraction of local training and the bound grows with
        the round count — training may fail to converge.
        """
        return (1.0 + math.sqrt(self.p_max)) \
            * (1.0 - self.eta * self.mu) ** self.local_epochs > 1.0


def _drift_term(params: ConvergenceParams) -> float:
    """B = 6 alpha Gamma + 8 (E - 1)^2 G^2: client-drift noise power."""
    return 6.0 * params.alpha * params.gamma_het \
        + 8.0 * (params.local_epochs - 1) ** 2 * params.clip**2


def convergence_bound(params: ConvergenceParams, x_bf: float) -> float:
    """Bound on ``E ||w_T - w*||^2`` after ``rounds`` aggregations.

    ``zeta1 * initial_gap + zeta2 * eta^2 B + zeta3 * x_bf / sqrt(p_max)``
    with ``r = (1 + sqrt(p_max)) (1 - eta mu)^E``:

    - ``zeta1 = (1 + sqrt(p_max))^K (1 - eta mu)^T``,
    - ``zeta3 = (1 + sqrt(p_max)) (1 - r^K) / (1 - r)`` (limit ``K`` at r=1),
    - ``zeta2 = zeta3 (1 - (1 - eta mu)^E) / (eta mu)``.

    ``p_max = 0`` is the noiseless limit: the perturbation term vanishes and
    the rest collapses to :func:`noiseless_bound`.
    """
    if x_bf < 0:
        raise ValueError(f"x_bf must be non-negative, got {x_bf}")
    if params.p_max == 0 and x_bf > 0:
        raise ValueError("x_bf must be 0 when p_max is 0")
    d = 1.0 - params.eta * params.mu
    e_steps = params.local_epochs
    k = params.rounds
    s = 1.0 + math.sqrt(params.p_max)
    r = s * d**e_steps
    geom = float(k) if math.isclose(r, 1.0, rel_tol=0, abs_tol=1e-12) \
        else (1.0 - r**k) / (1.0 - r)
    zeta1 = s**k * d ** (k * e_steps)
    zeta3 = s * geom
    zeta2 = zeta3 * (1.0 - d**e_steps) / (params.eta * params.mu)
    bound = zeta1 * params.initial_gap + zeta2 * params.eta**2 * _drift_term(params)
    if params.p_max > 0:
        bound += zeta3 * x_bf / math.sqrt(params.p_max)
    return bound


def noiseless_bound(params: ConvergenceParams) -> float:
    """Closed-form noiseless limit of :func:`convergence_bound`.

    ``(1 - eta mu)^T initial_gap + eta^2 B (1 - (1 - eta mu)^T) / (eta mu)``.
    """
    d = 1.0 - params.eta * params.mu
    t = params.iterations
    return d**t * params.initial_gap \
        + params.eta**2 * _drift_term(params) * (1.0 - d**t) / (params.eta * params.mu)


# --- Per-bit Rényi divergence oracle -------------------------------------

_ATOM_LABELS = ("flipped", "unflipped", "other")


def atom_distributions(j: int, q: float, p: float
                       ) -> tuple[AtomDistribution, AtomDistribution]:
    """Three-atom output laws of one fraction bit for neighbouring inputs.

    Conditioned on which transmitted word is observed, only three events
    matter for bit ``j`` with weight ``w = 2**(j - 23)``: the flipped word
    ``X_b``, the unflipped word ``X_u'``, and everything else.  For the
    neighbour input the bit differs with probability ``q``, mixing the two
    laws.  Returns ``(Q_u, Q_u')``.
    """
    if not 0 <= j < FRACTION_BITS:
        raise ValueError(f"j must be in [0, {FRACTION_BITS}), got {j}")
    q = check_probability(q, "q", high=1.0, inclusive_high=True)
    p = check_probability(p, "p")
    if p <= 0:
        raise ValueError("p must be positive for a finite divergence")
    w = 2.0 ** (j - FRACTION_BITS)
    q_prime = np.array([w * p, w * (1.0 - p), 1.0 - w])
    q_flip = np.array([w * (1.0 - p), w * p, 1.0 - w])
    q_mix = q * q_flip + (1.0 - q) * q_prime
    return (
        AtomDistribution(_ATOM_LABELS, q_mix),
        AtomDistribution(_ATOM_LABELS, q_prime),
    )


def renyi_divergence_oracle(j: int, q: float, p: float, lam: float) -> float:
    """Exact order-``lam`` Rényi divergence of the three-atom laws.

    ``D = ln(sum_a Q_u(a)^lam / Q_u'(a)^(lam-1)) / (lam - 1)`` — the
    worst-case per-bit privacy loss of fraction bit ``j`` when neighbouring
    inputs disagree on it with probability ``q``.  Zero at ``q = 0``.
    """
    if not lam > 1.0:
        raise ValueError(f"lam must be > 1, got {lam}")
    q_u, q_up = atom_distributions(j, q, p)
    total = np.sum(q_u.probs**lam / q_up.probs ** (lam - 1.0))
    return float(np.log(total) / (lam - 1.0))


def per_bit_bound(j: int, q: float, p: float, lam: float) -> float:
    """Closed-form upper bound on the per-bit Rényi divergence.

    ``q 2^(j-23) / (lam - 1) * (((1 - p)/p)**(lam - 1) - 1)``.  Summing it
    over a stream with disagreement probabilities ``q_k`` reproduces the
    accountant's relation through ``kappa_bar = sum_k q_k 2^((k%23) - 23)``.
    """
    if not 0 <= j < FRACTION_BITS:
        raise ValueError(f"j must be in [0, {FRACTION_BITS}), got {j}")
    q = check_probability(q, "q", high=1.0, inclusive_high=True)
    p = check_probability(p, "p")
    if not lam > 1.0:
        raise ValueError(f"lam must be > 1, got {lam}")
    if p <= 0:
        raise ValueError("p must be positive")
    w = 2.0 ** (j - FRACTION_BITS)
    return q * w / (lam - 1.0) * (((1.0 - p) / p) ** (lam - 1.0) - 1.0)


def moment_inequality_sides(q: float, p: float, lam: float) -> tuple[float, float]:
    """Both sides of the mixture-moment inequality behind the per-bit bound.

    lhs: ``p ((1-q) + q (1-p)/p)^lam + (1-p) ((1-q) + q p/(1-p))^lam``;
    rhs: ``(1-q) + q ((1-p)/p)^(lam-1)``.  The bound is valid because
    lhs <= rhs for all ``q in [0, 1]``, ``p in (0, 1/2]``, ``lam > 1``.
    """
    q = check_probability(q, "q", high=1.0, inclusive_high=True)
    p = check_probability(p, "p", inclusive_high=True)
    if not lam > 1.0:
        raise ValueError(f"lam must be > 1, got {lam}")
    if p <= 0:
        raise ValueError("p must be positive")
    lhs = p * ((1.0 - q) + q * (1.0 - p) / p) ** lam \
        + (1.0 - p) * ((1.0 - q) + q * p / (1.0 - p)) ** lam
    rhs = (1.0 - q) + q * ((1.0 - p) / p) ** (lam - 1.0)
    return float(lhs), float(rhs)
