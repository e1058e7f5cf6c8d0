"""Privacy accounting for the bit-flip mechanism.

The mechanism's Rényi divergence between neighbouring uploads is controlled
by the bit-level distance of their fixed-point encodings.  The accountant
estimates the mean bit-level sensitivity ``kappa_bar`` by probing real model
checkpoints with perturbations of classical sensitivity length, then inverts
the per-round Rényi budget into the single knob of the mechanism: the
end-to-end bit-flip probability.  Conversions to classical (epsilon, delta)
targets calibrate the Gaussian baseline from the same budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .binfloat import FRACTION_BITS, fixed_point_range, fraction_fields
from .perturb import RngHandle
from .validation import check_bitstream, check_model_matrix, check_positive

__all__ = [
    "PrivacyBudget",
    "KappaEstimate",
    "classical_sensitivity",
    "bit_distance",
    "fraction_distance",
    "estimate_kappa_bar",
    "required_ber",
    "renyi_to_dp_delta",
    "gaussian_sigma",
]

_BIT_WEIGHTS = 2.0 ** (np.arange(FRACTION_BITS) - FRACTION_BITS)
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class PrivacyBudget:
    """Rényi privacy budget: order ``lam`` > 1, total ``epsilon`` spent over
    ``rounds`` aggregation rounds (each round receives ``epsilon / rounds``)."""

    lam: float
    epsilon: float
    rounds: int

    def __post_init__(self):
        check_positive(self.epsilon, "epsilon")
        check_positive(self.rounds, "rounds", integer=True)
        if not (isinstance(self.lam, (int, float)) and math.isfinite(self.lam)
                and self.lam > 1.0):
            raise ValueError(f"lam must be a finite number > 1, got {self.lam!r}")

    @property
    def per_round_epsilon(self) -> float:
        return self.epsilon / self.rounds


@dataclass(frozen=True)
class KappaEstimate:
    """Monte-Carlo estimate of the mean bit-level sensitivity ``kappa_bar``."""

    kappa_bar: float
    samples_used: int
    model_dim: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "kappa_bar": self.kappa_bar,
                "samples_used": self.samples_used,
                "model_dim": self.model_dim,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "KappaEstimate":
        d = json.loads(text)
        return cls(float(d["kappa_bar"]), int(d["samples_used"]), int(d["model_dim"]))


def classical_sensitivity(learning_rate: float, clip: float, dataset_size: int) -> float:
    """Worst-case L2 model change from swapping one sample: ``2*eta*G/|D|``.

    Holds for one local update of gradient descent with per-sample gradients
    clipped to norm ``clip``.
    """
    learning_rate = check_positive(learning_rate, "learning_rate")
    clip = check_positive(clip, "clip")
    dataset_size = check_positive(dataset_size, "dataset_size", integer=True)
    return 2.0 * learning_rate * clip / dataset_size


def bit_distance(u, v) -> float:
    """Weighted Hamming distance between two equal-length bitstreams.

    Stream bit ``k`` carries weight ``2**((k % 23) - 23)`` — the magnitude
    its flip induces on the decoded element, in units of ``2**(e - 125)``.
    Bounded by ``M * (1 - 2**-23)``.
    """
    ub = check_bitstream(u, "u")
    vb = check_bitstream(v, "v")
    if ub.size != vb.size:
        raise ValueError(f"bitstreams differ in length: {ub.size} vs {vb.size}")
    weights = _BIT_WEIGHTS[np.arange(ub.size) % FRACTION_BITS]
    return float(np.sum(weights * (ub != vb)))


def fraction_distance(f_u, f_v) -> float:
    """:func:`bit_distance` computed directly on 23-bit fraction fields.

    Equal to ``bit_distance(encode(u), encode(v))`` but without
    materializing bitstreams.
    """
    fu = np.asarray(f_u, dtype=np.uint32)
    fv = np.asarray(f_v, dtype=np.uint32)
    if fu.shape != fv.shape:
        raise ValueError(f"fraction arrays differ in shape: {fu.shape} vs {fv.shape}")
    return float(_weighted_bit_diff(fu ^ fv).sum())


def _weighted_bit_diff(xor: np.ndarray) -> np.ndarray:
    """Per-element weighted popcount of XORed fraction fields."""
    acc = np.zeros(xor.shape, dtype=np.float64)
    for j in range(FRACTION_BITS):
        acc += ((xor >> np.uint32(j)) & np.uint32(1)) * _BIT_WEIGHTS[j]
    return acc


def estimate_kappa_bar(model_samples, sensitivity: float, num_perturbations: int,
                       nu_inf, rng: RngHandle) -> KappaEstimate:
    """Estimate mean bit-level sensitivity over model checkpoints.

    For each checkpoint ``w`` and each draw ``x`` uniform on the sphere
    ``||x||_2 = sensitivity``, computes the bit distance between the
    encodings of ``w`` and ``w + x`` and returns the mean over all pairs.
    Pairs that leave the representable range are re-drawn (up to 100
    rounds), then projected onto the range as a last resort.

    Deterministic given (samples, stream id).
    """
    samples = check_model_matrix(model_samples)
    sensitivity = check_positive(sensitivity, "sensitivity")
    num_perturbations = check_positive(num_perturbations, "num_perturbations",
                                       integer=True)
    limit = fixed_point_range(nu_inf)
    if np.any(np.abs(samples) > limit):
        raise ValueError("model samples exceed the representable range for nu_inf")
    gen = rng.generator() if isinstance(rng, RngHandle) else rng
    n_checkpoints, dim = samples.shape

    total = 0.0
    for w in samples:
        base = fraction_fields(w, nu_inf).astype(np.uint32)
        w64 = w.astype(np.float64)
        x = _sphere_draws(gen, num_perturbations, dim, sensitivity)
        perturbed = w64[None, :] + x
        bad = np.any(np.abs(perturbed) > limit, axis=1)
        for _ in range(_MAX_REDRAWS):
            if not bad.any():
                break
            x_new = _sphere_draws(gen, int(bad.sum()), dim, sensitivity)
            perturbed[bad] = w64[None, :] + x_new
            bad = np.any(np.abs(perturbed) > limit, axis=1)
        if bad.any():
            perturbed = np.clip(perturbed, -limit, limit)
        flat = fraction_fields(
            np.float32(perturbed).ravel(), nu_inf
        ).reshape(num_perturbations, dim)
        total += _weighted_bit_diff(flat ^ base[None, :]).sum()

    pairs = n_checkpoints * num_perturbations
    return KappaEstimate(total / pairs, pairs, dim)


def _sphere_draws(gen: np.random.Generator, n: int, dim: int, radius: float
                  ) -> np.ndarray:
    """Uniform draws on the L2 sphere of the given radius (float64)."""
    g = gen.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # A zero draw has probability zero; re-normalize defensively anyway.
    norms[norms == 0] = 1.0
    return g * (radius / norms)


def required_ber(budget: PrivacyBudget, kappa_bar: float) -> float:
    """End-to-end flip probability that funds the per-round Rényi budget.

    ``p = 1 / (1 + ((lam - 1) * eps / (rounds * kappa_bar))**(1 / (lam - 1)))``
    — the flip probability at which the per-round divergence bound
    ``kappa_bar / (lam - 1) * ((1 - p) / p)**(lam - 1)`` equals
    ``epsilon / rounds``.  Lower ``p`` spends more than the budget allows.

    Raises ``ValueError`` when the budget is so tight that it would demand
    ``p >= 1/2`` (flips would carry no information at all).
    """
    kappa_bar = check_positive(kappa_bar, "kappa_bar")
    ratio = (budget.lam - 1.0) * budget.epsilon / (budget.rounds * kappa_bar)
    p = 1.0 / (1.0 + ratio ** (1.0 / (budget.lam - 1.0)))
    if p >= 0.5:
        raise ValueError(
            f"budget (lam={budget.lam}, eps={budget.epsilon}, rounds={budget.rounds}) "
            f"with kappa_bar={kappa_bar} demands flip probability {p} >= 1/2"
        )
    return p


def renyi_to_dp_delta(lam: float, epsilon: float, epsilon_prime: float) -> float:
    """``delta`` such that (lam, epsilon)-Rényi DP implies
    (epsilon_prime, delta)-DP:
    ``exp((lam - 1) * (epsilon - epsilon_prime)) / (lam - 1) * (1 - 1/lam)**lam``.
    """
    if not lam > 1.0:
        raise ValueError(f"lam must be > 1, got {lam}")
    check_positive(epsilon, "epsilon")
    check_positive(epsilon_prime, "epsilon_prime")
    return (
        math.exp((lam - 1.0) * (epsilon - epsilon_prime))
        / (lam - 1.0)
        * (1.0 - 1.0 / lam) ** lam
    )


def gaussian_sigma(sensitivity: float, rounds: int, delta: float,
                   epsilon_prime: float) -> float:
    """Per-round Gaussian noise scale for the baseline mechanism.

    ``sigma = sensitivity * rounds * sqrt(2 * ln(1.25 / delta)) / epsilon_prime``
    — the classical Gaussian-mechanism calibration with the budget split
    evenly across rounds (composition absorbed as the factor ``rounds``).
    """
    sensitivity = check_positive(sensitivity, "sensitivity")
    rounds = check_positive(rounds, "rounds", integer=True)
    check_positive(delta, "delta")
    epsilon_prime = check_positive(epsilon_prime, "epsilon_prime")
    if delta >= 1.25:
        raise ValueError(f"delta must be < 1.25 for this calibration, got {delta}")
    return sensitivity * rounds * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon_prime
